import io

import numpy as np
import pytest

from branchgap.errors import ConfigError, ValidationError
from branchgap.features import (
    FeatureRecord,
    RandomSpec,
    attn_matrix,
    dist_from_attention,
    dist_from_hidden,
    matrix_reverse,
    random_attention,
    random_hidden,
    random_scoreseq,
    read_feature_records,
    write_feature_records,
)
from branchgap.seeding import derive_seed


class TestRandomSpec:
    def test_bounds_validated(self):
        with pytest.raises(ConfigError):
            RandomSpec(low=1.0, high=1.0)
        with pytest.raises(ConfigError):
            RandomSpec(replicates=0)

    def test_with_seed(self):
        spec = RandomSpec(seed=1).with_seed(99)
        assert spec.seed == 99 and spec.low == -1.0


class TestRandomDraws:
    def test_scoreseq_shape_and_determinism(self):
        spec = RandomSpec(seed=3)
        a = random_scoreseq(4, spec)
        b = random_scoreseq(4, spec)
        assert a.shape == (3,)
        assert np.array_equal(a, b)

    def test_scoreseq_single_word_is_empty(self):
        assert random_scoreseq(1, RandomSpec(seed=0)).shape == (0,)

    def test_scoreseq_mean_near_zero(self):
        scores = random_scoreseq(100_001, RandomSpec(seed=11))
        assert scores.shape == (100_000,)
        assert abs(scores.mean()) < 0.02

    def test_hidden_shape_and_determinism(self):
        spec = RandomSpec(seed=4)
        h = random_hidden(2, 3, spec)
        assert h.shape == (2, 3)
        assert np.array_equal(h, random_hidden(2, 3, spec))
        assert random_hidden(1, 5, spec).shape == (1, 5)

    def test_hidden_mean_near_zero(self):
        h = random_hidden(400, 256, RandomSpec(seed=5))
        assert abs(h.mean()) < 0.02

    def test_attention_single_word(self):
        for kind in ("full", "prefix"):
            assert np.array_equal(random_attention(1, kind, RandomSpec(seed=0)), [[1.0]])

    def test_prefix_attention_mask_and_row_sums(self):
        a = random_attention(3, "prefix", RandomSpec(seed=6))
        assert np.all(a[np.triu_indices(3, k=1)] == 0.0)
        assert np.allclose(a.sum(axis=1), 1.0, atol=1e-6)

    def test_full_attention_row_sums(self):
        a = random_attention(5, "full", RandomSpec(seed=7))
        assert np.all(a > 0)
        assert np.allclose(a.sum(axis=1), 1.0, atol=1e-6)

    def test_softmax_stable_for_large_logits(self):
        a = random_attention(4, "full", RandomSpec(low=1000.0, high=1001.0, seed=8))
        assert np.isfinite(a).all()
        assert np.allclose(a.sum(axis=1), 1.0, atol=1e-6)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            random_attention(3, "sideways", RandomSpec(seed=0))

    def test_derive_seed_is_stable_and_tag_sensitive(self):
        assert derive_seed(1, "L", "s0") == derive_seed(1, "L", "s0")
        assert derive_seed(1, "L", "s0") != derive_seed(1, "Lprime", "s0")
        assert derive_seed(1, "L", "s0") != derive_seed(2, "L", "s0")


class TestDistFromHidden:
    def test_identical_rows_give_zero(self):
        h = np.ones((3, 4))
        assert np.array_equal(dist_from_hidden(h, "l2"), [0.0, 0.0])
        assert np.allclose(dist_from_hidden(h, "cosine"), [0.0, 0.0], atol=1e-12)

    def test_orthonormal_rows(self):
        h = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert dist_from_hidden(h, "l2") == pytest.approx([np.sqrt(2)])
        assert dist_from_hidden(h, "cosine") == pytest.approx([1.0])

    def test_single_row_empty_output(self):
        assert dist_from_hidden(np.ones((1, 4)), "l2").shape == (0,)

    def test_zero_norm_row_error_names_row(self):
        h = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
        with pytest.raises(ValidationError, match="row 1"):
            dist_from_hidden(h, "cosine")

    def test_symmetry(self):
        rng = np.random.Generator(np.random.PCG64(1))
        h = rng.normal(size=(2, 8))
        flipped = h[::-1]
        for metric in ("l2", "cosine"):
            assert dist_from_hidden(h, metric)[0] == pytest.approx(
                dist_from_hidden(flipped, metric)[0]
            )

    def test_unknown_metric(self):
        with pytest.raises(ConfigError):
            dist_from_hidden(np.ones((2, 2)), "manhattan")


class TestDistFromAttention:
    def test_identical_rows_zero(self):
        a = np.full((2, 2), 0.5)
        assert np.array_equal(dist_from_attention(a, "jsd"), [0.0])
        assert np.array_equal(dist_from_attention(a, "l2"), [0.0])

    def test_disjoint_point_masses_jsd_is_one(self):
        a = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert dist_from_attention(a, "jsd") == pytest.approx([1.0])

    def test_prefix_rows_jsd_hand_value(self):
        a = np.array([[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.2, 0.3, 0.5]])
        scores = dist_from_attention(a, "jsd")
        assert scores[0] == pytest.approx(0.3113, abs=1e-3)

    def test_jsd_bounded(self):
        a = random_attention(8, "full", RandomSpec(seed=12))
        scores = dist_from_attention(a, "jsd")
        assert np.all(scores >= 0) and np.all(scores <= 1)

    def test_non_normalized_row_rejected(self):
        a = np.array([[0.9, 0.0], [0.0, 1.0]])
        with pytest.raises(ValidationError, match="row 0"):
            dist_from_attention(a, "jsd")

    def test_reverse_law_for_full_attention(self):
        rng = np.random.Generator(np.random.PCG64(13))
        for _ in range(25):
            n = int(rng.integers(2, 10))
            a = random_attention(n, "full", RandomSpec(seed=int(rng.integers(2**32))))
            forward = dist_from_attention(a, "jsd")
            reversed_scores = dist_from_attention(matrix_reverse(a), "jsd")
            assert np.allclose(reversed_scores, forward[::-1], atol=1e-12)

    def test_matrix_reverse(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(matrix_reverse(a), [[4.0, 3.0], [2.0, 1.0]])


class TestAttnMatrixSelection:
    def record(self):
        return FeatureRecord(
            sent_id="s0",
            tokens=("a", "b"),
            attention={
                "0.0": np.array([[1.0, 0.0], [0.0, 1.0]]),
                "0.1": np.array([[0.0, 1.0], [1.0, 0.0]]),
                "1.0": np.array([[0.5, 0.5], [0.5, 0.5]]),
            },
        )

    def test_single_returns_verbatim(self):
        rec = self.record()
        assert np.array_equal(attn_matrix(rec, 0, 1), rec.attention["0.1"])

    def test_head_mean(self):
        rec = self.record()
        assert np.array_equal(
            attn_matrix(rec, 0, merge="head-mean"), np.full((2, 2), 0.5)
        )

    def test_head_mean_of_identical_heads_is_identity(self):
        rec = FeatureRecord(
            sent_id="s0", tokens=("a", "b"),
            attention={"0.0": np.eye(2), "0.1": np.eye(2)},
        )
        assert np.array_equal(attn_matrix(rec, 0, merge="head-mean"), np.eye(2))

    def test_layer_head_mean(self):
        rec = self.record()
        expected = (rec.attention["0.0"] + rec.attention["0.1"] + rec.attention["1.0"]) / 3
        assert np.allclose(attn_matrix(rec, merge="layer-head-mean"), expected)

    def test_missing_key_lists_available(self):
        with pytest.raises(ValidationError, match="0.0"):
            attn_matrix(self.record(), 9, 9)

    def test_unknown_merge(self):
        with pytest.raises(ConfigError):
            attn_matrix(self.record(), 0, 0, merge="median")


def make_record(n=3, kind="full", seed=0):
    return FeatureRecord(
        sent_id="s0",
        tokens=tuple(f"w{i}" for i in range(n)),
        hidden={"0": random_hidden(n, 4, RandomSpec(seed=seed)),
                "1": random_hidden(n, 4, RandomSpec(seed=seed + 1))},
        attention={"0.0": random_attention(n, kind, RandomSpec(seed=seed + 2))},
        attention_kind=kind,
    )


class TestFeatureRecordIO:
    def test_round_trip(self):
        records = [make_record(3, "full", 1), make_record(5, "prefix", 2)]
        buffer = io.StringIO()
        write_feature_records(records, buffer)
        buffer.seek(0)
        loaded = list(read_feature_records(buffer))
        assert len(loaded) == 2
        for orig, new in zip(records, loaded):
            assert new.sent_id == orig.sent_id
            assert new.tokens == orig.tokens
            assert new.attention_kind == orig.attention_kind
            for key in orig.hidden:
                assert np.allclose(new.hidden[key], orig.hidden[key])
            for key in orig.attention:
                assert np.allclose(new.attention[key], orig.attention[key])

    def test_row_sum_violation_rejected(self):
        line = '{"id": "s0", "tokens": ["a", "b"], "attention": {"0.0": [[0.9, 0.0], [0.5, 0.5]]}, "attention_kind": "full"}'
        with pytest.raises(ValidationError, match="row 0"):
            list(read_feature_records([line]))

    def test_prefix_mask_violation_rejected(self):
        line = '{"id": "s0", "tokens": ["a", "b"], "attention": {"0.0": [[0.5, 0.5], [0.5, 0.5]]}, "attention_kind": "prefix"}'
        with pytest.raises(ValidationError, match="prefix"):
            list(read_feature_records([line]))

    def test_shape_mismatch_rejected(self):
        line = '{"id": "s0", "tokens": ["a", "b", "c"], "attention": {"0.0": [[1.0, 0.0], [0.0, 1.0]]}, "attention_kind": "full"}'
        with pytest.raises(ValidationError, match="shape"):
            list(read_feature_records([line]))

    def test_hidden_shape_mismatch_rejected(self):
        line = '{"id": "s0", "tokens": ["a", "b", "c"], "hidden": {"0": [[1.0], [2.0]]}}'
        with pytest.raises(ValidationError, match="shape"):
            list(read_feature_records([line]))

    def test_attention_without_kind_rejected(self):
        line = '{"id": "s0", "tokens": ["a"], "attention": {"0.0": [[1.0]]}}'
        with pytest.raises(ValidationError, match="attention_kind"):
            list(read_feature_records([line]))

    def test_invalid_json_rejected_with_line(self):
        with pytest.raises(ValidationError, match="line 2"):
            list(read_feature_records(['{"id": "s0", "tokens": ["a"]}', "{broken"]))

    def test_missing_id_rejected(self):
        with pytest.raises(ValidationError, match="id"):
            list(read_feature_records(['{"tokens": ["a"]}']))

    def test_blank_lines_ignored(self):
        lines = ['{"id": "s0", "tokens": ["a"]}', "", '{"id": "s1", "tokens": ["b"]}']
        assert [r.sent_id for r in read_feature_records(lines)] == ["s0", "s1"]
