"""Model features and their conversion to parser inputs.

Three feature definitions are supported:

* ``hidden``      -- per-word vectors; adjacent-pair distance gives split scores.
* ``full-attn``   -- row-stochastic n x n attention over the whole sentence.
* ``prefix-attn`` -- causal attention: row i is supported on positions 0..i,
  strictly lower-triangular-plus-diagonal after normalization.

Attention rows are compared zero-padded to the full sentence length.  For
prefix attention this is deliberate: the growing support is exactly the
asymmetry that lets a split-score trend (and hence a branching preference)
emerge from otherwise random weights.

Randomized surrogates (`random_*`) draw from a seeded uniform distribution so
that replicated experiments are reproducible draw-for-draw.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

import numpy as np

from .errors import ConfigError, ValidationError

__all__ = [
    "RandomSpec",
    "FeatureRecord",
    "random_scoreseq",
    "random_hidden",
    "random_attention",
    "dist_from_hidden",
    "dist_from_attention",
    "attn_matrix",
    "matrix_reverse",
    "read_feature_records",
    "write_feature_records",
]

ROW_SUM_ATOL = 1e-6      # tolerance on stored attention rows
ROW_SUM_CHECK = 1e-4     # looser gate when converting rows to scores

FULL = "full"
PREFIX = "prefix"
_KINDS = (FULL, PREFIX)


@dataclass(frozen=True)
class RandomSpec:
    """Uniform-distribution randomization parameters for one experiment."""

    low: float = -1.0
    high: float = 1.0
    seed: int = 0
    replicates: int = 10

    def __post_init__(self) -> None:
        if not self.low < self.high:
            raise ConfigError(f"RandomSpec requires low < high, got [{self.low}, {self.high}]")
        if self.replicates < 1:
            raise ConfigError("RandomSpec requires at least one replicate")

    def with_seed(self, seed: int) -> "RandomSpec":
        return RandomSpec(self.low, self.high, seed, self.replicates)


def _rng(spec: RandomSpec) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(spec.seed))


def random_scoreseq(n: int, spec: RandomSpec) -> np.ndarray:
    """n-1 i.i.d. uniform(low, high) split scores for an n-word sentence."""
    if n < 1:
        raise ConfigError("sentence must have at least one word")
    return _rng(spec).uniform(spec.low, spec.high, size=n - 1)


def random_hidden(n: int, dim: int, spec: RandomSpec) -> np.ndarray:
    """(n, dim) matrix of i.i.d. uniform(low, high) entries."""
    if dim < 1:
        raise ConfigError("hidden dimension must be >= 1")
    return _rng(spec).uniform(spec.low, spec.high, size=(n, dim))


def random_attention(n: int, kind: str, spec: RandomSpec) -> np.ndarray:
    """Random attention: uniform logits on permitted cells, then row softmax.

    Permitted cells are all of row i for ``full`` and positions 0..i for
    ``prefix``; forbidden cells are exactly zero.  Logits are randomized
    before normalization, so the draw mimics randomizing a model's
    pre-softmax attention weights.
    """
    if kind not in _KINDS:
        raise ConfigError(f"unknown attention kind {kind!r}")
    logits = _rng(spec).uniform(spec.low, spec.high, size=(n, n))
    out = np.zeros((n, n))
    for i in range(n):
        support = n if kind == FULL else i + 1
        row = logits[i, :support]
        row = np.exp(row - row.max())
        out[i, :support] = row / row.sum()
    return out


# ---------------------------------------------------------------------------
# feature -> score conversion


def dist_from_hidden(hidden: np.ndarray, metric: str = "l2") -> np.ndarray:
    """Adjacent-row distances of an (n, d) matrix; length n-1.

    ``l2`` is the Euclidean norm of the difference, ``cosine`` is
    1 - cos(angle).  A zero-norm row is an error under cosine.
    """
    hidden = np.asarray(hidden, dtype=float)
    if hidden.ndim != 2:
        raise ValidationError(f"hidden matrix must be 2-d, got shape {hidden.shape}")
    a, b = hidden[:-1], hidden[1:]
    if metric == "l2":
        return np.linalg.norm(a - b, axis=1)
    if metric == "cosine":
        norms = np.linalg.norm(hidden, axis=1)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise ValidationError(f"zero-norm hidden vector at row {zero[0]}")
        dots = np.einsum("ij,ij->i", a, b)
        return 1.0 - dots / (norms[:-1] * norms[1:])
    raise ConfigError(f"unknown hidden metric {metric!r}")


def _jsd(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence, base-2 logs, range [0, 1]."""
    m = 0.5 * (p + q)

    def kl(x: np.ndarray) -> float:
        mask = x > 0
        return float(np.sum(x[mask] * np.log2(x[mask] / m[mask])))

    return 0.5 * kl(p) + 0.5 * kl(q)


def dist_from_attention(attn: np.ndarray, metric: str = "jsd") -> np.ndarray:
    """Distances between adjacent attention rows, zero-padded to length n.

    Rows must be probability vectors over their support.  Padding (rather
    than truncating to the shorter support) preserves the support-size
    asymmetry of prefix attention.
    """
    attn = np.asarray(attn, dtype=float)
    if attn.ndim != 2 or attn.shape[0] != attn.shape[1]:
        raise ValidationError(f"attention matrix must be square, got shape {attn.shape}")
    sums = attn.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_CHECK)
    if bad.size:
        raise ValidationError(
            f"attention row {bad[0]} sums to {sums[bad[0]]:.6f}, expected 1"
        )
    n = attn.shape[0]
    if metric == "jsd":
        return np.array([_jsd(attn[i], attn[i + 1]) for i in range(n - 1)])
    if metric == "l2":
        return np.linalg.norm(attn[:-1] - attn[1:], axis=1)
    raise ConfigError(f"unknown attention metric {metric!r}")


def matrix_reverse(matrix: np.ndarray) -> np.ndarray:
    """Reverse both axes; the matrix of the word-order-reversed sentence."""
    return np.asarray(matrix)[::-1, ::-1].copy()


# ---------------------------------------------------------------------------
# feature records and their JSON Lines format


@dataclass
class FeatureRecord:
    """Raw per-sentence model features keyed by layer (and head)."""

    sent_id: str
    tokens: tuple[str, ...]
    hidden: dict[str, np.ndarray] = field(default_factory=dict)
    attention: dict[str, np.ndarray] = field(default_factory=dict)
    attention_kind: str = FULL

    def validate(self) -> None:
        n = len(self.tokens)
        if self.attention_kind not in _KINDS:
            raise ValidationError(
                f"{self.sent_id}: unknown attention_kind {self.attention_kind!r}"
            )
        for layer, mat in self.hidden.items():
            if mat.ndim != 2 or mat.shape[0] != n:
                raise ValidationError(
                    f"{self.sent_id}: hidden[{layer}] has shape {mat.shape}, "
                    f"expected ({n}, d)"
                )
            if not np.isfinite(mat).all():
                raise ValidationError(f"{self.sent_id}: hidden[{layer}] has non-finite entries")
        for key, mat in self.attention.items():
            if mat.shape != (n, n):
                raise ValidationError(
                    f"{self.sent_id}: attention[{key}] has shape {mat.shape}, "
                    f"expected ({n}, {n})"
                )
            if not np.isfinite(mat).all():
                raise ValidationError(f"{self.sent_id}: attention[{key}] has non-finite entries")
            if self.attention_kind == PREFIX and n > 1:
                upper = mat[np.triu_indices(n, k=1)]
                if np.any(upper != 0.0):
                    raise ValidationError(
                        f"{self.sent_id}: attention[{key}] marked prefix but has "
                        "nonzero entries above the diagonal"
                    )
            sums = mat.sum(axis=1)
            bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_ATOL)
            if bad.size:
                raise ValidationError(
                    f"{self.sent_id}: attention[{key}] row {bad[0]} sums to "
                    f"{sums[bad[0]]:.8f}, expected 1 +- {ROW_SUM_ATOL}"
                )


def attn_matrix(
    record: FeatureRecord,
    layer: str | int | None = None,
    head: str | int | None = None,
    merge: str = "single",
) -> np.ndarray:
    """Select (or average) attention matrices of a record.

    ``single`` returns the ``layer.head`` matrix verbatim; ``head-mean``
    averages all heads of ``layer``; ``layer-head-mean`` averages every
    stored matrix.  Averaging row-stochastic matrices keeps rows stochastic
    and preserves a shared prefix mask.
    """
    available = sorted(record.attention)
    if not available:
        raise ValidationError(f"{record.sent_id}: record has no attention matrices")
    if merge == "single":
        key = f"{layer}.{head}"
        if key not in record.attention:
            raise ValidationError(
                f"{record.sent_id}: no attention matrix {key!r}; available: {available}"
            )
        return record.attention[key]
    if merge == "head-mean":
        prefix = f"{layer}."
        mats = [m for k, m in sorted(record.attention.items()) if k.startswith(prefix)]
        if not mats:
            raise ValidationError(
                f"{record.sent_id}: no attention matrices for layer {layer!r}; "
                f"available: {available}"
            )
        return np.mean(mats, axis=0)
    if merge == "layer-head-mean":
        return np.mean([record.attention[k] for k in available], axis=0)
    raise ConfigError(f"unknown merge mode {merge!r}")


def read_feature_records(stream: IO[str] | Iterable[str]) -> Iterator[FeatureRecord]:
    """Read and strictly validate feature records from JSON Lines.

    Each line holds one object:
    ``{"id", "tokens", "hidden"?, "attention"?, "attention_kind"?}`` with
    word-level matrices.  Shape mismatches, non-stochastic rows and broken
    prefix masks are rejected outright.
    """
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"feature line {lineno}: invalid JSON ({exc})") from exc
        if "id" not in obj or "tokens" not in obj:
            raise ValidationError(f"feature line {lineno}: missing 'id' or 'tokens'")
        if "attention" in obj and "attention_kind" not in obj:
            raise ValidationError(
                f"feature line {lineno} ({obj['id']}): attention present "
                "but attention_kind missing"
            )
        record = FeatureRecord(
            sent_id=str(obj["id"]),
            tokens=tuple(obj["tokens"]),
            hidden={k: np.asarray(v, dtype=float) for k, v in obj.get("hidden", {}).items()},
            attention={
                k: np.asarray(v, dtype=float) for k, v in obj.get("attention", {}).items()
            },
            attention_kind=obj.get("attention_kind", FULL),
        )
        record.validate()
        yield record


def write_feature_records(records: Iterable[FeatureRecord], stream: IO[str]) -> None:
    """Write records in the JSON Lines ingestion format (validating first)."""
    for record in records:
        record.validate()
        obj: dict = {"id": record.sent_id, "tokens": list(record.tokens)}
        if record.hidden:
            obj["hidden"] = {k: v.tolist() for k, v in sorted(record.hidden.items())}
        if record.attention:
            obj["attention"] = {k: v.tolist() for k, v in sorted(record.attention.items())}
            obj["attention_kind"] = record.attention_kind
        stream.write(json.dumps(obj) + "\n")
