"""Bracketing F1, branching-gap reports, and the bias-isolation protocols.

The branching gap of a syntax-extraction pipeline is the F1 it reaches on a
corpus minus the F1 it reaches on the word-order-reversed corpus; a positive
gap means the pipeline favors the original corpus' branching direction.

Three protocols isolate where a gap comes from:

* ``random-parser-bias``  -- feed a parsing algorithm random scores, so any
  gap is the algorithm's own.
* ``random-feature-bias`` -- randomize model weights, convert them through a
  feature definition, and parse with the neutral ``dist`` algorithm, so any
  gap is the feature definition's.
* ``lm-audit``            -- run the neutral hidden+dist pipeline on real
  extracted features of both sides, so any gap is the language model's.

Replicated protocols report per-seed results plus their mean and standard
deviation.  Each side of each replicate derives its own seeds from sentence
ids, which makes results independent of sentence processing order and of the
``--threads`` setting.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from statistics import stdev
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, ValidationError
from .features import (
    FULL,
    PREFIX,
    FeatureRecord,
    RandomSpec,
    dist_from_attention,
    dist_from_hidden,
    random_attention,
    random_hidden,
    random_scoreseq,
)
from .parsers import (
    BASELINES,
    TieBreak,
    parse_attnspan,
    parse_baseline,
    parse_dist,
    parse_mart,
)
from .seeding import derive_seed, rng_from
from .trees import Corpus, Sentence, Tree, leaf_count, mirror_corpus, spans

__all__ = [
    "F1Result",
    "SeedOutcome",
    "GapReport",
    "EvalOptions",
    "f1_score",
    "branching_gap",
    "gap_from_predictions",
    "run_random_parser_bias",
    "run_random_feature_bias",
    "run_lm_audit",
    "tune_grid",
    "TuneResult",
    "reference_results",
    "FEATURE_DEFINITIONS",
]

FEATURE_DEFINITIONS = ("hidden", "prefix-attn", "full-attn")

# native random-matrix kind per matrix algorithm: the block-contrast parser's
# home pipeline builds matrices with causal models (masking a future word
# cannot change a past representation), the attention-span parser's with
# bidirectional ones
DEFAULT_MATRIX_KIND = {"mart": PREFIX, "attnspan": FULL}


@dataclass(frozen=True)
class F1Result:
    """Unlabeled bracketing scores on a 0-100 scale, with raw span counts."""

    precision: float
    recall: float
    f1: float
    matched: int
    predicted: int
    gold: int
    level: str

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "matched": self.matched,
            "predicted": self.predicted,
            "gold": self.gold,
            "level": self.level,
        }


@dataclass(frozen=True)
class SeedOutcome:
    seed: int
    f1_l: float
    f1_lprime: float

    @property
    def gap(self) -> float:
        return self.f1_l - self.f1_lprime


@dataclass(frozen=True)
class GapReport:
    protocol: str
    algorithm: str
    feature: str | None
    tiebreak: TieBreak
    level: str
    include_whole: bool
    metric_l: F1Result
    metric_lprime: F1Result
    seeds: tuple[int, ...]
    per_seed: tuple[SeedOutcome, ...]
    paired_seeds: bool = False

    @property
    def gap(self) -> float:
        return self.metric_l.f1 - self.metric_lprime.f1

    @property
    def replicates(self) -> int:
        return max(len(self.seeds), 1)

    @property
    def gap_sd(self) -> float:
        gaps = [o.gap for o in self.per_seed]
        return stdev(gaps) if len(gaps) >= 2 else 0.0

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "algorithm": self.algorithm,
            "feature": self.feature,
            "tiebreak": {"mode": self.tiebreak.mode, "seed": self.tiebreak.seed},
            "level": self.level,
            "include_whole": self.include_whole,
            "metric_l": self.metric_l.to_dict(),
            "metric_lprime": self.metric_lprime.to_dict(),
            "gap": self.gap,
            "seeds": list(self.seeds),
            "replicates": self.replicates,
            "paired_seeds": self.paired_seeds,
            "per_seed": [
                {"seed": o.seed, "f1_l": o.f1_l, "f1_lprime": o.f1_lprime, "gap": o.gap}
                for o in self.per_seed
            ],
            "gap_sd": self.gap_sd,
        }

    def tsv_row(self) -> str:
        cols = (
            self.protocol,
            self.algorithm,
            self.feature or "-",
            f"{self.metric_l.f1:.4f}",
            f"{self.metric_lprime.f1:.4f}",
            f"{self.gap:+.4f}",
            str(self.replicates),
            f"{self.gap_sd:.4f}",
        )
        return "\t".join(cols)


TSV_HEADER = "protocol\talgorithm\tfeature\tf1_L\tf1_Lprime\tgap\tseeds\tsd"


@dataclass(frozen=True)
class EvalOptions:
    level: str = "corpus"
    include_whole: bool = False
    paired_seeds: bool = False
    threads: int = 1

    def __post_init__(self) -> None:
        if self.level not in ("corpus", "sentence"):
            raise ConfigError(f"unknown evaluation level {self.level!r}")


# ---------------------------------------------------------------------------
# F1


def _f1_value(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _counts_f1(
    pairs: Sequence[tuple[frozenset, frozenset]], level: str
) -> F1Result:
    if level == "corpus":
        matched = sum(len(p & g) for p, g in pairs)
        predicted = sum(len(p) for p, _ in pairs)
        gold = sum(len(g) for _, g in pairs)
        precision = 100.0 * matched / predicted if predicted else 0.0
        recall = 100.0 * matched / gold if gold else 0.0
        return F1Result(precision, recall, _f1_value(precision, recall),
                        matched, predicted, gold, level)
    # sentence level: mean of per-sentence scores; sentences with no
    # evaluable gold span (length <= 2) are excluded from the mean
    scored = [(p, g) for p, g in pairs if g]
    matched = sum(len(p & g) for p, g in scored)
    predicted = sum(len(p) for p, _ in scored)
    gold = sum(len(g) for _, g in scored)
    ps, rs, fs = [], [], []
    for p, g in scored:
        m = len(p & g)
        precision = 100.0 * m / len(p) if p else 0.0
        recall = 100.0 * m / len(g)
        ps.append(precision)
        rs.append(recall)
        fs.append(_f1_value(precision, recall))
    if not scored:
        return F1Result(0.0, 0.0, 0.0, 0, 0, 0, level)
    k = float(len(scored))
    return F1Result(sum(ps) / k, sum(rs) / k, sum(fs) / k, matched, predicted, gold, level)


def f1_score(
    pred: Sequence[tuple[str, frozenset]],
    gold: Sequence[tuple[str, frozenset]],
    level: str = "corpus",
) -> F1Result:
    """Bracketing F1 over aligned (sentence id, span set) lists.

    Corpus level micro-aggregates span counts; sentence level averages
    per-sentence F1.  Lists must be aligned id-for-id.
    """
    if len(pred) != len(gold):
        raise ValidationError(
            f"prediction/gold size mismatch: {len(pred)} vs {len(gold)}"
        )
    for (pid, _), (gid, _) in zip(pred, gold):
        if pid != gid:
            raise ValidationError(f"sentence id mismatch: {pid!r} vs {gid!r}")
    return _counts_f1([(p, g) for (_, p), (_, g) in zip(pred, gold)], level)


def _tree_pairs(
    pred: Sequence[Tree], gold: Sequence[Tree], include_whole: bool
) -> list[tuple[frozenset, frozenset]]:
    return [
        (spans(p, include_whole), spans(g, include_whole))
        for p, g in zip(pred, gold)
    ]


def branching_gap(
    pred_l: Sequence[Tree],
    gold_l: Sequence[Tree],
    pred_lprime: Sequence[Tree],
    gold_lprime: Sequence[Tree],
    level: str = "corpus",
    include_whole: bool = False,
    protocol: str = "gap",
    algorithm: str = "external",
    feature: str | None = None,
    tiebreak: TieBreak = TieBreak("leftmost"),
) -> GapReport:
    """F1 on both corpus sides and their difference, as a single report."""
    if len(pred_l) != len(gold_l) or len(pred_lprime) != len(gold_lprime):
        raise ValidationError("corpus size mismatch between predictions and gold")
    if len(gold_l) != len(gold_lprime):
        raise ValidationError("corpus size mismatch between the two language sides")
    metric_l = _counts_f1(_tree_pairs(pred_l, gold_l, include_whole), level)
    metric_lp = _counts_f1(_tree_pairs(pred_lprime, gold_lprime, include_whole), level)
    return GapReport(
        protocol=protocol,
        algorithm=algorithm,
        feature=feature,
        tiebreak=tiebreak,
        level=level,
        include_whole=include_whole,
        metric_l=metric_l,
        metric_lprime=metric_lp,
        seeds=(),
        per_seed=(SeedOutcome(0, metric_l.f1, metric_lp.f1),),
    )


def gap_from_predictions(
    pred_l: dict[str, Tree],
    corpus_l: Corpus,
    pred_lprime: dict[str, Tree],
    corpus_lprime: Corpus,
    **kwargs,
) -> GapReport:
    """Like :func:`branching_gap`, aligning prediction dicts to corpora by id."""

    def align(pred: dict[str, Tree], corpus: Corpus) -> list[Tree]:
        out = []
        for sent in corpus:
            if sent.sent_id not in pred:
                raise ValidationError(f"no prediction for sentence {sent.sent_id!r}")
            tree = pred[sent.sent_id]
            if leaf_count(tree) != len(sent.tokens):
                raise ValidationError(
                    f"{sent.sent_id}: prediction has {leaf_count(tree)} words, "
                    f"treebank has {len(sent.tokens)}"
                )
            out.append(tree)
        extra = set(pred) - {s.sent_id for s in corpus}
        if extra:
            raise ValidationError(f"prediction for unknown sentence {sorted(extra)[0]!r}")
        return out

    gold_l = [s.gold for s in corpus_l]
    gold_lp = [s.gold for s in corpus_lprime]
    return branching_gap(
        align(pred_l, corpus_l), gold_l, align(pred_lprime, corpus_lprime), gold_lp, **kwargs
    )


# ---------------------------------------------------------------------------
# seeded protocol machinery


def _map_sentences(
    fn: Callable[[Sentence], Tree], corpus: Corpus, threads: int
) -> list[Tree]:
    if threads <= 1:
        return [fn(s) for s in corpus]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, corpus.sentences))


def _side_f1(
    corpus: Corpus,
    predict: Callable[[Sentence], Tree],
    opts: EvalOptions,
) -> F1Result:
    trees = _map_sentences(predict, corpus, opts.threads)
    pairs = _tree_pairs(trees, [s.gold for s in corpus], opts.include_whole)
    return _counts_f1(pairs, opts.level)


def _mean_metric(results: Sequence[F1Result], level: str) -> F1Result:
    """Replicate summary: mean scores, summed counts."""
    k = float(len(results))
    return F1Result(
        precision=sum(r.precision for r in results) / k,
        recall=sum(r.recall for r in results) / k,
        f1=sum(r.f1 for r in results) / k,
        matched=sum(r.matched for r in results),
        predicted=sum(r.predicted for r in results),
        gold=sum(r.gold for r in results),
        level=level,
    )


def _run_replicated(
    corpus: Corpus,
    predict: Callable[[Sentence, int, str], Tree],
    rand: RandomSpec,
    tiebreak: TieBreak,
    opts: EvalOptions,
    protocol: str,
    algorithm: str,
    feature: str | None,
) -> GapReport:
    corpus_lp = mirror_corpus(corpus)
    seeds = tuple(rand.seed + r for r in range(rand.replicates))
    outcomes = []
    results_l: list[F1Result] = []
    results_lp: list[F1Result] = []
    for seed in seeds:
        f1_l = _side_f1(corpus, lambda s: predict(s, seed, "L"), opts)
        f1_lp = _side_f1(corpus_lp, lambda s: predict(s, seed, "Lprime"), opts)
        results_l.append(f1_l)
        results_lp.append(f1_lp)
        outcomes.append(SeedOutcome(seed, f1_l.f1, f1_lp.f1))
    outcomes.sort(key=lambda o: o.seed)
    return GapReport(
        protocol=protocol,
        algorithm=algorithm,
        feature=feature,
        tiebreak=tiebreak,
        level=opts.level,
        include_whole=opts.include_whole,
        metric_l=_mean_metric(results_l, opts.level),
        metric_lprime=_mean_metric(results_lp, opts.level),
        seeds=seeds,
        per_seed=tuple(outcomes),
        paired_seeds=opts.paired_seeds,
    )


def _draw_spec(rand: RandomSpec, seed: int, side: str, sent_id: str, paired: bool) -> RandomSpec:
    # each (replicate, side, sentence) gets its own derived stream; pairing
    # drops the side tag so both sides share draws
    tags = (seed, sent_id) if paired else (seed, side, sent_id)
    return rand.with_seed(derive_seed(rand.seed, *tags))


def _tiebreak_rng_for(tiebreak: TieBreak, seed: int, sent_id: str) -> np.random.Generator | None:
    # side-independent on purpose: identical inputs on both sides must yield
    # identical trees, so null comparisons report a gap of exactly zero
    if tiebreak.mode != "random":
        return None
    return rng_from(tiebreak.seed, "tiebreak", seed, sent_id)


# ---------------------------------------------------------------------------
# protocols


def run_random_parser_bias(
    corpus: Corpus,
    algorithm: str,
    rand: RandomSpec,
    tiebreak: TieBreak = TieBreak(),
    matrix_kind: str | None = None,
    uniform_catalan: bool = False,
    include_diagonal: bool = True,
    opts: EvalOptions = EvalOptions(),
) -> GapReport:
    """Branching gap of a parsing algorithm on random feature scores.

    Per replicate, both corpus sides get freshly drawn inputs: a uniform
    score per gap for ``dist``, a normalized random matrix for the matrix
    algorithms (drawn as raw logits, then row-softmaxed, in the support
    pattern native to the algorithm's feature source; override with
    ``matrix_kind``).  Baselines ignore scores entirely.
    """
    if algorithm in ("mart", "attnspan"):
        kind = matrix_kind or DEFAULT_MATRIX_KIND[algorithm]
        if kind not in (FULL, PREFIX):
            raise ConfigError(f"unknown matrix kind {kind!r}")
    elif matrix_kind is not None:
        raise ConfigError(f"--matrix-kind does not apply to algorithm {algorithm!r}")

    def predict(sent: Sentence, seed: int, side: str) -> Tree:
        n = len(sent.tokens)
        texts = sent.texts
        spec = _draw_spec(rand, seed, side, sent.sent_id, opts.paired_seeds)
        tb_rng = _tiebreak_rng_for(tiebreak, seed, sent.sent_id)
        if algorithm == "dist":
            return parse_dist(texts, random_scoreseq(n, spec), tiebreak, tb_rng)
        if algorithm == "mart":
            matrix = random_attention(n, kind, spec)
            return parse_mart(texts, matrix, tiebreak, tb_rng, include_diagonal)
        if algorithm == "attnspan":
            matrix = random_attention(n, kind, spec)
            return parse_attnspan(texts, matrix, tiebreak, tb_rng)
        if algorithm in BASELINES:
            rng = np.random.Generator(np.random.PCG64(spec.seed))
            return parse_baseline(texts, algorithm, rng, uniform_catalan)
        raise ConfigError(f"unknown algorithm {algorithm!r}")

    return _run_replicated(
        corpus, predict, rand, tiebreak, opts,
        protocol="random-parser-bias", algorithm=algorithm, feature="random-scores",
    )


def run_random_feature_bias(
    corpus: Corpus,
    feature: str,
    rand: RandomSpec,
    tiebreak: TieBreak = TieBreak(),
    hidden_dim: int = 768,
    hidden_metric: str = "l2",
    attn_metric: str = "jsd",
    opts: EvalOptions = EvalOptions(),
) -> GapReport:
    """Branching gap of a feature definition over randomized model weights.

    Weights (hidden vectors, or attention logits in the chosen support
    pattern) are drawn per sentence and side, converted to split scores by
    the feature definition, and parsed with the neutral ``dist`` algorithm.
    """
    if feature not in FEATURE_DEFINITIONS:
        raise ConfigError(
            f"unknown feature definition {feature!r}; expected one of {FEATURE_DEFINITIONS}"
        )

    def predict(sent: Sentence, seed: int, side: str) -> Tree:
        n = len(sent.tokens)
        spec = _draw_spec(rand, seed, side, sent.sent_id, opts.paired_seeds)
        tb_rng = _tiebreak_rng_for(tiebreak, seed, sent.sent_id)
        if feature == "hidden":
            scores = dist_from_hidden(random_hidden(n, hidden_dim, spec), hidden_metric)
        else:
            kind = PREFIX if feature == "prefix-attn" else FULL
            scores = dist_from_attention(random_attention(n, kind, spec), attn_metric)
        return parse_dist(sent.texts, scores, tiebreak, tb_rng)

    return _run_replicated(
        corpus, predict, rand, tiebreak, opts,
        protocol="random-feature-bias", algorithm="dist", feature=feature,
    )


def _resolve_layer(record: FeatureRecord, layer: str) -> str:
    if layer != "last":
        if layer not in record.hidden:
            raise ValidationError(
                f"{record.sent_id}: no hidden layer {layer!r}; "
                f"available: {sorted(record.hidden)}"
            )
        return layer
    if not record.hidden:
        raise ValidationError(f"{record.sent_id}: record has no hidden layers")

    def order(key: str):
        return (0, int(key)) if key.isdigit() else (1, key)

    return max(record.hidden, key=order)


def run_lm_audit(
    corpus: Corpus,
    records_l: Iterable[FeatureRecord],
    records_lprime: Iterable[FeatureRecord],
    corpus_lprime: Corpus | None = None,
    layer: str = "last",
    metric: str = "l2",
    tiebreak: TieBreak = TieBreak(),
    opts: EvalOptions = EvalOptions(),
) -> GapReport:
    """Branching gap of a language model through the hidden+dist pipeline.

    Feature files for both sides must align with the corpora: same ids, same
    tokens.  The run is deterministic, so identical feature files on both
    sides report a gap of exactly zero.
    """
    if corpus_lprime is None:
        corpus_lprime = mirror_corpus(corpus)
    if len(corpus) != len(corpus_lprime):
        raise ValidationError("corpus size mismatch between the two language sides")

    def index(records: Iterable[FeatureRecord], side_corpus: Corpus) -> dict[str, FeatureRecord]:
        by_id = {}
        for rec in records:
            by_id[rec.sent_id] = rec
        for sent in side_corpus:
            if sent.sent_id not in by_id:
                raise ValidationError(f"missing feature record for sentence {sent.sent_id!r}")
            rec = by_id[sent.sent_id]
            if rec.tokens != sent.texts:
                raise ValidationError(
                    f"{sent.sent_id}: feature tokens do not match treebank tokens"
                )
        return by_id

    recs_l = index(records_l, corpus)
    recs_lp = index(records_lprime, corpus_lprime)

    def predict_with(recs: dict[str, FeatureRecord]) -> Callable[[Sentence], Tree]:
        def predict(sent: Sentence) -> Tree:
            rec = recs[sent.sent_id]
            hidden = rec.hidden[_resolve_layer(rec, layer)]
            scores = dist_from_hidden(hidden, metric)
            tb_rng = _tiebreak_rng_for(tiebreak, 0, sent.sent_id)
            return parse_dist(sent.texts, scores, tiebreak, tb_rng)

        return predict

    metric_l = _side_f1(corpus, predict_with(recs_l), opts)
    metric_lp = _side_f1(corpus_lprime, predict_with(recs_lp), opts)
    return GapReport(
        protocol="lm-audit",
        algorithm="dist",
        feature="hidden",
        tiebreak=tiebreak,
        level=opts.level,
        include_whole=opts.include_whole,
        metric_l=metric_l,
        metric_lprime=metric_lp,
        seeds=(),
        per_seed=(SeedOutcome(0, metric_l.f1, metric_lp.f1),),
    )


# ---------------------------------------------------------------------------
# hyper-parameter tuning


@dataclass(frozen=True)
class TuneResult:
    pipeline: str
    rows: tuple[tuple[dict, float], ...]  # (config, f1) in evaluation order
    best: dict = field(init=False)
    best_f1: float = field(init=False)

    def __post_init__(self) -> None:
        if not self.rows:
            raise ConfigError("tuning grid is empty")
        best_cfg, best_f1 = max(self.rows, key=lambda row: row[1])
        # first-best tie rule: max() keeps the earliest maximal row
        object.__setattr__(self, "best", best_cfg)
        object.__setattr__(self, "best_f1", best_f1)

    def to_dict(self) -> dict:
        return {
            "pipeline": self.pipeline,
            "rows": [{"config": cfg, "f1": f1} for cfg, f1 in self.rows],
            "best": self.best,
            "best_f1": self.best_f1,
        }


def tune_grid(
    corpus: Corpus,
    records: Sequence[FeatureRecord],
    pipeline: str,
    layers: Sequence[str] | None = None,
    heads: Sequence[str] | None = None,
    metrics: Sequence[str] | None = None,
    tiebreak: TieBreak = TieBreak("leftmost"),
    opts: EvalOptions = EvalOptions(),
) -> TuneResult:
    """Exhaustive grid evaluation of a pipeline on a validation corpus.

    ``hidden-dist`` spans layers x metrics; ``attn-dist`` spans layers x
    heads x metrics.  Layers/heads default to everything present in the
    records.  Ties go to the earliest grid entry.
    """
    from .features import attn_matrix  # local import to keep module init light

    by_id = {rec.sent_id: rec for rec in records}
    for sent in corpus:
        if sent.sent_id not in by_id:
            raise ValidationError(f"missing feature record for sentence {sent.sent_id!r}")

    def evaluate(score_fn: Callable[[FeatureRecord], np.ndarray]) -> float:
        def predict(sent: Sentence) -> Tree:
            rec = by_id[sent.sent_id]
            tb_rng = _tiebreak_rng_for(tiebreak, 0, sent.sent_id)
            return parse_dist(sent.texts, score_fn(rec), tiebreak, tb_rng)

        return _side_f1(corpus, predict, opts).f1

    rows: list[tuple[dict, float]] = []
    if pipeline == "hidden-dist":
        if layers is None:
            layers = sorted({l for r in records for l in r.hidden})
        metrics = list(metrics or ("l2", "cosine"))
        for layer in layers:
            for metric in metrics:
                f1 = evaluate(lambda r, l=layer, m=metric: dist_from_hidden(r.hidden[l], m))
                rows.append(({"layer": layer, "metric": metric}, f1))
    elif pipeline == "attn-dist":
        if layers is None or heads is None:
            keys = sorted({k for r in records for k in r.attention})
            split = [k.rsplit(".", 1) for k in keys]
            if layers is None:
                layers = sorted({s[0] for s in split})
            if heads is None:
                heads = sorted({s[1] for s in split})
        metrics = list(metrics or ("jsd", "l2"))
        for layer in layers:
            for head in heads:
                for metric in metrics:
                    f1 = evaluate(
                        lambda r, l=layer, h=head, m=metric: dist_from_attention(
                            attn_matrix(r, l, h, "single"), m
                        )
                    )
                    rows.append(({"layer": layer, "head": head, "metric": metric}, f1))
    else:
        raise ConfigError(f"unknown pipeline {pipeline!r}")
    return TuneResult(pipeline=pipeline, rows=tuple(rows))


# ---------------------------------------------------------------------------
# reference numbers


def reference_results() -> dict:
    """Published full-scale results, for annotating reports.

    These come from runs with trained language models on licensed treebanks
    and are context, not reproduction targets, at this package's scale.
    """
    path = resources.files("branchgap").joinpath("data/reference_results.json")
    return json.loads(path.read_text(encoding="utf-8"))
