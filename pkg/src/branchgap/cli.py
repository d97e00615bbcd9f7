"""Command-line interface: one executable, one subcommand per workflow.

Every run that produces a report embeds a manifest (command line, resolved
configuration, seeds, package version, input digests, timestamp) so results
can be traced and reproduced.  Set ``SOURCE_DATE_EPOCH`` to pin the manifest
timestamp; with it pinned, re-running a command writes byte-identical
reports regardless of ``--threads``.

Standard output carries TSV summary lines only; diagnostics go to standard
error.  Exit codes: 0 success, 2 usage or input errors, 3 violated internal
invariants.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__
from .errors import BranchGapError, ConfigError, InvariantError
from .evaluation import (
    DEFAULT_MATRIX_KIND,
    EvalOptions,
    gap_from_predictions,
    run_lm_audit,
    run_random_feature_bias,
    run_random_parser_bias,
    tune_grid,
)
from .features import (
    FULL,
    PREFIX,
    RandomSpec,
    attn_matrix,
    dist_from_attention,
    dist_from_hidden,
    random_attention,
    random_scoreseq,
    read_feature_records,
)
from .parsers import (
    BASELINES,
    TieBreak,
    parse_attnspan,
    parse_baseline,
    parse_dist,
    parse_mart,
)
from .sample import DEFAULT_SEED, DEFAULT_SENTENCES, generate_sample_corpus
from .seeding import derive_seed, rng_from
from .trees import (
    Corpus,
    mirror_corpus,
    parse_tree,
    read_bracketed,
    to_bracketed,
    write_bracketed,
)

_ALGO_NAMES = {
    "dist": "dist",
    "mart": "mart",
    "attnspan": "attnspan",
    "right-b": "right_b",
    "left-b": "left_b",
    "random": "random_tree",
    "balanced": "balanced",
}


# ---------------------------------------------------------------------------
# manifest and report plumbing


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        moment = datetime.datetime.fromtimestamp(int(epoch), datetime.timezone.utc)
    else:
        moment = datetime.datetime.now(datetime.timezone.utc)
    return moment.isoformat()


def _manifest(args: argparse.Namespace, inputs: list[Path]) -> dict:
    config = {
        key: (str(value) if isinstance(value, Path) else value)
        for key, value in sorted(vars(args).items())
        if key != "func" and not key.startswith("_")
    }
    return {
        "command": "branchgap " + " ".join(getattr(args, "_argv", sys.argv[1:])),
        "config": config,
        "seed": config.get("seed"),
        "version": __version__,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "timestamp": _timestamp(),
    }


def _emit(report, manifest: dict, args: argparse.Namespace) -> None:
    document = {"manifest": manifest, "report": report.to_dict()}
    if getattr(args, "out", None):
        Path(args.out).write_text(
            json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    if args.emit == "json":
        print(json.dumps(document, indent=2, sort_keys=True))
    else:
        print(report.tsv_row())


def _read_corpus(path: Path, keep_punct: bool) -> Corpus:
    with open(path, encoding="utf-8") as handle:
        corpus = read_bracketed(handle, keep_punct=keep_punct)
    if corpus.skipped:
        print(
            f"warning: skipped {corpus.skipped} sentence(s) left empty by "
            f"punctuation stripping in {path}",
            file=sys.stderr,
        )
    return corpus


def _read_features(path: Path) -> list:
    with open(path, encoding="utf-8") as handle:
        return list(read_feature_records(handle))


def _read_predictions(path: Path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "id" not in obj or "tree" not in obj:
                raise ConfigError(f"{path}:{lineno}: prediction line needs 'id' and 'tree'")
            out[str(obj["id"])] = parse_tree(obj["tree"], labeled=False)
    return out


def _eval_options(args: argparse.Namespace) -> EvalOptions:
    return EvalOptions(
        level=args.level,
        include_whole=args.include_whole,
        paired_seeds=getattr(args, "paired_seeds", False),
        threads=args.threads,
    )


def _tiebreak(args: argparse.Namespace) -> TieBreak:
    return TieBreak(args.tiebreak, args.tiebreak_seed)


def _random_spec(args: argparse.Namespace) -> RandomSpec:
    return RandomSpec(
        low=args.low, high=args.high, seed=args.seed,
        replicates=getattr(args, "seeds", 1),
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_make_sample(args: argparse.Namespace) -> int:
    corpus = generate_sample_corpus(
        sentences=args.sentences,
        seed=args.seed,
        min_len=args.min_len,
        max_len=args.max_len,
        p_uniform=args.p_uniform,
        p_right_peel=args.p_right_peel,
    )
    Path(args.out).write_text(write_bracketed(corpus), encoding="utf-8")
    print(f"wrote {len(corpus)} sentences to {args.out}", file=sys.stderr)
    return 0


def cmd_reverse_treebank(args: argparse.Namespace) -> int:
    corpus = _read_corpus(args.input, args.keep_punct)
    Path(args.out).write_text(write_bracketed(mirror_corpus(corpus)), encoding="utf-8")
    return 0


def _scores_from_features(record, args, feature: str):
    if feature == "hidden":
        layer = args.layer or "last"
        if layer == "last":
            if not record.hidden:
                raise ConfigError(f"{record.sent_id}: record has no hidden layers")
            layer = max(record.hidden, key=lambda k: (0, int(k)) if k.isdigit() else (1, k))
        elif layer not in record.hidden:
            raise ConfigError(
                f"{record.sent_id}: no hidden layer {layer!r}; available: "
                f"{sorted(record.hidden)}"
            )
        return dist_from_hidden(record.hidden[layer], args.metric or "l2")
    expected = PREFIX if feature == "prefix-attn" else FULL
    if record.attention_kind != expected:
        raise ConfigError(
            f"{record.sent_id}: feature definition {feature!r} needs "
            f"{expected}-attention records, file has {record.attention_kind!r}"
        )
    matrix = attn_matrix(record, args.layer, args.head, args.merge)
    return dist_from_attention(matrix, args.metric or "jsd")


def cmd_parse(args: argparse.Namespace) -> int:
    algo = _ALGO_NAMES[args.algo]
    corpus = _read_corpus(args.treebank, args.keep_punct)
    inputs = [args.treebank]

    records = None
    if args.features:
        inputs.append(args.features)
        records = {rec.sent_id: rec for rec in _read_features(args.features)}
        for sent in corpus:
            if sent.sent_id not in records:
                raise ConfigError(f"missing feature record for sentence {sent.sent_id!r}")
            if records[sent.sent_id].tokens != sent.texts:
                raise ConfigError(
                    f"{sent.sent_id}: feature tokens do not match treebank tokens"
                )
    elif algo in ("dist", "mart", "attnspan") and not args.random:
        raise ConfigError(
            f"algorithm {args.algo!r} needs --features or --random"
        )

    tiebreak = _tiebreak(args)
    rand = RandomSpec(low=args.low, high=args.high, seed=args.seed, replicates=1)

    def predict(sent):
        texts = sent.texts
        n = len(texts)
        tb_rng = (
            rng_from(tiebreak.seed, "tiebreak", 0, sent.sent_id)
            if tiebreak.mode == "random"
            else None
        )
        if algo in BASELINES:
            rng = rng_from(args.seed, sent.sent_id)
            return parse_baseline(texts, algo, rng, args.uniform_catalan)
        if records is not None:
            rec = records[sent.sent_id]
            if algo == "dist":
                return parse_dist(
                    texts, _scores_from_features(rec, args, args.feature), tiebreak, tb_rng
                )
            matrix = attn_matrix(rec, args.layer, args.head, args.merge)
            if algo == "mart":
                return parse_mart(texts, matrix, tiebreak, tb_rng, not args.exclude_diagonal)
            return parse_attnspan(texts, matrix, tiebreak, tb_rng)
        spec = rand.with_seed(derive_seed(args.seed, sent.sent_id))
        if algo == "dist":
            return parse_dist(texts, random_scoreseq(n, spec), tiebreak, tb_rng)
        kind = args.matrix_kind or DEFAULT_MATRIX_KIND[algo]
        matrix = random_attention(n, kind, spec)
        if algo == "mart":
            return parse_mart(texts, matrix, tiebreak, tb_rng, not args.exclude_diagonal)
        return parse_attnspan(texts, matrix, tiebreak, tb_rng)

    lines = [
        json.dumps({"id": sent.sent_id, "tree": to_bracketed(predict(sent), labeled=False)})
        for sent in corpus
    ]
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    manifest_path = Path(str(args.out) + ".manifest.json")
    manifest_path.write_text(
        json.dumps(_manifest(args, inputs), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return 0


def cmd_gap(args: argparse.Namespace) -> int:
    corpus_l = _read_corpus(args.treebank, args.keep_punct)
    if args.treebank_lprime:
        corpus_lp = _read_corpus(args.treebank_lprime, args.keep_punct)
        inputs = [args.treebank, args.treebank_lprime, args.pred, args.pred_lprime]
    else:
        corpus_lp = mirror_corpus(corpus_l)
        inputs = [args.treebank, args.pred, args.pred_lprime]
    pred_l = _read_predictions(args.pred)
    pred_lp = _read_predictions(args.pred_lprime)
    report = gap_from_predictions(
        pred_l, corpus_l, pred_lp, corpus_lp,
        level=args.level, include_whole=args.include_whole,
        protocol="gap", algorithm="external",
    )
    _emit(report, _manifest(args, inputs), args)
    return 0


def cmd_random_parser_bias(args: argparse.Namespace) -> int:
    corpus = _read_corpus(args.treebank, args.keep_punct)
    report = run_random_parser_bias(
        corpus,
        _ALGO_NAMES[args.algo],
        _random_spec(args),
        _tiebreak(args),
        matrix_kind=args.matrix_kind,
        uniform_catalan=args.uniform_catalan,
        include_diagonal=not args.exclude_diagonal,
        opts=_eval_options(args),
    )
    _emit(report, _manifest(args, [args.treebank]), args)
    return 0


def cmd_random_feature_bias(args: argparse.Namespace) -> int:
    corpus = _read_corpus(args.treebank, args.keep_punct)
    report = run_random_feature_bias(
        corpus,
        args.feature,
        _random_spec(args),
        _tiebreak(args),
        hidden_dim=args.dim,
        hidden_metric=args.hidden_metric,
        attn_metric=args.attn_metric,
        opts=_eval_options(args),
    )
    _emit(report, _manifest(args, [args.treebank]), args)
    return 0


def cmd_lm_audit(args: argparse.Namespace) -> int:
    corpus = _read_corpus(args.treebank, args.keep_punct)
    inputs = [args.treebank, args.features, args.features_lprime]
    if args.treebank_lprime:
        corpus_lp = _read_corpus(args.treebank_lprime, args.keep_punct)
        inputs.insert(1, args.treebank_lprime)
    else:
        corpus_lp = None
    report = run_lm_audit(
        corpus,
        _read_features(args.features),
        _read_features(args.features_lprime),
        corpus_lprime=corpus_lp,
        layer=args.layer,
        metric=args.metric,
        tiebreak=_tiebreak(args),
        opts=_eval_options(args),
    )
    _emit(report, _manifest(args, inputs), args)
    return 0


def cmd_tune(args: argparse.Namespace) -> int:
    corpus = _read_corpus(args.treebank, args.keep_punct)
    records = _read_features(args.features)

    def split_list(value):
        return None if value in (None, "all") else value.split(",")

    result = tune_grid(
        corpus,
        records,
        args.pipeline,
        layers=split_list(args.layers),
        heads=split_list(args.heads),
        metrics=split_list(args.metrics),
        tiebreak=_tiebreak(args),
        opts=_eval_options(args),
    )
    manifest = _manifest(args, [args.treebank, args.features])
    if getattr(args, "out", None):
        document = {"manifest": manifest, "report": result.to_dict()}
        Path(args.out).write_text(
            json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    if args.emit == "json":
        print(json.dumps({"manifest": manifest, "report": result.to_dict()},
                         indent=2, sort_keys=True))
    else:
        for config, f1 in result.rows:
            marker = "best" if config == result.best else "-"
            cells = [args.pipeline] + [f"{k}={v}" for k, v in config.items()]
            print("\t".join(["tune"] + cells + [f"{f1:.4f}", marker]))
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_eval_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--level", choices=["corpus", "sentence"], default="corpus",
                     help="F1 aggregation level (default: corpus)")
    sub.add_argument("--include-whole", action="store_true",
                     help="count the whole-sentence span as a bracket")
    sub.add_argument("--keep-punct", action="store_true",
                     help="keep punctuation-only leaves when reading treebanks")
    sub.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                     help="sentence-level parallelism cap (results are identical for any value)")
    sub.add_argument("--emit", choices=["tsv", "json"], default="tsv",
                     help="stdout format (default: tsv)")
    sub.add_argument("--out", type=Path, default=None,
                     help="write the full JSON report (with manifest) here")


def _add_tiebreak_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--tiebreak", choices=["leftmost", "rightmost", "random"],
                     default="random", help="argmax tie resolution (default: random)")
    sub.add_argument("--tiebreak-seed", type=int, default=0,
                     help="seed for random tie resolution")


def _add_random_flags(sub: argparse.ArgumentParser, replicated: bool) -> None:
    sub.add_argument("--seed", type=int, default=0, help="base seed")
    if replicated:
        sub.add_argument("--seeds", type=int, default=10,
                         help="number of replicates, seeds base..base+k-1 (default: 10)")
        sub.add_argument("--paired-seeds", action="store_true",
                         help="share random draws between the two language sides")
    sub.add_argument("--low", type=float, default=-1.0, help="uniform lower bound")
    sub.add_argument("--high", type=float, default=1.0, help="uniform upper bound")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="branchgap",
        description="Branching-bias measurement for constituency-tree extraction pipelines.",
    )
    parser.add_argument("--version", action="version", version=f"branchgap {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sub = commands.add_parser("make-sample",
                              help="generate the bundled right-branching-skewed sample treebank")
    sub.add_argument("--sentences", type=int, default=DEFAULT_SENTENCES)
    sub.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sub.add_argument("--min-len", type=int, default=3)
    sub.add_argument("--max-len", type=int, default=22)
    sub.add_argument("--p-uniform", type=float, default=0.10,
                     help="probability of a uniformly random split")
    sub.add_argument("--p-right-peel", type=float, default=0.10,
                     help="probability of a left-branching step")
    sub.add_argument("--out", type=Path, required=True)
    sub.set_defaults(func=cmd_make_sample)

    sub = commands.add_parser("reverse-treebank",
                              help="write the word-order-reversed treebank")
    sub.add_argument("input", type=Path)
    sub.add_argument("out", type=Path)
    sub.add_argument("--keep-punct", action="store_true")
    sub.set_defaults(func=cmd_reverse_treebank)

    sub = commands.add_parser("parse", help="parse a treebank into a predictions file")
    sub.add_argument("--algo", choices=sorted(_ALGO_NAMES), required=True)
    sub.add_argument("--treebank", type=Path, required=True)
    sub.add_argument("--features", type=Path, default=None,
                     help="feature records (JSON Lines) to parse from")
    sub.add_argument("--random", action="store_true",
                     help="draw random feature scores instead of reading features")
    sub.add_argument("--feature", choices=["hidden", "prefix-attn", "full-attn"],
                     default="hidden", help="feature definition for --algo dist with --features")
    sub.add_argument("--layer", default=None, help="layer selector ('last' for hidden)")
    sub.add_argument("--head", default=None, help="attention head selector")
    sub.add_argument("--merge", choices=["single", "head-mean", "layer-head-mean"],
                     default="single")
    sub.add_argument("--metric", default=None,
                     help="distance metric (hidden: l2|cosine; attention: jsd|l2)")
    sub.add_argument("--matrix-kind", choices=[FULL, PREFIX], default=None,
                     help="random matrix support for mart/attnspan with --random")
    sub.add_argument("--exclude-diagonal", action="store_true",
                     help="exclude the diagonal from mart's within-block means")
    sub.add_argument("--uniform-catalan", action="store_true",
                     help="random baseline samples uniformly over bracketings")
    sub.add_argument("--keep-punct", action="store_true")
    sub.add_argument("--out", type=Path, required=True)
    _add_random_flags(sub, replicated=False)
    _add_tiebreak_flags(sub)
    sub.set_defaults(func=cmd_parse)

    sub = commands.add_parser("gap", help="branching gap of two prediction files")
    sub.add_argument("--treebank", type=Path, required=True)
    sub.add_argument("--treebank-lprime", type=Path, default=None,
                     help="gold for the reversed side (default: mirror of --treebank)")
    sub.add_argument("--pred", type=Path, required=True)
    sub.add_argument("--pred-lprime", type=Path, required=True)
    _add_eval_flags(sub)
    sub.set_defaults(func=cmd_gap)

    sub = commands.add_parser("random-parser-bias",
                              help="branching gap of a parsing algorithm on random scores")
    sub.add_argument("--algo", choices=sorted(_ALGO_NAMES), required=True)
    sub.add_argument("--treebank", type=Path, required=True)
    sub.add_argument("--matrix-kind", choices=[FULL, PREFIX], default=None,
                     help="override the algorithm's native random-matrix support")
    sub.add_argument("--uniform-catalan", action="store_true")
    sub.add_argument("--exclude-diagonal", action="store_true")
    _add_random_flags(sub, replicated=True)
    _add_tiebreak_flags(sub)
    _add_eval_flags(sub)
    sub.set_defaults(func=cmd_random_parser_bias)

    sub = commands.add_parser("random-feature-bias",
                              help="branching gap of a feature definition on randomized weights")
    sub.add_argument("--feature", choices=["hidden", "prefix-attn", "full-attn"],
                     required=True)
    sub.add_argument("--treebank", type=Path, required=True)
    sub.add_argument("--dim", type=int, default=768,
                     help="dimensionality of randomized hidden vectors (default: 768)")
    sub.add_argument("--hidden-metric", choices=["l2", "cosine"], default="l2")
    sub.add_argument("--attn-metric", choices=["jsd", "l2"], default="jsd")
    _add_random_flags(sub, replicated=True)
    _add_tiebreak_flags(sub)
    _add_eval_flags(sub)
    sub.set_defaults(func=cmd_random_feature_bias)

    sub = commands.add_parser("lm-audit",
                              help="branching gap of extracted features through hidden+dist")
    sub.add_argument("--treebank", type=Path, required=True)
    sub.add_argument("--treebank-lprime", type=Path, default=None)
    sub.add_argument("--features", type=Path, required=True)
    sub.add_argument("--features-lprime", type=Path, required=True)
    sub.add_argument("--layer", default="last")
    sub.add_argument("--metric", choices=["l2", "cosine"], default="l2")
    _add_tiebreak_flags(sub)
    _add_eval_flags(sub)
    sub.set_defaults(func=cmd_lm_audit)

    sub = commands.add_parser("tune", help="grid-search pipeline hyper-parameters")
    sub.add_argument("--treebank", type=Path, required=True,
                     help="validation treebank")
    sub.add_argument("--features", type=Path, required=True)
    sub.add_argument("--pipeline", choices=["hidden-dist", "attn-dist"], required=True)
    sub.add_argument("--layers", default=None, help="comma-separated layers or 'all'")
    sub.add_argument("--heads", default=None, help="comma-separated heads or 'all'")
    sub.add_argument("--metrics", default=None, help="comma-separated metrics")
    _add_tiebreak_flags(sub)
    _add_eval_flags(sub)
    sub.set_defaults(func=cmd_tune)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = list(argv) if argv is not None else sys.argv[1:]
    try:
        return args.func(args)
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except (BranchGapError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
