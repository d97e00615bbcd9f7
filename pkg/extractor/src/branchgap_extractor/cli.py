"""Command line: extract features from a checkpoint for one corpus side."""

from __future__ import annotations

import argparse
import sys

from .extract import ExtractError, ExtractionJob, run_job
from .pooling import AlignmentError
from .treebank import TreebankError


def _int_list(value: str) -> tuple[int, ...] | None:
    """Parse 'all', '0-3', or '0,2,5' into layer/head indices."""
    if value == "all":
        return None
    out: list[int] = []
    for part in value.split(","):
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="branchgap-extract",
        description="Dump word-aligned hidden states, attention matrices, and "
        "perturbed-masking impact matrices into the branchgap feature format.",
    )
    parser.add_argument("--model", required=True,
                        help="checkpoint path or identifier (loaded with AutoModel)")
    parser.add_argument("--treebank", required=True, help="bracketed treebank file")
    parser.add_argument("--side", choices=["original", "reversed"], default="original",
                        help="reversed = reverse word order before tokenization")
    parser.add_argument("--kinds", default="hidden,attention",
                        help="comma-separated subset of hidden,attention,impact")
    parser.add_argument("--layers", type=_int_list, default="all",
                        help="'all', '0-11', or '0,4,8'")
    parser.add_argument("--heads", type=_int_list, default="all",
                        help="'all', '0-11', or '0,4,8'")
    parser.add_argument("--attention-kind", choices=["auto", "full", "prefix"],
                        default="auto",
                        help="override causal-model detection (default: auto)")
    parser.add_argument("--impact-layer", type=int, default=None,
                        help="hidden layer for impact distances (default: top layer)")
    parser.add_argument("--keep-punct", action="store_true",
                        help="keep punctuation-only leaves when reading the treebank")
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--out", required=True, help="output feature file (JSON Lines)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    layers = args.layers if not isinstance(args.layers, str) else _int_list(args.layers)
    heads = args.heads if not isinstance(args.heads, str) else _int_list(args.heads)
    try:
        job = ExtractionJob(
            model=args.model,
            treebank=args.treebank,
            out=args.out,
            side=args.side,
            kinds=tuple(k.strip() for k in args.kinds.split(",") if k.strip()),
            layers=layers,
            heads=heads,
            keep_punct=args.keep_punct,
            attention_kind=args.attention_kind,
            impact_layer=args.impact_layer,
            batch_size=args.batch_size,
            device=args.device,
        )
        count = run_job(job)
    except (ExtractError, AlignmentError, TreebankError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {count} records to {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
