"""Branching-bias measurement for constituency-tree extraction pipelines."""

from .errors import (
    BracketParseError,
    BranchGapError,
    ConfigError,
    InvariantError,
    ValidationError,
)
from .evaluation import (
    EvalOptions,
    F1Result,
    GapReport,
    branching_gap,
    f1_score,
    run_lm_audit,
    run_random_feature_bias,
    run_random_parser_bias,
    tune_grid,
)
from .features import (
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
from .parsers import (
    TieBreak,
    oracle_best_tree,
    parse_attnspan,
    parse_baseline,
    parse_dist,
    parse_mart,
)
from .trees import (
    Corpus,
    Internal,
    Leaf,
    Sentence,
    Token,
    Tree,
    mirror_corpus,
    mirror_tree,
    read_bracketed,
    spans,
    to_bracketed,
    write_bracketed,
)

__version__ = "0.1.0"
