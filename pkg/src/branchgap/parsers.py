"""Top-down tree builders over split scores, plus baselines and an oracle.

Three score-driven algorithms share the same recursive scheme: pick the best
split point of the current span, recurse on both halves.  They differ in how
a split is scored:

* ``dist``     -- maximize the score of the gap itself (one number per
  adjacent word pair).
* ``mart``     -- maximize within-block minus between-block mean of an
  n x n matrix (block contrast).
* ``attnspan`` -- minimize cross-gap attention mass, normalized by the
  squared block area, which systematically favors balanced splits.

All builders return full binary trees with exactly n-1 internal nodes.
Mirroring the input (reversing a score sequence; flipping a matrix along
both axes) mirrors the output tree whenever no ties occur.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, InvariantError
from .trees import Internal, Leaf, Token, Tree

__all__ = [
    "TieBreak",
    "BASELINES",
    "ALGORITHMS",
    "parse_dist",
    "parse_mart",
    "parse_attnspan",
    "parse_baseline",
    "mart_objective",
    "attnspan_objective",
    "enumerate_bracketings",
    "span_standardized",
    "tree_objective",
    "oracle_best_tree",
    "oracle_objectives",
    "ORACLE_MAX_WORDS",
]

BASELINES = ("right_b", "left_b", "random_tree", "balanced")
ALGORITHMS = ("dist", "mart", "attnspan") + BASELINES

ORACLE_MAX_WORDS = 12


@dataclass(frozen=True)
class TieBreak:
    """How equal-scoring split points are resolved; recorded in reports."""

    mode: str = "random"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("leftmost", "rightmost", "random"):
            raise ConfigError(f"unknown tiebreak mode {self.mode!r}")


def _tiebreak_rng(tiebreak: TieBreak, rng: np.random.Generator | None) -> np.random.Generator | None:
    if tiebreak.mode != "random":
        return None
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(tiebreak.seed))
    return rng


def _pick(positions: Sequence[int], scores: np.ndarray, tiebreak: TieBreak,
          rng: np.random.Generator | None) -> int:
    """Index (into ``positions``) of the maximal score, ties per tiebreak."""
    best = scores.max()
    ties = np.flatnonzero(scores == best)
    if ties.size == 1 or tiebreak.mode == "leftmost":
        return positions[ties[0]]
    if tiebreak.mode == "rightmost":
        return positions[ties[-1]]
    assert rng is not None
    return positions[ties[rng.integers(ties.size)]]


def _leaf(tokens: Sequence[str], i: int) -> Leaf:
    return Leaf(Token(tokens[i], i))


# ---------------------------------------------------------------------------
# score-driven parsers


def parse_dist(
    tokens: Sequence[str],
    scores: np.ndarray,
    tiebreak: TieBreak = TieBreak(),
    rng: np.random.Generator | None = None,
) -> Tree:
    """Recursive argmax split on n-1 adjacent-gap scores.

    ``scores[k]`` scores the gap between words k and k+1; the span [i, j]
    splits after the highest-scoring gap in [i, j-1].
    """
    n = len(tokens)
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (max(n - 1, 0),):
        raise ConfigError(f"expected {n - 1} split scores for {n} words, got {scores.shape}")
    rng = _tiebreak_rng(tiebreak, rng)

    def build(i: int, j: int) -> Tree:
        if i == j:
            return _leaf(tokens, i)
        gaps = list(range(i, j))
        k = _pick(gaps, scores[i:j], tiebreak, rng)
        return Internal((build(i, k), build(k + 1, j)))

    return build(0, n - 1)


class _BlockSums:
    """O(1) inclusive block sums over a matrix via a 2-d prefix image."""

    def __init__(self, matrix: np.ndarray):
        n = matrix.shape[0]
        image = np.zeros((n + 1, n + 1))
        image[1:, 1:] = matrix.cumsum(axis=0).cumsum(axis=1)
        self._image = image
        self._diag = np.concatenate(([0.0], np.diagonal(matrix).cumsum()))

    def block(self, r0: int, r1: int, c0: int, c1: int) -> float:
        s = self._image
        return float(s[r1 + 1, c1 + 1] - s[r0, c1 + 1] - s[r1 + 1, c0] + s[r0, c0])

    def diagonal(self, i: int, j: int) -> float:
        return float(self._diag[j + 1] - self._diag[i])


def _check_square(matrix: np.ndarray, n: int) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (n, n):
        raise ConfigError(f"expected a {n}x{n} score matrix, got shape {matrix.shape}")
    return matrix


def mart_objective(
    matrix: np.ndarray, include_diagonal: bool = True
) -> Callable[[int, int, int], float]:
    """Split score for ``mart``: within-block minus between-block means.

    Splitting [i, j] after position k scores
    ``mean(M[i..k, i..k]) + mean(M[k+1..j, k+1..j])
    - mean(M[i..k, k+1..j]) - mean(M[k+1..j, i..k])``.
    Means keep blocks of unequal size comparable.  With
    ``include_diagonal=False`` the diagonal is excluded from within-block
    means; degenerate one-cell blocks always use the single cell value.
    """
    sums = _BlockSums(np.asarray(matrix, dtype=float))

    def within(i: int, j: int) -> float:
        size = j - i + 1
        total = sums.block(i, j, i, j)
        if include_diagonal or size == 1:
            return total / (size * size)
        return (total - sums.diagonal(i, j)) / (size * size - size)

    def score(i: int, j: int, k: int) -> float:
        p, q = k - i + 1, j - k
        cross = sums.block(i, k, k + 1, j) / (p * q) + sums.block(k + 1, j, i, k) / (p * q)
        return within(i, k) + within(k + 1, j) - cross

    return score


def attnspan_objective(matrix: np.ndarray) -> Callable[[int, int, int], float]:
    """Split score for ``attnspan`` (higher is better, i.e. minus the gap mass).

    The cross-gap attention between the two blocks of a split is summed in
    both directions and divided by the squared block area
    ``((k-i+1) * (j-k))**2``: the per-pair mean further normalized by the
    pair count.  The extra normalization means a constant matrix already
    prefers the central split, the balance tendency this algorithm shows.
    """
    sums = _BlockSums(np.asarray(matrix, dtype=float))

    def score(i: int, j: int, k: int) -> float:
        p, q = k - i + 1, j - k
        cross = sums.block(i, k, k + 1, j) + sums.block(k + 1, j, i, k)
        return -cross / float(p * q) ** 2

    return score


def _parse_matrix(
    tokens: Sequence[str],
    split_score: Callable[[int, int, int], float],
    tiebreak: TieBreak,
    rng: np.random.Generator | None,
) -> Tree:
    rng = _tiebreak_rng(tiebreak, rng)

    def build(i: int, j: int) -> Tree:
        if i == j:
            return _leaf(tokens, i)
        gaps = list(range(i, j))
        scores = np.array([split_score(i, j, k) for k in gaps])
        k = _pick(gaps, scores, tiebreak, rng)
        return Internal((build(i, k), build(k + 1, j)))

    return build(0, len(tokens) - 1)


def parse_mart(
    tokens: Sequence[str],
    matrix: np.ndarray,
    tiebreak: TieBreak = TieBreak(),
    rng: np.random.Generator | None = None,
    include_diagonal: bool = True,
) -> Tree:
    """Top-down block-contrast parser over an n x n score matrix."""
    matrix = _check_square(matrix, len(tokens))
    return _parse_matrix(tokens, mart_objective(matrix, include_diagonal), tiebreak, rng)


def parse_attnspan(
    tokens: Sequence[str],
    matrix: np.ndarray,
    tiebreak: TieBreak = TieBreak(),
    rng: np.random.Generator | None = None,
) -> Tree:
    """Top-down minimal-cross-attention parser over an attention matrix."""
    matrix = _check_square(matrix, len(tokens))
    return _parse_matrix(tokens, attnspan_objective(matrix), tiebreak, rng)


# ---------------------------------------------------------------------------
# baselines


def _catalan(m: int) -> int:
    return comb(2 * m, m) // (m + 1)


def parse_baseline(
    tokens: Sequence[str],
    kind: str,
    rng: np.random.Generator | None = None,
    uniform_catalan: bool = False,
) -> Tree:
    """Structure-only baselines: right/left chains, balanced, random trees.

    ``random_tree`` draws a uniform split point recursively, which is not
    uniform over bracketings; pass ``uniform_catalan=True`` for an exactly
    uniform draw (left-size chosen with Catalan weights).
    """
    n = len(tokens)
    if kind not in BASELINES:
        raise ConfigError(f"unknown baseline {kind!r}")
    if kind == "random_tree" and rng is None:
        raise ConfigError("random_tree baseline needs a random generator")

    def build(i: int, j: int) -> Tree:
        if i == j:
            return _leaf(tokens, i)
        size = j - i + 1
        if kind == "right_b":
            k = i
        elif kind == "left_b":
            k = j - 1
        elif kind == "balanced":
            k = i + (size + 1) // 2 - 1
        elif uniform_catalan:
            weights = np.array(
                [_catalan(a - 1) * _catalan(size - a - 1) for a in range(1, size)],
                dtype=float,
            )
            k = i + int(rng.choice(size - 1, p=weights / weights.sum()))
        else:
            k = int(rng.integers(i, j))
        return Internal((build(i, k), build(k + 1, j)))

    return build(0, n - 1)


# ---------------------------------------------------------------------------
# exhaustive oracle


def enumerate_bracketings(tokens: Sequence[str]) -> Iterator[Tree]:
    """All binary bracketings over the tokens (Catalan(n-1) trees)."""
    n = len(tokens)
    if n > ORACLE_MAX_WORDS:
        raise ConfigError(
            f"refusing exhaustive enumeration for {n} words (limit {ORACLE_MAX_WORDS})"
        )

    def gen(i: int, j: int) -> Iterator[Tree]:
        if i == j:
            yield _leaf(tokens, i)
            return
        for k in range(i, j):
            for left in gen(i, k):
                for right in gen(k + 1, j):
                    yield Internal((left, right))

    return gen(0, n - 1)


def span_standardized(
    split_score: Callable[[int, int, int], float]
) -> Callable[[int, int, int], float]:
    """Decision-quality version of a split score: z-scored within each span.

    Summing raw split scores across a tree is degenerate: the unnormalized
    cross masses telescope to a tree-independent constant, and normalized
    ones are dominated by the many small spans at the bottom.  Scoring each
    split relative to the alternatives at its own span (in sd units, forced
    splits contributing zero) makes tree totals comparable, which is what
    the oracle needs to judge a greedy parser's decisions.
    """
    cache: dict[tuple[int, int], tuple[float, float]] = {}

    def standardized(i: int, j: int, k: int) -> float:
        if (i, j) not in cache:
            values = np.array([split_score(i, j, kk) for kk in range(i, j)])
            cache[(i, j)] = (float(values.mean()), float(values.std()))
        mean, sd = cache[(i, j)]
        if sd == 0.0:
            return 0.0
        return (split_score(i, j, k) - mean) / sd

    return standardized


def tree_objective(tree: Tree, split_score: Callable[[int, int, int], float]) -> float:
    """Total split score of a binary tree (sum over its internal nodes)."""

    def rec(node: Tree) -> tuple[int, int, float]:
        if isinstance(node, Leaf):
            return node.token.index, node.token.index, 0.0
        if len(node.children) != 2:
            raise InvariantError("objective is defined for binary trees only")
        li, lj, ls = rec(node.children[0])
        ri, rj, rs = rec(node.children[1])
        return li, rj, ls + rs + split_score(li, rj, lj)

    return rec(tree)[2]


def oracle_objectives(
    split_score: Callable[[int, int, int], float], tokens: Sequence[str]
) -> np.ndarray:
    """Objective of every bracketing, in enumeration order."""
    return np.array(
        [tree_objective(t, split_score) for t in enumerate_bracketings(tokens)]
    )


def oracle_best_tree(
    split_score: Callable[[int, int, int], float], tokens: Sequence[str]
) -> tuple[Tree, float]:
    """Exhaustively best bracketing and its objective (first best on ties)."""
    best_tree: Tree | None = None
    best = -np.inf
    for tree in enumerate_bracketings(tokens):
        value = tree_objective(tree, split_score)
        if value > best:
            best, best_tree = value, tree
    assert best_tree is not None
    return best_tree, best
