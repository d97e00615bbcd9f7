"""Random tree generators shared across the test modules."""

from __future__ import annotations

import numpy as np

from branchgap.trees import Corpus, Internal, Leaf, Sentence, Token, Tree, leaves


def random_nary_tree(rng: np.random.Generator, n: int) -> Tree:
    """Random ordered tree over n tokens, arity 2-4 (1 token -> leaf)."""

    def build(lo: int, hi: int) -> Tree:
        if lo == hi:
            return Leaf(Token(f"w{lo}", lo))
        size = hi - lo + 1
        arity = int(rng.integers(2, min(size, 4) + 1))
        cuts = sorted(rng.choice(np.arange(lo + 1, hi + 1), size=arity - 1, replace=False))
        bounds = [lo] + [int(c) for c in cuts] + [hi + 1]
        return Internal(tuple(build(bounds[i], bounds[i + 1] - 1) for i in range(arity)))

    return build(0, n - 1)


def random_binary_tree(rng: np.random.Generator, n: int) -> Tree:
    def build(lo: int, hi: int) -> Tree:
        if lo == hi:
            return Leaf(Token(f"w{lo}", lo))
        k = int(rng.integers(lo, hi))
        return Internal((build(lo, k), build(k + 1, hi)))

    return build(0, n - 1)


def corpus_of(trees) -> Corpus:
    return Corpus(
        tuple(
            Sentence(f"s{i}", tuple(leaves(t)), t) for i, t in enumerate(trees)
        )
    )
