"""Synthetic right-branching-skewed sample treebank.

Licensed treebanks cannot ship with the package, so experiments and the
acceptance suite run against a generated corpus whose gold trees lean
right-branching the way English does: a rightward spine with small (one to
three word) constituents hanging off it on the left, an occasional
left-branching step, and an occasional uniformly random split.  Generation
is fully seeded, so the bundled file can be reproduced byte for byte.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import ConfigError
from .trees import Corpus, Internal, Leaf, Sentence, Token, Tree, leaves

__all__ = ["generate_sample_corpus", "DEFAULT_SENTENCES", "DEFAULT_SEED"]

DEFAULT_SENTENCES = 500
DEFAULT_SEED = 42

# probability of a left constituent of 1, 2 or 3 words on a right-branching step
_CHUNK_PROBS = (0.60, 0.25, 0.15)

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"]
_NUCLEI = ["a", "e", "i", "o", "u"]


def _vocabulary(size: int = 200) -> list[str]:
    words = []
    for first, second in itertools.product(
        itertools.product(_ONSETS, _NUCLEI), itertools.product(_ONSETS, _NUCLEI)
    ):
        words.append("".join(first) + "".join(second))
        if len(words) == size:
            return words
    return words


def _skewed_tree(
    tokens: list[str],
    rng: np.random.Generator,
    p_uniform: float,
    p_right_peel: float,
) -> Tree:
    chunk_sizes = np.arange(1, len(_CHUNK_PROBS) + 1)

    def build(i: int, j: int) -> Tree:
        if i == j:
            return Leaf(Token(tokens[i], i))
        draw = rng.random()
        if draw < p_uniform:
            k = int(rng.integers(i, j))
        elif draw < p_uniform + p_right_peel:
            k = j - 1
        else:
            chunk = int(rng.choice(chunk_sizes, p=_CHUNK_PROBS))
            k = min(i + chunk - 1, j - 1)
        return Internal((build(i, k), build(k + 1, j)))

    return build(0, len(tokens) - 1)


def generate_sample_corpus(
    sentences: int = DEFAULT_SENTENCES,
    seed: int = DEFAULT_SEED,
    min_len: int = 3,
    max_len: int = 22,
    p_uniform: float = 0.10,
    p_right_peel: float = 0.10,
) -> Corpus:
    """Generate a corpus with right-branching-skewed binary gold trees."""
    if sentences < 1:
        raise ConfigError("need at least one sentence")
    if not 2 <= min_len <= max_len:
        raise ConfigError("need 2 <= min_len <= max_len")
    if p_uniform < 0 or p_right_peel < 0 or p_uniform + p_right_peel > 1:
        raise ConfigError("split probabilities must be non-negative and sum to <= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    vocab = _vocabulary()
    out = []
    for idx in range(sentences):
        n = int(rng.integers(min_len, max_len + 1))
        tokens = [vocab[int(w)] for w in rng.integers(0, len(vocab), size=n)]
        tree = _skewed_tree(tokens, rng, p_uniform, p_right_peel)
        out.append(Sentence(f"s{idx}", tuple(leaves(tree)), tree))
    return Corpus(tuple(out))
