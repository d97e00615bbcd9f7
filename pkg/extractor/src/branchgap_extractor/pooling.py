"""Subword-to-word alignment pooling.

Words are pooled from their subword pieces: hidden vectors by mean, attention
by summing target columns and averaging source rows, with rows renormalized
to probability vectors afterwards.  Prefix (causal) matrices get their upper
triangle zeroed before renormalization so the constraint is exact in the
emitted numbers, not just up to float noise.
"""

from __future__ import annotations

import sys

import numpy as np


class AlignmentError(Exception):
    pass


def word_groups(word_ids: list[int | None], words: list[str]) -> list[list[int]]:
    """Subword positions per word; special tokens (word id None) drop out."""
    groups: list[list[int]] = [[] for _ in words]
    for position, wid in enumerate(word_ids):
        if wid is not None:
            groups[wid].append(position)
    for idx, group in enumerate(groups):
        if not group:
            raise AlignmentError(
                f"tokenizer produced zero subwords for token {words[idx]!r} (word {idx})"
            )
    return groups


def pool_hidden(hidden: np.ndarray, groups: list[list[int]]) -> np.ndarray:
    """(S, d) subword vectors -> (n, d) word vectors by mean over pieces."""
    hidden = np.asarray(hidden, dtype=np.float64)
    return np.stack([hidden[group].mean(axis=0) for group in groups])


def pool_attention(
    attention: np.ndarray,
    groups: list[list[int]],
    kind: str,
    sent_id: str = "?",
) -> np.ndarray:
    """(S, S) subword attention -> (n, n) row-stochastic word attention."""
    attention = np.asarray(attention, dtype=np.float64)
    n = len(groups)
    by_target = np.stack(
        [attention[:, group].sum(axis=1) for group in groups], axis=1
    )
    pooled = np.stack([by_target[group].mean(axis=0) for group in groups])
    if kind == "prefix" and n > 1:
        pooled[np.triu_indices(n, k=1)] = 0.0
    sums = pooled.sum(axis=1)
    for row in np.flatnonzero(sums == 0.0):
        # all mass sat on special tokens; fall back to uniform over support
        support = row + 1 if kind == "prefix" else n
        pooled[row, :support] = 1.0 / support
        sums[row] = 1.0
        print(
            f"warning: {sent_id}: attention row {row} had no mass on words, "
            "renormalized to uniform",
            file=sys.stderr,
        )
    return pooled / sums[:, None]
