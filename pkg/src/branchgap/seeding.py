"""Deterministic seed derivation.

Every random draw in the toolkit comes from a generator seeded through
:func:`derive_seed`, which hashes a base seed together with string tags
(replicate ordinal, corpus side, sentence id).  Python's builtin ``hash`` is
process-salted, so a keyed blake2b digest is used instead; the derivation is
stable across runs, machines, and sentence processing order, which is what
makes ``--threads N`` result-invariant.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(base: int, *tags: str | int) -> int:
    """Derive a 64-bit seed from ``base`` and an ordered list of tags."""
    key = "|".join(str(part) for part in ("branchgap", base, *tags))
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def rng_from(base: int, *tags: str | int) -> np.random.Generator:
    """A fresh PCG64 generator for the derived seed."""
    return np.random.Generator(np.random.PCG64(derive_seed(base, *tags)))
