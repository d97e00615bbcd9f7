"""Minimal bracketed-treebank tokenizer.

The extractor only needs word sequences, but they must match what the
evaluation side sees token for token, so the reading conventions (labels,
comment lines, punctuation stripping by preterminal tag or surface form)
mirror the consumer's defaults exactly.
"""

from __future__ import annotations

import re
import unicodedata
from typing import Iterable, Iterator


class TreebankError(Exception):
    pass


_TOKEN_RE = re.compile(r"\(|\)|[^()\s]+")

_PUNCT_TAGS = {
    ",", ".", ":", "``", "''", "-LRB-", "-RRB-", "-LSB-", "-RSB-",
    "-LCB-", "-RCB-", "PU", "PUNCT", "$,", "$.", "$(",
}
_EXTRA_PUNCT_CHARS = set("`´’‘“”…")


def _is_punct(text: str) -> bool:
    return bool(text) and all(
        unicodedata.category(ch).startswith("P") or ch in _EXTRA_PUNCT_CHARS
        for ch in text
    )


def read_sentences(lines: Iterable[str], keep_punct: bool = False) -> Iterator[list[str]]:
    """Yield the word sequence of every tree in a bracketed treebank stream.

    Sentences left empty by punctuation stripping are skipped, matching the
    consumer's sentence ids.
    """
    stack: list[list] = []  # [label, has_children] per open bracket
    words: list[str] = []
    opened_at = None
    for lineno, line in enumerate(lines, start=1):
        if line.lstrip().startswith("#"):
            continue
        for match in _TOKEN_RE.finditer(line):
            tok = match.group()
            if tok == "(":
                if not stack:
                    opened_at = lineno
                stack.append([None, False])
            elif tok == ")":
                if not stack:
                    raise TreebankError(f"line {lineno}: unbalanced ')'")
                stack.pop()
                if stack:
                    stack[-1][1] = True
                elif words:
                    yield words
                    words = []
                else:
                    words = []
            else:
                if not stack:
                    raise TreebankError(f"line {lineno}: token {tok!r} outside brackets")
                if stack[-1][0] is None and not stack[-1][1]:
                    stack[-1][0] = tok
                    continue
                stack[-1][1] = True
                pos = stack[-1][0]
                punct = (pos is not None and (pos in _PUNCT_TAGS or _is_punct(pos))) or _is_punct(tok)
                if keep_punct or not punct:
                    words.append(tok)
    if stack:
        raise TreebankError(f"line {opened_at}: unbalanced '(': tree never closed")
