"""Unlabeled constituency trees, bracketed treebank I/O, and corpus mirroring.

Trees are immutable: a sentence is either a single :class:`Leaf` or an
:class:`Internal` node with at least two children.  Reading a bracketed
treebank discards labels, removes punctuation-only leaves (by default) and
collapses unary chains, so every surviving internal node contributes exactly
one word span.

A corpus can be mirrored: word order reversed per sentence, gold trees
reversed recursively.  Mirroring a right-branching treebank yields a
left-branching one, which is the comparison the branching-gap measurement is
built on.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Union

from .errors import BracketParseError, InvariantError, ValidationError

__all__ = [
    "Token",
    "Leaf",
    "Internal",
    "Tree",
    "Sentence",
    "Corpus",
    "leaves",
    "leaf_count",
    "internal_count",
    "is_binary",
    "tree_span",
    "spans",
    "mirror_tree",
    "mirror_corpus",
    "validate_tree",
    "to_bracketed",
    "parse_tree",
    "read_bracketed",
    "write_bracketed",
]


@dataclass(frozen=True)
class Token:
    text: str
    index: int


@dataclass(frozen=True)
class Leaf:
    token: Token


@dataclass(frozen=True)
class Internal:
    children: tuple["Tree", ...]


Tree = Union[Leaf, Internal]


@dataclass(frozen=True)
class Sentence:
    sent_id: str
    tokens: tuple[Token, ...]
    gold: Tree

    @property
    def texts(self) -> tuple[str, ...]:
        return tuple(t.text for t in self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[Sentence, ...]
    # sentences dropped during reading (empty after punctuation stripping);
    # informational only, excluded from equality so round trips compare clean
    skipped: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        seen = set()
        for sent in self.sentences:
            if sent.sent_id in seen:
                raise ValidationError(f"duplicate sentence id {sent.sent_id!r}")
            seen.add(sent.sent_id)
            if leaf_count(sent.gold) != len(sent.tokens):
                raise InvariantError(
                    f"sentence {sent.sent_id!r}: gold tree has {leaf_count(sent.gold)} "
                    f"leaves but {len(sent.tokens)} tokens"
                )

    def __iter__(self) -> Iterator[Sentence]:
        return iter(self.sentences)

    def __len__(self) -> int:
        return len(self.sentences)


# ---------------------------------------------------------------------------
# basic tree queries


def leaves(tree: Tree) -> list[Token]:
    """Tokens of ``tree`` in left-to-right order."""
    if isinstance(tree, Leaf):
        return [tree.token]
    out: list[Token] = []
    for child in tree.children:
        out.extend(leaves(child))
    return out


def leaf_count(tree: Tree) -> int:
    if isinstance(tree, Leaf):
        return 1
    return sum(leaf_count(c) for c in tree.children)


def internal_count(tree: Tree) -> int:
    if isinstance(tree, Leaf):
        return 0
    return 1 + sum(internal_count(c) for c in tree.children)


def is_binary(tree: Tree) -> bool:
    if isinstance(tree, Leaf):
        return True
    return len(tree.children) == 2 and all(is_binary(c) for c in tree.children)


def tree_span(tree: Tree) -> tuple[int, int]:
    """Inclusive (start, end) word-index interval covered by ``tree``."""
    if isinstance(tree, Leaf):
        return tree.token.index, tree.token.index
    return tree_span(tree.children[0])[0], tree_span(tree.children[-1])[1]


def spans(tree: Tree, include_whole: bool = False) -> frozenset[tuple[int, int]]:
    """Spans of all internal nodes covering >= 2 words.

    Single-word spans never appear; the whole-sentence span is included only
    when ``include_whole`` is set.
    """
    whole = tree_span(tree)
    out: set[tuple[int, int]] = set()

    def visit(node: Tree) -> None:
        if isinstance(node, Leaf):
            return
        lo, hi = tree_span(node)
        if hi > lo and (include_whole or (lo, hi) != whole):
            out.add((lo, hi))
        for child in node.children:
            visit(child)

    visit(tree)
    return frozenset(out)


def validate_tree(tree: Tree) -> None:
    """Check the structural invariants; raise :class:`InvariantError` if broken."""
    toks = leaves(tree)
    for pos, tok in enumerate(toks):
        if tok.index != pos:
            raise InvariantError(
                f"leaf indices not contiguous: position {pos} holds index {tok.index}"
            )
        if not tok.text:
            raise InvariantError(f"empty token text at index {pos}")

    def visit(node: Tree) -> None:
        if isinstance(node, Leaf):
            return
        if len(node.children) < 2:
            raise InvariantError("internal node with fewer than 2 children")
        for child in node.children:
            visit(child)

    visit(tree)


# ---------------------------------------------------------------------------
# mirroring


def mirror_tree(tree: Tree) -> Tree:
    """Reverse child order recursively and remap leaf index i -> n-1-i."""
    n = leaf_count(tree)

    def rec(node: Tree) -> Tree:
        if isinstance(node, Leaf):
            return Leaf(Token(node.token.text, n - 1 - node.token.index))
        return Internal(tuple(rec(c) for c in reversed(node.children)))

    return rec(tree)


def mirror_corpus(corpus: Corpus) -> Corpus:
    """Reverse word order of every sentence and mirror its gold tree.

    Sentence ids are preserved, so the mirrored corpus stays aligned with the
    original: both sides differ only in word order.
    """
    mirrored = []
    for sent in corpus:
        n = len(sent.tokens)
        tokens = tuple(Token(sent.tokens[n - 1 - i].text, i) for i in range(n))
        mirrored.append(Sentence(sent.sent_id, tokens, mirror_tree(sent.gold)))
    return Corpus(tuple(mirrored))


# ---------------------------------------------------------------------------
# bracketed reading

_TOKEN_RE = re.compile(r"\(|\)|[^()\s]+")

# PTB / CTB / SPMRL part-of-speech tags that mark pure punctuation
_PUNCT_TAGS = {
    ",", ".", ":", "``", "''", "-LRB-", "-RRB-", "-LSB-", "-RSB-",
    "-LCB-", "-RCB-", "PU", "PUNCT", "$,", "$.", "$(",
}
_EXTRA_PUNCT_CHARS = set("`´’‘“”…")


def _is_punct_text(text: str) -> bool:
    return bool(text) and all(
        unicodedata.category(ch).startswith("P") or ch in _EXTRA_PUNCT_CHARS
        for ch in text
    )


class _RawLeaf:
    __slots__ = ("word", "pos")

    def __init__(self, word: str, pos: str | None):
        self.word = word
        self.pos = pos


class _RawNode:
    __slots__ = ("label", "children")

    def __init__(self, label: str | None, children: list):
        self.label = label
        self.children = children


def _lex(lines: Iterable[str]) -> Iterator[tuple[str, int]]:
    for lineno, line in enumerate(lines, start=1):
        if line.lstrip().startswith("#"):
            continue
        for match in _TOKEN_RE.finditer(line):
            yield match.group(), lineno


def _parse_raw(lines: Iterable[str], labeled: bool) -> Iterator[tuple[_RawNode | _RawLeaf, int]]:
    """Yield (raw tree, start line) per top-level bracketing in the stream."""
    # each frame: [label, children, start_lineno]
    stack: list[list] = []
    for tok, lineno in _lex(lines):
        if tok == "(":
            stack.append([None, [], lineno])
        elif tok == ")":
            if not stack:
                raise BracketParseError("unbalanced ')'", lineno)
            label, children, start = stack.pop()
            if not children:
                raise BracketParseError("empty constituent", start)
            node = _RawNode(label, children)
            if stack:
                stack[-1][1].append(node)
            else:
                yield node, start
        else:
            if not stack:
                if labeled:
                    raise BracketParseError(f"token {tok!r} outside brackets", lineno)
                yield _RawLeaf(tok, None), lineno
            elif labeled and stack[-1][0] is None and not stack[-1][1]:
                stack[-1][0] = tok
            else:
                stack[-1][1].append(_RawLeaf(tok, stack[-1][0] if labeled else None))
    if stack:
        raise BracketParseError("unbalanced '(': tree never closed", stack[0][2])


def _strip_punct(raw: _RawNode | _RawLeaf) -> _RawNode | _RawLeaf | None:
    if isinstance(raw, _RawLeaf):
        if raw.pos is not None and (raw.pos in _PUNCT_TAGS or _is_punct_text(raw.pos)):
            return None
        if _is_punct_text(raw.word):
            return None
        return raw
    kept = [c for c in (_strip_punct(child) for child in raw.children) if c is not None]
    if not kept:
        return None
    return _RawNode(raw.label, kept)


def _build(raw: _RawNode | _RawLeaf, counter: list[int]) -> Tree:
    """Collapse unary chains, drop labels, and assign leaf indices in order."""
    if isinstance(raw, _RawLeaf):
        index = counter[0]
        counter[0] += 1
        return Leaf(Token(raw.word, index))
    while isinstance(raw, _RawNode) and len(raw.children) == 1:
        raw = raw.children[0]
    if isinstance(raw, _RawLeaf):
        return _build(raw, counter)
    return Internal(tuple(_build(child, counter) for child in raw.children))


def parse_tree(text: str, labeled: bool = True) -> Tree:
    """Parse exactly one bracketed tree from a string (no punctuation policy)."""
    parsed = list(_parse_raw(text.splitlines(), labeled=labeled))
    if len(parsed) != 1:
        raise BracketParseError(f"expected exactly one tree, found {len(parsed)}")
    counter = [0]
    tree = _build(parsed[0][0], counter)
    validate_tree(tree)
    return tree


def read_bracketed(
    source: str | Iterable[str],
    keep_punct: bool = False,
    labeled: bool = True,
    id_prefix: str = "s",
) -> Corpus:
    """Read a bracketed treebank into a :class:`Corpus`.

    ``source`` is a string or an iterable of lines (an open file works).
    Trees may span lines and lines may hold several trees; lines starting
    with ``#`` are comments.  In labeled mode the first atom after ``(`` is a
    node label and is discarded; in unlabeled mode every atom is a word.

    Punctuation-only leaves (by preterminal tag when present, else by
    surface form) are removed unless ``keep_punct`` is set; sentences left
    empty by the removal are skipped and counted in ``Corpus.skipped``.
    """
    if isinstance(source, str):
        source = source.splitlines()
    sentences: list[Sentence] = []
    skipped = 0
    for raw, _ in _parse_raw(source, labeled=labeled):
        if not keep_punct:
            raw = _strip_punct(raw)
            if raw is None:
                skipped += 1
                continue
        counter = [0]
        tree = _build(raw, counter)
        validate_tree(tree)
        sentences.append(
            Sentence(f"{id_prefix}{len(sentences)}", tuple(leaves(tree)), tree)
        )
    return Corpus(tuple(sentences), skipped=skipped)


# ---------------------------------------------------------------------------
# bracketed writing

_LABEL = "X"


def _check_writable(text: str) -> str:
    if not text or re.search(r"[()\s]", text):
        raise ValidationError(f"token {text!r} cannot be written in bracketed form")
    return text


def to_bracketed(tree: Tree, labeled: bool = True) -> str:
    """Render a tree as a bracketed string.

    Labeled form uses the dummy label ``X`` on every internal node and wraps
    single-leaf sentences so they survive a labeled re-read; unlabeled form
    (used for prediction files) carries words only.
    """

    def rec(node: Tree) -> str:
        if isinstance(node, Leaf):
            return _check_writable(node.token.text)
        inner = " ".join(rec(c) for c in node.children)
        return f"({_LABEL} {inner})" if labeled else f"({inner})"

    if labeled and isinstance(tree, Leaf):
        return f"({_LABEL} {_check_writable(tree.token.text)})"
    return rec(tree)


def write_bracketed(corpus: Corpus, labeled: bool = True) -> str:
    """One bracketed tree per line; re-reading yields an equal corpus."""
    return "".join(to_bracketed(s.gold, labeled=labeled) + "\n" for s in corpus)
