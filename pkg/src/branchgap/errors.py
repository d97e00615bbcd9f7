"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: user-facing input/config problems
(everything except :class:`InvariantError`) exit with 2, violated internal
invariants exit with 3.
"""

from __future__ import annotations


class BranchGapError(Exception):
    """Base class for all errors raised by this package."""


class BracketParseError(BranchGapError):
    """Malformed bracketed-tree input."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class ValidationError(BranchGapError):
    """Data that parses but violates a declared invariant (shapes, row sums, ids)."""


class ConfigError(BranchGapError):
    """Incompatible or incomplete configuration of an operation."""


class InvariantError(BranchGapError):
    """An internal consistency check failed; indicates a bug, not bad input."""
