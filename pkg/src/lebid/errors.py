"""Exception hierarchy shared by the whole package.

Two failure families matter to callers: bad inputs (validation) and
numerical breakdown (e.g. a Cholesky factorization failing). The CLI maps
them to exit codes 1 and 2 respectively.
"""

from __future__ import annotations

__all__ = ["LebidError", "ValidationError", "NumericError"]


class LebidError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(LebidError):
    """Invalid user input: broken invariant, malformed file, bad argument."""


class NumericError(LebidError):
    """Numerical failure: non-PD matrix, unreachable band, non-monotone EM."""
