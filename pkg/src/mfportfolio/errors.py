"""Exception and warning types raised by the solvers."""

from __future__ import annotations

from typing import Optional


class PortfolioError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PortfolioError, ValueError):
    """Input data violates a structural or numerical invariant."""

    def __init__(self, message: str, period: Optional[int] = None):
        self.period = period
        if period is not None:
            message = f"period {period}: {message}"
        super().__init__(message)


class InfeasibleMarketError(ValidationError):
    """B_t >= 1 for some period, so s_t^2 (1 - B_t) > 0 fails."""


class SingularUpdateError(PortfolioError, ArithmeticError):
    """Rank-one update with 1 + v' A^-1 u numerically zero."""


class DegenerateRecursionError(PortfolioError, ArithmeticError):
    """A recursion denominator vanished or changed sign.

    For the bankruptcy Lagrangian this means the relaxed problem is
    unbounded above at the given multipliers, i.e. H(omega) = +inf.
    """

    def __init__(self, message: str, period: Optional[int] = None):
        self.period = period
        super().__init__(message)


class SpecError(PortfolioError, ValueError):
    """An objective definition is malformed."""


class ContractError(PortfolioError, ValueError):
    """An operation was called outside its supported input class."""


class OptimalityViolation(PortfolioError, AssertionError):
    """A perturbed policy beat the supposedly optimal one."""

    def __init__(self, message: str, witness=None):
        self.witness = witness
        super().__init__(message)


class MarketWarning(UserWarning):
    """Inputs accepted but outside the usual economic assumptions."""


class InputFileError(PortfolioError, ValueError):
    """A JSON input file is unreadable or misses a required field."""

    def __init__(self, message: str, path=None, field: Optional[str] = None, line: Optional[int] = None):
        self.path, self.field, self.line = path, field, line
        where = [str(path)] if path is not None else []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
