"""
Market model and per-period linear algebra.

A period is described by the riskless gross return ``s_t`` and the first two
moments of the excess return vector ``P_t = e_t - s_t 1``.  Every solver in
the package only ever needs two derived quantities per period:

- ``K_t = E(P P')^-1 E(P)``    (the common direction of all optimal policies)
- ``B_t = E(P)' K_t``          (scalar in [0, 1) measuring the opportunity set)

plus the rank-one identities that turn inverses of ``E(PP') - c E(P)E(P)'``
into scalar multiples of ``K_t``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Sequence, Tuple

import numpy as np
from scipy import linalg

from .errors import (
    DegenerateRecursionError,
    InfeasibleMarketError,
    MarketWarning,
    SingularUpdateError,
    ValidationError,
)

__all__ = [
    "AssetMoments",
    "MarketData",
    "PeriodDerived",
    "checked_cholesky",
    "covinv_times_mean",
    "derive_period",
    "excess_moments",
    "rank_one_denominator",
    "rank_one_solve_mean",
    "example_market",
    "sherman_morrison",
]

PIVOT_RTOL = 1e-10
B_MAX = 1.0 - 1e-12
SYM_RTOL = 1e-10


def checked_cholesky(a: np.ndarray, what: str = "matrix", period=None) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Fails with :class:`ValidationError` when the matrix is not symmetric or a
    pivot falls below ``1e-10 * max(diag)``.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{what} must be square, got shape {a.shape}", period)
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{what} has non-finite entries", period)
    scale = max(float(np.max(np.abs(np.diag(a)))), np.finfo(float).tiny)
    if np.max(np.abs(a - a.T)) > SYM_RTOL * scale:
        raise ValidationError(f"{what} is not symmetric", period)
    try:
        low = np.linalg.cholesky(0.5 * (a + a.T))
    except np.linalg.LinAlgError:
        raise ValidationError(f"{what} is not positive definite", period) from None
    if np.min(np.diag(low)) ** 2 <= PIVOT_RTOL * scale:
        raise ValidationError(f"{what} is not positive definite (pivot below tolerance)", period)
    return low


@dataclass(frozen=True)
class AssetMoments:
    """Gross-return moments of the risky assets for one period."""

    riskless: float
    mean_return: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean_return", np.asarray(self.mean_return, dtype=float).reshape(-1))
        object.__setattr__(self, "covariance", np.atleast_2d(np.asarray(self.covariance, dtype=float)))
        if not self.riskless > 0:
            raise ValidationError(f"riskless return must be positive, got {self.riskless}")
        n = self.mean_return.size
        if self.covariance.shape != (n, n):
            raise ValidationError(f"covariance shape {self.covariance.shape} does not match {n} assets")

    @classmethod
    def from_stdev(cls, riskless, mean_return, stdev, correlation) -> "AssetMoments":
        """Build from standard deviations and a correlation matrix."""
        sd = np.asarray(stdev, dtype=float)
        corr = np.asarray(correlation, dtype=float)
        return cls(riskless, mean_return, np.outer(sd, sd) * corr)


def excess_moments(asset: AssetMoments, period=None) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and second moment of ``P = e - s 1``.

    ``Cov(P) = Cov(e)`` because the shift is deterministic, hence
    ``E(PP') = Cov(e) + E(P)E(P)'``.
    """
    checked_cholesky(asset.covariance, "covariance", period)
    mean = asset.mean_return - asset.riskless
    return mean, asset.covariance + np.outer(mean, mean)


@dataclass(frozen=True)
class PeriodDerived:
    """``K = E(PP')^-1 E(P)`` and ``B = E(P)'K`` for one period."""

    B: float
    K: np.ndarray
    zero_mean: bool = False


def derive_period(excess_mean, excess_second_moment, period=None) -> PeriodDerived:
    """Solve ``E(PP') K = E(P)`` by Cholesky and form ``B = E(P)'K``.

    ``B = 0`` (zero excess mean) is accepted with a :class:`MarketWarning`;
    ``B >= 1 - 1e-12`` raises :class:`InfeasibleMarketError`.
    """
    mean = np.asarray(excess_mean, dtype=float).reshape(-1)
    second = np.atleast_2d(np.asarray(excess_second_moment, dtype=float))
    if second.shape != (mean.size, mean.size):
        raise ValidationError(f"second moment shape {second.shape} does not match mean length {mean.size}", period)
    low = checked_cholesky(second, "excess second moment", period)
    K = linalg.cho_solve((low, True), mean)
    B = float(mean @ K)
    if not np.any(mean):
        warnings.warn(f"period {period}: zero excess mean, B = 0", MarketWarning, stacklevel=2)
        return PeriodDerived(0.0, np.zeros_like(mean), zero_mean=True)
    if B >= B_MAX:
        raise InfeasibleMarketError(f"B = {B!r} >= 1 violates s^2 (1 - B) > 0", period)
    return PeriodDerived(B, K)


def sherman_morrison(A_inverse, mu, nu, tol: float = 1e-12) -> np.ndarray:
    """``(A + mu nu')^-1`` from ``A^-1``.

    Raises :class:`SingularUpdateError` when ``|1 + nu' A^-1 mu|`` is below
    ``tol`` relative to the size of the update.
    """
    A_inverse = np.atleast_2d(np.asarray(A_inverse, dtype=float))
    mu = np.asarray(mu, dtype=float).reshape(-1)
    nu = np.asarray(nu, dtype=float).reshape(-1)
    a_mu = A_inverse @ mu
    nu_a = nu @ A_inverse
    denom = 1.0 + nu @ a_mu
    if abs(denom) <= tol * max(1.0, abs(nu @ a_mu)):
        raise SingularUpdateError(f"1 + nu'A^-1 mu = {denom!r} is numerically zero")
    return A_inverse - np.outer(a_mu, nu_a) / denom


def covinv_times_mean(derived: PeriodDerived) -> np.ndarray:
    """``[E(PP') - E(P)E(P)']^-1 E(P) = K / (1 - B)``."""
    if derived.B >= B_MAX:
        raise InfeasibleMarketError(f"B = {derived.B!r} >= 1")
    return derived.K / (1.0 - derived.B)


def rank_one_denominator(pbar_next: float, eta_next: float, B: float, convention: str = "exact") -> float:
    """Scalar ``d`` with ``[pbar E(PP') - (pbar + eta) E(P)E(P)']^-1 E(P) = K / d``.

    The rank-one update gives ``d = pbar (1 - B) - eta B``.  The
    ``"legacy"`` convention returns ``pbar (1 - B) + eta B`` instead; it is
    kept only to reproduce reference tables computed with that sign.
    """
    if convention == "exact":
        return pbar_next * (1.0 - B) - eta_next * B
    if convention == "legacy":
        return pbar_next * (1.0 - B) + eta_next * B
    raise ValueError(f"unknown convention {convention!r}")


def rank_one_solve_mean(pbar_next: float, eta_next: float, derived: PeriodDerived, tol: float = 1e-12) -> np.ndarray:
    """``[pbar E(PP') - (pbar + eta) E(P)E(P)']^-1 E(P)`` as a multiple of ``K``."""
    if not pbar_next > 0:
        raise ValueError(f"pbar must be positive, got {pbar_next}")
    if eta_next < 0:
        raise ValueError(f"eta must be nonnegative, got {eta_next}")
    d = rank_one_denominator(pbar_next, eta_next, derived.B)
    if abs(d) <= tol * pbar_next:
        raise DegenerateRecursionError(f"denominator pbar(1-B) - eta B = {d!r} is numerically zero")
    return derived.K / d


@dataclass(frozen=True)
class MarketData:
    """
    Excess-return moments over a horizon of ``T`` periods.

    Parameters
    ----------
    s : array (T,)
        Riskless gross returns, strictly positive.
    excess_mean : array (T, n)
        ``E(P_t)`` per period.
    excess_second_moment : array (T, n, n)
        ``E(P_t P_t')`` per period, symmetric positive definite.
    """

    s: np.ndarray
    excess_mean: np.ndarray
    excess_second_moment: np.ndarray
    derived: Tuple[PeriodDerived, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float).reshape(-1)
        mean = np.asarray(self.excess_mean, dtype=float)
        second = np.asarray(self.excess_second_moment, dtype=float)
        T = s.size
        if T < 1:
            raise ValidationError("horizon must be at least one period")
        if mean.ndim != 2 or mean.shape[0] != T:
            raise ValidationError(f"excess_mean must have shape (T={T}, n), got {mean.shape}")
        n = mean.shape[1]
        if second.shape != (T, n, n):
            raise ValidationError(f"excess_second_moment must have shape ({T}, {n}, {n}), got {second.shape}")
        for t in range(T):
            if not s[t] > 0:
                raise ValidationError(f"riskless return must be positive, got {s[t]}", t)
            if s[t] <= 1:
                warnings.warn(f"period {t}: riskless return {s[t]} <= 1", MarketWarning, stacklevel=3)
        derived = []
        for t in range(T):
            derived.append(derive_period(mean[t], second[t], period=t))
            checked_cholesky(second[t] - np.outer(mean[t], mean[t]), "excess covariance", t)
        for name, arr in (("s", s), ("excess_mean", mean), ("excess_second_moment", second)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "derived", tuple(derived))

    @property
    def T(self) -> int:
        return self.s.size

    @property
    def n(self) -> int:
        return self.excess_mean.shape[1]

    @cached_property
    def B(self) -> np.ndarray:
        return np.array([d.B for d in self.derived])

    @cached_property
    def K(self) -> np.ndarray:
        return np.array([d.K for d in self.derived])

    @cached_property
    def covariance(self) -> np.ndarray:
        m = self.excess_mean
        return self.excess_second_moment - m[:, :, None] * m[:, None, :]

    @classmethod
    def from_assets(cls, assets: Sequence[AssetMoments]) -> "MarketData":
        means, seconds = [], []
        for t, a in enumerate(assets):
            m, e2 = excess_moments(a, period=t)
            means.append(m)
            seconds.append(e2)
        return cls(np.array([a.riskless for a in assets]), np.array(means), np.array(seconds))

    @classmethod
    def replicate(cls, s: float, excess_mean, excess_second_moment, T: int) -> "MarketData":
        """The same period repeated ``T`` times (i.i.d. returns)."""
        mean = np.asarray(excess_mean, dtype=float).reshape(-1)
        second = np.atleast_2d(np.asarray(excess_second_moment, dtype=float))
        return cls(np.full(T, float(s)), np.tile(mean, (T, 1)), np.tile(second, (T, 1, 1)))

    def periods(self) -> List[int]:
        return list(range(self.T))


# Three indices (S&P 500, emerging markets, US small stocks) and a 5% bank
# account.  The "Variance" row of the source table holds standard deviations:
# 0.185**2 = 0.034225 is the printed Cov(P)[0, 0].
EXAMPLE_MEAN_RETURN = (1.14, 1.16, 1.17)
EXAMPLE_STDEV = (0.185, 0.30, 0.24)
EXAMPLE_CORRELATION = ((1.0, 0.64, 0.79), (0.64, 1.0, 0.75), (0.79, 0.75, 1.0))
EXAMPLE_RISKLESS = 1.05


def example_asset_moments() -> AssetMoments:
    return AssetMoments.from_stdev(EXAMPLE_RISKLESS, EXAMPLE_MEAN_RETURN, EXAMPLE_STDEV, EXAMPLE_CORRELATION)


def example_market(T: int = 5) -> MarketData:
    """The three-index pension-fund example, i.i.d. over ``T`` periods."""
    return MarketData.from_assets([example_asset_moments()] * T)
