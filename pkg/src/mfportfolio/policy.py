"""
Affine investment rules and exact propagation of wealth moments.

Every optimal policy in the package has the shape

    u_t(x) = (c_t - s_t x) D_t

with ``D_t`` the period's ``K_t``.  Because ``x_t`` is independent of ``P_t``
the first two moments of wealth evolve in closed form for any such rule:

    E x_{t+1}   = s E x_t + E(P)' E(u_t)
    Var x_{t+1} = s^2 (1 - 2 E(P)'D + D' E(PP') D) Var x_t + E(u_t)' Cov(P) E(u_t)

which collapses to ``s^2 (1 - B) Var x_t + ...`` when ``D = K``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import ContractError
from .market import MarketData

__all__ = [
    "AffinePolicy",
    "PolicyStep",
    "WealthMoments",
    "affine_moments",
    "propagate_variance",
    "zero_policy",
]

K_MATCH_TOL = 1e-9


@dataclass(frozen=True)
class PolicyStep:
    K: np.ndarray
    c: float
    s: float

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float).reshape(-1)
        K.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "s", float(self.s))
        if not np.isfinite(self.c):
            raise ContractError(f"policy intercept must be finite, got {self.c}")


@dataclass(frozen=True)
class AffinePolicy:
    """Per-period rule ``u_t(x) = (c_t - s_t x) K_t``."""

    steps: Tuple[PolicyStep, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    @property
    def T(self) -> int:
        return len(self.steps)

    @property
    def intercepts(self) -> np.ndarray:
        return np.array([st.c for st in self.steps])

    @property
    def directions(self) -> np.ndarray:
        return np.array([st.K for st in self.steps])

    def control(self, t: int, x):
        """Holdings of the risky assets at time ``t``; vectorised over ``x``."""
        st = self.steps[t]
        x = np.asarray(x, dtype=float)
        return (st.c - st.s * x)[..., None] * st.K

    def mean_control(self, t: int, mean_wealth: float) -> np.ndarray:
        st = self.steps[t]
        return (st.c - st.s * mean_wealth) * st.K

    def replace(self, intercepts=None, directions=None) -> "AffinePolicy":
        c = self.intercepts if intercepts is None else intercepts
        D = self.directions if directions is None else directions
        return AffinePolicy(tuple(PolicyStep(D[t], c[t], st.s) for t, st in enumerate(self.steps)))


def zero_policy(market: MarketData) -> AffinePolicy:
    """Everything in the riskless asset."""
    return AffinePolicy(tuple(PolicyStep(np.zeros(market.n), 0.0, market.s[t]) for t in range(market.T)))


@dataclass(frozen=True)
class WealthMoments:
    """``E(x_t)`` and ``Var(x_t)`` for ``t = 0..T``."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        for name in ("mean", "variance"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def T(self) -> int:
        return self.mean.size - 1


def _check_horizon(policy: AffinePolicy, market: MarketData):
    if policy.T != market.T:
        raise ContractError(f"policy horizon {policy.T} != market horizon {market.T}")


def affine_moments(policy: AffinePolicy, market: MarketData, x0: float) -> WealthMoments:
    """Exact moments for an affine rule with arbitrary directions ``D_t``."""
    _check_horizon(policy, market)
    T = market.T
    mean = np.empty(T + 1)
    var = np.empty(T + 1)
    mean[0], var[0] = x0, 0.0
    for t in range(T):
        st = policy.steps[t]
        m, S, cov = market.excess_mean[t], market.excess_second_moment[t], market.covariance[t]
        D = st.K
        eu = (st.c - st.s * mean[t]) * D
        gain = 1.0 - 2.0 * (m @ D) + D @ S @ D
        mean[t + 1] = st.s * mean[t] + m @ eu
        var[t + 1] = st.s**2 * gain * var[t] + eu @ cov @ eu
    return WealthMoments(mean, var)


def propagate_variance(policy: AffinePolicy, market: MarketData, x0: float) -> WealthMoments:
    """Moments of an affine rule that invests along each period's own ``K_t``.

    Raises :class:`ContractError` if a step's direction differs from the
    market's ``K_t``; use :func:`affine_moments` for general directions.
    """
    _check_horizon(policy, market)
    for t, st in enumerate(policy.steps):
        K = market.K[t]
        scale = max(1.0, float(np.max(np.abs(K))))
        if st.K.shape != K.shape or np.max(np.abs(st.K - K)) > K_MATCH_TOL * scale:
            raise ContractError(f"step {t}: policy direction does not match the period's K")
    T = market.T
    mean = np.empty(T + 1)
    var = np.empty(T + 1)
    mean[0], var[0] = x0, 0.0
    for t in range(T):
        st = policy.steps[t]
        eu = (st.c - st.s * mean[t]) * market.K[t]
        mean[t + 1] = st.s * mean[t] + market.excess_mean[t] @ eu
        var[t + 1] = st.s**2 * (1.0 - market.B[t]) * var[t] + eu @ market.covariance[t] @ eu
    return WealthMoments(mean, var)


def policy_from_arrays(intercepts: Sequence[float], directions, s: Sequence[float]) -> AffinePolicy:
    return AffinePolicy(tuple(PolicyStep(D, c, st) for c, D, st in zip(intercepts, directions, s)))
