"""
Multi-period mean-variance with optional intertemporal restrictions.

The objective ``sum_t alpha_t [ell_t E(x_t) - rho_t Var(x_t)]`` is solved by
the backward recursions

    p_T = alpha_T rho_T,   p_t = alpha_t rho_t + s_t^2 (1 - B_t) p_{t+1}
    q_T = alpha_T ell_T,   q_t = alpha_t ell_t + s_t q_{t+1}

and the optimal rule is ``u_t = (c_t - s_t x_t) K_t`` with
``c_t = s_t E(x_t) + q_{t+1} / (2 p_{t+1} (1 - B_t))``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence

import numpy as np

from .errors import MarketWarning, SpecError
from .market import MarketData
from .policy import AffinePolicy, PolicyStep, WealthMoments, propagate_variance

__all__ = [
    "FrontierCoefficients",
    "IntertemporalSpec",
    "MMVRecursion",
    "MMVSolution",
    "SegmentParams",
    "breakpoints",
    "classical_frontier",
    "classical_policy_closed_form",
    "segment_params",
    "mmv_objective_from_moments",
    "propagate_variance",
    "solve_mmv",
    "solve_pq",
]


@dataclass(frozen=True)
class IntertemporalSpec:
    """Weights ``alpha_t, ell_t, rho_t`` for ``t = 0..T``.

    Unevaluated instants carry zeros.  ``alpha_T rho_T`` must be positive.
    """

    alpha: np.ndarray
    ell: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        arrs = {}
        for name in ("alpha", "ell", "rho"):
            a = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if not np.all(np.isfinite(a)):
                raise SpecError(f"{name} has non-finite entries")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
            arrs[name] = a
        if not (arrs["alpha"].size == arrs["ell"].size == arrs["rho"].size):
            raise SpecError("alpha, ell and rho must have the same length T + 1")
        if arrs["alpha"].size < 2:
            raise SpecError("need at least one period (T + 1 >= 2 weights)")
        if np.any(arrs["alpha"] < 0) or np.any(arrs["rho"] < 0):
            raise SpecError("alpha and rho must be nonnegative")
        if not self.alpha[-1] * self.rho[-1] > 0:
            raise SpecError("terminal variance weight alpha_T * rho_T must be positive")
        if np.any(self.alpha[:-1] * self.ell[:-1] < 0):
            warnings.warn("negative intermediate mean weight alpha_t * ell_t", MarketWarning, stacklevel=3)

    @property
    def T(self) -> int:
        return self.alpha.size - 1

    @classmethod
    def classical(cls, T: int, omega_T: float) -> "IntertemporalSpec":
        """``max E(x_T) - omega_T Var(x_T)``."""
        if not omega_T > 0:
            raise SpecError(f"omega_T must be positive, got {omega_T}")
        alpha = np.zeros(T + 1)
        ell = np.zeros(T + 1)
        rho = np.zeros(T + 1)
        alpha[T], ell[T], rho[T] = 1.0, 1.0, omega_T
        return cls(alpha, ell, rho)

    @property
    def mean_weight(self) -> np.ndarray:
        return self.alpha * self.ell

    @property
    def variance_weight(self) -> np.ndarray:
        return self.alpha * self.rho


@dataclass(frozen=True)
class MMVRecursion:
    p: np.ndarray
    q: np.ndarray


class MMVSolution(NamedTuple):
    policy: AffinePolicy
    moments: WealthMoments
    objective: float


def _check_horizon(spec: IntertemporalSpec, market: MarketData):
    if spec.T != market.T:
        raise SpecError(f"objective horizon {spec.T} != market horizon {market.T}")


def solve_pq(spec: IntertemporalSpec, market: MarketData) -> MMVRecursion:
    _check_horizon(spec, market)
    T = market.T
    vw, mw = spec.variance_weight, spec.mean_weight
    p = np.empty(T + 1)
    q = np.empty(T + 1)
    p[T], q[T] = vw[T], mw[T]
    for t in range(T - 1, -1, -1):
        s = market.s[t]
        p[t] = vw[t] + s * s * (1.0 - market.B[t]) * p[t + 1]
        q[t] = mw[t] + s * q[t + 1]
    return MMVRecursion(p, q)


def mmv_objective_from_moments(spec: IntertemporalSpec, moments: WealthMoments) -> float:
    """Direct evaluation of ``sum_t alpha_t [ell_t E(x_t) - rho_t Var(x_t)]``."""
    return float(spec.mean_weight @ moments.mean - spec.variance_weight @ moments.variance)


def solve_mmv(spec: IntertemporalSpec, market: MarketData, x0: float) -> MMVSolution:
    """Optimal affine policy, its moment paths and the optimal value.

    The value is the benefit-to-go at ``t = 0``,
    ``q_0 x_0 + sum_j q_{j+1}^2 B_j / (4 p_{j+1} (1 - B_j))``; the
    ``-p_0 (x_0 - E x_0)^2`` term vanishes because ``x_0`` is deterministic.
    Each summand is ``q^2 / (4 p) * E(P)' Cov(P)^-1 E(P)``, the gain from
    the optimal mean investment.
    """
    rec = solve_pq(spec, market)
    p, q = rec.p, rec.q
    T = market.T
    steps = []
    mean = float(x0)
    for t in range(T):
        s, B = market.s[t], market.B[t]
        c = s * mean + q[t + 1] / (2.0 * p[t + 1] * (1.0 - B))
        steps.append(PolicyStep(market.K[t], c, s))
        mean = s * mean + q[t + 1] / (2.0 * p[t + 1]) * B / (1.0 - B)
    policy = AffinePolicy(tuple(steps))
    moments = propagate_variance(policy, market, x0)
    value = q[0] * x0 + float(np.sum(q[1:] ** 2 * market.B / (4.0 * p[1:] * (1.0 - market.B))))
    return MMVSolution(policy, moments, value)


def classical_policy_closed_form(market: MarketData, omega_T: float, x0: float) -> AffinePolicy:
    """The classical terminal-only policy written out with products.

    Independent of :func:`solve_pq`; used to cross-check it.
    """
    T = market.T
    s, B = market.s, market.B
    level = x0 * np.prod(s) + 1.0 / (2.0 * omega_T * np.prod(1.0 - B))
    steps = []
    for t in range(T):
        discount = np.prod(1.0 / s[t + 1:])
        steps.append(PolicyStep(market.K[t], level * discount, s[t]))
    return AffinePolicy(tuple(steps))


@dataclass(frozen=True)
class FrontierCoefficients:
    """``Var(x_T) = gamma (E(x_T) - base_mean)^2`` for ``E(x_T) >= base_mean``."""

    gamma: float
    base_mean: float
    survival: float  # prod (1 - B_k)
    degenerate: bool = False

    def variance_at(self, mean_T) -> np.ndarray:
        mean_T = np.asarray(mean_T, dtype=float)
        if self.degenerate:
            return np.where(mean_T == self.base_mean, 0.0, np.inf)
        return self.gamma * (mean_T - self.base_mean) ** 2

    def point(self, omega_T: float):
        """``(E(x_T), Var(x_T))`` of the classical optimum for ``omega_T``."""
        if self.degenerate:
            return self.base_mean, 0.0
        excess = (1.0 - self.survival) / (2.0 * omega_T * self.survival)
        var = (1.0 - self.survival) / (4.0 * omega_T**2 * self.survival)
        return self.base_mean + excess, var


def classical_frontier(market: MarketData, x0: float) -> FrontierCoefficients:
    survival = float(np.prod(1.0 - market.B))
    base = float(x0 * np.prod(market.s))
    if survival >= 1.0:
        return FrontierCoefficients(math.inf, base, survival, degenerate=True)
    return FrontierCoefficients(survival / (1.0 - survival), base, survival)


class SegmentParams(NamedTuple):
    G: float
    S: float
    A: float
    D: float


def breakpoints(spec: IntertemporalSpec) -> List[int]:
    """Evaluation instants: ``t >= 1`` with a nonzero weight."""
    return [t for t in range(1, spec.T + 1) if spec.alpha[t] != 0 and (spec.ell[t] != 0 or spec.rho[t] != 0)]


def segment_params(recursion: MMVRecursion, market: MarketData, taus: Sequence[int]) -> List[SegmentParams]:
    """Segment constants between consecutive evaluation instants.

    For segment ``i`` running from ``tau_i`` to ``tau_{i+1}``:
    ``G = -2 p_tau``, ``S = -q_tau``, ``A = prod s_k``, and
    ``D = (1 - prod(1 - B_k)) / prod(1 - B_k) * q_next / (2 p_next)``.
    The last segment is empty (``A = 1``, ``D = 0``).
    ``D`` equals the optimal mean increment ``E x_next - A E x_tau``.
    """
    T = market.T
    taus = [int(t) for t in taus]
    if not taus:
        raise SpecError("need at least one breakpoint")
    for t in taus:
        if t < 0 or t > T:
            raise SpecError(f"breakpoint {t} outside [0, {T}]")
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise SpecError("breakpoints must be strictly increasing")
    if taus[-1] != T:
        raise SpecError(f"last breakpoint must be T = {T}")
    p, q = recursion.p, recursion.q
    out = []
    for i, tau in enumerate(taus):
        nxt = taus[i + 1] if i + 1 < len(taus) else tau
        A = float(np.prod(market.s[tau:nxt]))
        surv = float(np.prod(1.0 - market.B[tau:nxt]))
        D = (1.0 - surv) / surv * q[nxt] / (2.0 * p[nxt]) if nxt > tau else 0.0
        out.append(SegmentParams(-2.0 * p[tau], -q[tau], A, D))
    return out
