"""
Dual minimisation of H(omega) over the nonnegative orthant.

The constraint ``omega >= 0`` is handled with a log barrier,

    min H(omega) - mu * sum_i log(omega_i),

driven to ``mu -> 0`` along a geometric schedule.  Each barrier problem is
solved by steepest descent in the metric ``diag(1 / omega)`` (direction
``-omega * grad``) with a Barzilai-Borwein trial step and Armijo
backtracking on a central finite-difference gradient.  Steps are clipped to
90% of the distance to the boundary so iterates stay strictly positive.  A
stage ends when ``||omega * grad||``, which equals the complementary
slackness residual ``||omega * dH - mu||``, drops below ``grad_tol``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .errors import SpecError
from .gmv import (
    BankruptcySpec,
    SlackRecord,
    build_gmv_policy,
    dual_objective,
    slackness_table,
    solve_gmv_recursions,
)
from .market import MarketData
from .mmv import IntertemporalSpec, solve_mmv
from .policy import AffinePolicy, WealthMoments

__all__ = [
    "BarrierSettings",
    "DualResult",
    "TraceRow",
    "barrier_objective",
    "gradient_fd",
    "solve_dual",
]

log = logging.getLogger(__name__)

BOUNDARY_FRACTION = 0.9


@dataclass(frozen=True)
class BarrierSettings:
    mu_initial: float = 1e-2
    mu_factor: float = 0.5
    mu_final: float = 1e-8
    fd_step: float = 1e-6
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    max_iters: int = 20000
    grad_tol: float = 1e-7

    def __post_init__(self):
        if not (self.mu_initial > 0 and self.mu_final > 0 and self.mu_final < self.mu_initial):
            raise SpecError("need 0 < mu_final < mu_initial")
        if not 0 < self.mu_factor < 1:
            raise SpecError("mu_factor must lie in (0, 1)")
        if not self.fd_step > 0:
            raise SpecError("fd_step must be positive")
        if not (0 < self.armijo_c < 1 and 0 < self.armijo_shrink < 1):
            raise SpecError("armijo_c and armijo_shrink must lie in (0, 1)")
        if self.max_iters < 1 or not self.grad_tol > 0:
            raise SpecError("max_iters must be >= 1 and grad_tol > 0")

    def schedule(self) -> List[float]:
        mus = [self.mu_initial]
        while mus[-1] > self.mu_final:
            mus.append(max(mus[-1] * self.mu_factor, self.mu_final))
        return mus


def barrier_objective(omega, mu: float, spec: BankruptcySpec, market: MarketData,
                      convention: str = "exact", objective: Optional[Callable] = None) -> float:
    """``H(omega) - mu * sum(log omega)``; requires ``omega > 0``."""
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise ValueError("barrier objective needs strictly positive multipliers")
    h = objective(w) if objective is not None else dual_objective(w, spec, market, convention)
    if mu == 0:
        return h
    return h - mu * float(np.sum(np.log(w)))


def gradient_fd(omega, mu: float, fd_step: float, spec: BankruptcySpec, market: MarketData,
                convention: str = "exact", objective: Optional[Callable] = None) -> np.ndarray:
    """Gradient of :func:`barrier_objective`.

    H is differenced centrally with step ``fd_step * max(1, |omega_i|)``,
    shrunk to ``omega_i / 2`` where it would leave the positive orthant; the
    barrier term contributes its exact derivative ``-mu / omega_i``.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise ValueError("gradient needs strictly positive multipliers")
    h_of = objective if objective is not None else (lambda x: dual_objective(x, spec, market, convention))
    grad = np.empty_like(w)
    for i in range(w.size):
        h = fd_step * max(1.0, abs(w[i]))
        if h >= w[i]:
            log.debug("fd step for component %d shrunk from %g to %g", i, h, w[i] / 2)
            h = w[i] / 2.0
        up = w.copy()
        dn = w.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (h_of(up) - h_of(dn)) / (2.0 * h)
    return grad - mu / w


@dataclass(frozen=True)
class TraceRow:
    iter: int
    mu: float
    H: float
    grad_norm: float
    omega: tuple = ()


@dataclass
class DualResult:
    omega_star: np.ndarray
    H_value: float
    policy: AffinePolicy
    moments: WealthMoments
    slackness: List[SlackRecord]
    converged: bool = True
    iterations: int = 0
    outer_H: List[float] = field(default_factory=list)
    trace: List[TraceRow] = field(default_factory=list)
    convention: str = "exact"

    @property
    def max_violation(self) -> float:
        return max((r.violation for r in self.slackness), default=0.0)

    @property
    def max_abs_product(self) -> float:
        return max((abs(r.product) for r in self.slackness), default=0.0)


def _classical(spec: BankruptcySpec, market: MarketData) -> DualResult:
    sol = solve_mmv(IntertemporalSpec.classical(market.T, spec.omega_T), market, spec.x0)
    return DualResult(np.zeros(0), sol.objective, sol.policy, sol.moments, [], True, 0, [sol.objective])


def _interior_start(x, f) -> np.ndarray:
    x = np.asarray(x, dtype=float).copy()
    for _ in range(200):
        if math.isfinite(f(x)):
            return x
        x *= 0.5
    raise SpecError("could not find a starting point where H is finite")


def solve_dual(spec: BankruptcySpec, market: MarketData, settings: BarrierSettings = BarrierSettings(),
               convention: str = "exact", initial=None, record_trace: bool = False) -> DualResult:
    """Minimise H(omega) over ``omega >= 0``.

    Non-convergence (iteration budget exhausted before ``grad_tol`` in the
    final barrier stage) is reported through ``converged=False``; the best
    iterate is still returned.
    """
    if spec.T != market.T:
        raise SpecError(f"bankruptcy spec horizon {spec.T} != market horizon {market.T}")
    if market.T == 1:
        return _classical(spec, market)

    def f(w, mu):
        return barrier_objective(w, mu, spec, market, convention)

    mus = settings.schedule()
    x0 = np.ones(market.T - 1) if initial is None else np.maximum(np.asarray(initial, dtype=float), 1e-3)
    w = _interior_start(x0, lambda x: f(x, mus[0]))
    trace: List[TraceRow] = []
    outer_H: List[float] = []
    total = 0
    converged = True
    for mu in mus:
        fw = f(w, mu)
        g = gradient_fd(w, mu, settings.fd_step, spec, market, convention)
        alpha = None
        stage_ok = False
        for it in range(settings.max_iters):
            # omega * grad = omega * dH - mu: the complementary-slackness
            # residual of the barrier problem, independent of the scale of omega
            gnorm = math.sqrt(float((w * g) @ (w * g)))
            if record_trace:
                trace.append(TraceRow(total, mu, dual_objective(w, spec, market, convention), gnorm, tuple(w.tolist())))
            total += 1
            if gnorm <= settings.grad_tol:
                stage_ok = True
                break
            # steepest descent in the metric diag(1/omega): direction -omega * g
            d = -w * g
            slope = float(g @ d)
            neg = d < 0
            alpha_max = BOUNDARY_FRACTION * float(np.min(w[neg] / -d[neg])) if np.any(neg) else math.inf
            trial_alpha = min(alpha if alpha is not None else 1.0, alpha_max)
            accepted = False
            while trial_alpha > 1e-300:
                trial = w + trial_alpha * d
                ft = f(trial, mu) if np.all(trial > 0) else math.inf
                if ft <= fw + settings.armijo_c * trial_alpha * slope:
                    accepted = True
                    break
                trial_alpha *= settings.armijo_shrink
            if not accepted:
                # no further descent resolvable at this gradient accuracy
                break
            g_new = gradient_fd(trial, mu, settings.fd_step, spec, market, convention)
            # Barzilai-Borwein length in the scaled variables
            sk = (trial - w) / np.sqrt(w)
            yk = (g_new - g) * np.sqrt(w)
            sy = float(sk @ yk)
            alpha = float(sk @ sk) / sy if sy > 0 else None
            stalled = ft >= fw
            w, fw, g = trial, ft, g_new
            if stalled:
                # decrease below the resolution of f
                break
        outer_H.append(dual_objective(w, spec, market, convention))
        if not stage_ok and mu == mus[-1]:
            converged = False
    if not converged:
        log.warning("dual optimiser stopped before reaching grad_tol=%g", settings.grad_tol)
    rec = solve_gmv_recursions(w, spec, market, convention)
    policy, moments = build_gmv_policy(rec, spec, market)
    return DualResult(
        omega_star=w,
        H_value=dual_objective(w, spec, market, convention),
        policy=policy,
        moments=moments,
        slackness=slackness_table(w, spec, moments),
        converged=converged,
        iterations=total,
        outer_H=outer_H,
        trace=trace,
        convention=convention,
    )
