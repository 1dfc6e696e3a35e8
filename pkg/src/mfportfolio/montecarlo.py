"""
Monte Carlo verification of affine policies.

Wealth paths are simulated from ``x_{t+1} = s_t x_t + P_t' u_t(x_t)`` with
excess returns drawn from one of two samplers that match the first two
moments of ``P_t`` exactly:

``gaussian``            ``P = E(P) + L z``, ``z ~ N(0, I)``
``rademacher_factor``   ``P = E(P) + L z``, ``z`` i.i.d. fair signs

where ``L`` is the Cholesky factor of ``Cov(P)``.  The analytical moment
formulas only use the first two moments, so both samplers must reproduce
them.

Paths are generated in fixed-size blocks, each with its own child stream of
``SeedSequence(seed)``; results depend only on ``(seed, n_paths)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import ContractError, OptimalityViolation
from .gmv import BankruptcySpec
from .market import MarketData, checked_cholesky
from .policy import AffinePolicy, WealthMoments, affine_moments

__all__ = [
    "BLOCK_SIZE",
    "PerturbationReport",
    "SamplerSpec",
    "SimReport",
    "TchebycheffRecord",
    "check_tchebycheff",
    "perturb_optimality",
    "sample_excess_returns",
    "simulate",
    "within_se",
]

BLOCK_SIZE = 1 << 16
SAMPLERS = ("gaussian", "rademacher_factor")


@dataclass(frozen=True)
class SamplerSpec:
    kind: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        kind = {"rademacher": "rademacher_factor"}.get(self.kind, self.kind)
        if kind not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.kind!r}; expected one of {SAMPLERS}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "seed", int(self.seed))


def _factors(market: MarketData) -> np.ndarray:
    return np.array([checked_cholesky(market.covariance[t], "excess covariance", t) for t in range(market.T)])


def _draw(rng: np.random.Generator, kind: str, size) -> np.ndarray:
    if kind == "gaussian":
        return rng.standard_normal(size)
    return rng.integers(0, 2, size=size, dtype=np.int8).astype(float) * 2.0 - 1.0


def sample_excess_returns(market: MarketData, t: int, n: int, sampler: SamplerSpec) -> np.ndarray:
    """``n`` draws of ``P_t`` (rows), for moment checks."""
    rng = np.random.default_rng(np.random.SeedSequence([sampler.seed, t]))
    L = checked_cholesky(market.covariance[t], "excess covariance", t)
    return market.excess_mean[t] + _draw(rng, sampler.kind, (n, market.n)) @ L.T


@dataclass
class SimReport:
    """Sample statistics of ``n_paths`` simulated wealth trajectories."""

    n_paths: int
    mean_hat: np.ndarray
    mean_se: np.ndarray
    var_hat: np.ndarray
    var_se: np.ndarray
    bankruptcy_freq: np.ndarray  # t = 1..T-1
    objective_hat: Optional[float] = None
    objective_se: Optional[float] = None
    control_dev_mean: Optional[np.ndarray] = None  # (T, n)
    control_dev_se: Optional[np.ndarray] = None
    n_excluded: int = 0
    sampler: str = "gaussian"
    seed: int = 0

    @property
    def T(self) -> int:
        return self.mean_hat.size - 1

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


class _Accumulator:
    """Shifted power sums; merging blocks is associative."""

    def __init__(self, shape, shift):
        self.n = 0
        self.shift = shift
        self.s1 = np.zeros(shape)
        self.s2 = np.zeros(shape)
        self.s3 = np.zeros(shape)
        self.s4 = np.zeros(shape)

    def add(self, x):
        y = x - self.shift
        y2 = y * y
        self.n += x.shape[0]
        self.s1 += y.sum(axis=0)
        self.s2 += y2.sum(axis=0)
        self.s3 += (y2 * y).sum(axis=0)
        self.s4 += (y2 * y2).sum(axis=0)

    def mean_var(self):
        n = self.n
        m1 = self.s1 / n
        m2 = self.s2 / n
        m3 = self.s3 / n
        m4 = self.s4 / n
        var = np.maximum(m2 - m1 * m1, 0.0)
        mu4 = m4 - 4 * m3 * m1 + 6 * m2 * m1**2 - 3 * m1**4
        mean = m1 + self.shift
        mean_se = np.sqrt(var / n)
        var_se = np.sqrt(np.maximum(mu4 - var * var, 0.0) / n)
        return mean, mean_se, var * n / max(n - 1, 1), var_se


def simulate(policy: AffinePolicy, market: MarketData, x0: float, sampler: SamplerSpec, n_paths: int,
             disaster_levels: Optional[Sequence[float]] = None, omega_T: Optional[float] = None) -> SimReport:
    """
    Simulate ``n_paths`` trajectories under ``policy``.

    Parameters
    ----------
    disaster_levels : sequence of length T - 1, optional
        ``b_t`` for the bankruptcy frequencies ``P(x_t <= b_t)``; zeros by default.
    omega_T : float, optional
        If given, ``objective_hat`` estimates ``E x_T - omega_T Var x_T``.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if policy.T != market.T:
        raise ContractError(f"policy horizon {policy.T} != market horizon {market.T}")
    T, n = market.T, market.n
    b = np.zeros(T - 1) if disaster_levels is None else np.asarray(disaster_levels, dtype=float)
    if b.size != T - 1:
        raise ValueError(f"need {T - 1} disaster levels, got {b.size}")
    L = _factors(market)
    # analytical mean path gives E(u_t) for the control-deviation check
    with np.errstate(over="ignore", invalid="ignore"):
        ref = affine_moments(policy, market, x0).mean
        eu = np.array([policy.mean_control(t, ref[t]) for t in range(T)])
    if not np.all(np.isfinite(ref)):
        ref = np.zeros_like(ref)

    n_blocks = -(-n_paths // BLOCK_SIZE)
    streams = np.random.SeedSequence(sampler.seed).spawn(n_blocks)
    wealth_acc = _Accumulator(T + 1, ref)
    dev_acc = _Accumulator((T, n), 0.0)
    ruin = np.zeros(max(T - 1, 0))
    excluded = 0
    terminal_chunks = []
    for k, ss in enumerate(streams):
        m = min(BLOCK_SIZE, n_paths - k * BLOCK_SIZE)
        rng = np.random.default_rng(ss)
        x = np.full((m, T + 1), float(x0))
        dev = np.empty((m, T, n))
        with np.errstate(over="ignore", invalid="ignore"):
            for t in range(T):
                u = policy.control(t, x[:, t])
                dev[:, t, :] = u - eu[t]
                P = market.excess_mean[t] + _draw(rng, sampler.kind, (m, n)) @ L[t].T
                x[:, t + 1] = market.s[t] * x[:, t] + np.einsum("ij,ij->i", P, u)
        ok = np.all(np.isfinite(x), axis=1)
        excluded += int(m - ok.sum())
        x, dev = x[ok], dev[ok]
        # finite but huge wealth may still overflow in the power sums
        with np.errstate(over="ignore", invalid="ignore"):
            wealth_acc.add(x)
            dev_acc.add(dev)
        if T > 1:
            ruin += (x[:, 1:T] <= b).sum(axis=0)
        terminal_chunks.append(x[:, T])
    kept = wealth_acc.n
    if kept == 0:
        raise ArithmeticError("every simulated path overflowed")
    with np.errstate(over="ignore", invalid="ignore"):
        mean, mean_se, var, var_se = wealth_acc.mean_var()
        dmean, dse, _, _ = dev_acc.mean_var()
    report = SimReport(
        n_paths=kept,
        mean_hat=mean,
        mean_se=mean_se,
        var_hat=var,
        var_se=var_se,
        bankruptcy_freq=ruin / kept,
        control_dev_mean=dmean,
        control_dev_se=dse,
        n_excluded=excluded,
        sampler=sampler.kind,
        seed=sampler.seed,
    )
    if omega_T is not None:
        xT = np.concatenate(terminal_chunks)
        # per-path contribution whose mean is E x_T - omega Var x_T
        contrib = xT - omega_T * (xT - mean[T]) ** 2
        report.objective_hat = float(mean[T] - omega_T * var[T])
        report.objective_se = float(np.std(contrib) / math.sqrt(kept))
    return report


def within_se(estimate, se, target, n_se: float = 3.0, atol: float = 1e-12) -> np.ndarray:
    """Elementwise ``|estimate - target| <= n_se * se + atol * max(1, |target|)``."""
    estimate, se, target = (np.asarray(v, dtype=float) for v in (estimate, se, target))
    return np.abs(estimate - target) <= n_se * se + atol * np.maximum(1.0, np.abs(target))


@dataclass(frozen=True)
class TchebycheffRecord:
    t: int
    freq: float
    bound: float
    applicable: bool
    holds: bool
    within_target: bool  # bound <= a_t


def check_tchebycheff(report: SimReport, spec: BankruptcySpec, moments: WealthMoments,
                      n_se: float = 3.0) -> List[TchebycheffRecord]:
    """Compare bankruptcy frequencies with ``Var(x_t) / (E(x_t) - b_t)^2``.

    Periods with ``E(x_t) <= b_t`` are flagged inapplicable and not checked.
    """
    out = []
    for i in range(spec.T - 1):
        t = i + 1
        gap = moments.mean[t] - spec.b[i]
        freq = float(report.bankruptcy_freq[i])
        if gap <= 0:
            out.append(TchebycheffRecord(t, freq, math.nan, False, True, False))
            continue
        bound = float(moments.variance[t] / gap**2)
        p = min(max(bound, 0.0), 1.0)
        se = math.sqrt(p * (1.0 - p) / report.n_paths)
        out.append(TchebycheffRecord(t, freq, bound, True, bool(freq <= bound + n_se * se), bool(bound <= spec.a[i])))
    return out


@dataclass
class PerturbationReport:
    n_trials: int
    scale: float
    base_value: float
    intercept_deltas: np.ndarray
    direction_deltas: np.ndarray

    @property
    def max_improvement(self) -> float:
        vals = np.concatenate((self.intercept_deltas, self.direction_deltas))
        return float(vals.max()) if vals.size else 0.0


def perturb_optimality(policy: AffinePolicy, objective: Callable[[WealthMoments], float], market: MarketData,
                       x0: float, scale: float, n_trials: int, seed: int = 0,
                       tol: float = 1e-12) -> PerturbationReport:
    """Check that random relative perturbations never improve ``objective``.

    Intercepts and directions are perturbed in separate trials; moments are
    computed exactly (no sampling noise), using the full deviation second
    moment for perturbed directions.  Raises :class:`OptimalityViolation`
    with the offending policy if some trial improves by more than ``tol``.
    """
    if scale < 0:
        raise ValueError("scale must be nonnegative")
    rng = np.random.default_rng(seed)
    base = objective(affine_moments(policy, market, x0))
    c = policy.intercepts
    D = policy.directions
    c_deltas = np.empty(n_trials)
    d_deltas = np.empty(n_trials)
    for k in range(n_trials):
        c_new = c * (1.0 + scale * rng.standard_normal(c.shape))
        cand = policy.replace(intercepts=c_new)
        c_deltas[k] = objective(affine_moments(cand, market, x0)) - base
        if c_deltas[k] > tol:
            raise OptimalityViolation(f"intercept perturbation improved objective by {c_deltas[k]:.3e}", cand)
        D_new = D * (1.0 + scale * rng.standard_normal(D.shape))
        cand = policy.replace(directions=D_new)
        d_deltas[k] = objective(affine_moments(cand, market, x0)) - base
        if d_deltas[k] > tol:
            raise OptimalityViolation(f"direction perturbation improved objective by {d_deltas[k]:.3e}", cand)
    return PerturbationReport(n_trials, scale, base, c_deltas, d_deltas)
