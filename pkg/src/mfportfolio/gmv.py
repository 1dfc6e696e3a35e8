"""
Mean-variance with variance caps derived from bankruptcy probabilities.

For multipliers ``omega_1..omega_{T-1} >= 0`` the relaxed problem

    max E x_T - omega_T Var x_T - sum_t omega_t [Var x_t - a_t (E x_t - b_t)^2]

is solved by the backward recursions (``d_t`` is the rank-one denominator)

    d_t       = pbar_{t+1} (1 - B_t) - eta_{t+1} B_t
    zeta_{t+1}= pbar_{t+1} (1 - B_t) / d_t
    pbar_t    = omega_t + s_t^2 (1 - B_t) pbar_{t+1}
    eta_t     = omega_t a_t + s_t^2 zeta_{t+1} eta_{t+1}
    xi_t      = -omega_t a_t b_t + s_t zeta_{t+1} xi_{t+1}

with ``pbar_T = omega_T``, ``eta_T = 0``, ``xi_T = 1/2``.  A non-positive
``d_t`` means the relaxed problem is unbounded above, so H(omega) = +inf.

``convention="legacy"`` swaps in ``d_t = pbar (1 - B) + eta B`` and
``zeta = (pbar (1 - B) + 2 eta B) / d_t``.  That variant is kept to
reproduce reference tables computed with it; it does not maximise the
relaxed problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import DegenerateRecursionError, SpecError
from .market import MarketData
from .policy import AffinePolicy, PolicyStep, WealthMoments, propagate_variance

__all__ = [
    "BankruptcySpec",
    "CONVENTIONS",
    "GMVRecursion",
    "SlackRecord",
    "build_gmv_policy",
    "check_multipliers",
    "dual_objective",
    "lagrangian_from_moments",
    "slackness_table",
    "solve_gmv_recursions",
]

CONVENTIONS = ("exact", "legacy")
DENOM_RTOL = 1e-12


@dataclass(frozen=True)
class BankruptcySpec:
    """
    Terminal trade-off plus per-period bankruptcy controls.

    Parameters
    ----------
    omega_T : float
        Weight on terminal variance, > 0.
    a, b : sequences of length T - 1
        Acceptable bankruptcy probabilities and disaster levels for
        ``t = 1..T-1``.
    x0 : float
        Initial wealth.
    """

    omega_T: float
    a: np.ndarray
    b: np.ndarray
    x0: float = 1.0

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if not self.omega_T > 0:
            raise SpecError(f"omega_T must be positive, got {self.omega_T}")
        if a.size != b.size:
            raise SpecError(f"a and b lengths differ ({a.size} vs {b.size})")
        if np.any(a < 0) or np.any(a > 1):
            raise SpecError("bankruptcy probabilities a_t must lie in [0, 1]")
        if not (np.all(np.isfinite(b)) and math.isfinite(self.x0)):
            raise SpecError("b and x0 must be finite")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "omega_T", float(self.omega_T))
        object.__setattr__(self, "x0", float(self.x0))

    @property
    def T(self) -> int:
        return self.a.size + 1

    @classmethod
    def uniform(cls, T: int, omega_T: float, a: float, b: float, x0: float = 1.0) -> "BankruptcySpec":
        return cls(omega_T, np.full(T - 1, a), np.full(T - 1, b), x0)

    def padded(self) -> Tuple[np.ndarray, np.ndarray]:
        """``a`` and ``b`` indexed ``0..T`` with zeros at both ends."""
        a = np.concatenate(([0.0], self.a, [0.0]))
        b = np.concatenate(([0.0], self.b, [0.0]))
        return a, b


def check_multipliers(omega, spec: BankruptcySpec) -> np.ndarray:
    w = np.asarray(omega, dtype=float).reshape(-1)
    if w.size != spec.T - 1:
        raise SpecError(f"expected {spec.T - 1} multipliers, got {w.size}")
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise SpecError("multipliers must be finite and nonnegative")
    return w


@dataclass(frozen=True)
class GMVRecursion:
    """Backward tables indexed ``0..T``.

    ``zeta[t]`` is the factor used at step ``t - 1`` (``zeta[0]`` is unused
    and set to 1); ``denom[t]`` is ``d_t`` for ``t = 0..T-1``.
    """

    pbar: np.ndarray
    eta: np.ndarray
    xi: np.ndarray
    zeta: np.ndarray
    denom: np.ndarray
    omega: np.ndarray  # padded 0..T: (0, omega_1..omega_{T-1}, omega_T)
    convention: str = "exact"


def _check_horizon(spec: BankruptcySpec, market: MarketData):
    if spec.T != market.T:
        raise SpecError(f"bankruptcy spec horizon {spec.T} != market horizon {market.T}")


def _backward(om, a, b, s, B, omega_T, exact):
    """Backward pass on plain floats; returns the five tables as lists."""
    T = len(s)
    pbar = [0.0] * (T + 1)
    eta = [0.0] * (T + 1)
    xi = [0.0] * (T + 1)
    zeta = [1.0] * (T + 1)
    denom = [0.0] * T
    pbar[T], xi[T] = omega_T, 0.5
    for t in range(T - 1, -1, -1):
        st, Bt = s[t], B[t]
        p1, e1 = pbar[t + 1], eta[t + 1]
        base = p1 * (1.0 - Bt)
        d = base - e1 * Bt if exact else base + e1 * Bt
        if d <= DENOM_RTOL * p1:
            raise DegenerateRecursionError(
                f"step {t}: pbar(1-B) - eta B = {d!r} <= 0, relaxed problem unbounded", period=t
            )
        denom[t] = d
        z = base / d if exact else (base + 2.0 * e1 * Bt) / d
        zeta[t + 1] = z
        pbar[t] = om[t] + st * st * (1.0 - Bt) * p1
        eta[t] = om[t] * a[t] + st * st * z * e1
        xi[t] = -om[t] * a[t] * b[t] + st * z * xi[t + 1]
    return pbar, eta, xi, zeta, denom


def _padded_lists(omega, spec: BankruptcySpec):
    om = [0.0, *(float(w) for w in omega), spec.omega_T]
    a = [0.0, *spec.a.tolist(), 0.0]
    b = [0.0, *spec.b.tolist(), 0.0]
    return om, a, b


def solve_gmv_recursions(omega, spec: BankruptcySpec, market: MarketData, convention: str = "exact") -> GMVRecursion:
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    _check_horizon(spec, market)
    w = check_multipliers(omega, spec)
    om, a, b = _padded_lists(w, spec)
    tables = _backward(om, a, b, market.s.tolist(), market.B.tolist(), spec.omega_T, convention == "exact")
    pbar, eta, xi, zeta, denom = (np.array(x) for x in tables)
    return GMVRecursion(pbar, eta, xi, zeta, denom, np.array(om), convention)


def build_gmv_policy(rec: GMVRecursion, spec: BankruptcySpec, market: MarketData) -> Tuple[AffinePolicy, WealthMoments]:
    """Optimal rule of the relaxed problem and its moment paths.

    ``c_t = s_t E x_t + (xi_{t+1} + eta_{t+1} s_t E x_t) / d_t``.
    """
    _check_horizon(spec, market)
    T = market.T
    x0 = spec.x0
    mean = np.empty(T + 1)
    mean[0] = x0
    steps = []
    for t in range(T):
        s, B = market.s[t], market.B[t]
        coef = (rec.xi[t + 1] + rec.eta[t + 1] * s * mean[t]) / rec.denom[t]
        steps.append(PolicyStep(market.K[t], s * mean[t] + coef, s))
        mean[t + 1] = rec.zeta[t + 1] * s * mean[t] + rec.xi[t + 1] * B / rec.denom[t]
    policy = AffinePolicy(tuple(steps))
    moments = propagate_variance(policy, market, x0)
    return policy, moments


def dual_objective(omega, spec: BankruptcySpec, market: MarketData, convention: str = "exact") -> float:
    """Closed-form optimal value H(omega) of the relaxed problem.

    Returns ``+inf`` where the relaxed problem is unbounded above.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    _check_horizon(spec, market)
    w = check_multipliers(omega, spec)
    om, a, b = _padded_lists(w, spec)
    s, B = market.s.tolist(), market.B.tolist()
    try:
        pbar, eta, xi, zeta, denom = _backward(om, a, b, s, B, spec.omega_T, convention == "exact")
    except DegenerateRecursionError:
        return math.inf
    x0 = spec.x0
    value = eta[1] * zeta[1] * s[0] * s[0] * x0 * x0 + 2.0 * xi[1] * zeta[1] * s[0] * x0
    for j in range(len(s)):
        value += xi[j + 1] ** 2 * B[j] / denom[j] + om[j] * a[j] * b[j] ** 2
    return value


def lagrangian_from_moments(omega, spec: BankruptcySpec, moments: WealthMoments) -> float:
    """The relaxed objective evaluated directly on a pair of moment paths."""
    w = check_multipliers(omega, spec)
    T = spec.T
    E, V = moments.mean, moments.variance
    penalty = np.sum(w * (V[1:T] - spec.a * (E[1:T] - spec.b) ** 2))
    return float(E[T] - spec.omega_T * V[T] - penalty)


@dataclass(frozen=True)
class SlackRecord:
    t: int
    var: float
    bound: float
    multiplier: float
    product: float

    @property
    def violation(self) -> float:
        return self.var - self.bound


def slackness_table(omega, spec: BankruptcySpec, moments: WealthMoments) -> List[SlackRecord]:
    w = check_multipliers(omega, spec)
    out = []
    for i in range(spec.T - 1):
        t = i + 1
        var = float(moments.variance[t])
        bound = float(spec.a[i] * (moments.mean[t] - spec.b[i]) ** 2)
        out.append(SlackRecord(t, var, bound, float(w[i]), float(w[i] * (var - bound))))
    return out
