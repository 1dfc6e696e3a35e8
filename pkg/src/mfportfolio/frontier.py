"""Efficient-frontier sweeps over the terminal variance weight."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .dual import BarrierSettings, solve_dual
from .gmv import BankruptcySpec
from .market import MarketData
from .mmv import IntertemporalSpec, classical_frontier, solve_mmv

__all__ = ["FrontierPoint", "omega_grid", "gmv_frontier", "mv_frontier", "dominance_gaps"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrontierPoint:
    omega_T: float
    mean_T: float
    var_T: float
    model: str
    converged: bool = True

    def row(self):
        return (self.omega_T, self.mean_T, self.var_T, self.model)


def omega_grid(omega_min: float, omega_max: float, points: int, log_scale: bool = False) -> np.ndarray:
    if not (0 < omega_min < omega_max):
        raise ValueError("need 0 < omega_min < omega_max")
    if points < 2:
        raise ValueError("need at least two grid points")
    if log_scale:
        return np.geomspace(omega_min, omega_max, points)
    return np.linspace(omega_min, omega_max, points)


def mv_frontier(market: MarketData, x0: float, omegas: Sequence[float]) -> List[FrontierPoint]:
    out = []
    for w in omegas:
        sol = solve_mmv(IntertemporalSpec.classical(market.T, float(w)), market, x0)
        out.append(FrontierPoint(float(w), float(sol.moments.mean[-1]), float(sol.moments.variance[-1]), "MV"))
    return out


def gmv_frontier(market: MarketData, a: Sequence[float], b: Sequence[float], x0: float, omegas: Sequence[float],
                 settings: BarrierSettings = BarrierSettings(), convention: str = "exact") -> List[FrontierPoint]:
    """Dual-optimal terminal moments for each ``omega_T``, warm-started along the grid."""
    out = []
    start: Optional[np.ndarray] = None
    for w in omegas:
        spec = BankruptcySpec(float(w), a, b, x0)
        res = solve_dual(spec, market, settings, convention, initial=start)
        if not res.converged:
            log.warning("omega_T=%g: dual optimiser did not converge", w)
        # keep the warm start away from the boundary so the barrier has room
        start = np.maximum(res.omega_star, 1e-2) if res.omega_star.size else None
        out.append(FrontierPoint(float(w), float(res.moments.mean[-1]), float(res.moments.variance[-1]), "GMV",
                                 res.converged))
    return out


def dominance_gaps(market: MarketData, x0: float, points: Sequence[FrontierPoint]) -> np.ndarray:
    """``var_T`` minus the unconstrained minimum variance at the same ``mean_T``.

    Nonnegative entries mean the point lies on or above the MV frontier.
    """
    coeffs = classical_frontier(market, x0)
    means = np.array([p.mean_T for p in points])
    var = np.array([p.var_T for p in points])
    return var - coeffs.variance_at(means)
