"""
JSON and CSV serialisation of markets, objectives, policies and results.

Market files take one of three shapes::

    {"T": 5, "replicate": {"s": 1.05, "mean_return": [...], "covariance": [[...]]}}
    {"periods": [{"s": ..., "mean_return": [...], "covariance": [[...]]}, ...]}
    {"s": [...], "excess_mean": [[...]], "excess_second_moment": [[[...]]]}

A period may give ``stdev`` and ``correlation`` instead of ``covariance``,
or ``excess_mean`` and ``excess_second_moment`` directly.  Floats are written
with Python's shortest round-trip ``repr`` (JSON) or ``%.17g`` (CSV), so
reading back reproduces every bit.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Tuple, Union

import numpy as np

from .dual import DualResult, TraceRow
from .errors import InputFileError
from .gmv import BankruptcySpec
from .market import AssetMoments, MarketData, excess_moments
from .mmv import IntertemporalSpec, MMVSolution
from .montecarlo import SimReport
from .policy import AffinePolicy, PolicyStep, WealthMoments

__all__ = [
    "FRONTIER_HEADER",
    "dual_result_to_dict",
    "load_json",
    "market_from_dict",
    "market_to_dict",
    "objective_from_dict",
    "policy_from_dict",
    "policy_to_dict",
    "read_market",
    "read_objective",
    "read_policy",
    "solution_to_dict",
    "write_csv",
    "write_json",
]

PathLike = Union[str, Path]
FRONTIER_HEADER = ("omega_T", "mean_T", "var_T", "model")


def load_json(path: PathLike) -> Any:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise InputFileError(exc.strerror or str(exc), path=p) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputFileError(exc.msg, path=p, line=exc.lineno) from exc


def _get(d: Mapping, key: str, where: str, path=None):
    if not isinstance(d, Mapping):
        raise InputFileError("expected a JSON object", path=path, field=where or None)
    if key not in d:
        raise InputFileError("missing required field", path=path, field=f"{where}.{key}" if where else key)
    return d[key]


def _array(value, field: str, path=None, ndim=None) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputFileError(f"not a numeric array ({exc})", path=path, field=field) from exc
    if ndim is not None and arr.ndim != ndim:
        raise InputFileError(f"expected {ndim}-dimensional array, got shape {arr.shape}", path=path, field=field)
    return arr


def _period_excess(d: Mapping, where: str, path=None) -> Tuple[float, np.ndarray, np.ndarray]:
    s = float(_get(d, "s", where, path))
    if "excess_mean" in d:
        m = _array(d["excess_mean"], f"{where}.excess_mean", path, 1)
        e2 = _array(_get(d, "excess_second_moment", where, path), f"{where}.excess_second_moment", path, 2)
        return s, m, e2
    mean = _array(_get(d, "mean_return", where, path), f"{where}.mean_return", path, 1)
    if "covariance" in d:
        asset = AssetMoments(s, mean, _array(d["covariance"], f"{where}.covariance", path, 2))
    else:
        sd = _array(_get(d, "stdev", where, path), f"{where}.stdev", path, 1)
        corr = _array(_get(d, "correlation", where, path), f"{where}.correlation", path, 2)
        asset = AssetMoments.from_stdev(s, mean, sd, corr)
    m, e2 = excess_moments(asset)
    return s, m, e2


def market_from_dict(d: Mapping, path=None) -> MarketData:
    if not isinstance(d, Mapping):
        raise InputFileError("market must be a JSON object", path=path)
    if "replicate" in d:
        T = int(_get(d, "T", "", path))
        if T < 1:
            raise InputFileError("T must be >= 1", path=path, field="T")
        s, m, e2 = _period_excess(d["replicate"], "replicate", path)
        return MarketData.replicate(s, m, e2, T)
    if "periods" in d:
        periods = d["periods"]
        if not isinstance(periods, list) or not periods:
            raise InputFileError("expected a non-empty list", path=path, field="periods")
        rows = [_period_excess(p, f"periods[{i}]", path) for i, p in enumerate(periods)]
        if "T" in d and int(d["T"]) != len(rows):
            raise InputFileError(f"T={d['T']} but {len(rows)} periods given", path=path, field="T")
        s, m, e2 = zip(*rows)
        return MarketData(np.array(s), np.array(m), np.array(e2))
    if "excess_mean" in d:
        m = _array(d["excess_mean"], "excess_mean", path)
        e2 = _array(_get(d, "excess_second_moment", "", path), "excess_second_moment", path)
        s = _array(_get(d, "s", "", path), "s", path)
        if m.ndim == 1:
            T = int(d.get("T", 1))
            return MarketData.replicate(float(s), m, e2, T)
        return MarketData(np.broadcast_to(s, (m.shape[0],)), m, e2)
    raise InputFileError("need one of 'replicate', 'periods' or 'excess_mean'", path=path)


def market_to_dict(market: MarketData) -> Dict[str, Any]:
    return {
        "s": market.s.tolist(),
        "excess_mean": market.excess_mean.tolist(),
        "excess_second_moment": market.excess_second_moment.tolist(),
    }


def read_market(path: PathLike) -> MarketData:
    return market_from_dict(load_json(path), path=Path(path))


def objective_from_dict(d: Mapping, T: int, path=None) -> Tuple[Union[IntertemporalSpec, BankruptcySpec], float]:
    """Objective for a ``T``-period market and the initial wealth (``x0``, default 1)."""
    kind = _get(d, "kind", "", path)
    x0 = float(d.get("x0", 1.0))
    if kind == "classical":
        return IntertemporalSpec.classical(T, float(_get(d, "omega_T", "", path))), x0
    if kind == "intertemporal":
        spec = IntertemporalSpec(*(_array(_get(d, k, "", path), k, path, 1) for k in ("alpha", "ell", "rho")))
        return spec, x0
    if kind == "gmv":
        a = _array(_get(d, "a", "", path), "a", path, 1)
        b = _array(_get(d, "b", "", path), "b", path, 1)
        return BankruptcySpec(float(_get(d, "omega_T", "", path)), a, b, x0), x0
    raise InputFileError(f"unknown kind {kind!r}", path=path, field="kind")


def read_objective(path: PathLike, T: int):
    return objective_from_dict(load_json(path), T, path=Path(path))


def policy_to_dict(policy: AffinePolicy) -> Dict[str, Any]:
    return {"steps": [{"t": t, "c": st.c, "s": st.s, "K": st.K.tolist()} for t, st in enumerate(policy.steps)]}


def policy_from_dict(d: Mapping, path=None) -> AffinePolicy:
    if "policy" in d:
        d = d["policy"]
    steps = _get(d, "steps", "", path)
    out = []
    for i, st in enumerate(steps):
        where = f"steps[{i}]"
        out.append(PolicyStep(_array(_get(st, "K", where, path), f"{where}.K", path, 1),
                              float(_get(st, "c", where, path)), float(_get(st, "s", where, path))))
    return AffinePolicy(tuple(out))


def read_policy(path: PathLike) -> AffinePolicy:
    return policy_from_dict(load_json(path), path=Path(path))


def moments_to_dict(moments: WealthMoments) -> Dict[str, List[float]]:
    return {"mean": moments.mean.tolist(), "variance": moments.variance.tolist()}


def solution_to_dict(sol: MMVSolution) -> Dict[str, Any]:
    return {"policy": policy_to_dict(sol.policy), "moments": moments_to_dict(sol.moments), "objective": sol.objective}


def dual_result_to_dict(res: DualResult) -> Dict[str, Any]:
    return {
        "omega_star": res.omega_star.tolist(),
        "H": res.H_value,
        "converged": res.converged,
        "iterations": res.iterations,
        "convention": res.convention,
        "policy": policy_to_dict(res.policy),
        "moments": moments_to_dict(res.moments),
        "slackness": [
            {"t": r.t, "var": r.var, "bound": r.bound, "multiplier": r.multiplier, "product": r.product}
            for r in res.slackness
        ],
    }


def sim_report_to_dict(report: SimReport) -> Dict[str, Any]:
    return report.to_dict()


def _plain(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, default=_plain)


def write_json(obj: Any, path: PathLike) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write ``rows`` under ``header``; ``path`` may also be an open text stream."""
    if hasattr(path, "write"):
        _write_rows(path, header, rows)
        return
    with open(path, "w", newline="") as fh:
        _write_rows(fh, header, rows)


def _write_rows(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])


def trace_rows(trace: Sequence[TraceRow]):
    return [(r.iter, r.mu, r.H, r.grad_norm) for r in trace]


def sim_period_rows(report: SimReport):
    """One CSV row per time step ``t = 0..T``."""
    rows = []
    for t in range(report.T + 1):
        freq = report.bankruptcy_freq[t - 1] if 1 <= t < report.T else float("nan")
        rows.append((t, report.mean_hat[t], report.mean_se[t], report.var_hat[t], report.var_se[t], freq))
    return rows


SIM_HEADER = ("t", "mean_hat", "mean_se", "var_hat", "var_se", "bankruptcy_freq")
