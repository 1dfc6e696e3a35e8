"""
Command-line entry point.

Exit codes
----------
0  success
1  a verification check failed
2  malformed input file or invalid data
3  infeasible market (``B_t >= 1``)
4  dual optimiser did not converge (best iterate still written)

Results go to ``--output`` (or stdout as JSON when omitted); a short summary
is printed to stdout and diagnostics are logged to stderr.  A market or
objective path of the form ``@name`` loads a bundled example such as
``@example_market``.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from importlib import resources
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import io
from .dual import BarrierSettings, solve_dual
from .errors import (
    ContractError,
    InfeasibleMarketError,
    InputFileError,
    OptimalityViolation,
    SpecError,
    ValidationError,
)
from .frontier import dominance_gaps, gmv_frontier, mv_frontier, omega_grid
from .gmv import CONVENTIONS, BankruptcySpec, lagrangian_from_moments
from .mmv import (
    IntertemporalSpec,
    breakpoints,
    mmv_objective_from_moments,
    segment_params,
    solve_mmv,
    solve_pq,
)
from .montecarlo import SamplerSpec, check_tchebycheff, perturb_optimality, simulate, within_se

log = logging.getLogger("mfportfolio")

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NONCONVERGED = 0, 1, 2, 3, 4


def _resolve(path: str) -> Path:
    if path.startswith("@"):
        name = path[1:]
        ref = resources.files("mfportfolio") / "data" / f"{name}.json"
        if not ref.is_file():
            raise InputFileError(f"no bundled input named {name!r}", path=path)
        return Path(str(ref))
    return Path(path)


def _market(args):
    return io.read_market(_resolve(args.market))


def _objective(args, T):
    obj, x0 = io.read_objective(_resolve(args.objective), T)
    if args.x0 is not None:
        x0 = args.x0
        if isinstance(obj, BankruptcySpec):
            obj = BankruptcySpec(obj.omega_T, obj.a, obj.b, x0)
    return obj, x0


def _settings(args) -> BarrierSettings:
    return BarrierSettings(
        mu_initial=args.mu_init,
        mu_factor=args.mu_factor,
        mu_final=args.mu_final,
        fd_step=args.fd_step,
        max_iters=args.max_iters,
        grad_tol=args.grad_tol,
    )


def _emit(obj, output: Optional[str]):
    if output:
        io.write_json(obj, output)
    else:
        sys.stdout.write(io.dumps(obj) + "\n")


def _summary(line: str, args):
    # keep stdout clean when it already carries the JSON result
    if getattr(args, "output", None):
        print(line)
    else:
        print(line, file=sys.stderr)


def cmd_solve_mmv(args, require_intertemporal=False) -> int:
    market = _market(args)
    spec, x0 = _objective(args, market.T)
    if not isinstance(spec, IntertemporalSpec):
        raise SpecError("solve-mmv and solve-ir need a classical or intertemporal objective")
    sol = solve_mmv(spec, market, x0)
    out = io.solution_to_dict(sol)
    if require_intertemporal:
        taus = breakpoints(spec)
        out["segments"] = [dict(zip(("tau", "G", "S", "A", "D"), (tau, *seg)))
                           for tau, seg in zip(taus, segment_params(solve_pq(spec, market), market, taus))]
    _emit(out, args.output)
    _summary(f"objective={float(sol.objective)!r} mean_T={float(sol.moments.mean[-1])!r} var_T={float(sol.moments.variance[-1])!r}", args)
    return EXIT_OK


def cmd_solve_gmv(args) -> int:
    market = _market(args)
    spec, _ = _objective(args, market.T)
    if not isinstance(spec, BankruptcySpec):
        raise SpecError("solve-gmv needs an objective of kind 'gmv'")
    res = solve_dual(spec, market, _settings(args), args.convention, record_trace=bool(args.trace))
    _emit(io.dual_result_to_dict(res), args.output)
    if args.trace:
        io.write_csv(args.trace, ("iter", "mu", "H", "grad_norm"), io.trace_rows(res.trace))
    _summary(f"H={res.H_value!r} omega_star={res.omega_star.tolist()} converged={res.converged} "
             f"max_violation={res.max_violation:.3e}", args)
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_frontier(args) -> int:
    market = _market(args)
    omegas = omega_grid(args.omega_min, args.omega_max, args.points, args.log_scale)
    x0 = 1.0 if args.x0 is None else args.x0
    points = []
    gmv_spec = None
    if args.objective:
        gmv_spec, x0 = _objective(args, market.T)
        if not isinstance(gmv_spec, BankruptcySpec):
            raise SpecError("frontier --objective must be of kind 'gmv'")
    points += mv_frontier(market, x0, omegas)
    if gmv_spec is not None:
        points += gmv_frontier(market, gmv_spec.a, gmv_spec.b, x0, omegas, _settings(args), args.convention)
    out = args.output or args.csv
    if out:
        io.write_csv(out, io.FRONTIER_HEADER, (p.row() for p in points))
    else:
        io.write_csv(sys.stdout, io.FRONTIER_HEADER, (p.row() for p in points))
    if args.plot:
        from .plotting import plot_frontier

        plot_frontier(points, args.plot)
    gaps = dominance_gaps(market, x0, [p for p in points if p.model == "GMV"])
    worst = float(gaps.min()) if gaps.size else 0.0
    if out:
        print(f"points={len(points)} min_gmv_gap={worst!r}")
    return EXIT_OK if all(p.converged for p in points) else EXIT_NONCONVERGED


def cmd_simulate(args) -> int:
    market = _market(args)
    policy = io.read_policy(args.policy)
    x0 = 1.0 if args.x0 is None else args.x0
    b = omega_T = None
    if args.objective:
        spec, x0o = _objective(args, market.T)
        x0 = x0o
        if isinstance(spec, BankruptcySpec):
            b, omega_T = spec.b, spec.omega_T
    report = simulate(policy, market, x0, SamplerSpec(args.sampler, args.seed), args.paths, b, omega_T)
    _emit(io.sim_report_to_dict(report), args.output)
    if args.csv:
        io.write_csv(args.csv, io.SIM_HEADER, io.sim_period_rows(report))
    _summary(f"paths={report.n_paths} excluded={report.n_excluded} mean_T={float(report.mean_hat[-1])!r} "
             f"var_T={float(report.var_hat[-1])!r}", args)
    return EXIT_OK


def cmd_verify(args) -> int:
    """Solve, then check the solution by simulation and by perturbation."""
    market = _market(args)
    spec, x0 = _objective(args, market.T)
    sampler = SamplerSpec(args.sampler, args.seed)
    out = {}
    ok = True
    if isinstance(spec, BankruptcySpec):
        res = solve_dual(spec, market, _settings(args), args.convention)
        policy, moments = res.policy, res.moments
        omega = res.omega_star

        def objective(m):
            return lagrangian_from_moments(omega, spec, m)

        report = simulate(policy, market, x0, sampler, args.paths, spec.b, spec.omega_T)
        records = check_tchebycheff(report, spec, moments)
        out["tchebycheff"] = [r.__dict__ for r in records]
        ok &= all(r.holds for r in records)
        ok &= res.converged
        out["dual"] = io.dual_result_to_dict(res)
    else:
        sol = solve_mmv(spec, market, x0)
        policy, moments = sol.policy, sol.moments

        def objective(m):
            return mmv_objective_from_moments(spec, m)

        report = simulate(policy, market, x0, sampler, args.paths)
    moments_ok = bool(np.all(within_se(report.mean_hat, report.mean_se, moments.mean))
                      and np.all(within_se(report.var_hat, report.var_se, moments.variance)))
    ok &= moments_ok
    try:
        pert = perturb_optimality(policy, objective, market, x0, args.scale, args.trials, args.seed)
        out["perturbation"] = {"trials": pert.n_trials, "scale": pert.scale, "max_improvement": pert.max_improvement}
    except OptimalityViolation as exc:
        out["perturbation"] = {"error": str(exc)}
        ok = False
    out["simulation"] = io.sim_report_to_dict(report)
    out["moments_within_3se"] = moments_ok
    out["passed"] = bool(ok)
    _emit(out, args.output)
    _summary(f"verify passed={bool(ok)} moments_within_3se={moments_ok}", args)
    return EXIT_OK if ok else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfportfolio", description="Multi-period mean-variance portfolio solvers.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, objective=True, objective_required=True):
        sp.add_argument("--market", required=True, help="market JSON file or @bundled-name")
        if objective:
            sp.add_argument("--objective", required=objective_required, help="objective JSON file or @bundled-name")
        sp.add_argument("--output", "-o", help="result file (stdout if omitted)")
        sp.add_argument("--x0", type=float, help="initial wealth (overrides the objective file)")

    def barrier(sp):
        d = BarrierSettings()
        sp.add_argument("--mu-init", type=float, default=d.mu_initial, help="first barrier weight")
        sp.add_argument("--mu-factor", type=float, default=d.mu_factor, help="barrier weight multiplier per stage")
        sp.add_argument("--mu-final", type=float, default=d.mu_final, help="last barrier weight")
        sp.add_argument("--fd-step", type=float, default=d.fd_step, help="finite-difference step for the gradient of H")
        sp.add_argument("--max-iters", type=int, default=d.max_iters, help="total descent iteration budget")
        sp.add_argument("--grad-tol", type=float, default=d.grad_tol, help="stage stopping tolerance on the scaled gradient")
        sp.add_argument("--convention", choices=CONVENTIONS, default="exact",
                        help="denominator sign; legacy reproduces older reference tables")

    def mc(sp):
        sp.add_argument("--paths", type=int, default=100_000, help="number of simulated paths")
        sp.add_argument("--seed", type=int, default=0, help="root seed of the random stream")
        sp.add_argument("--sampler", choices=("gaussian", "rademacher", "rademacher_factor"), default="gaussian", help="return distribution")

    sp = sub.add_parser("solve-mmv", help="classical or intertemporal mean-variance policy")
    common(sp)
    sp = sub.add_parser("solve-ir", help="intertemporal objective, with segment constants")
    common(sp)
    sp = sub.add_parser("solve-gmv", help="bankruptcy-constrained policy via the dual")
    common(sp)
    barrier(sp)
    sp.add_argument("--trace", help="write the convergence trace CSV here")
    sp = sub.add_parser("frontier", help="sweep omega_T and write the frontier CSV")
    common(sp, objective_required=False)
    barrier(sp)
    sp.add_argument("--omega-min", type=float, default=0.1)
    sp.add_argument("--omega-max", type=float, default=10.0)
    sp.add_argument("--points", type=int, default=20, help="grid size")
    sp.add_argument("--log-scale", action="store_true", help="geometric omega_T grid")
    sp.add_argument("--csv", help="alias for --output")
    sp.add_argument("--plot", help="also render the frontier to this image file")
    sp = sub.add_parser("simulate", help="Monte Carlo paths under a policy file")
    common(sp, objective_required=False)
    mc(sp)
    sp.add_argument("--policy", required=True, help="policy or solution JSON")
    sp.add_argument("--csv", help="per-period statistics CSV")
    sp = sub.add_parser("verify", help="solve, simulate and perturb")
    common(sp)
    barrier(sp)
    mc(sp)
    sp.add_argument("--scale", type=float, default=1e-2, help="relative perturbation size")
    sp.add_argument("--trials", type=int, default=200, help="perturbation trials")
    return p


COMMANDS = {
    "solve-mmv": cmd_solve_mmv,
    "solve-ir": lambda a: cmd_solve_mmv(a, require_intertemporal=True),
    "solve-gmv": cmd_solve_gmv,
    "frontier": cmd_frontier,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.captureWarnings(True)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args)
    except InfeasibleMarketError as exc:
        log.error("infeasible market: %s", exc)
        return EXIT_INFEASIBLE
    except (InputFileError, ValidationError, SpecError, ContractError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
