import math

import numpy as np
import pytest

from mfportfolio import (
    BankruptcySpec,
    BarrierSettings,
    IntertemporalSpec,
    SpecError,
    build_gmv_policy,
    dual_objective,
    example_market,
    solve_dual,
    solve_gmv_recursions,
    solve_mmv,
)
from mfportfolio.dual import barrier_objective, gradient_fd

from conftest import REF_OMEGA


def test_settings_validation():
    assert BarrierSettings().schedule()[0] == 1e-2
    assert BarrierSettings().schedule()[-1] == 1e-8
    for bad in (dict(mu_final=1.0), dict(mu_factor=1.0), dict(fd_step=0.0), dict(armijo_c=1.0), dict(max_iters=0)):
        with pytest.raises(SpecError):
            BarrierSettings(**bad)


def test_barrier_objective(market, gmv_spec):
    H = dual_objective(REF_OMEGA, gmv_spec, market)
    assert barrier_objective(REF_OMEGA, 0.0, gmv_spec, market) == H
    ones = np.ones(4)
    assert barrier_objective(ones, 0.3, gmv_spec, market) == dual_objective(ones, gmv_spec, market)
    logs = math.log(0.0014) + math.log(0.2658) + math.log(0.2543) + math.log(0.0014)
    assert barrier_objective(REF_OMEGA, 1e-6, gmv_spec, market) == pytest.approx(H - 1e-6 * logs, rel=1e-14)
    with pytest.raises(ValueError):
        barrier_objective([0.0, 1, 1, 1], 1e-3, gmv_spec, market)


def test_gradient_on_quadratic_seam(market, gmv_spec):
    A = np.array([[2.0, 0.3], [0.3, 1.0]])

    def quad(w):
        return 0.5 * w @ A @ w + w.sum()

    spec = BankruptcySpec(1.0, [0.1, 0.1], [0.0, 0.0])
    mk = example_market(3)
    w = np.array([0.7, 1.9])
    g = gradient_fd(w, 0.01, 1e-5, spec, mk, objective=quad)
    np.testing.assert_allclose(g, A @ w + 1 - 0.01 / w, rtol=1e-9)


def test_gradient_shrinks_near_boundary(market, gmv_spec, caplog):
    w = np.array([1e-8, 0.3, 0.2, 1e-8])
    with caplog.at_level("DEBUG", logger="mfportfolio.dual"):
        g = gradient_fd(w, 1e-3, 1e-6, gmv_spec, market)
    assert np.all(np.isfinite(g))
    assert "shrunk" in caplog.text


def test_gradient_envelope_identity():
    """dH/domega_t equals a_t (E x_t - b_t)^2 - Var(x_t) at the relaxed optimum."""
    rng = np.random.default_rng(21)
    mk = example_market(5)
    for _ in range(20):
        spec = BankruptcySpec(rng.uniform(0.5, 2), rng.uniform(0.02, 0.2, 4), rng.uniform(-0.3, 0.3, 4))
        w = rng.uniform(0.05, 0.5, 4)
        if not math.isfinite(dual_objective(w, spec, mk)):
            continue
        _, mom = build_gmv_policy(solve_gmv_recursions(w, spec, mk), spec, mk)
        analytic = spec.a * (mom.mean[1:5] - spec.b) ** 2 - mom.variance[1:5]
        np.testing.assert_allclose(gradient_fd(w, 0.0, 1e-6, spec, mk), analytic, atol=1e-7)


def test_gradient_stencil_at_reference(market, gmv_spec):
    g_h = gradient_fd(REF_OMEGA, 0.0, 1e-6, gmv_spec, market, "legacy")
    assert np.all(np.abs(g_h[1:3]) < 1e-3)
    g_b = gradient_fd(REF_OMEGA, 1e-3, 1e-6, gmv_spec, market, "legacy")
    # tiny coordinates are dominated by -mu / omega
    assert np.all(np.abs(g_b[[0, 3]] + 1e-3 / REF_OMEGA[[0, 3]]) < 0.05 * 1e-3 / REF_OMEGA[[0, 3]])


def test_solve_dual_example(market, gmv_spec):
    res = solve_dual(gmv_spec, market, record_trace=True)
    assert res.converged
    assert res.H_value <= dual_objective(REF_OMEGA, gmv_spec, market) + 1e-4
    assert res.max_violation <= 1e-6
    assert res.max_abs_product < 1e-3
    assert np.all(res.omega_star > 0)
    assert all(min(r.omega) > 0 for r in res.trace)
    # barrier objective never increases along accepted steps within a stage
    for prev, cur in zip(res.trace, res.trace[1:]):
        if prev.mu == cur.mu:
            f_prev = barrier_objective(prev.omega, cur.mu, gmv_spec, market)
            assert barrier_objective(cur.omega, cur.mu, gmv_spec, market) <= f_prev
    assert np.all(np.diff(res.outer_H) <= 1e-7)
    assert res.trace and res.trace[0].mu == 1e-2


def test_solve_dual_grid_oracle_two_periods():
    mk = example_market(2)
    spec = BankruptcySpec(1.0, [0.05], [0.0])
    grid = np.round(np.arange(0, 100001) * 1e-4, 10)
    values = np.array([dual_objective([w], spec, mk) for w in grid])
    k = int(np.argmin(values))
    res = solve_dual(spec, mk)
    assert abs(res.omega_star[0] - grid[k]) <= 2e-4
    assert res.H_value <= values[k] + 1e-9


def test_slack_constraints_give_classical(market):
    spec = BankruptcySpec.uniform(5, 1.0, 1.0, -1e3)
    res = solve_dual(spec, market)
    assert np.all(res.omega_star < 1e-5)
    sol = solve_mmv(IntertemporalSpec.classical(5, 1.0), market, 1.0)
    np.testing.assert_allclose(res.policy.intercepts, sol.policy.intercepts, rtol=1e-4)
    assert res.H_value == pytest.approx(sol.objective, abs=1e-5)


def test_single_period_returns_classical():
    mk = example_market(1)
    res = solve_dual(BankruptcySpec(1.0, [], []), mk)
    assert res.omega_star.size == 0 and res.converged
    sol = solve_mmv(IntertemporalSpec.classical(1, 1.0), mk, 1.0)
    np.testing.assert_array_equal(res.policy.intercepts, sol.policy.intercepts)


def test_nonconvergence_flag(market, gmv_spec, caplog):
    res = solve_dual(gmv_spec, market, BarrierSettings(max_iters=2))
    assert not res.converged
    assert np.all(res.omega_star > 0)
    assert "stopped" in caplog.text


def test_horizon_mismatch(market):
    with pytest.raises(SpecError):
        solve_dual(BankruptcySpec(1.0, [0.1], [0.0]), market)
