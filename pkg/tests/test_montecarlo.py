import numpy as np
import pytest

from mfportfolio import (
    BankruptcySpec,
    ContractError,
    IntertemporalSpec,
    OptimalityViolation,
    SamplerSpec,
    build_gmv_policy,
    check_tchebycheff,
    example_market,
    lagrangian_from_moments,
    perturb_optimality,
    simulate,
    solve_gmv_recursions,
    solve_mmv,
)
from mfportfolio.mmv import mmv_objective_from_moments
from mfportfolio.montecarlo import BLOCK_SIZE, sample_excess_returns, within_se
from mfportfolio.policy import policy_from_arrays, zero_policy

from conftest import REF_OMEGA


@pytest.fixture(scope="module")
def gmv_policy(market, gmv_spec):
    return build_gmv_policy(solve_gmv_recursions(REF_OMEGA, gmv_spec, market, "legacy"), gmv_spec, market)


def test_sampler_spec():
    assert SamplerSpec("rademacher").kind == "rademacher_factor"
    with pytest.raises(ValueError):
        SamplerSpec("cauchy")
    with pytest.raises(ValueError):
        SamplerSpec("gaussian", -1)


@pytest.mark.parametrize("kind", ["gaussian", "rademacher_factor"])
def test_sampler_moments(market, kind):
    errs = []
    for n in (10_000, 1_000_000):
        P = sample_excess_returns(market, 0, n, SamplerSpec(kind, 3))
        mean_err = np.abs(P.mean(axis=0) - market.excess_mean[0])
        sd = np.sqrt(np.diag(market.covariance[0]))
        assert np.all(mean_err <= 4 * sd / np.sqrt(n))
        errs.append(np.abs(np.cov(P.T) - market.covariance[0]).max())
    assert errs[1] < errs[0]
    assert errs[1] < 5e-4


def test_rademacher_is_two_valued_per_factor(market):
    P = sample_excess_returns(market, 0, 1000, SamplerSpec("rademacher_factor", 1))
    # z in {-1, 1}^3 gives at most eight distinct return vectors
    assert len({tuple(np.round(r, 12)) for r in P}) <= 8


def test_riskless_paths(market):
    rep = simulate(zero_policy(market), market, 2.0, SamplerSpec("gaussian", 0), 1000, disaster_levels=np.zeros(4))
    expected = 2.0 * np.cumprod(np.r_[1.0, market.s])
    np.testing.assert_allclose(rep.mean_hat, expected, rtol=1e-14)
    np.testing.assert_allclose(rep.var_hat, 0.0, atol=1e-20)
    np.testing.assert_array_equal(rep.bankruptcy_freq, 0.0)


def test_seed_determinism(market, gmv_policy):
    pol, _ = gmv_policy
    a = simulate(pol, market, 1.0, SamplerSpec("gaussian", 5), BLOCK_SIZE + 17)
    b = simulate(pol, market, 1.0, SamplerSpec("gaussian", 5), BLOCK_SIZE + 17)
    c = simulate(pol, market, 1.0, SamplerSpec("gaussian", 6), BLOCK_SIZE + 17)
    np.testing.assert_array_equal(a.mean_hat, b.mean_hat)
    np.testing.assert_array_equal(a.var_hat, b.var_hat)
    assert not np.array_equal(a.mean_hat, c.mean_hat)


def test_standard_errors_scale(market, gmv_policy):
    pol, _ = gmv_policy
    small = simulate(pol, market, 1.0, SamplerSpec("gaussian", 1), 10_000)
    large = simulate(pol, market, 1.0, SamplerSpec("gaussian", 1), 160_000)
    ratio = small.mean_se[1:] / large.mean_se[1:]
    np.testing.assert_allclose(ratio, 4.0, rtol=0.1)
    assert np.all(large.var_hat >= 0)


@pytest.mark.parametrize("kind", ["gaussian", "rademacher_factor"])
def test_moments_match_analytics(market, gmv_spec, gmv_policy, kind):
    pol, mom = gmv_policy
    rep = simulate(pol, market, 1.0, SamplerSpec(kind, 11), 200_000, gmv_spec.b, gmv_spec.omega_T)
    assert np.all(within_se(rep.mean_hat, rep.mean_se, mom.mean))
    assert np.all(within_se(rep.var_hat, rep.var_se, mom.variance))
    assert np.all(within_se(rep.control_dev_mean, rep.control_dev_se, 0.0))
    target = mom.mean[-1] - gmv_spec.omega_T * mom.variance[-1]
    assert abs(rep.objective_hat - target) <= 3 * rep.objective_se + 3 * rep.var_se[-1]
    assert all(r.holds for r in check_tchebycheff(rep, gmv_spec, mom))


def test_tchebycheff_example_bound(market, gmv_spec, gmv_policy):
    pol, mom = gmv_policy
    rep = simulate(pol, market, 1.0, SamplerSpec("gaussian", 2), 100_000, gmv_spec.b)
    rec = check_tchebycheff(rep, gmv_spec, mom)[0]
    assert rec.bound == pytest.approx(0.1275 / 1.2366**2, abs=2e-4)
    assert rec.within_target and rec.freq < rec.bound / 10


def test_tchebycheff_riskless(market):
    spec = BankruptcySpec.uniform(5, 1.0, 0.1, 0.5)
    pol = zero_policy(market)
    rep = simulate(pol, market, 1.0, SamplerSpec("gaussian", 0), 100, spec.b)
    from mfportfolio import affine_moments

    recs = check_tchebycheff(rep, spec, affine_moments(pol, market, 1.0))
    assert all(r.freq == 0 and r.bound == 0 and r.holds for r in recs)


def test_tchebycheff_inapplicable(market, gmv_policy):
    pol, mom = gmv_policy
    spec = BankruptcySpec.uniform(5, 1.0, 0.1, 5.0)
    rep = simulate(pol, market, 1.0, SamplerSpec("gaussian", 0), 1000, spec.b)
    recs = check_tchebycheff(rep, spec, mom)
    assert not any(r.applicable for r in recs)
    assert all(r.holds for r in recs)


def test_overflow_paths_excluded():
    from mfportfolio import MarketData

    # holdings of 1e308 overflow exactly when |P| > 1.797, a third of paths here
    mk = MarketData([1.05], [[0.1]], [[[4.01]]])
    pol = policy_from_arrays([1e300], [[1e8]], [1.05])
    rep = simulate(pol, mk, 1.0, SamplerSpec("gaussian", 0), 1000)
    assert 200 < rep.n_excluded < 500
    assert rep.n_paths + rep.n_excluded == 1000
    with pytest.raises(ArithmeticError):
        simulate(policy_from_arrays([1e300], [[1e20]], [1.05]), mk, 1.0, SamplerSpec("gaussian", 0), 100)


def test_simulate_validation(market):
    with pytest.raises(ValueError):
        simulate(zero_policy(market), market, 1.0, SamplerSpec(), 0)
    with pytest.raises(ContractError):
        simulate(zero_policy(example_market(2)), market, 1.0, SamplerSpec(), 10)
    with pytest.raises(ValueError):
        simulate(zero_policy(market), market, 1.0, SamplerSpec(), 10, disaster_levels=[0.0])


def test_perturbation_classical(market):
    spec = IntertemporalSpec.classical(5, 1.0)
    sol = solve_mmv(spec, market, 1.0)
    rep = perturb_optimality(sol.policy, lambda m: mmv_objective_from_moments(spec, m), market, 1.0, 1e-2, 200)
    assert rep.max_improvement <= 1e-12
    assert np.all(rep.intercept_deltas < 0) and np.all(rep.direction_deltas < 0)


def test_perturbation_lagrangian(market, gmv_spec):
    pol, _ = build_gmv_policy(solve_gmv_recursions(REF_OMEGA, gmv_spec, market), gmv_spec, market)
    rep = perturb_optimality(pol, lambda m: lagrangian_from_moments(REF_OMEGA, gmv_spec, m), market, 1.0, 1e-2, 200)
    assert rep.max_improvement <= 1e-12


def test_perturbation_zero_scale(market):
    spec = IntertemporalSpec.classical(5, 1.0)
    sol = solve_mmv(spec, market, 1.0)
    rep = perturb_optimality(sol.policy, lambda m: mmv_objective_from_moments(spec, m), market, 1.0, 0.0, 5)
    np.testing.assert_array_equal(rep.intercept_deltas, 0.0)
    np.testing.assert_array_equal(rep.direction_deltas, 0.0)


def test_perturbation_detects_suboptimal(market):
    spec = IntertemporalSpec.classical(5, 1.0)
    sol = solve_mmv(spec, market, 1.0)
    worse = sol.policy.replace(intercepts=sol.policy.intercepts * 1.2)
    with pytest.raises(OptimalityViolation) as info:
        perturb_optimality(worse, lambda m: mmv_objective_from_moments(spec, m), market, 1.0, 5e-2, 200)
    assert info.value.witness is not None


def test_within_se():
    assert within_se(1.0, 0.1, 1.29).item()
    assert not within_se(1.0, 0.1, 1.31).item()
    assert within_se(0.0, 0.0, 0.0).item()
    assert not within_se(0.0, 0.0, 1e-6).item()
