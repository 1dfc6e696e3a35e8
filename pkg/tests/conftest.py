import sys
import numpy as np
import pytest

from mfportfolio import BankruptcySpec, MarketData, example_market

# Multipliers and tables quoted with the three-index worked example.
REF_OMEGA = np.array([0.0014, 0.2658, 0.2543, 0.0014])
REF_PBAR = (0.9854, 1.1364, 1.0054, 0.8673, 1.0)
REF_ETA = (0.0615, 0.0550, 0.0256, 0.0001, 0.0)
REF_XI = (0.6200, 0.5828, 0.5513, 0.5250, 0.5)
REF_ZETA = (1.0168, 1.0130, 1.0069, 1.0000, 1.0)
REF_MEAN = (1.0, 1.2366, 1.4537, 1.6856, 1.9353, 2.1687)
REF_INTERCEPTS = (1.9197, 2.0218, 2.2688, 2.5409, 2.6687)
REF_VAR = (0.1275, 0.1986, 0.2648, 0.3295, 0.3536)
REF_K = (1.0580, -0.1207, 1.1052)


@pytest.fixture(scope="session")
def market():
    return example_market()


@pytest.fixture(scope="session")
def gmv_spec():
    return BankruptcySpec.uniform(5, omega_T=1.0, a=0.1, b=0.0, x0=1.0)


def random_spd(rng, n, floor=0.05):
    A = rng.normal(size=(n, n))
    return A @ A.T / n + floor * np.eye(n)


def random_market(rng, n=None, T=None, zero_mean=False):
    """Random i.n.i.d. market with PD covariance and modest Sharpe ratios."""
    n = int(rng.integers(1, 6)) if n is None else n
    T = int(rng.integers(1, 9)) if T is None else T
    s = rng.uniform(1.0, 1.1, size=T)
    means, seconds = [], []
    for _ in range(T):
        cov = random_spd(rng, n) * rng.uniform(0.01, 0.1)
        m = np.zeros(n) if zero_mean else rng.uniform(-0.05, 0.15, size=n)
        means.append(m)
        seconds.append(cov + np.outer(m, m))
    return MarketData(s, np.array(means), np.array(seconds))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
