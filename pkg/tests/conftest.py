import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

Z025 = -1.959963984540054
ES_MULT025 = -2.3378027922013
TAU = 0.025


def garch_path(n, seed, omega=0.05, alpha=0.05, beta=0.90, gamma=0.0, dist="normal", nu=8.0):
    """Simulated GARCH/GJR returns with the conditional variances used."""
    rng = np.random.default_rng(seed)
    if dist == "t":
        eta = rng.standard_t(nu, n) * math.sqrt((nu - 2.0) / nu)
    else:
        eta = rng.standard_normal(n)
    h = np.empty(n)
    r = np.empty(n)
    h_prev = omega / (1.0 - alpha - beta - 0.5 * gamma)
    r_prev = 0.0
    for i in range(n):
        if i:
            h_prev = omega + (alpha + gamma * (r_prev < 0)) * r_prev**2 + beta * h_prev
        h[i] = h_prev
        r[i] = math.sqrt(h_prev) * eta[i]
        r_prev = r[i]
    return r, h


def true_pair(h, tau=TAU):
    from scipy import stats
    z = stats.norm.ppf(tau)
    s = np.sqrt(h)
    return s * z, s * (-stats.norm.pdf(z) / tau)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
