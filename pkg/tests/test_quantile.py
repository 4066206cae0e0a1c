import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riskcomb import _kernels as K
from riskcomb.exceptions import ConfigError
from riskcomb.quantile import (CAViaR, CaviarSpec, HistoricalSimulation, HsSpec,
                               empirical_quantile, fit_caviar, forecast_caviar, hs_forecast,
                               hs_insample, hs_var_es)
from riskcomb.core import RiskForecastPair
from riskcomb.scoring import al_array, al_loss

from conftest import garch_path

# --- Historical Simulation -------------------------------------------------

def test_hs_four_point_example():
    p = hs_forecast([-0.04, -0.01, 0.02, 0.03], HsSpec(4, 0.25))
    assert (p.var, p.es) == (-0.04, -0.04)


def test_hs_constant_window():
    p = hs_forecast(np.full(50, 0.013), HsSpec(25, 0.025))
    assert p.var == 0.013
    assert p.es == pytest.approx(0.013, rel=1e-15)


def test_hs_fifth_smallest_of_500():
    r = np.random.default_rng(4).standard_normal(800)
    p = hs_forecast(r, HsSpec(500, 0.01))
    assert p.var == np.sort(r[-500:])[4]
    assert p.es == pytest.approx(np.sort(r[-500:])[:5].mean())


def test_hs_lookback_too_long():
    with pytest.raises(ConfigError):
        hs_forecast(np.zeros(20), HsSpec(25, 0.025))


def test_hs_empty_tail_flag():
    _, _, empty = hs_var_es(np.array([1.0, 1.0, 2.0]), 0.1)
    assert empty
    _, _, empty = hs_var_es(np.array([0.0, 1.0, 2.0]), 0.5)
    assert not empty


def test_linear_quantile_option():
    x = np.arange(1.0, 11.0)
    assert empirical_quantile(x, 0.25, "linear") == pytest.approx(np.quantile(x, 0.25))
    with pytest.raises(ConfigError):
        empirical_quantile(x, 0.25, "nearest")


@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=25, max_size=60),
       st.randoms(use_true_random=False))
def test_hs_permutation_invariant(values, rnd):
    tail = list(values[-25:])
    rnd.shuffle(tail)
    a = hs_forecast(values, HsSpec(25, 0.05))
    b = hs_forecast(values[:-25] + tail, HsSpec(25, 0.05))
    assert (a.var, a.es) == pytest.approx((b.var, b.es), abs=1e-15)


@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=5, max_size=80),
       st.sampled_from([0.01, 0.025, 0.1, 0.5]))
def test_hs_es_not_above_var(values, tau):
    var, es, _ = hs_var_es(np.asarray(values), tau)
    assert es <= var + 1e-15
    assert var == np.sort(values)[max(1, math.ceil(tau * len(values) - 1e-9)) - 1]


def test_hs_insample_path():
    r = np.random.default_rng(0).standard_normal(300)
    var, es = hs_insample(r, 100, 0.05)
    assert var[0] == var[99] == empirical_quantile(r[:100], 0.05)
    assert var[150] == empirical_quantile(r[50:150], 0.05)
    assert np.all(es <= var)


def test_hs_estimator():
    r = np.random.default_rng(0).standard_normal(300)
    est = HistoricalSimulation(window=100, tau=0.05).fit(r)
    p = est.forecast()
    assert p.var == empirical_quantile(r[-100:], 0.05)


# --- CAViaR ----------------------------------------------------------------

def test_spec_exog_rule():
    CaviarSpec("x", 0.025, "rk")
    with pytest.raises(ConfigError):
        CaviarSpec("x", 0.025)
    with pytest.raises(ConfigError):
        CaviarSpec("sav", 0.025, "rk")
    with pytest.raises(ValueError):
        CaviarSpec("sav", 1.5)


def test_al_loss_zero_at_var_with_es_tau_minus_one():
    tau = 0.025
    assert al_loss(-1.3, RiskForecastPair(-1.3, tau - 1.0, tau)) == pytest.approx(0.0, abs=1e-15)


def _fit(form="sav", seed=0, n=1500, tau=0.025, **kw):
    r, h = garch_path(n, seed)
    kw.setdefault("n_random", 2000)
    return r, fit_caviar(r, CaviarSpec(form, tau), seed=seed, **kw)


def test_link_ratio_constant():
    r, fit = _fit()
    ratio = fit.es_path / fit.var_path
    assert np.max(np.abs(ratio - (1 + math.exp(fit.gamma0)))) <= 1e-12
    assert np.all(fit.es_path[fit.var_path < 0] <= fit.var_path[fit.var_path < 0])


def test_fitted_loss_beats_every_start():
    r, fit = _fit()
    assert fit.converged
    # start losses are on the standardized data: shift by n log(scale)
    shift = fit.var_path.size * math.log(fit.scale)
    assert np.all(fit.negloss <= fit.start_losses + shift + 1e-8)


def test_fitted_loss_matches_al_loss():
    r, fit = _fit()
    total = al_array(r, fit.var_path, fit.es_path, 0.025).sum()
    assert fit.negloss == pytest.approx(total, rel=1e-9)


def test_sav_nested_in_as():
    r, sav = _fit("sav", seed=3)
    _, as_ = _fit("as", seed=3)
    s = sav.scale
    rs = r / s
    v0 = empirical_quantile(rs[:100], 0.025)
    data = np.vstack([rs, np.zeros_like(rs)])
    b = sav.theta
    theta_as = np.array([b[0], b[1], b[2], b[2], b[3]])
    loss_as = K.caviar_al(theta_as, data, np.array([K.FORM_AS, 4]), np.array([0.025, v0]))
    loss_sav = K.caviar_al(b, data, np.array([K.FORM_SAV, 3]), np.array([0.025, v0]))
    assert loss_as == pytest.approx(loss_sav, rel=1e-12)
    # the unrestricted AS fit can only do better, up to optimizer tolerance
    assert as_.negloss <= sav.negloss + 1e-6 * abs(sav.negloss)


@pytest.mark.parametrize("form", ["ig", "x"])
def test_other_forms_fit(form):
    r, h = garch_path(1200, 8)
    exog = np.sqrt(h) * np.exp(0.2 * np.random.default_rng(1).standard_normal(1200))
    spec = CaviarSpec(form, 0.025, "rk" if form == "x" else None)
    fit = fit_caviar(r, spec, exog if form == "x" else None, n_random=2000)
    assert fit.converged and np.all(fit.var_path < 0)
    hit = np.mean(r <= fit.var_path)
    assert abs(hit - 0.025) <= 3 * math.sqrt(0.025 * 0.975 / r.size)


def test_x_form_requires_exog():
    r, _ = garch_path(400, 1)
    with pytest.raises(ConfigError):
        fit_caviar(r, CaviarSpec("x", 0.025, "rk"))
    with pytest.raises(ConfigError):
        fit_caviar(r[:200], CaviarSpec("sav", 0.025))


def test_forecast_arithmetic():
    _, fit = _fit()
    spec = CaviarSpec("sav", 0.025)
    fit.betas = np.array([-0.01, 0.9, -0.1])
    fit.gamma0 = -1.0
    p = forecast_caviar(fit, spec, last=(-0.02, 0.01, None))
    assert p.var == pytest.approx(-0.029, abs=1e-15)
    assert p.es == pytest.approx(1.367879 * -0.029, abs=1e-7)
    fit.betas = np.array([0.0, 1.0, 0.0])
    assert forecast_caviar(fit, spec, last=(-0.037, 0.5, None)).var == -0.037
    fit.gamma0 = 0.0
    p = forecast_caviar(fit, spec, last=(-0.037, 0.5, None))
    assert p.es == 2 * p.var


def test_one_step_forecast_continues_path():
    r, fit = _fit()
    p = forecast_caviar(fit, CaviarSpec("sav", 0.025))
    q = forecast_caviar(fit, CaviarSpec("sav", 0.025), last=(fit.var_path[-1], r[-1], None))
    assert p.var == pytest.approx(q.var, rel=1e-12)


def test_warm_start_only():
    r, cold = _fit()
    warm = fit_caviar(r, CaviarSpec("sav", 0.025), n_random=0, warm_start=cold.theta)
    assert warm.negloss <= cold.negloss + 1e-8


def test_deterministic_given_seed():
    _, a = _fit(seed=5)
    _, b = _fit(seed=5)
    np.testing.assert_array_equal(a.var_path, b.var_path)


def test_estimator_api():
    r, _ = garch_path(800, 2)
    est = CAViaR(form="sav", tau=0.05, n_random=1000).fit(r)
    assert est.get_params()["form"] == "sav"
    f = est.forecast()
    assert f.tau == 0.05 and f.es < f.var < 0


@pytest.mark.slow
def test_sav_hit_rate_oracle():
    tau, n = 0.025, 2000
    band = 3 * math.sqrt(tau * (1 - tau) / n)
    hits = 0
    for seed in range(50):
        r, _ = garch_path(n, 500 + seed)
        fit = fit_caviar(r, CaviarSpec("sav", tau), seed=seed)
        hits += abs(np.mean(r <= fit.var_path) - tau) <= band
    assert hits >= 45
