import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riskcomb.core import RiskForecastPair
from riskcomb.exceptions import DataError, ScoringError
from riskcomb.scoring import (INVALID_PENALTY, LossMatrix, al_array, al_loss,
                              build_loss_matrix, fz0_array, fz0_loss, general_fz_loss,
                              penalize_invalid, weighted_loss_series)

from conftest import garch_path, true_pair

TAU = 0.025


def pair(var, es, tau=TAU):
    return RiskForecastPair(var, es, tau)


# --- point examples ----------------------------------------------------------

def test_fz0_examples():
    assert fz0_loss(-1.0, pair(-1.0, -1.0)) == pytest.approx(0.0, abs=1e-15)
    assert fz0_loss(0.01, pair(-0.02, -0.03)) == pytest.approx(-3.839891, abs=1e-6)
    assert fz0_loss(-0.05, pair(-0.02, -0.03)) == pytest.approx(36.160109, abs=1e-6)


def test_al_examples():
    assert al_loss(-0.4, pair(-0.4, TAU - 1)) == pytest.approx(0.0, abs=1e-15)
    assert al_loss(0.01, pair(-0.02, -0.03)) == pytest.approx(-2.481240, abs=1e-6)


def test_invalid_es_raises():
    bad = RiskForecastPair(-0.01, 0.02, TAU)
    with pytest.raises(ScoringError):
        fz0_loss(0.0, bad)
    with pytest.raises(ScoringError):
        al_loss(0.0, bad)
    with pytest.raises(ScoringError):
        general_fz_loss(0.0, -0.01, 0.0, TAU)
    with pytest.raises(ScoringError):
        general_fz_loss(0.0, -0.01, -0.02, TAU, preset="nz")


def test_arrays_match_scalars_and_flag_invalid():
    rng = np.random.default_rng(0)
    r = rng.normal(0, 0.01, 50)
    var = -np.abs(rng.normal(0.02, 0.005, 50))
    es = var * 1.2
    es[3] = 0.01
    f, a = fz0_array(r, var, es, TAU), al_array(r, var, es, TAU)
    assert np.isnan(f[3]) and np.isnan(a[3])
    for i in (0, 10, 49):
        assert f[i] == pytest.approx(fz0_loss(r[i], pair(var[i], es[i])), rel=1e-13)
        assert a[i] == pytest.approx(al_loss(r[i], pair(var[i], es[i])), rel=1e-13)


def _triples(n=1000, seed=1):
    rng = np.random.default_rng(seed)
    var = -rng.uniform(0.005, 0.05, n)
    es = var * rng.uniform(1.0, 2.0, n)
    r = rng.normal(0, 0.02, n)
    return r, var, es


def test_fz0_preset_is_fz0_loss():
    r, var, es = _triples()
    np.testing.assert_allclose(general_fz_loss(r, var, es, TAU, "fz0"),
                               fz0_array(r, var, es, TAU), rtol=0, atol=1e-12)


def test_al_preset_is_al_loss_up_to_mean_zero_term():
    # the preset's a(r) differs from the AL likelihood by -r/ES
    r, var, es = _triples()
    np.testing.assert_allclose(general_fz_loss(r, var, es, TAU, "al") - r / es,
                               al_array(r, var, es, TAU), rtol=0, atol=1e-12)


def test_scaling_keeps_violation_pattern():
    r, var, es = _triples(200)
    c = 7.5
    assert np.array_equal(r <= var, c * r <= c * var)
    assert not np.allclose(al_array(r, var, es, TAU), al_array(c * r, c * var, c * es, TAU))


@given(st.floats(0.01, 100.0), st.integers(0, 10**6))
def test_fz0_difference_scale_invariance(c, seed):
    rng = np.random.default_rng(seed)
    r = rng.normal(0, 0.02, 30)
    va, vb = -rng.uniform(0.01, 0.05, (2, 30))
    ea, eb = va * 1.3, vb * 1.1
    d = fz0_array(r, va, ea, TAU) - fz0_array(r, vb, eb, TAU)
    dc = fz0_array(c * r, c * va, c * ea, TAU) - fz0_array(c * r, c * vb, c * eb, TAU)
    np.testing.assert_allclose(dc, d, rtol=0, atol=1e-12 * max(1.0, np.abs(d).max()))


@pytest.mark.slow
@pytest.mark.parametrize("preset", ["fz0", "al"])
def test_strict_consistency_oracle(preset):
    wins = {0.8: 0, 1.2: 0}
    for seed in range(200):
        r, h = garch_path(2000, 7000 + seed)
        var, es = true_pair(h)
        base = general_fz_loss(r, var, es, TAU, preset).mean()
        for c in wins:
            wins[c] += base < general_fz_loss(r, c * var, c * es, TAU, preset).mean()
    print(preset, "truth preferred:", wins)
    assert all(v >= 190 for v in wins.values())


# --- weighted smoother -----------------------------------------------------

def test_weighted_constant_column():
    np.testing.assert_allclose(weighted_loss_series(np.full(40, 2.5), 0.06),
                               np.full(40, 2.5), rtol=1e-14)


def test_weight_mass_of_last_100_terms():
    lam = 0.06
    mass = lam * sum((1 - lam) ** k for k in range(100))
    assert mass == pytest.approx(1 - 0.94**100, abs=1e-12)
    assert mass == pytest.approx(0.997945, abs=1e-6)
    assert abs(mass - 0.9970) <= 0.003


@given(st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=200),
       st.floats(0.01, 0.99))
def test_weighted_matches_explicit_expansion(values, lam):
    x = np.asarray(values)
    w = weighted_loss_series(x, lam)
    for i in range(x.size):
        k = np.arange(i)
        explicit = lam * np.sum((1 - lam) ** k * x[i - k]) + (1 - lam) ** i * x[0]
        assert w[i] == pytest.approx(explicit, abs=1e-10)
    assert np.all(w >= x.min() - 1e-12) and np.all(w <= x.max() + 1e-12)


@pytest.mark.parametrize("lam", [0.0, 1.0, -0.1])
def test_weighted_bad_lambda(lam):
    with pytest.raises(ScoringError):
        weighted_loss_series([1.0], lam)


def test_weighted_empty():
    with pytest.raises(ScoringError):
        weighted_loss_series([], 0.06)


# --- loss matrices -----------------------------------------------------------

def test_one_by_one_matrix():
    m = build_loss_matrix(["2020-01-02"], ["a"], [0.01], [-0.02], [-0.03], TAU)
    assert m.values.shape == (1, 1)
    assert m.values[0, 0] == pytest.approx(fz0_loss(0.01, pair(-0.02, -0.03)), rel=1e-14)


def test_identical_models_identical_columns():
    r, var, es = _triples(100)
    m = build_loss_matrix(np.arange(100), ["a", "b"], r, np.column_stack([var, var]),
                          np.column_stack([es, es]), TAU)
    np.testing.assert_array_equal(m.column("a"), m.column("b"))


def test_weighted_matrix_is_smoothed_unweighted():
    r, var, es = _triples(300)
    u = build_loss_matrix(np.arange(300), ["a"], r, var, es, TAU)
    w = build_loss_matrix(np.arange(300), ["a"], r, var, es, TAU, "weighted", 0.06)
    np.testing.assert_allclose(w.values, weighted_loss_series(u.values, 0.06), rtol=1e-14)
    assert w.lam == 0.06 and u.lam is None


def test_invalid_forecast_penalized():
    r, var, es = _triples(10)
    es2 = es.copy()
    es2[4] = 0.001
    m = build_loss_matrix(np.arange(10), ["ok", "bad"], r, np.column_stack([var, var]),
                          np.column_stack([es, es2]), TAU)
    assert m.n_penalized == 1
    assert m.values[4, 1] == pytest.approx(m.values[4, 0] + INVALID_PENALTY)


def test_penalize_all_bad_row():
    v, n = penalize_invalid(np.array([[np.nan, np.inf]]))
    assert n == 2 and np.all(v == INVALID_PENALTY)


def test_misaligned_panel():
    with pytest.raises(DataError):
        build_loss_matrix(np.arange(3), ["a"], [0.0, 0.1], [-1, -1, -1], [-2, -2, -2], TAU)
    with pytest.raises(ScoringError):
        build_loss_matrix(np.arange(1), ["a"], [0.0], [-1.0], [-2.0], TAU, kind="median")


def test_loss_matrix_csv_round_trip(tmp_path):
    r, var, es = _triples(20)
    dates = np.array([str(np.datetime64("2020-01-01") + i) for i in range(20)])
    m = build_loss_matrix(dates, ["a", "b"], r, np.column_stack([var, 1.1 * var]),
                          np.column_stack([es, 1.1 * es]), TAU)
    m.save(tmp_path / "l.csv")
    back = LossMatrix.load(tmp_path / "l.csv")
    assert back.models == ["a", "b"]
    assert back.values.tobytes() == m.values.tobytes()
    (tmp_path / "bad.csv").write_text("date,a\n2020-01-01,nan\n")
    with pytest.raises(DataError):
        LossMatrix.load(tmp_path / "bad.csv")


def test_loss_matrix_rejects_nonfinite():
    with pytest.raises(DataError):
        LossMatrix(np.arange(1), ["a"], [[math.inf]])
