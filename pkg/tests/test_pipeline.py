import json
import math

import numpy as np
import pytest

from riskcomb.combine import PREDICTORS, build_mcs_predictors
from riskcomb.core import ReturnSeries
from riskcomb.exceptions import ConfigError, DataError
from riskcomb.pipeline import (GarchSimSpec, RunConfig, evaluate, full_universe,
                               load_forecasts, parse_model, run_rolling, simulate,
                               summary_counts, write_outputs)

CHEAP = ("RM-N", "RM-t", "HS-25", "HS-100")
TAU = 0.025


def _config(**kw):
    base = dict(seed=3, taus=(TAU,), t_in=250, b_train=200, b_eval=300, ms_starts=2,
                bd_boot=100, models=CHEAP, cold_start_every=50)
    base.update(kw)
    return RunConfig(**base)


def _series(n, seed=0):
    return simulate(GarchSimSpec(), n, seed).series


def _truncate(series, n):
    return ReturnSeries(series.dates[:n], series.returns[:n],
                        {k: v[:n] for k, v in series.exog.items()})


@pytest.fixture(scope="module")
def long_run():
    """t_in + 1 steps, so step t_in trains on out-of-sample rows only."""
    cfg = _config()
    series = _series(cfg.t_in * 2 + 1, seed=11)
    return cfg, series, run_rolling(cfg, series)


# --- configuration ---------------------------------------------------------

def test_universe_parses():
    names = full_universe()
    assert len(names) == len(set(names)) == 29
    for n in names:
        assert parse_model(n).name == n
    with pytest.raises(ConfigError):
        parse_model("EGARCH-N")


@pytest.mark.parametrize("kw", [dict(seed=None), dict(lam=1.5), dict(t_in=100),
                                dict(taus=(0.0,)), dict(models=("RM-N",)),
                                dict(models=("RM-N", "RM-N")), dict(objective="mse"),
                                dict(alpha=2.0), dict(burn_in=-1)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        _config(**kw)


def test_burn_in_default_is_half_t_in():
    assert RunConfig(seed=0, t_in=1000).burn == 500
    assert RunConfig(seed=0, t_in=1000, burn_in=10).burn == 10


def test_missing_exog_column_rejected():
    s = _series(300)
    bare = ReturnSeries(s.dates, s.returns)
    with pytest.raises(ConfigError):
        _config(models=("RM-N", "CAViaR-X-RK")).resolve_models(bare)


# --- rolling driver ----------------------------------------------------------

def test_single_step_cardinality():
    cfg = _config()
    store = run_rolling(cfg, _series(cfg.t_in + 1))
    assert len(store.dates) == 1
    assert store.columns == list(CHEAP) + list(PREDICTORS)
    assert store.var[TAU].shape == (1, len(CHEAP) + 10)
    assert np.all(np.isfinite(store.var[TAU])) and np.all(np.isfinite(store.es[TAU]))


def test_rectangular_and_ordered(long_run):
    cfg, series, store = long_run
    v, e = store.var[TAU], store.es[TAU]
    assert v.shape == (cfg.t_in + 1, len(CHEAP) + 10)
    assert np.all(np.isfinite(v)) and np.all(np.isfinite(e))
    assert np.all(e <= v + 1e-12)
    np.testing.assert_array_equal(store.dates, series.dates[cfg.t_in:])


def _recompute_step(cfg, series, store, j, hv, he):
    r = np.asarray(series.returns)
    nm = len(store.models)
    return build_mcs_predictors(store.models, hv, he, r[j:j + cfg.t_in], TAU,
                                store.var[TAU][j, :nm], store.es[TAU][j, :nm],
                                cfg.lam, cfg.alpha, cfg.b_train, cfg.block, cfg.seed,
                                objective=cfg.objective, ms_starts=cfg.ms_starts)


def _stored(store, j, name):
    k = store.columns.index(name)
    return store.var[TAU][j, k], store.es[TAU][j, k]


def test_first_step_trains_on_insample_paths_only(long_run):
    cfg, series, store = long_run
    iv, ie = store.insample[TAU]
    out = _recompute_step(cfg, series, store, 0, iv, ie)
    for name, pair in out.forecasts.items():
        assert (pair.var, pair.es) == pytest.approx(_stored(store, 0, name), rel=1e-12)


def test_step_t_in_trains_on_out_of_sample_only(long_run):
    cfg, series, store = long_run
    j = cfg.t_in
    nm = len(store.models)
    pv, pe = store.training_panel(TAU)
    hv, he = pv[j:j + cfg.t_in], pe[j:j + cfg.t_in]
    np.testing.assert_array_equal(hv, store.var[TAU][:cfg.t_in, :nm])
    out = _recompute_step(cfg, series, store, j, hv, he)
    for name, pair in out.forecasts.items():
        assert (pair.var, pair.es) == pytest.approx(_stored(store, j, name), rel=1e-12)


def test_no_look_ahead_by_truncation(long_run):
    cfg, series, store = long_run
    k = 57
    short = run_rolling(cfg, _truncate(series, cfg.t_in + k))
    np.testing.assert_array_equal(short.var[TAU], store.var[TAU][:k])
    np.testing.assert_array_equal(short.es[TAU], store.es[TAU][:k])


def test_deterministic():
    cfg = _config()
    s = _series(cfg.t_in + 8, seed=2)
    a, b = run_rolling(cfg, s), run_rolling(cfg, s)
    assert a.var[TAU].tobytes() == b.var[TAU].tobytes()
    assert a.es[TAU].tobytes() == b.es[TAU].tobytes()
    assert a.membership == b.membership


def test_membership_recorded(long_run):
    cfg, _, store = long_run
    rows = store.membership[TAU]
    assert len(rows) == 2 * len(store.dates)
    for j, kind, flags in rows:
        assert kind in ("unweighted", "weighted") and len(flags) == len(CHEAP)
        assert sum(flags) >= 1


# --- evaluation ------------------------------------------------------------

def test_empty_evaluation_window():
    cfg = _config(burn_in=3)
    s = _series(cfg.t_in + 3)
    store = run_rolling(cfg, s)
    with pytest.raises(DataError, match="empty evaluation window"):
        evaluate(store, s, cfg)


def test_t_in_1000_discards_500():
    cfg = RunConfig(seed=0, t_in=1000)
    assert cfg.burn == 500


def test_evaluate_and_outputs(long_run, tmp_path):
    cfg, series, store = long_run
    ev = evaluate(store, series, cfg)
    assert ev.n_eval == len(store.dates) - cfg.burn
    assert ev.first_date == str(store.dates[cfg.burn])
    rep = ev.reports[TAU]
    assert list(rep.columns) == store.columns
    for c in store.columns:
        assert rep.columns[c].in_mcs is not None
    out = write_outputs(tmp_path, store, ev, cfg, "sim")
    report = json.loads((out / "report.json").read_text())
    assert report["header"]["evaluation_days"] == ev.n_eval
    assert report["header"]["training_mcs"]["bootstrap_replicates"] == cfg.b_train
    lines = (out / "summary_table.csv").read_text().splitlines()
    assert len(lines) == 1 + len(store.columns)
    back = load_forecasts(out / "forecasts.csv")
    np.testing.assert_array_equal(back.var[TAU], store.var[TAU])
    assert back.models == store.models and back.predictors == store.predictors
    counts = summary_counts([ev, ev])
    assert all(k["BT"] in (0, 2) for k in counts.values())


# --- simulation ------------------------------------------------------------

def test_simulate_iid_constant_var():
    spec = GarchSimSpec(omega=0.5, alpha=0.0, beta=0.0, scale=1.0)
    sim = simulate(spec, 500, 1)
    v = sim.true_var[TAU]
    assert np.all(v == v[0])
    assert v[0] == pytest.approx(math.sqrt(0.5) * -1.959964, abs=1e-6)


def test_simulate_ordering():
    sim = simulate(GarchSimSpec(dist="t", nu=5), 3000, 4)
    for tau in sim.true_var:
        assert np.all(sim.true_es[tau] < sim.true_var[tau])
        assert np.all(sim.true_var[tau] < 0)
    for x in sim.series.exog.values():
        assert np.all(x > 0)


def test_simulate_violation_rate():
    sim = simulate(GarchSimSpec(), 100_000, 5)
    rate = np.mean(sim.series.returns <= sim.true_var[TAU])
    assert abs(rate - TAU) <= 3 * math.sqrt(TAU * (1 - TAU) / 100_000)


def test_simulate_rejects_nonstationary():
    with pytest.raises(ConfigError):
        GarchSimSpec(alpha=0.2, beta=0.85)
    with pytest.raises(ConfigError):
        GarchSimSpec(dist="t", nu=2.0)
