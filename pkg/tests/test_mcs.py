import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskcomb.exceptions import ConfigError, DataError
from riskcomb.mcs import ModelConfidenceSet, run_mcs, stationary_bootstrap
from riskcomb.scoring import LossMatrix

# --- bootstrap ---------------------------------------------------------------

def test_block_one_is_iid():
    n = 50
    idx, starts = stationary_bootstrap(n, 1, 0, return_starts=True)
    assert starts.all()
    counts = np.zeros(n)
    for s in range(4000):
        counts += np.bincount(stationary_bootstrap(n, 1, s), minlength=n)
    # each index uniform: chi-square with 49 df, far below the 0.1% point (~86)
    expected = 4000.0
    chi2 = np.sum((counts - expected) ** 2 / expected)
    assert chi2 < 86


def test_block_n_single_block_is_circular_shift():
    n = 40
    for seed in range(1000):
        idx, starts = stationary_bootstrap(n, n, seed, return_starts=True)
        if starts.sum() == 1:
            np.testing.assert_array_equal(idx, (idx[0] + np.arange(n)) % n)
            return
    pytest.fail("no single-block draw found")


def test_mean_block_length():
    n, block = 1000, 10
    restarts = 0
    for s in range(100):
        _, starts = stationary_bootstrap(n, block, s, return_starts=True)
        restarts += starts[1:].sum()
    est = 100 * (n - 1) / restarts
    assert est == pytest.approx(block, rel=0.02)


def test_bootstrap_deterministic_and_in_range():
    a = stationary_bootstrap(300, 7, 42)
    b = stationary_bootstrap(300, 7, 42)
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 0 and a.max() < 300


def test_bootstrap_preconditions():
    with pytest.raises(ConfigError):
        stationary_bootstrap(1, 5, 0)
    with pytest.raises(ConfigError):
        stationary_bootstrap(10, 0.5, 0)


# --- MCS -------------------------------------------------------------------

def _check_invariants(res, models):
    assert set(res.survivors) | {m for m, _ in res.eliminated} == set(models)
    assert not set(res.survivors) & {m for m, _ in res.eliminated}
    for m in res.survivors:
        assert res.mcs_pvalues[m] >= res.alpha
    for _, p in res.eliminated:
        assert p < res.alpha
    seq = [res.mcs_pvalues[m] for m, _ in res.eliminated]
    assert seq == sorted(seq)
    if seq and res.survivors:
        assert min(res.mcs_pvalues[m] for m in res.survivors) >= seq[-1]


def test_identical_columns():
    x = np.random.default_rng(0).normal(size=200)
    res = run_mcs(np.column_stack([x, x]), models=["a", "b"])
    assert res.survivors == ["a", "b"]
    assert res.mcs_pvalues == {"a": 1.0, "b": 1.0}


def test_preconditions():
    x = np.random.default_rng(0).normal(size=(29, 3))
    with pytest.raises(DataError):
        run_mcs(x)
    with pytest.raises(DataError):
        run_mcs(np.ones((50, 1)))
    y = np.random.default_rng(0).normal(size=(50, 2))
    y[3, 1] = np.nan
    with pytest.raises(DataError):
        run_mcs(y)
    with pytest.raises(DataError):
        run_mcs(np.ones((50, 2)), models=["a", "a"])
    with pytest.raises(ConfigError):
        run_mcs(np.ones((50, 2)), alpha=1.5)


def _three(seed, n=500):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=n)
    noise = rng.normal(scale=0.5, size=n)
    b = a + noise - noise.mean()      # same in-sample mean loss as a
    return np.column_stack([a, b, a + 1.0])


@pytest.mark.slow
def test_dominated_model_eliminated():
    ok = 0
    for seed in range(50):
        res = run_mcs(_three(seed), alpha=0.25, b=2000, seed=seed, models=["A", "B", "C"])
        _check_invariants(res, ["A", "B", "C"])
        ok += sorted(res.survivors) == ["A", "B"]
    assert ok >= 0.99 * 50


@pytest.mark.slow
def test_equal_performers_size_control():
    ok = 0
    for seed in range(100):
        x = np.random.default_rng(seed).normal(size=(500, 2))
        res = run_mcs(x, alpha=0.1, b=1000, seed=seed)
        ok += len(res.survivors) == 2
    assert ok >= 80


@pytest.mark.slow
def test_ten_models():
    survivors, best_kept = [], 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(250, 10))
        res = run_mcs(x, alpha=0.25, b=1000, seed=seed)
        survivors.append(len(res.survivors))
        x[:, 3] -= 2 * x[:, 3].std()
        best = run_mcs(x, alpha=0.25, b=1000, seed=seed)
        _check_invariants(best, best.models)
        best_kept += best.contains("3")
    print("mean survivors with equal means:", np.mean(survivors))
    assert np.mean(survivors) > 5
    assert best_kept >= 90


def _panel(seed, n=120, m=5):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, m)) + rng.uniform(0, 0.4, m)


@settings(max_examples=25)
@given(st.integers(0, 10**6), st.floats(-100, 100))
def test_shift_invariance(seed, c):
    x = _panel(seed)
    a = run_mcs(x, b=300, seed=1)
    b = run_mcs(x + c, b=300, seed=1)
    assert a.survivors == b.survivors
    assert [m for m, _ in a.eliminated] == [m for m, _ in b.eliminated]


@settings(max_examples=25)
@given(st.integers(0, 10**6), st.permutations(range(5)))
def test_label_equivariance(seed, perm):
    x = _panel(seed)
    names = ["m0", "m1", "m2", "m3", "m4"]
    a = run_mcs(x, b=300, seed=1, models=names)
    b = run_mcs(x[:, list(perm)], b=300, seed=1, models=[names[k] for k in perm])
    assert sorted(a.survivors) == sorted(b.survivors)
    for k in names:
        assert a.mcs_pvalues[k] == pytest.approx(b.mcs_pvalues[k], abs=1e-12)


@settings(max_examples=20)
@given(st.integers(0, 10**6))
def test_alpha_extremes(seed):
    x = _panel(seed)
    assert len(run_mcs(x, alpha=0.0, b=300, seed=1).survivors) == 5
    assert len(run_mcs(x, alpha=1.0, b=300, seed=1).survivors) == 1


@settings(max_examples=20)
@given(st.integers(0, 10**6), st.floats(0.01, 0.5))
def test_invariants_hold(seed, alpha):
    res = run_mcs(_panel(seed), alpha=alpha, b=300, seed=2)
    _check_invariants(res, res.models)


def test_deterministic():
    x = _panel(3)
    a, b = run_mcs(x, b=500, seed=9), run_mcs(x, b=500, seed=9)
    assert a.to_dict() == b.to_dict()


def test_report_contents():
    res = run_mcs(_panel(0), b=200, mean_block=5, seed=3)
    d = res.to_dict()
    assert d["bootstrap_replicates"] == 200 and d["mean_block"] == 5.0
    assert d["alpha"] == 0.25 and d["statistic"] == "Tmax"
    assert set(d["mcs_pvalues"]) == set(res.models)


def test_loss_matrix_input_and_estimator():
    x = _three(0, 200)
    lm = LossMatrix(np.arange(200), ["A", "B", "C"], x)
    est = ModelConfidenceSet(alpha=0.25, n_boot=500, seed=0).fit(lm)
    assert sorted(est.survivors_) == ["A", "B"]
    assert est.transform(x).shape == (200, 2)
    assert est.get_params()["n_boot"] == 500
