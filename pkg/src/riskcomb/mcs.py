"""Model Confidence Set with the T_max elimination rule and a stationary
bootstrap of the day index."""
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConfigError, DataError
from .scoring import LossMatrix


def stationary_bootstrap(n, mean_block, seed, return_starts=False):
    """One resample of ``0..n-1`` built from circular blocks whose lengths are
    geometric with mean ``mean_block``.

    ``seed`` may be anything accepted by :func:`numpy.random.default_rng`.
    With ``return_starts`` a boolean mask of block starts is returned too.
    """
    if n < 2:
        raise ConfigError(f"bootstrap needs n >= 2, got {n}")
    if mean_block < 1:
        raise ConfigError(f"mean block length must be >= 1, got {mean_block}")
    rng = np.random.default_rng(seed)
    p = 1.0 / mean_block
    new = rng.random(n) < p
    new[0] = True
    fresh = rng.integers(0, n, n)
    pos = np.arange(n)
    start_pos = np.maximum.accumulate(np.where(new, pos, 0))
    idx = (fresh[start_pos] + pos - start_pos) % n
    if return_starts:
        return idx, new
    return idx


@lru_cache(maxsize=8)
def _bootstrap_weights(n, mean_block, n_boot, seed):
    """Row-resampling weights (n_boot x n): counts / n.  Replicate r draws from
    its own stream seeded by (seed, r), so replicates are order independent."""
    w = np.zeros((n_boot, n))
    for rep in range(n_boot):
        idx = stationary_bootstrap(n, mean_block, [seed, rep])
        w[rep] = np.bincount(idx, minlength=n)
    w /= n
    w.setflags(write=False)
    return w


@dataclass
class SuperiorSet:
    models: list
    survivors: list
    eliminated: list            # (model, round p-value) in elimination order
    mcs_pvalues: dict
    alpha: float
    b: int
    block: float
    seed: int
    rounds: list = field(default_factory=list)

    def contains(self, model):
        return model in self.survivors

    def to_dict(self):
        return {
            "alpha": self.alpha, "bootstrap_replicates": self.b,
            "mean_block": self.block, "seed": self.seed, "statistic": "Tmax",
            "survivors": list(self.survivors),
            "eliminated": [{"model": m, "pvalue": p} for m, p in self.eliminated],
            "mcs_pvalues": {m: self.mcs_pvalues[m] for m in self.models},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def run_mcs(losses, alpha=0.25, b=1000, mean_block=10, seed=0, models=None):
    """Iterative T_max elimination.

    ``losses`` is a :class:`LossMatrix` or a days x models array (then
    ``models`` names the columns).  Each round computes the relative loss
    d_i of every surviving model against the surviving cross-model average,
    its bootstrap variance, t_i = d_i / sd_i and T_max = max t_i.  The round
    p-value is the share of recentered bootstrap T_max exceeding the observed
    one; if below ``alpha`` the worst model goes and the next round starts.
    Ties in t_i go to the lexicographically smallest model id.  ``alpha=0``
    keeps every model and ``alpha=1`` eliminates down to one.
    """
    if isinstance(losses, LossMatrix):
        models = list(losses.models)
        values = losses.values
    else:
        values = np.asarray(losses, dtype=float)
        models = [str(m) for m in (models if models is not None else range(values.shape[1]))]
    if values.ndim != 2 or values.shape[1] < 2:
        raise DataError("MCS needs at least two models")
    if values.shape[0] < 30:
        raise DataError(f"MCS needs at least 30 days, got {values.shape[0]}")
    if not np.all(np.isfinite(values)):
        raise DataError("MCS losses must be finite")
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0,1], got {alpha}")
    if len(set(models)) != len(models):
        raise DataError("model ids must be unique")
    n, m = values.shape

    # centering by the all-model daily mean changes nothing below but keeps
    # a common additive shift from reaching the arithmetic
    centered = values - values.mean(axis=1, keepdims=True)
    weights = _bootstrap_weights(n, float(mean_block), int(b), int(seed))
    mean_loss = centered.mean(axis=0)
    boot_mean = weights @ centered          # b x m

    alive = list(range(m))
    eliminated, rounds = [], []
    running = 0.0
    pvals = {}
    while len(alive) > 1:
        cols = np.array(alive)
        d = mean_loss[cols] - mean_loss[cols].mean()
        d_boot = boot_mean[:, cols] - boot_mean[:, cols].mean(axis=1, keepdims=True)
        dev = d_boot - d
        var = np.mean(dev * dev, axis=0)
        degenerate = var <= 1e-14 * max(1.0, float(np.max(np.abs(centered))))**2
        if np.all(degenerate & (np.abs(d) <= 1e-12 * max(1.0, float(np.max(np.abs(centered)))))):
            p = 1.0
            rounds.append({"models": [models[i] for i in alive], "tmax": 0.0, "pvalue": p})
            running = max(running, p)
            break
        sd = np.sqrt(np.where(degenerate, 1.0, var))
        # a zero-variance model is infinitely good or bad unless d is exactly 0
        inf_t = np.where(d > 0, np.inf, np.where(d < 0, -np.inf, 0.0))
        t = np.where(degenerate, inf_t, d / sd)
        tmax = float(np.max(t))
        with np.errstate(invalid="ignore"):
            t_boot = np.max(np.where(degenerate, 0.0, dev / sd), axis=1)
        p = float(np.mean(t_boot > tmax))
        rounds.append({"models": [models[i] for i in alive], "tmax": tmax, "pvalue": p})
        running = max(running, p)
        # alpha = 1 rejects every round, mirroring alpha = 0 rejecting none
        if p >= alpha and alpha < 1.0:
            break
        worst = [alive[k] for k in np.flatnonzero(t == tmax)]
        victim = min(worst, key=lambda k: models[k])
        eliminated.append((models[victim], p))
        pvals[models[victim]] = running
        alive.remove(victim)
    final = 1.0 if len(alive) == 1 else running
    for k in alive:
        pvals[models[k]] = final
    return SuperiorSet(models=models, survivors=[models[k] for k in alive],
                       eliminated=eliminated, mcs_pvalues=pvals, alpha=alpha, b=int(b),
                       block=float(mean_block), seed=int(seed), rounds=rounds)


class ModelConfidenceSet(BaseEstimator):
    """Estimator wrapper around :func:`run_mcs`.

    After ``fit`` the survivors are in ``survivors_``, the monotonized MCS
    p-values in ``pvalues_`` and the full result in ``superior_set_``.
    """

    def __init__(self, alpha=0.25, n_boot=1000, block=10, seed=0):
        self.alpha = alpha
        self.n_boot = n_boot
        self.block = block
        self.seed = seed

    def fit(self, losses, models=None):
        self.superior_set_ = run_mcs(losses, self.alpha, self.n_boot, self.block,
                                     self.seed, models)
        self.survivors_ = list(self.superior_set_.survivors)
        self.pvalues_ = dict(self.superior_set_.mcs_pvalues)
        return self

    def transform(self, losses):
        """Keep only the surviving columns of a days x models array."""
        check_is_fitted(self, "superior_set_")
        keep = [self.superior_set_.models.index(s) for s in self.survivors_]
        return np.asarray(losses)[:, keep]
