"""Rolling estimation, training MCS, predictor construction, evaluation and
simulation of oracle datasets."""
import csv
import dataclasses
import json
import logging
import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backtest import TESTS, run_all_backtests
from .combine import (BENCHMARKS, MCS_PREDICTORS, PREDICTORS, build_mcs_predictors,
                      combine_arrays, fit_weights, CombinationWeights)
from .core import EXOG_COLUMNS, ReturnSeries, make_window_plan
from .distributions import TailSpec, es_multiplier, quantile
from .exceptions import ConfigError, DataError, RiskCombError
from .mcs import run_mcs
from .parametric import VarianceModelSpec, fit_riskmetrics, fit_variance_model
from .quantile import (CaviarSpec, fit_caviar, forecast_caviar, hs_insample, hs_var_es)
from .scoring import fz0_array, penalize_invalid

logger = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# model universe
# ---------------------------------------------------------------------------

_TAIL = {"N": "normal", "N-CF": "normal_cf", "t": "student_t"}
_FAMILY = {"RM": "riskmetrics", "GARCH": "garch", "GJR": "gjr", "RGARCH": "rgarch"}
_REALIZED = {"RVOL5": "rvol5", "RBSS": "rbss", "RK": "rk"}


@dataclass(frozen=True)
class ModelDef:
    name: str
    kind: str                       # 'variance', 'hs' or 'caviar'
    family: str | None = None
    tail: str | None = None
    exog: str | None = None
    window: int | None = None
    form: str | None = None

    @property
    def group(self):
        """Models sharing one estimation: Gaussian and Cornish-Fisher tails
        use the same Gaussian likelihood fit."""
        if self.kind != "variance":
            return self.name
        dist = "t" if self.tail == "student_t" else "N"
        return f"{self.family}:{dist}:{self.exog or ''}"


def parse_model(name):
    name = name.strip()
    m = re.fullmatch(r"(RM|GARCH|GJR)-(N|N-CF|t)", name)
    if m:
        return ModelDef(name, "variance", _FAMILY[m[1]], _TAIL[m[2]])
    m = re.fullmatch(r"RGARCH-(N|N-CF|t)-(RVOL5|RBSS|RK)", name)
    if m:
        return ModelDef(name, "variance", "rgarch", _TAIL[m[1]], _REALIZED[m[2]])
    m = re.fullmatch(r"HS-(\d+)", name)
    if m:
        return ModelDef(name, "hs", window=int(m[1]))
    m = re.fullmatch(r"CAViaR-(SAV|AS|IG)", name)
    if m:
        return ModelDef(name, "caviar", form=m[1].lower())
    m = re.fullmatch(r"CAViaR-X-(RVOL5|RBSS|RK)", name)
    if m:
        return ModelDef(name, "caviar", form="x", exog=_REALIZED[m[1]])
    raise ConfigError(f"unknown model {name!r}")


def full_universe():
    names = [f"{f}-{t}" for f in ("RM", "GARCH", "GJR") for t in ("N", "N-CF", "t")]
    names += [f"RGARCH-{t}-{x}" for x in _REALIZED for t in ("N", "N-CF", "t")]
    names += [f"HS-{w}" for w in (25, 50, 100, 250, 500)]
    names += [f"CAViaR-{f}" for f in ("SAV", "AS", "IG")]
    names += [f"CAViaR-X-{x}" for x in _REALIZED]
    return names


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    seed: int
    taus: tuple = (0.025, 0.01)
    t_in: int = 1000
    lam: float = 0.06
    alpha: float = 0.25
    b_train: int = 1000
    block: float = 10.0
    alpha_eval: float = 0.25
    b_eval: int = 5000
    burn_in: int | None = None
    models: tuple | None = None
    objective: str = "al"
    ms_starts: int = 20
    caviar_starts: int = 10_000
    caviar_refine: int = 10
    cold_start_every: int = 50
    rm_zeta: float = 0.94
    dq_lags: int = 4
    bd_boot: int = 1000
    workers: int = 1
    out: str = "out"

    def __post_init__(self):
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        taus = tuple(float(t) for t in self.taus)
        if not taus or any(not 0.0 < t < 1.0 for t in taus):
            raise ConfigError(f"tau must lie in (0,1), got {self.taus}")
        object.__setattr__(self, "taus", taus)
        if self.t_in < 250:
            raise ConfigError(f"t_in must be at least 250, got {self.t_in}")
        if not 0.0 < self.lam < 1.0:
            raise ConfigError(f"lambda must lie in (0,1), got {self.lam}")
        for key in ("alpha", "alpha_eval"):
            if not 0.0 <= getattr(self, key) <= 1.0:
                raise ConfigError(f"{key} must lie in [0,1], got {getattr(self, key)}")
        for key in ("b_train", "b_eval", "bd_boot", "cold_start_every", "workers",
                    "caviar_refine"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be at least 1, got {getattr(self, key)}")
        for key in ("ms_starts", "caviar_starts", "dq_lags"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be non-negative, got {getattr(self, key)}")
        if self.block < 1:
            raise ConfigError(f"block must be at least 1, got {self.block}")
        if self.burn_in is not None and self.burn_in < 0:
            raise ConfigError(f"burn_in must be non-negative, got {self.burn_in}")
        if self.objective not in ("al", "fz0"):
            raise ConfigError(f"objective must be 'al' or 'fz0', got {self.objective!r}")
        if not 0.0 < self.rm_zeta < 1.0:
            raise ConfigError(f"rm_zeta must lie in (0,1), got {self.rm_zeta}")
        if self.models is not None:
            models = tuple(m.strip() for m in self.models if m.strip())
            if len(models) < 2:
                raise ConfigError("at least two models are required")
            if len(set(models)) != len(models):
                raise ConfigError("duplicate model names")
            for m in models:
                parse_model(m)
            object.__setattr__(self, "models", models)

    @property
    def burn(self):
        return self.t_in // 2 if self.burn_in is None else int(self.burn_in)

    def resolve_models(self, series):
        """Enabled models; by default every model whose data are present."""
        if self.models is not None:
            defs = [parse_model(m) for m in self.models]
            for d in defs:
                if d.exog is not None and d.exog not in series.exog:
                    raise ConfigError(f"model {d.name} needs column {d.exog!r}, "
                                      f"absent from the data")
            return defs
        defs = []
        for m in full_universe():
            d = parse_model(m)
            if d.exog is not None and d.exog not in series.exog:
                logger.info("skipping %s: column %s not in data", d.name, d.exog)
                continue
            defs.append(d)
        return defs

    def to_dict(self):
        out = dataclasses.asdict(self)
        out["taus"] = list(self.taus)
        out["models"] = list(self.models) if self.models is not None else None
        out["burn_in"] = self.burn
        out.pop("workers")
        out.pop("out")
        return out


# ---------------------------------------------------------------------------
# model stage
# ---------------------------------------------------------------------------

def _segments(nstep, every):
    return [range(s, min(s + every, nstep)) for s in range(0, nstep, every)]


def _variance_tail(fit, tail):
    return fit.tail_spec() if tail == fit.tail else dataclasses.replace(fit, tail=tail).tail_spec()


def _fit_group(d, r, x, cfg, warm):
    if d.family == "riskmetrics":
        tail = "student_t" if d.tail == "student_t" else "normal"
        return fit_riskmetrics(r, tail, cfg.rm_zeta)
    tail = "student_t" if d.tail == "student_t" else "normal"
    spec = VarianceModelSpec(d.family, tail, d.exog)
    if warm is not None and warm.theta is not None:
        return fit_variance_model(spec, r, x, warm_start=warm.theta, grid=False)
    return fit_variance_model(spec, r, x)


def _run_model_segment(args):
    """Fit every model on the windows of one segment of steps.  The first
    step of a segment starts cold, later ones warm-start from the previous
    step; segments are therefore independent of each other."""
    cfg, returns, exog, defs, steps = args
    taus = cfg.taus
    m = len(defs)
    nrow = len(steps)
    var = {tau: np.full((nrow, m), np.nan) for tau in taus}
    es = {tau: np.full((nrow, m), np.nan) for tau in taus}
    insample = None
    failures = []
    warm = {}
    groups = {}
    for d in defs:
        groups.setdefault(d.group, []).append(d)
    col = {d.name: k for k, d in enumerate(defs)}
    t_in = cfg.t_in
    for row, j in enumerate(steps):
        lo, hi = j, j + t_in
        r = returns[lo:hi]
        first = j == 0
        if first:
            insample = {tau: (np.full((t_in, m), np.nan), np.full((t_in, m), np.nan))
                        for tau in taus}
        cold = row == 0
        for key, members in groups.items():
            d0 = members[0]
            try:
                if d0.kind == "variance":
                    x = exog[d0.exog][lo:hi] if d0.exog else None
                    fit = _fit_group(d0, r, x, cfg, None if cold else warm.get(key))
                    if not (fit.converged or fit.family == "riskmetrics"):
                        raise RiskCombError(f"{key}: optimizer did not converge")
                    warm[key] = fit
                    h = fit.h_next
                    if not (math.isfinite(h) and h > 0.0):
                        raise RiskCombError(f"{key}: invalid forecast variance {h}")
                    for d in members:
                        tail = _variance_tail(fit, d.tail)
                        for tau in taus:
                            s = math.sqrt(h)
                            var[tau][row, col[d.name]] = s * quantile(tail, tau)
                            es[tau][row, col[d.name]] = s * es_multiplier(tail, tau)
                            if first:
                                sp = np.sqrt(fit.h_path)
                                insample[tau][0][:, col[d.name]] = sp * quantile(tail, tau)
                                insample[tau][1][:, col[d.name]] = sp * es_multiplier(tail, tau)
                elif d0.kind == "hs":
                    if d0.window > t_in:
                        raise ConfigError(f"{d0.name}: lookback exceeds t_in={t_in}")
                    for tau in taus:
                        v, e, _ = hs_var_es(r[-d0.window:], tau)
                        var[tau][row, col[d0.name]] = v
                        es[tau][row, col[d0.name]] = e
                        if first:
                            pv, pe = hs_insample(r, d0.window, tau)
                            insample[tau][0][:, col[d0.name]] = pv
                            insample[tau][1][:, col[d0.name]] = pe
                else:
                    x = exog[d0.exog][lo:hi] if d0.exog else None
                    for tau in taus:
                        spec = CaviarSpec(d0.form, tau, d0.exog)
                        prev = None if cold else warm.get((key, tau))
                        if prev is None:
                            fit = fit_caviar(r, spec, x, cfg.caviar_starts, cfg.caviar_refine,
                                             seed=[cfg.seed, j])
                        else:
                            fit = fit_caviar(r, spec, x, 0, 0, warm_start=prev.theta)
                        warm[(key, tau)] = fit
                        pair = forecast_caviar(fit, spec)
                        var[tau][row, col[d0.name]] = pair.var
                        es[tau][row, col[d0.name]] = pair.es
                        if first:
                            insample[tau][0][:, col[d0.name]] = fit.var_path
                            insample[tau][1][:, col[d0.name]] = fit.es_path
            except RiskCombError as exc:
                if first:
                    raise RiskCombError(f"model group {key} failed on the first window: "
                                        f"{exc}") from exc
                for d in members:
                    failures.append((j, d.name, str(exc)))
                    for tau in taus:
                        var[tau][row, col[d.name]] = np.nan
                        es[tau][row, col[d.name]] = np.nan
    return {"steps": list(steps), "var": var, "es": es, "insample": insample,
            "failures": failures}


def _map(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


# ---------------------------------------------------------------------------
# combination stage
# ---------------------------------------------------------------------------

def _run_combine_segment(args):
    """Predictors for one segment of steps.  MS warm starts are carried
    within the segment only."""
    cfg, tau, returns, pvar, pes, losses, models, steps = args
    t_in = cfg.t_in
    out_var = np.empty((len(steps), len(PREDICTORS)))
    out_es = np.empty_like(out_var)
    membership = []
    weights_log = []
    warm = {}
    for row, j in enumerate(steps):
        lo, hi = j, j + t_in
        hv, he, hr = pvar[lo:hi], pes[lo:hi], returns[lo:hi]
        tv, te = pvar[hi], pes[hi]
        res = {}
        ew = CombinationWeights("ew", models)
        res["EW-Comb"] = combine_arrays(ew, tv, te)
        res["Median-Comb"] = combine_arrays(CombinationWeights("median", models), tv, te)
        for name, scheme in (("RS-Comb", "rs"), ("MS-Comb", "ms")):
            ws = warm.get(name)
            w = fit_weights(scheme, hv, he, hr, tau, models, cfg.objective, cfg.seed,
                            cfg.ms_starts if ws is None else 0,
                            None if ws is None else ws.theta)
            warm[name] = w
            weights_log.append((j, name, w.to_dict()))
            res[name] = combine_arrays(w, tv, te)
        mcs = build_mcs_predictors(models, hv, he, hr, tau, tv, te, cfg.lam, cfg.alpha,
                                   cfg.b_train, cfg.block, cfg.seed, losses=losses[lo:hi],
                                   objective=cfg.objective, ms_starts=cfg.ms_starts,
                                   warm=warm.get("mcs"))
        warm["mcs"] = mcs.weights
        for name, pair in mcs.forecasts.items():
            res[name] = (pair.var, pair.es)
        for name, w in mcs.weights.items():
            if w.scheme in ("rs", "ms"):
                weights_log.append((j, name, w.to_dict()))
        for kind, ssm in mcs.ssm.items():
            keep = set(ssm.survivors)
            membership.append((j, kind, [int(mm in keep) for mm in models]))
        for k, name in enumerate(PREDICTORS):
            v, e = res[name]
            out_var[row, k] = v
            out_es[row, k] = e
        if not (np.all(np.isfinite(out_var[row])) and np.all(np.isfinite(out_es[row]))):
            raise RiskCombError(f"step {j}: non-finite combined forecast")
    return {"steps": list(steps), "var": out_var, "es": out_es,
            "membership": membership, "weights": weights_log}


# ---------------------------------------------------------------------------
# store and driver
# ---------------------------------------------------------------------------

@dataclass
class ForecastStore:
    """Out-of-sample forecasts (steps x columns per tau) plus per-step
    training artifacts.  Columns list the models first, then predictors."""

    dates: np.ndarray
    models: list
    predictors: list
    var: dict
    es: dict
    insample: dict
    membership: dict = field(default_factory=dict)   # tau -> [(step, kind, flags)]
    weights: dict = field(default_factory=dict)      # tau -> [(step, name, dict)]
    failures: list = field(default_factory=list)

    @property
    def columns(self):
        return list(self.models) + list(self.predictors)

    def training_panel(self, tau):
        """In-sample paths followed by out-of-sample model forecasts."""
        nm = len(self.models)
        return (np.vstack([self.insample[tau][0], self.var[tau][:, :nm]]),
                np.vstack([self.insample[tau][1], self.es[tau][:, :nm]]))


def _forward_fill(var, es, failures, models, dates):
    for tau in var:
        v, e = var[tau], es[tau]
        for row in range(1, v.shape[0]):
            bad = ~(np.isfinite(v[row]) & np.isfinite(e[row]))
            if bad.any():
                v[row, bad] = v[row - 1, bad]
                e[row, bad] = e[row - 1, bad]
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(e))):
            raise RiskCombError("model panel has gaps that cannot be carried forward")
    for j, name, msg in failures:
        logger.warning("step %d (%s): %s failed (%s); last forecast carried forward",
                       j, dates[j], name, msg)


def run_rolling(config, series):
    """Rolling one-step forecasts of every enabled model and all ten
    predictors.  Steps are split into fixed segments of
    ``cold_start_every`` steps, each started from a cold multi-start fit, so
    the output does not depend on the worker count."""
    plan = make_window_plan(len(series), config.t_in)
    defs = config.resolve_models(series)
    models = [d.name for d in defs]
    returns = np.asarray(series.returns)
    exog = {k: np.asarray(v) for k, v in series.exog.items()}
    segs = _segments(plan.nstep, config.cold_start_every)
    t0 = time.perf_counter()
    parts = _map(_run_model_segment,
                 [(config, returns, exog, defs, s) for s in segs], config.workers)
    logger.info("model stage: %d steps x %d models in %.1fs", plan.nstep, len(models),
                time.perf_counter() - t0)
    nstep = plan.nstep
    var = {tau: np.empty((nstep, len(models))) for tau in config.taus}
    es = {tau: np.empty((nstep, len(models))) for tau in config.taus}
    failures = []
    insample = None
    for p in parts:
        rows = p["steps"]
        for tau in config.taus:
            var[tau][rows] = p["var"][tau]
            es[tau][rows] = p["es"][tau]
        failures += p["failures"]
        if p["insample"] is not None:
            insample = p["insample"]
    dates = series.dates[config.t_in:]
    _forward_fill(var, es, failures, models, dates)

    store = ForecastStore(dates, models, list(PREDICTORS), {}, {}, insample,
                          failures=failures)
    for tau in config.taus:
        t0 = time.perf_counter()
        pvar = np.vstack([insample[tau][0], var[tau]])
        pes = np.vstack([insample[tau][1], es[tau]])
        # losses are only ever used on training rows, i.e. before the last row
        losses, n_bad = penalize_invalid(fz0_array(returns[:, None], pvar, pes, tau), models)
        if n_bad:
            logger.info("tau=%g: %d training loss cells penalized", tau, n_bad)
        cparts = _map(_run_combine_segment,
                      [(config, tau, returns, pvar, pes, losses, models, s) for s in segs],
                      config.workers)
        cvar = np.empty((nstep, len(PREDICTORS)))
        ces = np.empty_like(cvar)
        store.membership[tau] = []
        store.weights[tau] = []
        for p in cparts:
            cvar[p["steps"]] = p["var"]
            ces[p["steps"]] = p["es"]
            store.membership[tau] += p["membership"]
            store.weights[tau] += p["weights"]
        store.var[tau] = np.hstack([var[tau], cvar])
        store.es[tau] = np.hstack([es[tau], ces])
        logger.info("combination stage tau=%g: %.1fs", tau, time.perf_counter() - t0)
    return store


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class Evaluation:
    reports: dict               # tau -> BacktestReport
    mcs: dict                   # tau -> SuperiorSet
    first_date: str
    n_eval: int


def evaluate(store, series, config):
    """Backtests, average FZ0 and evaluation MCS on the post-burn-in days."""
    burn = config.burn
    nstep = len(store.dates)
    if burn >= nstep:
        raise DataError("empty evaluation window")
    r = np.asarray(series.returns)[config.t_in + burn:config.t_in + nstep]
    cols = store.columns
    reports, sets = {}, {}
    for tau in config.taus:
        v = store.var[tau][burn:]
        e = store.es[tau][burn:]
        rep = run_all_backtests(r, v, e, tau, cols, config.dq_lags, config.bd_boot,
                                config.seed)
        losses, _ = penalize_invalid(fz0_array(r[:, None], v, e, tau), cols)
        ssm = run_mcs(losses, config.alpha_eval, config.b_eval, config.block,
                      config.seed, cols)
        for c in cols:
            rep.columns[c].in_mcs = ssm.contains(c)
            rep.columns[c].mcs_pvalue = ssm.mcs_pvalues[c]
        reports[tau] = rep
        sets[tau] = ssm
    return Evaluation(reports, sets, str(store.dates[burn]), int(nstep - burn))


def summary_counts(evaluations):
    """Counts over several series: #BT (all six backtests passed), #MCS
    (in the evaluation SSM) and both, per (tau, column)."""
    counts = {}
    for ev in evaluations:
        for tau, rep in ev.reports.items():
            for c, cr in rep.columns.items():
                k = counts.setdefault((tau, c), {"BT": 0, "MCS": 0, "BT_and_MCS": 0})
                k["BT"] += int(cr.passed)
                k["MCS"] += int(bool(cr.in_mcs))
                k["BT_and_MCS"] += int(cr.passed and bool(cr.in_mcs))
    return counts


# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------

def _num(x):
    x = float(x)
    return repr(x) if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_outputs(out_dir, store, evaluation, config, series_name="series"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cols = store.columns
    with (out / "forecasts.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "column", "tau", "var", "es"])
        for tau in config.taus:
            for i, d in enumerate(store.dates):
                for k, c in enumerate(cols):
                    w.writerow([str(d), c, repr(tau), _num(store.var[tau][i, k]),
                                _num(store.es[tau][i, k])])
    with (out / "ssm_membership.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "date", "tau", "loss_kind", "model", "in"])
        for tau in config.taus:
            for j, kind, flags in store.membership[tau]:
                for mdl, f in zip(store.models, flags):
                    w.writerow([j, str(store.dates[j]), repr(tau), kind, mdl, f])
    report = {
        "series": series_name,
        "config": config.to_dict(),
        "header": {
            "training_mcs": {"alpha": config.alpha, "bootstrap_replicates": config.b_train,
                             "mean_block": config.block, "statistic": "Tmax"},
            "evaluation_mcs": {"alpha": config.alpha_eval,
                               "bootstrap_replicates": config.b_eval,
                               "mean_block": config.block, "statistic": "Tmax"},
            "backtests": {"dq_lags": config.dq_lags, "bd_bootstrap": config.bd_boot,
                          "pass_level": 0.05},
            "out_of_sample_days": len(store.dates),
            "evaluation_first_date": evaluation.first_date,
            "evaluation_days": evaluation.n_eval,
        },
        "model_failures": [{"step": j, "model": m, "error": e} for j, m, e in store.failures],
        "results": {repr(tau): {"columns": evaluation.reports[tau].to_dict()["columns"],
                                "evaluation_mcs": evaluation.mcs[tau].to_dict()}
                    for tau in config.taus},
    }
    (out / "report.json").write_text(json.dumps(_json_safe(report), indent=2, sort_keys=True)
                                     + "\n", encoding="utf-8")
    with (out / "summary_table.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "column", *TESTS, "avg_fz0", "pass_all", "in_mcs", "mcs_pvalue"])
        for tau in config.taus:
            for c, cr in evaluation.reports[tau].columns.items():
                p = cr.pvalues()
                w.writerow([repr(tau), c, *(_num(p[t]) for t in TESTS), _num(cr.avg_fz0),
                            int(cr.passed), int(bool(cr.in_mcs)), _num(cr.mcs_pvalue)])
    return out


def load_forecasts(path):
    """Read a ``forecasts.csv`` file back into a :class:`ForecastStore` that
    carries forecasts only (no training artifacts)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    cells = {}
    dates, cols, taus = {}, {}, {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["date", "column", "tau", "var", "es"]:
            raise DataError(f"{path}: expected header date,column,tau,var,es")
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != 5:
                raise DataError(f"{path}: row {row_no} has {len(row)} fields, expected 5")
            try:
                d, tau = np.datetime64(row[0], "D"), float(row[2])
                v, e = float(row[3]), float(row[4])
            except ValueError:
                raise DataError(f"{path}: row {row_no} is not parsable") from None
            dates.setdefault(d, None)
            cols.setdefault(row[1], None)
            taus.setdefault(tau, None)
            cells[(tau, d, row[1])] = (v, e)
    if not cells:
        raise DataError(f"{path}: no forecasts")
    dates = np.array(sorted(dates), dtype="datetime64[D]")
    cols = list(cols)
    var, es = {}, {}
    for tau in taus:
        v = np.full((dates.size, len(cols)), np.nan)
        e = np.full_like(v, np.nan)
        for i, d in enumerate(dates):
            for k, c in enumerate(cols):
                if (tau, d, c) not in cells:
                    raise DataError(f"{path}: no forecast for {c} on {d} at tau={tau}")
                v[i, k], e[i, k] = cells[(tau, d, c)]
        var[tau], es[tau] = v, e
    models = [c for c in cols if c not in PREDICTORS]
    predictors = [c for c in cols if c in PREDICTORS]
    if cols != models + predictors:
        models, predictors = cols, []
    return ForecastStore(dates, models, predictors, var, es, insample={})


def write_counts(path, counts):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "column", "n_bt", "n_mcs", "n_bt_and_mcs"])
        for (tau, c), k in counts.items():
            w.writerow([repr(tau), c, k["BT"], k["MCS"], k["BT_and_MCS"]])


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GarchSimSpec:
    omega: float = 0.05
    alpha: float = 0.05
    beta: float = 0.90
    dist: str = "normal"
    nu: float = 8.0
    scale: float = 0.01       # returns in decimal units: sd multiplier
    realized_noise: float = 0.3

    def __post_init__(self):
        if not self.omega > 0 or self.alpha < 0 or self.beta < 0:
            raise ConfigError("GARCH parameters need omega > 0, alpha >= 0, beta >= 0")
        if not self.alpha + self.beta < 1.0:
            raise ConfigError(f"nonstationary GARCH: alpha + beta = "
                              f"{self.alpha + self.beta} must be < 1")
        if self.dist not in ("normal", "t"):
            raise ConfigError(f"dist must be 'normal' or 't', got {self.dist!r}")
        if self.dist == "t" and not self.nu > 2:
            raise ConfigError(f"nu must exceed 2, got {self.nu}")
        if not self.scale > 0 or self.realized_noise < 0:
            raise ConfigError("scale must be positive and realized_noise non-negative")

    @property
    def tail(self):
        return TailSpec("student_t", nu=self.nu) if self.dist == "t" else TailSpec("normal")


@dataclass
class Simulation:
    series: ReturnSeries
    h: np.ndarray
    true_var: dict
    true_es: dict


def simulate(spec, n, seed, taus=(0.025, 0.01), start="2000-01-03"):
    """GARCH(1,1) returns with Normal or unit-variance t innovations, their
    true one-step (VaR, ES) paths, and three noisy realized-volatility
    columns sqrt(h * exp(u - s^2/2)), u ~ N(0, s^2)."""
    if n < 2:
        raise ConfigError(f"n must be at least 2, got {n}")
    rng = np.random.default_rng(seed)
    if spec.dist == "t":
        eta = rng.standard_t(spec.nu, n) * math.sqrt((spec.nu - 2.0) / spec.nu)
    else:
        eta = rng.standard_normal(n)
    h = np.empty(n)
    r = np.empty(n)
    h_prev = spec.omega / (1.0 - spec.alpha - spec.beta)
    r_prev = 0.0
    for i in range(n):
        h[i] = h_prev if i == 0 else spec.omega + spec.alpha * r_prev**2 + spec.beta * h_prev
        r[i] = math.sqrt(h[i]) * eta[i]
        h_prev, r_prev = h[i], r[i]
    s = spec.scale
    hs = h * s * s
    noise = spec.realized_noise
    exog = {k: np.sqrt(hs * np.exp(noise * rng.standard_normal(n) - 0.5 * noise**2))
            for k in EXOG_COLUMNS}
    dates = np.busday_offset(np.datetime64(start, "D"), np.arange(n), roll="forward")
    series = ReturnSeries(dates, r * s, exog)
    tail = spec.tail
    true_var = {tau: np.sqrt(hs) * quantile(tail, tau) for tau in taus}
    true_es = {tau: np.sqrt(hs) * es_multiplier(tail, tau) for tau in taus}
    return Simulation(series, hs, true_var, true_es)


def write_truth(path, sim):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "tau", "var", "es"])
        for tau in sim.true_var:
            for d, v, e in zip(sim.series.dates, sim.true_var[tau], sim.true_es[tau]):
                w.writerow([str(d), repr(tau), repr(float(v)), repr(float(e))])


__all__ = ["BENCHMARKS", "MCS_PREDICTORS", "Evaluation", "ForecastStore", "GarchSimSpec",
           "ModelDef", "RunConfig", "Simulation", "evaluate", "full_universe", "load_forecasts",
           "parse_model",
           "run_rolling", "simulate", "summary_counts", "write_counts", "write_outputs",
           "write_truth"]
