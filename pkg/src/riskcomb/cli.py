"""Command line: ``riskcomb {run,evaluate,simulate,mcs,backtest}``.

Settings come from an INI file (``--config``) with the sections listed in
:data:`KEYS`, then from ``--set key=value`` overrides (``section.key`` or a
bare key), then from the dedicated flags ``--workers`` and ``--out``.
Results go to files; progress goes to stderr.  Failures print
``error[CODE]: message`` and exit nonzero.
"""
import argparse
import configparser
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backtest import run_all_backtests
from .core import DEFAULT_SCHEMA, load_series, save_series
from .exceptions import ConfigError, RiskCombError
from .mcs import run_mcs
from .pipeline import (GarchSimSpec, RunConfig, _json_safe, _num, evaluate, load_forecasts,
                       run_rolling, simulate, write_outputs, write_truth)
from .scoring import LossMatrix

logger = logging.getLogger("riskcomb")

EXIT_CODES = {"CONFIG": 2, "DATA": 3, "FIT": 4, "MODEL_OUTPUT": 4, "NUMERICAL": 4,
              "SCORING": 5, "COMBINATION": 5, "ERROR": 1, "IO": 6}


@dataclass(frozen=True)
class Key:
    section: str
    name: str
    kind: str           # int, float, str, floats, strs, optint
    default: object
    help: str
    field: str | None = None    # RunConfig field, when different from name


def _k(section, name, kind, default, help, field=None):
    return Key(section, name, kind, default, help, field)


KEYS = [
    _k("run", "seed", "int", None, "master seed (required)"),
    _k("run", "workers", "int", 1, "worker processes"),
    _k("data", "path", "str", None, "input file with date, returns and realized columns"),
    *(_k("data", f"col_{c}", "str", DEFAULT_SCHEMA.get(c, c), f"file column holding '{c}'")
      for c in ("date", "ret", "price", "rvol5", "rbss", "rk")),
    _k("data", "taus", "floats", "0.025,0.01", "VaR/ES levels"),
    _k("data", "t_in", "int", 1000, "estimation window length"),
    _k("models", "models", "strs", "", "enabled models (empty: all with data present)"),
    _k("models", "caviar_starts", "int", 10_000, "CAViaR random screening draws"),
    _k("models", "caviar_refine", "int", 10, "CAViaR starts refined by the simplex"),
    _k("models", "cold_start_every", "int", 50, "steps per warm-start segment"),
    _k("models", "rm_zeta", "float", 0.94, "RiskMetrics smoothing constant"),
    _k("mcs", "alpha", "float", 0.25, "training MCS size"),
    _k("mcs", "b_train", "int", 1000, "training MCS bootstrap replicates"),
    _k("mcs", "block", "float", 10.0, "mean stationary-bootstrap block length"),
    _k("mcs", "alpha_eval", "float", 0.25, "evaluation MCS size"),
    _k("mcs", "b_eval", "int", 5000, "evaluation MCS bootstrap replicates"),
    _k("combine", "lambda", "float", 0.06, "weighted-loss smoothing constant", "lam"),
    _k("combine", "objective", "str", "al", "weight-fitting loss: al or fz0"),
    _k("combine", "ms_starts", "int", 20, "random starts for MS weights"),
    _k("backtest", "burn_in", "optint", "", "evaluation burn-in (empty: t_in/2)"),
    _k("backtest", "dq_lags", "int", 4, "DQ test lags"),
    _k("backtest", "bd_boot", "int", 1000, "ES regression bootstrap replicates"),
    _k("output", "out", "str", "out", "output directory"),
    _k("simulate", "n", "int", 1600, "simulated days"),
    _k("simulate", "omega", "float", 0.05, "GARCH constant"),
    _k("simulate", "garch_alpha", "float", 0.05, "GARCH ARCH coefficient"),
    _k("simulate", "garch_beta", "float", 0.90, "GARCH persistence coefficient"),
    _k("simulate", "dist", "str", "normal", "innovations: normal or t"),
    _k("simulate", "nu", "float", 8.0, "t degrees of freedom"),
    _k("simulate", "scale", "float", 0.01, "return scale"),
    _k("simulate", "realized_noise", "float", 0.3, "log-noise sd of realized measures"),
]
_BY_QUAL = {f"{k.section}.{k.name}": k for k in KEYS}
_BY_NAME = {}
for _key in KEYS:
    _BY_NAME.setdefault(_key.name, []).append(_key)


def _lookup(name):
    if name in _BY_QUAL:
        return _BY_QUAL[name]
    hits = _BY_NAME.get(name, [])
    if len(hits) == 1:
        return hits[0]
    if len(hits) > 1:
        raise ConfigError(f"ambiguous key {name!r}; use one of "
                          f"{', '.join(f'{k.section}.{k.name}' for k in hits)}")
    raise ConfigError(f"unknown configuration key {name!r}")


def _convert(key, text):
    text = str(text).strip()
    try:
        if key.kind == "int":
            return int(text)
        if key.kind == "optint":
            return None if text == "" else int(text)
        if key.kind == "float":
            return float(text)
        if key.kind == "floats":
            return tuple(float(t) for t in text.split(",") if t.strip())
        if key.kind == "strs":
            return tuple(t.strip() for t in text.split(",") if t.strip()) or None
        return text
    except ValueError:
        raise ConfigError(f"{key.section}.{key.name}: cannot read {text!r} as "
                          f"{key.kind}") from None


def load_settings(path=None, overrides=()):
    """Merge defaults, an INI file and ``key=value`` overrides into a flat
    dict keyed by ``section.name``."""
    raw = {q: k.default for q, k in _BY_QUAL.items()}
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except configparser.Error as exc:
            raise ConfigError(f"config {path}: {exc}") from None
        for section in cp.sections():
            for name, value in cp.items(section):
                q = f"{section}.{name}"
                if q not in _BY_QUAL:
                    raise ConfigError(f"unknown configuration key {q!r}")
                raw[q] = value
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        name, value = item.split("=", 1)
        key = _lookup(name.strip())
        raw[f"{key.section}.{key.name}"] = value
    return {q: (None if v is None else _convert(_BY_QUAL[q], v)) for q, v in raw.items()}


def parse_config(path=None, overrides=()):
    """Validated :class:`RunConfig` from a config file and overrides."""
    s = load_settings(path, overrides)
    if s["run.seed"] is None:
        raise ConfigError("seed is required (set it in [run] or with --set seed=N)")
    kwargs = {}
    for q, key in _BY_QUAL.items():
        if key.section in ("data", "models", "mcs", "combine", "backtest", "output", "run"):
            target = key.field or key.name
            if target in RunConfig.__dataclass_fields__:
                kwargs[target] = s[q]
    return RunConfig(**kwargs)


def _schema(settings):
    return {c: settings[f"data.col_{c}"] for c in ("date", "ret", "price", "rvol5", "rbss", "rk")}


def _series(settings, path=None):
    path = path or settings["data.path"]
    if not path:
        raise ConfigError("no data file: pass --data or set data.path")
    return load_series(path, _schema(settings)), Path(path).stem


def _write_json(path, obj):
    Path(path).write_text(json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------

def cmd_run(args, settings, config):
    series, name = _series(settings, args.data)
    store = run_rolling(config, series)
    ev = evaluate(store, series, config)
    out = write_outputs(config.out, store, ev, config, name)
    logger.info("wrote %s", out)


def cmd_evaluate(args, settings, config):
    series, name = _series(settings, args.data)
    store = load_forecasts(args.forecasts or Path(config.out) / "forecasts.csv")
    _align(store, series, config)
    ev = evaluate(store, series, config)
    store.membership = {tau: [] for tau in config.taus}
    write_outputs(config.out, store, ev, config, name)


def _align(store, series, config):
    """Check that stored forecasts start right after the estimation window."""
    missing = [t for t in config.taus if t not in store.var]
    if missing:
        raise ConfigError(f"forecasts file has no tau {missing}")
    n = len(store.dates)
    target = series.dates[config.t_in:config.t_in + n]
    if target.size != n or not np.array_equal(target, store.dates):
        raise ConfigError("forecast dates do not follow the first t_in days of the data")


def cmd_simulate(args, settings, config):
    spec = GarchSimSpec(omega=settings["simulate.omega"], alpha=settings["simulate.garch_alpha"],
                        beta=settings["simulate.garch_beta"], dist=settings["simulate.dist"],
                        nu=settings["simulate.nu"], scale=settings["simulate.scale"],
                        realized_noise=settings["simulate.realized_noise"])
    n = settings["simulate.n"]
    if n < config.t_in + 200:
        raise ConfigError(f"simulate.n must be at least t_in + 200 = {config.t_in + 200}, "
                          f"got {n}")
    sim = simulate(spec, n, config.seed, config.taus)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    save_series(sim.series, out / "data.csv")
    write_truth(out / "truth.csv", sim)
    logger.info("wrote %s and %s", out / "data.csv", out / "truth.csv")


def cmd_mcs(args, settings, config):
    losses = LossMatrix.load(args.losses)
    res = run_mcs(losses, config.alpha_eval, config.b_eval, config.block, config.seed)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "mcs.json", res.to_dict())
    print(json.dumps(_json_safe({"survivors": res.survivors, "mcs_pvalues": res.mcs_pvalues}),
                     sort_keys=True))


def cmd_backtest(args, settings, config):
    series, name = _series(settings, args.data)
    store = load_forecasts(args.forecasts)
    pos = np.searchsorted(series.dates, store.dates)
    if np.any(pos >= len(series)) or not np.array_equal(series.dates[np.minimum(pos, len(series) - 1)],
                                                        store.dates):
        raise ConfigError("some forecast dates are not in the data file")
    r = series.returns[pos]
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = {}
    rows = []
    for tau in store.var:
        rep = run_all_backtests(r, store.var[tau], store.es[tau], tau, store.columns,
                                config.dq_lags, config.bd_boot, config.seed)
        reports[repr(tau)] = rep.to_dict()
        rows += rep.table_rows()
    _write_json(out / "backtest_report.json", {"series": name, "results": reports})
    with (out / "backtest_table.csv").open("w", encoding="utf-8") as fh:
        keys = list(rows[0])
        fh.write(",".join(keys) + "\n")
        for row in rows:
            fh.write(",".join(_num(v) if isinstance(v, float) else str(v)
                              for v in row.values()) + "\n")


VERBS = {"run": cmd_run, "evaluate": cmd_evaluate, "simulate": cmd_simulate,
         "mcs": cmd_mcs, "backtest": cmd_backtest}


def _key_listing():
    lines = ["configuration keys (section.key = default):"]
    for k in KEYS:
        default = "(required)" if k.default is None and k.name == "seed" else (
            "(none)" if k.default is None else repr(k.default) if k.default == "" else k.default)
        lines.append(f"  {k.section}.{k.name} = {default}    {k.help}")
    return "\n".join(lines)


def build_parser():
    p = argparse.ArgumentParser(
        prog="riskcomb", description="VaR/ES forecast combination with MCS-selected members.",
        epilog=_key_listing(), formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("verb", choices=sorted(VERBS), help="what to do")
    p.add_argument("--config", help="INI file with the sections shown below")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a configuration key (repeatable)")
    p.add_argument("--workers", type=int, help="worker processes (same results at any count)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--data", help="data file (overrides data.path)")
    p.add_argument("--forecasts", help="forecasts.csv for evaluate/backtest")
    p.add_argument("--losses", help="loss matrix CSV for mcs")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        stream=sys.stderr, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    overrides = list(args.overrides)
    if args.workers is not None:
        overrides.append(f"run.workers={args.workers}")
    if args.out is not None:
        overrides.append(f"output.out={args.out}")
    try:
        settings = load_settings(args.config, overrides)
        config = parse_config(args.config, overrides)
        if args.verb == "mcs" and not args.losses:
            raise ConfigError("mcs needs --losses FILE")
        if args.verb == "backtest" and not args.forecasts:
            raise ConfigError("backtest needs --forecasts FILE")
        VERBS[args.verb](args, settings, config)
    except RiskCombError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.code, 1)
    except OSError as exc:
        print(f"error[IO]: {exc}", file=sys.stderr)
        return EXIT_CODES["IO"]
    return 0


if __name__ == "__main__":
    sys.exit(main())
