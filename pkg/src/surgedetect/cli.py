"""Command-line front end: fit, surge-test, power-grid, diagnose, simulate, ingest.

Every command is deterministic given --seed; JSON and CSV outputs are byte
stable and SVG output carries no timestamps.  Exit codes: 0 success, 2 for
usage or configuration errors, 3 for numerical failures.  Flags beat config
file entries, which beat built-in defaults; the effective configuration is
echoed into every JSON report.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
from scipy import stats as _scipy_stats

from . import dataio, diagnostics, plots, search, surge
from .exceptions import ConvergenceError, DomainError, IngestError, SurgeDetectError
from .types import ModelSpec

SCHEMA_VERSION = 1

# No-surge simulation presets: single-line AR(1) fits to the 1970-2023
# window of each record (alpha1, beta1, phi, sigma, n).
NULL_PRESETS = {
    "hadcrut-null": (-0.170, 0.0199, 0.0865, 0.097, 54),
    "nasa-null": (-0.076, 0.019, 0.149, 0.095, 54),
    "noaa-null": (-0.036, 0.019, 0.190, 0.092, 54),
    "berkeley-null": (-0.064, 0.020, 0.102, 0.096, 54),
}

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _read_config(path) -> dict:
    """key = value lines; '#' starts a comment; keys use the long flag names."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DomainError(f"config line {lineno}: expected key = value")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _merged(args: argparse.Namespace, defaults: dict) -> dict:
    """flags > config file > defaults."""
    cfg = {}
    if getattr(args, "config", None):
        cfg = _read_config(args.config)
    eff = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            eff[key] = flag
        elif key in cfg:
            raw = cfg[key]
            if isinstance(default, bool):
                eff[key] = raw.lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int) and not isinstance(default, bool):
                eff[key] = int(raw)
            elif isinstance(default, float):
                eff[key] = float(raw)
            else:
                eff[key] = raw
        else:
            eff[key] = default
    return eff


def _write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _report(command: str, config: dict, result: dict) -> dict:
    clean = {k: (v if not isinstance(v, Path) else str(v))
             for k, v in config.items()}
    return {"schema_version": SCHEMA_VERSION, "command": command,
            "config": clean, "result": result}


def _load_series(eff: dict):
    if not eff.get("data"):
        raise DomainError("--data is required (path to the input file)")
    series = dataio.ingest_path(eff["data"], eff.get("format", "normalized"))
    a = eff.get("from_year")
    b = eff.get("to_year")
    if a is not None or b is not None:
        series = series.window(a, b)
    return series


def _spec_from(eff: dict) -> ModelSpec:
    errors = eff["errors"].replace("-", "_").replace("global_ar1", "global_ar")
    penalty = eff["penalty"]
    if penalty != "bic":
        penalty = float(penalty)
    return ModelSpec(trend=eff["trend"], errors=errors,
                     ar_order=int(eff.get("ar_order", 1)), penalty=penalty,
                     min_seg_len=int(eff["min_seg_len"]), search=eff["search"],
                     max_m=int(eff["max_m"]))


def _out_dir(eff: dict) -> Path:
    out = Path(eff.get("out_dir") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _threads(eff: dict) -> int:
    t = eff.get("threads")
    return int(t) if t else (os.cpu_count() or 1)


# --------------------------------------------------------------------- fit

FIT_DEFAULTS = {
    "data": None, "format": "normalized", "from_year": None, "to_year": None,
    "trend": "continuous", "errors": "piecewise-ar1", "ar_order": 1,
    "penalty": "bic", "min_seg_len": 10, "search": "auto", "max_m": 5,
    "out_dir": ".", "plot": True,
}


def cmd_fit(args) -> int:
    eff = _merged(args, FIT_DEFAULTS)
    series = _load_series(eff)
    spec = _spec_from(eff)
    seg, fit = search.detect(series, spec)
    out = _out_dir(eff)
    report = fit.to_dict(series.start_year)
    diag = None
    if fit.converged:
        diag = diagnostics.diagnose(fit)
        report["diagnostics"] = diag.to_dict()
    _write_json(out / "fit.json", _report("fit", eff, report))

    with open(out / "trend.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("year,anomaly,trend,segment\n")
        tv = fit.trend_values()
        for i, year in enumerate(series.years):
            seg_id = next(j + 1 for j, (a, b) in enumerate(seg.segments(fit.n))
                          if a <= i + 1 <= b)
            fh.write(f"{year},{series.values[i]:.6f},{tv[i]:.6f},{seg_id}\n")
    if eff["plot"]:
        plots.plot_fit(series, fit, out / "fit.svg")

    cps = ", ".join(str(series.start_year + t - 1) for t in seg.taus) or "none"
    slopes = ", ".join(f"{b:.4f}" for b in fit.betas)
    print(f"changepoints: {cps}")
    print(f"segment slopes (degC/yr): {slopes}")
    print(f"objective: {fit.objective:.4f}")
    if diag is not None and not diag.ok:
        print("warning: residual diagnostics reject this fit "
              f"(FG p={diag.fg_p:.2g}, SW p={diag.sw_p:.2g})", file=sys.stderr)
    return EXIT_OK


# -------------------------------------------------------------- surge-test

SURGE_DEFAULTS = {
    "data": None, "format": "normalized", "from_year": 1970, "to_year": None,
    "level": 0.05, "reps": 100000, "seed": 0, "threads": None,
    "fixed_k": None, "out_dir": ".",
}


def cmd_surge_test(args) -> int:
    eff = _merged(args, SURGE_DEFAULTS)
    series = _load_series(eff)
    threads = _threads(eff)
    level = float(eff["level"])
    null = surge.null_params_from_series(series)
    result = {
        "n": series.n,
        "window": [series.start_year, series.end_year],
        "null_fit": {"alpha1": null.alpha1, "beta1": null.beta1,
                     "phi": null.phi, "sigma": null.sigma},
    }
    if eff["fixed_k"] is not None:
        k = series.index_of_year(int(eff["fixed_k"]))
        cf = surge.fit_changepoint(series, k)
        tcrit = float(_scipy_stats.t.ppf(1.0 - level / 2.0, series.n - 3))
        result["fixed_k"] = {
            "year": int(eff["fixed_k"]), "k": k, "t": cf.t, "abs_t": abs(cf.t),
            "beta1": cf.beta1, "beta2": cf.beta2, "sd": cf.sd,
            "critical_value": tcrit, "df": series.n - 3,
            "detected": bool(abs(cf.t) > tcrit),
        }
        verdict = "surge detected" if abs(cf.t) > tcrit else "no detectable surge"
        print(f"|T_k({eff['fixed_k']})| = {abs(cf.t):.4f} vs t critical "
              f"{tcrit:.4f} ({series.n - 3} df): {verdict}")
    tmax, k_hat = surge.t_max(series)
    mc = surge.mc_null_quantile(null, reps=int(eff["reps"]),
                                level=1.0 - level, seed=int(eff["seed"]),
                                threads=threads)
    detected = tmax > mc.q
    result["scan"] = {
        "t_max": tmax, "k_hat": k_hat,
        "k_hat_year": series.start_year + k_hat - 1,
        "quantile": mc.q, "quantile_se": mc.se, "level": level,
        "reps": mc.reps, "detected": bool(detected),
    }
    out = _out_dir(eff)
    _write_json(out / "surge_test.json", _report("surge-test", eff, result))
    verdict = "surge detected" if detected else "no detectable surge"
    print(f"T_max = {tmax:.4f} at {series.start_year + k_hat - 1}; "
          f"Q = {mc.q:.4f} (se {mc.se:.4f}): {verdict}")
    return EXIT_OK


# -------------------------------------------------------------- power-grid

GRID_DEFAULTS = {
    "data": None, "format": "normalized", "from_year": 1970, "to_year": None,
    "surge_years": "1990:2015", "vantage_years": "2024:2040",
    "level": 0.05, "reps": 100000, "seed": 0, "threads": None,
    "alpha1": None, "beta1": None, "phi": None, "sigma": None, "n": None,
    "out_dir": ".", "plot": True,
}


def _year_range(spec: str) -> range:
    a, _, b = spec.partition(":")
    lo, hi = int(a), int(b or a)
    return range(lo, hi + 1)


def cmd_power_grid(args) -> int:
    eff = _merged(args, GRID_DEFAULTS)
    threads = _threads(eff)
    surge_years = _year_range(str(eff["surge_years"]))
    vantage_years = _year_range(str(eff["vantage_years"]))
    level = float(eff["level"])
    label = ""
    if eff.get("data"):
        series = _load_series(eff)
        label = series.label
        grid = surge.surge_grid_from_series(
            series, surge_years, vantage_years, reps=int(eff["reps"]),
            seed=int(eff["seed"]), level=1.0 - level, threads=threads)
        start_year = series.start_year
    else:
        missing = [k for k in ("alpha1", "beta1", "phi", "sigma", "n")
                   if eff.get(k) is None]
        if missing:
            raise DomainError("need --data or explicit no-surge parameters "
                              f"(missing: {', '.join(missing)})")
        null = surge.NullParams(float(eff["alpha1"]), float(eff["beta1"]),
                                float(eff["phi"]), float(eff["sigma"]),
                                int(eff["n"]))
        start_year = int(eff["from_year"])
        grid = surge.surge_grid(null, surge_years, vantage_years,
                                reps=int(eff["reps"]), seed=int(eff["seed"]),
                                level=1.0 - level, threads=threads,
                                start_year=start_year)
    out = _out_dir(eff)
    with open(out / "grid.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("surge_year\\vantage," + ",".join(map(str, grid.vantage_years)) + "\n")
        for i, sy in enumerate(grid.surge_years):
            row = ",".join(f"{grid.min_pct[i, j]:.2f}"
                           for j in range(len(grid.vantage_years)))
            fh.write(f"{sy},{row}\n")
    result = {
        "surge_years": list(grid.surge_years),
        "vantage_years": list(grid.vantage_years),
        "quantiles": list(grid.quantiles),
        "min_pct": [[float(v) for v in row] for row in grid.min_pct],
        "min_slope": [[float(v) for v in row] for row in grid.min_slope],
        "base_slopes": [float(v) for v in grid.base_slopes],
        "start_year": start_year,
    }
    _write_json(out / "grid.json", _report("power-grid", eff, result))
    if eff["plot"]:
        plots.plot_grid(grid, out / "grid.svg", label)
    print(f"grid written: {len(grid.surge_years)} surge years x "
          f"{len(grid.vantage_years)} vantage years")
    return EXIT_OK


# ---------------------------------------------------------------- diagnose

DIAG_DEFAULTS = dict(FIT_DEFAULTS, max_lag=None)


def cmd_diagnose(args) -> int:
    eff = _merged(args, DIAG_DEFAULTS)
    series = _load_series(eff)
    spec = _spec_from(eff)
    seg, fit = search.detect(series, spec)
    max_lag = eff.get("max_lag")
    report = diagnostics.diagnose(fit, int(max_lag) if max_lag else None)
    out = _out_dir(eff)
    payload = report.to_dict()
    payload["fit"] = fit.to_dict(series.start_year)
    _write_json(out / "diagnostics.json", _report("diagnose", eff, payload))
    if eff["plot"]:
        plots.plot_acf(report.acf, report.acf_band, out / "acf.svg",
                       title=f"{series.label}: innovation residual ACF")
    print(report.format_table())
    print(f"verdict: {'pass' if report.ok else 'reject'}")
    return EXIT_OK


# ---------------------------------------------------------------- simulate

SIM_DEFAULTS = {
    "preset": None, "alpha1": 0.0, "beta1": 0.0, "phi": None, "sigma": None,
    "n": None, "reps": 1, "seed": 0, "threads": None, "stat": None,
    "quantile": 0.95, "out_dir": ".",
}


def cmd_simulate(args) -> int:
    eff = _merged(args, SIM_DEFAULTS)
    threads = _threads(eff)
    if eff.get("preset"):
        if eff["preset"] not in NULL_PRESETS:
            raise DomainError(f"unknown preset {eff['preset']!r}; options: "
                              + ", ".join(sorted(NULL_PRESETS)))
        a1, b1, phi, sigma, n = NULL_PRESETS[eff["preset"]]
        for key, val in (("alpha1", a1), ("beta1", b1), ("phi", phi),
                         ("sigma", sigma), ("n", n)):
            if getattr(args, key, None) is None:
                eff[key] = val
    if eff.get("phi") is None or eff.get("sigma") is None or eff.get("n") is None:
        raise DomainError("need --preset or all of --phi, --sigma, --n")
    null = surge.NullParams(float(eff["alpha1"]), float(eff["beta1"]),
                            float(eff["phi"]), float(eff["sigma"]),
                            int(eff["n"]))
    out = _out_dir(eff)
    if eff.get("stat") == "tmax":
        mc = surge.mc_null_quantile(null, reps=int(eff["reps"]),
                                    level=float(eff["quantile"]),
                                    seed=int(eff["seed"]), threads=threads)
        result = {"quantile": mc.q, "se": mc.se, "level": mc.level,
                  "reps": mc.reps, "n": mc.n,
                  "null": {"alpha1": null.alpha1, "beta1": null.beta1,
                           "phi": null.phi, "sigma": null.sigma}}
        _write_json(out / "simulate.json", _report("simulate", eff, result))
        print(f"T_max {mc.level:.2%} quantile = {mc.q:.4f} (se {mc.se:.4f}, "
              f"{mc.reps} replicates, N={mc.n})")
        return EXIT_OK
    reps = int(eff["reps"])
    t = np.arange(1.0, null.n + 1.0)
    from . import ar as _ar
    rng = _ar.rng_stream(int(eff["seed"]), 0)
    eps = _ar.simulate_ar1_matrix(
        _ar.ArModel((null.phi,) if null.phi else (), null.sigma),
        null.n, reps, rng)
    Y = null.alpha1 + null.beta1 * t + eps
    with open(out / "simulated.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("replicate,t,value\n")
        for r in range(reps):
            for j in range(null.n):
                fh.write(f"{r},{j + 1},{Y[r, j]:.6f}\n")
    summary = {"reps": reps, "n": null.n,
               "mean": float(Y.mean()), "sd": float(Y.std(ddof=1)),
               "lag1_acf_mean": float(np.mean(np.sum(
                   (Y - Y.mean(1, keepdims=True))[:, 1:]
                   * (Y - Y.mean(1, keepdims=True))[:, :-1], axis=1)
                   / np.sum((Y - Y.mean(1, keepdims=True)) ** 2, axis=1)))}
    _write_json(out / "simulate.json", _report("simulate", eff, summary))
    print(f"wrote {reps} replicate series of length {null.n}")
    return EXIT_OK


# ------------------------------------------------------------------ ingest

INGEST_DEFAULTS = {
    "data": None, "format": "normalized", "url": None, "timeout": 30.0,
    "from_year": None, "to_year": None, "out_dir": ".", "out_name": "normalized.csv",
}


def cmd_ingest(args) -> int:
    eff = _merged(args, INGEST_DEFAULTS)
    if eff.get("url"):
        text = dataio.fetch(eff["url"], float(eff["timeout"]))
        series = dataio.parse_text(text, eff["format"], eff["url"])
    else:
        series = _load_series(dict(eff, from_year=None, to_year=None))
    a, b = eff.get("from_year"), eff.get("to_year")
    if a is not None or b is not None:
        series = series.window(a, b)
    out = _out_dir(eff)
    dest = out / str(eff["out_name"])
    dataio.export_normalized(series, dest)
    result = {"source": eff["format"], "n": series.n,
              "start_year": series.start_year, "end_year": series.end_year,
              "baseline": series.baseline, "output": str(dest)}
    _write_json(out / "ingest.json", _report("ingest", eff, result))
    print(f"{series.n} annual values {series.start_year}-{series.end_year} "
          f"-> {dest}")
    return EXIT_OK


# ------------------------------------------------------------------- main

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="input file path")
    p.add_argument("--format", choices=dataio.SOURCES, help="input layout")
    p.add_argument("--from-year", dest="from_year", type=int)
    p.add_argument("--to-year", dest="to_year", type=int)


def _add_model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trend", choices=("continuous", "discontinuous"))
    p.add_argument("--errors",
                   choices=("independent", "global-ar", "piecewise-ar1"))
    p.add_argument("--ar-order", dest="ar_order", type=int)
    p.add_argument("--penalty", help="'bic' or a per-changepoint charge")
    p.add_argument("--min-seg-len", dest="min_seg_len", type=int)
    p.add_argument("--search",
                   choices=("auto", "pelt", "exact_dp", "exhaustive"))
    p.add_argument("--max-m", dest="max_m", type=int)
    p.add_argument("--no-plot", dest="plot", action="store_false", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surgedetect",
        description="Trend changepoint detection and warming-surge testing "
                    "for annual series with autocorrelated noise.")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("fit", help="detect changepoints and fit the trend model")
    _add_common(p); _add_data(p); _add_model(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("surge-test", help="scan test for a warming-rate change")
    _add_common(p); _add_data(p)
    p.add_argument("--level", type=float)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--fixed-k", dest="fixed_k", type=int,
                   help="also test this calendar year with the fixed-k t test")
    p.set_defaults(func=cmd_surge_test)

    p = sub.add_parser("power-grid",
                       help="minimum detectable surge magnitude grid")
    _add_common(p); _add_data(p)
    p.add_argument("--surge-years", dest="surge_years", help="e.g. 1990:2015")
    p.add_argument("--vantage-years", dest="vantage_years", help="e.g. 2024:2040")
    p.add_argument("--level", type=float)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    for name in ("alpha1", "beta1", "phi", "sigma"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--n", type=int, help="observed series length")
    p.add_argument("--no-plot", dest="plot", action="store_false", default=None)
    p.set_defaults(func=cmd_power_grid)

    p = sub.add_parser("diagnose", help="residual diagnostics for a fit")
    _add_common(p); _add_data(p); _add_model(p)
    p.add_argument("--max-lag", dest="max_lag", type=int)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("simulate", help="simulate no-surge series or statistics")
    _add_common(p)
    p.add_argument("--preset", help=", ".join(sorted(NULL_PRESETS)))
    for name in ("alpha1", "beta1", "phi", "sigma"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--stat", choices=("tmax",))
    p.add_argument("--quantile", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="convert a source file to the normalized CSV")
    _add_common(p); _add_data(p)
    p.add_argument("--url", help="fetch the input from this URL instead")
    p.add_argument("--timeout", type=float)
    p.add_argument("--out-name", dest="out_name")
    p.set_defaults(func=cmd_ingest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, IngestError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (np.linalg.LinAlgError, FloatingPointError, OverflowError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except SurgeDetectError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
