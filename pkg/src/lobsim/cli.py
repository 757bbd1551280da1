"""Command-line front end: single runs, ensemble sweeps, and analysis of
externally produced price series.

Exit codes: 0 success, 1 usage or configuration error, 2 run aborted on an
empty book side, 3 analysis error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .engine import (
    ConfigError, LiquidityAborted, SimConfig, run,
    write_series_csv, write_trades_csv,
)
from .stats import StatsError, full_report

# config keys holding a single number
_SCALAR_KEYS = {
    "n_fundamental": int,
    "T": int,
    "seed": int,
    "tick_size": float,
    "p_active": float,
    "sigma_dpf": float,
    "lambda_limit": float,
    "mu_news": float,
    "sigma_news": float,
    "f_news": float,
    "gamma": float,
    "warmup_steps": int,
    "initial_price": float,
    "max_resting_age": int,
}
# config keys holding a lo..hi range
_RANGE_KEYS = {
    "p_f": float,
    "chi_market": float,
    "chi_opinion": float,
    "t_wait": int,
}


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_config(path: str) -> SimConfig:
    """Parse the flat `key = value` grammar into a validated SimConfig.

    One assignment per line; `#` starts a comment; ranges are `lo..hi`;
    technical groups are repeated `group = slow,fast,count` lines (the first
    such line replaces the default groups). Missing keys keep their
    defaults; unknown keys are errors.
    """
    fields: dict = {}
    groups: list = []
    with open(path) as f:
        lines = f.readlines()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        try:
            if key == "group":
                parts = [p.strip() for p in value.split(",")]
                if len(parts) != 3:
                    raise ValueError("need slow,fast,count")
                groups.append(tuple(int(p) for p in parts))
            elif key == "symmetric_profit_taking":
                fields[key] = _parse_bool(value)
            elif key == "liquidity_failure":
                fields[key] = value
            elif key in _RANGE_KEYS:
                conv = _RANGE_KEYS[key]
                if ".." not in value:
                    raise ValueError("ranges are written lo..hi")
                lo, hi = value.split("..", 1)
                rng = (conv(lo.strip()), conv(hi.strip()))
                fields["t_wait_range" if key == "t_wait"
                       else f"{key}_range"] = rng
            elif key in _SCALAR_KEYS:
                fields[key] = _SCALAR_KEYS[key](value)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {e}")
    if groups:
        fields["technical_groups"] = tuple(groups)
    config = SimConfig(**fields)
    config.validate()
    return config


def _load_config(args) -> SimConfig:
    config = parse_config(args.config) if args.config else SimConfig()
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if getattr(args, "fundamental_only", False):
        config = dataclasses.replace(config, technical_groups=())
    config.validate()
    return config


def _write_report(report: dict, path: str) -> None:
    with open(path, "w") as f:
        json.dump(report, f, indent=2)
        f.write("\n")


def cmd_run(args) -> int:
    config = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    try:
        record = run(config, collect_trades=args.trade_log)
    except LiquidityAborted as e:
        print(f"aborted: {e}", file=sys.stderr)
        return 2
    series_path = os.path.join(args.out, "series.csv")
    write_series_csv(record, series_path)
    report = full_report(record.close_currency(), tau=args.tau,
                         n_window=args.window)
    report_path = os.path.join(args.out, "report.json")
    _write_report(report, report_path)
    wrote = [series_path, report_path]
    if args.trade_log:
        trades_path = os.path.join(args.out, "trades.csv")
        write_trades_csv(record, trades_path)
        wrote.append(trades_path)
    d = record.diagnostics
    print(f"run complete: T={config.T} seed={config.seed} "
          f"news={d.news_count} trades={int(record.volume.sum())}")
    for path in wrote:
        print(f"wrote {path}")
    return 0


def derive_seed(root_seed: int, sweep_idx: int, run_idx: int) -> int:
    """Per-run seed from (root, sweep value index, run index); distinct and
    independent of execution order."""
    ss = np.random.SeedSequence((root_seed, sweep_idx, run_idx))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _sweep_config(base: SimConfig, axis: str, value: float) -> SimConfig:
    if axis == "gamma":
        return dataclasses.replace(base, gamma=value)
    if axis != "tech_fraction":
        raise ConfigError(f"unknown sweep axis {axis!r}")
    groups = base.technical_groups or SimConfig().technical_groups
    n_groups = len(groups)
    per = round(value * base.n_fundamental / n_groups)
    if per <= 0:
        return dataclasses.replace(base, technical_groups=())
    scaled = tuple((slow, fast, per) for slow, fast, _ in groups)
    return dataclasses.replace(base, technical_groups=scaled)


_ENSEMBLE_COLUMNS = ("skewness", "kurtosis", "kappa_neg", "kappa_pos",
                     "kappa_diff", "R_neg", "p_neg", "R_pos", "p_pos",
                     "vol_ks_p")


def _run_one(config: SimConfig, tau: int, window: int):
    """One ensemble member -> column vector (NaN for failed sections), or
    None if the run aborted."""
    try:
        record = run(config)
    except LiquidityAborted:
        return None
    report = full_report(record.close_currency(), tau=tau, n_window=window)

    def get(section, key):
        value = report[section].get(key)
        return float("nan") if value is None else value

    kn = get("tail_neg", "kappa")
    kp = get("tail_pos", "kappa")
    return (report.get("skewness", float("nan")),
            report.get("kurtosis_raw", float("nan")),
            kn, kp, kn - kp,
            get("tail_neg", "R"), get("tail_neg", "p"),
            get("tail_pos", "R"), get("tail_pos", "p"),
            get("vol_ks", "p"))


def _ensemble_cell(job):
    config, tau, window = job
    return _run_one(config, tau, window)


def cmd_ensemble(args) -> int:
    base = _load_config(args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated numbers: "
                          f"{args.values!r}")
    if not values:
        raise ConfigError("--values is empty")
    if args.runs < 1:
        raise ConfigError("--runs must be >= 1")

    jobs = []
    for si, value in enumerate(values):
        for ri in range(args.runs):
            config = _sweep_config(base, args.sweep, value)
            config = dataclasses.replace(
                config, seed=derive_seed(base.seed, si, ri))
            config.validate()
            jobs.append((config, args.tau, args.window))

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_ensemble_cell, jobs))
    else:
        results = [_ensemble_cell(job) for job in jobs]

    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "summary.csv")
    header = ["sweep", "value", "runs_completed", "runs_failed"]
    for col in _ENSEMBLE_COLUMNS:
        header += [f"{col}_mean", f"{col}_sd"]
    with open(out_path, "w") as f:
        f.write(",".join(header) + "\n")
        for si, value in enumerate(values):
            cell = [results[si * args.runs + ri] for ri in range(args.runs)]
            done = [c for c in cell if c is not None]
            failed = len(cell) - len(done)
            row = [args.sweep, repr(value), str(len(done)), str(failed)]
            table = np.array(done, dtype=np.float64).reshape(len(done), -1)
            for ci in range(len(_ENSEMBLE_COLUMNS)):
                col = table[:, ci] if len(done) else np.array([])
                col = col[~np.isnan(col)]
                if len(col) == 0:
                    row += ["nan", "nan"]
                else:
                    sd = float(np.std(col)) if len(col) > 1 else 0.0
                    row += [repr(float(np.mean(col))), repr(sd)]
            f.write(",".join(row) + "\n")
    print(f"wrote {out_path}")
    return 0


def read_close_column(path: str) -> np.ndarray:
    with open(path) as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "close" not in reader.fieldnames:
            raise StatsError("CSV needs a `close` column")
        try:
            closes = [float(row["close"]) for row in reader]
        except (TypeError, ValueError, KeyError):
            raise StatsError("CSV has a malformed `close` value")
    if not closes:
        raise StatsError("CSV has no data rows")
    return np.array(closes, dtype=np.float64)


def cmd_analyze(args) -> int:
    try:
        closes = read_close_column(args.csv)
        report = full_report(closes, tau=args.tau, n_window=args.window)
    except (StatsError, OSError) as e:
        print(f"analysis error: {e}", file=sys.stderr)
        return 3
    os.makedirs(args.out, exist_ok=True)
    report_path = os.path.join(args.out, "report.json")
    _write_report(report, report_path)
    print(f"wrote {report_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lobsim",
        description="Agent-based limit-order-book market simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="flat key = value config file")
            p.add_argument("--seed", type=int, default=None,
                           help="override the config seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--tau", type=int, default=1, help="return lag")
        p.add_argument("--window", type=int, default=30,
                       help="volatility window length")

    p_run = sub.add_parser("run", help="single simulation")
    common(p_run)
    p_run.add_argument("--fundamental-only", action="store_true",
                       help="drop all technical groups")
    p_run.add_argument("--trade-log", action="store_true",
                       help="also write per-trade CSV")
    p_run.set_defaults(func=cmd_run)

    p_ens = sub.add_parser("ensemble", help="seeded parameter sweep")
    common(p_ens)
    p_ens.add_argument("--sweep", choices=("gamma", "tech_fraction"),
                       required=True)
    p_ens.add_argument("--values", required=True,
                       help="comma-separated sweep values")
    p_ens.add_argument("--runs", type=int, default=50,
                       help="runs per sweep value")
    p_ens.add_argument("--jobs", type=int, default=1,
                       help="parallel worker processes")
    p_ens.set_defaults(func=cmd_ensemble)

    p_an = sub.add_parser("analyze", help="report on an external series CSV")
    p_an.add_argument("csv", help="CSV with a `close` column")
    common(p_an, config=False)
    p_an.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse uses 2 for usage errors
        return 0 if e.code == 0 else 1
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
