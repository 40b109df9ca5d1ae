"""Command-line interface: validate inputs, run backtests, predict, re-emit reports.

Exit codes: 0 success, 1 validation failure, 2 runtime error. All randomness
flows from the seed (config ``[backtest] seed`` or ``--seed``, flag wins).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import io
import sys
import warnings
from pathlib import Path

from . import clinical, stacking, web
from .backtest import (
    NAIVE,
    WEB_METHODS,
    BacktestConfig,
    LogEntry,
    PredictionLog,
    derive_month_seed,
    run_full_experiment,
    run_level0_backtest,
    run_level1_backtest,
    summarize,
)
from .errors import UptakecastError
from .ingest import compute_uptake, emit_report, load_cohorts, load_registry, load_trends
from .timeseries import MonthStamp, TimeSeries, UptakeSeries


def _parse_month_flag(text: str) -> MonthStamp:
    year_s, _, month_s = text.partition("-")
    return MonthStamp(int(year_s), int(month_s))


def _config_from_file(parser: configparser.ConfigParser, seed_flag: int | None) -> BacktestConfig:
    kwargs = {}
    if parser.has_section("backtest"):
        section = parser["backtest"]
        for key in (
            "level0_warmup_months",
            "level1_warmup_months",
            "ar_lags",
            "hw_season_length",
            "bagging_subset_size",
            "bagging_subsets",
            "seed",
            "level1_sliding",
        ):
            if section.get(key, "").strip():
                kwargs[key] = int(section[key])
        for key in ("wm_eta", "wm_epsilon", "svr_cost", "svr_tube_eps", "svr_gamma"):
            if section.get(key, "").strip():
                kwargs[key] = float(section[key])
        if section.get("row_bagging", "").strip():
            kwargs["row_bagging"] = section.getboolean("row_bagging")
        orders = section.get("arima_orders", "").strip()
        if orders:
            kwargs["arima_orders"] = (
                "auto" if orders == "auto" else tuple(int(v) for v in orders.split(","))
            )
        if section.get("end_month", "").strip():
            kwargs["end_month"] = _parse_month_flag(section["end_month"])
    if seed_flag is not None:
        kwargs["seed"] = seed_flag
    return BacktestConfig(**kwargs)


def _load_experiment(config_path: str, vaccine_filter: list[str] | None, seed_flag: int | None):
    """Parse the experiment file and load every referenced input."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # vaccine ids are case-sensitive
    read = parser.read(config_path, encoding="utf-8")
    if not read:
        raise UptakecastError(f"config file not found: {config_path}")
    for section in ("data", "vaccines"):
        if not parser.has_section(section):
            raise UptakecastError(f"config is missing the [{section}] section")
    registry = load_registry(parser["data"]["registry"])
    cohorts = load_cohorts(parser["data"]["cohorts"])
    cfg = _config_from_file(parser, seed_flag)

    wanted = set(vaccine_filter) if vaccine_filter else None
    datasets: dict[str, tuple[UptakeSeries, web.QueryPanel]] = {}
    for vaccine, trends_path in parser["vaccines"].items():
        name = vaccine.strip()
        if wanted is not None and name not in wanted:
            continue
        slice_ = [r for r in registry if r.vaccine == name]
        if not slice_:
            raise UptakecastError(f"registry has no rows for vaccine {name!r}")
        uptake = compute_uptake(slice_, cohorts)
        panel = load_trends(trends_path)
        datasets[name] = (uptake, panel)
    if wanted is not None:
        missing = wanted - set(datasets)
        if missing:
            raise UptakecastError(f"vaccines not in config: {sorted(missing)}")
    if not datasets:
        raise UptakecastError("config defines no vaccines")
    return datasets, cfg


_LOG_HEADER = [
    "vaccine",
    "method",
    "year",
    "month",
    "predicted",
    "actual",
    "train_start_year",
    "train_start_month",
    "train_end_year",
    "train_end_month",
    "diagnostic",
]


def write_log_csv(log: PredictionLog) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_LOG_HEADER)
    for e in log.entries:
        writer.writerow(
            [
                e.vaccine,
                e.method,
                e.month.year,
                e.month.month,
                repr(e.predicted),
                repr(e.actual),
                e.train_start.year,
                e.train_start.month,
                e.train_end.year,
                e.train_end.month,
                e.diagnostic,
            ]
        )
    return buf.getvalue()


def read_log_csv(text: str) -> PredictionLog:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != _LOG_HEADER:
        raise UptakecastError(f"unexpected log header {header}")
    entries = []
    for row in reader:
        if not row:
            continue
        entries.append(
            LogEntry(
                vaccine=row[0],
                method=row[1],
                month=MonthStamp(int(row[2]), int(row[3])),
                predicted=float(row[4]),
                actual=float(row[5]),
                train_start=MonthStamp(int(row[6]), int(row[7])),
                train_end=MonthStamp(int(row[8]), int(row[9])),
                diagnostic=row[10],
            )
        )
    return PredictionLog(tuple(entries))


def _write_out(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _cmd_validate(args) -> int:
    datasets, cfg = _load_experiment(args.config, args.vaccine, args.seed)
    for name, (uptake, panel) in datasets.items():
        series = uptake.series
        aligned_panel, aligned_series = web.align_panel(panel, series)
        print(
            f"{name}: uptake {series.start}..{series.end} ({len(series)} months), "
            f"panel {panel.n_queries} queries, shared window "
            f"{aligned_series.start}..{aligned_series.end}"
        )
    print(f"config ok: seed={cfg.seed}, warmups={cfg.level0_warmup_months}/"
          f"{cfg.level1_warmup_months}, ar_lags={cfg.ar_lags}")
    return 0


def _cmd_backtest(args) -> int:
    datasets, cfg = _load_experiment(args.config, args.vaccine, args.seed)
    logs: dict[str, PredictionLog] = {}
    reports = run_full_experiment(datasets, cfg, collect_logs=logs)
    if args.log_dir:
        log_dir = Path(args.log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        for name, log in logs.items():
            (log_dir / f"{name}.log.csv").write_text(write_log_csv(log), encoding="utf-8")
    text = emit_report(reports, format=args.format)
    if args.level0_window:
        extra = []
        for name, log in logs.items():
            level0 = PredictionLog(
                tuple(e for e in log.entries if ":" not in e.method)
            )
            rep = summarize(level0, datasets[name][0], seed=cfg.seed, cfg=cfg, vaccine=name)
            extra.append(dataclasses.replace(rep, vaccine=f"{name} (level0 window)"))
        text += emit_report(extra, format=args.format)
    _write_out(text, args.out)
    return 0


def _cmd_predict(args) -> int:
    if not args.vaccine or len(args.vaccine) != 1:
        raise UptakecastError("predict needs exactly one --vaccine")
    datasets, cfg = _load_experiment(args.config, args.vaccine, args.seed)
    name = args.vaccine[0]
    uptake, panel = datasets[name]
    panel, series = web.align_panel(panel, uptake.series)
    if cfg.end_month is not None and cfg.end_month < series.end:
        series = series.slice(series.start, cfg.end_month)
        panel = panel.slice(panel.start, cfg.end_month)
    target = series.end.plus(1)

    wm_sink: list[web.WmState] = []
    log0 = run_level0_backtest(
        UptakeSeries(series), panel, cfg, vaccine=name, wm_state_sink=wm_sink
    )
    preds: dict[str, float] = {NAIVE: float(series.values[-1])}
    preds["HW"] = clinical.predict_hw(clinical.fit_holt_winters(series, cfg.hw_season_length))
    ar = clinical.fit_ar(series, cfg.ar_lags)
    preds[cfg.ar_method] = clinical.predict_ar(ar, series.values[-cfg.ar_lags :][::-1])
    orders = cfg.arima_orders
    if orders == "auto":
        orders = clinical.select_arima_orders(series)
    preds["ARIMA"] = clinical.predict_arima(clinical.fit_arima(series, *orders), series)

    last_row = panel.matrix[-1]
    # Query frequencies for the unobserved month are not available; the web
    # models score the most recent observed row, the standard nowcast input.
    ols = web.fit_web_ols(panel, series)
    preds["O"] = web.predict_web(ols, last_row)
    lam = web.select_lambda_cv(panel, series)
    preds["L"] = web.predict_web(web.fit_lasso(panel, series, lam), last_row)
    bag = web.fit_bagging(
        panel,
        series,
        n_subsets=cfg.bagging_subsets,
        subset_size=cfg.bagging_subset_size,
        seed=derive_month_seed(cfg.seed, target),
        row_bagging=cfg.row_bagging,
    )
    member_preds = web.member_predictions(bag, last_row)
    preds["B"] = float(member_preds.mean())
    # Weights carried forward from the backtest replay over the history.
    if wm_sink and wm_sink[-1].member_count == member_preds.size:
        state = wm_sink[-1]
    else:
        state = web.wm_init(member_preds.size, cfg.wm_eta, cfg.wm_epsilon)
    preds["WM"] = web.wm_predict(state, member_preds)

    stream_months = log0.months(NAIVE, name)
    by_method = {
        method: {e.month: e.predicted for e in log0.entries if e.method == method}
        for method in cfg.clinical_methods() + WEB_METHODS
    }
    for clin in cfg.clinical_methods():
        for wm in WEB_METHODS:
            samples = [
                stacking.StackSample(
                    e_c=by_method[clin][m],
                    e_w=by_method[wm][m],
                    target=series.value_at(m),
                    month=m,
                )
                for m in stream_months
            ]
            for meta in ("OLS", "SVR-linear", "SVR-gaussian"):
                method = f"{meta}:{clin}+{wm}"
                if meta == "OLS":
                    model = stacking.fit_stack_ols(samples)
                    preds[method] = stacking.predict_stack_ols(model, preds[clin], preds[wm])
                else:
                    kernel = "linear" if meta == "SVR-linear" else "gaussian"
                    svr = stacking.fit_svr(
                        samples, kernel=kernel, C=cfg.svr_cost,
                        eps=cfg.svr_tube_eps, gamma=cfg.svr_gamma,
                    )
                    preds[method] = stacking.predict_svr(svr, preds[clin], preds[wm])

    lines = [f"next-month predictions for {name}, target {target}:"]
    for method in cfg.method_order():
        if method in preds:
            lines.append(f"{method},{preds[method]!r}")
    _write_out("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_report(args) -> int:
    if not args.log_dir:
        raise UptakecastError("report needs --log-dir")
    log_dir = Path(args.log_dir)
    paths = sorted(log_dir.glob("*.log.csv"))
    if not paths:
        raise UptakecastError(f"no *.log.csv files under {log_dir}")
    reports = []
    for path in paths:
        log = read_log_csv(path.read_text(encoding="utf-8"))
        vaccine = log.vaccines()[0]
        actuals = {e.month: e.actual for e in log.entries}
        ordered = sorted(set(actuals), key=lambda s: s.to_index())
        series = TimeSeries(ordered[0], [actuals[m] for m in ordered])
        reports.append(summarize(log, UptakeSeries(series), vaccine=vaccine))
    _write_out(emit_report(reports, format=args.format), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uptakecast",
        description="Ensemble vaccination-uptake forecasting and backtesting",
    )
    parser.add_argument("command", choices=["validate", "backtest", "predict", "report"])
    parser.add_argument("--config", help="experiment config file (INI)")
    parser.add_argument(
        "--vaccine", action="append", help="restrict to this vaccine id (repeatable)"
    )
    parser.add_argument("--seed", type=int, default=None, help="RNG seed (wins over config)")
    parser.add_argument("--format", choices=["csv", "markdown"], default="markdown")
    parser.add_argument("--out", help="write output here instead of stdout")
    parser.add_argument(
        "--level0-window",
        action="store_true",
        help="also emit level-0 RMSE over the longer level-0 window",
    )
    parser.add_argument("--log-dir", help="directory for prediction-log CSVs")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    commands = {
        "validate": _cmd_validate,
        "backtest": _cmd_backtest,
        "predict": _cmd_predict,
        "report": _cmd_report,
    }
    if args.command in ("validate", "backtest", "predict") and not args.config:
        print("error: --config is required", file=sys.stderr)
        return 1
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            return commands[args.command](args)
    except UptakecastError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {type(err).__name__}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
