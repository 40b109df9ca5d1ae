"""Rolling one-step-ahead backtest: full refit each month, warm-up schedules,
all single-source methods, all ensemble combinations, RMSE reporting.

Vaccines are processed independently; within one vaccine the month loop is
strictly ordered because the weighted-majority state and the growing training
windows are sequential. Every model failure is caught per cell, replaced by
the naive prediction and flagged in the entry diagnostics, so one bad window
never aborts a sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import clinical, stacking, web
from .errors import EmptyLog, InsufficientHistory, UptakecastError
from .timeseries import MonthStamp, TimeSeries, UptakeSeries, rmse

NAIVE = "Naive"
# Model failures that get a per-cell naive fallback instead of aborting a run.
FIT_ERRORS = (UptakecastError, np.linalg.LinAlgError)
WEB_METHODS = ("WM", "B", "L", "O")
META_MODELS = ("OLS", "SVR-linear", "SVR-gaussian")


@dataclass(frozen=True)
class BacktestConfig:
    """Protocol constants; defaults follow the published evaluation setup."""

    level0_warmup_months: int = 24
    level1_warmup_months: int = 12
    ar_lags: int = 12
    arima_orders: tuple[int, int, int] | str = (1, 1, 1)  # or "auto" for the AIC grid
    hw_season_length: int = 12
    bagging_subset_size: int = 10
    bagging_subsets: int | None = None  # None: one subset per panel query
    row_bagging: bool = False
    wm_eta: float = 5.0
    wm_epsilon: float = 2.0
    svr_cost: float = 1.0
    svr_tube_eps: float = 0.1
    svr_gamma: float = 0.25
    seed: int = 0
    end_month: MonthStamp | None = None
    level1_sliding: int | None = None  # None: growing window

    def __post_init__(self):
        if self.level0_warmup_months < 2 * self.hw_season_length:
            raise ValueError(
                "level0_warmup_months must cover two Holt-Winters seasons "
                f"({2 * self.hw_season_length}), got {self.level0_warmup_months}"
            )
        for name in ("level1_warmup_months", "ar_lags", "bagging_subset_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.arima_orders != "auto":
            p, d, q = self.arima_orders
            if min(p, d, q) < 0:
                raise ValueError("arima orders must be >= 0")

    @property
    def ar_method(self) -> str:
        return f"AR{self.ar_lags}"

    def clinical_methods(self) -> tuple[str, ...]:
        return ("HW", self.ar_method, "ARIMA")

    def ensemble_methods(self) -> tuple[str, ...]:
        return tuple(
            f"{meta}:{clin}+{wm}"
            for meta in META_MODELS
            for clin in self.clinical_methods()
            for wm in WEB_METHODS
        )

    def method_order(self) -> tuple[str, ...]:
        return (NAIVE,) + self.clinical_methods() + WEB_METHODS + self.ensemble_methods()


@dataclass(frozen=True)
class LogEntry:
    vaccine: str
    method: str
    month: MonthStamp
    predicted: float
    actual: float
    train_start: MonthStamp
    train_end: MonthStamp
    diagnostic: str = ""


@dataclass(frozen=True)
class PredictionLog:
    """Per (vaccine, method, month) predictions with training-window bounds."""

    entries: tuple[LogEntry, ...]

    def __post_init__(self):
        months: dict[tuple[str, str], list[int]] = {}
        for e in self.entries:
            months.setdefault((e.vaccine, e.method), []).append(e.month.to_index())
        for (vaccine, method), idx in months.items():
            if len(set(idx)) != len(idx):
                raise ValueError(f"duplicate log entry for ({vaccine}, {method})")
            lo, hi = min(idx), max(idx)
            if hi - lo + 1 != len(idx):
                raise ValueError(
                    f"({vaccine}, {method}) predictions are not consecutive months"
                )

    def __len__(self) -> int:
        return len(self.entries)

    def methods(self) -> tuple[str, ...]:
        out: list[str] = []
        for e in self.entries:
            if e.method not in out:
                out.append(e.method)
        return tuple(out)

    def vaccines(self) -> tuple[str, ...]:
        out: list[str] = []
        for e in self.entries:
            if e.vaccine not in out:
                out.append(e.vaccine)
        return tuple(out)

    def months(self, method: str, vaccine: str | None = None) -> tuple[MonthStamp, ...]:
        return tuple(
            e.month
            for e in self.entries
            if e.method == method and (vaccine is None or e.vaccine == vaccine)
        )

    def prediction(self, method: str, month: MonthStamp, vaccine: str | None = None) -> float:
        for e in self.entries:
            if e.method == method and e.month == month and (
                vaccine is None or e.vaccine == vaccine
            ):
                return e.predicted
        raise KeyError((method, month, vaccine))

    def merge(self, other: "PredictionLog") -> "PredictionLog":
        return PredictionLog(self.entries + other.entries)


@dataclass(frozen=True)
class BacktestReport:
    """Per-vaccine RMSE per method over one shared evaluation window."""

    vaccine: str
    window_start: MonthStamp | None
    window_end: MonthStamp | None
    n_months: int
    rmse: dict[str, float]
    beats_naive: dict[str, bool]
    is_row_min: dict[str, bool]
    seed: int | None = None
    diagnostics: tuple[str, ...] = ()
    error: str | None = None


def derive_month_seed(seed: int, month: MonthStamp) -> int:
    """Deterministic per-month RNG seed, independent of series length."""
    return int(np.random.SeedSequence([seed, month.to_index()]).generate_state(1)[0])


def _predict_web_models(
    Q_hist: web.QueryPanel,
    E_hist: TimeSeries,
    target_row: np.ndarray,
    cfg: BacktestConfig,
    month_seed: int,
) -> tuple[dict[str, float], np.ndarray | None, dict[str, str]]:
    """Fit O, L and the bagged members on the history; predict the target row.

    Returns method->prediction, the member predictions (for the WM update),
    and method->diagnostic for any fallback taken.
    """
    preds: dict[str, float] = {}
    notes: dict[str, str] = {}
    fallback = float(E_hist.values[-1])

    try:
        ols = web.fit_web_ols(Q_hist, E_hist)
        preds["O"] = web.predict_web(ols, target_row)
    except FIT_ERRORS as err:
        preds["O"] = fallback
        notes["O"] = f"fallback=naive ({type(err).__name__}: {err})"

    try:
        lam = web.select_lambda_cv(Q_hist, E_hist, k=3)
        lasso = web.fit_lasso(Q_hist, E_hist, lam)
        preds["L"] = web.predict_web(lasso, target_row)
    except FIT_ERRORS as err:
        preds["L"] = fallback
        notes["L"] = f"fallback=naive ({type(err).__name__}: {err})"

    member_preds: np.ndarray | None = None
    try:
        bag = web.fit_bagging(
            Q_hist,
            E_hist,
            n_subsets=cfg.bagging_subsets,
            subset_size=cfg.bagging_subset_size,
            seed=month_seed,
            row_bagging=cfg.row_bagging,
        )
        member_preds = web.member_predictions(bag, target_row)
        preds["B"] = float(member_preds.mean())
    except FIT_ERRORS as err:
        preds["B"] = fallback
        notes["B"] = f"fallback=naive ({type(err).__name__}: {err})"
    return preds, member_preds, notes


def run_level0_backtest(
    E: UptakeSeries,
    Q: web.QueryPanel,
    cfg: BacktestConfig,
    vaccine: str = "series",
    wm_state_sink: list[web.WmState] | None = None,
) -> PredictionLog:
    """Refit every level-0 model each month on all data strictly before it.

    The first predicted month follows the warm-up window; the weighted
    majority weights thread through the months in order, updated only after
    each month's actual value is revealed.
    """
    series = E.series
    panel, series = web.align_panel(Q, series)
    if cfg.end_month is not None and cfg.end_month < series.end:
        series = series.slice(series.start, cfg.end_month)
        panel = panel.slice(panel.start, cfg.end_month)
    T = len(series)
    warm = cfg.level0_warmup_months
    if T < warm + 1:
        raise InsufficientHistory(f"need {warm + 1} months, series spans {T}")

    values = series.values
    entries: list[LogEntry] = []
    wm_state: web.WmState | None = None

    for k in range(warm, T):
        month = series.start.plus(k)
        train_start, train_end = series.start, series.start.plus(k - 1)
        hist = TimeSeries(series.start, values[:k])
        panel_hist = panel.slice(train_start, train_end)
        target_row = panel.matrix[k]
        naive_val = float(values[k - 1])
        actual = float(values[k])
        month_preds: dict[str, float] = {NAIVE: naive_val}
        notes: dict[str, str] = {}

        try:
            hw = clinical.fit_holt_winters(hist, cfg.hw_season_length)
            month_preds["HW"] = clinical.predict_hw(hw)
        except FIT_ERRORS as err:
            month_preds["HW"] = naive_val
            notes["HW"] = f"fallback=naive ({type(err).__name__}: {err})"

        try:
            ar = clinical.fit_ar(hist, cfg.ar_lags)
            recent = values[k - cfg.ar_lags : k][::-1]
            month_preds[cfg.ar_method] = clinical.predict_ar(ar, recent)
        except FIT_ERRORS as err:
            month_preds[cfg.ar_method] = naive_val
            notes[cfg.ar_method] = f"fallback=naive ({type(err).__name__}: {err})"

        try:
            orders = cfg.arima_orders
            if orders == "auto":
                orders = clinical.select_arima_orders(hist)
            arima = clinical.fit_arima(hist, *orders)
            month_preds["ARIMA"] = clinical.predict_arima(arima, hist)
        except FIT_ERRORS as err:
            month_preds["ARIMA"] = naive_val
            notes["ARIMA"] = f"fallback=naive ({type(err).__name__}: {err})"

        web_preds, member_preds, web_notes = _predict_web_models(
            panel_hist, hist, target_row, cfg, derive_month_seed(cfg.seed, month)
        )
        month_preds.update(web_preds)
        notes.update(web_notes)

        if member_preds is not None:
            if wm_state is None:
                wm_state = web.wm_init(member_preds.size, cfg.wm_eta, cfg.wm_epsilon)
            wm_val = web.wm_predict(wm_state, member_preds)
            month_preds["WM"] = wm_val
            wm_state = web.wm_update(wm_state, member_preds, wm_val, actual)
        else:
            month_preds["WM"] = month_preds["B"]
            notes["WM"] = notes.get("B", "fallback=naive (no bagged members)")

        for method in (NAIVE,) + cfg.clinical_methods() + WEB_METHODS:
            entries.append(
                LogEntry(
                    vaccine=vaccine,
                    method=method,
                    month=month,
                    predicted=float(month_preds[method]),
                    actual=actual,
                    train_start=train_start,
                    train_end=train_end,
                    diagnostic=notes.get(method, ""),
                )
            )
    if wm_state_sink is not None and wm_state is not None:
        wm_state_sink.append(wm_state)
    return PredictionLog(tuple(entries))


def run_level1_backtest(
    level0_log: PredictionLog, E: UptakeSeries, cfg: BacktestConfig, vaccine: str | None = None
) -> PredictionLog:
    """Stack each (clinical, web) stream pair with each level-1 model.

    Training uses the level-0 one-step predictions themselves over a growing
    window (or a fixed sliding window when configured); everything refits at
    every month.
    """
    if vaccine is None:
        vaccines = level0_log.vaccines()
        if len(vaccines) != 1:
            raise ValueError("pass vaccine= when the log covers several vaccines")
        vaccine = vaccines[0]
    clin_methods = cfg.clinical_methods()
    stream_methods = clin_methods + WEB_METHODS

    months = level0_log.months(NAIVE, vaccine)
    preds_by_method = {
        m: {
            e.month: e.predicted
            for e in level0_log.entries
            if e.method == m and e.vaccine == vaccine
        }
        for m in stream_methods
    }
    months = tuple(t for t in months if all(t in preds_by_method[m] for m in stream_methods))
    warm = cfg.level1_warmup_months
    if len(months) < warm + 1:
        raise InsufficientHistory(
            f"level-0 log covers {len(months)} months, need {warm + 1}"
        )

    series = E.series
    entries: list[LogEntry] = []
    for idx in range(warm, len(months)):
        t = months[idx]
        lo = 0 if cfg.level1_sliding is None else max(0, idx - cfg.level1_sliding)
        train_months = months[lo:idx]
        actual = series.value_at(t)
        naive_val = series.value_at(t.plus(-1))
        for clin in clin_methods:
            for wm in WEB_METHODS:
                samples = [
                    stacking.StackSample(
                        e_c=preds_by_method[clin][m],
                        e_w=preds_by_method[wm][m],
                        target=series.value_at(m),
                        month=m,
                    )
                    for m in train_months
                ]
                e_c_t = preds_by_method[clin][t]
                e_w_t = preds_by_method[wm][t]
                for meta in META_MODELS:
                    method = f"{meta}:{clin}+{wm}"
                    note = ""
                    try:
                        if meta == "OLS":
                            model = stacking.fit_stack_ols(samples)
                            value = stacking.predict_stack_ols(model, e_c_t, e_w_t)
                        else:
                            kernel = "linear" if meta == "SVR-linear" else "gaussian"
                            model = stacking.fit_svr(
                                samples,
                                kernel=kernel,
                                C=cfg.svr_cost,
                                eps=cfg.svr_tube_eps,
                                gamma=cfg.svr_gamma,
                            )
                            value = stacking.predict_svr(model, e_c_t, e_w_t)
                    except FIT_ERRORS as err:
                        value = naive_val
                        note = f"fallback=naive ({type(err).__name__}: {err})"
                    entries.append(
                        LogEntry(
                            vaccine=vaccine,
                            method=method,
                            month=t,
                            predicted=float(value),
                            actual=float(actual),
                            train_start=train_months[0],
                            train_end=train_months[-1],
                            diagnostic=note,
                        )
                    )
    return PredictionLog(tuple(entries))


def _canonical_method_order(methods: Sequence[str], cfg: BacktestConfig | None) -> list[str]:
    if cfg is not None:
        order = [m for m in cfg.method_order() if m in methods]
        return order + [m for m in methods if m not in order]
    # Without a config, group the ensemble columns into meta-model blocks
    # (single-source first), preserving first-appearance order within blocks.
    block = {name: i for i, name in enumerate(META_MODELS, start=1)}
    indexed = list(enumerate(methods))
    indexed.sort(key=lambda im: (block.get(im[1].split(":", 1)[0], 0), im[0]))
    return [m for _, m in indexed]


def summarize(
    log: PredictionLog,
    actual: UptakeSeries,
    seed: int | None = None,
    cfg: BacktestConfig | None = None,
    vaccine: str | None = None,
) -> BacktestReport:
    """RMSE per method over the months every method predicted.

    Restricting to the common month set keeps level-0 and level-1 columns
    comparable (the level-1 warm-up shortens the window for everyone).
    """
    if len(log) == 0:
        raise EmptyLog("prediction log is empty")
    if vaccine is None:
        vaccines = log.vaccines()
        if len(vaccines) != 1:
            raise ValueError("pass vaccine= when the log covers several vaccines")
        vaccine = vaccines[0]
    methods = _canonical_method_order(log.methods(), cfg)
    series = actual.series

    month_sets = [set(log.months(m, vaccine)) for m in methods]
    common = set.intersection(*month_sets) & {m for m in series.months()}
    if not common:
        raise EmptyLog("no months shared by every method and the actual series")
    window = sorted(common, key=lambda s: s.to_index())

    by_method_month = {
        (e.method, e.month): e for e in log.entries if e.vaccine == vaccine
    }
    rmse_by_method: dict[str, float] = {}
    for m in methods:
        pred = np.array([by_method_month[(m, t)].predicted for t in window])
        act = np.array([series.value_at(t) for t in window])
        rmse_by_method[m] = float(np.sqrt(np.mean((pred - act) ** 2)))

    naive_rmse = rmse_by_method.get(NAIVE)
    beats = {
        m: (naive_rmse is not None and m != NAIVE and v < naive_rmse)
        for m, v in rmse_by_method.items()
    }
    best = min(rmse_by_method.values())
    row_min = {m: v == best for m, v in rmse_by_method.items()}
    diagnostics = tuple(
        f"{e.method} {e.month}: {e.diagnostic}"
        for e in log.entries
        if e.vaccine == vaccine and e.diagnostic
    )
    return BacktestReport(
        vaccine=vaccine,
        window_start=window[0],
        window_end=window[-1],
        n_months=len(window),
        rmse=rmse_by_method,
        beats_naive=beats,
        is_row_min=row_min,
        seed=seed,
        diagnostics=diagnostics,
    )


def run_full_experiment(
    datasets: Mapping[str, tuple[UptakeSeries, web.QueryPanel]],
    cfg: BacktestConfig,
    collect_logs: dict[str, PredictionLog] | None = None,
) -> list[BacktestReport]:
    """Level-0 + level-1 backtests and a summary for every vaccine.

    Vaccines run independently; a failure in one becomes an error annotation
    on its report and never aborts the siblings.
    """
    if not datasets:
        raise ValueError("no vaccine datasets supplied")
    reports: list[BacktestReport] = []
    for name, (E, Q) in datasets.items():
        try:
            log0 = run_level0_backtest(E, Q, cfg, vaccine=name)
            log1 = run_level1_backtest(log0, E, cfg, vaccine=name)
            merged = log0.merge(log1)
            if collect_logs is not None:
                collect_logs[name] = merged
            reports.append(summarize(merged, E, seed=cfg.seed, cfg=cfg, vaccine=name))
        except FIT_ERRORS as err:
            reports.append(
                BacktestReport(
                    vaccine=name,
                    window_start=None,
                    window_end=None,
                    n_months=0,
                    rmse={},
                    beats_naive={},
                    is_row_min={},
                    seed=cfg.seed,
                    error=f"{type(err).__name__}: {err}",
                )
            )
    return reports


def naive_report_check(E: UptakeSeries, report: BacktestReport) -> float:
    """Independent naive-column RMSE: shift the actual series by one month."""
    series = E.series
    shifted = TimeSeries(series.start.plus(1), series.values[:-1])
    lo, hi = report.window_start, report.window_end
    return rmse(shifted.slice(lo, hi), series.slice(lo, hi))
