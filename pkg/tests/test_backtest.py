import numpy as np
import pytest

from uptakecast.backtest import (
    NAIVE,
    BacktestConfig,
    LogEntry,
    PredictionLog,
    derive_month_seed,
    naive_report_check,
    run_full_experiment,
    run_level0_backtest,
    run_level1_backtest,
    summarize,
)
from uptakecast.errors import EmptyLog, InsufficientHistory
from uptakecast.timeseries import MonthStamp, TimeSeries, UptakeSeries
from uptakecast.web import QueryPanel

from conftest import JAN2011, synth_vaccine

CFG = BacktestConfig(bagging_subset_size=4, seed=5)


@pytest.fixture(scope="module")
def level0_run():
    E, Q = synth_vaccine(11, n_months=40, n_queries=12)
    log = run_level0_backtest(E, Q, CFG, vaccine="V")
    return E, Q, log


def fabricate_level0_log(cfg, months, vaccine="V"):
    """Hand-built level-0 log with deterministic per-method patterns."""
    entries = []
    for m_idx, month in enumerate(months):
        actual = 50.0 + m_idx
        for k, method in enumerate((NAIVE, "HW", cfg.ar_method, "ARIMA", "WM", "B", "L", "O")):
            entries.append(
                LogEntry(
                    vaccine=vaccine,
                    method=method,
                    month=month,
                    predicted=actual + 0.1 * k + 0.01 * m_idx,
                    actual=actual,
                    train_start=JAN2011,
                    train_end=month.plus(-1),
                )
            )
    return PredictionLog(tuple(entries))


class TestConfig:
    def test_warmup_guard(self):
        with pytest.raises(ValueError):
            BacktestConfig(level0_warmup_months=20, hw_season_length=12)

    def test_method_order_counts(self):
        cfg = BacktestConfig()
        order = cfg.method_order()
        assert len(order) == 1 + 7 + 36
        assert order[0] == NAIVE
        assert "SVR-gaussian:ARIMA+O" in order


class TestPredictionLog:
    def test_duplicate_rejected(self):
        e = LogEntry("V", NAIVE, JAN2011, 1.0, 1.0, JAN2011, JAN2011)
        with pytest.raises(ValueError):
            PredictionLog((e, e))

    def test_merge_and_lookup(self):
        e1 = LogEntry("V", NAIVE, JAN2011, 1.0, 1.0, JAN2011, JAN2011)
        e2 = LogEntry("V", "HW", JAN2011, 2.0, 1.0, JAN2011, JAN2011)
        log = PredictionLog((e1,)).merge(PredictionLog((e2,)))
        assert log.methods() == (NAIVE, "HW")
        assert log.prediction("HW", JAN2011, "V") == 2.0

    def test_nonconsecutive_months_rejected(self):
        e1 = LogEntry("V", NAIVE, JAN2011, 1.0, 1.0, JAN2011, JAN2011)
        e3 = LogEntry("V", NAIVE, JAN2011.plus(2), 1.0, 1.0, JAN2011, JAN2011)
        with pytest.raises(ValueError, match="consecutive"):
            PredictionLog((e1, e3))


class TestLevel0:
    def test_window_calendar(self, level0_run):
        _, _, log = level0_run
        months = log.months(NAIVE, "V")
        assert len(months) == 40 - CFG.level0_warmup_months
        assert months[0] == JAN2011.plus(CFG.level0_warmup_months)
        # consecutive months, one entry per model per month
        for a, b in zip(months, months[1:]):
            assert b == a.plus(1)
        for method in ("HW", "AR12", "ARIMA", "WM", "B", "L", "O"):
            assert log.months(method, "V") == months

    def test_insufficient_history(self):
        E, Q = synth_vaccine(3, n_months=24, n_queries=12)
        with pytest.raises(InsufficientHistory):
            run_level0_backtest(E, Q, CFG)

    def test_determinism(self, level0_run):
        E, Q, log = level0_run
        again = run_level0_backtest(E, Q, CFG, vaccine="V")
        assert log.entries == again.entries

    def test_monotone_data_growth(self, level0_run):
        E, Q, log = level0_run
        extended_vals = np.append(E.series.values, 77.0)
        extended_E = UptakeSeries(TimeSeries(E.series.start, extended_vals))
        extended_Q = QueryPanel(
            Q.start, Q.query_names, np.vstack([Q.matrix, Q.matrix[-1]])
        )
        longer = run_level0_backtest(extended_E, extended_Q, CFG, vaccine="V")
        for e in log.entries:
            assert longer.prediction(e.method, e.month, "V") == e.predicted

    def test_no_lookahead_probe(self, level0_run):
        E, Q, log = level0_run
        rng = np.random.default_rng(0)
        months = log.months(NAIVE, "V")
        for t in (months[2], months[10]):
            cut = E.series.index_of(t)
            vals = E.series.values.copy()
            vals[cut + 1 :] = rng.uniform(0, 300, vals.size - cut - 1)
            matrix = Q.matrix.copy()
            matrix[cut + 1 :] = rng.uniform(0, 100, matrix[cut + 1 :].shape)
            corrupted = run_level0_backtest(
                UptakeSeries(TimeSeries(E.series.start, vals)),
                QueryPanel(Q.start, Q.query_names, matrix),
                CFG,
                vaccine="V",
            )
            for method in log.methods():
                assert corrupted.prediction(method, t, "V") == log.prediction(method, t, "V")

    def test_seed_changes_bagging_stream(self, level0_run):
        E, Q, log = level0_run
        other = run_level0_backtest(E, Q, BacktestConfig(bagging_subset_size=4, seed=6),
                                    vaccine="V")
        months = log.months("B", "V")
        diffs = [
            abs(other.prediction("B", t, "V") - log.prediction("B", t, "V")) for t in months
        ]
        assert max(diffs) > 0

    def test_month_seed_independent_of_length(self):
        assert derive_month_seed(5, MonthStamp(2013, 4)) == derive_month_seed(
            5, MonthStamp(2013, 4)
        )
        assert derive_month_seed(5, MonthStamp(2013, 4)) != derive_month_seed(
            5, MonthStamp(2013, 5)
        )


class TestLevel1:
    def test_methods_and_window(self):
        cfg = BacktestConfig(seed=1)
        months = tuple(MonthStamp(2013, 1).plus(k) for k in range(20))
        log0 = fabricate_level0_log(cfg, months)
        E = UptakeSeries(
            TimeSeries(JAN2011, np.concatenate([np.full(24, 50.0), 50 + np.arange(20.0)]))
        )
        log1 = run_level1_backtest(log0, E, cfg, vaccine="V")
        assert len(log1.methods()) == 36
        for method in log1.methods():
            months1 = log1.months(method, "V")
            assert len(months1) == 20 - cfg.level1_warmup_months
            assert months1[0] == MonthStamp(2014, 1)

    def test_growing_vs_sliding_window(self):
        months = tuple(MonthStamp(2013, 1).plus(k) for k in range(20))
        E = UptakeSeries(
            TimeSeries(JAN2011, np.concatenate([np.full(24, 50.0), 50 + np.arange(20.0)]))
        )
        grow = run_level1_backtest(fabricate_level0_log(BacktestConfig(), months), E,
                                   BacktestConfig(), vaccine="V")
        slide = run_level1_backtest(fabricate_level0_log(BacktestConfig(), months), E,
                                    BacktestConfig(level1_sliding=12), vaccine="V")
        last = grow.months(grow.methods()[0], "V")[-1]
        g = next(e for e in grow.entries if e.month == last)
        s = next(e for e in slide.entries if e.month == last)
        assert g.train_start == months[0]
        assert s.train_start == months[7]  # 19 - 12

    def test_insufficient_history(self):
        cfg = BacktestConfig()
        months = (MonthStamp(2013, 1),)
        log0 = fabricate_level0_log(cfg, months)
        E = UptakeSeries(TimeSeries(JAN2011, np.full(30, 50.0)))
        with pytest.raises(InsufficientHistory):
            run_level1_backtest(log0, E, cfg, vaccine="V")


class TestSummarize:
    def test_perfect_predictions(self):
        months = tuple(MonthStamp(2013, 1).plus(k) for k in range(5))
        entries = []
        for m_idx, month in enumerate(months):
            for method in (NAIVE, "HW"):
                entries.append(
                    LogEntry("V", method, month, 50.0 + m_idx, 50.0 + m_idx,
                             JAN2011, month.plus(-1))
                )
        E = UptakeSeries(TimeSeries(MonthStamp(2013, 1), 50 + np.arange(5.0)))
        report = summarize(PredictionLog(tuple(entries)), E)
        assert all(v == 0 for v in report.rmse.values())
        assert all(report.is_row_min.values())

    def test_direct_arithmetic(self):
        months = (MonthStamp(2013, 1), MonthStamp(2013, 2))
        entries = [
            LogEntry("V", "only", months[0], 0.0, 4.0, JAN2011, months[0].plus(-1)),
            LogEntry("V", "only", months[1], 3.0, 3.0, JAN2011, months[1].plus(-1)),
        ]
        E = UptakeSeries(TimeSeries(months[0], np.array([4.0, 3.0])))
        report = summarize(PredictionLog(tuple(entries)), E)
        assert report.rmse["only"] == pytest.approx(np.sqrt(8), abs=1e-9)
        assert report.is_row_min["only"]

    def test_window_is_method_intersection(self, level0_run):
        E, _, log = level0_run
        # drop the first three months of one method; everyone is then scored
        # over the shortened common window
        trimmed = PredictionLog(
            tuple(
                e
                for e in log.entries
                if not (e.method == "HW" and e.month < log.months("HW", "V")[3])
            )
        )
        report = summarize(trimmed, E, cfg=CFG)
        assert report.n_months == len(log.months(NAIVE, "V")) - 3
        assert report.window_start == log.months("HW", "V")[3]

    def test_naive_column_matches_independent_shift(self, level0_run):
        E, _, log = level0_run
        report = summarize(log, E, cfg=CFG)
        assert report.rmse[NAIVE] == pytest.approx(naive_report_check(E, report), abs=1e-12)

    def test_empty_log(self):
        E = UptakeSeries(TimeSeries(JAN2011, np.ones(3)))
        with pytest.raises(EmptyLog):
            summarize(PredictionLog(()), E)

    def test_beats_naive_markers(self, level0_run):
        E, _, log = level0_run
        report = summarize(log, E, cfg=CFG)
        assert report.beats_naive[NAIVE] is False
        for method, value in report.rmse.items():
            if method != NAIVE:
                assert report.beats_naive[method] == (value < report.rmse[NAIVE])
        best = min(report.rmse.values())
        for method, value in report.rmse.items():
            assert report.is_row_min[method] == (value == best)


class TestFullExperiment:
    def test_ar_beats_naive_on_ar_process(self):
        rng = np.random.default_rng(21)
        vals = [60.0]
        for _ in range(56):
            vals.append(144 - 0.8 * vals[-1] + rng.normal(0, 0.01))
        E = UptakeSeries(TimeSeries(JAN2011, np.array(vals)))
        Q = QueryPanel(
            JAN2011,
            tuple(f"q{j}" for j in range(8)),
            rng.uniform(0, 100, (57, 8)),
        )
        cfg = BacktestConfig(bagging_subset_size=4, seed=1)
        reports = run_full_experiment({"AR1": (E, Q)}, cfg)
        assert len(reports) == 1
        report = reports[0]
        assert report.error is None
        assert report.rmse["AR12"] < report.rmse[NAIVE]

    def test_sibling_failure_isolated(self):
        good_E, good_Q = synth_vaccine(30, n_months=40, n_queries=12)
        short_E, short_Q = synth_vaccine(31, n_months=20, n_queries=12)
        reports = run_full_experiment(
            {"bad": (short_E, short_Q), "good": (good_E, good_Q)}, CFG
        )
        by_name = {r.vaccine: r for r in reports}
        assert by_name["bad"].error is not None
        assert by_name["good"].error is None
        assert by_name["good"].rmse

    def test_empty_datasets(self):
        with pytest.raises(ValueError):
            run_full_experiment({}, CFG)
