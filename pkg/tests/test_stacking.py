import numpy as np
import pytest

from uptakecast.errors import DiagnosticWarning, TooFewSamples
from uptakecast.stacking import (
    StackSample,
    SvrStackModel,
    fit_stack_ols,
    fit_svr,
    predict_stack_ols,
    predict_svr,
    solve_svr_dual,
)
from uptakecast.timeseries import MonthStamp

from oracles import (
    ols_normal_equations,
    svr_bruteforce_dual,
    svr_dual_objective,
    svr_kkt_violation,
)

M0 = MonthStamp(2013, 1)


def samples_from(e_c, e_w, targets):
    return [
        StackSample(float(c), float(w), float(t), M0.plus(i))
        for i, (c, w, t) in enumerate(zip(e_c, e_w, targets))
    ]


def svr_predictions(model, e_c, e_w):
    return np.array([predict_svr(model, c, w) for c, w in zip(e_c, e_w)])


class TestStackOls:
    def test_exact_regressor_passthrough(self):
        rng = np.random.default_rng(0)
        e_c = rng.uniform(0, 100, 10)
        e_w = rng.uniform(0, 100, 10)
        model = fit_stack_ols(samples_from(e_c, e_w, e_c))
        assert model.mu == pytest.approx(0.0, abs=1e-8)
        assert model.beta1 == pytest.approx(1.0, abs=1e-10)
        assert model.beta2 == pytest.approx(0.0, abs=1e-10)

    def test_noiseless_affine_recovery(self):
        rng = np.random.default_rng(1)
        e_c = rng.uniform(0, 100, 10)
        e_w = rng.uniform(0, 100, 10)
        targets = 2 + 0.5 * e_c + 0.3 * e_w
        model = fit_stack_ols(samples_from(e_c, e_w, targets))
        oracle = ols_normal_equations(
            np.column_stack([np.ones(10), e_c, e_w]), targets
        )
        assert (model.mu, model.beta1, model.beta2) == pytest.approx(tuple(oracle), abs=1e-8)
        assert model.mu == pytest.approx(2.0, abs=1e-8)
        preds = [predict_stack_ols(model, c, w) for c, w in zip(e_c, e_w)]
        np.testing.assert_allclose(preds, targets, atol=1e-8)

    def test_collinear_streams_ridge_fallback(self):
        rng = np.random.default_rng(2)
        e_c = rng.uniform(0, 100, 8)
        with pytest.warns(DiagnosticWarning):
            model = fit_stack_ols(samples_from(e_c, e_c, e_c * 1.5))
        assert np.isfinite(predict_stack_ols(model, 50.0, 50.0))

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            fit_stack_ols(samples_from([1, 2], [3, 4], [5, 6]))

    def test_predict_arithmetic(self):
        from uptakecast.stacking import OlsStackModel

        assert predict_stack_ols(OlsStackModel(0.0, 1.0, 0.0), 13.1, 99.0) == 13.1
        assert predict_stack_ols(OlsStackModel(2.0, 0.5, 0.3), 10.0, 10.0) == pytest.approx(10.0)

    def test_superset_dominance_over_single_streams(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            n = int(rng.integers(4, 20))
            e_c = rng.uniform(0, 100, n)
            e_w = rng.uniform(0, 100, n)
            y = rng.uniform(0, 100, n)
            model = fit_stack_ols(samples_from(e_c, e_w, y))
            sse = np.sum((y - np.array([predict_stack_ols(model, c, w)
                                        for c, w in zip(e_c, e_w)])) ** 2)
            for stream in (e_c, e_w):
                X1 = np.column_stack([np.ones(n), stream])
                coef = np.linalg.lstsq(X1, y, rcond=None)[0]
                sse1 = np.sum((y - X1 @ coef) ** 2)
                assert sse <= sse1 + 1e-8


class TestSvrSolver:
    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(4)
        for trial in range(20):
            n = int(rng.integers(2, 6))
            Z = rng.normal(0, 1, (n, 2))
            y = rng.normal(0, 2, n)
            C = float(rng.choice([0.5, 1.0, 2.0]))
            eps = float(rng.choice([0.0, 0.1, 0.5]))
            if trial % 2:
                sq = ((Z[:, None, :] - Z[None, :, :]) ** 2).sum(axis=2)
                K = np.exp(-0.25 * sq)
            else:
                K = Z @ Z.T
            beta, bias = solve_svr_dual(K, y, C, eps)
            oracle = svr_bruteforce_dual(K, y, C, eps)
            assert oracle is not None
            ours = svr_dual_objective(K, y, beta, eps)
            assert ours == pytest.approx(oracle[0], abs=1e-5)
            assert svr_kkt_violation(K, y, beta, eps, C) <= 1e-4
            assert abs(beta.sum()) <= 1e-8
            assert np.all(np.abs(beta) <= C + 1e-12)

    def test_kkt_sample_classification(self):
        rng = np.random.default_rng(5)
        e_c = rng.uniform(0, 10, 12)
        e_w = rng.uniform(0, 10, 12)
        y = 3 + 0.5 * e_c + 0.4 * e_w + rng.normal(0, 0.5, 12)
        C, eps = 1.0, 0.3
        model = fit_svr(samples_from(e_c, e_w, y), kernel="gaussian", C=C, eps=eps, gamma=0.25)
        preds = svr_predictions(model, e_c, e_w)
        resid = np.abs(y - preds)
        beta = model.dual_coefficients
        for r, b in zip(resid, beta):
            if r < eps - 1e-3:
                assert abs(b) <= 1e-3 * C  # strictly inside the tube
            if 1e-3 * C < abs(b) < C * (1 - 1e-6):
                assert r == pytest.approx(eps, abs=2e-3)  # free vectors sit on the tube
        assert abs(beta.sum()) <= 1e-8


class TestFitSvr:
    def test_constant_targets_inside_tube(self):
        rng = np.random.default_rng(6)
        e_c = rng.uniform(0, 10, 6)
        e_w = rng.uniform(0, 10, 6)
        model = fit_svr(samples_from(e_c, e_w, [5.0] * 6), kernel="gaussian", eps=0.1)
        assert np.all(model.dual_coefficients == 0)
        assert model.bias == pytest.approx(5.0, abs=1e-9)
        assert predict_svr(model, 3.3, 7.7) == pytest.approx(5.0, abs=1e-9)

    def test_wide_tube_flat_zero_loss(self):
        rng = np.random.default_rng(7)
        e_c = rng.uniform(0, 10, 8)
        e_w = rng.uniform(0, 10, 8)
        y = rng.uniform(49, 51, 8)
        eps = 5.0  # wider than the target spread
        model = fit_svr(samples_from(e_c, e_w, y), kernel="linear", C=1.0, eps=eps)
        assert np.all(model.dual_coefficients == 0)
        preds = svr_predictions(model, e_c, e_w)
        assert np.ptp(preds) == pytest.approx(0.0, abs=1e-9)  # flat function
        assert np.all(np.abs(preds - y) <= eps + 1e-9)  # zero loss

    def test_linear_kernel_prediction_is_affine(self):
        rng = np.random.default_rng(8)
        e_c = rng.uniform(0, 100, 15)
        e_w = rng.uniform(0, 100, 15)
        y = 10 + 0.3 * e_c + 0.6 * e_w + rng.normal(0, 3, 15)
        model = fit_svr(samples_from(e_c, e_w, y), kernel="linear", C=2.0, eps=0.2)
        x1, x2 = np.array([10.0, 80.0]), np.array([60.0, 20.0])
        for a in (0.0, 0.25, 0.5, 0.9, 1.0):
            mix = a * x1 + (1 - a) * x2
            expected = a * predict_svr(model, *x1) + (1 - a) * predict_svr(model, *x2)
            assert predict_svr(model, *mix) == pytest.approx(expected, abs=1e-8)

    def test_gaussian_translation_covariance(self):
        rng = np.random.default_rng(9)
        e_c = rng.uniform(0, 10, 10)
        e_w = rng.uniform(0, 10, 10)
        y = 5 + 0.5 * e_c - 0.2 * e_w + rng.normal(0, 0.4, 10)
        shift = 37.0
        base = fit_svr(samples_from(e_c, e_w, y), kernel="gaussian", gamma=0.5)
        shifted = fit_svr(samples_from(e_c, e_w, y + shift), kernel="gaussian", gamma=0.5)
        probe = [(2.0, 3.0), (8.5, 1.5), (5.0, 5.0)]
        for c, w in probe:
            assert predict_svr(shifted, c, w) == pytest.approx(
                predict_svr(base, c, w) + shift, abs=5e-3
            )

    def test_validation(self):
        with pytest.raises(TooFewSamples):
            fit_svr(samples_from([1.0], [2.0], [3.0]))
        good = samples_from([1, 2, 3], [4, 5, 6], [7, 8, 9])
        with pytest.raises(ValueError):
            fit_svr(good, C=0.0)
        with pytest.raises(ValueError):
            fit_svr(good, kernel="gaussian", gamma=0.0)


class TestPredictSvr:
    def _manual_model(self, **kw):
        defaults = dict(
            kernel="gaussian",
            gamma=0.5,
            cost=1.0,
            tube_eps=0.1,
            dual_coefficients=np.array([1.0]),
            bias=0.0,
            support_inputs=np.array([[0.0, 0.0]]),
            feature_means=np.zeros(2),
            feature_scales=np.ones(2),
        )
        defaults.update(kw)
        return SvrStackModel(**defaults)

    def test_zero_duals_constant_bias(self):
        model = self._manual_model(dual_coefficients=np.array([0.0]), bias=7.0)
        for c, w in [(0, 0), (100, -3), (12.5, 88.8)]:
            assert predict_svr(model, c, w) == 7.0

    def test_kernel_at_zero_distance(self):
        model = self._manual_model()
        assert predict_svr(model, 0.0, 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_gaussian_kernel_value(self):
        # K((0,0), (1,1)) with gamma=0.5 is exp(-1)
        model = self._manual_model(support_inputs=np.array([[1.0, 1.0]]))
        assert predict_svr(model, 0.0, 0.0) == pytest.approx(np.exp(-1.0), abs=1e-12)
        assert predict_svr(model, 0.0, 0.0) == pytest.approx(0.3679, abs=1e-4)
