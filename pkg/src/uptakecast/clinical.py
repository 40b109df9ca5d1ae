"""Level-0 forecasters for the clinical uptake series: AR, ARIMA, Holt-Winters.

All fits are pure functions of their inputs and return immutable model values;
each model exposes a one-step-ahead prediction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import Bounds, minimize

from .errors import DiagnosticWarning, LagMismatch, NonConvergence, SeriesTooShort, SingularDesign
from .timeseries import TimeSeries, difference

_RIDGE_JITTER = 1e-8
# The iteration budget is the binding limit; fatol carries the objective
# tolerance, xatol stays permissive so a converged objective terminates.
_NM_OPTIONS = {"maxiter": 2000, "maxfev": 10000, "fatol": 1e-8, "xatol": 1e-5}


@dataclass(frozen=True)
class ARModel:
    """Autoregression: prediction = mu + sum(betas[i] * lag_{i+1}), lags most-recent-first."""

    mu: float
    betas: tuple[float, ...]

    @property
    def order(self) -> int:
        return len(self.betas)


@dataclass(frozen=True)
class ArimaModel:
    """AR + moving-average terms on the d-times differenced scale (CSS estimate)."""

    d: int
    mu: float
    ar_betas: tuple[float, ...]
    ma_phis: tuple[float, ...]
    residual_history: tuple[float, ...]  # last q in-sample residuals, most recent first


@dataclass(frozen=True)
class HwModel:
    """Additive Holt-Winters state after filtering the training series."""

    alpha: float
    beta: float
    gamma: float
    season_length: int
    level: float
    trend: float
    seasonals: tuple[float, ...]  # indexed by season position (month offset mod l)
    next_position: int  # season position of the first unobserved month


def _lag_design(values: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows [1, y_{t-1}, ..., y_{t-m}] and targets y_t for every t with m lags."""
    n = values.size
    X = np.ones((n - m, m + 1))
    for i in range(1, m + 1):
        X[:, i] = values[m - i : n - i]
    return X, values[m:]


def fit_ar(E: TimeSeries, m: int, ridge_fallback: bool = True) -> ARModel:
    """Least-squares autoregression of order ``m``.

    Requires length >= 2m + 1 so the design has at least m + 1 rows. A
    rank-deficient design (e.g. a constant warm-up window) falls back to a
    ridge-jittered solve with a diagnostic warning unless ``ridge_fallback``
    is disabled, in which case SingularDesign is raised.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if len(E) < 2 * m + 1:
        raise SeriesTooShort(f"AR({m}) needs at least {2 * m + 1} observations, got {len(E)}")
    X, y = _lag_design(E.values, m)
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < m + 1:
        if not ridge_fallback:
            raise SingularDesign(f"AR({m}) design has rank {rank} < {m + 1}")
        warnings.warn(
            f"AR({m}) design rank-deficient; applying ridge jitter {_RIDGE_JITTER:g}",
            DiagnosticWarning,
            stacklevel=2,
        )
        G = X.T @ X + _RIDGE_JITTER * np.eye(m + 1)
        coef = np.linalg.solve(G, X.T @ y)
    return ARModel(mu=float(coef[0]), betas=tuple(float(c) for c in coef[1:]))


def predict_ar(model: ARModel, recent: Sequence[float]) -> float:
    """One-step prediction from the ``m`` most recent values (most recent first)."""
    if len(recent) != model.order:
        raise LagMismatch(f"expected {model.order} lag values, got {len(recent)}")
    return float(model.mu + np.dot(model.betas, recent))


def _css_residuals(y: np.ndarray, mu: float, betas: np.ndarray, phis: np.ndarray) -> np.ndarray:
    """One-step residuals of the ARMA recursion with zero pre-sample residuals."""
    p, q = betas.size, phis.size
    n = y.size
    base = y[p:] - mu
    for i in range(1, p + 1):
        base = base - betas[i - 1] * y[p - i : n - i]
    if q == 0:
        return base
    eps = np.empty(n - p)
    hist = [0.0] * q  # eps_{t-1}, ..., eps_{t-q}
    ph = [float(v) for v in phis]
    for t, b in enumerate(base):
        e = float(b)
        for j in range(q):
            e -= ph[j] * hist[j]
        eps[t] = e
        hist.insert(0, e)
        hist.pop()
    return eps


def _ols_init(y: np.ndarray, p: int) -> np.ndarray:
    """Normal-equations AR(p) start point for the CSS optimizer."""
    X, t = _lag_design(y, p)
    G = X.T @ X
    try:
        coef = np.linalg.solve(G, X.T @ t)
    except np.linalg.LinAlgError:
        coef = np.zeros(p + 1)
        coef[0] = float(y.mean())
    if not np.all(np.isfinite(coef)):
        coef = np.zeros(p + 1)
        coef[0] = float(y.mean())
    return coef


def fit_arima(E: TimeSeries, p: int = 1, d: int = 1, q: int = 1) -> ArimaModel:
    """Conditional-sum-of-squares ARIMA(p, d, q) fit.

    Differencing is applied ``d`` times, then (mu, betas, phis) minimize the
    sum of squared one-step residuals with pre-sample residuals fixed at zero.
    The optimizer starts from the AR-only least-squares solution with zero MA
    coefficients.
    """
    if min(p, d, q) < 0:
        raise ValueError("orders must be >= 0")
    if len(E) <= p + d + q + 1:
        raise SeriesTooShort(
            f"ARIMA({p},{d},{q}) needs more than {p + d + q + 1} observations, got {len(E)}"
        )
    y = difference(E, d).values
    x0 = np.concatenate([_ols_init(y, p), np.zeros(q)])

    def objective(x: np.ndarray) -> float:
        eps = _css_residuals(y, x[0], x[1 : 1 + p], x[1 + p :])
        return float(eps @ eps)

    if p + q > 0:
        # MA coefficients stay inside the invertibility box; outside it the
        # residual recursion explodes and the surface turns into a canyon the
        # simplex crawls forever.
        bounds = Bounds(
            np.concatenate([np.full(1 + p, -np.inf), np.full(q, -0.99)]),
            np.concatenate([np.full(1 + p, np.inf), np.full(q, 0.99)]),
        )
        res = minimize(objective, x0, method="Nelder-Mead", bounds=bounds, options=_NM_OPTIONS)
        if not res.success:
            res = minimize(
                objective, res.x, method="Nelder-Mead", bounds=bounds, options=_NM_OPTIONS
            )
            if not res.success:
                raise NonConvergence(f"CSS optimizer failed twice: {res.message}")
        x = res.x if res.fun <= objective(x0) else x0
    else:
        x = x0  # intercept-only model is closed form
    mu, betas, phis = float(x[0]), x[1 : 1 + p], x[1 + p :]
    eps = _css_residuals(y, mu, betas, phis)
    hist = tuple(float(e) for e in eps[::-1][:q])
    return ArimaModel(
        d=d,
        mu=mu,
        ar_betas=tuple(float(b) for b in betas),
        ma_phis=tuple(float(f) for f in phis),
        residual_history=hist,
    )


def predict_arima(model: ArimaModel, E: TimeSeries) -> float:
    """One-step prediction on the differenced scale, un-differenced back.

    ``E`` must supply at least p + d trailing values; the stored residual
    history is meaningful for the month immediately after the fitting window.
    """
    p, d = len(model.ar_betas), model.d
    if len(E) < p + d:
        raise SeriesTooShort(f"need at least {p + d} trailing observations, got {len(E)}")
    levels = [E.values]
    for _ in range(d):
        levels.append(np.diff(levels[-1]))
    y = levels[-1]
    pred = model.mu
    for i, b in enumerate(model.ar_betas, start=1):
        pred += b * float(y[-i])
    for j, f in enumerate(model.ma_phis):
        pred += f * model.residual_history[j]
    for k in range(d - 1, -1, -1):
        pred += float(levels[k][-1])
    return float(pred)


def select_arima_orders(
    E: TimeSeries,
    p_grid: Sequence[int] = (0, 1, 2),
    d_grid: Sequence[int] = (0, 1),
    q_grid: Sequence[int] = (0, 1, 2),
) -> tuple[int, int, int]:
    """Pick (p, d, q) by AIC over the configured grid; ties break lexicographically."""
    best = None
    for d in sorted(d_grid):
        for p in sorted(p_grid):
            for q in sorted(q_grid):
                if len(E) <= p + d + q + 1:
                    continue
                try:
                    model = fit_arima(E, p, d, q)
                except (NonConvergence, SeriesTooShort):
                    continue
                y = difference(E, d).values
                eps = _css_residuals(
                    y, model.mu, np.asarray(model.ar_betas), np.asarray(model.ma_phis)
                )
                n = eps.size
                if n < 1 or not np.all(np.isfinite(eps)):
                    continue
                sse = float(eps @ eps)
                aic = n * np.log(max(sse / n, 1e-300)) + 2 * (p + q + 1)
                if best is None or aic < best[0] - 1e-12:
                    best = (aic, (p, d, q))
    if best is None:
        raise SeriesTooShort("no ARIMA order in the grid is fittable on this series")
    return best[1]


def hw_initial_state(E: TimeSeries, season_length: int) -> tuple[float, float, np.ndarray]:
    """Level, trend and per-position seasonals from the first two seasons."""
    l = season_length
    if len(E) < 2 * l:
        raise SeriesTooShort(f"need at least two seasons ({2 * l} months), got {len(E)}")
    s1 = E.values[:l]
    s2 = E.values[l : 2 * l]
    level = float(s1.mean())
    trend = float((s2.mean() - s1.mean()) / l)
    seasonals = ((s1 - s1.mean()) + (s2 - s2.mean())) / 2.0
    return level, trend, seasonals


def hw_filter(
    values: Sequence[float],
    alpha: float,
    beta: float,
    gamma: float,
    season_length: int,
    level: float,
    trend: float,
    seasonals: Sequence[float],
) -> tuple[np.ndarray, float, float, list[float]]:
    """Run the additive level/trend/seasonality recursions over ``values``.

    Returns the one-step-ahead predictions for every month plus the final
    (level, trend, seasonals) state. The seasonal used for month t is the
    value stored for position t mod l, written one season earlier.
    """
    s = [float(v) for v in seasonals]
    l = season_length
    a, b = float(level), float(trend)
    n = len(values)
    preds = np.empty(n)
    for t in range(n):
        y = float(values[t])
        s_old = s[t % l]
        preds[t] = a + b + s_old
        a_new = alpha * (y - s_old) + (1.0 - alpha) * (a + b)
        b_new = beta * (a_new - a) + (1.0 - beta) * b
        s[t % l] = gamma * (y - a_new) + (1.0 - gamma) * s_old
        a, b = a_new, b_new
    return preds, a, b, s


_HW_START = (0.5, 0.1, 0.1)
_HW_FALLBACK_START = (0.3, 0.1, 0.1)


def fit_holt_winters(
    E: TimeSeries,
    season_length: int = 12,
    params: tuple[float, float, float] | None = None,
) -> HwModel:
    """Fit additive Holt-Winters by minimizing in-sample one-step squared error.

    Smoothing parameters are found by bounded Nelder-Mead over [0, 1]^3 unless
    ``params`` pins them. On optimizer failure a single retry is made from the
    documented fallback start point before raising NonConvergence.
    """
    level, trend, seasonals = hw_initial_state(E, season_length)
    values = E.values

    if params is None:
        # The first season's values are consumed by the initialization, so
        # they carry no information about the smoothing parameters; scoring
        # them would reward overfitting the init transient.
        skip = season_length

        def objective(x: np.ndarray) -> float:
            preds, _, _, _ = hw_filter(
                values, x[0], x[1], x[2], season_length, level, trend, seasonals
            )
            err = preds[skip:] - values[skip:]
            return float(err @ err)

        bounds = [(0.0, 1.0)] * 3
        res = minimize(
            objective, _HW_START, method="Nelder-Mead", bounds=bounds, options=_NM_OPTIONS
        )
        if not res.success:
            res = minimize(
                objective,
                _HW_FALLBACK_START,
                method="Nelder-Mead",
                bounds=bounds,
                options=_NM_OPTIONS,
            )
            if not res.success:
                raise NonConvergence(f"Holt-Winters optimizer failed twice: {res.message}")
        alpha, beta, gamma = (float(v) for v in res.x)
    else:
        alpha, beta, gamma = (float(v) for v in params)
        for name, v in zip("alpha beta gamma".split(), (alpha, beta, gamma)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")

    _, a, b, s = hw_filter(values, alpha, beta, gamma, season_length, level, trend, seasonals)
    return HwModel(
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        season_length=season_length,
        level=a,
        trend=b,
        seasonals=tuple(s),
        next_position=len(E) % season_length,
    )


def predict_hw(model: HwModel) -> float:
    """Level + trend + the seasonal stored for the upcoming month's position."""
    return float(model.level + model.trend + model.seasonals[model.next_position])
