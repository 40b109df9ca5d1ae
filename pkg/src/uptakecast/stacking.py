"""Level-1 meta-models: OLS and epsilon-insensitive SVR over two prediction streams.

The SVR is solved in the dual with an unpenalized bias (the classical
formulation, C = 1/lambda): a maximal-violating-pair working-set loop with an
exact piecewise-quadratic line search on each pair. Features are standardized
inside the fit and the standardization travels with the model.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DiagnosticWarning, NonConvergence, TooFewSamples
from .timeseries import MonthStamp

SVR_KKT_TOL = 1e-4
_SVR_MAX_STEPS = 200_000
_BOUND_ATOL = 1e-12


@dataclass(frozen=True)
class StackSample:
    """One training triple: clinical prediction, web prediction, observed uptake."""

    e_c: float
    e_w: float
    target: float
    month: MonthStamp

    def __post_init__(self):
        if not all(np.isfinite([self.e_c, self.e_w, self.target])):
            raise ValueError("stack sample values must be finite")


@dataclass(frozen=True)
class OlsStackModel:
    mu: float
    beta1: float
    beta2: float


@dataclass(frozen=True)
class SvrStackModel:
    """Dual SVR solution over standardized (e_c, e_w) pairs."""

    kernel: str  # "linear" or "gaussian"
    gamma: float | None
    cost: float
    tube_eps: float
    dual_coefficients: np.ndarray = field(repr=False)  # one per training sample
    bias: float
    support_inputs: np.ndarray = field(repr=False)  # standardized training rows
    feature_means: np.ndarray = field(repr=False)
    feature_scales: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("dual_coefficients", "support_inputs", "feature_means", "feature_scales"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _design(samples: Sequence[StackSample]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([[s.e_c, s.e_w] for s in samples], dtype=float)
    y = np.array([s.target for s in samples], dtype=float)
    return X, y


def fit_stack_ols(samples: Sequence[StackSample]) -> OlsStackModel:
    """Closed-form least squares for target = mu + beta1*e_c + beta2*e_w.

    Collinear prediction streams (a degenerate but real occurrence) fall back
    to a ridge-jittered solve with a diagnostic instead of failing.
    """
    if len(samples) < 3:
        raise TooFewSamples(f"need at least 3 stack samples, got {len(samples)}")
    X, y = _design(samples)
    A = np.column_stack([np.ones(len(y)), X])
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < 3:
        warnings.warn(
            "collinear stack design; applying ridge jitter 1e-8",
            DiagnosticWarning,
            stacklevel=2,
        )
        G = A.T @ A + 1e-8 * np.eye(3)
        coef = np.linalg.solve(G, A.T @ y)
    return OlsStackModel(mu=float(coef[0]), beta1=float(coef[1]), beta2=float(coef[2]))


def predict_stack_ols(model: OlsStackModel, e_c: float, e_w: float) -> float:
    return float(model.mu + model.beta1 * e_c + model.beta2 * e_w)


def _kernel_matrix(Z: np.ndarray, kernel: str, gamma: float | None) -> np.ndarray:
    if kernel == "linear":
        return Z @ Z.T
    if kernel == "gaussian":
        sq = ((Z[:, None, :] - Z[None, :, :]) ** 2).sum(axis=2)
        return np.exp(-gamma * sq)
    raise ValueError(f"unknown kernel {kernel!r}")


def _kernel_vector(Z: np.ndarray, z: np.ndarray, kernel: str, gamma: float | None) -> np.ndarray:
    if kernel == "linear":
        return Z @ z
    if kernel == "gaussian":
        return np.exp(-gamma * ((Z - z) ** 2).sum(axis=1))
    raise ValueError(f"unknown kernel {kernel!r}")


def _bias_interval(beta: np.ndarray, G: np.ndarray, eps: float, C: float):
    """Per-sample admissible interval for the bias implied by the KKT conditions."""
    n = beta.size
    lo = np.empty(n)
    hi = np.empty(n)
    at_up = beta >= C - _BOUND_ATOL
    at_lo = beta <= -C + _BOUND_ATOL
    zero = np.abs(beta) <= _BOUND_ATOL
    pos = beta > _BOUND_ATOL
    neg = beta < -_BOUND_ATOL
    lo[zero], hi[zero] = G[zero] - eps, G[zero] + eps
    lo[pos], hi[pos] = G[pos] - eps, G[pos] - eps
    lo[neg], hi[neg] = G[neg] + eps, G[neg] + eps
    lo[at_up] = -np.inf
    hi[at_lo] = np.inf
    return lo, hi


def _pair_step(beta_i, beta_j, Fi, Fj, eta, eps, C) -> float:
    """Exact minimizer of the pairwise subproblem along (e_i - e_j).

    phi(d) = 0.5*eta*d^2 + (Fi - Fj)*d + eps*(|beta_i + d| + |beta_j - d|),
    a convex piecewise quadratic over the box-feasible interval; its minimum
    is at an endpoint, a kink, or a per-piece stationary point.
    """
    d_min = max(-C - beta_i, beta_j - C)
    d_max = min(C - beta_i, beta_j + C)
    cands = [d_min, d_max]
    for kink in (-beta_i, beta_j):
        if d_min < kink < d_max:
            cands.append(kink)
    if eta > 0:
        for ui in (-1.0, 1.0):
            for uj in (-1.0, 1.0):
                d = -((Fi - Fj) + eps * (ui - uj)) / eta
                if d_min < d < d_max:
                    cands.append(d)

    def phi(d: float) -> float:
        return 0.5 * eta * d * d + (Fi - Fj) * d + eps * (abs(beta_i + d) + abs(beta_j - d))

    return min(cands, key=phi)


def solve_svr_dual(
    K: np.ndarray,
    y: np.ndarray,
    C: float,
    eps: float,
    tol: float = SVR_KKT_TOL,
    max_steps: int = _SVR_MAX_STEPS,
) -> tuple[np.ndarray, float]:
    """Solve min 0.5*b'Kb - y'b + eps*|b|_1 s.t. sum(b) = 0, |b_i| <= C.

    Returns the dual coefficients and the bias. Terminates when the largest
    KKT violation (the gap between the per-sample bias bounds) is within
    ``tol``.
    """
    n = y.size
    beta = np.zeros(n)
    Kb = np.zeros(n)
    for _ in range(max_steps):
        G = y - Kb
        lo, hi = _bias_interval(beta, G, eps, C)
        i = int(np.argmax(lo))
        j = int(np.argmin(hi))
        if lo[i] - hi[j] <= tol:
            b_lo, b_hi = lo[i], hi[j]
            if not np.isfinite(b_lo):
                b_lo = b_hi if np.isfinite(b_hi) else 0.0
            if not np.isfinite(b_hi):
                b_hi = b_lo
            return beta, float((b_lo + b_hi) / 2.0)
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        Fi, Fj = Kb[i] - y[i], Kb[j] - y[j]
        d = _pair_step(beta[i], beta[j], Fi, Fj, max(eta, 0.0), eps, C)
        if d == 0.0:
            raise NonConvergence("SVR pairwise step stalled above KKT tolerance")
        beta[i] += d
        beta[j] -= d
        Kb += d * (K[:, i] - K[:, j])
    raise NonConvergence(f"SVR solver exceeded {max_steps} pairwise steps")


def fit_svr(
    samples: Sequence[StackSample],
    kernel: str = "gaussian",
    C: float = 1.0,
    eps: float = 0.1,
    gamma: float = 0.25,
) -> SvrStackModel:
    """Fit epsilon-insensitive SVR on standardized (e_c, e_w) features.

    Defaults follow conventional library settings: C = 1, tube eps = 0.1,
    gamma = 1 / (2 * n_features) for the Gaussian kernel.
    """
    if len(samples) < 2:
        raise TooFewSamples(f"need at least 2 stack samples, got {len(samples)}")
    if C <= 0 or eps < 0:
        raise ValueError("C must be positive and eps non-negative")
    if kernel == "gaussian" and not gamma > 0:
        raise ValueError("gamma must be positive for the gaussian kernel")
    X, y = _design(samples)
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    scales = np.where(scales > 0, scales, 1.0)
    Z = (X - means) / scales
    K = _kernel_matrix(Z, kernel, gamma)
    beta, bias = solve_svr_dual(K, y, C, eps)
    return SvrStackModel(
        kernel=kernel,
        gamma=gamma if kernel == "gaussian" else None,
        cost=C,
        tube_eps=eps,
        dual_coefficients=beta,
        bias=bias,
        support_inputs=Z,
        feature_means=means,
        feature_scales=scales,
    )


def predict_svr(model: SvrStackModel, e_c: float, e_w: float) -> float:
    """Kernel expansion over the training inputs plus the bias."""
    z = (np.array([e_c, e_w]) - model.feature_means) / model.feature_scales
    k = _kernel_vector(model.support_inputs, z, model.kernel, model.gamma)
    return float(model.dual_coefficients @ k + model.bias)
