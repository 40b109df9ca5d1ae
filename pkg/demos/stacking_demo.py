#!/usr/bin/env python3
"""Level-1 stacking: combine a clinical stream and a web stream three ways.

Simulates two level-0 prediction streams with complementary error patterns
and shows how the OLS, linear-SVR and Gaussian-SVR combiners weigh them.
"""

import numpy as np

from uptakecast.stacking import (
    StackSample,
    fit_stack_ols,
    fit_svr,
    predict_stack_ols,
    predict_svr,
)
from uptakecast.timeseries import MonthStamp

rng = np.random.default_rng(5)
n = 24
truth = 70 + 10 * np.sin(2 * np.pi * np.arange(n) / 12)
clinical_stream = truth + rng.normal(2.0, 2.0, n)   # biased but tight
web_stream = truth + rng.normal(0.0, 6.0, n)        # unbiased but noisy

samples = [
    StackSample(float(c), float(w), float(t), MonthStamp(2013, 1).plus(i))
    for i, (c, w, t) in enumerate(zip(clinical_stream, web_stream, truth))
]
train, test = samples[:18], samples[18:]

ols = fit_stack_ols(train)
svr_lin = fit_svr(train, kernel="linear", C=1.0, eps=0.1)
svr_rbf = fit_svr(train, kernel="gaussian", C=1.0, eps=0.1, gamma=0.25)

print("clinical stream: bias +2, sd 2;  web stream: bias 0, sd 6")
print(f"OLS combiner: mu={ols.mu:.2f} beta_clinical={ols.beta1:.3f} beta_web={ols.beta2:.3f}")
nz = int(np.sum(svr_lin.dual_coefficients != 0))
print(f"linear SVR: {nz}/{len(train)} support vectors, bias {svr_lin.bias:.2f}")
nz = int(np.sum(svr_rbf.dual_coefficients != 0))
print(f"gaussian SVR: {nz}/{len(train)} support vectors, bias {svr_rbf.bias:.2f}")
print()

rows = []
for s in test:
    rows.append(
        (
            s.month,
            s.target,
            s.e_c,
            s.e_w,
            predict_stack_ols(ols, s.e_c, s.e_w),
            predict_svr(svr_lin, s.e_c, s.e_w),
            predict_svr(svr_rbf, s.e_c, s.e_w),
        )
    )

print(f"{'month':8s} {'truth':>7s} {'clin':>7s} {'web':>7s} {'OLS':>7s} {'SVRlin':>7s} {'SVRrbf':>7s}")
for month, truth_v, c, w, p1, p2, p3 in rows:
    print(f"{month}  {truth_v:7.2f} {c:7.2f} {w:7.2f} {p1:7.2f} {p2:7.2f} {p3:7.2f}")

def rmse(col):
    return np.sqrt(np.mean([(r[col] - r[1]) ** 2 for r in rows]))

print()
print(f"held-out RMSE: clinical alone {rmse(2):.3f}, web alone {rmse(3):.3f}, "
      f"OLS stack {rmse(4):.3f}, SVR-linear {rmse(5):.3f}, SVR-gaussian {rmse(6):.3f}")
