#!/usr/bin/env python3
"""Independent step-by-step oracle for the rolling-backtest hand trace.

Recomputes, with plain numpy and no shared code, every intermediate of a
6-period / 2-asset / train-length-3 backtest using the shrinkage estimator
and global-minimum-variance weights at a 50 bp proportional cost:

* per-window shrinkage covariance and its inverse (direct definitional
  formulas, including the uncollapsed dispersion sum),
* GMV weights,
* buy-and-hold drift, L1 trades, gross/net returns,
* performance summaries.

The frozen output (handtrace_expected.json) is what the integration test
asserts against at 1e-12.
"""

import json

import numpy as np

DATES = [
    "2020-01-31",
    "2020-02-29",
    "2020-03-31",
    "2020-04-30",
    "2020-05-31",
    "2020-06-30",
]
X = np.array(
    [
        [0.010, 0.005],
        [-0.020, 0.010],
        [0.015, -0.005],
        [0.005, 0.015],
        [-0.010, 0.000],
        [0.020, -0.010],
    ]
)
N_T = 3
COST = 0.005


def shrinkage_precision(window: np.ndarray) -> np.ndarray:
    n, p = window.shape
    z = window - window.mean(axis=0, keepdims=True)
    s = z.T @ z / n
    m = np.trace(s) / p
    d_sq = np.linalg.norm(s - m * np.eye(p), "fro") ** 2 / p
    bbar_sq = 0.0
    for t in range(n):
        outer = np.outer(z[t], z[t])
        bbar_sq += np.linalg.norm(outer - s, "fro") ** 2
    bbar_sq /= n * n * p
    b_sq = min(bbar_sq, d_sq)
    alpha = b_sq / d_sq if d_sq > 0 else 1.0
    sigma = alpha * m * np.eye(p) + (1.0 - alpha) * s
    return np.linalg.inv(sigma)


def gmv(omega: np.ndarray) -> np.ndarray:
    one = np.ones(omega.shape[0])
    v = omega @ one
    return v / (one @ v)


def main() -> None:
    n = X.shape[0]
    m = n - N_T
    w_hat = [gmv(shrinkage_precision(X[k : k + N_T])) for k in range(m)]

    periods = []
    gross_series = []
    net_series = []
    held = w_hat[0]
    pre_trade = held.copy()
    for k in range(m):
        if k > 0:
            held = w_hat[k]
        x_next = X[k + N_T]
        gross = float(held @ x_next)
        traded = float(np.abs(held - pre_trade).sum())
        net = gross - COST * (1.0 + gross) * traded
        periods.append(
            {
                "date": DATES[k + N_T],
                "gross": gross,
                "net": net,
                "turnover": traded,
            }
        )
        gross_series.append(gross)
        net_series.append(net)
        if k + 1 < m:
            growth = 1.0 + float(held @ x_next)
            pre_trade = held * (1.0 + x_next) / growth

    def perf(series):
        arr = np.array(series)
        mean = float(arr.mean())
        var = float(arr.var(ddof=1))
        return {"mean_return": mean, "variance": var, "sharpe": mean / var**0.5}

    out = {
        "train_length": N_T,
        "cost_rate": COST,
        "weights": [list(map(float, w)) for w in w_hat],
        "periods": periods,
        "turnover": float(np.mean([p["turnover"] for p in periods])),
        "no_cost": perf(gross_series),
        "with_cost": perf(net_series),
    }
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
