"""Held-out prediction from a posterior trace.

The predictive distribution of a cell is the average of the per-sample
emission densities evaluated under each sample's hidden state; means and
variances follow from the law of total expectation/variance across samples.
Train metrics cover the unmasked cells, test metrics the masked ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .emissions import validate_observations

__all__ = ["PredictionReport", "predictive_density", "predictive_log_density_matrix", "report"]


@dataclass
class PredictionReport:
    metric: str
    train_error: float
    test_error: float
    train_loglik: float
    test_loglik: float
    pred_mean: np.ndarray
    pred_var: np.ndarray


def predictive_density(trace, t: int, dim: int, value) -> float:
    """Monte Carlo predictive density of one cell: (1/M) sum_m f(value | sample m)."""
    if len(trace) == 0:
        raise ValueError("trace is empty")
    model = trace.model
    logs = np.array(
        [model.log_density_value(s.params, int(s.x[t]), dim, value) for s in trace]
    )
    top = logs.max()
    if not np.isfinite(top):
        return 0.0
    return float(np.exp(top) * np.exp(logs - top).mean())


def predictive_log_density_matrix(y, trace) -> np.ndarray:
    """T x L log predictive densities of the given values under the trace."""
    if len(trace) == 0:
        raise ValueError("trace is empty")
    model = trace.model
    y = np.asarray(y)
    if y.ndim == 1:
        y = y[:, None]
    top = np.full(y.shape, -np.inf)
    for s in trace:
        top = np.maximum(top, model.log_density_cells(s.params, s.x, y))
    acc = np.zeros(y.shape)
    for s in trace:
        ld = model.log_density_cells(s.params, s.x, y)
        finite = np.isfinite(top)
        acc[finite] += np.exp(ld[finite] - top[finite])
    with np.errstate(divide="ignore"):
        out = top + np.log(acc / len(trace))
    return out


def report(y, mask, trace, metric: str = "mae") -> PredictionReport:
    """Predictive summary over train (unmasked) and test (masked) cells.

    The error is the mean absolute deviation of the posterior predictive mean
    from the truth; ``metric="rmse"`` switches to root mean squared error.
    Log-likelihoods are mean log predictive densities.
    """
    if metric not in ("mae", "rmse"):
        raise ValueError(f"metric must be 'mae' or 'rmse', got {metric!r}")
    if len(trace) == 0:
        raise ValueError("trace is empty")
    y, mask = validate_observations(y, mask)
    model = trace.model

    sum_mean = np.zeros(y.shape)
    sum_second = np.zeros(y.shape)
    for s in trace:
        mean_s, var_s = model.predictive_mean_var(s.params, s.x)
        sum_mean += mean_s
        sum_second += var_s + mean_s**2
    M = len(trace)
    pred_mean = sum_mean / M
    pred_var = np.maximum(sum_second / M - pred_mean**2, 0.0)

    log_pred = predictive_log_density_matrix(y, trace)
    deviation = np.abs(pred_mean - y.astype(float))
    if metric == "rmse":
        deviation = deviation**2

    def _summary(cells):
        if not cells.any():
            return np.nan, np.nan
        err = deviation[cells].mean()
        if metric == "rmse":
            err = np.sqrt(err)
        return float(err), float(log_pred[cells].mean())

    train_error, train_loglik = _summary(~mask)
    test_error, test_loglik = _summary(mask)
    return PredictionReport(
        metric=metric,
        train_error=train_error,
        test_error=test_error,
        train_loglik=train_loglik,
        test_loglik=test_loglik,
        pred_mean=pred_mean,
        pred_var=pred_var,
    )
