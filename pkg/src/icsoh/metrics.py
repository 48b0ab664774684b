"""Prediction error metrics: RMSE, MAE, MAPE (percent) and MSE."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .validation import as_float_1d, check_equal_length


@dataclass(frozen=True)
class MetricReport:
    """The four error metrics over n paired samples.

    ``mape_percent`` is None when any truth value is zero (the ratio is
    undefined there; the other metrics are still reported).
    """

    rmse: float
    mae: float
    mape_percent: float | None
    mse: float
    n: int


def compute_metrics(truth, predicted) -> MetricReport:
    """Pointwise error metrics between truth and predictions.

    RMSE = sqrt(mean((x - xhat)^2)), MAE = mean |x - xhat|,
    MAPE = mean |(x - xhat)/x| * 100, MSE = mean((x - xhat)^2).
    """
    x = as_float_1d(truth, "truth")
    xhat = as_float_1d(predicted, "predicted")
    check_equal_length(x, xhat, "truth", "predicted")
    err = x - xhat
    mse = float(np.mean(err**2))
    rmse = math.sqrt(mse)
    mae = float(np.mean(np.abs(err)))
    if np.any(x == 0.0):
        mape = None
    else:
        mape = float(np.mean(np.abs(err / x))) * 100.0
    return MetricReport(rmse=rmse, mae=mae, mape_percent=mape, mse=mse, n=len(x))
