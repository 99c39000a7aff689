"""Prediction quality metrics and the per-run report record."""

import math
from dataclasses import dataclass

import numpy as np

MNLP_VARIANCE_FLOOR = 1e-12


def _check_lengths(predicted, truth):
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    if truth.shape[0] != len(predicted):
        raise ValueError(
            f"prediction length {len(predicted)} != truth length {truth.shape[0]}"
        )
    if truth.shape[0] == 0:
        raise ValueError("need at least one prediction to score")
    return truth


def rmse(predicted, truth):
    """Root mean squared error of the predictive mean."""
    truth = _check_lengths(predicted, truth)
    return float(np.sqrt(np.mean((truth - predicted.mean) ** 2)))


def mnlp(predicted, truth, floor=MNLP_VARIANCE_FLOOR):
    """Mean negative log probability under the predictive marginals.

    Variances are floored at `floor` before use so that nonpositive
    values (possible for the reduced-rank predictor) stay finite; use
    mnlp_floor_count to report how often the floor engaged.
    """
    truth = _check_lengths(predicted, truth)
    var = np.maximum(predicted.var, floor)
    return float(
        0.5 * np.mean((truth - predicted.mean) ** 2 / var + np.log(2.0 * math.pi * var))
    )


def mnlp_floor_count(predicted, floor=MNLP_VARIANCE_FLOOR):
    """How many variances the MNLP floor replaced."""
    return int(np.count_nonzero(predicted.var < floor))


def negative_variance_count(predicted):
    """How many raw predictive variances are negative."""
    return int(np.count_nonzero(predicted.var < 0.0))


@dataclass
class MetricsReport:
    rmse: float
    mnlp: float
    wall_time_seconds: float
    negative_variance_count: int
    mnlp_floor_count: int = 0
    ledger_report: str = ""
