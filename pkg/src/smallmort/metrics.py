"""Relative bias, root mean squared error and MAPE between log-rate schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DegenerateDenominatorError(ValueError):
    pass


@dataclass(frozen=True)
class MetricsRow:
    rbias: float
    rmse: float
    mape: float
    n_ages_used: int


def evaluate(true_log_rates, estimated_log_rates) -> MetricsRow:
    """Compare schedules cell by cell.

    Relative errors are ``(truth - estimate) / truth``, so the sign of RBias
    depends on the sign of the true log-rates. Cells where either vector is NaN
    are excluded and ``n_ages_used`` counts the rest.
    """
    truth = np.asarray(true_log_rates, dtype=float)
    est = np.asarray(estimated_log_rates, dtype=float)
    if truth.shape != est.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {est.shape}")
    used = ~(np.isnan(truth) | np.isnan(est))
    truth, est = truth[used], est[used]
    if truth.size == 0:
        raise ValueError("no cells to compare")
    if np.any(truth == 0):
        raise DegenerateDenominatorError(
            f"true log-rate is exactly 0 at age {int(np.flatnonzero(used)[np.flatnonzero(truth == 0)[0]])}"
        )
    err = truth - est
    rel = err / truth
    return MetricsRow(
        rbias=float(np.mean(rel)),
        rmse=math.sqrt(float(np.mean(err**2))),
        mape=float(np.mean(np.abs(rel))),
        n_ages_used=int(truth.size),
    )
