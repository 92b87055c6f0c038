"""Gaussian dynamic linear model on observed log-rates.

Local-level model indexed by age, optionally with the standard schedule as a
static regressor:

    y[x]     = level[x] + mu * S[x] + v,   v ~ N(0, V)
    level[x] = level[x-1] + w,             w ~ N(0, W)

Cells with zero deaths or zero exposure have no log-rate and are treated as
missing observations. V and W are estimated by maximizing the
prediction-error log-likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import optimize

from smallmort.core import FitResult, PopulationRecord, StandardSchedule, log_rates, naive_rates

LOG_2PI = math.log(2.0 * math.pi)
MIN_OBSERVED = 5


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class DlmSpec:
    obs_variance: float
    state_variance: float
    initial_mean: float = 0.0
    initial_variance: float = 100.0
    regression: bool = False
    # Prior on the static regression coefficient (used only with regression=True).
    regression_mean: float = 1.0
    regression_variance: float = 100.0

    def __post_init__(self):
        for name in ("obs_variance", "state_variance", "initial_variance", "regression_variance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True, eq=False)
class FilterOutput:
    means: np.ndarray  # (T, p) filtered state means
    covs: np.ndarray  # (T, p, p)
    pred_means: np.ndarray  # (T, p) one-step predictions
    pred_covs: np.ndarray
    loglik: float
    n_observed: int

    @property
    def level_means(self) -> np.ndarray:
        return self.means[:, 0]

    @property
    def level_variances(self) -> np.ndarray:
        return self.covs[:, 0, 0]


@dataclass(frozen=True, eq=False)
class SmootherOutput:
    means: np.ndarray
    covs: np.ndarray

    @property
    def level_means(self) -> np.ndarray:
        return self.means[:, 0]

    @property
    def level_variances(self) -> np.ndarray:
        return self.covs[:, 0, 0]


@dataclass(frozen=True, eq=False)
class DlmFit:
    filtered_means: np.ndarray
    filtered_variances: np.ndarray
    smoothed_means: np.ndarray
    smoothed_variances: np.ndarray
    loglik: float
    obs_variance: float
    state_variance: float
    fitted_log_rates: np.ndarray
    regression_coef: Optional[float] = None


@dataclass(frozen=True)
class DlmOptions:
    regression: bool = True
    log_variance_bounds: tuple = (math.log(1e-8), math.log(1e2))
    initial_variance: float = 100.0
    initial_mean: Optional[float] = None
    # Half-width multiplier for the pointwise band on fitted log-rates.
    interval_z: float = 1.959963984540054


def _system(spec: DlmSpec, regressor):
    if spec.regression:
        if regressor is None:
            raise ValueError("regression requires a regressor (the standard log-rates)")
        m0 = np.array([spec.initial_mean, spec.regression_mean])
        C0 = np.diag([spec.initial_variance, spec.regression_variance])
        Wm = np.diag([spec.state_variance, 0.0])
    else:
        m0 = np.array([spec.initial_mean])
        C0 = np.array([[spec.initial_variance]])
        Wm = np.array([[spec.state_variance]])
    return m0, C0, Wm


def kalman_filter(observations, spec: DlmSpec, regressor=None) -> FilterOutput:
    """Forward recursions; NaN entries are missing and skip the update step.

    With no observed entries the output is the prior and the log-likelihood 0.

    The prior at the first age is N(initial_mean, initial_variance); every later
    age adds the state variance to the previous filtered variance.
    """
    y = np.asarray(observations, dtype=float)
    present = ~np.isnan(y)
    T = y.size
    m, C, Wm = _system(spec, regressor)
    p = m.size
    S = None if regressor is None else np.asarray(regressor, dtype=float)
    means = np.empty((T, p))
    covs = np.empty((T, p, p))
    pred_means = np.empty((T, p))
    pred_covs = np.empty((T, p, p))
    V = spec.obs_variance
    loglik = 0.0
    for x in range(T):
        a, R = (m, C) if x == 0 else (m, C + Wm)
        pred_means[x], pred_covs[x] = a, R
        if present[x]:
            F = np.array([1.0, S[x]]) if spec.regression else np.array([1.0])
            f = F @ a
            RF = R @ F
            Q = F @ RF + V
            e = y[x] - f
            K = RF / Q
            m = a + K * e
            C = R - np.outer(K, RF)
            C = 0.5 * (C + C.T)
            loglik -= 0.5 * (LOG_2PI + math.log(Q) + e * e / Q)
        else:
            m, C = a, R
        means[x], covs[x] = m, C
    return FilterOutput(means, covs, pred_means, pred_covs, float(loglik), int(present.sum()))


def kalman_smoother(filtered: FilterOutput, spec: DlmSpec) -> SmootherOutput:
    """Rauch-Tung-Striebel backward pass."""
    T, p = filtered.means.shape
    s_means = filtered.means.copy()
    s_covs = filtered.covs.copy()
    for x in range(T - 2, -1, -1):
        C = filtered.covs[x]
        R_next = filtered.pred_covs[x + 1]
        J = np.linalg.solve(R_next.T, C.T).T
        s_means[x] = filtered.means[x] + J @ (s_means[x + 1] - filtered.pred_means[x + 1])
        cov = C + J @ (s_covs[x + 1] - R_next) @ J.T
        s_covs[x] = 0.5 * (cov + cov.T)
    return SmootherOutput(s_means, s_covs)


def observations_for(record: PopulationRecord) -> np.ndarray:
    return log_rates(naive_rates(record))


def estimate_variances(y, regressor=None, options: DlmOptions = DlmOptions()):
    """Maximum-likelihood (V, W) by bounded Nelder-Mead on the log scale.

    A coarse grid picks the starting point so that the search lands on the
    dominant mode.
    """
    if np.sum(~np.isnan(np.asarray(y, dtype=float))) < 2:
        raise InsufficientDataError("at least two observed values are needed to estimate variances")
    lo, hi = options.log_variance_bounds
    base = _base_spec(y, regressor, options)

    def negloglik(z):
        spec = _with_variances(base, math.exp(z[0]), math.exp(z[1]))
        return -kalman_filter(y, spec, regressor).loglik

    grid = np.linspace(lo, hi, 7)
    starts = [(negloglik((a, b)), (a, b)) for a in grid for b in grid]
    _, start = min(starts)
    res = optimize.minimize(
        negloglik,
        np.array(start),
        method="Nelder-Mead",
        bounds=[(lo, hi), (lo, hi)],
        options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 4000, "maxfev": 8000},
    )
    z = np.clip(res.x, lo, hi)
    return math.exp(z[0]), math.exp(z[1]), -float(res.fun)


def _base_spec(y, regressor, options: DlmOptions) -> DlmSpec:
    regression = options.regression and regressor is not None
    if options.initial_mean is not None:
        m0 = options.initial_mean
    else:
        first = y[~np.isnan(y)][0]
        m0 = float(first - regressor[~np.isnan(y)][0]) if regression else float(first)
    return DlmSpec(1.0, 1.0, m0, options.initial_variance, regression)


def _with_variances(spec: DlmSpec, V: float, W: float) -> DlmSpec:
    return replace(spec, obs_variance=V, state_variance=W)


def fit_dlm(
    record: PopulationRecord,
    standard: Optional[StandardSchedule] = None,
    options: DlmOptions = DlmOptions(),
) -> tuple[DlmFit, FitResult]:
    y = observations_for(record)
    n_obs = int(np.sum(~np.isnan(y)))
    if n_obs < MIN_OBSERVED:
        raise InsufficientDataError(
            f"population {record.id}: {n_obs} observed log-rates, need at least {MIN_OBSERVED}"
        )
    regressor = None
    if options.regression:
        if standard is None:
            raise ValueError("regression=True requires a standard schedule")
        regressor = standard.log_rates
    V, W, _ = estimate_variances(y, regressor, options)
    spec = _with_variances(_base_spec(y, regressor, options), V, W)
    filt = kalman_filter(y, spec, regressor)
    smooth = kalman_smoother(filt, spec)
    fitted = smooth.level_means.copy()
    fitted_var = smooth.level_variances.copy()
    coef = None
    if spec.regression:
        coef = float(smooth.means[0, 1])
        fitted = fitted + smooth.means[:, 1] * regressor
        Fx = np.column_stack([np.ones_like(regressor), regressor])
        fitted_var = np.einsum("xi,xij,xj->x", Fx, smooth.covs, Fx)
    half = options.interval_z * np.sqrt(np.maximum(fitted_var, 0.0))
    fit = DlmFit(
        filtered_means=filt.level_means,
        filtered_variances=filt.level_variances,
        smoothed_means=smooth.level_means,
        smoothed_variances=smooth.level_variances,
        loglik=filt.loglik,
        obs_variance=V,
        state_variance=W,
        fitted_log_rates=fitted,
        regression_coef=coef,
    )
    result = FitResult(
        population_id=record.id,
        sex=record.sex,
        model="gaussian-dlm",
        log_rates=fitted,
        lower=fitted - half,
        upper=fitted + half,
        info={"obs_variance": V, "state_variance": W, "loglik": filt.loglik},
    )
    return fit, result
