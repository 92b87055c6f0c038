"""TOPALS: linear-spline offsets to a standard log-rate schedule.

The offsets are estimated by Newton ascent on a penalized Poisson
log-likelihood, with a squared first-difference roughness penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from smallmort.core import AgeGrid, FitResult, PopulationRecord, StandardSchedule

DEFAULT_KNOTS = (0, 1, 10, 20, 40, 70, 100)


class InvalidKnotsError(ValueError):
    pass


class NonIdentifiableError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SplineBasis:
    matrix: np.ndarray
    knots: np.ndarray

    @property
    def n_knots(self) -> int:
        return self.knots.shape[0]


@dataclass(frozen=True, eq=False)
class TopalsFit:
    alpha: np.ndarray
    fitted_log_rates: np.ndarray
    iterations: int
    converged: bool
    final_gradient_norm: float
    penalty_weight: float
    gradient_tolerance: float = 0.0
    objective_trace: tuple = ()


def build_basis(age_grid: AgeGrid, knots=DEFAULT_KNOTS) -> SplineBasis:
    """Piecewise-linear hat functions, one column per knot."""
    t = np.asarray(knots, dtype=float)
    ages = age_grid.ages.astype(float)
    if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
        raise InvalidKnotsError(f"knots must be strictly increasing: {list(knots)}")
    if t[0] > ages[0] or t[-1] < ages[-1] + 1:
        raise InvalidKnotsError(
            f"knots {list(knots)} do not cover ages {int(ages[0])}..{int(ages[-1])}"
        )
    K = t.size
    B = np.zeros((ages.size, K))
    for k in range(K):
        if k > 0:
            left = (ages >= t[k - 1]) & (ages <= t[k])
            B[left, k] = (ages[left] - t[k - 1]) / (t[k] - t[k - 1])
        if k < K - 1:
            right = (ages >= t[k]) & (ages <= t[k + 1])
            B[right, k] = (t[k + 1] - ages[right]) / (t[k + 1] - t[k])
    return SplineBasis(matrix=B, knots=t.astype(int))


def difference_matrix(K: int) -> np.ndarray:
    """(K-1) x K first-difference operator."""
    return np.diff(np.eye(K), axis=0)


def topals_log_posterior(alpha, deaths, exposures, standard, basis, penalty_weight=1.0) -> float:
    """Penalized Poisson log-likelihood, up to terms that depend only on deaths."""
    alpha = np.asarray(alpha, dtype=float)
    B = basis.matrix if isinstance(basis, SplineBasis) else np.asarray(basis, dtype=float)
    S = _log_standard(standard)
    deaths = np.asarray(deaths, dtype=float)
    exposures = np.asarray(exposures, dtype=float)
    if B.shape != (S.size, alpha.size) or deaths.shape != S.shape or exposures.shape != S.shape:
        raise ValueError("dimension mismatch between basis, alpha, standard and data")
    eta = S + B @ alpha
    keep = exposures > 0
    loglik = np.sum(deaths[keep] * eta[keep] - exposures[keep] * np.exp(eta[keep]))
    return float(loglik - 0.5 * penalty_weight * np.sum(np.diff(alpha) ** 2))


def topals_gradient(alpha, deaths, exposures, standard, basis, penalty_weight=1.0) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    B = basis.matrix if isinstance(basis, SplineBasis) else np.asarray(basis, dtype=float)
    S = _log_standard(standard)
    keep = np.asarray(exposures) > 0
    B, S = B[keep], S[keep]
    y = np.asarray(deaths, dtype=float)[keep]
    mean = np.asarray(exposures, dtype=float)[keep] * np.exp(S + B @ alpha)
    D = difference_matrix(alpha.size)
    return B.T @ (y - mean) - penalty_weight * D.T @ (D @ alpha)


def topals_hessian(alpha, exposures, standard, basis, penalty_weight=1.0) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    B = basis.matrix if isinstance(basis, SplineBasis) else np.asarray(basis, dtype=float)
    S = _log_standard(standard)
    keep = np.asarray(exposures) > 0
    B, S = B[keep], S[keep]
    mean = np.asarray(exposures, dtype=float)[keep] * np.exp(S + B @ alpha)
    D = difference_matrix(alpha.size)
    return -(B.T * mean) @ B - penalty_weight * D.T @ D


def topals_fit(
    record: PopulationRecord,
    standard: StandardSchedule,
    basis: SplineBasis,
    penalty_weight: float = 1.0,
    max_iter: int = 50,
    tol: float = 1e-8,
    max_halvings: int = 20,
) -> TopalsFit:
    if penalty_weight < 0:
        raise ValueError("penalty_weight must be non-negative")
    S = _log_standard(standard)
    if basis.matrix.shape[0] != S.size or record.n_ages != S.size:
        raise ValueError("basis, standard and record must share the age grid")
    Y, E = record.deaths, record.exposures
    args = (Y, E, S, basis)

    alpha = np.zeros(basis.n_knots)
    obj = topals_log_posterior(alpha, *args, penalty_weight)
    trace = [obj]
    grad = topals_gradient(alpha, *args, penalty_weight)
    H = topals_hessian(alpha, E, S, basis, penalty_weight)
    gnorm = float(np.max(np.abs(grad)))
    # Gradient roundoff grows with the curvature (roughly the death counts), so
    # the tolerance is scaled by it; this bounds the offset error near tol.
    gtol = tol * (1.0 + float(np.max(-np.diag(H))))
    it = 0
    while gnorm > gtol and it < max_iter:
        try:
            L = np.linalg.cholesky(-H)
        except np.linalg.LinAlgError:
            if penalty_weight == 0:
                raise NonIdentifiableError(
                    "Hessian is singular: some spline offsets are not identified by the "
                    "data; use a positive penalty_weight"
                ) from None
            raise
        step = np.linalg.solve(L.T, np.linalg.solve(L, grad))
        it += 1
        t = 1.0
        for _ in range(max_halvings + 1):
            cand = alpha + t * step
            cand_obj = topals_log_posterior(cand, *args, penalty_weight)
            if cand_obj >= obj:
                break
            t *= 0.5
        else:
            # No ascent available at machine precision.
            break
        alpha, obj = cand, cand_obj
        trace.append(obj)
        grad = topals_gradient(alpha, *args, penalty_weight)
        gnorm = float(np.max(np.abs(grad)))
        H = topals_hessian(alpha, E, S, basis, penalty_weight)
        gtol = tol * (1.0 + float(np.max(-np.diag(H))))

    return TopalsFit(
        alpha=alpha,
        fitted_log_rates=S + basis.matrix @ alpha,
        iterations=it,
        converged=gnorm <= gtol,
        final_gradient_norm=gnorm,
        penalty_weight=float(penalty_weight),
        gradient_tolerance=gtol,
        objective_trace=tuple(trace),
    )


def fit_result(record: PopulationRecord, fit: TopalsFit) -> FitResult:
    return FitResult(
        population_id=record.id,
        sex=record.sex,
        model="topals",
        log_rates=fit.fitted_log_rates,
        info={"iterations": fit.iterations, "converged": fit.converged},
    )


def _log_standard(standard) -> np.ndarray:
    if isinstance(standard, StandardSchedule):
        return standard.log_rates
    return np.asarray(standard, dtype=float)
