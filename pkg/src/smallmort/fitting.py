"""One entry point per estimator over a whole dataset."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

from smallmort.core import FitResult, MortalityDataset, StandardSchedule
from smallmort import dlm, dynpoisson, topals

MODELS = ("dyn-poisson", "topals", "gaussian-dlm")

Standards = Union[StandardSchedule, Sequence[StandardSchedule]]


@dataclass(frozen=True)
class ModelParams:
    dyn_poisson: dynpoisson.DynPoissonConfig = field(default_factory=dynpoisson.DynPoissonConfig)
    penalty_weight: float = 1.0
    knots: tuple = topals.DEFAULT_KNOTS
    dlm: dlm.DlmOptions = field(default_factory=dlm.DlmOptions)
    threads: int = 1


def _per_population(standard: Standards, n: int) -> list:
    if isinstance(standard, StandardSchedule):
        return [standard] * n
    standard = list(standard)
    if len(standard) != n:
        raise ValueError(f"{len(standard)} standards for {n} populations")
    return standard


def _map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _guarded(fn):
    def run(args):
        try:
            return fn(*args)
        except (ValueError, RuntimeError, ArithmeticError) as exc:
            return exc

    return run


def fit_dataset(
    model: str,
    dataset: MortalityDataset,
    standard: Standards,
    params: ModelParams = ModelParams(),
) -> list:
    """Fit ``model`` to every population.

    Returns one entry per population in dataset order: a FitResult, or the
    exception that stopped that population's fit (e.g. too few observed
    cells for the Gaussian model).
    """
    stds = _per_population(standard, len(dataset))
    if model == "topals":
        basis = topals.build_basis(dataset.age_grid, params.knots)

        def one(rec, std):
            fit = topals.topals_fit(rec, std, basis, params.penalty_weight)
            return topals.fit_result(rec, fit)

        return _map(_guarded(one), list(zip(dataset.populations, stds)), params.threads)
    if model == "gaussian-dlm":

        def one(rec, std):
            return dlm.fit_dlm(rec, std, params.dlm)[1]

        return _map(_guarded(one), list(zip(dataset.populations, stds)), params.threads)
    if model == "dyn-poisson":
        config = params.dyn_poisson
        if params.threads > config.threads:
            config = replace(config, threads=params.threads)
        samples = dynpoisson.run_mcmc(dataset, stds, config)
        return dynpoisson.posterior_summary(samples, dataset, stds)
    raise ValueError(f"unknown model {model!r}; choose from {', '.join(MODELS)}")


def default_runners(params: Optional[ModelParams] = None) -> dict:
    """Benchmark runners: (dataset, standard, seed) -> list of log-rates or exceptions."""
    params = params or ModelParams()

    def make(model):
        def run(dataset, standard, seed):
            p = params
            if model == "dyn-poisson":
                p = replace(params, dyn_poisson=replace(params.dyn_poisson, seed=seed))
            out = fit_dataset(model, dataset, standard, p)
            return [o if isinstance(o, Exception) else o.log_rates for o in out]

        return run

    return {m: make(m) for m in MODELS}


def unwrap(results: list) -> list[FitResult]:
    """Raise the first per-population error, else return the FitResults."""
    for r in results:
        if isinstance(r, Exception):
            raise r
    return results
