"""Simulated populations drawn from a reference schedule, and the benchmark loop."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from smallmort.core import AgeGrid, MortalityDataset, PopulationRecord, StandardSchedule
from smallmort.metrics import evaluate

DEFAULT_SIZES = (1000, 2000, 5000, 10000, 20000, 30000, 50000, 100000, 500000, 1000000)


@dataclass(frozen=True, eq=False)
class ReferenceSchedule:
    age_structure: np.ndarray
    true_rates: np.ndarray
    label: str = "reference"

    def __post_init__(self):
        share = np.asarray(self.age_structure, dtype=float)
        rates = np.asarray(self.true_rates, dtype=float)
        if share.shape != rates.shape or share.ndim != 1:
            raise ValueError("age structure and rates must be vectors of equal length")
        if np.any(share < 0) or abs(share.sum() - 1.0) > 1e-9:
            raise ValueError(f"age structure must be non-negative and sum to 1 (sum={share.sum()!r})")
        if not np.all(np.isfinite(rates)) or np.any(rates <= 0):
            raise ValueError("true rates must be finite and positive")
        object.__setattr__(self, "age_structure", share)
        object.__setattr__(self, "true_rates", rates)

    @property
    def true_log_rates(self) -> np.ndarray:
        return np.log(self.true_rates)

    @property
    def age_grid(self) -> AgeGrid:
        return AgeGrid(self.true_rates.size)


@dataclass(frozen=True, eq=False)
class SimulatedPopulation:
    record: PopulationRecord
    total_size: float
    seed: int
    truth: ReferenceSchedule


def make_exposures(reference: ReferenceSchedule, total_size: float) -> np.ndarray:
    if not total_size > 0:
        raise ValueError("total_size must be positive")
    return total_size * reference.age_structure


def simulate_deaths(exposures, true_rates, seed) -> np.ndarray:
    """Independent Poisson counts with means exposures * rates.

    numpy's Poisson sampler uses inversion below mean 10 and transformed
    rejection above, so draws are reproducible for a given seed.
    """
    mean = np.asarray(exposures, dtype=float) * np.asarray(true_rates, dtype=float)
    return np.random.default_rng(seed).poisson(mean)


def size_seed(seed: int, size: float) -> np.random.SeedSequence:
    """Seed for one (replicate, size) cell, independent of the order of sizes."""
    return np.random.SeedSequence([int(seed), int(round(size))])


def simulate_population(
    reference: ReferenceSchedule, total_size: float, seed: int, sex: str = "both"
) -> SimulatedPopulation:
    exposures = make_exposures(reference, total_size)
    deaths = simulate_deaths(exposures, reference.true_rates, size_seed(seed, total_size))
    record = PopulationRecord(f"sim_{int(round(total_size))}", sex, deaths, exposures)
    return SimulatedPopulation(record, float(total_size), int(seed), reference)


def simulate_dataset(
    reference: ReferenceSchedule, sizes: Sequence[float], seed: int
) -> MortalityDataset:
    pops = [simulate_population(reference, s, seed).record for s in sizes]
    return MortalityDataset(tuple(pops), reference.age_grid)


@dataclass(frozen=True)
class BenchmarkRow:
    seed: int
    size: float
    model: str
    rbias: float = float("nan")
    rmse: float = float("nan")
    mape: float = float("nan")
    n_ages_used: int = 0
    status: str = "ok"
    elapsed: float = field(default=0.0, compare=False)


# A model runner takes (dataset, standard, seed) and returns, per population,
# either fitted log-rates or the exception raised while fitting it.
ModelRunner = Callable[[MortalityDataset, StandardSchedule, int], list]


def run_benchmark(
    reference: ReferenceSchedule,
    sizes: Sequence[float] = DEFAULT_SIZES,
    models: Sequence = ("dyn-poisson", "topals", "gaussian-dlm"),
    standard: Optional[StandardSchedule] = None,
    seeds: Sequence[int] = (0,),
    runners: Optional[dict] = None,
) -> list[BenchmarkRow]:
    """Simulate every size for every seed, fit each model, score against the truth.

    ``models`` holds names looked up in ``runners`` (default: the three
    estimators with default settings) or ``(name, runner)`` pairs. All sizes
    of one seed form one dataset, so the dynamic Poisson model fits them
    jointly. Rows are ordered by seed, size, then model.
    """
    if not sizes:
        raise ValueError("sizes must be nonempty")
    if not models:
        raise ValueError("models must be nonempty")
    if standard is None:
        raise ValueError("a standard schedule is required")
    if runners is None:
        from smallmort.fitting import default_runners

        runners = default_runners()
    resolved = []
    for m in models:
        if isinstance(m, str):
            if m not in runners:
                raise ValueError(f"unknown model {m!r}")
            resolved.append((m, runners[m]))
        else:
            resolved.append(tuple(m))

    truth = reference.true_log_rates
    rows = []
    for seed in seeds:
        dataset = simulate_dataset(reference, sizes, seed)
        per_model = {}
        for name, runner in resolved:
            t0 = time.perf_counter()
            outcomes = runner(dataset, standard, int(seed))
            per_model[name] = (outcomes, (time.perf_counter() - t0) / len(sizes))
        for j, size in enumerate(sizes):
            for name, _ in resolved:
                outcomes, elapsed = per_model[name]
                outcome = outcomes[j]
                if isinstance(outcome, Exception):
                    rows.append(
                        BenchmarkRow(
                            int(seed),
                            float(size),
                            name,
                            status=f"error: {type(outcome).__name__}: {outcome}",
                            elapsed=elapsed,
                        )
                    )
                    continue
                m = evaluate(truth, outcome)
                rows.append(
                    BenchmarkRow(
                        int(seed), float(size), name, m.rbias, m.rmse, m.mape, m.n_ages_used,
                        elapsed=elapsed,
                    )
                )
    return rows
