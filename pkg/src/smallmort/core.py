"""Rectangular mortality data model shared by every estimator.

Death counts and exposures are kept per population as length-A vectors over
consecutive single-year ages. Standard schedules are stored on the log scale.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

SEXES = ("female", "male", "both")


class DataError(ValueError):
    """Input violates the data model invariants."""


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AgeGrid:
    """Consecutive integer ages starting at 0."""

    n_ages: int = 100

    def __post_init__(self):
        if int(self.n_ages) != self.n_ages or self.n_ages < 2:
            raise DataError(f"age grid needs at least 2 ages, got {self.n_ages}")

    @property
    def ages(self) -> np.ndarray:
        return np.arange(self.n_ages)

    def __len__(self) -> int:
        return self.n_ages


@dataclass(frozen=True, eq=False)
class PopulationRecord:
    id: str
    sex: str
    deaths: np.ndarray
    exposures: np.ndarray

    def __post_init__(self):
        if self.sex not in SEXES:
            raise DataError(f"unknown sex {self.sex!r}")
        deaths = np.asarray(self.deaths, dtype=float)
        exposures = np.asarray(self.exposures, dtype=float)
        if deaths.shape != exposures.shape or deaths.ndim != 1:
            raise DataError("deaths and exposures must be vectors of equal length")
        if not (np.all(np.isfinite(deaths)) and np.all(np.isfinite(exposures))):
            raise DataError(f"population {self.id}: non-finite entries")
        if np.any(deaths < 0) or np.any(exposures < 0):
            raise DataError(f"population {self.id}: negative entries")
        if np.any(deaths != np.round(deaths)):
            raise DataError(f"population {self.id}: non-integer death counts")
        bad = np.flatnonzero((deaths > 0) & (exposures == 0))
        if bad.size:
            raise DataError(f"population {self.id}: deaths without exposure at age {bad[0]}")
        object.__setattr__(self, "deaths", _frozen(deaths.astype(np.int64), dtype=np.int64))
        object.__setattr__(self, "exposures", _frozen(exposures))

    @property
    def n_ages(self) -> int:
        return self.deaths.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PopulationRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.sex == other.sex
            and np.array_equal(self.deaths, other.deaths)
            and np.array_equal(self.exposures, other.exposures)
        )


@dataclass(frozen=True)
class MortalityDataset:
    populations: tuple
    age_grid: AgeGrid = field(default_factory=AgeGrid)

    def __post_init__(self):
        pops = tuple(self.populations)
        object.__setattr__(self, "populations", pops)
        seen = set()
        for rec in pops:
            if rec.n_ages != self.age_grid.n_ages:
                raise DataError(
                    f"population {rec.id}: {rec.n_ages} ages, grid has {self.age_grid.n_ages}"
                )
            key = (rec.id, rec.sex)
            if key in seen:
                raise DataError(f"duplicate population {rec.id} ({rec.sex})")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.populations)

    def __iter__(self):
        return iter(self.populations)

    @property
    def deaths(self) -> np.ndarray:
        """n x A matrix of death counts."""
        return np.vstack([p.deaths for p in self.populations])

    @property
    def exposures(self) -> np.ndarray:
        return np.vstack([p.exposures for p in self.populations])


@dataclass(frozen=True, eq=False)
class StandardSchedule:
    log_rates: np.ndarray
    label: str = "standard"
    sex: str = "both"

    def __post_init__(self):
        lr = np.asarray(self.log_rates, dtype=float)
        if lr.ndim != 1 or not np.all(np.isfinite(lr)):
            raise DataError("standard log-rates must be a finite vector")
        if self.sex not in SEXES:
            raise DataError(f"unknown sex {self.sex!r}")
        object.__setattr__(self, "log_rates", _frozen(lr))

    def __len__(self) -> int:
        return self.log_rates.shape[0]

    def check_grid(self, grid: AgeGrid) -> None:
        if len(self) != grid.n_ages:
            raise DataError(f"standard has {len(self)} ages, grid has {grid.n_ages}")


class CellState(enum.IntEnum):
    RATE = 0
    ZERO_DEATHS = 1
    NO_EXPOSURE = 2


@dataclass(frozen=True, eq=False)
class ObservedRates:
    """Per-age naive rates; ``values`` is NaN wherever ``states`` is not RATE."""

    states: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return self.states.shape[0]

    def __getitem__(self, x: int):
        state = CellState(int(self.states[x]))
        return float(self.values[x]) if state is CellState.RATE else state

    @property
    def observed(self) -> np.ndarray:
        return self.states == CellState.RATE


def naive_rates(record: PopulationRecord) -> ObservedRates:
    deaths = record.deaths.astype(float)
    exposures = record.exposures
    states = np.full(deaths.shape, CellState.RATE, dtype=np.int8)
    states[(deaths == 0) & (exposures > 0)] = CellState.ZERO_DEATHS
    states[exposures == 0] = CellState.NO_EXPOSURE
    values = np.full(deaths.shape, np.nan)
    ok = states == CellState.RATE
    values[ok] = deaths[ok] / exposures[ok]
    return ObservedRates(_frozen(states, dtype=np.int8), _frozen(values))


def log_rates(rates: ObservedRates) -> np.ndarray:
    """Log of each Rate cell; NaN marks an absent value."""
    out = np.full(len(rates), np.nan)
    ok = rates.observed
    out[ok] = np.log(rates.values[ok])
    return out


@dataclass(frozen=True, eq=False)
class FitResult:
    """Fitted log-rate schedule for one population.

    ``lower``/``upper`` are None for point-estimate-only models.
    """

    population_id: str
    sex: str
    model: str
    log_rates: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    @property
    def ages(self) -> np.ndarray:
        return np.arange(len(self.log_rates))

    @property
    def has_intervals(self) -> bool:
        return self.lower is not None and self.upper is not None


def stack_standards(
    standard: StandardSchedule | Sequence[StandardSchedule], n: int, grid: AgeGrid
) -> np.ndarray:
    """Return an n x A matrix of standard log-rates (one shared or one per population)."""
    if isinstance(standard, StandardSchedule):
        standard.check_grid(grid)
        return np.tile(standard.log_rates, (n, 1))
    standards = list(standard)
    if len(standards) != n:
        raise DataError(f"{len(standards)} standards for {n} populations")
    for s in standards:
        s.check_grid(grid)
    return np.vstack([s.log_rates for s in standards])
