"""Smoothed complete mortality schedules for small populations."""

from smallmort.core import (
    AgeGrid,
    CellState,
    FitResult,
    MortalityDataset,
    ObservedRates,
    PopulationRecord,
    StandardSchedule,
    log_rates,
    naive_rates,
)

__all__ = [
    "AgeGrid",
    "CellState",
    "FitResult",
    "MortalityDataset",
    "ObservedRates",
    "PopulationRecord",
    "StandardSchedule",
    "log_rates",
    "naive_rates",
]
__version__ = "0.1.0"
