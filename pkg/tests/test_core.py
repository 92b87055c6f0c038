import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from smallmort.core import (
    AgeGrid,
    CellState,
    DataError,
    MortalityDataset,
    PopulationRecord,
    StandardSchedule,
    log_rates,
    naive_rates,
)


def rec(deaths, exposures, id="a", sex="both"):
    return PopulationRecord(id, sex, deaths, exposures)


def test_naive_rates_cell_examples():
    assert naive_rates(rec([2], [1000]))[0] == pytest.approx(0.002)
    assert naive_rates(rec([0], [500]))[0] is CellState.ZERO_DEATHS
    assert naive_rates(rec([0], [0]))[0] is CellState.NO_EXPOSURE


def test_log_rates_examples():
    lr = log_rates(naive_rates(rec([1, 0, 5], [1.0, 3.0, 5 * math.exp(5)])))
    assert lr[0] == 0.0
    assert np.isnan(lr[1])
    assert lr[2] == pytest.approx(-5.0, abs=1e-12)


def test_age_grid_defaults_and_minimum():
    grid = AgeGrid()
    assert len(grid) == 100
    assert grid.ages[0] == 0 and grid.ages[-1] == 99
    with pytest.raises(DataError):
        AgeGrid(1)


@pytest.mark.parametrize(
    "deaths, exposures",
    [([1, 0], [0.0, 1.0]), ([-1, 0], [1.0, 1.0]), ([0.5, 0], [1.0, 1.0]), ([0, 0], [np.inf, 1.0])],
)
def test_record_rejects_invalid(deaths, exposures):
    with pytest.raises(DataError):
        rec(deaths, exposures)


def test_record_is_immutable():
    r = rec([1, 2], [10.0, 20.0])
    with pytest.raises(ValueError):
        r.deaths[0] = 5


def test_dataset_checks_ids_and_lengths():
    a = rec([0, 1], [1.0, 2.0], id="a")
    with pytest.raises(DataError):
        MortalityDataset((a, rec([0, 1], [1.0, 2.0], id="a")), AgeGrid(2))
    with pytest.raises(DataError):
        MortalityDataset((a,), AgeGrid(3))
    ds = MortalityDataset((a, rec([0, 1], [1.0, 2.0], id="b")), AgeGrid(2))
    assert ds.deaths.shape == (2, 2)


def test_standard_rejects_non_finite():
    with pytest.raises(DataError):
        StandardSchedule([0.0, np.nan])


cells = st.tuples(st.integers(0, 50), st.one_of(st.just(0.0), st.floats(1e-3, 1e4))).map(
    lambda t: (t[0], t[1]) if t[1] > 0 else (0, 0.0)
)


@given(st.lists(cells, min_size=1, max_size=40))
def test_exactly_one_state_and_rates_recover_deaths(pairs):
    deaths = [d for d, _ in pairs]
    exposures = [e for _, e in pairs]
    r = rec(deaths, exposures)
    rates = naive_rates(r)
    for x, (d, e) in enumerate(pairs):
        state = CellState(int(rates.states[x]))
        expected = (
            CellState.NO_EXPOSURE if e == 0 else CellState.ZERO_DEATHS if d == 0 else CellState.RATE
        )
        assert state is expected
        if state is CellState.RATE:
            assert rates.values[x] * e == pytest.approx(d, rel=1e-12)


@given(
    st.lists(st.integers(1, 10**6), min_size=2, max_size=30, unique=True),
    st.floats(1e-2, 1e6),
)
def test_log_rates_strictly_increasing_on_sorted_rates(deaths, exposure):
    deaths = sorted(deaths)
    r = rec(deaths, np.full(len(deaths), exposure))
    lr = log_rates(naive_rates(r))
    assert np.all(np.diff(lr) > 0)
