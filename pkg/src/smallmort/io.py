"""Comma-delimited readers and writers.

Every reader rejects malformed input with a SchemaError that names the
offending line (the header is line 1). Zero death counts must be written
explicitly; a missing (area, sex, age) row is an error.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from smallmort.core import (
    SEXES,
    AgeGrid,
    DataError,
    FitResult,
    MortalityDataset,
    PopulationRecord,
    StandardSchedule,
)

STANDARD_COLUMNS = ("age", "sex", "log_rate")
DATASET_COLUMNS = ("area_id", "sex", "age", "deaths", "exposure")
FIT_COLUMNS = ("area_id", "sex", "age", "log_rate_hat", "lower", "upper", "model")
REFERENCE_COLUMNS = ("age", "population_share", "rate")
METRICS_COLUMNS = ("seed", "size", "model", "rbias", "rmse", "mape", "n_ages_used", "status")
FIT_DECIMALS = 8
METRIC_DECIMALS = 6


class SchemaError(ValueError):
    pass


def _rows(path, columns):
    """Yield (line_number, row dict) after checking the header."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: line 1: empty file")
        header = [h.strip() for h in header]
        if tuple(header) != tuple(columns):
            raise SchemaError(
                f"{path}: line 1: expected header {','.join(columns)}, got {','.join(header)}"
            )
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(columns):
                raise SchemaError(f"{path}: line {lineno}: expected {len(columns)} fields")
            yield lineno, dict(zip(columns, (c.strip() for c in row)))


def _int(value, what, path, lineno):
    try:
        f = float(value)
    except ValueError:
        raise SchemaError(f"{path}: line {lineno}: {what} {value!r} is not a number") from None
    if not math.isfinite(f) or f != int(f):
        raise SchemaError(f"{path}: line {lineno}: {what} {value!r} is not an integer")
    return int(f)


def _float(value, what, path, lineno):
    try:
        f = float(value)
    except ValueError:
        raise SchemaError(f"{path}: line {lineno}: {what} {value!r} is not a number") from None
    if not math.isfinite(f):
        raise SchemaError(f"{path}: line {lineno}: {what} is not finite")
    return f


def _sex(value, path, lineno):
    if value not in SEXES:
        raise SchemaError(f"{path}: line {lineno}: unknown sex {value!r}")
    return value


def _check_ages(found: dict, n_ages: int, path, label: str, last_line: int):
    missing = [a for a in range(n_ages) if a not in found]
    if missing:
        raise SchemaError(f"{path}: line {last_line}: {label} is missing age {missing[0]}")


# -- standard schedules -----------------------------------------------------


def read_standards(path, n_ages: int = 100) -> dict:
    """All sex-specific standards in a file; "both" is derived when absent."""
    values: dict = {}
    last = 1
    for lineno, row in _rows(path, STANDARD_COLUMNS):
        last = lineno
        age = _int(row["age"], "age", path, lineno)
        sex = _sex(row["sex"], path, lineno)
        if not 0 <= age < n_ages:
            raise SchemaError(f"{path}: line {lineno}: age {age} outside 0..{n_ages - 1}")
        lr = _float(row["log_rate"], "log_rate", path, lineno)
        by_age = values.setdefault(sex, {})
        if age in by_age:
            raise SchemaError(f"{path}: line {lineno}: duplicate row for age {age}, sex {sex}")
        by_age[age] = lr
    if not values:
        raise SchemaError(f"{path}: line {last}: no standard rows")
    out = {}
    for sex, by_age in values.items():
        _check_ages(by_age, n_ages, path, f"standard ({sex})", last)
        label = Path(path).stem
        out[sex] = StandardSchedule(np.array([by_age[a] for a in range(n_ages)]), label, sex)
    if "both" not in out and "female" in out and "male" in out:
        mean = 0.5 * (out["female"].log_rates + out["male"].log_rates)
        out["both"] = StandardSchedule(mean, out["female"].label, "both")
    return out


def read_standard(path, sex: str = "both", n_ages: int = 100) -> StandardSchedule:
    standards = read_standards(path, n_ages)
    if sex not in standards:
        raise SchemaError(f"{path}: no standard for sex {sex!r} (have {', '.join(standards)})")
    return standards[sex]


def write_standards(standards: Iterable[StandardSchedule], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STANDARD_COLUMNS)
        for std in standards:
            for age, lr in enumerate(std.log_rates):
                w.writerow([age, std.sex, repr(float(lr))])


# -- death and exposure data ------------------------------------------------


def read_dataset(path, sex: Optional[str] = None, n_ages: int = 100) -> MortalityDataset:
    """One record per (area_id, sex), in order of first appearance.

    ``sex`` filters records; asking for "both" when an area only has female
    and male rows sums them.
    """
    if sex is not None and sex not in SEXES:
        raise SchemaError(f"unknown sex filter {sex!r}")
    cells: dict = {}
    last = 1
    for lineno, row in _rows(path, DATASET_COLUMNS):
        last = lineno
        area = row["area_id"]
        if not area:
            raise SchemaError(f"{path}: line {lineno}: empty area_id")
        s = _sex(row["sex"], path, lineno)
        age = _int(row["age"], "age", path, lineno)
        if not 0 <= age < n_ages:
            raise SchemaError(f"{path}: line {lineno}: age {age} outside 0..{n_ages - 1}")
        deaths = _int(row["deaths"], "deaths", path, lineno)
        exposure = _float(row["exposure"], "exposure", path, lineno)
        if deaths < 0:
            raise SchemaError(f"{path}: line {lineno}: negative deaths")
        if exposure < 0:
            raise SchemaError(f"{path}: line {lineno}: negative exposure")
        if deaths > 0 and exposure == 0:
            raise SchemaError(f"{path}: line {lineno}: {deaths} deaths with zero exposure")
        by_age = cells.setdefault((area, s), {})
        if age in by_age:
            raise SchemaError(f"{path}: line {lineno}: duplicate row for {area} ({s}) age {age}")
        by_age[age] = (deaths, exposure)

    records = {}
    for (area, s), by_age in cells.items():
        _check_ages(by_age, n_ages, path, f"area {area} ({s})", last)
        deaths = np.array([by_age[a][0] for a in range(n_ages)])
        exposures = np.array([by_age[a][1] for a in range(n_ages)])
        records[(area, s)] = PopulationRecord(area, s, deaths, exposures)

    if sex is None:
        chosen = list(records.values())
    else:
        chosen = []
        areas = list(dict.fromkeys(area for area, _ in records))
        for area in areas:
            if (area, sex) in records:
                chosen.append(records[(area, sex)])
            elif sex == "both" and (area, "female") in records and (area, "male") in records:
                f, m = records[(area, "female")], records[(area, "male")]
                chosen.append(
                    PopulationRecord(area, "both", f.deaths + m.deaths, f.exposures + m.exposures)
                )
    try:
        return MortalityDataset(tuple(chosen), AgeGrid(n_ages))
    except DataError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def write_dataset(dataset: MortalityDataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_COLUMNS)
        for rec in dataset.populations:
            for age in range(rec.n_ages):
                w.writerow(
                    [rec.id, rec.sex, age, int(rec.deaths[age]), repr(float(rec.exposures[age]))]
                )


# -- fitted schedules -------------------------------------------------------


def _fmt(value: float, decimals: int) -> str:
    s = f"{value:.{decimals}f}"
    return "0." + "0" * decimals if s == "-0." + "0" * decimals else s


def write_fit(fits: FitResult | Sequence[FitResult], path) -> None:
    """Rows ordered by the given population order, then age."""
    if isinstance(fits, FitResult):
        fits = [fits]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIT_COLUMNS)
        for fit in fits:
            for age, est in enumerate(fit.log_rates):
                lower = _fmt(fit.lower[age], FIT_DECIMALS) if fit.has_intervals else ""
                upper = _fmt(fit.upper[age], FIT_DECIMALS) if fit.has_intervals else ""
                w.writerow(
                    [fit.population_id, fit.sex, age, _fmt(est, FIT_DECIMALS), lower, upper, fit.model]
                )


def read_fit(path) -> list[FitResult]:
    groups: dict = {}
    for lineno, row in _rows(path, FIT_COLUMNS):
        key = (row["area_id"], _sex(row["sex"], path, lineno), row["model"])
        age = _int(row["age"], "age", path, lineno)
        g = groups.setdefault(key, {"ages": [], "est": [], "lo": [], "hi": []})
        if age != len(g["ages"]):
            raise SchemaError(f"{path}: line {lineno}: expected age {len(g['ages'])}, got {age}")
        g["ages"].append(age)
        g["est"].append(_float(row["log_rate_hat"], "log_rate_hat", path, lineno))
        if (row["lower"] == "") != (row["upper"] == ""):
            raise SchemaError(f"{path}: line {lineno}: lower and upper must both be set or empty")
        g["lo"].append(None if row["lower"] == "" else _float(row["lower"], "lower", path, lineno))
        g["hi"].append(None if row["upper"] == "" else _float(row["upper"], "upper", path, lineno))
    fits = []
    for (area, sex, model), g in groups.items():
        has = all(v is not None for v in g["lo"])
        fits.append(
            FitResult(
                area,
                sex,
                model,
                np.array(g["est"]),
                np.array(g["lo"], dtype=float) if has else None,
                np.array(g["hi"], dtype=float) if has else None,
            )
        )
    return fits


# -- simulation reference ---------------------------------------------------


def read_reference(path, n_ages: int = 100):
    from smallmort.simulation import ReferenceSchedule

    share, rate = {}, {}
    last = 1
    for lineno, row in _rows(path, REFERENCE_COLUMNS):
        last = lineno
        age = _int(row["age"], "age", path, lineno)
        if not 0 <= age < n_ages:
            raise SchemaError(f"{path}: line {lineno}: age {age} outside 0..{n_ages - 1}")
        if age in share:
            raise SchemaError(f"{path}: line {lineno}: duplicate row for age {age}")
        share[age] = _float(row["population_share"], "population_share", path, lineno)
        rate[age] = _float(row["rate"], "rate", path, lineno)
        if share[age] < 0 or rate[age] <= 0:
            raise SchemaError(f"{path}: line {lineno}: share must be >= 0 and rate > 0")
    _check_ages(share, n_ages, path, "reference", last)
    s = np.array([share[a] for a in range(n_ages)])
    try:
        return ReferenceSchedule(s, np.array([rate[a] for a in range(n_ages)]), Path(path).stem)
    except ValueError as exc:
        raise SchemaError(f"{path}: line {last}: {exc}") from None


def write_reference(reference, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REFERENCE_COLUMNS)
        for age, (s, r) in enumerate(zip(reference.age_structure, reference.true_rates)):
            w.writerow([age, repr(float(s)), repr(float(r))])


# -- benchmark tables -------------------------------------------------------


def write_metrics(rows, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for r in rows:
            ok = r.status == "ok"
            w.writerow(
                [
                    r.seed,
                    int(r.size) if float(r.size).is_integer() else r.size,
                    r.model,
                    _fmt(r.rbias, METRIC_DECIMALS) if ok else "",
                    _fmt(r.rmse, METRIC_DECIMALS) if ok else "",
                    _fmt(r.mape, METRIC_DECIMALS) if ok else "",
                    r.n_ages_used,
                    r.status,
                ]
            )


def write_timings(rows, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("seed", "size", "model", "seconds"))
        for r in rows:
            w.writerow([r.seed, int(r.size), r.model, f"{r.elapsed:.3f}"])
