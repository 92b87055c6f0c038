"""Regenerate the synthetic files shipped in src/smallmort/data.

No proprietary data is embedded: the standard and the reference schedule are
Heligman-Pollard curves with parameters chosen to resemble a pooled
high-quality standard and a large Brazilian state, respectively. The age
structure is the stationary population of the reference rates with 1.2%
annual growth.

    python scripts/make_bundled_data.py
"""

from pathlib import Path

import numpy as np

from smallmort.core import StandardSchedule
from smallmort.io import write_dataset, write_reference, write_standards
from smallmort.simulation import ReferenceSchedule, simulate_dataset

DATA = Path(__file__).resolve().parents[1] / "src" / "smallmort" / "data"
AGES = np.arange(100)


def heligman_pollard(A, B, C, D, E, F, G, H, ages=AGES):
    x = ages.astype(float)
    with np.errstate(divide="ignore"):
        hump = np.where(x > 0, D * np.exp(-E * (np.log(np.maximum(x, 1e-12)) - np.log(F)) ** 2), 0.0)
    odds = A ** ((x + B) ** C) + hump + G * H**x
    q = odds / (1.0 + odds)
    return -np.log1p(-q)


def main():
    female = heligman_pollard(0.0006, 0.02, 0.11, 0.0001, 8.0, 21.0, 0.00003, 1.105)
    male = heligman_pollard(0.0007, 0.02, 0.11, 0.0009, 10.0, 22.0, 0.00006, 1.10)
    standards = [
        StandardSchedule(np.log(female), "synthetic-hmd", "female"),
        StandardSchedule(np.log(male), "synthetic-hmd", "male"),
    ]
    write_standards(standards, DATA / "standard.csv")

    rates = heligman_pollard(0.0015, 0.03, 0.12, 0.0012, 9.0, 22.0, 0.00008, 1.095)
    survivors = np.exp(-np.concatenate([[0.0], np.cumsum(rates)[:-1]]))
    share = survivors * np.exp(-0.012 * AGES)
    share /= share.sum()
    reference = ReferenceSchedule(share, rates, "synthetic-sp")
    write_reference(reference, DATA / "reference.csv")

    # Toy dataset: two areas, both sexes, drawn from the sex-specific standards.
    from smallmort.core import MortalityDataset, PopulationRecord

    records = []
    for area, size, seed in (("area_a", 4000, 11), ("area_b", 25000, 12)):
        for sex, rates_s in (("female", female), ("male", male)):
            ref = ReferenceSchedule(share, rates_s, sex)
            rec = simulate_dataset(ref, [size], seed + (sex == "male")).populations[0]
            records.append(PopulationRecord(area, sex, rec.deaths, rec.exposures))
    write_dataset(MortalityDataset(tuple(records)), DATA / "toy_dataset.csv")


if __name__ == "__main__":
    main()
