import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from smallmort.charts import emit_chart
from smallmort.core import FitResult, PopulationRecord, naive_rates

SVG = "{http://www.w3.org/2000/svg}"


def groups(path):
    root = ET.parse(path).getroot()
    return {g.get("id"): g for g in root.iter(f"{SVG}g") if g.get("id")}


def markers(group):
    # Marker positions are emitted as <use> elements referencing one path.
    return len(list(group.iter(f"{SVG}use")))


def sparse_record(rng):
    e = np.full(100, 200.0)
    y = rng.poisson(e * np.exp(np.linspace(-8, -1, 100)))
    return PopulationRecord("a", "female", y, e)


def test_no_fits(tmp_path, standard, rng):
    rec = sparse_record(rng)
    p = emit_chart(naive_rates(rec), [], standard, tmp_path / "c.svg")
    g = groups(p)
    assert {"observed", "standard"} <= set(g)
    assert not any(k.startswith("fit-") for k in g)
    n_obs = int(np.sum(rec.deaths > 0))
    assert markers(g["observed"]) == n_obs
    if n_obs < 100:
        assert markers(g["no-death-ticks"]) == 100 - n_obs


def test_all_zero_deaths(tmp_path, standard):
    rec = PopulationRecord("a", "both", np.zeros(100, int), np.full(100, 10.0))
    g = groups(emit_chart(naive_rates(rec), [], standard, tmp_path / "c.svg"))
    assert "observed" not in g
    assert markers(g["no-death-ticks"]) == 100


def test_two_models_distinct_and_in_legend(tmp_path, standard, rng):
    lr = standard.log_rates
    fits = [
        FitResult("a", "female", "topals", lr + 0.1),
        FitResult("a", "female", "dyn-poisson", lr - 0.1, lr - 0.3, lr + 0.1),
    ]
    p = emit_chart(naive_rates(sparse_record(rng)), fits, standard, tmp_path / "c.svg")
    g = groups(p)
    styles = [g["fit-topals"].find(f".//{SVG}path").get("style"), g["fit-dyn-poisson"].find(f".//{SVG}path").get("style")]
    assert styles[0] != styles[1]
    text = p.read_text()
    assert "topals" in re.sub(r'id="[^"]*"', "", text)
    assert "dyn-poisson" in re.sub(r'id="[^"]*"', "", text)
    assert "<image" not in text and "xlink:href=\"http" not in text


def test_output_is_deterministic(tmp_path, standard, rng):
    obs = naive_rates(sparse_record(rng))
    a = emit_chart(obs, [], standard, tmp_path / "a.svg", title="t").read_bytes()
    b = emit_chart(obs, [], standard, tmp_path / "b.svg", title="t").read_bytes()
    assert a == b


def test_mismatched_grid_rejected(tmp_path, standard):
    with pytest.raises(ValueError):
        emit_chart(None, [FitResult("a", "both", "topals", np.zeros(50))], standard, tmp_path / "c.svg")
