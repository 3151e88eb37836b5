from __future__ import annotations

import numpy as np
import pytest

from greencool.citymodel import CityRecord
from greencool.grid import Grid, ValidCellSet
from greencool.synth import SynthSpec, run_synth


def make_grid(values, valid=None, **header_kw) -> Grid:
    return Grid.from_array(np.asarray(values, dtype=np.float64), valid=valid, **header_kw)


def all_valid(shape) -> ValidCellSet:
    return ValidCellSet.from_mask(np.ones(shape, dtype=bool))


def make_record(city_id="x001", **kw) -> CityRecord:
    base = dict(
        city_id=city_id, name="Test", country="Nowhere", global_region="north", continent="europe",
        koppen="temperate", area_km2=100.0, population=50000.0, gdp_per_capita=20000.0, mat=12.0,
        map_mm=700.0, elev_range=50.0, ndvi_paths=("n.asc",), lst_paths=("l.asc",), pop_path="p.asc",
        water_path="w.asc", qa_path=None,
    )
    base.update(kw)
    return CityRecord(**base)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """Default 20-city, 2-region synthetic corpus; returns the manifest path."""
    return run_synth(SynthSpec(), tmp_path_factory.mktemp("corpus"))


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Six single-month 12x12 cities for fast CLI tests."""
    spec = SynthSpec(n_cities=6, nrows=12, ncols=12, months=1, seed=7)
    return run_synth(spec, tmp_path_factory.mktemp("small"))


_acceptance: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "acceptance" not in report.keywords:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or report.failed:
        if _acceptance.get(name) != "FAIL":
            _acceptance[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance):
        # test_cNN_some_title -> "NN some title"
        number, _, title = name.removeprefix("test_c").partition("_")
        terminalreporter.write_line(f"{_acceptance[name]}  criterion {int(number):2d}: {title.replace('_', ' ')}")
