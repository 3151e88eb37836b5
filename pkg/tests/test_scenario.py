from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import all_valid, make_grid, make_record
from greencool.errors import ArgumentError, ConfigError
from greencool.metrics import CityInputs, city_metrics, weighted_mean
from greencool.scenario import (RegionalBounds, ScenarioCity, ScenarioConfig, enhance_ce, enhance_ndvi,
                                evaluate_city, format_value, idealize_distribution, idealized_population,
                                regional_upper_bounds, scenario_run)


def make_city(city_id, ndvi, pop, slope, koppen="tropical", region="north", intercept=40.0):
    ndvi = np.asarray(ndvi, dtype=float)
    pop = np.asarray(pop, dtype=float)
    rec = make_record(city_id, koppen=koppen, global_region=region, population=float(pop.sum()),
                      area_km2=float(ndvi.size))
    inputs = CityInputs([make_grid(ndvi)], [make_grid(intercept + slope * ndvi)], make_grid(pop),
                        make_grid(np.zeros(ndvi.shape)))
    m = city_metrics(inputs, rec)
    return ScenarioCity(rec, m, make_grid(ndvi), make_grid(pop), all_valid(ndvi.shape))


def _bounds(cities):
    return regional_upper_bounds((c.metrics, c.record) for c in cities)


class TestRegionalBounds:
    def test_grouping(self):
        ms = [make_city(f"t{i}", [[0.1, v]], [[1, 1]], -10) for i, v in enumerate([0.8, 0.6, 0.7])]
        ms.append(make_city("a0", [[0.0, 0.3]], [[1, 1]], -5, koppen="arid"))
        b = _bounds(ms)
        assert b["tropical"].ndvi_max.tolist() == [0.6, 0.7, 0.8]
        assert b["arid"].ndvi_max.tolist() == [0.3]
        assert b["arid"].ce == pytest.approx([0.05], rel=1e-12)

    def test_missing_region(self):
        with pytest.raises(ConfigError):
            RegionalBounds()["continental"]

    def test_city_without_region_raises(self):
        city = make_city("c", [[0.1, 0.5]], [[1, 1]], -10, koppen="arid")
        other = make_city("d", [[0.1, 0.5]], [[1, 1]], -10, koppen="tropical")
        with pytest.raises(ConfigError):
            evaluate_city(city, _bounds([other]), ScenarioConfig())


class TestEnhance:
    def test_ndvi_raise_only(self):
        g = make_grid([[0.2, 0.6, 0.5]])
        assert enhance_ndvi(g, all_valid((1, 3)), 0.5).values.tolist() == [[0.5, 0.6, 0.5]]

    def test_ndvi_zero_target_is_identity(self):
        g = make_grid([[0.0, 0.3]])
        assert enhance_ndvi(g, all_valid((1, 2)), 0.0) == g

    def test_ndvi_invalid_cells_untouched(self):
        g = make_grid([[0.2, 0.1]], valid=[[True, False]])
        out = enhance_ndvi(g, all_valid((1, 2)).from_mask([[True, False]]), 0.5)
        assert out.values.tolist() == [[0.5, -9999.0]]

    def test_ce_examples(self):
        assert enhance_ce(0.05, [0.05, 0.13, 0.2], 50) == pytest.approx(0.13)
        assert enhance_ce(0.22, [0.05, 0.13, 0.2], 90) == 0.22
        assert enhance_ce(0.09, [0.09], 70) == 0.09


class TestIdealize:
    def test_rank_matching(self):
        pairs = idealize_distribution([0.2, 0.9, 0.4], [5, 1, 3])
        assert pairs.tolist() == [[5, 0.9], [3, 0.4], [1, 0.2]]
        assert idealized_population([0.2, 0.9, 0.4], [5, 1, 3]).tolist() == [1, 5, 3]

    def test_already_cosorted(self):
        ndvi, pop = [0.1, 0.5, 0.9], [10, 20, 30]
        assert idealized_population(ndvi, pop).tolist() == pop

    def test_length_mismatch(self):
        with pytest.raises(ArgumentError):
            idealize_distribution([0.1, 0.2], [1])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1000)), min_size=1, max_size=6))
    def test_beats_every_pairing(self, cells):
        ndvi = np.array([c[0] for c in cells])
        pop = np.array([c[1] for c in cells], dtype=float)
        if pop.sum() == 0:
            pop[0] = 1.0
        local = (ndvi - ndvi.min()) * 10.0
        best = weighted_mean(local, idealized_population(ndvi, pop))
        assert sorted(idealized_population(ndvi, pop)) == sorted(pop)
        for perm in itertools.permutations(pop):
            cb = weighted_mean(local, np.array(perm))
            assert best >= cb - 1e-12 * max(1.0, abs(cb))

    def test_uniform_population_changes_nothing(self):
        ndvi = np.random.default_rng(0).uniform(0, 1, 20)
        pop = np.full(20, 7.0)
        local = ndvi * 3
        assert weighted_mean(local, idealized_population(ndvi, pop)) == weighted_mean(local, pop)


SHEET_SLOPES = {"s1": -12.0, "s2": -20.0, "s3": -7.0}


def _spreadsheet(cities, p, mode, idealize):
    """Independent scenario arithmetic: explicit loops, np.percentile, np.polyfit slopes."""
    groups = {}
    for c in cities:
        x = c.ndvi.values.ravel().tolist()
        y = (40.0 + SHEET_SLOPES[c.city_id] * c.ndvi.values).ravel().tolist()
        slope = np.polyfit(x, y, 1)[0]
        groups.setdefault(c.record.koppen, []).append((max(x), -slope / 100.0))
    out = {}
    for c in cities:
        x = c.ndvi.values.ravel().tolist()
        pop = c.pop.values.ravel().tolist()
        maxima = [g[0] for g in groups[c.record.koppen]]
        ces = [g[1] for g in groups[c.record.koppen]]
        own_ce = -np.polyfit(x, (40.0 + SHEET_SLOPES[c.city_id] * np.array(x)).tolist(), 1)[0] / 100.0
        target = float(np.percentile(maxima, p))
        ce = max(own_ce, float(np.percentile(ces, p)))
        ref = min(x)
        new_x = x if mode == "ce_only" else [max(v, target) for v in x]
        mag = 100.0 * (own_ce if mode == "ndvi_only" else ce)
        if idealize:
            by_green = sorted(range(len(new_x)), key=lambda i: -new_x[i])
            pop_sorted = sorted(pop, reverse=True)
            weights = [0.0] * len(pop)
            for rank, i in enumerate(by_green):
                weights[i] = pop_sorted[rank]
        else:
            weights = pop
        local = [(v - ref) * mag for v in new_x]
        cc = sum(local) / len(local)
        cb = sum(a * w for a, w in zip(local, weights)) / sum(weights)
        out[c.city_id] = (cc, cb)
    return out


class TestEvaluate:
    @pytest.fixture
    def three_cities(self):
        rng = np.random.default_rng(2024)
        specs = [("s1", "tropical", "north"), ("s2", "tropical", "south"), ("s3", "arid", "south")]
        cities = []
        for cid, koppen, region in specs:
            ndvi = np.round(rng.uniform(0.05, 0.8, (3, 3)), 3)
            pop = rng.integers(1, 900, (3, 3)).astype(float)
            cities.append(make_city(cid, ndvi, pop, SHEET_SLOPES[cid], koppen, region))
        return cities

    def test_matches_spreadsheet(self, three_cities):
        config = ScenarioConfig(percentiles=(0, 50, 90), idealize=(False, True))
        res = scenario_run(three_cities, _bounds(three_cities), config)
        assert len(res.city_rows) == 3 * 3 * 3 * 2
        for p in config.percentiles:
            for mode in config.modes:
                for ideal in (False, True):
                    expected = _spreadsheet(three_cities, p, mode, ideal)
                    for row in res.city_rows:
                        if (row["percentile"], row["mode"], row["idealize"]) == (p, mode, ideal):
                            cc, cb = expected[row["city_id"]]
                            assert row["potential_cc"] == pytest.approx(cc, rel=1e-9)
                            assert row["potential_cb"] == pytest.approx(cb, rel=1e-9)

    def test_baseline_columns(self, three_cities):
        res = scenario_run(three_cities, _bounds(three_cities), ScenarioConfig(idealize=(False, True)))
        for row in res.city_rows:
            m = next(c.metrics for c in three_cities if c.city_id == row["city_id"])
            assert row["baseline_cc"] == m.cc and row["baseline_cb"] == m.cb

    def test_aggregate_layout(self, three_cities):
        config = ScenarioConfig(percentiles=(50, 90), idealize=(False,))
        res = scenario_run(three_cities, _bounds(three_cities), config)
        keys = {(r["percentile"], r["mode"], r["subset"], r["metric"]) for r in res.aggregate_rows}
        assert ("baseline", "baseline", "all", "cc") in keys
        assert (90.0, "both", "south", "cb") in keys
        # 1 baseline + 2 percentiles x 3 modes, each over 3 subsets x 2 metrics
        assert len(res.aggregate_rows) == 7 * 3 * 2
        cols = res.aggregate_columns
        for c in ("q2_5", "q25", "q50", "q75", "q97_5", "mean", "gini_unweighted", "gini_density", "gini_size"):
            assert c in cols
        row = next(r for r in res.aggregate_rows if r["percentile"] == "baseline" and r["subset"] == "all"
                   and r["metric"] == "cc")
        ccs = [c.metrics.cc for c in three_cities]
        assert row["q50"] == pytest.approx(np.median(ccs), rel=1e-12)
        assert row["n"] == 3

    def test_noop_reproduces_baseline(self, three_cities):
        floor = min(c.metrics.ce for c in three_cities) - 1.0
        bounds = RegionalBounds({k: type(v)(np.zeros_like(v.ndvi_max), np.full_like(v.ce, floor))
                                 for k, v in _bounds(three_cities).items()})
        for c in three_cities:
            for row in evaluate_city(c, bounds, ScenarioConfig(percentiles=(50,))):
                assert format_value(row["potential_cc"]) == format_value(c.metrics.cc)
                assert format_value(row["potential_cb"]) == format_value(c.metrics.cb)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_monotone_and_dominant(self, seed):
        rng = np.random.default_rng(seed)
        cities = []
        for i in range(4):
            ndvi = rng.uniform(0, 0.9, (4, 4))
            pop = rng.integers(0, 500, (4, 4)).astype(float) + 1
            cities.append(make_city(f"h{i}", ndvi, pop, float(rng.uniform(-25, -2)), ("tropical", "arid")[i % 2]))
        config = ScenarioConfig(percentiles=(0, 25, 50, 75, 100), idealize=(False, True))
        rows = scenario_run(cities, _bounds(cities), config).city_rows
        table = {(r["city_id"], r["percentile"], r["mode"], r["idealize"]): r for r in rows}
        for c in cities:
            for ideal in (False, True):
                for mode in config.modes:
                    seq = [table[c.city_id, p, mode, ideal] for p in config.percentiles]
                    for a, b in zip(seq, seq[1:]):
                        assert b["potential_cc"] >= a["potential_cc"]
                        assert b["potential_cb"] >= a["potential_cb"]
                for p in config.percentiles:
                    both = table[c.city_id, p, "both", ideal]
                    for single in ("ndvi_only", "ce_only"):
                        other = table[c.city_id, p, single, ideal]
                        assert both["potential_cc"] >= other["potential_cc"]
                        assert both["potential_cb"] >= other["potential_cb"]
                    assert both["potential_cc"] >= c.metrics.cc
                    ideal_row = table[c.city_id, p, "both", True]
                    assert ideal_row["potential_cb"] >= table[c.city_id, p, "both", False]["potential_cb"] - 1e-12


class TestConfig:
    def test_normalizes_percentiles(self):
        assert ScenarioConfig(percentiles=(90, 50, 50)).percentiles == (50.0, 90.0)

    @pytest.mark.parametrize("kw", [{"percentiles": (101,)}, {"percentiles": ()}, {"modes": ("greener",)},
                                    {"reference": "max"}, {"negative_policy": "drop"}])
    def test_rejects(self, kw):
        with pytest.raises(ArgumentError):
            ScenarioConfig(**kw)


@pytest.mark.parametrize("value, text", [(True, "on"), (False, "off"), (float("nan"), ""), (0.1, "0.10000000000000001"),
                                         (50.0, "50"), ("x", "x"), (3, "3")])
def test_format_value(value, text):
    assert format_value(value) == text
