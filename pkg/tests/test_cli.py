from __future__ import annotations

import csv
import os
import shutil
import subprocess
import sys

import pytest

from greencool import cli, kernels, pipeline
from greencool.citymodel import load_manifest
from greencool.errors import ConfigError
from greencool.grid import read_ascii_grid, write_ascii_grid
from greencool.inequality import gini_brute_force


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _copy(manifest, tmp_path):
    dst = tmp_path / "corpus"
    shutil.copytree(manifest.parent, dst)
    return dst / manifest.name


@pytest.fixture(scope="module")
def small_run(small_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("out")
    m = str(small_corpus)
    codes = [
        cli.main(["validate", "--manifest", m]),
        cli.main(["compute", "--manifest", m, "--out", str(out), "--emit-local-maps"]),
        cli.main(["gini", "--manifest", m, "--out", str(out), "--emit-lorenz-svg"]),
        cli.main(["scenario", "--manifest", m, "--out", str(out), "--idealize", "both", "--percentiles", "50,90"]),
    ]
    return codes, out


class TestPipeline:
    def test_exit_codes(self, small_run):
        assert small_run[0] == [0, 0, 0, 0]

    def test_outputs(self, small_run):
        out = small_run[1]
        for name in ("metrics.csv", "errors.csv", "gini.csv", "drivers.csv", "scenario_city.csv",
                     "scenario_aggregate.csv", "lorenz_all_cc_unweighted.csv", "lorenz_south_cb_size.svg"):
            assert (out / name).is_file(), name
        metrics = _rows(out / "metrics.csv")
        assert [r["city_id"] for r in metrics] == sorted(r["city_id"] for r in metrics)
        assert len(metrics) == 6
        assert _rows(out / "errors.csv") == []
        assert (out / "maps" / "c000_local_cc.asc").is_file()

    def test_local_map_mean_is_cc(self, small_run):
        out = small_run[1]
        row = _rows(out / "metrics.csv")[0]
        g = read_ascii_grid(out / "maps" / f"{row['city_id']}_local_cc.asc")
        assert g.values[g.valid].mean() == pytest.approx(float(row["cc"]), rel=1e-12)

    def test_gini_matches_brute_force(self, small_run, small_corpus):
        out = small_run[1]
        metrics = {r["city_id"]: r for r in _rows(out / "metrics.csv")}
        by_id = load_manifest(small_corpus).by_id()
        g = {(r["subset"], r["metric"], r["scheme"]): r for r in _rows(out / "gini.csv")}
        ids = sorted(metrics)
        vals = [float(metrics[c]["cb"]) for c in ids]
        dens = [by_id[c].population / by_id[c].area_km2 for c in ids]
        row = g["all", "cb", "density"]
        assert float(row["gini"]) == pytest.approx(gini_brute_force(vals, dens), abs=1e-12)
        assert int(row["n"]) == 6
        assert len(g) == 3 * 6 * 3

    def test_scenario_rows(self, small_run):
        rows = _rows(small_run[1] / "scenario_city.csv")
        assert len(rows) == 6 * 2 * 3 * 2
        assert {r["idealize"] for r in rows} == {"on", "off"}
        agg = _rows(small_run[1] / "scenario_aggregate.csv")
        assert agg[0]["percentile"] == "baseline"


class TestDeterminismAndIsolation:
    def test_parallel_widths_agree(self, small_corpus, tmp_path):
        for width in (1, 3):
            assert cli.main(["compute", "--manifest", str(small_corpus), "--out", str(tmp_path / f"p{width}"),
                             "--parallelism", str(width)]) == 0
        assert (tmp_path / "p1" / "metrics.csv").read_bytes() == (tmp_path / "p3" / "metrics.csv").read_bytes()

    def test_one_malformed_raster(self, small_corpus, tmp_path):
        manifest = _copy(small_corpus, tmp_path)
        rec = load_manifest(manifest).cities[2]
        bad = manifest.parent / rec.pop_path
        bad.write_text(bad.read_text().replace("NROWS 12", "NROWS twelve"))
        out = tmp_path / "out"
        assert cli.main(["compute", "--manifest", str(manifest), "--out", str(out)]) == pipeline.EXIT_PARTIAL
        assert len(_rows(out / "metrics.csv")) == 5
        errors = _rows(out / "errors.csv")
        assert [(e["city_id"], e["error"]) for e in errors] == [(rec.city_id, "ParseError")]
        clean = tmp_path / "clean"
        cli.main(["compute", "--manifest", str(small_corpus), "--out", str(clean)])
        good = {r["city_id"]: r for r in _rows(clean / "metrics.csv")}
        for r in _rows(out / "metrics.csv"):
            assert r == good[r["city_id"]]

    @pytest.mark.skipif(kernels.numba_impl is None, reason="numba unavailable")
    def test_backends_agree(self, small_corpus, tmp_path):
        for flag in ("0", "1"):
            env = dict(os.environ, GREENCOOL_DISABLE_NUMBA=flag)
            subprocess.run([sys.executable, "-m", "greencool", "compute", "--manifest", str(small_corpus),
                            "--out", str(tmp_path / flag)], env=env, check=True)
        assert (tmp_path / "0" / "metrics.csv").read_bytes() == (tmp_path / "1" / "metrics.csv").read_bytes()

    def test_size_filter_is_soft(self, small_corpus, tmp_path):
        out = tmp_path / "out"
        assert cli.main(["compute", "--manifest", str(small_corpus), "--out", str(out), "--min-cells", "10000"]) == 0
        assert _rows(out / "metrics.csv") == []
        assert {e["stage"] for e in _rows(out / "errors.csv")} == {"size_filter"}


class TestValidate:
    def test_clean(self, small_corpus, capsys):
        assert cli.main(["validate", "--manifest", str(small_corpus)]) == 0
        assert capsys.readouterr().out == ""

    def test_missing_population_raster(self, small_corpus, tmp_path):
        manifest = _copy(small_corpus, tmp_path)
        rec = load_manifest(manifest).cities[1]
        (manifest.parent / rec.pop_path).unlink()
        findings, _ = pipeline.run_validate(manifest)
        assert [(f["city_id"], f["check"], f["field"]) for f in findings] == [(rec.city_id, "file", "pop")]
        assert cli.main(["validate", "--manifest", str(manifest)]) == 1

    def test_misaligned_water(self, small_corpus, tmp_path):
        manifest = _copy(small_corpus, tmp_path)
        rec = load_manifest(manifest).cities[0]
        path = manifest.parent / rec.water_path
        g = read_ascii_grid(path)
        shifted = type(g)(type(g.header)(g.header.ncols, g.header.nrows, 0.5, 0.0, 1.0, -9999.0), g.values, g.valid)
        write_ascii_grid(shifted, path)
        findings, _ = pipeline.run_validate(manifest)
        assert len(findings) == 1
        assert findings[0]["check"] == "alignment" and findings[0]["field"] == "xllcorner"
        assert "water_frac" in findings[0]["message"]

    def test_mask_statistics(self, small_corpus):
        _, stats = pipeline.run_validate(small_corpus)
        assert len(stats) == 6
        assert all(s["removed_water"] > 0 for s in stats)


class TestConfig:
    def test_file_and_flag_precedence(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# defaults\nmanifest = m.csv\nmin-cells = 50\nreference=zero\n")
        args = cli.make_parser().parse_args(["compute", "--config", str(cfg), "--min-cells", "40"])
        opts = cli.resolve_options(args)
        assert opts["min-cells"] == 40
        assert opts["reference"] == "zero"
        assert opts["manifest"] == "m.csv"
        assert opts["parallelism"] == 1
        rc = cli.build_run_config(opts)
        assert rc.reference == "zero" and rc.min_valid_cells == 40

    def test_config_drives_run(self, small_corpus, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"manifest={small_corpus}\nout={tmp_path / 'o'}\nreference=zero\n")
        assert cli.main(["compute", "--config", str(cfg)]) == 0
        assert {r["reference"] for r in _rows(tmp_path / "o" / "metrics.csv")} == {"zero"}

    @pytest.mark.parametrize("text", ["bogus=1\n", "no equals sign\n", "min-cells=many\n"])
    def test_bad_config_file(self, tmp_path, text):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("manifest=m.csv\n" + text)
        assert cli.main(["compute", "--config", str(cfg)]) == pipeline.EXIT_CONFIG

    def test_missing_manifest(self, tmp_path, capsys):
        assert cli.main(["compute", "--manifest", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == 2
        assert "error" in capsys.readouterr().err

    def test_manifest_required(self):
        assert cli.main(["gini"]) == pipeline.EXIT_CONFIG

    @pytest.mark.parametrize("argv", [["scenario", "--manifest", "m.csv", "--percentiles", "50,abc"],
                                      ["compute", "--manifest", "m.csv", "--parallelism", "0"],
                                      ["gini", "--manifest", "m.csv", "--schemes", "gdp"]])
    def test_invalid_options(self, argv):
        with pytest.raises(ConfigError):
            cli.build_run_config(cli.resolve_options(cli.make_parser().parse_args(argv)))

    def test_synth_subcommand(self, tmp_path, capsys):
        assert cli.main(["synth", "--out", str(tmp_path / "s"), "--n-cities", "2", "--rows", "9", "--cols", "9",
                         "--months", "1", "--seed", "3"]) == 0
        assert capsys.readouterr().out.strip().endswith("manifest.csv")
        assert len(load_manifest(tmp_path / "s" / "manifest.csv")) == 2
