"""Command-line entry point: ``greencool {validate,compute,gini,scenario,synth}``.

Every flag can also be given in a ``--config`` file of ``key=value`` lines
(keys are flag names without the leading dashes); flags win over the file.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .errors import ConfigError, GreencoolError
from .inequality import WeightScheme
from .scenario import DEFAULT_PERCENTILES, ScenarioConfig
from .synth import SynthSpec, run_synth

logger = logging.getLogger("greencool")

DEFAULTS = {
    "manifest": None,
    "out": "out",
    "reference": "min",
    "min-cells": 30,
    "percentiles": ",".join(str(p) for p in DEFAULT_PERCENTILES),
    "mode": "all",
    "idealize": "off",
    "schemes": "all",
    "parallelism": 1,
    "seed": 42,
    "emit-local-maps": False,
    "emit-lorenz-svg": False,
    "negative-ce": "exclude",
    "scenario-reference": "min",
    "n-cities": 20,
    "rows": 30,
    "cols": 30,
    "noise": 0.0,
    "months": 12,
    "ndvi-model": "mixed",
    "pop-model": "mixed",
    "koppen": "tropical,temperate",
}
_BOOL = {"emit-local-maps", "emit-lorenz-svg"}
_INT = {"min-cells", "parallelism", "seed", "n-cities", "rows", "cols", "months"}
_FLOAT = {"noise"}
_MODE_MAP = {"ndvi": ("ndvi_only",), "ce": ("ce_only",), "both": ("both",), "all": ("ndvi_only", "ce_only", "both")}
_IDEALIZE_MAP = {"off": (False,), "on": (True,), "both": (False, True)}


def read_config_file(path) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("_", "-")
        if key not in DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _coerce(key, value):
    if value is None:
        return None
    try:
        if key in _BOOL:
            if isinstance(value, bool):
                return value
            v = str(value).strip().lower()
            if v not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(value)
            return v in ("1", "true", "yes", "on")
        if key in _INT:
            return int(value)
        if key in _FLOAT:
            return float(value)
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {value!r}") from None
    return value


def resolve_options(args: argparse.Namespace) -> dict:
    file_opts = read_config_file(args.config) if getattr(args, "config", None) else {}
    opts = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None and flag is not False:
            opts[key] = _coerce(key, flag)
        elif key in file_opts:
            opts[key] = _coerce(key, file_opts[key])
        else:
            opts[key] = default
    return opts


def _choice(key, value, allowed):
    if value not in allowed:
        raise ConfigError(f"--{key} must be one of {sorted(allowed)}, got {value!r}")
    return allowed[value]


def build_run_config(opts: dict) -> pipeline.RunConfig:
    if opts["manifest"] is None:
        raise ConfigError("--manifest is required")
    reference = _choice("reference", opts["reference"], {"min": "city_min", "zero": "zero"})
    negative = _choice("negative-ce", opts["negative-ce"], {"exclude": True, "clamp": False})
    if opts["schemes"] == "all":
        schemes = tuple(WeightScheme)
    else:
        try:
            schemes = tuple(WeightScheme.parse(s.strip()) for s in opts["schemes"].split(","))
        except GreencoolError as exc:
            raise ConfigError(str(exc)) from None
    try:
        percentiles = tuple(float(p) for p in str(opts["percentiles"]).split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"invalid --percentiles {opts['percentiles']!r}") from None
    scenario = ScenarioConfig(
        percentiles=percentiles,
        modes=_choice("mode", opts["mode"], _MODE_MAP),
        idealize=_choice("idealize", opts["idealize"], _IDEALIZE_MAP),
        reference=_choice("scenario-reference", opts["scenario-reference"],
                          {"min": "city_min_original", "zero": "zero"}),
        schemes=schemes,
        negative_policy="exclude" if negative else "clamp",
    )
    if opts["parallelism"] < 1:
        raise ConfigError("--parallelism must be >= 1")
    if opts["min-cells"] < 1:
        raise ConfigError("--min-cells must be >= 1")
    return pipeline.RunConfig(
        manifest=Path(opts["manifest"]),
        out=Path(opts["out"]),
        reference=reference,
        exclude_negative_ce=negative,
        min_valid_cells=opts["min-cells"],
        scenario=scenario,
        schemes=schemes,
        parallelism=opts["parallelism"],
        emit_local_maps=opts["emit-local-maps"],
        emit_lorenz_svg=opts["emit-lorenz-svg"],
        seed=opts["seed"],
    )


def build_synth_spec(opts: dict) -> SynthSpec:
    return SynthSpec(
        n_cities=opts["n-cities"],
        nrows=opts["rows"],
        ncols=opts["cols"],
        ndvi_model=opts["ndvi-model"],
        pop_model=opts["pop-model"],
        lst_noise_sd=opts["noise"],
        koppen=tuple(k.strip() for k in opts["koppen"].split(",") if k.strip()),
        months=opts["months"],
        seed=opts["seed"],
    )


def _add_common(p):
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--manifest", help="manifest CSV")
    p.add_argument("--out", help="output directory (default: out)")
    p.add_argument("--parallelism", type=int, help="worker processes (default: 1)")
    p.add_argument("--min-cells", type=int, help="minimum valid cells per city (default: 30)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="greencool", description="Urban green-space cooling metrics.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check rasters, alignment and masks without computing metrics")
    _add_common(p)

    p = sub.add_parser("compute", help="per-city cooling metrics -> metrics.csv")
    _add_common(p)
    p.add_argument("--reference", choices=("min", "zero"))
    p.add_argument("--emit-local-maps", action="store_true", default=None)

    p = sub.add_parser("gini", help="between-city Gini and Lorenz curves from metrics.csv")
    _add_common(p)
    p.add_argument("--schemes", help="unweighted,density,size or all")
    p.add_argument("--negative-ce", choices=("exclude", "clamp"))
    p.add_argument("--emit-lorenz-svg", action="store_true", default=None)

    p = sub.add_parser("scenario", help="potential cooling under enhancement scenarios")
    _add_common(p)
    p.add_argument("--percentiles", help="comma-separated, default 50,60,70,80,90")
    p.add_argument("--mode", choices=("ndvi", "ce", "both", "all"))
    p.add_argument("--idealize", choices=("on", "off", "both"))
    p.add_argument("--schemes", help="unweighted,density,size or all")
    p.add_argument("--negative-ce", choices=("exclude", "clamp"))
    p.add_argument("--scenario-reference", choices=("min", "zero"))

    p = sub.add_parser("synth", help="write a seeded synthetic corpus")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-cities", type=int)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--noise", type=float, help="LST noise sd in degC")
    p.add_argument("--months", type=int, choices=(1, 12))
    p.add_argument("--ndvi-model", choices=("mixed", "uniform_random", "gradient", "clustered"))
    p.add_argument("--pop-model", choices=("mixed", "uniform", "clustered", "anti_correlated"))
    p.add_argument("--koppen", help="comma-separated classes cycled over cities")
    return parser


def _print_findings(findings):
    for f in findings:
        print(f"{f['city_id']}\t{f['check']}\t{f['field']}\t{f['message']}")


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve_options(args)
        if args.command == "synth":
            path = run_synth(build_synth_spec(opts), opts["out"])
            print(path)
            return pipeline.EXIT_OK
        if args.command == "validate":
            if opts["manifest"] is None:
                raise ConfigError("--manifest is required")
            findings, _ = pipeline.run_validate(opts["manifest"], opts["min-cells"])
            _print_findings(findings)
            return pipeline.EXIT_PARTIAL if findings else pipeline.EXIT_OK
        config = build_run_config(opts)
        runner = {"compute": pipeline.run_compute, "gini": pipeline.run_gini, "scenario": pipeline.run_scenario}
        return runner[args.command](config)
    except (GreencoolError, OSError) as exc:
        print(f"greencool: error: {exc}", file=sys.stderr)
        return pipeline.EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
