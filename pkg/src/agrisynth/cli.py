"""Command-line front end: ``agrisynth <subcommand> [options]``.

Every subcommand accepts ``--config`` (TOML), ``--seed``, ``-o/--output``,
``--offline`` and ``--format``. Stochastic subcommands refuse to run
without ``--seed``. Each run writes ``seed=<n> config_digest=<sha256>`` to
standard error; the digest covers the canonical JSON form of the parsed
config. Exit codes: 0 success, 1 usage, 2 data/validation, 3 external
service.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import catalog as cat
from .augment import PROVENANCE, AugmentPlan, stratified_oversample
from .errors import AgriSynthError, UsageError
from .generate import (
    RATE_COLS,
    SOIL_COLS,
    YIELD_COL,
    DistSpec,
    SoilGridParams,
    TrialGenParams,
    WeatherParams,
    YieldResponse,
    gen_soil_grid,
    gen_table,
    gen_trials,
    gen_weather,
)
from .model import (
    EvalReport,
    StackSpec,
    evaluate,
    fit,
    fit_stacked,
    load_model,
    spec_from_dict,
    temporal_split,
)
from .optimize import ObjectiveSpec, SolverConfig, recommend_npk, surrogate_predictor
from .power import fetch_power_daily
from .rng import Rng
from .simulate import CropParams, ManagementAction, blend_weather, run_season
from .table import IsIn, Table, read_csv, write_csv
from .validate import PlausibilityRule, ValidationReport, compare_tables
from .visualize import ChartSpec, render_compare, render_heatmap, render_histogram, render_timeseries, save_svg

log = logging.getLogger("agrisynth")

# -- demo ----------------------------------------------------------------------

DEMO_SEED = 42
DEMO_GROWTH_PCT = 145.2
DEMO_SEASONS = (("A", 0.15), ("B", 0.15), ("C", 0.70))
DEMO_FEATURES = (*SOIL_COLS, *RATE_COLS)
# 125 + 125 training rows: 145.2 % of 250 is exactly 363 new rows
DEMO_ROWS = 833


@dataclass
class DemoReport:
    seed: int
    n_train: int
    n_test: int
    n_augmented: int
    growth_pct: float
    baseline: EvalReport
    augmented: EvalReport
    validation: ValidationReport

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "n_augmented": self.n_augmented,
            "growth_pct": self.growth_pct,
            "baseline": self.baseline.to_dict(),
            "augmented": self.augmented.to_dict(),
            "validation": self.validation.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def pipeline_demo(seed: int = DEMO_SEED, n: int = DEMO_ROWS, k: int = 5) -> DemoReport:
    """Temporal-holdout yield modelling with and without SMOTE augmentation.

    Trials are allocated exactly 15/15/70 % of rows to seasons A/B/C. Season C is
    the test set; the training rows (seasons A and B) are grown by 145.2 %
    with SMOTE inside the early-season stratum. The same stacked model spec
    and the same fold seed are used for both fits. The validation report
    compares the synthetic rows against the original training rows.
    """
    root = Rng(seed)
    trials = gen_trials(TrialGenParams(n=n, seasons=DEMO_SEASONS, exact_seasons=True), root.split("trials"))
    train, test = temporal_split(trials, "season", ["C"])
    feats = list(DEMO_FEATURES)
    plan = AugmentPlan(method="smote", feature_cols=(*feats, YIELD_COL), k=k,
                       stratum=IsIn("season", ("A", "B")), growth_pct=DEMO_GROWTH_PCT)
    grown = stratified_oversample(train, plan, root.split("augment"))
    spec = StackSpec()
    X_test, y_test = test.select(feats), test[YIELD_COL]
    base = fit_stacked(spec, train.select(feats), train[YIELD_COL], root.split("stack"))
    aug = fit_stacked(spec, grown.select(feats), grown[YIELD_COL], root.split("stack"))
    synth = grown.take(grown[PROVENANCE] == "true")
    report = compare_tables(train, synth, [*feats, YIELD_COL], rules=_default_rules())
    return DemoReport(
        seed=seed,
        n_train=train.n_rows,
        n_test=test.n_rows,
        n_augmented=grown.n_rows,
        growth_pct=100.0 * (grown.n_rows - train.n_rows) / train.n_rows,
        baseline=evaluate(base, X_test, y_test),
        augmented=evaluate(aug, X_test, y_test),
        validation=report,
    )


def _default_rules() -> list[PlausibilityRule]:
    return [
        PlausibilityRule.interval("ph", 0.0, 14.0),
        PlausibilityRule.interval(YIELD_COL, 0.0),
        *(PlausibilityRule.interval(c, 0.0) for c in RATE_COLS),
    ]


# -- helpers -------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def config_digest(config: Mapping[str, Any]) -> str:
    """sha256 of the config as sorted, compact JSON (dates as ISO strings)."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _load_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file {path} does not exist")
    try:
        with p.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"config {path} is not valid TOML: {exc}") from None


def _need_seed(args) -> int:
    if args.seed is None:
        raise UsageError(f"{args.command} is stochastic and requires --seed")
    return args.seed


def _need_output(args) -> Path:
    if not args.output:
        raise UsageError(f"{args.command} requires -o/--output")
    out = Path(args.output)
    if not out.parent.exists():
        raise UsageError(f"output directory {out.parent} does not exist")
    return out


def _input(path: str | None, flag: str) -> Path:
    if not path:
        raise UsageError(f"missing {flag}")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{flag} {path} does not exist")
    return p


def _read_table(path: Path) -> Table:
    sidecar = path.with_suffix(".schema.json")
    return read_csv(path, sidecar if sidecar.is_file() else None)


def _write_table(table: Table, out: Path) -> None:
    write_csv(table, out, out.with_suffix(".schema.json"))
    print(f"wrote {out} ({table.n_rows} rows)", file=sys.stderr)


def _build(cls, doc: Mapping[str, Any], what: str):
    try:
        return cls(**doc)
    except TypeError as exc:
        raise UsageError(f"bad [{what}] config: {exc}") from None


def _tuples(doc: Mapping[str, Any]) -> dict[str, Any]:
    """TOML arrays become tuples so frozen dataclasses stay hashable."""
    def conv(v):
        if isinstance(v, list):
            return tuple(conv(x) for x in v)
        return v
    return {k: conv(v) for k, v in doc.items()}


# -- subcommands ---------------------------------------------------------------


def cmd_generate(args, config) -> int:
    seed = _need_seed(args)
    out = _need_output(args)
    rng = Rng(seed)
    kind = config.get("kind", "weather")
    if kind == "weather":
        w = dict(config.get("weather", {}))
        start = w.pop("start", "2021-01-01")
        n_days = w.pop("n_days", 365)
        table = gen_weather(_build(WeatherParams, w, "weather"), start, n_days, rng)
    elif kind == "soil_grid":
        table = gen_soil_grid(_build(SoilGridParams, _tuples(config.get("soil_grid", {})), "soil_grid"), rng)
    elif kind == "trials":
        doc = _tuples(config.get("trials", {}))
        if "response" in doc:
            doc["response"] = _build(YieldResponse, _tuples(config["trials"]["response"]), "trials.response")
        table = gen_trials(_build(TrialGenParams, doc, "trials"), rng)
    elif kind == "table":
        cols = config.get("columns", {})
        if not cols:
            raise UsageError("kind = 'table' needs [columns.<name>] sections")
        specs = {name: DistSpec.from_dict(doc) for name, doc in cols.items()}
        table = gen_table(specs, int(config.get("n", 100)), rng)
    else:
        raise UsageError(f"unknown generate kind {kind!r}")
    _write_table(table, out)
    return 0


def cmd_augment(args, config) -> int:
    seed = _need_seed(args)
    src = _input(args.input, "--input")
    out = _need_output(args)
    doc = dict(config.get("augment", config))
    try:
        plan = AugmentPlan.from_dict(doc)
    except (TypeError, KeyError, ValueError) as exc:
        raise UsageError(f"bad [augment] config: {exc}") from None
    _write_table(stratified_oversample(_read_table(src), plan, Rng(seed)), out)
    return 0


def cmd_validate(args, config) -> int:
    real = _read_table(_input(args.real, "--real"))
    synth = _read_table(_input(args.synth, "--synth"))
    doc = config.get("validate", {})
    rules = [PlausibilityRule(**r) for r in doc.get("rules", [])]
    columns = args.columns.split(",") if args.columns else doc.get("columns")
    report = compare_tables(real, synth, columns, bins=doc.get("bins", 20), n_pc=doc.get("n_pc", 2),
                            coverage=doc.get("coverage", 0.997), rules=rules)
    if args.output:
        out = _need_output(args)
        out.write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.summary())
    return 0


def cmd_model(args, config) -> int:
    doc = dict(config.get("model", config))
    target = args.target or doc.get("target", YIELD_COL)
    features = args.features.split(",") if args.features else list(doc.get("features", DEMO_FEATURES))
    data = _read_table(_input(args.input, "--input"))
    if args.action == "fit":
        out = _need_output(args)
        season_col = doc.get("season_col")
        test_seasons = args.test_seasons.split(",") if args.test_seasons else doc.get("test_seasons")
        train, test = (temporal_split(data, season_col or "season", test_seasons)
                       if test_seasons else (data, None))
        spec_doc = doc.get("spec", {"kind": "stack"})
        if spec_doc.get("kind") == "stack":
            seed = _need_seed(args)
            bases = tuple(spec_from_dict(b) for b in spec_doc.get("bases", [])) or StackSpec().bases
            spec = StackSpec(bases, int(spec_doc.get("folds", 5)))
            model = fit_stacked(spec, train.select(features), train[target], Rng(seed))
        else:
            model = fit(spec_from_dict(spec_doc), train.select(features), train[target])
        model.save(out)
        print(f"wrote {out}", file=sys.stderr)
        if test is not None:
            print(json.dumps(evaluate(model, test.select(features), test[target]).to_dict(), sort_keys=True))
        return 0
    model = load_model(_input(args.model, "--model"))
    names = list(getattr(model, "feature_names", None) or features)
    report = evaluate(model, data.select(names), data[target])
    text = json.dumps(report.to_dict(), sort_keys=True)
    if args.output:
        _need_output(args).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_optimize(args, config) -> int:
    seed = _need_seed(args)
    fields = _read_table(_input(args.input, "--input"))
    model = load_model(_input(args.model, "--model"))
    out = _need_output(args)
    doc = config.get("optimize", config)
    try:
        spec = ObjectiveSpec.from_dict(doc.get("objective", {}))
        solver = SolverConfig.from_dict(doc.get("solver", {}), seed=seed)
    except TypeError as exc:
        raise UsageError(f"bad [optimize] config: {exc}") from None
    soil_cols = list(doc.get("soil_cols", SOIL_COLS))
    recs = recommend_npk(fields, surrogate_predictor(model, soil_cols), spec, solver, soil_cols)
    _write_table(recs, out)
    return 0


def cmd_simulate(args, config) -> int:
    out = _need_output(args)
    doc = config.get("simulate", config)
    if args.weather:
        weather = _read_table(_input(args.weather, "--weather"))
    else:
        loc = doc.get("location")
        if not loc:
            raise UsageError("simulate needs --weather or a [simulate.location] table")
        source = "fixture" if args.offline else loc.get("source", "live")
        weather = fetch_power_daily(loc["lat"], loc["lon"], loc["start"], loc["end"], source=source,
                                    cache_dir=loc.get("cache_dir", "cache/power"))
    extend = int(doc.get("extend_days", 0))
    if extend > 0:
        seed = _need_seed(args)
        weather = blend_weather(weather, _build(WeatherParams, doc.get("weather", {}), "weather"),
                                extend, Rng(seed))
    crop = _build(CropParams, _tuples(doc.get("crop", {})), "crop")
    actions = [_build(ManagementAction, a, "actions") for a in doc.get("actions", [])]
    log_ = run_season(weather, crop, actions, float(doc.get("irrigation_default", 0.0)))
    _write_table(log_.daily, out)
    print(json.dumps({"final_yield": log_.final_yield, "nutrients": list(log_.nutrient_totals)}))
    return 0


def cmd_visualize(args, config) -> int:
    out = _need_output(args)
    doc = dict(config.get("visualize", {}))
    chart = args.chart
    spec = _build(ChartSpec, {"kind": chart, **_tuples(doc)}, "visualize")
    data = _read_table(_input(args.input, "--input"))
    if chart == "histogram":
        svg = render_histogram(data[_column(args)], spec)
    elif chart == "compare":
        other = _read_table(_input(args.synth, "--synth"))
        col = _column(args)
        svg = render_compare(data[col], other[col], spec)
    elif chart == "timeseries":
        ys = args.columns.split(",") if args.columns else [c for c in data.columns
                                                         if c != args.x and data.dtype(c) == "float64"]
        svg = render_timeseries(data, args.x, ys, spec)
    else:
        svg = render_heatmap(data, spec)
    save_svg(svg, out)
    print(f"wrote {out}", file=sys.stderr)
    return 0


def _column(args) -> str:
    if not args.column:
        raise UsageError(f"{args.chart} needs --column")
    return args.column


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise UsageError(f"not an ISO date: {text!r}") from None


def cmd_catalog(args, config) -> int:
    if args.manifest:
        manifest = Path(args.manifest)
        catalog = cat.load_manifest(manifest) if manifest.is_file() else cat.empty_catalog(manifest)
    else:
        catalog = cat.bundled_catalog()
    if args.action == "list":
        overlaps = (_date(args.start), _date(args.end)) if args.start and args.end else None
        for e in cat.query(catalog, kind=args.kind, region=args.region, overlaps=overlaps):
            print(f"{e.id}\t{e.kind}\t{e.region}\t{e.start}\t{e.end}\t{e.path}")
        return 0
    if not args.manifest:
        raise UsageError("catalog register needs --manifest")
    for flag in ("id", "kind", "region", "start", "end", "path"):
        if not getattr(args, flag):
            raise UsageError(f"catalog register needs --{flag}")
    entry = cat.CatalogEntry(args.id, args.kind, args.region, _date(args.start), _date(args.end),
                             str(Path(args.path).resolve()),
                             str(Path(args.schema).resolve()) if args.schema else None, args.provenance or "")
    cat.register_output(catalog, entry)
    print(f"registered {args.id} in {args.manifest}", file=sys.stderr)
    return 0


def cmd_demo(args, config) -> int:
    seed = _need_seed(args)
    doc = config.get("demo", {})
    report = pipeline_demo(seed, n=int(doc.get("n", DEMO_ROWS)), k=int(doc.get("k", 5)))
    if args.output:
        _need_output(args).write_text(report.to_json() + "\n", encoding="utf-8")
    print(f"baseline  MAPE {report.baseline.mape:.3f}%  rmse {report.baseline.rmse:.1f}  r2 {report.baseline.r2:.3f}")
    print(f"augmented MAPE {report.augmented.mape:.3f}%  rmse {report.augmented.rmse:.1f}  r2 {report.augmented.r2:.3f}")
    print(f"growth {report.growth_pct:.1f}%  mahalanobis overlap {report.validation.mahalanobis_overlap:.4f}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "augment": cmd_augment,
    "validate": cmd_validate,
    "model": cmd_model,
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "visualize": cmd_visualize,
    "catalog": cmd_catalog,
    "demo": cmd_demo,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--seed", type=int, help="root seed (required by stochastic subcommands)")
    common.add_argument("-o", "--output", help="output file")
    common.add_argument("--offline", action="store_true", help="read weather from bundled fixtures")
    common.add_argument("--format", choices=["csv"], default="csv")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="agrisynth", description="Synthetic agricultural data toolkit")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    sub.add_parser("generate", parents=[common], help="generate weather, soil grids, trials or tables")
    p = sub.add_parser("augment", parents=[common], help="grow a table with synthetic rows")
    p.add_argument("--input", "-i")
    p = sub.add_parser("validate", parents=[common], help="compare real and synthetic tables")
    p.add_argument("--real")
    p.add_argument("--synth")
    p.add_argument("--columns")
    p = sub.add_parser("model", parents=[common], help="fit or evaluate a yield model")
    p.add_argument("action", choices=["fit", "evaluate"])
    p.add_argument("--input", "-i")
    p.add_argument("--model")
    p.add_argument("--target")
    p.add_argument("--features")
    p.add_argument("--test-seasons")
    p = sub.add_parser("optimize", parents=[common], help="recommend NPK rates per field")
    p.add_argument("--input", "-i")
    p.add_argument("--model")
    p = sub.add_parser("simulate", parents=[common], help="simulate a growing season")
    p.add_argument("--weather")
    p = sub.add_parser("visualize", parents=[common], help="render an SVG chart")
    p.add_argument("chart", choices=["histogram", "compare", "timeseries", "heatmap"])
    p.add_argument("--input", "-i")
    p.add_argument("--synth")
    p.add_argument("--column")
    p.add_argument("--columns")
    p.add_argument("--x", default="date")
    p = sub.add_parser("catalog", parents=[common], help="list or register datasets")
    p.add_argument("action", choices=["list", "register"])
    p.add_argument("--manifest")
    for flag in ("id", "kind", "region", "start", "end", "path", "schema", "provenance"):
        p.add_argument(f"--{flag}")
    sub.add_parser("demo", parents=[common], help="run the augmentation re-enactment")
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv``, dispatch, and map errors to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        config = _load_config(args.config)
        print(f"seed={args.seed if args.seed is not None else 'none'} config_digest={config_digest(config)}",
              file=sys.stderr)
        return COMMANDS[args.command](args, config)
    except AgriSynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
