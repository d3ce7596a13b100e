"""Command-line interface: ``dpdd {simulate,fit,forecast,housing,version}``.

Every command writes its outputs and a ``manifest.json`` under
``--output-dir``.  Exit status is 0 on success, 2 for invalid arguments or
configuration, and 1 when a computation fails.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import os
import sys
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .forecast import DpddConfig, dpdd_forecast, fit_dpdd, make_grid
from .housing import HousingConfig, load_panel, run_housing_experiment, synthetic_panel
from .koopman import KoopmanError, KoopmanModel
from .schema import SCHEMAS, ConfigError, validate
from .sim import STATIONARY_KINDS, BenchmarkConfig, DgpSpec, run_benchmark

__all__ = ["RunManifest", "build_parser", "main"]

SCALE_REPETITIONS = {"desk": 50, "paper": 500}
DEFAULT_SEED = 20250101

# Means reported for the 2008-2025 metro panel with a January 2020 split.
REAL_PANEL_REFERENCE = {"dpdd": 0.042, "war": 0.052}


class UsageError(Exception):
    """Invalid invocation; reported with exit status 2."""


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_path: str | None
    seed: int | None
    output_dir: str
    tool_version: str
    timestamp: str
    config: dict
    inputs: dict

    def write(self, directory: Path) -> None:
        _write_json(directory / "manifest.json", asdict(self))


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        when = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        when = _dt.datetime.now(tz=_dt.timezone.utc).replace(microsecond=0)
    return when.isoformat().replace("+00:00", "Z")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _load_config(path, command: str) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    validate(cfg, SCHEMAS[command])
    return cfg


def _read_points(path) -> np.ndarray:
    """Numeric CSV, one point per row; a non-numeric first row is a header."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    if rows:
        try:
            [float(c) for c in rows[0]]
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise UsageError(f"{path}: no data rows")
    width = len(rows[0])
    out = np.empty((len(rows), width))
    for i, r in enumerate(rows):
        if len(r) != width:
            raise UsageError(f"{path}: row {i + 1} has {len(r)} columns, expected {width}")
        try:
            out[i] = [float(c) for c in r]
        except ValueError:
            raise UsageError(f"{path}: row {i + 1} is not numeric") from None
    return out


def _output_dir(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, config: dict, inputs: dict, seed=None) -> RunManifest:
    return RunManifest(
        command=args.command,
        config_path=args.config,
        seed=seed,
        output_dir=str(args.output_dir),
        tool_version=__version__,
        timestamp=_timestamp(),
        config=config,
        inputs={k: _sha256(v) for k, v in sorted(inputs.items())},
    )


def _dpdd_config(cfg: dict) -> DpddConfig:
    d = dict(cfg.get("dpdd", {}))
    if isinstance(d.get("bandwidth"), list):
        d["bandwidth"] = np.asarray(d["bandwidth"], dtype=float)
    return DpddConfig(**d)


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config, "simulate")
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.scale is not None or "n_exp" not in cfg:
        cfg["n_exp"] = SCALE_REPETITIONS[args.scale or "desk"]
    if args.threads is not None:
        cfg["threads"] = args.threads
    cfg.setdefault("seed", DEFAULT_SEED)
    scenarios = cfg.get("scenarios", list(STATIONARY_KINDS))
    methods = cfg.get("methods", ["dpdd", "war"])
    bench = BenchmarkConfig(
        n_exp=cfg["n_exp"],
        n_paths=cfg.get("n_paths", 400),
        T=cfg.get("T", 20),
        methods=tuple(methods),
        base_seed=cfg["seed"],
        stride=cfg.get("stride", 1_000_003),
        horizon=cfg.get("horizon", 1),
        fpca_threshold=cfg.get("fpca_threshold", 0.95),
        window_multiplier=cfg.get("window_multiplier", 3),
        window_cv=cfg.get("window_cv", False),
        dpdd=_dpdd_config(cfg),
    )
    specs = []
    for s in scenarios:
        s = {"kind": s} if isinstance(s, str) else s
        specs.append(DgpSpec(s["kind"], dict(s.get("params", {})), n_paths=bench.n_paths, T=bench.T))
    out = _output_dir(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        table = run_benchmark(bench, specs, threads=cfg.get("threads", 1))
    table.to_csv(out / "results.csv")
    table.to_json(out / "summary.json")
    _manifest(args, cfg, {}, seed=cfg["seed"]).write(out)
    summary = table.summary()
    for scen in sorted(summary):
        cells = "  ".join(f"{m}={v.get('mean', float('nan')):.5f}" for m, v in sorted(summary[scen].items()))
        print(f"{scen:12s} {cells}")
    return 0


def cmd_fit(args) -> int:
    cfg = _load_config(args.config, "fit")
    traj = _read_points(args.trajectory)
    if traj.shape[0] < 2:
        raise UsageError("need >= 2 points in the trajectory")
    dcfg = _dpdd_config(cfg)
    if args.dt is not None:
        dcfg = DpddConfig(**{**asdict(dcfg), "dt": args.dt})
    out = _output_dir(args)
    model = fit_dpdd(traj[:-1], traj[1:], dcfg, density_samples=traj)
    doc = model.to_dict()
    doc["config"] = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in asdict(dcfg).items()}
    _write_json(out / "model.json", doc)
    _manifest(args, cfg, {"trajectory": args.trajectory}).write(out)
    print(f"retained {model.mode_count} modes; leading rates {np.round(model.mode_rates[:3].real, 4).tolist()}")
    return 0


def cmd_forecast(args) -> int:
    try:
        doc = json.loads(Path(args.model).read_text())
        model = KoopmanModel.from_dict(doc)
    except OSError as exc:
        raise UsageError(f"cannot read model {args.model}: {exc.strerror}") from None
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise UsageError(f"{args.model} is not a model file: {exc}") from None
    if model.density is None:
        raise UsageError(f"{args.model} carries no stationary density")
    samples = _read_points(args.samples)
    if samples.shape[1] != model.dictionary.dim:
        raise UsageError(
            f"dimension mismatch: model is {model.dictionary.dim}-dimensional, samples have {samples.shape[1]} columns"
        )
    if args.horizon < 0:
        raise UsageError("horizon must be nonnegative")
    rule = doc.get("config", {}).get("coefficients", "matched")
    out = _output_dir(args)
    grid = make_grid(model, args.grid_points)
    fc = dpdd_forecast(model, samples, args.horizon, grid, rule=rule)
    fc.to_csv(out / "forecast.csv")
    meta = {
        "horizon": float(args.horizon),
        "r": model.mode_count,
        "clipped_mass": fc.clipped_mass,
        "mass": fc.mass,
        "grid_shape": list(grid.shape),
        "coefficients": rule,
    }
    _write_json(out / "forecast_meta.json", meta)
    cfg = {"horizon": args.horizon, "grid_points": args.grid_points}
    _manifest(args, cfg, {"model": args.model, "samples": args.samples}).write(out)
    print(f"forecast on {grid.shape} grid, clipped mass {fc.clipped_mass:.3g}")
    return 0


def cmd_housing(args) -> int:
    cfg = _load_config(args.config, "housing")
    split = args.split if args.split is not None else cfg.get("split")
    if split is None:
        raise UsageError("a split month is required (--split or config 'split')")
    if isinstance(split, str) and split.isdigit():
        split = int(split)
    inputs = {}
    if args.panel is None:
        seed = DEFAULT_SEED if args.seed is None else args.seed
        panel = synthetic_panel(seed=seed, **cfg.get("synthetic", {}))
        reference = cfg.get("reference_means")
    else:
        seed = args.seed
        panel = load_panel(args.panel)
        inputs["panel"] = args.panel
        reference = cfg.get("reference_means", REAL_PANEL_REFERENCE)
    hcfg = HousingConfig(
        kind=cfg.get("kind", "monomial"),
        degree=cfg.get("degree", 2),
        n_modes=cfg.get("n_modes", 2),
        bandwidth=cfg.get("bandwidth", "silverman"),
        fpca_threshold=cfg.get("fpca_threshold", 0.95),
        refit=cfg.get("refit", False),
        volatile_periods={k: tuple(v) for k, v in cfg.get("volatile_periods", {}).items()},
        reference_means=reference,
    )
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = run_housing_experiment(panel, split, hcfg)
    except ValueError as exc:
        if "split" in str(exc):
            raise UsageError(str(exc)) from None
        raise
    out = _output_dir(args)
    report.to_csv(out / "housing_monthly.csv")
    report.summary["panel"] = panel.provenance
    report.to_json(out / "housing_summary.json")
    _manifest(args, {**cfg, "split": split}, inputs, seed=seed).write(out)
    for m, v in report.summary["methods"].items():
        print(f"{m:12s} mean={v['mean']:.5f} max={v['max']:.5f}")
    return 0


def cmd_version(args) -> int:
    print(f"dpdd {__version__}")
    return 0


def _u64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON configuration file")
    common.add_argument("--seed", type=_u64, metavar="U64", help="master random seed")
    common.add_argument("--output-dir", default=".", metavar="PATH", help="directory for outputs")
    common.add_argument("--threads", type=_nonneg_int, metavar="N", help="worker threads (0 = auto)")
    common.add_argument("--scale", choices=sorted(SCALE_REPETITIONS), help="repetition count preset")

    parser = argparse.ArgumentParser(
        prog="dpdd", description="Distributional forecasting with weighted EDMD."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run the simulation benchmark")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="fit a model to a trajectory CSV")
    p.add_argument("trajectory", help="CSV with one point per row")
    p.add_argument("--dt", type=float, help="time between consecutive rows")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", parents=[common], help="forecast a density from a model file")
    p.add_argument("model", help="model.json written by 'fit'")
    p.add_argument("samples", help="CSV of current samples, one point per row")
    p.add_argument("--horizon", type=float, default=1.0, help="forecast horizon in time units")
    p.add_argument("--grid-points", type=int, help="lattice points per axis")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("housing", parents=[common], help="monthly relative-price forecast study")
    p.add_argument("panel", nargs="?", help="wide metro price CSV (synthetic panel if omitted)")
    p.add_argument("--split", help="first test month (YYYY-MM) or row index")
    p.set_defaults(func=cmd_housing)

    p = sub.add_parser("version", parents=[common], help="print the version")
    p.set_defaults(func=cmd_version)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"dpdd {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, KoopmanError, np.linalg.LinAlgError) as exc:
        print(f"dpdd {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
