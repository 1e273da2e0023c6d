"""Command-line front end.

Subcommands drive the calibration campaigns, the strategy solver, and the
cost-table experiments from flat JSON market configs. Every run writes its
artifacts plus a manifest (config hash, seed, outputs, timestamps) into
the chosen output directory and nowhere else.

Exit codes: 0 success, 2 usage, 3 config, 4 numeric failure,
5 assumption violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, calibration, experiments
from .errors import (
    AssumptionViolatedError,
    CalibrationError,
    ConfigError,
    ExeclabError,
    NonPositiveLogArgumentError,
    NoRootError,
)
from .opinion_game import MarketConfig
from .resilience import ResilienceCurve
from .shape import ShapeTable
from .solver import (
    ProblemSpec,
    diagnostics_to_json,
    solve_optimal,
    strategy_to_csv,
    validate_assumptions,
)

E_OK, E_USAGE, E_CONFIG, E_NUMERIC, E_ASSUMPTION = 0, 2, 3, 4, 5

DESK_SCALE_BURN_IN = 100_000
_DEFAULTS = {
    # (full-scale, desk-scale) defaults for campaign sizes
    "snapshots": (500, 100),
    "samples": (500, 50),
    "runs": (2500, 150),
    "horizon": (50_000, 5_000),
    "post_steps": (500_000, 50_000),
    "window": (100_000, 20_000),
    "table_runs": (500, 100),
}


def _pick(args, name: str):
    value = getattr(args, name.replace("-", "_"))
    if value is not None:
        return value
    full, desk = _DEFAULTS[name]
    return desk if args.desk_scale else full


def _load_config(args) -> MarketConfig:
    config = MarketConfig.from_file(args.config) if args.config else MarketConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.desk_scale:
        config = replace(config, burn_in_steps=min(config.burn_in_steps, DESK_SCALE_BURN_IN))
    return config


def _int_range(spec: str) -> list[int]:
    """Parse '25:300:25' as an inclusive range or '5,8,11' as a list."""
    if ":" in spec:
        parts = [int(p) for p in spec.split(":")]
        start, stop = parts[0], parts[1]
        step = parts[2] if len(parts) > 2 else 1
        return list(range(start, stop + 1, step))
    return [int(p) for p in spec.split(",")]


class _Manifest:
    def __init__(self, args, command: str):
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.args = args
        self.outputs: list[str] = []
        self.extra: dict = {}
        self.started = datetime.now(timezone.utc).isoformat()
        self.t0 = time.time()

    def add(self, *paths: Path) -> None:
        self.outputs.extend(p.name for p in paths)

    def write(self, config: MarketConfig | None) -> None:
        payload = {
            "command": self.command,
            "tool_version": __version__,
            "config_path": self.args.config,
            "config_sha256": _sha256_file(self.args.config) if self.args.config else None,
            "seed": config.seed if config else None,
            "out_dir": str(self.out),
            "started_at": self.started,
            "finished_at": datetime.now(timezone.utc).isoformat(),
            "elapsed_seconds": round(time.time() - self.t0, 3),
            "outputs": self.outputs,
            **self.extra,
        }
        path = self.out / "manifest.json"
        path.write_text(json.dumps(payload, indent=2), encoding="utf-8")


def _sha256_file(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- subcommand handlers ---------------------------------------------------------


def _cmd_calibrate_shape(args) -> int:
    config = _load_config(args)
    manifest = _Manifest(args, "calibrate-shape")
    estimate = calibration.estimate_shape(config, _pick(args, "snapshots"), jobs=args.jobs)
    shape_path = manifest.out / "shape.csv"
    bands_path = manifest.out / "shape_bands.csv"
    estimate.table.to_csv(shape_path)
    estimate.bands_to_csv(bands_path)
    manifest.add(shape_path, bands_path)
    manifest.extra["snapshots"] = estimate.snapshot_count
    manifest.write(config)
    print(f"shape support [0, {len(estimate.table.values) - 1}], "
          f"tail {estimate.table.tail_value:.4g} -> {shape_path}")
    return E_OK


def _cmd_calibrate_permanent(args) -> int:
    config = _load_config(args)
    manifest = _Manifest(args, "calibrate-permanent")
    result = calibration.measure_permanent_impact(
        config,
        volumes=_int_range(args.volumes),
        samples_per_volume=_pick(args, "samples"),
        post_steps=_pick(args, "post_steps"),
        window_steps=_pick(args, "window"),
        sample_stride=args.stride,
        jobs=args.jobs,
    )
    csv_path = manifest.out / "permanent.csv"
    result.to_csv(csv_path)
    summary = {
        "slope": result.slope,
        "intercept": result.intercept,
        "r_squared": result.r_squared,
        "samples_per_volume": result.samples_per_volume,
    }
    summary_path = manifest.out / "permanent_summary.json"
    summary_path.write_text(json.dumps(summary, indent=2), encoding="utf-8")
    manifest.add(csv_path, summary_path)
    manifest.extra["summary"] = summary
    manifest.write(config)
    print(f"permanent impact slope {result.slope:.5f} (R^2 {result.r_squared:.3f}) -> {csv_path}")
    return E_OK


def _cmd_calibrate_resilience(args) -> int:
    config = _load_config(args)
    manifest = _Manifest(args, "calibrate-resilience")
    impacts = _int_range(args.impacts)
    runs = _pick(args, "runs")
    horizon = _pick(args, "horizon")
    fits: dict[int, calibration.ExponentialFit] = {}
    mean_paths: dict[int, np.ndarray] = {}
    counts: dict[int, dict] = {}
    from .rng import spawn_seed

    for base, D in enumerate(impacts):
        cfg_d = replace(config, seed=spawn_seed(config.seed, 5_000_000 + base))
        ensemble = calibration.sample_decay(
            cfg_d, D, runs=runs, horizon=horizon, side=args.side, jobs=args.jobs
        )
        path = manifest.out / f"decay_D{D}.csv"
        ensemble.to_csv(path)
        manifest.add(path)
        fits[D] = calibration.fit_exponential(ensemble.mean)
        mean_paths[D] = ensemble.mean
        counts[D] = {"runs": ensemble.run_count, "discarded": ensemble.discarded,
                     "mean_volume": ensemble.mean_volume}
        print(f"D={D}: {ensemble.run_count} runs ({ensemble.discarded} discarded), "
              f"fit A={fits[D].A:.3f} rho={fits[D].rho_hat:.3e} converged={fits[D].converged}")
    fits_path = manifest.out / "fits.json"
    fits_path.write_text(
        json.dumps(
            {
                str(D): {
                    "A": f.A, "B": f.B, "rho_hat": f.rho_hat, "residual_norm": f.residual_norm,
                    "iterations": f.iterations, "converged": f.converged, "message": f.message,
                    **counts[D],
                }
                for D, f in sorted(fits.items())
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    manifest.add(fits_path)
    for tau in [float(t) for t in args.taus.split(",")]:
        curve, report = calibration.build_resilience_curve(mean_paths, tau)
        curve_path = manifest.out / f"curve_tau{tau:g}.csv"
        curve.to_csv(curve_path)
        manifest.add(curve_path, curve_path.with_suffix(".json"))
        status = "ok" if report.ok else "CHECK FAILED"
        print(f"tau={tau:g}: {len(report.knots)} knots, rho in "
              f"[{report.rho_min:.3e}, {report.rho_max:.3e}] ({status})")
        if report.skipped:
            print(f"  skipped knots: {report.skipped}")
    manifest.write(config)
    return E_OK


def _cmd_solve(args) -> int:
    manifest = _Manifest(args, "solve")
    shape = ShapeTable.from_csv(args.shape)
    if args.resilience:
        curve = ResilienceCurve.from_csv(args.resilience)
    elif args.rho is not None:
        curve = ResilienceCurve.constant(args.rho)
    else:
        raise ConfigError("provide --resilience or --rho")
    spec = ProblemSpec(X0=args.x0, N=args.n, T=args.t, shape=shape,
                       resilience=curve, version=args.version)
    report = validate_assumptions(spec)
    if not report.ok:
        if args.strict:
            print(f"assumption checks failed: {report.describe_failures()}", file=sys.stderr)
            return E_ASSUMPTION
        print(f"warning: {report.describe_failures()}", file=sys.stderr)
    strategy = solve_optimal(spec, validate=False)
    csv_path = manifest.out / "strategy.csv"
    diag_path = manifest.out / "diagnostics.json"
    strategy_to_csv(strategy, csv_path)
    diagnostics_to_json(strategy, diag_path, report)
    manifest.add(csv_path, diag_path)
    manifest.write(_load_config(args) if args.config else None)
    print(f"xi0={strategy.sizes[0]:.6g} xi1={strategy.sizes[1] if len(strategy.sizes) > 2 else float('nan'):.6g} "
          f"xiN={strategy.sizes[-1]:.6g} residual={strategy.diagnostics.residual:.2e}")
    return E_OK


def _cmd_run_strategy(args) -> int:
    config = _load_config(args)
    manifest = _Manifest(args, "run-strategy")
    rows = np.loadtxt(args.strategy, delimiter=",", skiprows=1, ndmin=2)
    sizes = rows[:, 2]
    times = rows[:, 1]
    tau = float(times[1] - times[0]) if len(times) > 1 else 1.0
    sampled = experiments.run_strategy_in_sim(
        config, sizes, tau, runs=args.runs, jobs=args.jobs
    )
    costs_path = manifest.out / "costs.csv"
    with open(costs_path, "w", encoding="utf-8") as fh:
        fh.write("run,cost\n")
        for r, c in enumerate(sampled.costs):
            fh.write(f"{r},{float(c)!r}\n")
    stats = {
        "runs": sampled.runs,
        "discarded": sampled.discarded,
        "mean": sampled.mean,
        "standard_error": sampled.standard_error,
    }
    stats_path = manifest.out / "costs_summary.json"
    stats_path.write_text(json.dumps(stats, indent=2), encoding="utf-8")
    manifest.add(costs_path, stats_path)
    manifest.extra["summary"] = stats
    manifest.write(config)
    print(f"sampled mean {sampled.mean:.2f} +- {sampled.standard_error:.2f} over {sampled.runs} runs")
    return E_OK


def _cmd_reproduce_tables(args) -> int:
    config = _load_config(args)
    manifest = _Manifest(args, "reproduce-tables")
    bundle = calibration.CalibrationBundle.load(args.calibration)
    if args.cells_file:
        spec_json = json.loads(Path(args.cells_file).read_text(encoding="utf-8"))
        x0 = float(spec_json["X0"])
        cells = [(x0, int(n), float(t)) for n, t in spec_json["cells"]]
        runs = int(spec_json.get("runs", _pick(args, "table_runs")))
    else:
        x0 = args.x0
        cells = [(x0, int(n), float(t)) for n, t in
                 (c.split("x") for c in args.cells.split(","))]
        runs = _pick(args, "table_runs")
    table = experiments.reproduce_cost_table(
        config, cells, runs_per_cell=runs, bundle=bundle,
        version=args.version, include_naive=args.table2,
        naive_reference_impact=args.naive_impact, jobs=args.jobs,
    )
    table_path = manifest.out / "table.csv"
    experiments.table_to_csv(
        experiments.CostTable(
            cells=[c for c in table.cells if c.label == "gafs"], failures=[], warnings=[]
        ),
        table_path,
    )
    manifest.add(table_path)
    if args.table2:
        cmp_path = manifest.out / "comparison.csv"
        experiments.table_to_csv(table, cmp_path, include_label=True)
        manifest.add(cmp_path)
    if table.warnings:
        manifest.extra["warnings"] = [list(map(str, w)) for w in table.warnings]
        for cell, msg in table.warnings:
            print(f"cell {cell} warning: {msg}", file=sys.stderr)
    if table.failures:
        manifest.extra["failures"] = [list(map(str, f)) for f in table.failures]
        for cell, msg in table.failures:
            print(f"cell {cell} skipped: {msg}", file=sys.stderr)
    manifest.write(config)
    for cell in table.cells:
        r = cell.row()
        ratio = "" if r["ratio"] is None else f" ratio {r['ratio']:.2f}"
        print(f"[{cell.label}] N={cell.N} T={cell.T:g}: predicted {cell.predicted:.2f}"
              + (f" sampled {r['sampled_mean']:.2f}{ratio}" if r["sampled_mean"] is not None else ""))
    if table.warnings and args.strict:
        return E_ASSUMPTION
    return E_OK


def _cmd_validate_assumptions(args) -> int:
    manifest = _Manifest(args, "validate-assumptions")
    shape = ShapeTable.from_csv(args.shape)
    if args.resilience:
        curve = ResilienceCurve.from_csv(args.resilience)
    elif args.rho is not None:
        curve = ResilienceCurve.constant(args.rho)
    else:
        raise ConfigError("provide --resilience or --rho")
    spec = ProblemSpec(X0=args.x0, N=args.n, T=args.t, shape=shape,
                       resilience=curve, version=args.version)
    report = validate_assumptions(spec)
    report_path = manifest.out / "assumptions.json"
    report_path.write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    manifest.add(report_path)
    manifest.write(None)
    for check in report.checks:
        print(f"{'PASS' if check.passed else 'FAIL'} {check.name}: {check.detail}")
    if not report.ok and args.strict:
        return E_ASSUMPTION
    return E_OK


# -- argument parsing --------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="execlab",
        description="agent-market calibration, optimal execution solving, and cost experiments",
    )
    parser.add_argument("--version", action="version", version=f"execlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--config", type=str, default=None, help="market config JSON")
        p.add_argument("--out", type=str, required=True, help="output directory")
        p.add_argument("--jobs", type=int, default=0,
                       help="worker threads (0 = all cores)")
        p.add_argument("--strict", action="store_true",
                       help="treat assumption-check failures as errors")
        p.add_argument("--desk-scale", action="store_true",
                       help="reduced burn-in and campaign sizes for quick runs")

    p = sub.add_parser("calibrate-shape", help="average book snapshots into a shape table")
    common(p)
    p.add_argument("--snapshots", type=int, default=None)
    p.set_defaults(handler=_cmd_calibrate_shape)

    p = sub.add_parser("calibrate-permanent", help="regress long-run ask shift on volume")
    common(p)
    p.add_argument("--volumes", type=str, default="25:300:25")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--post-steps", type=int, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--stride", type=int, default=100)
    p.set_defaults(handler=_cmd_calibrate_permanent)

    p = sub.add_parser("calibrate-resilience", help="sample decay ensembles and build curves")
    common(p)
    p.add_argument("--impacts", type=str, default="5:20:3")
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--taus", type=str, default="70,700,7000")
    p.add_argument("--side", choices=("sell", "buy"), default="sell")
    p.set_defaults(handler=_cmd_calibrate_resilience)

    p = sub.add_parser("solve", help="solve one optimal execution schedule")
    common(p)
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--version", type=int, choices=(1, 2), default=2, dest="version")
    p.add_argument("--shape", type=str, required=True)
    p.add_argument("--resilience", type=str, default=None)
    p.add_argument("--rho", type=float, default=None, help="constant resilience speed")
    p.set_defaults(handler=_cmd_solve)

    p = sub.add_parser("run-strategy", help="sample a strategy's market cost")
    common(p)
    p.add_argument("--strategy", type=str, required=True, help="strategy CSV (n,t_n,size)")
    p.add_argument("--runs", type=int, default=100)
    p.set_defaults(handler=_cmd_run_strategy)

    p = sub.add_parser("reproduce-tables", help="predicted-vs-sampled cost table")
    common(p)
    p.add_argument("--calibration", type=str, required=True,
                   help="directory with shape.csv, decay_D*.csv, fits.json")
    p.add_argument("--cells", type=str, default="40x400,40x4000,80x400,80x4000",
                   help="comma list of NxT cells")
    p.add_argument("--cells-file", type=str, default=None,
                   help="JSON file with {X0, cells: [[N,T],...], runs}")
    p.add_argument("--x0", type=float, default=200.0)
    p.add_argument("--runs", dest="table_runs", type=int, default=None)
    p.add_argument("--version", type=int, choices=(1, 2), default=2, dest="version")
    p.add_argument("--table2", action="store_true",
                   help="add naive constant-speed comparison rows")
    p.add_argument("--naive-impact", type=int, default=11)
    p.set_defaults(handler=_cmd_reproduce_tables)

    p = sub.add_parser("validate-assumptions", help="check theorem hypotheses")
    common(p)
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--version", type=int, choices=(1, 2), default=2, dest="version")
    p.add_argument("--shape", type=str, required=True)
    p.add_argument("--resilience", type=str, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.set_defaults(handler=_cmd_validate_assumptions)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else E_USAGE
    if args.jobs == 0:
        import os

        args.jobs = os.cpu_count() or 1
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return E_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return E_CONFIG
    except AssumptionViolatedError as exc:
        print(f"assumption violation: {exc}", file=sys.stderr)
        return E_ASSUMPTION
    except (NoRootError, NonPositiveLogArgumentError, CalibrationError, ValueError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return E_NUMERIC
    except ExeclabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return E_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
