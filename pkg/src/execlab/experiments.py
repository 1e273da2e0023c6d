"""Monte Carlo comparison of predicted and sampled execution costs.

A solved schedule is replayed inside the agent market: burn in, execute
the (integer-rounded) child orders with the forced-execution algorithm,
run the normal dynamics for tau rounds between them, and book the cost of
every unit as its execution price minus the best ask observed before the
first child order. That matches the model's impact-cost convention with
the unaffected price frozen, so the sampled statistics are directly
comparable with ``solver.predicted_cost``.

Real-valued schedules are apportioned to whole shares by largest
remainder, which preserves the total exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .calibration import CalibrationBundle
from .errors import ExeclabError, InsufficientDepthError
from .opinion_game import MarketConfig, best_quotes, burned_in_market, execute_large_buy, step
from .resilience import ResilienceCurve
from .rng import spawn_seed
from .solver import (
    ExecutionStrategy,
    ProblemSpec,
    predicted_cost,
    solve_constant_rho,
    solve_optimal,
    validate_assumptions,
)


def round_to_shares(sizes, total: int) -> np.ndarray:
    """Largest-remainder apportionment of a real schedule to whole shares.

    Floors every order, then hands the missing units to the largest
    fractional parts (ties to the earlier order), so the rounded schedule
    sums to ``total`` exactly and no order moves by one share or more.
    """
    sizes = np.asarray(sizes, dtype=np.float64)
    if abs(sizes.sum() - total) > 1e-6 * max(1.0, abs(total)):
        raise ValueError(f"schedule sums to {sizes.sum()!r}, expected {total}")
    floors = np.floor(sizes).astype(np.int64)
    remainder = int(total - floors.sum())
    fractions = sizes - floors
    order = np.lexsort((np.arange(len(sizes)), -fractions))
    out = floors.copy()
    out[order[:remainder]] += 1
    return out


@dataclass(frozen=True)
class SampledCosts:
    costs: np.ndarray
    discarded: int

    @property
    def runs(self) -> int:
        return len(self.costs)

    @property
    def mean(self) -> float:
        return float(self.costs.mean()) if len(self.costs) else float("nan")

    @property
    def standard_error(self) -> float:
        if len(self.costs) < 2:
            return float("nan")
        return float(self.costs.std(ddof=1) / math.sqrt(len(self.costs)))

    @property
    def quartiles(self) -> tuple[float, float]:
        if not len(self.costs):
            return (float("nan"), float("nan"))
        return (float(np.percentile(self.costs, 25)), float(np.percentile(self.costs, 75)))


def run_strategy_in_sim(
    config: MarketConfig,
    sizes,
    tau: float,
    runs: int,
    jobs: int = 1,
    seed_offset: int = 0,
) -> SampledCosts:
    """Sample the market cost of a schedule over independent seeded runs.

    ``sizes`` may be real valued; it is rounded to whole shares here. Runs
    whose executions exhaust the book are discarded and counted.
    """
    shares = round_to_shares(sizes, int(round(np.asarray(sizes, dtype=float).sum())))
    tau_steps = max(1, int(round(tau)))

    def one(r: int) -> float | None:
        cfg = replace(config, seed=spawn_seed(config.seed, seed_offset + r))
        state = burned_in_market(cfg)
        reference_ask = best_quotes(state)[1]
        cost = 0.0
        try:
            for n, v in enumerate(shares):
                if n > 0:
                    step(state, cfg, tau_steps)
                if v > 0:
                    prices = execute_large_buy(state, int(v), cfg)
                    cost += float((prices - reference_ask).sum())
        except InsufficientDepthError:
            return None
        return cost

    results = _run_indexed(one, runs, jobs)
    kept = np.array([r for r in results if r is not None], dtype=np.float64)
    return SampledCosts(costs=kept, discarded=runs - len(kept))


def _run_indexed(fn, n: int, jobs: int) -> list:
    if jobs <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, range(n)))


@dataclass(frozen=True)
class ExperimentCell:
    """Predicted-vs-sampled comparison for one (X0, N, T) parameter cell."""

    X0: float
    N: int
    T: float
    label: str
    sizes: np.ndarray
    predicted: float
    sampled: SampledCosts | None
    assumptions_ok: bool = True

    @property
    def ratio(self) -> float:
        if self.sampled is None or not self.sampled.runs:
            return float("nan")
        return self.sampled.mean / self.predicted

    def row(self) -> dict:
        mid = float(self.sizes[1]) if len(self.sizes) > 2 else float("nan")
        sampled_mean = self.sampled.mean if self.sampled and self.sampled.runs else None
        sampled_se = self.sampled.standard_error if self.sampled and self.sampled.runs else None
        return {
            "N": self.N,
            "T": self.T,
            "xi0": float(self.sizes[0]),
            "xi1": mid,
            "xiN": float(self.sizes[-1]),
            "predicted": self.predicted,
            "sampled_mean": sampled_mean,
            "sampled_se": sampled_se,
            "runs": self.sampled.runs if self.sampled else 0,
            "ratio": None if sampled_mean is None else self.ratio,
            "label": self.label,
        }


@dataclass(frozen=True)
class CostTable:
    cells: list[ExperimentCell]
    failures: list[tuple[tuple, str]]
    warnings: list[tuple[tuple, str]]


def reproduce_cost_table(
    config: MarketConfig,
    cells: list[tuple[float, int, float]],
    runs_per_cell: int,
    bundle: CalibrationBundle,
    version: int = 2,
    include_naive: bool = False,
    naive_reference_impact: int = 11,
    jobs: int = 1,
) -> CostTable:
    """Solve, predict, and sample every (X0, N, T) cell.

    Builds the recovery curve for each cell's own tau from the calibration
    bundle. With ``include_naive`` every cell also gets a constant-speed
    row using the Gauss-Newton rho of the reference decay path - the
    naive calibration a modeler without the impact-dependent theory would
    use - predicted under its own constant-speed dynamics.

    Theorem-hypothesis checks that fail on the calibrated curve are
    recorded on the cell (and as a failure note) but do not stop the
    solve: bracketing still finds the stationary schedule, only the
    global uniqueness guarantee is void. Hard solver failures (no root,
    non-positive orders) skip the cell; the table is still produced.
    """
    out: list[ExperimentCell] = []
    failures: list[tuple[tuple, str]] = []
    warnings: list[tuple[tuple, str]] = []
    for idx, (X0, N, T) in enumerate(cells):
        cell_seed = spawn_seed(config.seed, 1_000_003 + idx)
        cell_cfg = replace(config, seed=cell_seed)
        try:
            curve, _ = bundle.resilience_curve(T / N)
            spec = ProblemSpec(X0=X0, N=N, T=T, shape=bundle.shape, resilience=curve, version=version)
            report = validate_assumptions(spec)
            if not report.ok:
                warnings.append(((X0, N, T), report.describe_failures()))
            strategy = solve_optimal(spec, validate=False)
        except ExeclabError as exc:
            failures.append(((X0, N, T), str(exc)))
            continue
        rows: list[tuple[str, ExecutionStrategy, float]] = [
            ("gafs", strategy, float(predicted_cost(spec, strategy.sizes)))
        ]
        if include_naive:
            try:
                rho_hat = bundle.rho_hat(naive_reference_impact)
                naive = solve_constant_rho(spec, rho_hat)
                naive_spec = ProblemSpec(
                    X0=X0, N=N, T=T, shape=bundle.shape,
                    resilience=ResilienceCurve.constant(rho_hat), version=version,
                )
                rows.append(("afs_naive", naive, float(predicted_cost(naive_spec, naive.sizes))))
            except ExeclabError as exc:
                failures.append(((X0, N, T), f"naive row: {exc}"))
        for offset, (label, strat, pred) in enumerate(rows):
            sampled = None
            if runs_per_cell > 0:
                sampled = run_strategy_in_sim(
                    cell_cfg, strat.sizes, spec.tau, runs_per_cell,
                    jobs=jobs, seed_offset=offset * 10_000_019,
                )
            out.append(
                ExperimentCell(
                    X0=X0, N=N, T=T, label=label,
                    sizes=strat.sizes, predicted=pred, sampled=sampled,
                    assumptions_ok=report.ok,
                )
            )
    return CostTable(cells=out, failures=failures, warnings=warnings)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def table_to_csv(table: CostTable, path: str | Path, include_label: bool = False) -> None:
    cols = ["N", "T", "xi0", "xi1", "xiN", "predicted", "sampled_mean", "sampled_se", "runs", "ratio"]
    if include_label:
        cols = cols + ["label"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for cell in table.cells:
            row = cell.row()
            fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")
