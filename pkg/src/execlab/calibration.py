"""Extracting impact-model parameters from the agent market.

Four campaigns feed the model:

  * shape estimation: average many independent post-burn-in snapshots of
    the seller side of the book into a step shape function;
  * permanent impact: regress the long-run best-ask shift on executed
    volume (the model itself has no permanent impact; the regression
    quantifies how much reality deviates and feeds the decay analysis);
  * decay sampling: force executions of a prescribed price impact D and
    record the relaxation p(t) of the best ask, averaged pointwise over
    many runs;
  * resilience extraction: fit A + B exp(-rho t) to each averaged path by
    Gauss-Newton, then convert the path into an impact-dependent recovery
    speed

        rho_num(D, t) = [ln D - ln(<p>_t - (1 - e^{-t}) A_D)] / t

    where A_D is the fitted permanent level of that path and the 1-e^{-t}
    ramp keeps the small-t limit finite. The recovery time between child
    orders is tau, so the curve handed to the solver is the slice
    rho_num(. , tau).

Every campaign derives its per-run seeds from the config seed with
``spawn_seed``; results are bit-reproducible and independent of worker
scheduling.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import CalibrationError, NonPositiveLogArgumentError
from .opinion_game import (
    MarketConfig,
    best_quotes,
    burned_in_market,
    execute_large_buy,
    execute_until_impact,
    snapshot_book,
    step_recording,
)
from .resilience import ResilienceCurve
from .rng import spawn_seed
from .shape import ShapeTable


def _run_indexed(fn, n: int, jobs: int) -> list:
    """Map fn over range(n), optionally on a thread pool (the simulation
    kernels release the GIL). Results come back in index order, so
    aggregation does not depend on completion order."""
    if jobs <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, range(n)))


def _spawned(config: MarketConfig, index: int) -> MarketConfig:
    return replace(config, seed=spawn_seed(config.seed, index))


# -- shape estimation ----------------------------------------------------------


@dataclass(frozen=True)
class ShapeEstimate:
    """Averaged seller-side book profile with its dispersion bands."""

    table: ShapeTable
    offsets: np.ndarray
    mean: np.ndarray
    q1: np.ndarray
    q3: np.ndarray
    minimum: np.ndarray
    maximum: np.ndarray
    snapshot_count: int

    def bands_to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("offset,mean,q1,q3,min,max\n")
            for row in zip(self.offsets, self.mean, self.q1, self.q3, self.minimum, self.maximum):
                fh.write(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row) + "\n")


def estimate_shape(config: MarketConfig, snapshot_count: int, jobs: int = 1) -> ShapeEstimate:
    """Average independent burned-in snapshots into a step shape function.

    The table's support runs from offset 0 to the last offset before the
    mean count first vanishes; the tail value is the mean of the outermost
    stable cells, keeping cumulative volume unbounded beyond the data.
    """
    if snapshot_count < 2:
        raise CalibrationError("need at least 2 snapshots to average a shape")

    def one(i: int) -> np.ndarray:
        state = burned_in_market(_spawned(config, i))
        return snapshot_book(state).ask_counts()

    return shape_from_counts(_run_indexed(one, snapshot_count, jobs))


def shape_from_counts(counts: list[np.ndarray]) -> ShapeEstimate:
    """Aggregate dense per-snapshot seller counts into the shape estimate."""
    snapshot_count = len(counts)
    width = max(len(c) for c in counts)
    mat = np.zeros((snapshot_count, width))
    for r, c in enumerate(counts):
        mat[r, : len(c)] = c

    mean = mat.mean(axis=0)
    positive = mean > 0
    if not positive[0]:
        raise CalibrationError("no sellers at the best ask across all snapshots")
    support = int(np.argmin(positive)) if not positive.all() else width
    values = mean[:support]
    tail = float(values[-min(5, support):].mean())
    table = ShapeTable.from_values(0, values, tail_value=tail)
    return ShapeEstimate(
        table=table,
        offsets=np.arange(width, dtype=np.int64),
        mean=mean,
        q1=np.percentile(mat, 25, axis=0),
        q3=np.percentile(mat, 75, axis=0),
        minimum=mat.min(axis=0),
        maximum=mat.max(axis=0),
        snapshot_count=snapshot_count,
    )


# -- permanent impact ------------------------------------------------------------


@dataclass(frozen=True)
class PermanentImpactResult:
    volumes: np.ndarray
    mean_shift: np.ndarray
    se_shift: np.ndarray
    immediate_mean: np.ndarray
    immediate_se: np.ndarray
    samples_per_volume: int
    slope: float
    intercept: float
    r_squared: float

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("volume,mean_shift,se_shift,immediate_mean,immediate_se\n")
            for row in zip(self.volumes, self.mean_shift, self.se_shift, self.immediate_mean, self.immediate_se):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Ordinary least squares y ~ slope*x + intercept, with R^2."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def measure_permanent_impact(
    config: MarketConfig,
    volumes,
    samples_per_volume: int,
    post_steps: int = 500_000,
    window_steps: int = 100_000,
    sample_stride: int = 100,
    jobs: int = 1,
) -> PermanentImpactResult:
    """Long-run best-ask shift per executed volume, with an OLS line.

    Each sample burns in its own market, executes the buy, lets the market
    run ``post_steps`` more rounds and averages the best ask over the final
    ``window_steps``, sampled every ``sample_stride``. The immediate impact
    (ask right after execution minus before) is recorded from the same runs.
    """
    volumes = [int(v) for v in volumes]
    if len(set(volumes)) < 2:
        raise CalibrationError("need at least 2 distinct volumes for the regression")
    if window_steps > post_steps:
        raise CalibrationError("window cannot be longer than the post-trade run")

    def one(idx: int) -> tuple[float, float]:
        v = volumes[idx // samples_per_volume]
        state = burned_in_market(_spawned(config, idx))
        a0 = best_quotes(state)[1]
        execute_large_buy(state, v, config)
        immediate = best_quotes(state)[1] - a0
        _, asks = step_recording(state, config, post_steps, stride=sample_stride)
        keep = max(1, window_steps // sample_stride)
        return float(asks[-keep:].mean() - a0), float(immediate)

    rows = _run_indexed(one, len(volumes) * samples_per_volume, jobs)
    shifts = np.array([r[0] for r in rows]).reshape(len(volumes), samples_per_volume)
    imm = np.array([r[1] for r in rows]).reshape(len(volumes), samples_per_volume)
    mean_shift = shifts.mean(axis=1)
    slope, intercept, r2 = linear_fit(np.array(volumes, dtype=float), mean_shift)
    se = shifts.std(axis=1, ddof=1) / math.sqrt(samples_per_volume)
    imm_se = imm.std(axis=1, ddof=1) / math.sqrt(samples_per_volume)
    return PermanentImpactResult(
        volumes=np.array(volumes, dtype=np.int64),
        mean_shift=mean_shift,
        se_shift=se,
        immediate_mean=imm.mean(axis=1),
        immediate_se=imm_se,
        samples_per_volume=samples_per_volume,
        slope=slope,
        intercept=intercept,
        r_squared=r2,
    )


# -- decay sampling ----------------------------------------------------------------


@dataclass(frozen=True)
class DecayEnsemble:
    """Relaxation paths of the best ask after executions of impact D."""

    target_impact: int
    side: str
    paths: np.ndarray  # runs x (horizon + 1), t = 0 is right after execution
    mean: np.ndarray
    q1: np.ndarray
    q3: np.ndarray
    minimum: np.ndarray
    maximum: np.ndarray
    run_count: int
    discarded: int
    mean_volume: float

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,mean,q1,q3,min,max\n")
            for t in range(len(self.mean)):
                fh.write(
                    f"{t},{float(self.mean[t])!r},{float(self.q1[t])!r},{float(self.q3[t])!r},"
                    f"{float(self.minimum[t])!r},{float(self.maximum[t])!r}\n"
                )


def sample_decay(
    config: MarketConfig,
    target_impact: int,
    runs: int,
    horizon: int = 50_000,
    side: str = "sell",
    jobs: int = 1,
) -> DecayEnsemble:
    """Record the pointwise-averaged recovery after impact-D executions.

    Trading stops as soon as the best ask has moved by ``target_impact``
    (the execution volume is endogenous); runs that exhaust the book
    before reaching it are discarded and counted. Paths are signed so that
    the displacement is positive for both sides.
    """
    if target_impact < 1:
        raise CalibrationError("target impact must be at least 1")
    if runs < 1:
        raise CalibrationError("need at least one run")
    sign = -1.0 if side == "sell" else 1.0

    def one(i: int) -> tuple[np.ndarray, int] | None:
        state = burned_in_market(_spawned(config, i))
        a0 = best_quotes(state)[1]
        units, reached = execute_until_impact(state, target_impact, config, side=side)
        if not reached:
            return None
        p0 = sign * (best_quotes(state)[1] - a0)
        _, asks = step_recording(state, config, horizon, stride=1)
        path = np.empty(horizon + 1)
        path[0] = p0
        path[1:] = sign * (asks - a0)
        return path, units

    rows = _run_indexed(one, runs, jobs)
    kept = [r for r in rows if r is not None]
    if not kept:
        raise CalibrationError(f"all {runs} runs failed to reach impact {target_impact}")
    paths = np.stack([r[0] for r in kept])
    return DecayEnsemble(
        target_impact=target_impact,
        side=side,
        paths=paths,
        mean=paths.mean(axis=0),
        q1=np.percentile(paths, 25, axis=0),
        q3=np.percentile(paths, 75, axis=0),
        minimum=paths.min(axis=0),
        maximum=paths.max(axis=0),
        run_count=len(kept),
        discarded=runs - len(kept),
        mean_volume=float(np.mean([r[1] for r in kept])),
    )


# -- exponential fitting --------------------------------------------------------------


@dataclass(frozen=True)
class ExponentialFit:
    """Least-squares fit of A + B exp(-rho t)."""

    A: float
    B: float
    rho_hat: float
    residual_norm: float
    iterations: int
    converged: bool
    message: str = ""


def fit_exponential(values, times=None, max_iter: int = 200, step_tol: float = 1e-10) -> ExponentialFit:
    """Gauss-Newton fit of A + B exp(-rho t) with three free parameters.

    Initialization: A from the tail mean, B from head minus tail, rho from
    the log-slope of the first tenth of the samples. Steps that do not
    decrease the residual are halved (up to 30 times); convergence is a
    relative step below ``step_tol``. Never raises on non-convergence: the
    flag and message report it, and a constant path comes back with B = 0
    and rho marked unidentifiable.
    """
    y = np.asarray(values, dtype=np.float64)
    if y.ndim != 1 or len(y) < 3:
        raise CalibrationError("need a 1-d path of at least 3 samples")
    t = np.arange(len(y), dtype=np.float64) if times is None else np.asarray(times, dtype=np.float64)
    if t.shape != y.shape:
        raise CalibrationError("times and values must have equal length")

    tail = y[-max(1, len(y) // 5):].mean()
    head = y[: max(1, len(y) // 50)].mean()
    A, B = float(tail), float(head - tail)
    scale = max(abs(y).max(), 1e-30)
    if abs(B) < 1e-12 * scale and y.std() < 1e-12 * scale:
        return ExponentialFit(
            A=float(y.mean()), B=0.0, rho_hat=float("nan"),
            residual_norm=float(np.linalg.norm(y - y.mean())), iterations=0,
            converged=False, message="constant path: rho unidentifiable",
        )

    n_head = max(3, len(y) // 10)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.log(np.where((y[:n_head] - A) / B > 0, (y[:n_head] - A) / B, np.nan))
    good = np.isfinite(logs)
    if good.sum() >= 2:
        rho = -linear_fit(t[:n_head][good], logs[good])[0]
    else:
        rho = 1.0 / max(t[-1], 1.0)
    rho = max(rho, 1e-12)

    params = np.array([A, B, rho])
    resid = y - (params[0] + params[1] * np.exp(-params[2] * t))
    norm = float(np.linalg.norm(resid))
    converged = False
    message = "maximum iterations reached"
    it = 0
    for it in range(1, max_iter + 1):
        e = np.exp(-params[2] * t)
        J = np.column_stack([np.ones_like(t), e, -params[1] * t * e])
        delta, *_ = np.linalg.lstsq(J, resid, rcond=None)
        accepted = False
        for _ in range(30):
            trial = params + delta
            if trial[2] > 0:
                trial_resid = y - (trial[0] + trial[1] * np.exp(-trial[2] * t))
                trial_norm = float(np.linalg.norm(trial_resid))
                if trial_norm <= norm:
                    accepted = True
                    break
            delta = delta / 2.0
        if not accepted:
            message = "damping failed to reduce the residual"
            break
        step = float(np.linalg.norm(delta) / max(1.0, np.linalg.norm(params)))
        params, resid, norm = trial, trial_resid, trial_norm
        if step < step_tol:
            converged = True
            message = ""
            break
    if converged and not params[2] > 0:
        converged = False
        message = "fitted rho not positive"
    return ExponentialFit(
        A=float(params[0]), B=float(params[1]), rho_hat=float(params[2]),
        residual_norm=norm, iterations=it, converged=converged, message=message,
    )


# -- resilience extraction ---------------------------------------------------------------


def resilience_from_decay(target_impact: float, mean_path, permanent_level: float, t: int) -> float:
    """Recovery speed read off an averaged decay path at lag t.

    Applies [ln D - ln(<p>_t - (1 - e^{-t}) A_D)] / t verbatim; with
    A_D = 0 this is the plain two-point log slope.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    path = np.asarray(mean_path, dtype=np.float64)
    if t >= len(path):
        raise ValueError(f"t={t} beyond the recorded horizon {len(path) - 1}")
    arg = path[t] - (1.0 - math.exp(-t)) * permanent_level
    if not arg > 0:
        raise NonPositiveLogArgumentError(
            f"mean path at t={t} is at or below the permanent level "
            f"({path[t]:.6g} vs {(1.0 - math.exp(-t)) * permanent_level:.6g}); "
            "use a smaller t or a larger target impact"
        )
    return (math.log(target_impact) - math.log(arg)) / t


@dataclass(frozen=True)
class CurveBuildReport:
    tau: float
    knots: list[tuple[float, float]]
    skipped: list[tuple[int, str]]
    rho_min: float
    rho_max: float
    min_overtaking_margin: float

    @property
    def ok(self) -> bool:
        return self.rho_min > 0 and self.min_overtaking_margin > 0


def build_resilience_curve(
    mean_paths: dict[int, np.ndarray],
    tau: float,
    permanent_levels: dict[int, float] | None = None,
) -> tuple[ResilienceCurve, CurveBuildReport]:
    """Interpolate rho_num(D, tau) knots into a solver-ready curve.

    ``mean_paths`` maps each target impact D to its averaged decay path;
    the per-D permanent level defaults to the Gauss-Newton fit's A of that
    path. Knots whose fit fails or whose log argument is non-positive are
    skipped and reported; at least 3 valid knots are required.
    """
    t = int(round(tau))
    if t < 1:
        raise CalibrationError("tau must round to a positive number of steps")
    knots: list[tuple[float, float]] = []
    skipped: list[tuple[int, str]] = []
    for D in sorted(mean_paths):
        path = np.asarray(mean_paths[D], dtype=np.float64)
        if permanent_levels is not None and D in permanent_levels:
            A_D = permanent_levels[D]
        else:
            fit = fit_exponential(path)
            if not fit.converged:
                skipped.append((D, f"exponential fit did not converge: {fit.message}"))
                continue
            A_D = fit.A
        try:
            rho = resilience_from_decay(D, path, A_D, t)
        except NonPositiveLogArgumentError as exc:
            skipped.append((D, str(exc)))
            continue
        if not rho > 0:
            skipped.append((D, f"non-positive recovery speed {rho:.6g}"))
            continue
        knots.append((float(D), rho))
    if len(knots) < 3:
        raise CalibrationError(
            f"only {len(knots)} valid resilience knots (need 3); skipped: {skipped}"
        )
    xs = np.array([k[0] for k in knots])
    ys = np.array([k[1] for k in knots])
    curve = ResilienceCurve(xs, ys)
    grid = np.linspace(-1.5 * xs[-1], 1.5 * xs[-1], 2001)
    grid = grid[grid != 0]
    margin = float(np.min(1.0 - tau * curve.rho_prime(grid) * grid))
    report = CurveBuildReport(
        tau=tau,
        knots=knots,
        skipped=skipped,
        rho_min=float(ys.min()),
        rho_max=float(ys.max()),
        min_overtaking_margin=margin,
    )
    return curve, report


# -- calibration bundle (directory of campaign artifacts) -----------------------------------


@dataclass
class CalibrationBundle:
    """Everything the solver and experiment layers need, reloadable from disk."""

    shape: ShapeTable
    mean_paths: dict[int, np.ndarray]
    fits: dict[int, ExponentialFit]

    def permanent_levels(self) -> dict[int, float]:
        return {D: fit.A for D, fit in self.fits.items() if fit.converged}

    def resilience_curve(self, tau: float) -> tuple[ResilienceCurve, CurveBuildReport]:
        return build_resilience_curve(self.mean_paths, tau, self.permanent_levels())

    def rho_hat(self, reference_impact: int) -> float:
        """The naive constant speed: the Gauss-Newton rho of one reference path."""
        if reference_impact not in self.fits:
            raise CalibrationError(f"no decay fit for impact {reference_impact}")
        fit = self.fits[reference_impact]
        if not fit.converged:
            raise CalibrationError(f"decay fit for impact {reference_impact} did not converge")
        return fit.rho_hat

    def save(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        shape_path = out / "shape.csv"
        self.shape.to_csv(shape_path)
        written.append(shape_path)
        for D, path in sorted(self.mean_paths.items()):
            p = out / f"decay_D{D}.csv"
            with open(p, "w", encoding="utf-8") as fh:
                fh.write("t,mean\n")
                for t, v in enumerate(path):
                    fh.write(f"{t},{float(v)!r}\n")
            written.append(p)
        fits_path = out / "fits.json"
        fits_path.write_text(
            json.dumps(
                {
                    str(D): {
                        "A": f.A, "B": f.B, "rho_hat": f.rho_hat,
                        "residual_norm": f.residual_norm, "iterations": f.iterations,
                        "converged": f.converged, "message": f.message,
                    }
                    for D, f in sorted(self.fits.items())
                },
                indent=2,
            ),
            encoding="utf-8",
        )
        written.append(fits_path)
        return written

    @classmethod
    def load(cls, in_dir: str | Path) -> "CalibrationBundle":
        src = Path(in_dir)
        shape = ShapeTable.from_csv(src / "shape.csv")
        fits_raw = json.loads((src / "fits.json").read_text(encoding="utf-8"))
        fits = {
            int(D): ExponentialFit(
                A=v["A"], B=v["B"], rho_hat=v["rho_hat"],
                residual_norm=v["residual_norm"], iterations=v["iterations"],
                converged=v["converged"], message=v.get("message", ""),
            )
            for D, v in fits_raw.items()
        }
        mean_paths = {}
        for p in sorted(src.glob("decay_D*.csv")):
            D = int(p.stem.removeprefix("decay_D"))
            data = np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2)
            mean_paths[D] = data[:, 1]
        if not mean_paths:
            raise CalibrationError(f"{src}: no decay paths found")
        return cls(shape=shape, mean_paths=mean_paths, fits=fits)
