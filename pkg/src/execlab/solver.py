"""Optimal execution schedules for the order-book impact model.

A trader must buy X0 > 0 shares in N+1 equidistant child orders on [0, T].
For both recovery conventions (version 1: volume impact reverts; version
2: price impact reverts) the unique optimal schedule has one defining
unknown, the first order xi0: the intermediate orders repurchase exactly
the volume recovered over one interval, and the last order closes the
budget. xi0 is the root of a strictly increasing scalar function, negative
at zero, so bracketing root-finding is guaranteed to work.

The impact-dependent resilience enters the equations through its value
and derivative at a single anchor (xi0 for version 1, F^-1(xi0) for
version 2); with a constant resilience the equations reduce to the
classical constant-speed model, for which ``solve_constant_rho`` provides
an independently coded route used to cross-check the general solver.

``predicted_cost`` evaluates the model's deterministic impact cost of an
arbitrary schedule (unaffected price contributes nothing under the A0 = 0
convention used throughout), and ``brute_force_optimum`` grid-searches
low-dimensional schedules as an optimality oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AssumptionViolatedError, NoRootError
from .resilience import ResilienceCurve
from .shape import ShapeTable

RESIDUAL_TOL = 1e-12
BRACKET_GROWTH_CAP = 10.0
_DENOM_FLOOR = 1e-14


@dataclass(frozen=True)
class ProblemSpec:
    """One execution problem: volume, trading grid, book shape, recovery."""

    X0: float
    N: int
    T: float
    shape: ShapeTable
    resilience: ResilienceCurve
    version: int = 2

    def __post_init__(self) -> None:
        if not self.X0 > 0:
            raise ValueError("X0 must be positive")
        if self.N < 0:
            raise ValueError("N must be non-negative")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.version not in (1, 2):
            raise ValueError("version must be 1 or 2")

    @property
    def tau(self) -> float:
        """Recovery time between consecutive orders (T for the degenerate
        single-order problem, where it is never used)."""
        return self.T / self.N if self.N >= 1 else self.T


@dataclass(frozen=True)
class SolverDiagnostics:
    bracket: tuple[float, float]
    iterations: int
    residual: float
    converged: bool


@dataclass(frozen=True)
class ExecutionStrategy:
    sizes: np.ndarray
    times: np.ndarray
    version: int
    diagnostics: SolverDiagnostics

    def __post_init__(self) -> None:
        sizes = np.asarray(self.sizes, dtype=np.float64)
        times = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "times", times)

    @property
    def total(self) -> float:
        return float(self.sizes.sum())


# -- the h functions of the optimality conditions ------------------------------


def _decay_factor(spec: ProblemSpec, x) -> float:
    return math.exp(-spec.tau * spec.resilience.rho(x))


def h1(x: float, spec: ProblemSpec) -> float:
    """Marginal-cost balance function for version 1 (argument: volume impact)."""
    F_inv = spec.shape.F_inverse
    curve = spec.resilience
    a = _decay_factor(spec, x)
    w = a * (1.0 - spec.tau * curve.rho_prime(x) * x)
    denom = 1.0 - w
    if abs(denom) < _DENOM_FLOOR:
        raise AssumptionViolatedError(f"h1 denominator vanished at x={x!r}")
    return (F_inv(x) - w * F_inv(a * x)) / denom


def h2(x: float, spec: ProblemSpec) -> float:
    """Marginal-cost balance function for version 2 (argument: price impact)."""
    f = spec.shape.f
    curve = spec.resilience
    a = _decay_factor(spec, x)
    w = 1.0 - spec.tau * curve.rho_prime(x) * x
    denom = f(x) - a * f(a * x) * w
    if abs(denom) < _DENOM_FLOOR:
        raise AssumptionViolatedError(f"h2 denominator vanished at x={x!r}")
    return x * (f(x) - a * a * f(a * x) * w) / denom


def _h_samples(spec: ProblemSpec, xs: np.ndarray) -> tuple[np.ndarray, int]:
    """Vectorized evaluation of the version's h on a grid.

    Returns the samples and the number of grid points whose denominator
    fell below the floor (those samples are NaN).
    """
    curve, shape, tau = spec.resilience, spec.shape, spec.tau
    a = np.exp(-tau * curve.rho(xs))
    w = 1.0 - tau * curve.rho_prime(xs) * xs
    if spec.version == 1:
        denom = 1.0 - a * w
        numer = shape.F_inverse(xs) - a * w * shape.F_inverse(a * xs)
    else:
        fa = shape.f(a * xs)
        denom = shape.f(xs) - a * fa * w
        numer = xs * (shape.f(xs) - a * a * fa * w)
    bad = np.abs(denom) < _DENOM_FLOOR
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(bad, np.nan, numer / np.where(bad, 1.0, denom))
    return out, int(bad.sum())


# -- root finding ---------------------------------------------------------------


@dataclass(frozen=True)
class _RootResult:
    x: float
    residual: float
    iterations: int
    bracket: tuple[float, float]
    converged: bool


def _bracketed_root(fn, lo: float, hi: float, hi_cap: float, max_iter: int = 200) -> _RootResult:
    """Find the zero of a (piecewise) increasing fn with fn(lo) < 0.

    Bisection with secant refinement; the upper bracket grows geometrically
    until a sign change appears or hi_cap is reached. Converges on
    |fn| <= RESIDUAL_TOL, or on bracket collapse (which happens when the
    zero sits on a jump of a step-shape equation: the bracket then pins the
    jump location and the one-sided residual is reported as-is).
    """
    flo = fn(lo)
    if flo > 0:
        raise NoRootError("function already positive at the lower bracket")
    fhi = fn(hi)
    while fhi < 0:
        if hi >= hi_cap:
            raise NoRootError(f"no sign change in [{lo}, {hi_cap}]")
        hi = min(2.0 * hi, hi_cap)
        fhi = fn(hi)

    x, fx = hi, fhi
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if fhi != flo:
            x = hi - fhi * (hi - lo) / (fhi - flo)
        if not (lo < x < hi):
            x = 0.5 * (lo + hi)
        # keep genuine bisection progress when secant steps stall at an edge
        if min(x - lo, hi - x) < 0.01 * (hi - lo):
            x = 0.5 * (lo + hi)
        fx = fn(x)
        if abs(fx) <= RESIDUAL_TOL:
            return _RootResult(x, fx, iterations, (lo, hi), True)
        if fx < 0:
            lo, flo = x, fx
        else:
            hi, fhi = x, fx
        if hi - lo <= 4.0 * np.finfo(float).eps * max(1.0, abs(hi)):
            x, fx = (lo, flo) if abs(flo) < abs(fhi) else (hi, fhi)
            return _RootResult(x, fx, iterations, (lo, hi), True)
    return _RootResult(x, fx, iterations, (lo, hi), False)


# -- solvers ----------------------------------------------------------------------


def _strategy_equation(spec: ProblemSpec):
    """The strictly increasing function whose zero is the first order size."""
    shape, N, X0 = spec.shape, spec.N, spec.X0

    if spec.version == 1:

        def fn(x: float) -> float:
            a = _decay_factor(spec, x)
            return h1(x, spec) - shape.F_inverse(X0 - N * (1.0 - a) * x)

    else:

        def fn(y: float) -> float:
            d = shape.F_inverse(y)
            a = _decay_factor(spec, d)
            recovered = y - shape.F(a * d)
            return h2(d, spec) - shape.F_inverse(X0 - N * recovered)

    return fn


def _assemble(spec: ProblemSpec, x0: float, root: _RootResult) -> ExecutionStrategy:
    shape, N, X0 = spec.shape, spec.N, spec.X0
    if spec.version == 1:
        a = _decay_factor(spec, x0)
        mid = x0 * (1.0 - a)
    else:
        d = shape.F_inverse(x0)
        a = _decay_factor(spec, d)
        mid = x0 - shape.F(a * d)
    sizes = np.empty(N + 1)
    sizes[0] = x0
    sizes[1:N] = mid
    sizes[N] = X0 - x0 - (N - 1) * mid
    if np.any(sizes <= 0):
        raise AssumptionViolatedError(
            f"strategy equation produced a non-positive order: {sizes.tolist()}"
        )
    times = np.arange(N + 1) * spec.tau
    diag = SolverDiagnostics(
        bracket=root.bracket,
        iterations=root.iterations,
        residual=root.residual,
        converged=root.converged,
    )
    return ExecutionStrategy(sizes=sizes, times=times, version=spec.version, diagnostics=diag)


def solve_optimal(spec: ProblemSpec, validate: bool = True) -> ExecutionStrategy:
    """Unique optimal schedule for the given problem.

    With ``validate`` the theorem hypotheses are checked first and a
    failure raises AssumptionViolatedError carrying the report.
    """
    if validate:
        report = validate_assumptions(spec)
        if not report.ok:
            raise AssumptionViolatedError(report.describe_failures())
    if spec.N == 0:
        diag = SolverDiagnostics(bracket=(spec.X0, spec.X0), iterations=0, residual=0.0, converged=True)
        return ExecutionStrategy(
            sizes=np.array([spec.X0]), times=np.array([0.0]), version=spec.version, diagnostics=diag
        )
    fn = _strategy_equation(spec)
    root = _bracketed_root(fn, 0.0, 1.05 * spec.X0, BRACKET_GROWTH_CAP * spec.X0)
    return _assemble(spec, root.x, root)


def solve_constant_rho(spec: ProblemSpec, rho: float) -> ExecutionStrategy:
    """Classical constant-resilience schedule (independent code path).

    Ignores ``spec.resilience``; solves the constant-speed optimality
    equations directly in their original arrangement. Used both as a
    cross-check of the general solver and as the 'naive constant speed'
    strategy in model comparisons.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    shape, N, X0 = spec.shape, spec.N, spec.X0
    if N == 0:
        diag = SolverDiagnostics(bracket=(X0, X0), iterations=0, residual=0.0, converged=True)
        return ExecutionStrategy(
            sizes=np.array([X0]), times=np.array([0.0]), version=spec.version, diagnostics=diag
        )
    a = math.exp(-rho * spec.tau)

    if spec.version == 1:

        def fn(x: float) -> float:
            lhs = (shape.F_inverse(x) - a * shape.F_inverse(a * x)) / (1.0 - a)
            return lhs - shape.F_inverse(X0 - N * (1.0 - a) * x)

    else:

        def fn(y: float) -> float:
            d = shape.F_inverse(y)
            fa = shape.f(a * d)
            denom = shape.f(d) - a * fa
            if abs(denom) < _DENOM_FLOOR:
                raise AssumptionViolatedError(f"constant-rho h2 denominator vanished at {d!r}")
            lhs = d * (shape.f(d) - a * a * fa) / denom
            return lhs - shape.F_inverse(X0 - N * (y - shape.F(a * d)))

    root = _bracketed_root(fn, 0.0, 1.05 * X0, BRACKET_GROWTH_CAP * X0)
    x0 = root.x
    mid = x0 * (1.0 - a) if spec.version == 1 else x0 - shape.F(a * shape.F_inverse(x0))
    sizes = np.empty(N + 1)
    sizes[0] = x0
    sizes[1:N] = mid
    sizes[N] = X0 - x0 - (N - 1) * mid
    if np.any(sizes <= 0):
        raise AssumptionViolatedError(
            f"constant-rho equation produced a non-positive order: {sizes.tolist()}"
        )
    diag = SolverDiagnostics(
        bracket=root.bracket, iterations=root.iterations, residual=root.residual, converged=root.converged
    )
    return ExecutionStrategy(
        sizes=sizes, times=np.arange(N + 1) * spec.tau, version=spec.version, diagnostics=diag
    )


# -- cost functional ---------------------------------------------------------------


def predicted_cost(spec: ProblemSpec, sizes) -> float | np.ndarray:
    """Deterministic impact cost of a schedule under the model dynamics.

    Accepts one schedule (1-d, length N+1) or a batch (2-d, one schedule
    per row). The unaffected-price term is excluded (A0 = 0 convention):
    the value is the sum of the exact integrals of x f(x) over the price
    intervals each order consumes, with version-appropriate recovery in
    between (speed frozen at the post-trade anchor).
    """
    arr = np.asarray(sizes, dtype=np.float64)
    single = arr.ndim == 1
    mat = arr[None, :] if single else arr
    if mat.shape[1] != spec.N + 1:
        raise ValueError(f"schedule must have {spec.N + 1} orders")
    shape, curve, tau = spec.shape, spec.resilience, spec.tau

    total = np.zeros(mat.shape[0])
    if spec.version == 1:
        E = np.zeros(mat.shape[0])
        for n in range(spec.N + 1):
            E_post = E + mat[:, n]
            total += shape.G(E_post) - shape.G(E)
            if n < spec.N:
                E = E_post * np.exp(-tau * curve.rho(E_post))
    else:
        D = np.zeros(mat.shape[0])
        for n in range(spec.N + 1):
            D_post = shape.F_inverse(shape.F(D) + mat[:, n])
            total += shape.F_tilde(D_post) - shape.F_tilde(D)
            if n < spec.N:
                D = D_post * np.exp(-tau * curve.rho(D_post))
    return float(total[0]) if single else total


# -- brute-force oracle -------------------------------------------------------------


@dataclass(frozen=True)
class BruteForceResult:
    sizes: np.ndarray
    cost: float
    grid_step: float
    evaluated: int


def brute_force_optimum(
    spec: ProblemSpec,
    grid_resolution: float | None = None,
    min_leg: float | None = None,
) -> BruteForceResult:
    """Grid-search the cost functional over signed schedules summing to X0.

    Only feasible for N <= 3 (grid dimensionality). Each free order ranges
    over [min_leg, X0] on a grid of the given step; the last order closes
    the budget and is kept when it falls in the same range. Used as an
    independent optimality oracle for the closed-form schedules.
    """
    if spec.N > 3:
        raise ValueError("brute force search is limited to N <= 3")
    step = spec.X0 / 200.0 if grid_resolution is None else float(grid_resolution)
    lo = -spec.X0 / 4.0 if min_leg is None else float(min_leg)
    axis = np.arange(math.ceil(lo / step), math.floor(spec.X0 / step) + 1, dtype=np.float64) * step

    if spec.N == 0:
        sizes = np.array([spec.X0])
        return BruteForceResult(sizes, float(predicted_cost(spec, sizes)), step, 1)

    best_cost = np.inf
    best = None
    evaluated = 0
    free = spec.N  # free coordinates; the last order is determined
    grids = np.meshgrid(*([axis] * (free - 1)), indexing="ij") if free > 1 else []
    inner = (
        np.stack([g.ravel() for g in grids], axis=1)
        if free > 1
        else np.zeros((1, 0))
    )
    for x0 in axis:
        block = np.empty((inner.shape[0], spec.N + 1))
        block[:, 0] = x0
        if free > 1:
            block[:, 1:free] = inner
        block[:, free] = spec.X0 - block[:, :free].sum(axis=1)
        ok = (block[:, free] >= lo - 1e-12) & (block[:, free] <= spec.X0 + 1e-12)
        if not ok.any():
            continue
        cand = block[ok]
        costs = predicted_cost(spec, cand)
        evaluated += len(cand)
        k = int(np.argmin(costs))
        if costs[k] < best_cost:
            best_cost = float(costs[k])
            best = cand[k].copy()
    if best is None:
        raise NoRootError("no admissible schedule on the search grid")
    return BruteForceResult(best, best_cost, step, evaluated)


# -- assumption validation -----------------------------------------------------------


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class AssumptionReport:
    version: int
    tau: float
    checks: list[AssumptionCheck] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def describe_failures(self) -> str:
        bad = [f"{c.name}: {c.detail}" for c in self.checks if not c.passed]
        return "; ".join(bad) if bad else "all assumption checks passed"

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "tau": self.tau,
            "ok": self.ok,
            "checks": [
                {"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks
            ],
        }


def validate_assumptions(spec: ProblemSpec, n_points: int = 10_000) -> AssumptionReport:
    """Check the hypotheses of the optimal-strategy theorems on a grid.

    The grid spans symmetric impacts up to 1.5x the relevant scale (volume
    X0 for version 1, the matching price impact for version 2). Report
    only; callers decide whether failures are fatal.
    """
    curve, shape, tau = spec.resilience, spec.shape, spec.tau
    if spec.version == 1:
        x_hi = 1.5 * spec.X0
    else:
        x_hi = abs(spec.shape.F_inverse(1.5 * spec.X0)) + 1.0
    grid = np.linspace(-x_hi, x_hi, n_points)
    grid = grid[grid != 0.0]

    rho_vals = curve.rho(grid)
    rho_der = curve.rho_prime(grid)
    checks: list[AssumptionCheck] = []

    k, K = float(np.min(rho_vals)), float(np.max(rho_vals))
    checks.append(
        AssumptionCheck(
            "rho_bounds",
            bool(k > 0 and np.isfinite(K)),
            f"range within [{k:.6g}, {K:.6g}]",
        )
    )

    overtake = 1.0 - tau * rho_der * grid
    n_bad = int(np.sum(overtake <= 0))
    checks.append(
        AssumptionCheck(
            "no_overtaking",
            n_bad == 0,
            f"min(1 - tau*rho'(x)*x) = {float(np.min(overtake)):.6g} ({n_bad} grid violations)",
        )
    )

    if spec.version == 1:
        contraction = np.exp(-tau * rho_vals) * overtake
        n_bad = int(np.sum(contraction >= 1.0))
        checks.append(
            AssumptionCheck(
                "decay_contraction",
                n_bad == 0,
                f"max factor {float(np.max(contraction)):.6g} ({n_bad} grid violations)",
            )
        )
    else:
        # positive cells plus a positive constant tail bound f away from zero,
        # so x^2 * inf f over the recovery interval grows without bound
        fmin = float(min(shape.values.min(), shape.tail_value))
        checks.append(
            AssumptionCheck(
                "shape_growth",
                fmin > 0.0,
                f"global density floor {fmin:.6g}",
            )
        )

    hx = np.linspace(0.0, x_hi, n_points)
    hv, n_denoms = _h_samples(spec, hx)
    if n_denoms:
        checks.append(
            AssumptionCheck("h_one_to_one", False, f"{n_denoms} vanishing denominators on the grid")
        )
    else:
        diffs = np.diff(hv)
        n_bad = int(np.sum(diffs <= 0))
        checks.append(
            AssumptionCheck(
                "h_one_to_one",
                n_bad == 0,
                f"{n_bad} non-increasing sample steps out of {len(diffs)}",
            )
        )

    if not curve.is_constant:
        knot_list = ", ".join(f"{v:g}" for v in curve.knots)
        checks.append(
            AssumptionCheck(
                "twice_differentiable",
                True,
                f"piecewise cubic: second derivative jumps possible at knots [{knot_list}]",
            )
        )
    return AssumptionReport(version=spec.version, tau=tau, checks=checks)


# -- export ---------------------------------------------------------------------------


def strategy_to_csv(strategy: ExecutionStrategy, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("n,t_n,size\n")
        for n, (t, s) in enumerate(zip(strategy.times, strategy.sizes)):
            fh.write(f"{n},{float(t)!r},{float(s)!r}\n")


def diagnostics_to_json(
    strategy: ExecutionStrategy, path: str | Path, report: AssumptionReport | None = None
) -> None:
    payload = {
        "version": strategy.version,
        "total": strategy.total,
        "bracket": list(strategy.diagnostics.bracket),
        "iterations": strategy.diagnostics.iterations,
        "residual": strategy.diagnostics.residual,
        "converged": strategy.diagnostics.converged,
    }
    if report is not None:
        payload["assumptions"] = report.to_dict()
    Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")
