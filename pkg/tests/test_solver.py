import math

import numpy as np
import pytest

from execlab import impact
from execlab.errors import AssumptionViolatedError
from execlab.resilience import ResilienceCurve
from execlab.shape import ShapeTable
from execlab.solver import (
    ProblemSpec,
    brute_force_optimum,
    h1,
    h2,
    predicted_cost,
    solve_constant_rho,
    solve_optimal,
    strategy_to_csv,
    validate_assumptions,
)

from conftest import random_step_shape, random_valid_curve


def _block_spec(X0, N, rho, tau, q=1.0, version=1):
    return ProblemSpec(
        X0=X0, N=N, T=N * tau if N else tau,
        shape=ShapeTable.block(q),
        resilience=ResilienceCurve.constant(rho),
        version=version,
    )


def analytic_block_first_order(X0, N, rho, tau):
    a = math.exp(-rho * tau)
    return X0 / (N * (1.0 - a) + 1.0 + a)


# -- h functions ---------------------------------------------------------------


def test_h_functions_block_closed_form():
    spec = _block_spec(100.0, 4, rho=0.3, tau=2.0)
    a = math.exp(-0.3 * 2.0)
    for x in (0.5, 3.0, 17.2):
        assert h1(x, spec) == pytest.approx(x * (1 + a), rel=1e-13)
        assert h2(x, spec) == pytest.approx(x * (1 + a), rel=1e-13)


def test_h_fixed_point_at_zero():
    rng = np.random.default_rng(4)
    shape = random_step_shape(rng)
    curve = random_valid_curve(rng, tau=2.0)
    spec = ProblemSpec(X0=50.0, N=3, T=6.0, shape=shape, resilience=curve, version=1)
    assert h1(0.0, spec) == 0.0
    assert h2(0.0, ProblemSpec(X0=50.0, N=3, T=6.0, shape=shape, resilience=curve, version=2)) == 0.0


class _FiniteDifferenceCurve:
    """Wrapper replacing the analytic derivative by a central difference."""

    def __init__(self, curve, h):
        self._curve = curve
        self._h = h

    def rho(self, x):
        return self._curve.rho(x)

    def rho_prime(self, x):
        return (self._curve.rho(x + self._h) - self._curve.rho(x - self._h)) / (2 * self._h)


def test_h_derivative_term_consistent_with_finite_differences():
    rng = np.random.default_rng(6)
    curve = random_valid_curve(rng, tau=2.0)
    shape = random_step_shape(rng)
    xs = [1.3, 4.7, 9.1]
    diffs = []
    for h_step in (1e-3, 5e-4):
        spec_fd = ProblemSpec(
            X0=40.0, N=3, T=6.0, shape=shape,
            resilience=_FiniteDifferenceCurve(curve, h_step), version=1,
        )
        spec = ProblemSpec(X0=40.0, N=3, T=6.0, shape=shape, resilience=curve, version=1)
        diffs.append(max(abs(h1(x, spec_fd) - h1(x, spec)) for x in xs))
    # halving h shrinks the discrepancy roughly fourfold (O(h^2))
    assert diffs[1] < diffs[0] / 2.5 + 1e-14


# -- solving -------------------------------------------------------------------


def test_degenerate_single_trade():
    spec = _block_spec(77.0, 0, rho=0.5, tau=1.0)
    st = solve_optimal(spec)
    assert np.array_equal(st.sizes, [77.0])
    assert np.array_equal(st.times, [0.0])


def test_block_case_forty_twenty_forty():
    rho, tau = math.log(2.0), 1.0
    for version in (1, 2):
        spec = _block_spec(100.0, 2, rho, tau, version=version)
        st = solve_optimal(spec)
        assert np.allclose(st.sizes, [40.0, 20.0, 40.0], atol=1e-10)
        assert st.diagnostics.converged


def test_block_closed_form_random_cases():
    rng = np.random.default_rng(17)
    for _ in range(10):
        X0 = float(rng.uniform(10, 500))
        N = int(rng.integers(1, 40))
        rho = float(rng.uniform(1e-3, 1.0))
        tau = float(rng.uniform(0.5, 50.0))
        q = float(rng.uniform(0.2, 6.0))
        xi0 = analytic_block_first_order(X0, N, rho, tau)
        a = math.exp(-rho * tau)
        expected = np.empty(N + 1)
        expected[0] = xi0
        expected[1:N] = xi0 * (1 - a)
        expected[N] = X0 - expected[:N].sum()
        for version in (1, 2):
            st = solve_optimal(_block_spec(X0, N, rho, tau, q, version))
            assert np.max(np.abs(st.sizes - expected)) < 1e-10 * max(1.0, X0)


def test_strategy_invariants_on_random_specs():
    rng = np.random.default_rng(23)
    solved = 0
    while solved < 10:
        shape = random_step_shape(rng)
        tau = float(rng.uniform(0.5, 5.0))
        curve = random_valid_curve(rng, tau)
        N = int(rng.integers(1, 30))
        version = int(rng.integers(1, 3))
        spec = ProblemSpec(X0=float(rng.uniform(20, 300)), N=N, T=N * tau,
                           shape=shape, resilience=curve, version=version)
        if not validate_assumptions(spec).ok:
            continue
        st = solve_optimal(spec, validate=False)
        solved += 1
        assert st.total == pytest.approx(spec.X0, abs=1e-10 * spec.X0)
        assert np.all(st.sizes > 0)
        if N >= 3:
            mids = st.sizes[1:N]
            assert np.max(np.abs(mids - mids[0])) < 1e-10


def test_gafs_reduces_to_constant_rho_route():
    rng = np.random.default_rng(31)
    for _ in range(8):
        shape = random_step_shape(rng)
        rho = float(rng.uniform(0.01, 1.0))
        tau = float(rng.uniform(0.5, 10.0))
        N = int(rng.integers(1, 25))
        X0 = float(rng.uniform(10, 400))
        for version in (1, 2):
            spec = ProblemSpec(X0=X0, N=N, T=N * tau, shape=shape,
                               resilience=ResilienceCurve.constant(rho), version=version)
            general = solve_optimal(spec, validate=False)
            classical = solve_constant_rho(spec, rho)
            assert np.max(np.abs(general.sizes - classical.sizes)) < 1e-12 * max(1.0, X0)


def test_v1_v2_coincide_on_block_shapes():
    rng = np.random.default_rng(37)
    for _ in range(5):
        q = float(rng.uniform(0.3, 4.0))
        rho = float(rng.uniform(0.01, 0.8))
        tau = float(rng.uniform(1.0, 20.0))
        N = int(rng.integers(1, 20))
        s1 = solve_optimal(_block_spec(150.0, N, rho, tau, q, version=1))
        s2 = solve_optimal(_block_spec(150.0, N, rho, tau, q, version=2))
        assert np.max(np.abs(s1.sizes - s2.sizes)) < 1e-10


def test_single_anchor_evaluation_property():
    # two curves agreeing (value and slope) at the solution's anchor but
    # different elsewhere produce the same strategy
    base = 0.25
    flat = ResilienceCurve.constant(base)
    shape = ShapeTable.block(2.0)
    # speed elevated at small impacts, clamped to the flat level from knot 5 on
    bent = ResilienceCurve(np.array([1.0, 3.0, 5.0]), np.array([1.3 * base, 1.1 * base, base]))

    spec = ProblemSpec(X0=100.0, N=3, T=6.0, shape=shape, resilience=flat, version=1)
    st = solve_optimal(spec)
    anchor = st.sizes[0]  # version 1 anchors at the first order's volume
    assert bent.rho(anchor) == pytest.approx(base)
    assert bent.rho_prime(anchor) == 0.0
    spec_bent = ProblemSpec(X0=100.0, N=3, T=6.0, shape=shape, resilience=bent, version=1)
    assert validate_assumptions(spec_bent).ok
    st_bent = solve_optimal(spec_bent)
    assert np.max(np.abs(st.sizes - st_bent.sizes)) < 1e-10

    # same exactness for version 2 (anchor F^-1(xi0)); the sampled injectivity
    # check is conservative for locally decreasing curves, so solve directly
    spec2 = ProblemSpec(X0=100.0, N=3, T=6.0, shape=shape, resilience=flat, version=2)
    st2 = solve_optimal(spec2)
    spec2_bent = ProblemSpec(X0=100.0, N=3, T=6.0, shape=shape, resilience=bent, version=2)
    st2_bent = solve_optimal(spec2_bent, validate=False)
    assert np.max(np.abs(st2.sizes - st2_bent.sizes)) < 1e-10


def test_intermediate_orders_repurchase_recovered_volume():
    rng = np.random.default_rng(41)
    shape = random_step_shape(rng)
    tau = 2.0
    curve = random_valid_curve(rng, tau)
    for version in (1, 2):
        spec = ProblemSpec(X0=120.0, N=6, T=6 * tau, shape=shape, resilience=curve, version=version)
        st = solve_optimal(spec, validate=False)
        state = impact.fresh_book(shape, curve, version)
        post_values = []
        for n, size in enumerate(st.sizes):
            if n > 0:
                state = impact.decay(state, tau)
            state, _ = impact.apply_trade(state, float(size))
            post_values.append(state.E_ask if version == 1 else state.D_ask)
        # all but the final post-trade impact coincide
        head = np.array(post_values[:-1])
        assert np.max(np.abs(head - head[0])) < 1e-9


# -- predicted cost --------------------------------------------------------------


def test_predicted_cost_single_trade_block():
    spec = _block_spec(30.0, 0, rho=0.1, tau=1.0)
    assert predicted_cost(spec, [30.0]) == pytest.approx(30.0**2 / 2.0)


def test_predicted_cost_forty_twenty_forty():
    spec = _block_spec(100.0, 2, rho=math.log(2.0), tau=1.0)
    # G telescoping by hand: G(40) + (G(40)-G(20)) + (G(60)-G(20)), G(y)=y^2/2
    assert predicted_cost(spec, [40.0, 20.0, 40.0]) == pytest.approx(3000.0)


def test_predicted_cost_matches_impact_replay():
    rng = np.random.default_rng(43)
    for _ in range(30):
        shape = random_step_shape(rng)
        tau = float(rng.uniform(0.3, 4.0))
        curve = random_valid_curve(rng, tau)
        N = int(rng.integers(1, 8))
        version = int(rng.integers(1, 3))
        sizes = rng.uniform(-3.0, 8.0, size=N + 1)
        spec = ProblemSpec(X0=max(float(sizes.sum()), 1e-3) if sizes.sum() > 0 else 1.0,
                           N=N, T=N * tau, shape=shape, resilience=curve, version=version)
        state = impact.fresh_book(shape, curve, version)
        _, _, _, total_simple = impact.run_schedule(state, sizes, [tau] * N)
        assert predicted_cost(spec, sizes) == pytest.approx(total_simple, rel=1e-10, abs=1e-10)


def test_predicted_cost_batch_matches_scalar():
    rng = np.random.default_rng(47)
    shape = random_step_shape(rng)
    curve = random_valid_curve(rng, 1.5)
    spec = ProblemSpec(X0=60.0, N=2, T=3.0, shape=shape, resilience=curve, version=2)
    batch = rng.uniform(-5, 30, size=(64, 3))
    vec = predicted_cost(spec, batch)
    for row, expected in zip(batch, vec):
        assert predicted_cost(spec, row) == pytest.approx(expected, rel=1e-12)


# -- brute force oracle ------------------------------------------------------------


def test_brute_force_matches_analytic_for_n1():
    spec = _block_spec(100.0, 1, rho=0.4, tau=2.0)
    st = solve_optimal(spec)
    bf = brute_force_optimum(spec, grid_resolution=0.5)
    assert predicted_cost(spec, st.sizes) <= bf.cost + 1e-9
    assert abs(bf.sizes[0] - st.sizes[0]) <= 0.5 + 1e-12


def test_brute_force_negative_legs_never_beat_theorem():
    rng = np.random.default_rng(53)
    for _ in range(5):
        shape = random_step_shape(rng, monotone=True)
        tau = float(rng.uniform(0.5, 3.0))
        curve = random_valid_curve(rng, tau)
        N = int(rng.integers(1, 4))
        spec = ProblemSpec(X0=40.0, N=N, T=N * tau, shape=shape, resilience=curve,
                           version=int(rng.integers(1, 3)))
        report = validate_assumptions(spec)
        if not report.ok:
            continue
        st = solve_optimal(spec, validate=False)
        bf = brute_force_optimum(spec, grid_resolution=spec.X0 / 100)
        assert predicted_cost(spec, st.sizes) <= bf.cost + 1e-9 * abs(bf.cost)


def test_brute_force_rejects_large_n():
    spec = _block_spec(10.0, 4, rho=0.2, tau=1.0)
    with pytest.raises(ValueError):
        brute_force_optimum(spec)


# -- cost monotonicity ----------------------------------------------------------------


def test_cost_monotone_in_T_and_N_for_constant_rho():
    rng = np.random.default_rng(59)
    for _ in range(6):
        shape = random_step_shape(rng)
        rho = float(rng.uniform(0.005, 0.5))
        X0 = 150.0
        costs_T = []
        for T in (10.0, 40.0, 160.0):
            spec = ProblemSpec(X0=X0, N=8, T=T, shape=shape,
                               resilience=ResilienceCurve.constant(rho), version=2)
            st = solve_optimal(spec, validate=False)
            costs_T.append(predicted_cost(spec, st.sizes))
        assert costs_T[0] >= costs_T[1] >= costs_T[2]
        costs_N = []
        for N in (1, 2, 4, 16):
            spec = ProblemSpec(X0=X0, N=N, T=64.0, shape=shape,
                               resilience=ResilienceCurve.constant(rho), version=1)
            st = solve_optimal(spec, validate=False)
            costs_N.append(predicted_cost(spec, st.sizes))
        assert all(a >= b - 1e-9 for a, b in zip(costs_N, costs_N[1:]))


# -- assumption validation ---------------------------------------------------------


def test_validation_passes_classical_case():
    report = validate_assumptions(_block_spec(100.0, 5, rho=0.2, tau=3.0))
    assert report.ok
    names = {c.name for c in report.checks}
    assert {"rho_bounds", "no_overtaking", "decay_contraction", "h_one_to_one"} <= names


def test_validation_flags_constructed_overtaking_violation():
    # steeply increasing speed: tau * rho'(x) * x >= 1 somewhere
    curve = ResilienceCurve(np.array([1.0, 2.0]), np.array([0.05, 3.0]))
    spec = ProblemSpec(X0=10.0, N=4, T=40.0, shape=ShapeTable.block(1.0),
                       resilience=curve, version=1)
    report = validate_assumptions(spec)
    failed = {c.name for c in report.checks if not c.passed}
    assert "no_overtaking" in failed
    with pytest.raises(AssumptionViolatedError):
        solve_optimal(spec)


def test_validation_report_serializes():
    report = validate_assumptions(_block_spec(50.0, 3, rho=0.3, tau=1.0))
    payload = report.to_dict()
    assert payload["ok"] is True
    assert all({"name", "passed", "detail"} <= set(c) for c in payload["checks"])


def test_strategy_csv_export(tmp_path):
    st = solve_optimal(_block_spec(100.0, 2, math.log(2.0), 1.0))
    path = tmp_path / "strategy.csv"
    strategy_to_csv(st, path)
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    assert rows.shape == (3, 3)
    assert np.allclose(rows[:, 2], [40, 20, 40], atol=1e-9)
