import numpy as np
import pytest

from execlab.opinion_game import MarketConfig
from execlab.resilience import ResilienceCurve
from execlab.shape import ShapeTable


@pytest.fixture
def block_shape():
    return ShapeTable.block(1.0)


@pytest.fixture
def two_cell_shape():
    # f = 2 on [0,1), 3 on [1,2), tail 3
    return ShapeTable.from_values(0, [2.0, 3.0])


@pytest.fixture
def constant_curve():
    return ResilienceCurve.constant(np.log(2.0))


@pytest.fixture
def small_config():
    # tiny market for fast unit tests; not statistically representative
    return MarketConfig(
        trader_count=50, share_count=20, burn_in_steps=2_000, seed=123
    )


def random_step_shape(rng: np.random.Generator, monotone: bool = False) -> ShapeTable:
    """Random positive step shape on a support straddling zero."""
    left = int(rng.integers(2, 8))
    right = int(rng.integers(4, 16))
    values = rng.uniform(0.2, 8.0, size=left + right)
    if monotone:
        values = np.sort(values)[::-1].copy()
    return ShapeTable.from_values(-left, values, tail_value=float(values[-1]))


def random_valid_curve(rng: np.random.Generator, tau: float) -> ResilienceCurve:
    """Random curve gently decreasing in the impact: the no-overtaking
    condition holds automatically at any tau, and the mild slope keeps the
    optimality equations monotone for reasonable shapes."""
    n = int(rng.integers(3, 7))
    knots = np.sort(rng.uniform(0.5, 25.0, size=n))
    while np.any(np.diff(knots) < 1e-3):
        knots = np.sort(rng.uniform(0.5, 25.0, size=n))
    top = rng.uniform(0.05, 0.8)
    values = np.sort(rng.uniform(0.65 * top, top, size=n))[::-1].copy()
    return ResilienceCurve(knots, values)
