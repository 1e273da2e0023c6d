"""Continuous order-book impact dynamics.

Tracks the displacement a large trader causes on each side of a static
step-shaped book. Buy orders consume the ask side, sell orders the bid
side; between orders the displacement reverts exponentially at a speed
that may depend on the displacement itself. Two conventions exist for
which process reverts:

  * version 1: the volume impact E decays, the price impact D follows
    through D = F^-1(E);
  * version 2: the price impact D decays, E follows through E = F(D).

The recovery speed is frozen at the post-trade impact of the interval
("anchor"): between two orders the speed is evaluated once, at the value
the designated process had right after the last order, and is not
re-evaluated as the impact shrinks. Successive decays without an
intervening trade therefore compose exactly (semigroup property).

Alongside the two-sided book we evolve a single signed pair (E, D) fed by
every order regardless of sign - the bookkeeping the cost functionals are
written in. For pure-buy schedules it coincides with the ask side; in
general it is sandwiched between the bid and ask processes, and the
simplified trade price never exceeds the two-sided one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

from .resilience import ResilienceCurve
from .shape import ShapeTable


class TradeCosts(NamedTuple):
    cost: float
    simplified_cost: float


@dataclass(frozen=True)
class TradeRecord:
    time: float
    size: float
    cost: float


@dataclass(frozen=True)
class ImpactState:
    """Immutable snapshot of the book displacement. Use the module functions
    ``apply_trade`` and ``decay`` to advance it."""

    version: int
    shape: ShapeTable
    resilience: ResilienceCurve
    unaffected_ask: float = 0.0
    unaffected_bid: float = 0.0
    E_ask: float = 0.0
    D_ask: float = 0.0
    E_bid: float = 0.0
    D_bid: float = 0.0
    E_simple: float = 0.0
    D_simple: float = 0.0
    anchor_ask: float = 0.0
    anchor_bid: float = 0.0
    anchor_simple: float = 0.0

    def __post_init__(self) -> None:
        if self.version not in (1, 2):
            raise ValueError("version must be 1 or 2")
        if self.unaffected_bid > self.unaffected_ask:
            raise ValueError("unaffected bid must not exceed unaffected ask")


def fresh_book(
    shape: ShapeTable,
    resilience: ResilienceCurve,
    version: int,
    unaffected_ask: float = 0.0,
    unaffected_bid: float | None = None,
) -> ImpactState:
    """Undisturbed book: all impacts zero."""
    if unaffected_bid is None:
        unaffected_bid = unaffected_ask
    return ImpactState(
        version=version,
        shape=shape,
        resilience=resilience,
        unaffected_ask=unaffected_ask,
        unaffected_bid=unaffected_bid,
    )


def apply_trade(state: ImpactState, size: float) -> tuple[ImpactState, TradeCosts]:
    """Execute a signed market order (buy > 0, sell < 0) at the current time.

    Returns the post-trade state and the pair (two-sided cost, simplified
    cost). Volume impacts increment by the order size; price impacts follow
    through F^-1; the cost is the exact integral of (unaffected price + x)
    against the shape density over the consumed price interval.
    """
    if not math.isfinite(size):
        raise ValueError("trade size must be finite")
    shape = state.shape

    E_ask, D_ask = state.E_ask, state.D_ask
    E_bid, D_bid = state.E_bid, state.D_bid
    if size > 0:
        E_ask = state.E_ask + size
        D_ask = shape.F_inverse(E_ask)
        cost = state.unaffected_ask * size + shape.F_tilde(D_ask) - shape.F_tilde(state.D_ask)
    elif size < 0:
        E_bid = state.E_bid + size
        D_bid = shape.F_inverse(E_bid)
        cost = state.unaffected_bid * size + shape.F_tilde(D_bid) - shape.F_tilde(state.D_bid)
    else:
        cost = 0.0

    E_simple = state.E_simple + size
    D_simple = shape.F_inverse(E_simple)
    simplified_cost = (
        state.unaffected_ask * size
        + shape.F_tilde(D_simple)
        - shape.F_tilde(state.D_simple)
    )

    if state.version == 1:
        anchors = (E_ask, E_bid, E_simple)
    else:
        anchors = (D_ask, D_bid, D_simple)

    new_state = replace(
        state,
        E_ask=E_ask,
        D_ask=D_ask,
        E_bid=E_bid,
        D_bid=D_bid,
        E_simple=E_simple,
        D_simple=D_simple,
        anchor_ask=anchors[0],
        anchor_bid=anchors[1],
        anchor_simple=anchors[2],
    )
    return new_state, TradeCosts(cost=cost, simplified_cost=simplified_cost)


def decay(state: ImpactState, dt: float) -> ImpactState:
    """Let the book recover for dt > 0.

    The designated process of each track shrinks by exp(-rho(anchor)*dt)
    where the anchor is the post-trade value of the current inter-trade
    interval; the partner process follows through the F relation. Anchors
    are left untouched, so decay(dt/2) twice equals decay(dt).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    shape, curve = state.shape, state.resilience

    def shrink(value: float, anchor: float) -> float:
        return value * math.exp(-curve.rho(anchor) * dt)

    if state.version == 1:
        E_ask = shrink(state.E_ask, state.anchor_ask)
        E_bid = shrink(state.E_bid, state.anchor_bid)
        E_simple = shrink(state.E_simple, state.anchor_simple)
        D_ask = shape.F_inverse(E_ask)
        D_bid = shape.F_inverse(E_bid)
        D_simple = shape.F_inverse(E_simple)
    else:
        D_ask = shrink(state.D_ask, state.anchor_ask)
        D_bid = shrink(state.D_bid, state.anchor_bid)
        D_simple = shrink(state.D_simple, state.anchor_simple)
        E_ask = shape.F(D_ask)
        E_bid = shape.F(D_bid)
        E_simple = shape.F(D_simple)

    return replace(
        state,
        E_ask=E_ask,
        D_ask=D_ask,
        E_bid=E_bid,
        D_bid=D_bid,
        E_simple=E_simple,
        D_simple=D_simple,
    )


def run_schedule(
    state: ImpactState, sizes, dts
) -> tuple[ImpactState, list[TradeRecord], float, float]:
    """Apply trades separated by recovery intervals.

    ``sizes`` has one more element than ``dts``; trade k happens after
    ``dts[k-1]`` of recovery. Returns the final state, per-trade records
    (two-sided costs), and the totals of both cost conventions.
    """
    sizes = list(sizes)
    dts = list(dts)
    if len(dts) != len(sizes) - 1:
        raise ValueError("need exactly one recovery interval between consecutive trades")
    total = 0.0
    total_simple = 0.0
    records: list[TradeRecord] = []
    t = 0.0
    for k, size in enumerate(sizes):
        if k > 0:
            state = decay(state, dts[k - 1])
            t += dts[k - 1]
        state, costs = apply_trade(state, size)
        records.append(TradeRecord(time=t, size=size, cost=costs.cost))
        total += costs.cost
        total_simple += costs.simplified_cost
    return state, records, total, total_simple


@dataclass(frozen=True)
class OvertakingReport:
    """Grid check that a larger impact stays larger through one recovery step."""

    tau: float
    checked: int
    violations: list[tuple[float, float]]

    @property
    def ok(self) -> bool:
        return not self.violations


def overtaking_monotonicity_check(
    resilience: ResilienceCurve, tau: float, xs, ys
) -> OvertakingReport:
    """Verify |x+y| e^{-rho(x+y) tau} > |x| e^{-rho(x) tau} whenever x+y and x
    share their sign and |x+y| > |x|. Report-only; violations are collected,
    never raised."""
    violations: list[tuple[float, float]] = []
    checked = 0
    for x in xs:
        ex = abs(x) * math.exp(-resilience.rho(x) * tau)
        for y in ys:
            s = x + y
            if s * x <= 0 or abs(s) <= abs(x):
                continue
            checked += 1
            if not abs(s) * math.exp(-resilience.rho(s) * tau) > ex:
                violations.append((float(x), float(y)))
    return OvertakingReport(tau=float(tau), checked=checked, violations=violations)
