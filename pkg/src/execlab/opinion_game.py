"""Agent market with an opinion-driven order book.

Every trader carries an integer opinion of the fair (log) price and either
zero or one share. Holders are the sell side of a generalized book, the
others the buy side; best bid and ask are the extreme opinions of the two
groups, and the market is stable while the bid sits strictly below the
ask. One round of the dynamics picks a trader (preferring those close to
their side's best quote), moves their opinion by a drifted bounded jump,
and, if the move crosses the spread, forces a trade: the crossing trader
swaps holdings with a uniformly chosen counterparty at the best quote and
both requote away from the post-trade best quote by fresh uniform gaps.

Large orders are forced executions: a buy of X units repeatedly takes the
globally lowest-opinion trader, trades it against a uniform seller at the
best ask, and requotes the filled seller upward by an offset drawn from
the current seller-side book shape (so executions thicken the book near
the new ask while pushing it up). Sells mirror this under price
reflection.

States are deterministic functions of (config, seed, operation sequence);
campaigns derive per-run seeds with ``rng.spawn_seed``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ConfigError, CorruptedStateError, InsufficientDepthError
from .rng import seed_state

CONFIG_SCHEMA_VERSION = 1
_INIT_WINDOW = 200  # initial opinions are uniform on [-100, 100)


@dataclass(frozen=True)
class MarketConfig:
    """Parameters of the market; defaults are the standard calibrated set."""

    trader_count: int = 2000
    share_count: int = 1000
    gamma: float = 1.5
    jump_range_l: int = 4
    mu_buyer: float = math.exp(0.1)
    mu_seller: float = math.exp(-0.1)
    requote_gap_min: int = 5
    requote_gap_max: int = 20
    burn_in_steps: int = 1_000_000
    seed: int = 12345

    def __post_init__(self) -> None:
        if not (0 < self.share_count < self.trader_count):
            raise ConfigError("need 0 < share_count < trader_count")
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if self.jump_range_l < 1:
            raise ConfigError("jump_range_l must be at least 1")
        if not (self.mu_seller < 1.0 < self.mu_buyer):
            raise ConfigError("need mu_seller < 1 < mu_buyer")
        if not (1 <= self.requote_gap_min <= self.requote_gap_max):
            raise ConfigError("need 1 <= requote_gap_min <= requote_gap_max")
        if self.burn_in_steps < 0:
            raise ConfigError("burn_in_steps must be non-negative")
        for mu in (self.mu_buyer, self.mu_seller):
            pmf = jump_pmf(mu, self.jump_range_l)
            if pmf[self.jump_range_l] < 0.0:
                raise ConfigError(f"jump masses exceed 1 for mu={mu}")

    # -- flat key-value config file (documented schema, versioned) -----------

    def to_file(self, path: str | Path) -> None:
        payload = {"schema_version": CONFIG_SCHEMA_VERSION}
        payload.update({k: getattr(self, k) for k in self.__dataclass_fields__})
        Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")

    @classmethod
    def from_file(cls, path: str | Path) -> "MarketConfig":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: cannot read market config: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError(f"{path}: market config must be a flat JSON object")
        version = payload.pop("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"{path}: unsupported config schema version {version}")
        unknown = set(payload) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
        return cls(**payload)


def jump_pmf(mu: float, l: int) -> np.ndarray:
    """Exact jump-size distribution on {-l, ..., l}.

    Mass min(mu^m, 1)/(2l+1) for m != 0; the remainder sits on 0, so a
    drift-free mu = 1 degenerates to the uniform distribution.
    """
    m = np.arange(-l, l + 1, dtype=np.float64)
    p = np.minimum(mu**m, 1.0) / (2 * l + 1)
    p[l] = 0.0
    p[l] = 1.0 - p.sum()
    return p


@lru_cache(maxsize=8)
def _pow_table(gamma: float) -> np.ndarray:
    d = np.arange(_kernels.POW_TABLE_SIZE, dtype=np.float64)
    return (1.0 + d) ** (-gamma)


@lru_cache(maxsize=32)
def _jump_cum(mu: float, l: int) -> np.ndarray:
    return np.cumsum(jump_pmf(mu, l))


def _tables(config: MarketConfig):
    return (
        _pow_table(config.gamma),
        _jump_cum(config.mu_buyer, config.jump_range_l),
        _jump_cum(config.mu_seller, config.jump_range_l),
    )


@dataclass
class MarketState:
    """Opinions, holdings, step counter, and the state's own generator."""

    opinions: np.ndarray
    holdings: np.ndarray
    time: int
    rng: np.ndarray

    def copy(self) -> "MarketState":
        return MarketState(self.opinions.copy(), self.holdings.copy(), self.time, self.rng.copy())


def new_market(config: MarketConfig) -> MarketState:
    """Fresh un-burned state: opinions uniform on a window of width 200
    centered at 0, shares assigned to the highest opinions (stable ties)."""
    rng = seed_state(config.seed)
    opinions = np.empty(config.trader_count, dtype=np.int64)
    _kernels.uniform_ints(rng, opinions, -(_INIT_WINDOW // 2), _INIT_WINDOW // 2 - 1)
    holdings = np.zeros(config.trader_count, dtype=np.uint8)
    order = np.argsort(opinions, kind="stable")
    holdings[order[-config.share_count:]] = 1
    return MarketState(opinions=opinions, holdings=holdings, time=0, rng=rng)


def burned_in_market(config: MarketConfig) -> MarketState:
    state = new_market(config)
    return step(state, config, config.burn_in_steps)


def best_quotes(state: MarketState) -> tuple[int, int, float]:
    """(best bid, best ask, mid price); the mid may be half-integer."""
    pb, pa = _kernels.scan_quotes(state.opinions, state.holdings)
    return int(pb), int(pa), (int(pb) + int(pa)) / 2.0


def is_stable(state: MarketState) -> bool:
    pb, pa = _kernels.scan_quotes(state.opinions, state.holdings)
    return pb < pa


def choose_trader(state: MarketState, config: MarketConfig) -> int:
    """Draw one trader index with the proximity-preferring weights."""
    pow_table, _, _ = _tables(config)
    i = _kernels.pick_trader_once(state.opinions, state.holdings, state.rng, pow_table, config.gamma)
    if i < 0:
        raise CorruptedStateError("negative weight base: a trader sits beyond its best quote")
    return int(i)

def sample_opinion_jump(is_buyer: bool, config: MarketConfig, rng: np.ndarray) -> int:
    """Draw one opinion jump for a buyer or seller from the given generator."""
    _, cum_buy, cum_sell = _tables(config)
    cum = cum_buy if is_buyer else cum_sell
    return int(_kernels.sample_jump_once(rng, cum, config.jump_range_l))


def step(state: MarketState, config: MarketConfig, n: int = 1) -> MarketState:
    """Advance n rounds in place; returns the same state for chaining."""
    if n < 0:
        raise ValueError("step count must be non-negative")
    if n == 0:
        return state
    pow_table, cum_buy, cum_sell = _tables(config)
    rc = _kernels.run_steps(
        state.opinions, state.holdings, state.rng, n,
        pow_table, config.gamma, cum_buy, cum_sell,
        config.jump_range_l, config.requote_gap_min, config.requote_gap_max,
    )
    if rc != 0:
        raise CorruptedStateError("negative weight base encountered during stepping")
    state.time += n
    return state


def step_recording(
    state: MarketState, config: MarketConfig, n: int, stride: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Advance n rounds, returning quotes recorded after every stride-th round."""
    if stride < 1:
        raise ValueError("stride must be at least 1")
    pow_table, cum_buy, cum_sell = _tables(config)
    out_bid = np.empty(n // stride, dtype=np.int64)
    out_ask = np.empty(n // stride, dtype=np.int64)
    rc = _kernels.run_steps_recording(
        state.opinions, state.holdings, state.rng, n, stride,
        pow_table, config.gamma, cum_buy, cum_sell,
        config.jump_range_l, config.requote_gap_min, config.requote_gap_max,
        out_bid, out_ask,
    )
    if rc != 0:
        raise CorruptedStateError("negative weight base encountered during stepping")
    state.time += n
    return out_bid, out_ask


def execute_large_buy(state: MarketState, volume: int, config: MarketConfig) -> np.ndarray:
    """Force-execute a large buy; returns the per-unit execution prices.

    Counts as one round of market time regardless of volume. The number of
    available tail traders (non-holders) bounds the volume.
    """
    if volume <= 0:
        raise ValueError("volume must be positive")
    capacity = config.trader_count - config.share_count
    if volume > capacity:
        raise InsufficientDepthError(f"buy volume {volume} exceeds {capacity} tail traders")
    prices = np.empty(volume, dtype=np.int64)
    _kernels.execute_buy(
        state.opinions, state.holdings, state.rng, volume,
        config.share_count, config.requote_gap_min, config.requote_gap_max, prices,
    )
    state.time += 1
    return prices


def execute_large_sell(state: MarketState, volume: int, config: MarketConfig) -> np.ndarray:
    if volume <= 0:
        raise ValueError("volume must be positive")
    if volume > config.share_count:
        raise InsufficientDepthError(f"sell volume {volume} exceeds {config.share_count} holders")
    prices = np.empty(volume, dtype=np.int64)
    _kernels.execute_sell(
        state.opinions, state.holdings, state.rng, volume,
        config.trader_count - config.share_count,
        config.requote_gap_min, config.requote_gap_max, prices,
    )
    state.time += 1
    return prices


def execute_until_impact(
    state: MarketState, target_impact: int, config: MarketConfig, side: str = "sell"
) -> tuple[int, bool]:
    """Trade unit by unit until the best ask has moved by target_impact.

    Returns (units executed, reached). Used by the decay campaigns, where
    the order volume is determined endogenously by its price impact.
    """
    if target_impact < 1:
        raise ValueError("target impact must be at least 1")
    if side == "sell":
        units, ok = _kernels.execute_sell_until_ask_drop(
            state.opinions, state.holdings, state.rng, target_impact,
            config.share_count, config.trader_count - config.share_count,
            config.requote_gap_min, config.requote_gap_max,
        )
    elif side == "buy":
        units, ok = _kernels.execute_buy_until_ask_rise(
            state.opinions, state.holdings, state.rng, target_impact,
            config.trader_count - config.share_count, config.share_count,
            config.requote_gap_min, config.requote_gap_max,
        )
    else:
        raise ValueError("side must be 'buy' or 'sell'")
    state.time += 1
    return int(units), bool(ok)


def reflect(state: MarketState, pivot: int = 0) -> MarketState:
    """Mirror image: opinions reflected about the pivot, holdings swapped.

    Preserves the generator state, so forced sells on the mirror replay
    forced buys on the original draw for draw.
    """
    return MarketState(
        opinions=(2 * pivot - state.opinions).astype(np.int64),
        holdings=(1 - state.holdings).astype(np.uint8),
        time=state.time,
        rng=state.rng.copy(),
    )


@dataclass(frozen=True)
class BookSnapshot:
    """Offset histograms of the two book sides relative to the best quotes."""

    ask_profile: dict[int, int]
    bid_profile: dict[int, int]
    best_bid: int
    best_ask: int

    def ask_counts(self, max_offset: int | None = None) -> np.ndarray:
        """Dense seller-side counts for offsets 0..max_offset."""
        hi = max(self.ask_profile) if max_offset is None else max_offset
        out = np.zeros(hi + 1, dtype=np.int64)
        for off, cnt in self.ask_profile.items():
            if off <= hi:
                out[off] = cnt
        return out


def snapshot_book(state: MarketState) -> BookSnapshot:
    pb, pa, _ = best_quotes(state)
    holders = state.holdings == 1
    ask_off = state.opinions[holders] - pa
    bid_off = state.opinions[~holders] - pb
    ask_profile = {int(k): int(v) for k, v in zip(*np.unique(ask_off, return_counts=True))}
    bid_profile = {int(k): int(v) for k, v in zip(*np.unique(bid_off, return_counts=True))}
    return BookSnapshot(ask_profile=ask_profile, bid_profile=bid_profile, best_bid=pb, best_ask=pa)


def snapshot_to_csv(snapshot: BookSnapshot, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("offset,count,side\n")
        for off in sorted(snapshot.ask_profile):
            fh.write(f"{off},{snapshot.ask_profile[off]},ask\n")
        for off in sorted(snapshot.bid_profile):
            fh.write(f"{off},{snapshot.bid_profile[off]},bid\n")


def price_path_to_csv(bids: np.ndarray, asks: np.ndarray, path: str | Path, stride: int = 1) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,best_bid,best_ask\n")
        for k, (b, a) in enumerate(zip(bids, asks)):
            fh.write(f"{(k + 1) * stride},{b},{a}\n")
