"""Jitted inner loops of the agent market.

Everything here operates on plain arrays so the hot paths (multi-million
step campaigns) compile to machine code and release the GIL, letting
campaign runners use ordinary threads. All randomness flows through the
explicit xoshiro state passed in, in a fixed draw order per round:

    trader choice -> jump size -> [if a trade fires] partner pick ->
    initiator requote gap -> passive requote gap

and per forced-execution unit:

    ask-side requote gap (a uniform seller's offset) -> partner pick ->
    buyer requote gap.

Changing any of these orders changes every seeded replay, so they are
fixed here and nowhere else.

Error codes: the step kernels return 0 on success and -1 if a weight base
is non-positive, which cannot happen for states produced by this module
and indicates outside corruption.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .rng import next_double, next_int

POW_TABLE_SIZE = 1 << 16


@njit(cache=True, nogil=True, inline="always")
def _scan_quotes(opinions, holdings):
    pb = np.int64(-(2**62))
    pa = np.int64(2**62)
    for k in range(opinions.shape[0]):
        if holdings[k] == 1:
            if opinions[k] < pa:
                pa = opinions[k]
        else:
            if opinions[k] > pb:
                pb = opinions[k]
    return pb, pa


@njit(cache=True, nogil=True, inline="always")
def _weight(dist, pow_table, gamma):
    if dist < POW_TABLE_SIZE:
        return pow_table[dist]
    return (1.0 + dist) ** (-gamma)


@njit(cache=True, nogil=True)
def _pick_trader(opinions, holdings, rng, pow_table, gamma, pb, pa):
    """Weighted draw over all traders; weight (1 + distance to own best
    quote)^(-gamma). Returns -1 if any distance is negative."""
    n = opinions.shape[0]
    total = 0.0
    for k in range(n):
        d = (opinions[k] - pa) if holdings[k] == 1 else (pb - opinions[k])
        if d < 0:
            return -1
        total += _weight(d, pow_table, gamma)
    u = next_double(rng) * total
    acc = 0.0
    for k in range(n):
        d = (opinions[k] - pa) if holdings[k] == 1 else (pb - opinions[k])
        acc += _weight(d, pow_table, gamma)
        if u < acc:
            return k
    return n - 1


@njit(cache=True, nogil=True, inline="always")
def _sample_jump(rng, cum, l):
    u = next_double(rng)
    for k in range(2 * l + 1):
        if u < cum[k]:
            return k - l
    return l


@njit(cache=True, nogil=True, inline="always")
def _pick_at_price(opinions, holdings, rng, price, want_holding):
    """Uniform pick among traders with the given holding flag quoting price."""
    cnt = 0
    for k in range(opinions.shape[0]):
        if holdings[k] == want_holding and opinions[k] == price:
            cnt += 1
    r = next_int(rng, 0, cnt - 1)
    seen = 0
    for k in range(opinions.shape[0]):
        if holdings[k] == want_holding and opinions[k] == price:
            if seen == r:
                return k
            seen += 1
    return -1


@njit(cache=True, nogil=True)
def _one_round(opinions, holdings, rng, pow_table, gamma, jump_cum_buy, jump_cum_sell, l, gmin, gmax):
    pb, pa = _scan_quotes(opinions, holdings)
    i = _pick_trader(opinions, holdings, rng, pow_table, gamma, pb, pa)
    if i < 0:
        return -1
    is_buyer = holdings[i] == 0
    m = _sample_jump(rng, jump_cum_buy if is_buyer else jump_cum_sell, l)
    moved = opinions[i] + m
    if is_buyer:
        if moved < pa:
            opinions[i] = moved
            return 0
        j = _pick_at_price(opinions, holdings, rng, pa, np.uint8(1))
        holdings[i] = 1
        holdings[j] = 0
        opinions[i] = moved
        _, anchor = _scan_quotes(opinions, holdings)
        gbar = next_int(rng, gmin, gmax)
        g = next_int(rng, gmin, gmax)
        opinions[i] = anchor + gbar
        opinions[j] = anchor - g
    else:
        if moved > pb:
            opinions[i] = moved
            return 0
        j = _pick_at_price(opinions, holdings, rng, pb, np.uint8(0))
        holdings[i] = 0
        holdings[j] = 1
        opinions[i] = moved
        anchor, _ = _scan_quotes(opinions, holdings)
        gbar = next_int(rng, gmin, gmax)
        g = next_int(rng, gmin, gmax)
        opinions[i] = anchor - gbar
        opinions[j] = anchor + g
    return 0


@njit(cache=True, nogil=True)
def run_steps(opinions, holdings, rng, n_steps, pow_table, gamma, jump_cum_buy, jump_cum_sell, l, gmin, gmax):
    for _ in range(n_steps):
        rc = _one_round(
            opinions, holdings, rng, pow_table, gamma, jump_cum_buy, jump_cum_sell, l, gmin, gmax
        )
        if rc != 0:
            return rc
    return 0


@njit(cache=True, nogil=True)
def run_steps_recording(
    opinions, holdings, rng, n_steps, stride,
    pow_table, gamma, jump_cum_buy, jump_cum_sell, l, gmin, gmax,
    out_bid, out_ask,
):
    """Advance n_steps rounds, recording the quotes after every stride-th
    round into the output arrays (length n_steps // stride)."""
    idx = 0
    for s in range(n_steps):
        rc = _one_round(
            opinions, holdings, rng, pow_table, gamma, jump_cum_buy, jump_cum_sell, l, gmin, gmax
        )
        if rc != 0:
            return rc
        if (s + 1) % stride == 0:
            pb, pa = _scan_quotes(opinions, holdings)
            out_bid[idx] = pb
            out_ask[idx] = pa
            idx += 1
    return 0


@njit(cache=True, nogil=True, inline="always")
def _argmin_all(opinions):
    best = opinions[0]
    arg = 0
    for k in range(1, opinions.shape[0]):
        if opinions[k] < best:
            best = opinions[k]
            arg = k
    return arg


@njit(cache=True, nogil=True, inline="always")
def _argmax_all(opinions):
    best = opinions[0]
    arg = 0
    for k in range(1, opinions.shape[0]):
        if opinions[k] > best:
            best = opinions[k]
            arg = k
    return arg


@njit(cache=True, nogil=True, inline="always")
def _nth_with_holding(opinions, holdings, rng, want_holding, count):
    """Uniform pick among all traders with the given holding flag."""
    r = next_int(rng, 0, count - 1)
    seen = 0
    for k in range(opinions.shape[0]):
        if holdings[k] == want_holding:
            if seen == r:
                return k
            seen += 1
    return -1


@njit(cache=True, nogil=True)
def execute_buy(opinions, holdings, rng, volume, share_count, gmin, gmax, prices_out):
    """Forced execution of a large buy order, one unit per iteration.

    Per unit: the globally lowest-opinion trader buys from a uniform seller
    at the best ask; the filled seller requotes above the ask by a gap
    drawn from the current seller-side offset histogram (equivalently: the
    offset of a uniformly chosen seller), the buyer requotes below by a
    uniform gap. Records each unit's execution price (the pre-trade ask).
    """
    for x in range(volume):
        _, pa = _scan_quotes(opinions, holdings)
        ref = _nth_with_holding(opinions, holdings, rng, np.uint8(1), share_count)
        ghat = opinions[ref] - pa
        j = _pick_at_price(opinions, holdings, rng, pa, np.uint8(1))
        i = _argmin_all(opinions)
        prices_out[x] = pa
        holdings[i] = 1
        holdings[j] = 0
        g = next_int(rng, gmin, gmax)
        opinions[j] = pa - g
        opinions[i] = pa + ghat
    return 0


@njit(cache=True, nogil=True)
def execute_sell(opinions, holdings, rng, volume, buyer_count, gmin, gmax, prices_out):
    """Mirror image of execute_buy under price reflection."""
    for x in range(volume):
        pb, _ = _scan_quotes(opinions, holdings)
        ref = _nth_with_holding(opinions, holdings, rng, np.uint8(0), buyer_count)
        ghat = pb - opinions[ref]
        j = _pick_at_price(opinions, holdings, rng, pb, np.uint8(0))
        i = _argmax_all(opinions)
        prices_out[x] = pb
        holdings[i] = 0
        holdings[j] = 1
        g = next_int(rng, gmin, gmax)
        opinions[j] = pb + g
        opinions[i] = pb - ghat
    return 0


@njit(cache=True, nogil=True)
def execute_sell_until_ask_drop(opinions, holdings, rng, target_drop, max_units, buyer_count, gmin, gmax):
    """Sell unit by unit until the best ask has dropped by target_drop.

    Returns (units executed, reached flag). The displacement is monitored
    on the ask because that is the side whose relaxation the decay
    campaigns record.
    """
    _, ask0 = _scan_quotes(opinions, holdings)
    units = 0
    while units < max_units:
        pb, pa = _scan_quotes(opinions, holdings)
        if ask0 - pa >= target_drop:
            return units, True
        ref = _nth_with_holding(opinions, holdings, rng, np.uint8(0), buyer_count)
        ghat = pb - opinions[ref]
        j = _pick_at_price(opinions, holdings, rng, pb, np.uint8(0))
        i = _argmax_all(opinions)
        holdings[i] = 0
        holdings[j] = 1
        g = next_int(rng, gmin, gmax)
        opinions[j] = pb + g
        opinions[i] = pb - ghat
        units += 1
    _, pa = _scan_quotes(opinions, holdings)
    return units, ask0 - pa >= target_drop


@njit(cache=True, nogil=True)
def execute_buy_until_ask_rise(opinions, holdings, rng, target_rise, max_units, share_count, gmin, gmax):
    """Buy unit by unit until the best ask has risen by target_rise."""
    _, ask0 = _scan_quotes(opinions, holdings)
    units = 0
    while units < max_units:
        _, pa = _scan_quotes(opinions, holdings)
        if pa - ask0 >= target_rise:
            return units, True
        ref = _nth_with_holding(opinions, holdings, rng, np.uint8(1), share_count)
        ghat = opinions[ref] - pa
        j = _pick_at_price(opinions, holdings, rng, pa, np.uint8(1))
        i = _argmin_all(opinions)
        holdings[i] = 1
        holdings[j] = 0
        g = next_int(rng, gmin, gmax)
        opinions[j] = pa - g
        opinions[i] = pa + ghat
        units += 1
    _, pa = _scan_quotes(opinions, holdings)
    return units, pa - ask0 >= target_rise


@njit(cache=True, nogil=True)
def pick_trader_once(opinions, holdings, rng, pow_table, gamma):
    pb, pa = _scan_quotes(opinions, holdings)
    return _pick_trader(opinions, holdings, rng, pow_table, gamma, pb, pa)


@njit(cache=True, nogil=True)
def sample_jump_once(rng, cum, l):
    return _sample_jump(rng, cum, l)


@njit(cache=True, nogil=True)
def scan_quotes(opinions, holdings):
    return _scan_quotes(opinions, holdings)


@njit(cache=True, nogil=True)
def uniform_ints(rng, out, lo, hi):
    for k in range(out.shape[0]):
        out[k] = next_int(rng, lo, hi)
