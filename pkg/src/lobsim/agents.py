"""Agent behaviors: fundamental value traders and moving-average technicians.

The decision rules live in small scalar functions (register_jitable, like
randkit) so the reference engine and the compiled engine execute the exact
same float expressions. The dataclasses below wrap those kernels with the
per-agent state they operate on.

Conventions: prices at the book interface are integer ticks; fundamental
prices p_f are floats in currency units; -1 stands for an absent best quote.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba.extending import register_jitable

from .randkit import currency_to_ticks, uniform_to_laplace

# Action kinds
ABSTAIN = 0
MARKET_BUY = 1
MARKET_SELL = 2
LIMIT_BUY = 3
LIMIT_SELL = 4

# Signals and order sides share one encoding
BUY_SIGNAL = 1
SELL_SIGNAL = -1
NO_SIGNAL = 0

# Position state (last executed action)
FLAT = 0
BOUGHT = 1
SOLD = -1


@dataclass(frozen=True)
class Action:
    kind: int
    price: int = 0        # ticks; meaningful for limit kinds only
    clamped: bool = False  # limit price hit the 10-resample clamp


@dataclass
class FundamentalAgent:
    p_f: float          # private value estimate, currency units
    chi_market: float   # relative mispricing needed to cross the spread
    chi_opinion: float  # tolerated relative distance from mu_spread
    p_active: float     # per-step activation probability


@dataclass
class TechnicalAgent:
    group_id: int
    t_wait: int         # steps between a signal and the order it triggers
    gamma: float        # profit-taking threshold (fraction of entry price)
    last_action: int = FLAT
    p_signal: int = 0   # execution price of the last own trade, ticks
    pending_due: int = -1
    pending_side: int = NO_SIGNAL


@dataclass
class TechnicalGroup:
    """Shared moving-average pair over closing prices, one per population.

    Keeps a ring of the last slow_window prices (ticks as float64, so sums
    stay exact integers) and incremental sums for both windows.
    """

    slow_window: int
    fast_window: int
    ring: np.ndarray
    count: int = 0
    slow_sum: float = 0.0
    fast_sum: float = 0.0
    prev_d: float = 0.0
    prev_valid: bool = False


def make_group(slow_window: int, fast_window: int) -> TechnicalGroup:
    if not 1 <= fast_window < slow_window:
        raise ValueError("need 1 <= fast_window < slow_window")
    return TechnicalGroup(slow_window, fast_window, np.zeros(slow_window))


@register_jitable
def decide_code(p_f, chi_market, bid, ask, mu, tick_size):
    """Classify a fundamental agent's move given the best quotes.

    bid, ask, mu are integer ticks (bid/ask -1 when that side is empty).
    Perceived overpricing beyond chi_market crosses the spread with a market
    order; milder mispricing posts a limit order; a p_f inside the spread
    abstains. An absent opposite side degrades the market branch to a limit.
    """
    mu_c = mu * tick_size
    upper = ask * tick_size if ask >= 0 else mu_c
    lower = bid * tick_size if bid >= 0 else mu_c
    if p_f > upper:
        if ask >= 0 and p_f > upper * (1.0 + chi_market):
            return MARKET_BUY
        return LIMIT_BUY
    if p_f < lower:
        if bid >= 0 and p_f < lower * (1.0 - chi_market):
            return MARKET_SELL
        return LIMIT_SELL
    return ABSTAIN


@register_jitable
def draw_limit_ticks(rng, lambda_limit, mu, side, bid, ask, tick_size):
    """Draw a limit price (ticks) from a Laplace centered on the spread mid.

    Rate lambda_limit is per currency unit. Rejects marketable or
    non-positive prices for up to 10 draws, then clamps one tick inside the
    crossed bound. Returns (ticks, clamped).
    """
    mu_c = mu * tick_size
    scale = 1.0 / lambda_limit
    for _ in range(10):
        x = uniform_to_laplace(rng.random(), mu_c, scale)
        if x <= 0.0:
            continue
        t = currency_to_ticks(x, tick_size)
        if t < 1:
            continue
        if side > 0:
            if ask < 0 or t < ask:
                return t, False
        else:
            if bid < 0 or t > bid:
                return t, False
    if side > 0:
        t = ask - 1 if ask >= 0 else 1
    else:
        t = bid + 1 if bid >= 0 else 1
    if t < 1:
        t = 1
    return t, True


@register_jitable
def opinion_shift(p_f, mu, chi_opinion, tick_size):
    """Herd p_f toward the spread mid when it strays beyond chi_opinion."""
    mu_c = mu * tick_size
    if abs(1.0 - p_f / mu_c) > chi_opinion:
        if p_f >= mu_c:
            return mu_c * (1.0 + chi_opinion)
        return mu_c * (1.0 - chi_opinion)
    return p_f


@register_jitable
def news_shift(p_f, zeta, sigma_dpf, z, tick_size):
    """Shift p_f by a news response zeta + sigma_dpf * z, floored at 1 tick."""
    shifted = p_f + (zeta + sigma_dpf * z)
    if shifted < tick_size:
        return tick_size
    return shifted


@register_jitable
def accepts_signal(last_action, signal):
    """Alternation rule: act only on signals opposite the last action."""
    return signal != NO_SIGNAL and last_action != signal


@register_jitable
def profit_fires(last_action, p_signal, prev_close, gamma, symmetric):
    """Forced-exit test against the previous close (both prices in ticks).

    Returns the market-order side (+1 buy, -1 sell) or 0. The default mode
    only exits long positions; symmetric mode adds the mirrored short exit.
    """
    if last_action == BOUGHT:
        if prev_close > (1.0 + gamma) * p_signal:
            return SELL_SIGNAL
    elif symmetric and last_action == SOLD:
        if prev_close < (1.0 - gamma) * p_signal:
            return BUY_SIGNAL
    return NO_SIGNAL


def fundamental_decide(agent: FundamentalAgent, best_bid, best_ask,
                       mu_spread: int, tick_size: float, lambda_limit: float,
                       rng) -> Action:
    """Decide the agent's order given the current book view.

    best_bid/best_ask are ticks or None; mu_spread is the already-resolved
    mid (fallbacks applied by the caller). Draws a limit price only when the
    decision calls for one.
    """
    bid = -1 if best_bid is None else best_bid
    ask = -1 if best_ask is None else best_ask
    code = decide_code(agent.p_f, agent.chi_market, bid, ask, mu_spread,
                       tick_size)
    if code == LIMIT_BUY or code == LIMIT_SELL:
        side = BUY_SIGNAL if code == LIMIT_BUY else SELL_SIGNAL
        price, clamped = draw_limit_ticks(rng, lambda_limit, mu_spread, side,
                                          bid, ask, tick_size)
        return Action(code, price, clamped)
    return Action(code)


def draw_limit_price(lambda_limit: float, mu_spread: int, side: int,
                     best_bid, best_ask, tick_size: float, rng):
    """Limit-price sampler on optional quotes; side is +1 buy / -1 sell.

    Returns (price_ticks, clamped).
    """
    bid = -1 if best_bid is None else best_bid
    ask = -1 if best_ask is None else best_ask
    return draw_limit_ticks(rng, lambda_limit, mu_spread, side, bid, ask,
                            tick_size)


def apply_opinion(agent: FundamentalAgent, mu_spread: int, tick_size: float):
    agent.p_f = opinion_shift(agent.p_f, mu_spread, agent.chi_opinion,
                              tick_size)


def apply_news(agent: FundamentalAgent, zeta: float, sigma_dpf: float,
               tick_size: float, rng):
    z = rng.standard_normal()
    agent.p_f = news_shift(agent.p_f, zeta, sigma_dpf, z, tick_size)


def mao_update(group: TechnicalGroup, close: int) -> int:
    """Push one closing price and report a strict moving-average crossing.

    Returns BUY_SIGNAL when fast - slow crosses from <= 0 to > 0, SELL_SIGNAL
    for the mirrored crossing, NO_SIGNAL otherwise (including ties and the
    fill-up phase before both windows hold slow_window prices).
    """
    x = float(close)
    n = group.count
    slow_w = group.slow_window
    fast_w = group.fast_window
    ring = group.ring
    if n >= slow_w:
        group.slow_sum = group.slow_sum + x - ring[n % slow_w]
    else:
        group.slow_sum = group.slow_sum + x
    if n >= fast_w:
        group.fast_sum = group.fast_sum + x - ring[(n - fast_w) % slow_w]
    else:
        group.fast_sum = group.fast_sum + x
    ring[n % slow_w] = x
    group.count = n + 1
    if group.count < slow_w:
        return NO_SIGNAL
    d = group.fast_sum / fast_w - group.slow_sum / slow_w
    signal = NO_SIGNAL
    if group.prev_valid:
        if group.prev_d <= 0.0 and d > 0.0:
            signal = BUY_SIGNAL
        elif group.prev_d >= 0.0 and d < 0.0:
            signal = SELL_SIGNAL
    group.prev_d = d
    group.prev_valid = True
    return signal


def technical_on_signal(agent: TechnicalAgent, signal: int, t: int) -> None:
    """Schedule a market order t_wait steps out, overwriting any pending one."""
    if accepts_signal(agent.last_action, signal):
        agent.pending_due = t + agent.t_wait
        agent.pending_side = signal


def technical_profit_check(agent: TechnicalAgent, prev_close: int,
                           symmetric: bool = False) -> int:
    """Fire a forced exit if the price ran gamma past the entry price.

    A firing exit supersedes any waiting signal order. Returns the market
    side (+1/-1) or 0.
    """
    side = profit_fires(agent.last_action, agent.p_signal, prev_close,
                        agent.gamma, symmetric)
    if side != NO_SIGNAL:
        agent.pending_due = -1
        agent.pending_side = NO_SIGNAL
    return side
