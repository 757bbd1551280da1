"""Agent behavior tests: decision branches, the limit-price sampler, opinion
and news updates, moving-average crossings, and position bookkeeping."""

import math

import numpy as np
import pytest

from lobsim import agents
from lobsim.agents import (
    ABSTAIN, MARKET_BUY, MARKET_SELL, LIMIT_BUY, LIMIT_SELL,
    BUY_SIGNAL, SELL_SIGNAL, NO_SIGNAL, FLAT, BOUGHT, SOLD,
    FundamentalAgent, TechnicalAgent,
)

TICK = 1e-4


class FixedU:
    """Stand-in RNG whose uniform draws are a constant."""

    def __init__(self, u):
        self.u = u

    def random(self):
        return self.u


def fund(p_f, chi_market=0.01, chi_opinion=0.05):
    return FundamentalAgent(p_f, chi_market, chi_opinion, p_active=0.15)


def decide(agent, bid, ask, mu, rng=None):
    return agents.fundamental_decide(agent, bid, ask, mu, TICK, 3.0,
                                     rng or np.random.default_rng(0))


def test_strong_overpricing_buys_at_market():
    action = decide(fund(23.0, chi_market=0.005), 224000, 225000, 224500)
    assert action.kind == MARKET_BUY


def test_inside_spread_abstains():
    action = decide(fund(22.45), 224000, 225000, 224500)
    assert action.kind == ABSTAIN


def test_mild_overpricing_posts_limit_buy():
    action = decide(fund(22.55, chi_market=0.01), 224000, 225000, 224500)
    assert action.kind == LIMIT_BUY
    assert 0 < action.price < 225000  # non-marketable by construction


def test_decide_branches_match_truth_table():
    """Independent restatement of the branch rules over a p_f grid."""
    rng = np.random.default_rng(5)
    bid, ask, mu = 220000, 230000, 225000
    chi = 0.03
    for p_f in np.linspace(15.0, 30.0, 301):
        action = decide(fund(float(p_f), chi_market=chi), bid, ask, mu, rng)
        upper, lower = ask * TICK, bid * TICK
        if p_f > upper:
            want = MARKET_BUY if p_f > upper * (1 + chi) else LIMIT_BUY
        elif p_f < lower:
            want = MARKET_SELL if p_f < lower * (1 - chi) else LIMIT_SELL
        else:
            want = ABSTAIN
        assert action.kind == want, f"p_f={p_f}"


def test_decide_degrades_to_limit_without_opposite_quote():
    rng = np.random.default_rng(6)
    # far above any quote, but no ask to buy from
    action = decide(fund(30.0, chi_market=0.005), 224000, None, 224000, rng)
    assert action.kind == LIMIT_BUY
    assert action.price < 1_000_000  # and positive, i.e. a real limit
    action = decide(fund(1.0, chi_market=0.005), None, 225000, 225000, rng)
    assert action.kind == LIMIT_SELL
    assert action.price > 0  # no bid to cross, any positive price rests


def test_limit_sampler_mean_matches_center():
    rng = np.random.default_rng(11)
    mu_ticks = 224500  # 22.45 currency
    draws = np.array([
        agents.draw_limit_price(3.0, mu_ticks, +1, None, None, TICK, rng)[0]
        for _ in range(100_000)], dtype=np.float64) * TICK
    se = math.sqrt(2.0) / 3.0 / math.sqrt(len(draws))
    assert abs(draws.mean() - 22.45) < 3 * se
    assert abs(np.median(draws) / TICK - mu_ticks) < 40  # symmetric center


def test_limit_sampler_clamps_after_ten_crossing_draws():
    # constant u = 0.999 maps every draw far above the center
    price, clamped = agents.draw_limit_price(3.0, 224500, +1, 224000, 224501,
                                             TICK, FixedU(0.999))
    assert clamped and price == 224500  # one tick inside the ask
    price, clamped = agents.draw_limit_price(3.0, 224500, -1, 224499, 225000,
                                             TICK, FixedU(0.001))
    assert clamped and price == 224500  # one tick above the bid


def test_limit_sampler_degenerate_rate_returns_center():
    price, clamped = agents.draw_limit_price(1e12, 224500, +1, None, None,
                                             TICK, np.random.default_rng(3))
    assert not clamped and price == 224500


def test_limit_sampler_never_marketable():
    rng = np.random.default_rng(12)
    for _ in range(2000):
        price, _ = agents.draw_limit_price(3.0, 224500, +1, 224400, 224600,
                                           TICK, rng)
        assert 0 < price < 224600
        price, _ = agents.draw_limit_price(3.0, 224500, -1, 224400, 224600,
                                           TICK, rng)
        assert price > 224400


def test_opinion_pulls_outliers_to_band_edge():
    ag = fund(30.0, chi_opinion=0.1)
    agents.apply_opinion(ag, 225000, TICK)
    assert ag.p_f == pytest.approx(24.75, rel=1e-12)
    ag = fund(20.0, chi_opinion=0.05)
    agents.apply_opinion(ag, 225000, TICK)
    assert ag.p_f == pytest.approx(21.375, rel=1e-12)


def test_opinion_keeps_agreeing_price():
    ag = fund(22.5, chi_opinion=0.1)
    agents.apply_opinion(ag, 225000, TICK)
    assert ag.p_f == 22.5


def test_opinion_is_idempotent():
    rng = np.random.default_rng(21)
    for _ in range(500):
        p_f = float(rng.uniform(1.0, 50.0))
        mu = int(rng.integers(100_000, 300_000))
        chi = float(rng.uniform(0.01, 0.1))
        once = agents.opinion_shift(p_f, mu, chi, TICK)
        twice = agents.opinion_shift(once, mu, chi, TICK)
        assert twice == once


def test_news_degenerate_sigma_shifts_exactly():
    ag = fund(22.0)
    agents.apply_news(ag, 0.5, 0.0, TICK, np.random.default_rng(0))
    assert ag.p_f == 22.5


def test_news_floors_at_one_tick():
    ag = fund(0.3)
    agents.apply_news(ag, -10.0, 0.0, TICK, np.random.default_rng(0))
    assert ag.p_f == TICK


def test_news_negative_shift_fraction_matches_normal_cdf():
    rng = np.random.default_rng(31)
    ag = fund(100.0)
    n, neg = 100_000, 0
    for _ in range(n):
        ag.p_f = 100.0
        agents.apply_news(ag, 0.5, 0.2, TICK, rng)
        neg += ag.p_f < 100.0
    # P(0.5 + 0.2 Z < 0) = Phi(-2.5) ~ 0.0062
    p = 0.0062097
    assert abs(neg / n - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_news_zero_mean_population_drift():
    rng = np.random.default_rng(32)
    ag = fund(100.0)
    deltas = []
    for _ in range(10_000):
        ag.p_f = 100.0
        agents.apply_news(ag, 0.0, 0.2, TICK, rng)
        deltas.append(ag.p_f - 100.0)
    assert abs(np.mean(deltas)) < 3 * 0.2 / math.sqrt(len(deltas))


def mao_oracle(prices, slow, fast):
    """Brute-force windowed means and strict-crossing signals."""
    out = []
    prev = None
    for t in range(len(prices)):
        if t + 1 < slow:
            out.append(NO_SIGNAL)
            continue
        fast_m = float(np.mean(prices[t - fast + 1:t + 1]))
        slow_m = float(np.mean(prices[t - slow + 1:t + 1]))
        d = fast_m - slow_m
        sig = NO_SIGNAL
        if prev is not None:
            if prev <= 0.0 and d > 0.0:
                sig = BUY_SIGNAL
            elif prev >= 0.0 and d < 0.0:
                sig = SELL_SIGNAL
        out.append(sig)
        prev = d
    return out


def test_mao_constant_series_never_signals():
    group = agents.make_group(6, 2)
    assert all(agents.mao_update(group, 225000) == NO_SIGNAL
               for _ in range(50))


def test_mao_step_up_gives_one_buy_signal():
    prices = [200000] * 12 + [210000] * 12
    group = agents.make_group(6, 2)
    got = [agents.mao_update(group, p) for p in prices]
    assert got == mao_oracle(prices, 6, 2)
    assert got.count(BUY_SIGNAL) == 1 and got.count(SELL_SIGNAL) == 0
    assert got[12] == BUY_SIGNAL  # first step that lifts the fast mean


def test_mao_monotone_ramp_signals_at_most_once():
    prices = list(range(200000, 203000, 10))
    group = agents.make_group(8, 3)
    got = [agents.mao_update(group, p) for p in prices]
    assert got.count(BUY_SIGNAL) + got.count(SELL_SIGNAL) <= 1


def test_mao_random_walk_matches_windowed_mean_oracle():
    rng = np.random.default_rng(41)
    prices = (200000 + np.cumsum(rng.integers(-50, 51, size=400))).tolist()
    group = agents.make_group(8, 3)
    got = [agents.mao_update(group, p) for p in prices]
    assert got == mao_oracle(prices, 8, 3)
    assert got.count(BUY_SIGNAL) > 0 and got.count(SELL_SIGNAL) > 0


def test_mao_rejects_bad_windows():
    with pytest.raises(ValueError):
        agents.make_group(5, 5)
    with pytest.raises(ValueError):
        agents.make_group(2, 0)


def tech(t_wait=5, gamma=0.01, last=FLAT, p_signal=0):
    return TechnicalAgent(0, t_wait, gamma, last_action=last,
                          p_signal=p_signal)


def test_signal_schedules_after_wait():
    ag = tech(t_wait=5)
    agents.technical_on_signal(ag, BUY_SIGNAL, t=100)
    assert (ag.pending_due, ag.pending_side) == (105, BUY_SIGNAL)


def test_same_direction_signal_ignored():
    ag = tech(last=BOUGHT)
    agents.technical_on_signal(ag, BUY_SIGNAL, t=100)
    assert ag.pending_due == -1 and ag.pending_side == NO_SIGNAL


def test_opposite_signal_with_zero_wait_is_due_immediately():
    ag = tech(t_wait=0, last=BOUGHT)
    agents.technical_on_signal(ag, SELL_SIGNAL, t=200)
    assert (ag.pending_due, ag.pending_side) == (200, SELL_SIGNAL)


def test_new_signal_overwrites_pending():
    ag = tech(t_wait=10)
    agents.technical_on_signal(ag, BUY_SIGNAL, t=100)
    ag.last_action = SOLD  # still flat on the buy side; accepts buy again
    agents.technical_on_signal(ag, BUY_SIGNAL, t=104)
    assert (ag.pending_due, ag.pending_side) == (114, BUY_SIGNAL)


def test_profit_exit_requires_strict_threshold():
    ag = tech(last=BOUGHT, p_signal=220000)
    assert agents.technical_profit_check(ag, 222200) == NO_SIGNAL
    assert agents.technical_profit_check(ag, 222300) == SELL_SIGNAL


def test_profit_exit_clears_pending():
    ag = tech(t_wait=3, last=BOUGHT, p_signal=220000)
    agents.technical_on_signal(ag, SELL_SIGNAL, t=50)
    assert ag.pending_due == 53
    assert agents.technical_profit_check(ag, 230000) == SELL_SIGNAL
    assert ag.pending_due == -1 and ag.pending_side == NO_SIGNAL


def test_short_exit_only_in_symmetric_mode():
    ag = tech(last=SOLD, p_signal=220000)
    assert agents.technical_profit_check(ag, 210000) == NO_SIGNAL
    assert agents.technical_profit_check(ag, 210000,
                                         symmetric=True) == BUY_SIGNAL
    # above the short entry: no exit either way
    ag2 = tech(last=SOLD, p_signal=220000)
    assert agents.technical_profit_check(ag2, 221000,
                                         symmetric=True) == NO_SIGNAL


def test_alternation_rule():
    assert agents.accepts_signal(FLAT, BUY_SIGNAL)
    assert agents.accepts_signal(FLAT, SELL_SIGNAL)
    assert agents.accepts_signal(BOUGHT, SELL_SIGNAL)
    assert agents.accepts_signal(SOLD, BUY_SIGNAL)
    assert not agents.accepts_signal(BOUGHT, BUY_SIGNAL)
    assert not agents.accepts_signal(SOLD, SELL_SIGNAL)
    assert not agents.accepts_signal(FLAT, NO_SIGNAL)
