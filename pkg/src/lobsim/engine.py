"""Simulation engine: configuration, population setup, and the step loop.

A run advances in discrete steps. Each step, in order: (1) poll news and,
on an arrival, shift every fundamental agent's p_f; (2) push the previous
close into each technical group's moving averages and dispatch crossing
signals; (3) build the activation list (fundamentals by Bernoulli(p_active),
technicals with a due scheduled order or a firing profit exit, both judged
against the previous close); (4) shuffle the list; (5) route each actor's
order into the live book; (6) record close, volume, and technical activity.

The first warmup_steps steps run with technical populations dormant so the
book gains depth and the moving averages fill; recording starts after.

Two backends produce bit-identical records: this module's pure-Python
Simulation (the readable reference) and fastsim's compiled kernel (the fast
path, default). Both consume four per-purpose substreams spawned from the
seed: population init, news, activations, limit prices.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from . import lob
from .agents import (
    ABSTAIN, MARKET_BUY, MARKET_SELL, LIMIT_BUY, LIMIT_SELL,
    BUY_SIGNAL, SELL_SIGNAL, NO_SIGNAL, BOUGHT, SOLD,
    FundamentalAgent, TechnicalAgent, apply_news, apply_opinion,
    fundamental_decide, make_group, mao_update, technical_on_signal,
    technical_profit_check,
)
from .news import make_news, poll_news
from .randkit import currency_to_ticks, uniform_to_index


class ConfigError(ValueError):
    """A configuration value is outside its domain."""


class LiquidityAborted(RuntimeError):
    """A market order found an empty book side under the abort policy."""

    def __init__(self, step: int, side: int):
        self.step = step
        self.side = side
        word = "buy" if side > 0 else "sell"
        super().__init__(f"market {word} at recorded step {step} found an "
                         f"empty opposite side")


@dataclass
class SimConfig:
    n_fundamental: int = 1000
    technical_groups: tuple = ((4000, 2000, 750), (2000, 1000, 750))
    T: int = 100_000
    seed: int = 1
    tick_size: float = 1e-4
    p_active: float = 0.15
    p_f_range: tuple = (20.0, 25.0)
    chi_market_range: tuple = (0.005, 0.25)
    chi_opinion_range: tuple = (0.01, 0.1)
    sigma_dpf: float = 0.2
    lambda_limit: float = 3.0
    mu_news: float = 0.0
    sigma_news: float = 0.1
    f_news: float = 100.0
    gamma: float = 0.01
    t_wait_range: tuple = (0, 50)
    symmetric_profit_taking: bool = False
    warmup_steps: int | None = None   # None: 2x the slowest window
    initial_price: float = 22.5
    liquidity_failure: str = "abort"  # or "skip"
    # Resting limit orders expire after this many steps; 0 disables expiry.
    # With expiry off, limit submissions outrun executions roughly 7:1 at the
    # default rates, so the book thickens without bound, pins the price, and
    # suppresses trend formation; a short lifetime keeps the bounded-depth
    # regime where technical bursts move the price.
    max_resting_age: int = 15

    def resolved_warmup(self) -> int:
        if self.warmup_steps is not None:
            return self.warmup_steps
        slowest = max((g[0] for g in self.technical_groups), default=4000)
        return 2 * slowest

    def validate(self) -> None:
        def bad(key, why):
            raise ConfigError(f"{key}: {why}")

        if self.n_fundamental < 0:
            bad("n_fundamental", "must be >= 0")
        if self.T < 1:
            bad("T", "must be >= 1")
        if self.seed < 0:
            bad("seed", "must be >= 0")
        if not self.tick_size > 0:
            bad("tick_size", "must be > 0")
        if not 0.0 <= self.p_active <= 1.0:
            bad("p_active", "must lie in [0, 1]")
        for key, (lo, hi) in (("p_f", self.p_f_range),
                              ("chi_market", self.chi_market_range),
                              ("chi_opinion", self.chi_opinion_range)):
            if not (lo <= hi):
                bad(key, "range must satisfy lo <= hi")
            if not lo > 0:
                bad(key, "range must be positive")
        if self.chi_market_range[1] >= 1 or self.chi_opinion_range[1] >= 1:
            bad("chi_market/chi_opinion", "ranges must stay below 1")
        if self.sigma_dpf < 0:
            bad("sigma_dpf", "must be >= 0")
        if not (self.lambda_limit > 0 and math.isfinite(self.lambda_limit)):
            bad("lambda_limit", "must be positive and finite")
        if self.sigma_news < 0:
            bad("sigma_news", "must be >= 0")
        if self.f_news < 1:
            bad("f_news", "must be >= 1")
        if not self.gamma > 0:
            bad("gamma", "must be > 0 (inf disables profit taking)")
        t_lo, t_hi = self.t_wait_range
        if t_lo < 0 or t_hi < t_lo:
            bad("t_wait", "range must satisfy 0 <= lo <= hi")
        slowest = 0
        for g in self.technical_groups:
            slow, fast, count = g
            if not 1 <= fast < slow:
                bad("group", f"{g}: need 1 <= fast < slow")
            if count < 0:
                bad("group", f"{g}: member count must be >= 0")
            slowest = max(slowest, slow)
        if self.technical_groups and self.T <= slowest:
            bad("T", f"must exceed the slowest window ({slowest})")
        if self.resolved_warmup() < 0:
            bad("warmup", "must be >= 0")
        if not self.initial_price > 0:
            bad("initial_price", "must be > 0")
        if self.liquidity_failure not in ("abort", "skip"):
            bad("liquidity_failure", "must be 'abort' or 'skip'")
        if self.max_resting_age < 0:
            bad("max_resting_age", "must be >= 0 (0 disables)")

    def n_technical(self) -> int:
        return sum(g[2] for g in self.technical_groups)


@dataclass
class Diagnostics:
    news_count: int = 0
    clamp_count: int = 0
    liquidity_failures: int = 0
    self_trades: int = 0
    market_trades: int = 0
    crossed_limit_trades: int = 0
    final_bid_depth: int = 0
    final_ask_depth: int = 0


@dataclass
class SeriesRecord:
    """Recorded output of one run. Prices are integer ticks."""

    tick_size: float
    warmup_steps: int
    n_fundamental: int
    close: np.ndarray        # int64, length T
    volume: np.ndarray       # int64
    tech_active: np.ndarray  # bool
    news_steps: np.ndarray   # int64, recorded-step index (< 0 in warmup)
    news_values: np.ndarray  # float64
    diagnostics: Diagnostics
    trades: np.ndarray | None = None  # int64 (n, 4): step, price, buyer, seller

    def close_currency(self) -> np.ndarray:
        return self.close * self.tick_size


def init_population(config: SimConfig, rng):
    """Draw all per-agent parameters from the population substream.

    Fixed draw order: for each fundamental agent, (p_f, chi_market,
    chi_opinion); then for each group in listed order, each member's t_wait.
    """
    pf_lo, pf_hi = config.p_f_range
    cm_lo, cm_hi = config.chi_market_range
    co_lo, co_hi = config.chi_opinion_range
    fundamentals = []
    for _ in range(config.n_fundamental):
        p_f = pf_lo + rng.random() * (pf_hi - pf_lo)
        cm = cm_lo + rng.random() * (cm_hi - cm_lo)
        co = co_lo + rng.random() * (co_hi - co_lo)
        fundamentals.append(FundamentalAgent(p_f, cm, co, config.p_active))
    t_lo, t_hi = config.t_wait_range
    groups = []
    technicals = []
    for gi, (slow, fast, count) in enumerate(config.technical_groups):
        groups.append(make_group(slow, fast))
        for _ in range(count):
            tw = t_lo + uniform_to_index(rng.random(), t_hi - t_lo + 1)
            technicals.append(TechnicalAgent(gi, tw, config.gamma))
    return fundamentals, groups, technicals


def spawn_streams(seed: int):
    """The four per-purpose generators every backend must consume alike."""
    children = np.random.SeedSequence(seed).spawn(4)
    return tuple(np.random.default_rng(c) for c in children)


class Simulation:
    """Pure-Python reference backend; one instance per run."""

    def __init__(self, config: SimConfig, collect_trades: bool = False):
        config.validate()
        self.config = config
        self.collect_trades = collect_trades
        self.rng_pop, self.rng_news, self.rng_act, self.rng_limit = \
            spawn_streams(config.seed)
        self.fundamentals, self.groups, self.technicals = \
            init_population(config, self.rng_pop)
        self.book = lob.OrderBook()
        self.p0 = currency_to_ticks(config.initial_price, config.tick_size)
        self.close = self.p0  # last trade price, carried across steps
        self.news = make_news(config.mu_news, config.sigma_news,
                              config.f_news, 0, self.rng_news)
        self.warmup = config.resolved_warmup()
        self.diag = Diagnostics()
        self.next_order_id = 0
        self.seq_starts = []  # book seq at each step start, for expiry
        T = config.T
        self.rec_close = np.zeros(T, dtype=np.int64)
        self.rec_volume = np.zeros(T, dtype=np.int64)
        self.rec_tech = np.zeros(T, dtype=bool)
        self.news_log = []
        self.trade_log = []

    def run(self) -> SeriesRecord:
        for u in range(self.warmup + self.config.T):
            self.step(u)
        self.diag.final_bid_depth, self.diag.final_ask_depth = \
            self.book.depth()
        trades = None
        if self.collect_trades:
            trades = np.array(self.trade_log, dtype=np.int64).reshape(-1, 4)
        news_arr = np.array(self.news_log, dtype=np.float64).reshape(-1, 2)
        return SeriesRecord(
            tick_size=self.config.tick_size,
            warmup_steps=self.warmup,
            n_fundamental=self.config.n_fundamental,
            close=self.rec_close,
            volume=self.rec_volume,
            tech_active=self.rec_tech,
            news_steps=news_arr[:, 0].astype(np.int64),
            news_values=news_arr[:, 1].copy(),
            diagnostics=self.diag,
            trades=trades,
        )

    def step(self, u: int) -> None:
        cfg = self.config
        warmed = u >= self.warmup
        r = u - self.warmup
        n_fund = cfg.n_fundamental

        if cfg.max_resting_age > 0:
            self.seq_starts.append(self.book.seq_counter)
            if u - cfg.max_resting_age >= 0:
                self.book.expire_before_seq = \
                    self.seq_starts[u - cfg.max_resting_age]

        # (1) news shifts every fundamental p_f
        zeta = poll_news(self.news, u, self.rng_news)
        if zeta is not None:
            self.diag.news_count += 1
            self.news_log.append((r, zeta))
            for ag in self.fundamentals:
                apply_news(ag, zeta, cfg.sigma_dpf, cfg.tick_size,
                           self.rng_news)

        # (2) moving averages see the previous close; dispatch crossings
        signals = [mao_update(g, self.close) for g in self.groups]
        if warmed:
            for tech in self.technicals:
                sig = signals[tech.group_id]
                if sig != NO_SIGNAL:
                    technical_on_signal(tech, sig, u)

        # (3) activation list, encoded: fundamental i -> i;
        # technical j with side s -> n_fund + 2j + (0 if buy else 1)
        actors = []
        for i in range(n_fund):
            if self.rng_act.random() < cfg.p_active:
                actors.append(i)
        if warmed:
            for j, tech in enumerate(self.technicals):
                side = technical_profit_check(tech, self.close,
                                              cfg.symmetric_profit_taking)
                if side == NO_SIGNAL and tech.pending_due == u:
                    side = tech.pending_side
                    tech.pending_due = -1
                    tech.pending_side = NO_SIGNAL
                if side != NO_SIGNAL:
                    actors.append(n_fund + 2 * j + (0 if side > 0 else 1))

        # (4) Fisher-Yates with floor(u * n) indices
        for i in range(len(actors) - 1, 0, -1):
            j = uniform_to_index(self.rng_act.random(), i + 1)
            actors[i], actors[j] = actors[j], actors[i]

        # (5) sequential routing against the live book
        n_trades = 0
        tech_traded = False
        for slot, a in enumerate(actors):
            if a < n_fund:
                trade, was_market = self._fundamental_turn(a, u, slot)
            else:
                k = a - n_fund
                side = BUY_SIGNAL if (k & 1) == 0 else SELL_SIGNAL
                trade, was_market = self._technical_turn(k >> 1, side, u, r)
            if trade is not None:
                n_trades += 1
                self.close = trade.price
                if was_market:
                    self.diag.market_trades += 1
                else:
                    self.diag.crossed_limit_trades += 1
                if trade.buyer_agent == trade.seller_agent:
                    self.diag.self_trades += 1
                if trade.buyer_agent >= n_fund or trade.seller_agent >= n_fund:
                    tech_traded = True
                if self.collect_trades and warmed:
                    self.trade_log.append((r, trade.price,
                                           trade.buyer_agent,
                                           trade.seller_agent))

        # (6) record
        if warmed:
            self.rec_close[r] = self.close
            self.rec_volume[r] = n_trades
            self.rec_tech[r] = tech_traded

    def _fundamental_turn(self, i: int, u: int, slot: int):
        cfg = self.config
        ag = self.fundamentals[i]
        mu = self.book.mid_spread(self.close)
        apply_opinion(ag, mu, cfg.tick_size)
        action = fundamental_decide(ag, self.book.best_bid(),
                                    self.book.best_ask(), mu, cfg.tick_size,
                                    cfg.lambda_limit, self.rng_limit)
        if action.clamped:
            self.diag.clamp_count += 1
        if action.kind == ABSTAIN:
            return None, False
        if action.kind in (MARKET_BUY, MARKET_SELL):
            side = lob.BUY if action.kind == MARKET_BUY else lob.SELL
            # decide() only picks a market order when the opposite best
            # exists, and the book cannot change before this submit
            return self.book.submit_market(side, i, u), True
        side = lob.BUY if action.kind == LIMIT_BUY else lob.SELL
        order = lob.Order(self._order_id(), side, lob.LIMIT, action.price,
                          i, (u, slot))
        trades = self.book.submit_limit(order)
        return (trades[0] if trades else None), False

    def _technical_turn(self, j: int, side: int, u: int, r: int):
        cfg = self.config
        tech = self.technicals[j]
        agent_id = cfg.n_fundamental + j
        lob_side = lob.BUY if side > 0 else lob.SELL
        try:
            trade = self.book.submit_market(lob_side, agent_id, u)
        except lob.InsufficientLiquidity:
            if cfg.liquidity_failure == "abort":
                raise LiquidityAborted(r, side) from None
            self.diag.liquidity_failures += 1
            return None, True
        tech.last_action = BOUGHT if side > 0 else SOLD
        tech.p_signal = trade.price
        return trade, True

    def _order_id(self) -> int:
        oid = self.next_order_id
        self.next_order_id += 1
        return oid


def run(config: SimConfig, backend: str = "fast",
        collect_trades: bool = False) -> SeriesRecord:
    """Run one simulation. Backends are bit-identical; fast needs numba."""
    if backend == "reference":
        return Simulation(config, collect_trades).run()
    if backend == "fast":
        from . import fastsim
        return fastsim.run_fast(config, collect_trades)
    raise ValueError(f"unknown backend: {backend}")


def write_series_csv(record: SeriesRecord, path) -> None:
    close_c = record.close_currency()
    with open(path, "w") as f:
        f.write("step,close,volume,tech_active\n")
        for t in range(len(record.close)):
            f.write(f"{t},{float(close_c[t])!r},{record.volume[t]},"
                    f"{int(record.tech_active[t])}\n")


def write_trades_csv(record: SeriesRecord, path) -> None:
    if record.trades is None:
        raise ValueError("run was executed without trade collection")
    n_fund = record.n_fundamental
    kind = ("fundamental", "technical")
    with open(path, "w") as f:
        f.write("step,price,buyer,seller,buyer_type,seller_type\n")
        for step, price, buyer, seller in record.trades:
            f.write(f"{step},{float(price * record.tick_size)!r},"
                    f"{buyer},{seller},{kind[int(buyer >= n_fund)]},"
                    f"{kind[int(seller >= n_fund)]}\n")
