"""Compiled fast backend: the per-step loop as a numba kernel.

Mirrors engine.Simulation phase by phase and consumes the four substreams
through the same scalar kernels (randkit/agents/news), so records are
bit-identical to the reference backend; the equivalence tests enforce that
at the byte level.

The book lives in two int64 binary min-heaps. Each resting order packs into
one word: [price key: 22 bits][arrival seq: 28 bits][agent id: 13 bits].
Ask keys are the price, bid keys are PMAX - price, so integer order equals
(price priority, arrival) order and one pop yields the whole order. The
Python driver handles news polling, array growth, and recording glue; steps
run in chunks between news arrivals (or singly when trades are collected,
which needs a per-step output buffer).
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .agents import (
    MARKET_BUY, MARKET_SELL, LIMIT_BUY, LIMIT_SELL,
    BUY_SIGNAL, SELL_SIGNAL, NO_SIGNAL,
    accepts_signal, decide_code, draw_limit_ticks, news_shift, opinion_shift,
    profit_fires,
)
from .engine import (
    ConfigError, Diagnostics, LiquidityAborted, SeriesRecord, SimConfig,
    init_population, spawn_streams,
)
from .news import make_news, poll_news
from .randkit import currency_to_ticks, uniform_to_index

KEY_SHIFT = 41
SEQ_SHIFT = 13
AGENT_MASK = (1 << 13) - 1
SEQ_MASK = (1 << 28) - 1
PMAX = (1 << 22) - 1

OK = 0
FAIL_LIQUIDITY = 1
FAIL_PRICE_RANGE = 2


@njit(cache=True)
def _heap_push(heap, n, entry):
    heap[n] = entry
    i = n
    while i > 0:
        parent = (i - 1) >> 1
        if heap[parent] <= heap[i]:
            break
        heap[parent], heap[i] = heap[i], heap[parent]
        i = parent
    return n + 1


@njit(cache=True)
def _heap_pop(heap, n):
    root = heap[0]
    n -= 1
    heap[0] = heap[n]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= n:
            break
        small = left
        right = left + 1
        if right < n and heap[right] < heap[left]:
            small = right
        if heap[i] <= heap[small]:
            break
        heap[i], heap[small] = heap[small], heap[i]
        i = small
    return root, n


@njit(cache=True)
def _clean_heap(heap, n, expire_seq):
    # lazy expiry: drop dead orders as they surface at the front
    while n > 0 and ((heap[0] >> SEQ_SHIFT) & SEQ_MASK) < expire_seq:
        _, n = _heap_pop(heap, n)
    return n


@njit(cache=True)
def _run_steps(u_start, u_end, warmup,
               news_flag, zeta,
               n_fund, n_tech, n_groups,
               p_active, tick_size, lambda_limit, sigma_dpf,
               symmetric, abort_on_empty, collect, max_age, seq_starts,
               rng_news, rng_act, rng_limit,
               pf, chi_m, chi_o,
               tg_id, t_wait, last_action, p_signal, pending_due,
               pending_side, tech_gamma,
               g_slow, g_fast, g_ring, g_ring_off, g_count,
               g_slow_sum, g_fast_sum, g_prev_d, g_prev_valid, signals,
               bid_heap, ask_heap, state, diag,
               actors, rec_close, rec_vol, rec_tech, trades_buf):
    bid_n = state[0]
    ask_n = state[1]
    seq = state[2]
    close = state[3]
    rows = 0
    expire_seq = -1

    for u in range(u_start, u_end):
        warmed = u >= warmup
        if max_age > 0:
            seq_starts[u] = seq
            if u >= max_age:
                expire_seq = seq_starts[u - max_age]

        # (1) news shifts every fundamental p_f (chunks start on news steps)
        if news_flag == 1 and u == u_start:
            for i in range(n_fund):
                z = rng_news.standard_normal()
                pf[i] = news_shift(pf[i], zeta, sigma_dpf, z, tick_size)

        # (2) moving averages see the previous close; dispatch crossings
        for g in range(n_groups):
            x = float(close)
            n = g_count[g]
            slow_w = g_slow[g]
            fast_w = g_fast[g]
            off = g_ring_off[g]
            if n >= slow_w:
                g_slow_sum[g] = g_slow_sum[g] + x - g_ring[off + n % slow_w]
            else:
                g_slow_sum[g] = g_slow_sum[g] + x
            if n >= fast_w:
                g_fast_sum[g] = (g_fast_sum[g] + x
                                 - g_ring[off + (n - fast_w) % slow_w])
            else:
                g_fast_sum[g] = g_fast_sum[g] + x
            g_ring[off + n % slow_w] = x
            g_count[g] = n + 1
            sig = NO_SIGNAL
            if g_count[g] >= slow_w:
                d = g_fast_sum[g] / fast_w - g_slow_sum[g] / slow_w
                if g_prev_valid[g] == 1:
                    if g_prev_d[g] <= 0.0 and d > 0.0:
                        sig = BUY_SIGNAL
                    elif g_prev_d[g] >= 0.0 and d < 0.0:
                        sig = SELL_SIGNAL
                g_prev_d[g] = d
                g_prev_valid[g] = 1
            signals[g] = sig
        if warmed:
            for j in range(n_tech):
                s = signals[tg_id[j]]
                if s != NO_SIGNAL and accepts_signal(last_action[j], s):
                    pending_due[j] = u + t_wait[j]
                    pending_side[j] = s

        # (3) activation list: fundamental i -> i;
        # technical j with side s -> n_fund + 2j + (0 if buy else 1)
        k = 0
        for i in range(n_fund):
            if rng_act.random() < p_active:
                actors[k] = i
                k += 1
        if warmed:
            for j in range(n_tech):
                side = profit_fires(last_action[j], p_signal[j], close,
                                    tech_gamma[j], symmetric)
                if side != NO_SIGNAL:
                    pending_due[j] = -1
                    pending_side[j] = NO_SIGNAL
                elif pending_due[j] == u:
                    side = pending_side[j]
                    pending_due[j] = -1
                    pending_side[j] = NO_SIGNAL
                if side != NO_SIGNAL:
                    actors[k] = n_fund + 2 * j + (0 if side > 0 else 1)
                    k += 1

        # (4) Fisher-Yates with floor(u * n) indices
        for i in range(k - 1, 0, -1):
            jj = uniform_to_index(rng_act.random(), i + 1)
            actors[i], actors[jj] = actors[jj], actors[i]

        # (5) sequential routing against the live book
        n_trades = 0
        tech_traded = False
        for idx in range(k):
            a = actors[idx]
            price = -1
            buyer = -1
            seller = -1
            was_market = False
            if a < n_fund:
                if expire_seq >= 0:
                    bid_n = _clean_heap(bid_heap, bid_n, expire_seq)
                    ask_n = _clean_heap(ask_heap, ask_n, expire_seq)
                bid = PMAX - (bid_heap[0] >> KEY_SHIFT) if bid_n > 0 else -1
                ask = (ask_heap[0] >> KEY_SHIFT) if ask_n > 0 else -1
                if bid >= 0 and ask >= 0:
                    mu = (bid + ask + 1) // 2
                elif bid >= 0:
                    mu = bid
                elif ask >= 0:
                    mu = ask
                else:
                    mu = close
                pf[a] = opinion_shift(pf[a], mu, chi_o[a], tick_size)
                code = decide_code(pf[a], chi_m[a], bid, ask, mu, tick_size)
                if code == MARKET_BUY:
                    e, ask_n = _heap_pop(ask_heap, ask_n)
                    price = e >> KEY_SHIFT
                    buyer = a
                    seller = e & AGENT_MASK
                    was_market = True
                elif code == MARKET_SELL:
                    e, bid_n = _heap_pop(bid_heap, bid_n)
                    price = PMAX - (e >> KEY_SHIFT)
                    buyer = e & AGENT_MASK
                    seller = a
                    was_market = True
                elif code == LIMIT_BUY or code == LIMIT_SELL:
                    side = BUY_SIGNAL if code == LIMIT_BUY else SELL_SIGNAL
                    p, clamped = draw_limit_ticks(rng_limit, lambda_limit,
                                                  mu, side, bid, ask,
                                                  tick_size)
                    if clamped:
                        diag[3] += 1
                    if p > PMAX:
                        state[0] = bid_n
                        state[1] = ask_n
                        state[2] = seq
                        state[3] = close
                        return FAIL_PRICE_RANGE, u, 0, rows
                    if side == BUY_SIGNAL:
                        if ask >= 0 and p >= ask:
                            e, ask_n = _heap_pop(ask_heap, ask_n)
                            price = e >> KEY_SHIFT
                            buyer = a
                            seller = e & AGENT_MASK
                        else:
                            entry = ((PMAX - p) << KEY_SHIFT) | \
                                (seq << SEQ_SHIFT) | a
                            bid_n = _heap_push(bid_heap, bid_n, entry)
                            seq += 1
                    else:
                        if bid >= 0 and p <= bid:
                            e, bid_n = _heap_pop(bid_heap, bid_n)
                            price = PMAX - (e >> KEY_SHIFT)
                            buyer = e & AGENT_MASK
                            seller = a
                        else:
                            entry = (p << KEY_SHIFT) | (seq << SEQ_SHIFT) | a
                            ask_n = _heap_push(ask_heap, ask_n, entry)
                            seq += 1
            else:
                kk = a - n_fund
                j = kk >> 1
                side = BUY_SIGNAL if (kk & 1) == 0 else SELL_SIGNAL
                was_market = True
                if side == BUY_SIGNAL:
                    if expire_seq >= 0:
                        ask_n = _clean_heap(ask_heap, ask_n, expire_seq)
                    if ask_n == 0:
                        if abort_on_empty == 1:
                            state[0] = bid_n
                            state[1] = ask_n
                            state[2] = seq
                            state[3] = close
                            return FAIL_LIQUIDITY, u, side, rows
                        diag[4] += 1
                    else:
                        e, ask_n = _heap_pop(ask_heap, ask_n)
                        price = e >> KEY_SHIFT
                        buyer = n_fund + j
                        seller = e & AGENT_MASK
                else:
                    if expire_seq >= 0:
                        bid_n = _clean_heap(bid_heap, bid_n, expire_seq)
                    if bid_n == 0:
                        if abort_on_empty == 1:
                            state[0] = bid_n
                            state[1] = ask_n
                            state[2] = seq
                            state[3] = close
                            return FAIL_LIQUIDITY, u, side, rows
                        diag[4] += 1
                    else:
                        e, bid_n = _heap_pop(bid_heap, bid_n)
                        price = PMAX - (e >> KEY_SHIFT)
                        buyer = e & AGENT_MASK
                        seller = n_fund + j
                if price >= 0:
                    last_action[j] = side
                    p_signal[j] = price
            if price >= 0:
                n_trades += 1
                close = price
                if was_market:
                    diag[0] += 1
                else:
                    diag[1] += 1
                if buyer == seller:
                    diag[2] += 1
                if buyer >= n_fund or seller >= n_fund:
                    tech_traded = True
                if collect == 1 and warmed:
                    trades_buf[rows, 0] = u - warmup
                    trades_buf[rows, 1] = price
                    trades_buf[rows, 2] = buyer
                    trades_buf[rows, 3] = seller
                    rows += 1

        # (6) record
        if warmed:
            r = u - warmup
            rec_close[r] = close
            rec_vol[r] = n_trades
            rec_tech[r] = 1 if tech_traded else 0

    state[0] = bid_n
    state[1] = ask_n
    state[2] = seq
    state[3] = close
    return OK, 0, 0, rows


def _grow(heap, used, need):
    cap = heap.shape[0]
    if cap - used >= need:
        return heap
    while cap - used < need:
        cap *= 2
    bigger = np.empty(cap, dtype=np.int64)
    bigger[:used] = heap[:used]
    return bigger


def run_fast(config: SimConfig, collect_trades: bool = False) -> SeriesRecord:
    config.validate()
    if config.n_fundamental > AGENT_MASK:
        raise ConfigError("n_fundamental: the fast backend packs resting "
                          "agent ids into 13 bits (max 8191); use the "
                          "reference backend beyond that")
    p0 = currency_to_ticks(config.initial_price, config.tick_size)
    if p0 > PMAX:
        raise ConfigError("initial_price: exceeds the fast backend's "
                          "22-bit tick range")

    rng_pop, rng_news, rng_act, rng_limit = spawn_streams(config.seed)
    fundamentals, groups, technicals = init_population(config, rng_pop)
    n_fund = config.n_fundamental
    n_tech = len(technicals)
    n_groups = len(groups)

    pf = np.array([a.p_f for a in fundamentals], dtype=np.float64)
    chi_m = np.array([a.chi_market for a in fundamentals], dtype=np.float64)
    chi_o = np.array([a.chi_opinion for a in fundamentals], dtype=np.float64)

    tg_id = np.array([t.group_id for t in technicals], dtype=np.int64)
    t_wait = np.array([t.t_wait for t in technicals], dtype=np.int64)
    tech_gamma = np.array([t.gamma for t in technicals], dtype=np.float64)
    last_action = np.zeros(n_tech, dtype=np.int64)
    p_signal = np.zeros(n_tech, dtype=np.int64)
    pending_due = np.full(n_tech, -1, dtype=np.int64)
    pending_side = np.zeros(n_tech, dtype=np.int64)

    g_slow = np.array([g.slow_window for g in groups], dtype=np.int64)
    g_fast = np.array([g.fast_window for g in groups], dtype=np.int64)
    g_ring_off = np.zeros(n_groups, dtype=np.int64)
    total_ring = 0
    for g in range(n_groups):
        g_ring_off[g] = total_ring
        total_ring += int(g_slow[g])
    g_ring = np.zeros(total_ring, dtype=np.float64)
    g_count = np.zeros(n_groups, dtype=np.int64)
    g_slow_sum = np.zeros(n_groups, dtype=np.float64)
    g_fast_sum = np.zeros(n_groups, dtype=np.float64)
    g_prev_d = np.zeros(n_groups, dtype=np.float64)
    g_prev_valid = np.zeros(n_groups, dtype=np.int64)
    signals = np.zeros(max(n_groups, 1), dtype=np.int64)

    news = make_news(config.mu_news, config.sigma_news, config.f_news, 0,
                     rng_news)
    warmup = config.resolved_warmup()
    T = config.T
    total = warmup + T

    state = np.array([0, 0, 0, p0], dtype=np.int64)
    diag = np.zeros(5, dtype=np.int64)
    bid_heap = np.empty(1 << 20, dtype=np.int64)
    ask_heap = np.empty(1 << 20, dtype=np.int64)
    actors = np.empty(max(n_fund + n_tech, 1), dtype=np.int64)
    rec_close = np.zeros(T, dtype=np.int64)
    rec_vol = np.zeros(T, dtype=np.int64)
    rec_tech = np.zeros(T, dtype=np.uint8)

    chunk_max = 1 if collect_trades else 512
    if collect_trades:
        trades_buf = np.empty((max(n_fund + n_tech, 1), 4), dtype=np.int64)
    else:
        trades_buf = np.empty((1, 4), dtype=np.int64)
    max_age = config.max_resting_age
    seq_starts = np.full(total if max_age > 0 else 1, -1, dtype=np.int64)

    news_log = []
    trade_chunks = []
    abort_on_empty = 1 if config.liquidity_failure == "abort" else 0
    u = 0
    while u < total:
        zeta = poll_news(news, u, rng_news)
        news_flag = 0 if zeta is None else 1
        if news_flag:
            news_log.append((u - warmup, zeta))
        boundary = warmup if u < warmup else total
        u_end = min(u + chunk_max, boundary, news.next_arrival_step)

        need = (u_end - u) * max(n_fund, 1)
        bid_heap = _grow(bid_heap, int(state[0]), need)
        ask_heap = _grow(ask_heap, int(state[1]), need)
        if int(state[2]) + need > SEQ_MASK:
            raise RuntimeError("order arrival sequence space exhausted")

        code, fail_u, fail_side, rows = _run_steps(
            u, u_end, warmup,
            news_flag, zeta if news_flag else 0.0,
            n_fund, n_tech, n_groups,
            config.p_active, config.tick_size, config.lambda_limit,
            config.sigma_dpf,
            config.symmetric_profit_taking, abort_on_empty,
            1 if collect_trades else 0, max_age, seq_starts,
            rng_news, rng_act, rng_limit,
            pf, chi_m, chi_o,
            tg_id, t_wait, last_action, p_signal, pending_due,
            pending_side, tech_gamma,
            g_slow, g_fast, g_ring, g_ring_off, g_count,
            g_slow_sum, g_fast_sum, g_prev_d, g_prev_valid, signals,
            bid_heap, ask_heap, state, diag,
            actors, rec_close, rec_vol, rec_tech, trades_buf)
        if code == FAIL_LIQUIDITY:
            raise LiquidityAborted(fail_u - warmup, fail_side)
        if code == FAIL_PRICE_RANGE:
            raise RuntimeError("price left the fast backend's 22-bit tick "
                               "range; the run diverged")
        if rows:
            trade_chunks.append(trades_buf[:rows].copy())
        u = u_end

    final_expire = -1
    if max_age > 0 and total - 1 >= max_age:
        final_expire = int(seq_starts[total - 1 - max_age])

    def live(heap, n):
        # heap sizes count lazily-expired entries; report live orders only
        if final_expire < 0:
            return n
        seqs = (heap[:n] >> SEQ_SHIFT) & SEQ_MASK
        return int(np.count_nonzero(seqs >= final_expire))

    diagnostics = Diagnostics(
        news_count=len(news_log),
        clamp_count=int(diag[3]),
        liquidity_failures=int(diag[4]),
        self_trades=int(diag[2]),
        market_trades=int(diag[0]),
        crossed_limit_trades=int(diag[1]),
        final_bid_depth=live(bid_heap, int(state[0])),
        final_ask_depth=live(ask_heap, int(state[1])),
    )
    trades = None
    if collect_trades:
        if trade_chunks:
            trades = np.concatenate(trade_chunks)
        else:
            trades = np.zeros((0, 4), dtype=np.int64)
    news_arr = np.array(news_log, dtype=np.float64).reshape(-1, 2)
    return SeriesRecord(
        tick_size=config.tick_size,
        warmup_steps=warmup,
        n_fundamental=n_fund,
        close=rec_close,
        volume=rec_vol,
        tech_active=rec_tech.astype(bool),
        news_steps=news_arr[:, 0].astype(np.int64),
        news_values=news_arr[:, 1].copy(),
        diagnostics=diagnostics,
        trades=trades,
    )
