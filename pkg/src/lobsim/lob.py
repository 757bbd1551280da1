"""Double-auction limit order book with price-time priority.

All prices are positive integer tick counts, so priority comparisons are
exact and runs are bit-reproducible. Orders have unit volume: an incoming
marketable order executes at most one trade, against the best resting order
on the opposite side, at the resting order's price.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

BUY = "buy"
SELL = "sell"
LIMIT = "limit"
MARKET = "market"


class InsufficientLiquidity(Exception):
    """A market order found no resting order on the opposite side."""


class DuplicateOrderId(Exception):
    """An incoming order reused the id of an order still resting."""


@dataclass(frozen=True)
class Order:
    id: int
    side: str               # BUY or SELL
    kind: str               # LIMIT or MARKET
    price: int | None       # ticks; None for market orders
    agent_id: int
    arrival: tuple[int, int]  # (step, within-step sequence)


@dataclass(frozen=True)
class Trade:
    buyer_agent: int
    seller_agent: int
    price: int
    step: int


@dataclass
class OrderBook:
    """Two price-time priority queues of unit-volume resting limit orders.

    Internally each side is a heap of (key, seq, order_id, agent_id, price)
    tuples where key orders asks by ascending price and bids by descending
    price, and seq is a global arrival counter breaking price ties
    first-come-first-served.

    ``expire_before_seq`` supports the optional max-resting-age knob: resting
    orders with seq below the threshold are discarded lazily when they reach
    the front of their queue, so they can neither trade nor set the best
    quote. It defaults to -1 (no expiry).
    """

    bids: list = field(default_factory=list)
    asks: list = field(default_factory=list)
    expire_before_seq: int = -1
    _next_seq: int = 0
    _resting: dict = field(default_factory=dict)  # order_id -> heap entry

    def _clean(self, heap: list) -> None:
        while heap and heap[0][1] < self.expire_before_seq:
            entry = heapq.heappop(heap)
            del self._resting[entry[2]]

    @property
    def seq_counter(self) -> int:
        """Arrival sequence the next resting order will get.

        The engine snapshots this at each step boundary to translate the
        max-resting-age knob (measured in steps) into a seq threshold.
        """
        return self._next_seq

    def best_bid(self) -> int | None:
        self._clean(self.bids)
        return self.bids[0][4] if self.bids else None

    def best_ask(self) -> int | None:
        self._clean(self.asks)
        return self.asks[0][4] if self.asks else None

    def mid_spread(self, fallback: int) -> int:
        """Midpoint of the best quotes, rounded to the nearest tick (half up).

        With one side empty returns the other side's best; with both empty
        returns ``fallback`` (the caller passes the last trade price, which
        is the initial price before any trade).
        """
        bid = self.best_bid()
        ask = self.best_ask()
        if bid is not None and ask is not None:
            return (bid + ask + 1) // 2
        if bid is not None:
            return bid
        if ask is not None:
            return ask
        return fallback

    def depth(self) -> tuple[int, int]:
        """Count live resting orders per side.

        Expired orders are removed lazily, so the heaps may still hold dead
        entries; they are excluded here.
        """
        nb = sum(1 for e in self.bids if e[1] >= self.expire_before_seq)
        na = sum(1 for e in self.asks if e[1] >= self.expire_before_seq)
        return nb, na

    def submit_limit(self, order: Order) -> list[Trade]:
        """Add a limit order, matching first if it crosses the opposite best.

        Returns the executed trades (at most one, since volume is 1). A
        marketable limit executes like a market order, at the resting
        order's price.
        """
        if order.kind != LIMIT:
            raise ValueError("submit_limit requires a limit order")
        if order.price is None or order.price <= 0:
            raise ValueError("limit orders require a positive tick price")
        if order.id in self._resting:
            raise DuplicateOrderId(f"order id {order.id} is already resting")

        if order.side == BUY:
            ask = self.best_ask()
            if ask is not None and order.price >= ask:
                return [self._execute(BUY, order.agent_id, order.arrival[0])]
            self._rest(self.bids, order, key=-order.price)
        else:
            bid = self.best_bid()
            if bid is not None and order.price <= bid:
                return [self._execute(SELL, order.agent_id, order.arrival[0])]
            self._rest(self.asks, order, key=order.price)
        return []

    def submit_market(self, side: str, agent_id: int, step: int) -> Trade:
        """Execute against the best opposite resting order.

        Raises InsufficientLiquidity when the opposite side is empty; the
        caller decides whether that aborts the run.
        """
        best = self.best_ask() if side == BUY else self.best_bid()
        if best is None:
            raise InsufficientLiquidity(
                f"market {side} at step {step}: opposite side empty")
        return self._execute(side, agent_id, step)

    def _rest(self, heap: list, order: Order, key: int) -> None:
        entry = (key, self._next_seq, order.id, order.agent_id, order.price)
        self._next_seq += 1
        heapq.heappush(heap, entry)
        self._resting[order.id] = entry

    def _execute(self, taker_side: str, taker_agent: int, step: int) -> Trade:
        heap = self.asks if taker_side == BUY else self.bids
        entry = heapq.heappop(heap)
        del self._resting[entry[2]]
        if taker_side == BUY:
            return Trade(buyer_agent=taker_agent, seller_agent=entry[3],
                         price=entry[4], step=step)
        return Trade(buyer_agent=entry[3], seller_agent=taker_agent,
                     price=entry[4], step=step)
