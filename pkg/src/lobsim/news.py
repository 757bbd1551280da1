"""Exogenous news: memoryless arrival times carrying Gaussian news values.

Arrivals are spaced by geometric gaps (support {1, 2, ...}, mean f_news),
the discrete-time memoryless process. Each arrival's value zeta shifts every
fundamental agent's p_f through agents.news_shift.
"""

from __future__ import annotations

from dataclasses import dataclass

from numba.extending import register_jitable

from .randkit import uniform_to_geometric


@dataclass
class NewsProcess:
    mu_news: float
    sigma_news: float
    f_news: float
    next_arrival_step: int


@register_jitable
def draw_zeta(rng, mu_news, sigma_news):
    return mu_news + sigma_news * rng.standard_normal()


@register_jitable
def draw_gap(rng, f_news):
    return uniform_to_geometric(rng.random(), 1.0 / f_news)


def make_news(mu_news: float, sigma_news: float, f_news: float,
              start_step: int, rng) -> NewsProcess:
    """First arrival lands one geometric gap after start_step."""
    gap = draw_gap(rng, f_news)
    return NewsProcess(mu_news, sigma_news, f_news, start_step + gap)


def poll_news(process: NewsProcess, t: int, rng):
    """Return zeta_t on an arrival step (scheduling the next), else None.

    Per arrival the stream is consumed in a fixed order: the normal for zeta,
    then the uniform for the next gap.
    """
    if t != process.next_arrival_step:
        return None
    zeta = draw_zeta(rng, process.mu_news, process.sigma_news)
    process.next_arrival_step = t + draw_gap(rng, process.f_news)
    return zeta
