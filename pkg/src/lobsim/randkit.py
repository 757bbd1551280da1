"""Scalar inverse-CDF transforms shared by the reference and compiled engines.

Both engine backends must consume identical random streams and produce
bit-identical floats, so every distribution that is not drawn directly from
``numpy.random.Generator`` is derived from a single uniform through the
functions below. They are register_jitable: plain Python when called from the
reference engine, compiled when called from the numba kernel. Keeping one
source guarantees the two backends cannot drift.
"""

import math

from numba.extending import register_jitable


@register_jitable
def uniform_to_laplace(u, mu, scale):
    """Map u ~ U[0,1) to a Laplace(mu, scale) variate.

    u == 0.0 maps to -inf; callers treat non-positive prices as rejected
    draws, so no special-casing is needed here.
    """
    if u < 0.5:
        return mu + scale * math.log(2.0 * u)
    return mu - scale * math.log(2.0 * (1.0 - u))


@register_jitable
def uniform_to_geometric(u, p):
    """Map u ~ U[0,1) to a geometric variate on {1, 2, ...} with mean 1/p."""
    if p >= 1.0:
        return 1
    return 1 + int(math.log(1.0 - u) / math.log(1.0 - p))


@register_jitable
def uniform_to_index(u, n):
    """Map u ~ U[0,1) to an integer in [0, n)."""
    return int(u * n)


@register_jitable
def currency_to_ticks(x, tick_size):
    """Round a currency amount to the nearest integer tick, half up."""
    return int(math.floor(x / tick_size + 0.5))
