"""Return-series statistics: ACFs, moments, rolling volatility, CCDFs,
power-law tail fits with a lognormal likelihood-ratio comparison, and a
KS lognormality test.

All functions are pure. Estimators that can fail on degenerate input raise
StatsError (or FitFailure for the tail fit) rather than returning NaNs, so
report assembly can record the failure explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, kolmogorov, ndtr
from scipy.stats import norm


class StatsError(ValueError):
    """Input violates an estimator's domain (degenerate, too short, ...)."""


class FitFailure(StatsError):
    """The tail fit could not produce a usable estimate."""


@dataclass(frozen=True)
class TailFit:
    alpha: float        # density exponent, f(x) ~ x^-alpha
    kappa: float        # CCDF exponent, alpha - 1
    x_min: float
    ks_distance: float
    n_tail: int


@dataclass(frozen=True)
class LLRResult:
    R: float            # per-point log-likelihood ratio, > 0 favors power law
    p: float


@dataclass(frozen=True)
class KSResult:
    statistic: float
    p_value: float
    log_mean: float
    log_sd: float


def log_returns(prices, tau: int = 1) -> np.ndarray:
    prices = np.asarray(prices, dtype=np.float64)
    if tau < 1:
        raise StatsError("tau must be >= 1")
    if len(prices) <= tau:
        raise StatsError("series shorter than the return lag")
    if np.any(prices <= 0):
        raise StatsError("prices must be positive")
    logs = np.log(prices)
    return logs[tau:] - logs[:-tau]


def acf(x, max_lag: int) -> np.ndarray:
    """Autocorrelations rho(0..max_lag), normalized by the full-series
    variance so rho(0) = 1."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n <= max_lag:
        raise StatsError("series must be longer than max_lag")
    y = x - x.mean()
    denom = np.dot(y, y)
    if denom == 0.0:
        raise StatsError("zero variance")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = np.dot(y[:-k], y[k:]) / denom
    return out


def moments(x):
    """(mean, variance, skewness, kurtosis_raw, kurtosis_excess), using
    population central moments."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) < 4:
        raise StatsError("need at least 4 observations")
    mean = x.mean()
    d = x - mean
    m2 = np.mean(d * d)
    if m2 == 0.0:
        raise StatsError("zero variance")
    m3 = np.mean(d ** 3)
    m4 = np.mean(d ** 4)
    skew = m3 / m2 ** 1.5
    kurt = m4 / (m2 * m2)
    return mean, m2, skew, kurt, kurt - 3.0


def volatility_series(returns, n_window: int = 30) -> np.ndarray:
    """Sliding mean of |r| over n_window steps; length is L - n_window + 1."""
    r = np.abs(np.asarray(returns, dtype=np.float64))
    n = n_window
    if n < 1:
        raise StatsError("n_window must be >= 1")
    if len(r) < n:
        raise StatsError("fewer returns than the window length")
    c = np.concatenate(([0.0], np.cumsum(r)))
    return (c[n:] - c[:-n]) / n


def ccdf(samples):
    """Empirical P(X > v) at each distinct sample value (ascending)."""
    x = np.asarray(samples, dtype=np.float64)
    if len(x) == 0:
        raise StatsError("empty sample")
    values, counts = np.unique(x, return_counts=True)
    tail = len(x) - np.cumsum(counts)
    return values, tail / len(x)


_MAX_XMIN_CANDIDATES = 512


def fit_powerlaw_tail(samples) -> TailFit:
    """Continuous power-law tail fit with the cutoff chosen by KS distance.

    For each candidate x_min among the observed values, the MLE exponent is
    alpha = 1 + n_tail / sum(log(x_i/x_min)); the kept cutoff minimizes the
    KS distance between the fitted and empirical tail CDFs. Candidates are
    thinned to an even quantile grid when the sample has many distinct
    values, which bounds the quadratic scan without moving the optimum
    beyond neighboring candidates.
    """
    x = np.asarray(samples, dtype=np.float64)
    x = x[x > 0]
    if len(x) < 50:
        raise FitFailure("need at least 50 positive samples")
    xs = np.sort(x)
    logs = np.log(xs)
    n = len(xs)
    # suffix sums of logs make every candidate's MLE O(1)
    suffix = np.concatenate((np.cumsum(logs[::-1])[::-1], [0.0]))

    first_idx = np.unique(xs, return_index=True)[1]
    first_idx = first_idx[n - first_idx >= 10]  # keep >= 10 tail points
    if len(first_idx) == 0:
        raise FitFailure("fewer than 10 points above every candidate cutoff")
    if len(first_idx) > _MAX_XMIN_CANDIDATES:
        pick = np.linspace(0, len(first_idx) - 1,
                           _MAX_XMIN_CANDIDATES).astype(int)
        first_idx = first_idx[np.unique(pick)]

    best = None
    for i in first_idx:
        if xs[i] == xs[-1]:
            continue  # tail is a single repeated value
        m = n - i
        log_sum = suffix[i] - m * logs[i]
        if log_sum <= 0.0:
            continue
        alpha = 1.0 + m / log_sum
        t = xs[i:]
        fitted = 1.0 - (t / xs[i]) ** (1.0 - alpha)
        hi = np.arange(1, m + 1) / m
        lo = np.arange(0, m) / m
        d = max(np.max(hi - fitted), np.max(fitted - lo))
        if best is None or d < best[0]:
            best = (d, alpha, xs[i], m)
    if best is None:
        raise FitFailure("degenerate tail: no spread above any cutoff")
    d, alpha, x_min, m = best
    return TailFit(alpha=alpha, kappa=alpha - 1.0, x_min=float(x_min),
                   ks_distance=float(d), n_tail=int(m))


# Cap on the standardized cutoff (log x_min - mu) / sigma of the fitted
# truncated lognormal. The family contains the power law as a boundary limit
# (mu -> -inf with the cutoff pushed infinitely many sigmas out), so without
# a cap the two candidates become indistinguishable and the comparison's
# sign is noise; the cap keeps the lognormal a genuinely curved alternative.
_MAX_STANDARDIZED_CUTOFF = 5.0


def _mean_excess_over_sd(a0):
    """(E[Z] - a0) / sd[Z] for a standard normal truncated to Z >= a0;
    strictly decreasing in a0, -> 1 as a0 -> +inf (exponential limit)."""
    lam = float(norm.pdf(a0) / norm.sf(a0))
    delta = lam * (lam - a0)
    return (lam - a0) / math.sqrt(max(1.0 - delta, 1e-12)), lam, delta


def _truncated_lognormal_loglik(tail, x_min):
    """Per-point log-density of a lognormal fitted to the tail, truncated
    (renormalized) to x >= x_min.

    The fit matches the tail's log-moments under the truncated model: the
    standardized cutoff a0 solves mean-excess/sd = (m - ln x_min)/s by
    bisection (the left side is monotone), then sigma and mu follow in
    closed form. a0 is capped (see _MAX_STANDARDIZED_CUTOFF) because the
    uncapped family degenerates into the power law itself; free likelihood
    optimization is avoided for the same reason.
    """
    lt = np.log(tail)
    m = lt.mean()
    s = lt.std()
    if s == 0.0:
        raise StatsError("degenerate tail: zero variance in the logs")
    a = math.log(x_min)
    target = (m - a) / s
    lo, hi = -8.0, _MAX_STANDARDIZED_CUTOFF
    if target <= _mean_excess_over_sd(hi)[0]:
        a0 = hi
    elif target >= _mean_excess_over_sd(lo)[0]:
        a0 = lo
    else:
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if _mean_excess_over_sd(mid)[0] > target:
                lo = mid
            else:
                hi = mid
        a0 = 0.5 * (lo + hi)
    _, _, delta = _mean_excess_over_sd(a0)
    sigma = s / math.sqrt(max(1.0 - delta, 1e-12))
    mu = a - a0 * sigma
    z = (lt - mu) / sigma
    log_norm = float(norm.logsf(a0))
    return (-0.5 * z * z - math.log(sigma) - lt
            - 0.5 * math.log(2 * math.pi) - log_norm)


def llr_pl_vs_lognormal(samples, x_min: float) -> LLRResult:
    """Vuong-style comparison of power-law vs lognormal fits on the tail.

    R is the mean pointwise log-likelihood difference (positive favors the
    power law); p comes from the normal approximation to the summed
    differences, so a high p means the sign of R is not significant.
    """
    x = np.asarray(samples, dtype=np.float64)
    tail = x[x >= x_min]
    n = len(tail)
    if n < 10:
        raise StatsError("tail needs at least 10 points")
    log_ratio = np.log(tail / x_min)
    log_sum = np.sum(log_ratio)
    if log_sum <= 0.0:
        raise StatsError("degenerate tail: all points equal the cutoff")
    alpha = 1.0 + n / log_sum
    ll_pl = math.log(alpha - 1.0) - math.log(x_min) - alpha * log_ratio
    ll_ln = _truncated_lognormal_loglik(tail, x_min)
    ell = ll_pl - ll_ln
    total = float(np.sum(ell))
    sd = float(np.std(ell))
    if sd == 0.0:
        return LLRResult(R=total / n, p=1.0 if total == 0.0 else 0.0)
    p = float(erfc(abs(total) / (sd * math.sqrt(2.0 * n))))
    return LLRResult(R=total / n, p=p)


def lognormal_ks(volatilities) -> KSResult:
    """KS test of the sample against its own MLE lognormal fit.

    The p-value uses the asymptotic Kolmogorov distribution at
    (sqrt(n) + 0.12 + 0.11/sqrt(n)) * D. Because the parameters are fitted
    from the same data it is anti-conservative (biased high).
    """
    v = np.asarray(volatilities, dtype=np.float64)
    if np.any(v <= 0):
        raise StatsError("volatilities must be positive")
    n = len(v)
    if n < 20:
        raise StatsError("need at least 20 observations")
    logs = np.log(v)
    mu = logs.mean()
    sd = logs.std()
    if sd == 0.0:
        raise StatsError("zero variance in the logs")
    z = np.sort((logs - mu) / sd)
    fitted = ndtr(z)
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    d = max(np.max(hi - fitted), np.max(fitted - lo))
    p = float(kolmogorov((math.sqrt(n) + 0.12 + 0.11 / math.sqrt(n)) * d))
    return KSResult(statistic=float(d), p_value=p, log_mean=float(mu),
                    log_sd=float(sd))


def _tail_section(values) -> dict:
    try:
        fit = fit_powerlaw_tail(values)
    except StatsError as e:
        return {"error": str(e)}
    section = {"alpha": fit.alpha, "kappa": fit.kappa, "x_min": fit.x_min}
    try:
        llr = llr_pl_vs_lognormal(values, fit.x_min)
        section["R"] = llr.R
        section["p"] = llr.p
    except StatsError as e:
        section["R"] = None
        section["p"] = None
        section["error"] = str(e)
    return section


def full_report(prices, tau: int = 1, n_window: int = 30,
                max_lag: int = 200) -> dict:
    """Assemble the per-run statistics report.

    Sections that cannot be computed (degenerate series, empty tails) carry
    an "error" entry instead; the moments block is omitted entirely when the
    returns have no variance. The volatility KS uses non-overlapping windows
    so the test sees serially independent points.
    """
    r = log_returns(prices, tau)
    report: dict = {"tau": tau, "n_window": n_window}
    try:
        report["acf"] = acf(r, min(max_lag, len(r) - 1)).tolist()
        report["abs_acf"] = acf(np.abs(r), min(max_lag, len(r) - 1)).tolist()
    except StatsError as e:
        report["acf"] = {"error": str(e)}
        report["abs_acf"] = {"error": str(e)}
    try:
        _, _, skew, kurt, excess = moments(r)
        report["skewness"] = skew
        report["kurtosis_raw"] = kurt
        report["kurtosis_excess"] = excess
    except StatsError:
        pass  # degenerate returns: omit the moments block
    report["tail_neg"] = _tail_section(-r[r < 0])
    report["tail_pos"] = _tail_section(r[r > 0])
    try:
        vols = volatility_series(r, n_window)[::n_window]
        ks = lognormal_ks(vols)
        report["vol_ks"] = {
            "D": ks.statistic, "p": ks.p_value,
            "mu": ks.log_mean, "sigma": ks.log_sd,
            "note": "p is anti-conservative: parameters fitted from the data",
        }
    except StatsError as e:
        report["vol_ks"] = {"error": str(e)}
    return report
