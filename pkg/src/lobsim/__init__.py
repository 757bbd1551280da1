"""Agent-based limit order book market simulator with a statistics suite."""

from .engine import (
    ConfigError, Diagnostics, LiquidityAborted, SeriesRecord, SimConfig, run,
)
from .stats import (
    FitFailure, KSResult, LLRResult, StatsError, TailFit, acf,
    fit_powerlaw_tail, full_report, llr_pl_vs_lognormal, log_returns,
    lognormal_ks, moments, volatility_series,
)

__all__ = [
    "ConfigError", "Diagnostics", "LiquidityAborted", "SeriesRecord",
    "SimConfig", "run",
    "FitFailure", "KSResult", "LLRResult", "StatsError", "TailFit", "acf",
    "fit_powerlaw_tail", "full_report", "llr_pl_vs_lognormal", "log_returns",
    "lognormal_ks", "moments", "volatility_series",
]

__version__ = "0.1.0"
