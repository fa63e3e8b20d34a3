"""Two-chain proof-of-work security allocation toolkit."""

from .core import (
    Allocation,
    ChainParams,
    MarketSnapshot,
    TimeSeries,
    allocation_distance,
    allocation_from_security,
    ewma,
    resample_locf,
)
from .equilibrium import (
    ChainObservations,
    FitMetrics,
    actual_allocation_series,
    equilibrium_allocation,
    equilibrium_series,
    estimate_hash_rate,
    fit_metrics,
    infer_security,
    oracle_price_ratio,
    relative_reward,
)
from .market import (
    MarketState,
    Rebalancing,
    best_response,
    find_arbitrage,
    game_payoff,
    payoff_vector,
    portfolio_price_at_rest,
    rebalancing_claims,
    rebalancing_payoff,
    rebalancing_price,
)

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "ChainObservations",
    "ChainParams",
    "FitMetrics",
    "MarketSnapshot",
    "MarketState",
    "Rebalancing",
    "TimeSeries",
    "actual_allocation_series",
    "allocation_distance",
    "allocation_from_security",
    "best_response",
    "equilibrium_allocation",
    "equilibrium_series",
    "estimate_hash_rate",
    "ewma",
    "find_arbitrage",
    "fit_metrics",
    "game_payoff",
    "infer_security",
    "oracle_price_ratio",
    "payoff_vector",
    "portfolio_price_at_rest",
    "rebalancing_claims",
    "rebalancing_payoff",
    "rebalancing_price",
    "relative_reward",
    "resample_locf",
    "__version__",
]
