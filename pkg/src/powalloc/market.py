"""The blockchain security market: payoffs, rebalancing claims, arbitrage.

Miners hold claims on each chain's per-second block reward. The difficulty
adjustment algorithm acts as the price setter, so at rest the price vector is
the endowment spread across the current allocation. A symmetric rebalancing
(epsilon, -epsilon) always has zero price; its payoff is positive exactly when
it moves the allocation toward the unique no-arbitrage point, which makes that
point an attractor.

Market operations price instantaneous payoffs; how payoffs vary over time is
the simulator's concern. Everything here is a pure function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import Allocation, allocation_distance
from .equilibrium import equilibrium_allocation

EQUILIBRIUM_DISTANCE_TOL = 1e-9


@dataclass(frozen=True)
class MarketState:
    """Aggregate market state at one instant.

    ``endowment`` is total fiat/sec devoted to security; ``prices`` is the
    claim price vector set by the adjustment algorithms; ``payoff`` is
    (V_A/T_A, V_B/T_B), the total per-second reward on offer.
    """

    endowment: float
    allocation: Allocation
    prices: tuple[float, float]
    payoff: tuple[float, float]

    def __post_init__(self):
        if not self.endowment > 0:
            raise ValueError("endowment must be > 0")
        if self.prices[0] < 0 or self.prices[1] < 0:
            raise ValueError("prices must be >= 0")


@dataclass(frozen=True)
class Rebalancing:
    """An allocation shift and the claim change that produces it."""

    dw: tuple[float, float]
    dc: tuple[float, float]

    @property
    def symmetric(self) -> bool:
        return self.dw[0] == -self.dw[1]


def payoff_vector(value_a: float, value_b: float,
                  block_time_a: float, block_time_b: float) -> tuple[float, float]:
    """Total available payoff per second on each chain."""
    if not (block_time_a > 0 and block_time_b > 0):
        raise ValueError("block times must be > 0")
    if value_a < 0 or value_b < 0:
        raise ValueError("reward values must be >= 0")
    return (value_a / block_time_a, value_b / block_time_b)


def portfolio_price_at_rest(endowment: float, allocation: Allocation) -> tuple[float, float]:
    """Claim prices once both adjustment algorithms have come to rest."""
    if not endowment > 0:
        raise ValueError("endowment must be > 0")
    return (endowment * allocation.w_a, endowment * allocation.w_b)


def rebalancing_claims(allocation: Allocation, dw: tuple[float, float]) -> tuple[float, float]:
    """Claim change needed to shift the allocation by dw (componentwise dw/w)."""
    if allocation.w_a == 0 or allocation.w_b == 0:
        raise ValueError("boundary allocation: claims undefined at a zero component")
    return (dw[0] / allocation.w_a, dw[1] / allocation.w_b)


def rebalancing_price(dc: tuple[float, float], prices: tuple[float, float]) -> float:
    """Cost of a claim change at the given prices (dot product)."""
    return dc[0] * prices[0] + dc[1] * prices[1]


def rebalancing_payoff(dc: tuple[float, float], payoff: tuple[float, float]) -> float:
    """Per-second payoff change from a claim change (dot product)."""
    return dc[0] * payoff[0] + dc[1] * payoff[1]


def find_arbitrage(allocation: Allocation, payoff: tuple[float, float],
                   block_time_a: float, block_time_b: float,
                   step_cap: float) -> Rebalancing | None:
    """A zero-price, positive-payoff move toward equilibrium, if one exists.

    Returns None when the allocation already sits at the no-arbitrage point
    (within EQUILIBRIUM_DISTANCE_TOL). The step size is capped at both
    ``step_cap`` and the remaining gap, so the returned move never overshoots.
    """
    if allocation.w_a <= 0 or allocation.w_b <= 0:
        raise ValueError("boundary allocation: rebalancing undefined")
    if not step_cap > 0:
        raise ValueError("step_cap must be > 0")
    value_a = payoff[0] * block_time_a
    value_b = payoff[1] * block_time_b
    share = value_a / (value_a + value_b)
    target = equilibrium_allocation(block_time_a, block_time_b, share)
    gap = target.w_a - allocation.w_a
    if allocation_distance(allocation, target) < EQUILIBRIUM_DISTANCE_TOL:
        return None
    epsilon = math.copysign(min(step_cap, abs(gap)), gap)
    dw = (epsilon, -epsilon)
    return Rebalancing(dw=dw, dc=rebalancing_claims(allocation, dw))


def best_response(others_share_a: float, n_miners: int,
                  value_a: float, value_b: float,
                  block_time_a: float, block_time_b: float) -> float:
    """A miner's optimal allocation to chain A given everyone else's.

    ``others_share_a`` is the combined allocation the other n_miners - 1
    homogeneous miners put on chain A (at most (n-1)/n of the total). The
    result is clamped to the miner's own range [0, 1/n].
    """
    if n_miners < 2:
        raise ValueError("need at least 2 miners")
    n = n_miners - 1
    cap = n / n_miners
    if not 0.0 <= others_share_a <= cap:
        raise ValueError(f"others_share_a must be in [0, {cap}]")
    if not (value_a > 0 and value_b > 0 and block_time_a > 0 and block_time_b > 0):
        raise ValueError("values and block times must be > 0")
    root_a = math.sqrt(others_share_a * value_a * block_time_b)
    root_b = math.sqrt((cap - others_share_a) * value_b * block_time_a)
    if root_a + root_b == 0:
        raise ValueError("degenerate best response")
    own = ((1.0 - others_share_a) * root_a - others_share_a * root_b) / (root_a + root_b)
    return min(max(own, 0.0), 1.0 / n_miners)


def game_payoff(own_share_a: float, others_share_a: float, n_miners: int,
                payoff: tuple[float, float]) -> float:
    """Per-second payoff to one miner in the allocation game.

    Reward on each chain is split proportionally to the security each miner
    allocates there; this miner holds total allocation 1/n_miners.
    """
    denom_a = own_share_a + others_share_a
    denom_b = 1.0 - own_share_a - others_share_a
    if denom_a <= 0 or denom_b <= 0:
        raise ValueError("zero denominator: no security allocated to a chain")
    share_b = 1.0 / n_miners - own_share_a
    return payoff[0] * own_share_a / denom_a + payoff[1] * share_b / denom_b
