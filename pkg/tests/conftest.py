import numpy as np
import pytest

from powalloc.core import ChainParams
from powalloc.simulator import (
    ConstantPrices,
    Fixed,
    GreedyArbitrage,
    MinerAgent,
    SimChain,
    SimConfig,
)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def quick_sim_config(price_a=1.5, price_b=1.0, greedy_hash=50.0, fixed_hash=50.0,
                     fixed_w_a=0.5, horizon_blocks=4000, step_cap=0.02,
                     block_time=600.0, sample_interval=600.0) -> SimConfig:
    """Small two-chain config with one greedy and one fixed miner."""
    total = greedy_hash + fixed_hash
    miners = []
    if greedy_hash > 0:
        miners.append(MinerAgent("greedy", greedy_hash, GreedyArbitrage(step_cap=step_cap)))
    if fixed_hash > 0:
        miners.append(MinerAgent("fixed", fixed_hash, Fixed(fixed_w_a)))
    return SimConfig(
        chain_a=SimChain(ChainParams("A", block_time, 6.25),
                         initial_difficulty=block_time * total / 2),
        chain_b=SimChain(ChainParams("B", block_time, 6.25),
                         initial_difficulty=block_time * total / 2),
        miners=tuple(miners),
        price_path=ConstantPrices(price_a, price_b),
        horizon_blocks=horizon_blocks,
        sample_interval=sample_interval)
