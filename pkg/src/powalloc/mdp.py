"""Markov decision process for hash allocation between two chains.

States are difficulty pairs (optionally tagged with block-arrival bits),
actions are splits of a fixed total hash rate, and one transition covers one
second of mining. On a successful block the chain's difficulty jumps to the
grid point nearest block_time * (hash rate applied), the idealized full
adjustment. Solving the MDP by value iteration and reading off where staying
put is optimal reproduces the proportional-allocation concentration point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.integrate import quad

INTEGRAL_ABS_TOL = 1e-10


@dataclass(frozen=True)
class MdpState:
    """Difficulty pair plus per-chain block-arrival indicator bits."""

    difficulty_a: float
    difficulty_b: float
    bit_a: int = 0
    bit_b: int = 0

    def __post_init__(self):
        if self.bit_a not in (0, 1) or self.bit_b not in (0, 1):
            raise ValueError("bits must be 0 or 1")
        if not (self.difficulty_a > 0 and self.difficulty_b > 0):
            raise ValueError("difficulties must be > 0")


@dataclass(frozen=True)
class MdpConfig:
    total_hash_rate: float
    block_time: float
    reward_a: float
    reward_b: float
    difficulty_grid: tuple[float, ...]
    action_grid: tuple[float, ...]
    discount: float = 0.97
    max_extra_blocks: int = 10
    # None: extra blocks arrive at the same rate as the first (hash_rate/D).
    # A number: they arrive at this fixed rate instead (e.g. 1/block_time for
    # a perfectly re-adjusted chain).
    tail_rate: float | None = None
    include_bits: bool = False

    def __post_init__(self):
        if not self.difficulty_grid or not self.action_grid:
            raise ValueError("grids must be non-empty")
        if any(d <= 0 for d in self.difficulty_grid):
            raise ValueError("difficulty grid must be positive")
        if any(a < 0 or a > self.total_hash_rate for a in self.action_grid):
            raise ValueError("actions must lie in [0, total_hash_rate]")
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must be in (0, 1)")
        if list(self.difficulty_grid) != sorted(self.difficulty_grid):
            raise ValueError("difficulty grid must be sorted ascending")

    @classmethod
    def motivating(cls, **overrides) -> "MdpConfig":
        """Two same-cadence chains, total 6 hash/s, 2:1 reward values."""
        defaults = dict(
            total_hash_rate=6.0,
            block_time=2.0,
            reward_a=2.0,
            reward_b=1.0,
            difficulty_grid=tuple(float(d) for d in range(1, 13)),
            action_grid=tuple(float(a) for a in range(0, 7)),
        )
        defaults.update(overrides)
        return cls(**defaults)


@dataclass
class Policy:
    """Greedy policy and value function keyed by difficulty pair."""

    actions: dict[tuple[float, float], float]
    values: dict[tuple[float, float], float]
    bellman_residual: float
    iterations: int


def block_probability(difficulty: float, hash_rate: float) -> float:
    """Probability of mining at least one block within one second.

    Inter-arrival is exponential with mean difficulty / hash_rate seconds.
    """
    if not difficulty > 0:
        raise ValueError("difficulty must be > 0")
    if hash_rate < 0:
        raise ValueError("hash_rate must be >= 0")
    if hash_rate == 0:
        return 0.0
    return -math.expm1(-hash_rate / difficulty)


def _poisson_weighted_count(mean: float, max_extra: int) -> float:
    """sum_{i=0}^{max_extra} i * Poisson(mean).pmf(i), computed directly."""
    if mean <= 0:
        return 0.0
    total = 0.0
    log_mean = math.log(mean)
    for i in range(1, max_extra + 1):
        log_pmf = -mean + i * log_mean - math.lgamma(i + 1)
        total += i * math.exp(log_pmf)
    return total


def block_count(difficulty: float, hash_rate: float, max_extra: int = 10,
                tail_rate: float | None = None) -> float:
    """Expected blocks mined in one second, given at least one is mined.

    The first block arrives at an exponential time t; additional blocks over
    the remaining 1 - t seconds follow a Poisson count truncated at
    ``max_extra``. ``tail_rate`` overrides the arrival rate of those extra
    blocks (default: same rate as the first block).
    """
    if not difficulty > 0:
        raise ValueError("difficulty must be > 0")
    if not hash_rate > 0:
        raise ValueError("hash_rate must be > 0")
    rate = hash_rate / difficulty
    extra_rate = rate if tail_rate is None else tail_rate

    def integrand(t: float) -> float:
        first = rate * math.exp(-rate * t)
        return first * _poisson_weighted_count((1.0 - t) * extra_rate, max_extra)

    numerator, _ = quad(integrand, 0.0, 1.0, epsabs=INTEGRAL_ABS_TOL, limit=200)
    denominator = block_probability(difficulty, hash_rate)
    return 1.0 + numerator / denominator


def snap_to_grid(value: float, grid: Iterable[float]) -> float:
    """Nearest grid point; ties break toward the smaller point."""
    grid_arr = np.asarray(tuple(grid))
    return float(grid_arr[int(np.argmin(np.abs(grid_arr - value)))])


@dataclass
class MdpModel:
    """Dense transition model: 4 weighted successors per (state, action)."""

    config: MdpConfig
    states: list[MdpState]
    rewards: np.ndarray  # (n_states, n_actions) expected immediate reward
    successor_idx: np.ndarray  # (n_states, n_actions, 4)
    successor_prob: np.ndarray  # (n_states, n_actions, 4)
    state_index: dict[MdpState, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.state_index:
            self.state_index = {s: i for i, s in enumerate(self.states)}


def build_mdp(config: MdpConfig) -> MdpModel:
    """Enumerate transitions for every (difficulty pair, action).

    The four cases per action are both / only A / only B / neither chain
    succeeding within the second; their probabilities always partition 1.
    """
    grid = config.difficulty_grid
    bits = [(0, 0), (0, 1), (1, 0), (1, 1)] if config.include_bits else [(0, 0)]
    states = [MdpState(da, db, ba, bb)
              for da in grid for db in grid for ba, bb in bits]
    index = {s: i for i, s in enumerate(states)}
    n_states, n_actions = len(states), len(config.action_grid)

    rewards = np.zeros((n_states, n_actions))
    succ_idx = np.zeros((n_states, n_actions, 4), dtype=np.int64)
    succ_prob = np.zeros((n_states, n_actions, 4))

    # Per-action quantities shared by all states with the same difficulty.
    prob_cache: dict[tuple[float, float], float] = {}
    count_cache: dict[tuple[float, float], float] = {}

    def probability(difficulty: float, applied: float) -> float:
        key = (difficulty, applied)
        if key not in prob_cache:
            prob_cache[key] = block_probability(difficulty, applied)
        return prob_cache[key]

    def expected_count(difficulty: float, applied: float) -> float:
        key = (difficulty, applied)
        if key not in count_cache:
            count_cache[key] = block_count(difficulty, applied,
                                           config.max_extra_blocks,
                                           config.tail_rate)
        return count_cache[key]

    t = config.block_time
    for si, state in enumerate(states):
        for ai, action in enumerate(config.action_grid):
            applied_a = action
            applied_b = config.total_hash_rate - action
            p_a = probability(state.difficulty_a, applied_a)
            p_b = probability(state.difficulty_b, applied_b)
            next_a = snap_to_grid(t * applied_a, grid) if p_a > 0 else state.difficulty_a
            next_b = snap_to_grid(t * applied_b, grid) if p_b > 0 else state.difficulty_b
            count_a = expected_count(state.difficulty_a, applied_a) if p_a > 0 else 0.0
            count_b = expected_count(state.difficulty_b, applied_b) if p_b > 0 else 0.0

            def successor(a_success: bool, b_success: bool) -> int:
                bit_a = state.bit_a
                bit_b = state.bit_b
                if config.include_bits:
                    bit_a = (1 - bit_a) if a_success else bit_a
                    bit_b = (1 - bit_b) if b_success else bit_b
                return index[MdpState(
                    next_a if a_success else state.difficulty_a,
                    next_b if b_success else state.difficulty_b,
                    bit_a, bit_b,
                )]

            cases = [
                (p_a * p_b, True, True,
                 config.reward_a * count_a + config.reward_b * count_b),
                (p_a * (1 - p_b), True, False, config.reward_a * count_a),
                ((1 - p_a) * p_b, False, True, config.reward_b * count_b),
                ((1 - p_a) * (1 - p_b), False, False, 0.0),
            ]
            for ci, (prob, sa, sb, reward) in enumerate(cases):
                succ_idx[si, ai, ci] = successor(sa, sb)
                succ_prob[si, ai, ci] = prob
                rewards[si, ai] += prob * reward

    return MdpModel(config=config, states=states, rewards=rewards,
                    successor_idx=succ_idx, successor_prob=succ_prob,
                    state_index=index)


def solve_value_iteration(model: MdpModel, tol: float = 1e-9,
                          max_iters: int = 200_000) -> Policy:
    """Value iteration with synchronous (Jacobi) sweeps.

    Synchronous updates make the result independent of state ordering, so a
    parallel implementation would be bit-identical. The greedy policy breaks
    ties toward the smallest action.
    """
    gamma = model.config.discount
    values = np.zeros(len(model.states))
    for iteration in range(1, max_iters + 1):
        continuation = (model.successor_prob * values[model.successor_idx]).sum(axis=2)
        q = model.rewards + gamma * continuation
        new_values = q.max(axis=1)
        residual = float(np.max(np.abs(new_values - values)))
        values = new_values
        if residual < tol:
            break
    else:
        raise RuntimeError(f"value iteration did not converge: residual {residual}")

    continuation = (model.successor_prob * values[model.successor_idx]).sum(axis=2)
    q = model.rewards + gamma * continuation
    greedy = np.argmax(q, axis=1)  # argmax returns the first (smallest) action on ties

    actions: dict[tuple[float, float], float] = {}
    values_by_pair: dict[tuple[float, float], float] = {}
    for si, state in enumerate(model.states):
        key = (state.difficulty_a, state.difficulty_b)
        action = float(model.config.action_grid[int(greedy[si])])
        value = float(values[si])
        if key in actions:
            # Bits do not enter rewards or transitions, so every bit
            # configuration must agree.
            if actions[key] != action or abs(values_by_pair[key] - value) > 1e-9:
                raise RuntimeError(f"bit configurations disagree at {key}")
        actions[key] = action
        values_by_pair[key] = value
    return Policy(actions=actions, values=values_by_pair,
                  bellman_residual=residual, iterations=iteration)


def concentration_point(policy: Policy, config: MdpConfig) -> tuple[float, float]:
    """The unique state whose optimal action reproduces its own difficulties."""
    t = config.block_time
    stationary = []
    for (d_a, d_b), action in sorted(policy.actions.items()):
        next_a = snap_to_grid(t * action, config.difficulty_grid)
        next_b = snap_to_grid(t * (config.total_hash_rate - action),
                              config.difficulty_grid)
        if next_a == d_a and next_b == d_b:
            stationary.append((d_a, d_b))
    if len(stationary) != 1:
        raise ValueError(
            f"expected exactly one stationary state, found {len(stationary)}: "
            f"{stationary}")
    return stationary[0]
