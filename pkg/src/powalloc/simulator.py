"""Discrete-event two-chain mining simulator.

Blocks arrive as exponential races between the chains, with rates set by each
chain's current difficulty and the hash the miner population points at it.
Greedy miners exploit arbitrage after every block; loyal and fixed miners
never move. Per-block difficulty adjustment is modeled as the idealized full
adjustment (difficulty snaps to block_time * applied hash rate, as if the
adjustment algorithm observed the hash rate exactly); windowed adjustment
uses the measured mean of the last n inter-arrivals, like real protocols.

A single simulation run is strictly single-threaded because event ordering is
semantic; independent seeds can run concurrently.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace
import numpy as np

from .core import Allocation, ChainParams, format_number
from .equilibrium import equilibrium_allocation, relative_reward
from .market import find_arbitrage, payoff_vector


@dataclass(frozen=True)
class PerBlock:
    """Full adjustment after every block, to the hash rate actually applied."""


@dataclass(frozen=True)
class Window:
    """Adjust once every n_blocks using the mean of their inter-arrivals."""

    n_blocks: int

    def __post_init__(self):
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")


DaaKind = PerBlock | Window


def daa_adjust(security: float, mean_block_time: float, target_time: float,
               kind: DaaKind, clamp: float | None = 4.0) -> float:
    """One difficulty adjustment step: scale by target / observed mean.

    The per-step move is clamped to [security/clamp, security*clamp] unless
    clamp is None. Firing cadence (every block vs. every n blocks) is the
    event loop's job; the formula is the same for both kinds.
    """
    if not (security > 0 and mean_block_time > 0 and target_time > 0):
        raise ValueError("inputs must be > 0")
    if not isinstance(kind, (PerBlock, Window)):
        raise TypeError(f"unknown DAA kind: {kind!r}")
    adjusted = security * target_time / mean_block_time
    if clamp is not None:
        adjusted = min(max(adjusted, security / clamp), security * clamp)
    return adjusted


@dataclass(frozen=True)
class GreedyArbitrage:
    """Re-evaluates on every block and shifts hash toward equilibrium."""

    step_cap: float = 0.05
    initial_w_a: float = 0.5


@dataclass(frozen=True)
class Loyal:
    """All hash permanently on one chain."""

    chain: str  # "A" or "B"

    def __post_init__(self):
        if self.chain not in ("A", "B"):
            raise ValueError("chain must be 'A' or 'B'")


@dataclass(frozen=True)
class Fixed:
    """Hash split held constant for the whole run."""

    w_a: float

    def __post_init__(self):
        if not 0.0 <= self.w_a <= 1.0:
            raise ValueError("w_a must be in [0, 1]")


Strategy = GreedyArbitrage | Loyal | Fixed


@dataclass(frozen=True)
class MinerAgent:
    miner_id: str
    hash_rate: float
    strategy: Strategy

    def __post_init__(self):
        if not self.hash_rate > 0:
            raise ValueError("hash_rate must be > 0")

    def initial_w_a(self) -> float:
        if isinstance(self.strategy, GreedyArbitrage):
            return self.strategy.initial_w_a
        if isinstance(self.strategy, Loyal):
            return 1.0 if self.strategy.chain == "A" else 0.0
        return self.strategy.w_a


@dataclass(frozen=True)
class ConstantPrices:
    price_a: float
    price_b: float


@dataclass(frozen=True)
class ScriptedPrices:
    """Step-function prices: each row applies from its time onward."""

    times: tuple[float, ...]
    prices_a: tuple[float, ...]
    prices_b: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.times) == len(self.prices_a) == len(self.prices_b)):
            raise ValueError("times and prices must have equal lengths")
        if len(self.times) == 0 or self.times[0] != 0.0:
            raise ValueError("script must start at time 0")


@dataclass(frozen=True)
class RandomWalkPrices:
    """Geometric random walk, stepped at every block event."""

    price_a: float
    price_b: float
    drift_a: float = 0.0
    drift_b: float = 0.0
    volatility_a: float = 0.0  # per sqrt(second)
    volatility_b: float = 0.0


PricePath = ConstantPrices | ScriptedPrices | RandomWalkPrices


@dataclass(frozen=True)
class SimChain:
    params: ChainParams
    initial_difficulty: float
    daa: DaaKind = PerBlock()
    daa_clamp: float | None = 4.0

    def __post_init__(self):
        if not self.initial_difficulty > 0:
            raise ValueError("initial_difficulty must be > 0")


@dataclass(frozen=True)
class SimConfig:
    chain_a: SimChain
    chain_b: SimChain
    miners: tuple[MinerAgent, ...]
    price_path: PricePath
    horizon_blocks: int  # total across both chains
    sample_interval: float

    def __post_init__(self):
        if len(self.miners) == 0:
            raise ValueError("need at least one miner")
        if self.horizon_blocks < 1:
            raise ValueError("horizon_blocks must be >= 1")
        if not self.sample_interval > 0:
            raise ValueError("sample_interval must be > 0")


@dataclass
class SimTrace:
    """Sampled run history, one row per sample instant."""

    times: np.ndarray
    difficulty_a: np.ndarray
    difficulty_b: np.ndarray
    w_actual_a: np.ndarray
    w_eq_a: np.ndarray
    price_a: np.ndarray
    price_b: np.ndarray
    block_log_a: list[tuple[float, float, str]] = field(default_factory=list)
    block_log_b: list[tuple[float, float, str]] = field(default_factory=list)

    COLUMNS = ("sim_time", "D_A", "D_B", "w_actual_A", "w_eq_A", "P_A", "P_B")

    def __len__(self) -> int:
        return len(self.times)

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.COLUMNS)
            for i in range(len(self.times)):
                writer.writerow([format_number(v) for v in (
                    self.times[i], self.difficulty_a[i], self.difficulty_b[i],
                    self.w_actual_a[i], self.w_eq_a[i],
                    self.price_a[i], self.price_b[i])])

    @classmethod
    def from_csv(cls, path: str) -> "SimTrace":
        cols: dict[str, list[float]] = {c: [] for c in cls.COLUMNS}
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                for c in cls.COLUMNS:
                    cols[c].append(float(row[c]))
        return cls(times=np.array(cols["sim_time"]),
                   difficulty_a=np.array(cols["D_A"]),
                   difficulty_b=np.array(cols["D_B"]),
                   w_actual_a=np.array(cols["w_actual_A"]),
                   w_eq_a=np.array(cols["w_eq_A"]),
                   price_a=np.array(cols["P_A"]),
                   price_b=np.array(cols["P_B"]))


class _Prices:
    """Evaluates the configured price path at event times."""

    def __init__(self, path: PricePath, rng: np.random.Generator):
        self.path = path
        self.rng = rng
        self.time = 0.0
        if isinstance(path, (ConstantPrices, RandomWalkPrices)):
            self.price_a = path.price_a
            self.price_b = path.price_b
        else:
            self.price_a = path.prices_a[0]
            self.price_b = path.prices_b[0]

    def advance(self, new_time: float) -> None:
        path = self.path
        if isinstance(path, ScriptedPrices):
            idx = int(np.searchsorted(np.asarray(path.times), new_time, side="right") - 1)
            self.price_a = path.prices_a[idx]
            self.price_b = path.prices_b[idx]
        elif isinstance(path, RandomWalkPrices):
            dt = new_time - self.time
            if dt > 0:
                # Two draws per step, always consumed, to keep the RNG stream
                # layout independent of volatility settings.
                z_a, z_b = self.rng.standard_normal(2)
                self.price_a *= float(np.exp(
                    (path.drift_a - 0.5 * path.volatility_a**2) * dt
                    + path.volatility_a * np.sqrt(dt) * z_a))
                self.price_b *= float(np.exp(
                    (path.drift_b - 0.5 * path.volatility_b**2) * dt
                    + path.volatility_b * np.sqrt(dt) * z_b))
        self.time = new_time


def _equilibrium_w_a(config: SimConfig, prices: _Prices) -> float:
    share = relative_reward(
        config.chain_a.params.coins_per_block * prices.price_a,
        config.chain_b.params.coins_per_block * prices.price_b)
    return equilibrium_allocation(config.chain_a.params.target_block_time,
                                  config.chain_b.params.target_block_time,
                                  share).w_a


def run_simulation(config: SimConfig, seed: int) -> SimTrace:
    """Run one seeded simulation; identical inputs give identical traces."""
    rng = np.random.default_rng(seed)
    prices = _Prices(config.price_path, rng)

    miners = list(config.miners)
    w_miner = np.array([m.initial_w_a() for m in miners])
    hash_rates = np.array([m.hash_rate for m in miners])
    total_hash = float(hash_rates.sum())

    difficulty = {"A": config.chain_a.initial_difficulty,
                  "B": config.chain_b.initial_difficulty}
    chain_cfg = {"A": config.chain_a, "B": config.chain_b}
    height = {"A": 0, "B": 0}
    last_block_at = {"A": 0.0, "B": 0.0}
    window_times: dict[str, list[float]] = {"A": [], "B": []}
    block_log: dict[str, list[tuple[float, float, str]]] = {"A": [], "B": []}

    sim_time = 0.0
    blocks_total = 0
    next_sample = 0.0
    rows: list[tuple[float, ...]] = []
    stall_warned = {"A": False, "B": False}

    def aggregate_hash() -> tuple[float, float]:
        on_a = float(np.dot(hash_rates, w_miner))
        return on_a, total_hash - on_a

    def record_samples(until: float) -> None:
        nonlocal next_sample
        hash_a, hash_b = aggregate_hash()
        w_a = hash_a / total_hash
        w_eq = _equilibrium_w_a(config, prices)
        while next_sample <= until:
            rows.append((next_sample, difficulty["A"], difficulty["B"],
                         w_a, w_eq, prices.price_a, prices.price_b))
            next_sample += config.sample_interval

    def greedy_rebalance() -> None:
        for i, miner in enumerate(miners):
            if not isinstance(miner.strategy, GreedyArbitrage):
                continue
            hash_a, hash_b = aggregate_hash()
            if hash_a <= 0 or hash_b <= 0:
                continue  # boundary aggregate: no interior rebalancing defined
            w_agg = Allocation(hash_a / total_hash, hash_b / total_hash)
            value_a = config.chain_a.params.coins_per_block * prices.price_a
            value_b = config.chain_b.params.coins_per_block * prices.price_b
            payoff = payoff_vector(value_a, value_b,
                                   config.chain_a.params.target_block_time,
                                   config.chain_b.params.target_block_time)
            move = find_arbitrage(w_agg, payoff,
                                  config.chain_a.params.target_block_time,
                                  config.chain_b.params.target_block_time,
                                  miner.strategy.step_cap)
            if move is None:
                continue
            shift = move.dw[0] * total_hash  # hashes to move onto chain A
            if shift > 0:
                shift = min(shift, miner.hash_rate * (1.0 - w_miner[i]))
            else:
                shift = -min(-shift, miner.hash_rate * w_miner[i])
            # Clamp away division round-off so allocations stay in [0, 1].
            w_miner[i] = min(max(w_miner[i] + shift / miner.hash_rate, 0.0), 1.0)

    def exponential_wait(mean: float) -> float:
        # Inverse CDF on the seeded generator keeps the trace reproducible
        # under a documented scheme rather than the generator's internals.
        return -mean * math.log1p(-rng.random())

    while blocks_total < config.horizon_blocks:
        hash_a, hash_b = aggregate_hash()
        rates = {"A": hash_a, "B": hash_b}
        candidates = {}
        for chain in ("A", "B"):
            if rates[chain] > 0:
                mean_wait = difficulty[chain] / rates[chain]
                candidates[chain] = sim_time + exponential_wait(mean_wait)
            elif not stall_warned[chain]:
                warnings.warn(f"chain {chain} has zero hash rate and stalls")
                stall_warned[chain] = True
        if not candidates:
            warnings.warn("both chains stalled; ending run early")
            break
        chain = min(candidates, key=lambda c: (candidates[c], c))
        event_time = candidates[chain]

        record_samples(min(event_time, np.inf))
        prices.advance(event_time)
        sim_time = event_time

        interarrival = sim_time - last_block_at[chain]
        last_block_at[chain] = sim_time
        height[chain] += 1
        blocks_total += 1

        # Winner attribution, proportional to hash pointed at this chain.
        weights = hash_rates * (w_miner if chain == "A" else (1.0 - w_miner))
        winner = miners[int(rng.choice(len(miners), p=weights / weights.sum()))]
        block_log[chain].append((sim_time, interarrival, winner.miner_id))

        cfg = chain_cfg[chain]
        if isinstance(cfg.daa, PerBlock):
            # Idealized full adjustment: pass the expected block time at the
            # hash rate actually applied, so S lands on T * H exactly.
            expected_time = difficulty[chain] / rates[chain]
            difficulty[chain] = daa_adjust(difficulty[chain], expected_time,
                                           cfg.params.target_block_time,
                                           cfg.daa, cfg.daa_clamp)
        else:
            window_times[chain].append(interarrival)
            if len(window_times[chain]) >= cfg.daa.n_blocks:
                mean_time = sum(window_times[chain]) / len(window_times[chain])
                difficulty[chain] = daa_adjust(difficulty[chain], mean_time,
                                               cfg.params.target_block_time,
                                               cfg.daa, cfg.daa_clamp)
                window_times[chain].clear()

        greedy_rebalance()

    columns = list(zip(*rows)) if rows else [[] for _ in range(7)]
    return SimTrace(times=np.array(columns[0]),
                    difficulty_a=np.array(columns[1]),
                    difficulty_b=np.array(columns[2]),
                    w_actual_a=np.array(columns[3]),
                    w_eq_a=np.array(columns[4]),
                    price_a=np.array(columns[5]),
                    price_b=np.array(columns[6]),
                    block_log_a=block_log["A"],
                    block_log_b=block_log["B"])


@dataclass(frozen=True)
class LoyalOffsetReport:
    """Outcome of a paired run with and without loyal bias."""

    biased_mean_w_a: float
    baseline_mean_w_a: float
    delta: float
    loyal_bias: float
    absorbable: bool


def tail_mean(values: np.ndarray, fraction: float = 0.5) -> float:
    start = int(len(values) * (1.0 - fraction))
    return float(np.mean(values[start:]))


def loyal_offset_experiment(config: SimConfig, seed: int) -> LoyalOffsetReport:
    """Measure whether loyal hash moves the aggregate allocation.

    Runs the configuration as given, then again with every loyal miner
    replaced by a greedy one of identical hash rate, and compares tail-average
    allocations. When greedy capacity can absorb the loyal bias the difference
    should be ~0.
    """
    loyal = [m for m in config.miners if isinstance(m.strategy, Loyal)]
    greedy = [m for m in config.miners if isinstance(m.strategy, GreedyArbitrage)]
    if not loyal:
        raise ValueError("config has no loyal miners to offset")

    baseline_miners = tuple(
        replace(m, strategy=GreedyArbitrage(initial_w_a=0.5))
        if isinstance(m.strategy, Loyal) else m
        for m in config.miners)
    biased_trace = run_simulation(config, seed)
    baseline_trace = run_simulation(replace(config, miners=baseline_miners), seed)

    biased_mean = tail_mean(biased_trace.w_actual_a)
    baseline_mean = tail_mean(baseline_trace.w_actual_a)

    total_hash = sum(m.hash_rate for m in config.miners)
    greedy_hash = sum(m.hash_rate for m in greedy)
    w_eq = float(biased_trace.w_eq_a[-1])
    non_greedy_on_a = sum(
        m.hash_rate * m.initial_w_a() for m in config.miners
        if not isinstance(m.strategy, GreedyArbitrage))
    loyal_bias = sum(
        m.hash_rate * (m.initial_w_a() - w_eq) for m in loyal) / total_hash
    if greedy_hash > 0:
        needed = (w_eq * total_hash - non_greedy_on_a) / greedy_hash
        absorbable = 0.0 <= needed <= 1.0
    else:
        absorbable = False

    return LoyalOffsetReport(biased_mean_w_a=biased_mean,
                             baseline_mean_w_a=baseline_mean,
                             delta=biased_mean - baseline_mean,
                             loyal_bias=loyal_bias,
                             absorbable=absorbable)


def config_to_json(config: SimConfig, seed: int | None = None) -> str:
    """Serialize a config (plus seed) for reproducibility echoes."""

    def strategy_dict(s: Strategy) -> dict:
        if isinstance(s, GreedyArbitrage):
            return {"kind": "greedy", "step_cap": s.step_cap,
                    "initial_w_a": s.initial_w_a}
        if isinstance(s, Loyal):
            return {"kind": "loyal", "chain": s.chain}
        return {"kind": "fixed", "w_a": s.w_a}

    def daa_dict(d: DaaKind) -> dict:
        if isinstance(d, PerBlock):
            return {"kind": "per-block"}
        return {"kind": "window", "n_blocks": d.n_blocks}

    def chain_dict(c: SimChain) -> dict:
        return {"chain_id": c.params.chain_id,
                "target_block_time": c.params.target_block_time,
                "coins_per_block": c.params.coins_per_block,
                "pow_algorithm": c.params.pow_algorithm,
                "initial_difficulty": c.initial_difficulty,
                "daa": daa_dict(c.daa),
                "daa_clamp": c.daa_clamp}

    def price_dict(p: PricePath) -> dict:
        if isinstance(p, ConstantPrices):
            return {"kind": "constant", "price_a": p.price_a, "price_b": p.price_b}
        if isinstance(p, ScriptedPrices):
            return {"kind": "scripted", "times": list(p.times),
                    "prices_a": list(p.prices_a), "prices_b": list(p.prices_b)}
        return {"kind": "random-walk", "price_a": p.price_a, "price_b": p.price_b,
                "drift_a": p.drift_a, "drift_b": p.drift_b,
                "volatility_a": p.volatility_a, "volatility_b": p.volatility_b}

    doc = {
        "chain_a": chain_dict(config.chain_a),
        "chain_b": chain_dict(config.chain_b),
        "miners": [{"miner_id": m.miner_id, "hash_rate": m.hash_rate,
                    "strategy": strategy_dict(m.strategy)} for m in config.miners],
        "price_path": price_dict(config.price_path),
        "horizon_blocks": config.horizon_blocks,
        "sample_interval": config.sample_interval,
    }
    if seed is not None:
        doc["seed"] = seed
    return json.dumps(doc, indent=2, sort_keys=True)


def config_from_json(text: str) -> tuple[SimConfig, int | None]:
    """Parse a config document produced by config_to_json (or handwritten)."""
    doc = json.loads(text)

    def parse_strategy(d: dict) -> Strategy:
        kind = d.get("kind")
        if kind == "greedy":
            return GreedyArbitrage(step_cap=float(d.get("step_cap", 0.05)),
                                   initial_w_a=float(d.get("initial_w_a", 0.5)))
        if kind == "loyal":
            return Loyal(chain=d["chain"])
        if kind == "fixed":
            return Fixed(w_a=float(d["w_a"]))
        raise ValueError(f"unknown strategy kind: {kind!r}")

    def parse_daa(d: dict) -> DaaKind:
        kind = d.get("kind")
        if kind == "per-block":
            return PerBlock()
        if kind == "window":
            return Window(int(d["n_blocks"]))
        raise ValueError(f"unknown DAA kind: {kind!r}")

    def parse_chain(d: dict) -> SimChain:
        clamp = d.get("daa_clamp", 4.0)
        return SimChain(
            params=ChainParams(chain_id=d["chain_id"],
                               target_block_time=float(d["target_block_time"]),
                               coins_per_block=float(d["coins_per_block"]),
                               pow_algorithm=d.get("pow_algorithm", "sha256")),
            initial_difficulty=float(d["initial_difficulty"]),
            daa=parse_daa(d.get("daa", {"kind": "per-block"})),
            daa_clamp=None if clamp is None else float(clamp))

    def parse_prices(d: dict) -> PricePath:
        kind = d.get("kind")
        if kind == "constant":
            return ConstantPrices(float(d["price_a"]), float(d["price_b"]))
        if kind == "scripted":
            return ScriptedPrices(tuple(float(t) for t in d["times"]),
                                  tuple(float(p) for p in d["prices_a"]),
                                  tuple(float(p) for p in d["prices_b"]))
        if kind == "random-walk":
            return RandomWalkPrices(
                float(d["price_a"]), float(d["price_b"]),
                drift_a=float(d.get("drift_a", 0.0)),
                drift_b=float(d.get("drift_b", 0.0)),
                volatility_a=float(d.get("volatility_a", 0.0)),
                volatility_b=float(d.get("volatility_b", 0.0)))
        raise ValueError(f"unknown price path kind: {kind!r}")

    config = SimConfig(
        chain_a=parse_chain(doc["chain_a"]),
        chain_b=parse_chain(doc["chain_b"]),
        miners=tuple(MinerAgent(miner_id=m["miner_id"],
                                hash_rate=float(m["hash_rate"]),
                                strategy=parse_strategy(m["strategy"]))
                     for m in doc["miners"]),
        price_path=parse_prices(doc["price_path"]),
        horizon_blocks=int(doc["horizon_blocks"]),
        sample_interval=float(doc["sample_interval"]))
    seed = doc.get("seed")
    return config, (None if seed is None else int(seed))
