"""Equilibrium allocation math and difficulty-based security inference.

Two parallel pipelines produce comparable allocation series:

* the *actual* allocation, inferred from on-chain difficulty, observed block
  times, and spot hash prices (all smoothed with a long-half-life EWMA), and
* the *equilibrium* allocation, computed from coin prices and block rewards
  alone.

Fit metrics between the two quantify how closely miners track the
no-arbitrage point.

All functions are pure and operate on immutable inputs; concurrent use needs
no coordination.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    Allocation,
    ChainParams,
    SchemaError,
    TimeSeries,
    allocation_from_security,
    common_taus,
    ewma,
    format_number,
)

AllocationSeries = list[tuple[float, Allocation]]


@dataclass(frozen=True)
class ChainObservations:
    """Per-chain on-chain observables used to infer actual security.

    ``difficulty`` is expected hashes per block as recorded by the protocol;
    chains that express difficulty in pool units need
    ``pool_difficulty_scale = 2**32``.
    """

    difficulty: TimeSeries
    block_times: TimeSeries
    fees: TimeSeries
    pool_difficulty_scale: float = 1.0

    def __post_init__(self):
        if self.pool_difficulty_scale not in (1.0, float(2**32)):
            raise ValueError("pool_difficulty_scale must be 1 or 2**32")
        if np.any(self.difficulty.values <= 0):
            raise ValueError("difficulty values must be > 0")
        if np.any(self.block_times.values <= 0):
            raise ValueError("block times must be > 0")


@dataclass(frozen=True)
class FitMetrics:
    """Error metrics between predicted and actual allocation series.

    rmse/mae/me are in allocation units; psnr is in decibels with peak 1.0
    (allocations live in [0, 1]), i.e. psnr = -20 log10(rmse).
    """

    rmse: float
    mae: float
    me: float
    psnr: float


def relative_reward(value_a: float, value_b: float) -> float:
    """Chain A's share of the total fiat block reward."""
    if value_a < 0 or value_b < 0:
        raise ValueError("reward values must be >= 0")
    total = value_a + value_b
    if total <= 0:
        raise ValueError("total reward value must be > 0")
    return value_a / total


def equilibrium_allocation(block_time_a: float, block_time_b: float,
                           reward_share: float) -> Allocation:
    """The unique no-arbitrage allocation for the given reward share.

    With equal block times this reduces exactly to
    (reward_share, 1 - reward_share).
    """
    if not (block_time_a > 0 and block_time_b > 0):
        raise ValueError("block times must be > 0")
    if not 0.0 <= reward_share <= 1.0:
        raise ValueError("reward share must be in [0, 1]")
    if block_time_a == block_time_b:
        return Allocation(reward_share, 1.0 - reward_share)
    # Algebraically T_b*R - T_a*R + T_a; this form has no cancellation.
    denom = block_time_b * reward_share + block_time_a * (1.0 - reward_share)
    w_a = block_time_b * reward_share / denom
    return Allocation(w_a, 1.0 - w_a)


def infer_security(hash_price: float, difficulty: float, block_time: float) -> float:
    """Fiat/sec security implied by difficulty at a given hash price."""
    if not (hash_price > 0 and difficulty > 0 and block_time > 0):
        raise ValueError("inputs must be > 0")
    return hash_price * difficulty / block_time


def _check_aligned(a: TimeSeries, b: TimeSeries, what: str) -> None:
    n = min(len(a), len(b))
    mismatch = np.nonzero(a.taus[:n] != b.taus[:n])[0]
    if len(mismatch) > 0:
        tau = a.taus[mismatch[0]]
        raise ValueError(f"misaligned {what} series: first offending timestamp {tau}")
    if len(a) != len(b):
        tau = (a.taus[n] if len(a) > n else b.taus[n])
        raise ValueError(f"misaligned {what} series: first offending timestamp {tau}")


def estimate_hash_rate(obs: ChainObservations, params: ChainParams,
                       half_life: float) -> TimeSeries:
    """Smoothed hash rate: nominal rate corrected by observed block times.

    The nominal rate scale * D / T is right only when the chain runs at its
    target cadence; dividing by the smoothed observed block time and
    multiplying back by T corrects the within-epoch bias of chains that
    adjust difficulty infrequently.
    """
    if len(obs.difficulty) == 0:
        raise ValueError("empty input")
    _check_aligned(obs.difficulty, obs.block_times, "difficulty/block-time")
    t = params.target_block_time
    nominal = TimeSeries(obs.difficulty.taus,
                         obs.pool_difficulty_scale * obs.difficulty.values / t)
    smoothed_nominal = ewma(nominal, half_life)
    smoothed_block_time = ewma(obs.block_times, half_life)
    return TimeSeries(nominal.taus,
                      smoothed_nominal.values / smoothed_block_time.values * t)


def actual_allocation_series(obs_a: ChainObservations, obs_b: ChainObservations,
                             params_a: ChainParams, params_b: ChainParams,
                             hash_price_a: TimeSeries, hash_price_b: TimeSeries,
                             half_life: float) -> AllocationSeries:
    """Actual allocation over time, inferred from difficulty and hash prices.

    Smoothing runs over each series' full history before the join, so the
    output at a timestamp reflects everything observed up to it.
    """
    rate_a = estimate_hash_rate(obs_a, params_a, half_life)
    rate_b = estimate_hash_rate(obs_b, params_b, half_life)
    sigma_a = ewma(hash_price_a, half_life)
    sigma_b = ewma(hash_price_b, half_life)
    taus = common_taus(rate_a, rate_b, sigma_a, sigma_b)
    s_a = sigma_a.at(taus) * rate_a.at(taus)
    s_b = sigma_b.at(taus) * rate_b.at(taus)
    return [(tau, allocation_from_security(sa, sb))
            for tau, sa, sb in zip(taus.tolist(), s_a.tolist(), s_b.tolist())]


def equilibrium_series(price_a: TimeSeries, price_b: TimeSeries,
                       fees_a: TimeSeries, fees_b: TimeSeries,
                       params_a: ChainParams, params_b: ChainParams,
                       half_life: float) -> AllocationSeries:
    """Equilibrium allocation over time from coin prices and smoothed fees.

    Fees are smoothed because miners cannot redirect resources fast enough to
    capture one-off fee spikes; prices enter unsmoothed.
    """
    smooth_fees_a = ewma(fees_a, half_life)
    smooth_fees_b = ewma(fees_b, half_life)
    taus = common_taus(price_a, price_b, smooth_fees_a, smooth_fees_b)
    value_a = (params_a.coins_per_block + smooth_fees_a.at(taus)) * price_a.at(taus)
    value_b = (params_b.coins_per_block + smooth_fees_b.at(taus)) * price_b.at(taus)
    out: AllocationSeries = []
    for tau, va, vb in zip(taus.tolist(), value_a.tolist(), value_b.tolist()):
        share = relative_reward(va, vb)
        out.append((tau, equilibrium_allocation(params_a.target_block_time,
                                                params_b.target_block_time, share)))
    return out


def fit_metrics(actual: Sequence[tuple[float, Allocation]],
                predicted: Sequence[tuple[float, Allocation]]) -> FitMetrics:
    """RMSE/MAE/ME/PSNR between two allocation series on the A component.

    Errors are signed predicted - actual: positive means the prediction puts
    more allocation on chain A than was observed.
    """
    if len(actual) == 0 or len(predicted) == 0:
        raise ValueError("empty input")
    if len(actual) != len(predicted):
        raise ValueError("mismatched series lengths")
    for (tau_a, _), (tau_p, _) in zip(actual, predicted):
        if tau_a != tau_p:
            raise ValueError(f"mismatched timestamps: {tau_a} vs {tau_p}")
    errors = np.array([p.w_a - a.w_a for (_, a), (_, p) in zip(actual, predicted)])
    rmse = float(np.sqrt(np.mean(errors**2)))
    psnr = math.inf if rmse == 0 else -20.0 * math.log10(rmse)
    return FitMetrics(rmse=rmse,
                      mae=float(np.mean(np.abs(errors))),
                      me=float(np.mean(errors)),
                      psnr=psnr)


def oracle_price_ratio(coins_a: float, coins_b: float,
                       difficulty_a: float, difficulty_b: float,
                       hash_price_ratio: float) -> float:
    """Estimate the coin price ratio P_B / P_A from per-block observables.

    ``hash_price_ratio`` is sigma_B / sigma_A, the fiat price of one B-chain
    hash over one A-chain hash (1 when the chains share a PoW algorithm).
    """
    if not (coins_a > 0 and coins_b > 0 and difficulty_a > 0 and difficulty_b > 0
            and hash_price_ratio > 0):
        raise ValueError("inputs must be > 0")
    return hash_price_ratio * (coins_a / coins_b) * (difficulty_b / difficulty_a)


def load_chain_observations(path: str, pool_difficulty_scale: float = 1.0) -> ChainObservations:
    """Read a `tau,difficulty,block_time,fees` CSV into ChainObservations."""
    taus: list[float] = []
    columns: dict[str, list[float]] = {"difficulty": [], "block_time": [], "fees": []}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for required in ("tau", "difficulty", "block_time", "fees"):
            if required not in fields:
                raise SchemaError(path, 1, required, "missing column")
        for lineno, row in enumerate(reader, start=2):
            for col in ("tau", "difficulty", "block_time", "fees"):
                raw = row.get(col)
                if raw is None or raw == "":
                    raise SchemaError(path, lineno, col, "missing value")
                try:
                    value = float(raw)
                except ValueError:
                    raise SchemaError(path, lineno, col,
                                      f"not a number: {raw!r}") from None
                if col == "tau":
                    taus.append(value)
                else:
                    columns[col].append(value)
    return ChainObservations(
        difficulty=TimeSeries(taus, columns["difficulty"]),
        block_times=TimeSeries(taus, columns["block_time"]),
        fees=TimeSeries(taus, columns["fees"]),
        pool_difficulty_scale=pool_difficulty_scale)


def write_allocation_csv(path: str, series: Sequence[tuple[float, Allocation]]) -> None:
    """Write a `tau,w_A` CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["tau", "w_A"])
        for tau, alloc in series:
            writer.writerow([format_number(tau), repr(float(alloc.w_a))])


def read_allocation_csv(path: str) -> AllocationSeries:
    """Read a `tau,w_A` CSV into an allocation series."""
    ts = TimeSeries.from_csv(path, value_column="w_A")
    return [(tau, Allocation(w, 1.0 - w)) for tau, w in ts]
