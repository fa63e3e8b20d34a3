"""Shared domain types: chain constants, time series, and security allocations.

Everything here is an immutable value; the operations are pure functions and
safe to use concurrently without coordination.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

POOL_DIFFICULTY_SCALE = 2**32

ALLOCATION_SUM_TOL = 1e-12


class SchemaError(ValueError):
    """A CSV file violated the expected schema.

    Carries enough location detail (file, line, column) for CLI diagnostics.
    """

    def __init__(self, path: str, line: int, column: str, message: str):
        self.path = path
        self.line = line
        self.column = column
        super().__init__(f"{path}:{line}: column '{column}': {message}")


@dataclass(frozen=True)
class ChainParams:
    """Static protocol constants of one chain."""

    chain_id: str
    target_block_time: float  # seconds between blocks the protocol aims for
    coins_per_block: float  # base reward plus average fees, in native coin
    pow_algorithm: str = "sha256"

    def __post_init__(self):
        if not self.target_block_time > 0:
            raise ValueError("target_block_time must be > 0")
        if not self.coins_per_block > 0:
            raise ValueError("coins_per_block must be > 0")


@dataclass(frozen=True)
class Allocation:
    """A normalized two-component security allocation (w_a, w_b).

    Components are nonnegative and sum to 1 within ALLOCATION_SUM_TOL.
    """

    w_a: float
    w_b: float

    def __post_init__(self):
        if self.w_a < 0 or self.w_b < 0:
            raise ValueError(f"allocation components must be >= 0, got {self}")
        if abs(self.w_a + self.w_b - 1.0) > ALLOCATION_SUM_TOL:
            raise ValueError(f"allocation components must sum to 1, got {self}")

    def as_tuple(self) -> tuple[float, float]:
        return (self.w_a, self.w_b)


@dataclass(frozen=True)
class MarketSnapshot:
    """Spot market observables at one instant.

    Prices are fiat per coin, hash prices fiat per hash, and reward values
    fiat per block (coins per block times coin price, fees included).
    """

    tau: float
    price_a: float
    price_b: float
    hash_price_a: float
    hash_price_b: float
    reward_value_a: float
    reward_value_b: float

    def __post_init__(self):
        for name in ("price_a", "price_b", "hash_price_a", "hash_price_b",
                     "reward_value_a", "reward_value_b"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


class TimeSeries:
    """Timestamped scalar samples with strictly increasing timestamps.

    Timestamps are seconds since an arbitrary epoch; no calendar handling.
    """

    __slots__ = ("taus", "values")

    def __init__(self, taus: Iterable[float], values: Iterable[float]):
        taus_arr = np.asarray(list(taus) if not isinstance(taus, np.ndarray) else taus,
                              dtype=np.float64)
        values_arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values,
                                dtype=np.float64)
        if taus_arr.shape != values_arr.shape or taus_arr.ndim != 1:
            raise ValueError("taus and values must be 1-d and the same length")
        if len(taus_arr) > 1 and not np.all(np.diff(taus_arr) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(taus_arr)) or not np.all(np.isfinite(values_arr)):
            raise ValueError("timestamps and values must be finite")
        taus_arr.setflags(write=False)
        values_arr.setflags(write=False)
        self.taus = taus_arr
        self.values = values_arr

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]]) -> "TimeSeries":
        pts = list(pairs)
        return cls([p[0] for p in pts], [p[1] for p in pts])

    def __len__(self) -> int:
        return len(self.taus)

    def __iter__(self) -> Iterator[tuple[float, float]]:
        return zip(self.taus.tolist(), self.values.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (np.array_equal(self.taus, other.taus)
                and np.array_equal(self.values, other.values))

    def __repr__(self) -> str:
        return f"TimeSeries(n={len(self)})"

    def at(self, taus: np.ndarray) -> np.ndarray:
        """Values at exactly-matching timestamps; raises if any are missing."""
        idx = np.searchsorted(self.taus, taus)
        if np.any(idx >= len(self.taus)) or not np.array_equal(self.taus[idx], taus):
            raise ValueError("requested timestamps not present in series")
        return self.values[idx]

    @classmethod
    def from_csv(cls, path: str, value_column: str = "value") -> "TimeSeries":
        """Read a `tau,<value_column>` CSV (UTF-8, LF)."""
        taus: list[float] = []
        values: list[float] = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            fields = reader.fieldnames or []
            for required in ("tau", value_column):
                if required not in fields:
                    raise SchemaError(path, 1, required, "missing column")
            for lineno, row in enumerate(reader, start=2):
                for col, out in (("tau", taus), (value_column, values)):
                    raw = row.get(col)
                    if raw is None or raw == "":
                        raise SchemaError(path, lineno, col, "missing value")
                    try:
                        out.append(float(raw))
                    except ValueError:
                        raise SchemaError(path, lineno, col,
                                          f"not a number: {raw!r}") from None
        return cls(taus, values)

    def to_csv(self, path: str, value_column: str = "value") -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["tau", value_column])
            for tau, value in self:
                writer.writerow([format_number(tau), format_number(value)])


def format_number(x: float) -> str:
    """Integer-looking floats print as integers; others as repr (lossless)."""
    if float(x).is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(float(x))


def ewma(series: TimeSeries, half_life: float) -> TimeSeries:
    """Exponentially weighted moving average with continuous-time decay.

    The weight of an observation decays by 2 ** (-dt / half_life) per elapsed
    dt, so irregular sampling is handled without resampling. The first output
    equals the first input (no burn-in).
    """
    if len(series) == 0:
        raise ValueError("empty input")
    if not half_life > 0:
        raise ValueError("half_life must be > 0")
    out = np.empty(len(series))
    mean = series.values[0]
    total_weight = 1.0
    out[0] = mean
    for i in range(1, len(series)):
        dt = series.taus[i] - series.taus[i - 1]
        decay = 2.0 ** (-dt / half_life)
        total_weight = total_weight * decay + 1.0
        # Incremental form of (decayed sum + x) / (decayed weight + 1); exact
        # at a constant input.
        mean = mean + (series.values[i] - mean) / total_weight
        out[i] = mean
    return TimeSeries(series.taus, out)


def allocation_from_security(security_a: float, security_b: float) -> Allocation:
    """Normalize two security investments (fiat/sec) into an allocation."""
    if security_a < 0 or security_b < 0:
        raise ValueError("security investments must be >= 0")
    total = security_a + security_b
    if total <= 0:
        raise ValueError("degenerate allocation: both security investments are zero")
    return Allocation(security_a / total, security_b / total)


def allocation_distance(w1: Allocation, w2: Allocation) -> float:
    """L1 distance between two allocations."""
    return abs(w1.w_a - w2.w_a) + abs(w1.w_b - w2.w_b)


def resample_locf(series: TimeSeries, grid: np.ndarray) -> TimeSeries:
    """Resample onto `grid` by last observation carried forward.

    Grid points earlier than the first observation are dropped (there is
    nothing to carry forward).
    """
    grid = np.asarray(grid, dtype=np.float64)
    keep = grid >= series.taus[0]
    grid = grid[keep]
    idx = np.searchsorted(series.taus, grid, side="right") - 1
    return TimeSeries(grid, series.values[idx])


def common_taus(*series: TimeSeries) -> np.ndarray:
    """Timestamps present in every series; error if none overlap."""
    if not series:
        raise ValueError("need at least one series")
    taus = series[0].taus
    for s in series[1:]:
        taus = np.intersect1d(taus, s.taus)
    if len(taus) == 0:
        raise ValueError("no overlapping timestamps")
    return taus
