#!/usr/bin/env python3
"""Regenerate the bundled synthetic dataset under data/.

Runs the btc-bch-like simulator preset for ~100 days, resamples the run to an
hourly grid, and writes the chain-observation and price CSVs the
`powalloc equilibrium` command consumes, plus a pair of small header-chain
dumps for `powalloc oracle-replay`. Deterministic for a fixed seed.

Usage: python scripts/make_synthetic.py [--seed 2024] [--out data]
"""

import argparse
import csv
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from powalloc.cli import simulation_preset  # noqa: E402
from powalloc.core import format_number  # noqa: E402
from powalloc.oracle import (  # noqa: E402
    WindowTargetRule,
    build_chain,
    dump_headers,
    small_hash_space,
)
from powalloc.simulator import run_simulation  # noqa: E402


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) for v in row])


def hourly_block_times(block_log, sample_times, target, interval=3600.0):
    """Mean observed inter-arrival per sampling hour, LOCF when empty."""
    times = np.array([t for t, _, _ in block_log])
    gaps = np.array([dt for _, dt, _ in block_log])
    out = []
    last = target
    for tau in sample_times:
        mask = (times > tau - interval) & (times <= tau)
        if mask.any():
            last = float(gaps[mask].mean())
        out.append(last)
    return out


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--seed", type=int, default=23)
    parser.add_argument("--out", default=os.path.join(
        os.path.dirname(__file__), "..", "data"))
    args = parser.parse_args()

    config = simulation_preset("btc-bch-like")
    trace = run_simulation(config, seed=args.seed)

    synth = os.path.join(args.out, "synthetic")
    os.makedirs(synth, exist_ok=True)
    # Drop the first sample (time 0, pre-first-block state).
    keep = trace.times > 0
    taus = trace.times[keep]
    block_time_a = hourly_block_times(trace.block_log_a, taus,
                                      config.chain_a.params.target_block_time)
    block_time_b = hourly_block_times(trace.block_log_b, taus,
                                      config.chain_b.params.target_block_time)
    write_csv(os.path.join(synth, "chain_a.csv"),
              ["tau", "difficulty", "block_time", "fees"],
              zip(taus, trace.difficulty_a[keep], block_time_a,
                  np.zeros(len(taus))))
    write_csv(os.path.join(synth, "chain_b.csv"),
              ["tau", "difficulty", "block_time", "fees"],
              zip(taus, trace.difficulty_b[keep], block_time_b,
                  np.zeros(len(taus))))
    write_csv(os.path.join(synth, "price_a.csv"), ["tau", "price"],
              zip(taus, trace.price_a[keep]))
    write_csv(os.path.join(synth, "price_b.csv"), ["tau", "price"],
              zip(taus, trace.price_b[keep]))

    headers_dir = os.path.join(args.out, "headers")
    os.makedirs(headers_dir, exist_ok=True)
    space = small_hash_space(24)
    # On-cadence block times keep the per-block rule at a constant target, so
    # the replay demo's queried ratio stays at the 4:1 difficulty split.
    rule_a = WindowTargetRule(space, window=1, block_time=600.0)
    rule_b = WindowTargetRule(space, window=1, block_time=150.0)
    chain_a = build_chain(space, rule_a, space.size // 400, [600.0] * 24)
    chain_b = build_chain(space, rule_b, space.size // 100, [150.0] * 24)
    dump_headers(chain_a, os.path.join(headers_dir, "chain_a.jsonl"))
    dump_headers(chain_b, os.path.join(headers_dir, "chain_b.jsonl"))
    print(f"wrote {synth} ({len(taus)} hourly rows) and {headers_dir}")


if __name__ == "__main__":
    main()
