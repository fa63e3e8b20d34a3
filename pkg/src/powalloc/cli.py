"""Command line interface.

Every subcommand is deterministic given its inputs, flags, and seed, and
echoes its resolved configuration into the output directory. Exit codes:
0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import causality, equilibrium, market, mdp, oracle, simulator
from .core import ChainParams, SchemaError, TimeSeries, resample_locf
from .simulator import (
    ConstantPrices,
    GreedyArbitrage,
    MinerAgent,
    RandomWalkPrices,
    SimChain,
    SimConfig,
)

HOURS = 3600.0
DEFAULT_HALF_LIFE = 96 * HOURS


class UsageError(Exception):
    """Configuration or input-schema problem; maps to exit code 2."""


def _write_resolved_config(out_dir: str, doc: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "resolved_config.json"), "w",
              encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _format_metric(value: float) -> str:
    return "inf" if value == float("inf") else f"{value:.4f}"


def _metrics_text(metrics: equilibrium.FitMetrics) -> str:
    return ("RMSE {rmse}\nMAE {mae}\nME {me}\nPSNR {psnr}\n".format(
        rmse=_format_metric(metrics.rmse), mae=_format_metric(metrics.mae),
        me=_format_metric(metrics.me), psnr=_format_metric(metrics.psnr)))


def cmd_equilibrium(args: argparse.Namespace) -> int:
    params_a = ChainParams("A", args.block_time_a, args.coins_a)
    params_b = ChainParams("B", args.block_time_b, args.coins_b)
    obs_a = equilibrium.load_chain_observations(args.chain_a, args.pool_scale_a)
    obs_b = equilibrium.load_chain_observations(args.chain_b, args.pool_scale_b)
    price_a = TimeSeries.from_csv(args.price_a, value_column="price")
    price_b = TimeSeries.from_csv(args.price_b, value_column="price")
    if args.hash_price_a:
        sigma_a = TimeSeries.from_csv(args.hash_price_a, value_column="sigma")
    else:
        sigma_a = TimeSeries(obs_a.difficulty.taus,
                             np.ones(len(obs_a.difficulty)))
    if args.hash_price_b:
        sigma_b = TimeSeries.from_csv(args.hash_price_b, value_column="sigma")
    else:
        sigma_b = TimeSeries(obs_b.difficulty.taus,
                             np.ones(len(obs_b.difficulty)))

    if args.resample:
        start = max(s.taus[0] for s in (obs_a.difficulty, obs_b.difficulty,
                                        price_a, price_b, sigma_a, sigma_b))
        stop = min(s.taus[-1] for s in (obs_a.difficulty, obs_b.difficulty,
                                        price_a, price_b, sigma_a, sigma_b))
        if stop < start:
            raise UsageError("inputs have no overlapping time range")
        grid = np.arange(np.ceil(start / args.resample) * args.resample,
                         stop + 1e-9, args.resample)

        def regrid(series: TimeSeries) -> TimeSeries:
            return resample_locf(series, grid)

        obs_a = equilibrium.ChainObservations(
            regrid(obs_a.difficulty), regrid(obs_a.block_times),
            regrid(obs_a.fees), obs_a.pool_difficulty_scale)
        obs_b = equilibrium.ChainObservations(
            regrid(obs_b.difficulty), regrid(obs_b.block_times),
            regrid(obs_b.fees), obs_b.pool_difficulty_scale)
        price_a, price_b = regrid(price_a), regrid(price_b)
        sigma_a, sigma_b = regrid(sigma_a), regrid(sigma_b)

    actual = equilibrium.actual_allocation_series(
        obs_a, obs_b, params_a, params_b, sigma_a, sigma_b, args.half_life)
    predicted = equilibrium.equilibrium_series(
        price_a, price_b, obs_a.fees, obs_b.fees, params_a, params_b,
        args.half_life)

    actual_by_tau = dict(actual)
    predicted_by_tau = dict(predicted)
    shared = sorted(set(actual_by_tau) & set(predicted_by_tau))
    if not shared:
        raise UsageError("actual and equilibrium series share no timestamps")
    actual = [(tau, actual_by_tau[tau]) for tau in shared]
    predicted = [(tau, predicted_by_tau[tau]) for tau in shared]

    metrics = equilibrium.fit_metrics(actual, predicted)
    os.makedirs(args.out, exist_ok=True)
    equilibrium.write_allocation_csv(os.path.join(args.out, "actual.csv"), actual)
    equilibrium.write_allocation_csv(os.path.join(args.out, "equilibrium.csv"),
                                     predicted)
    report = _metrics_text(metrics)

    if args.check_arbitrage:
        tau = shared[-1]
        w = actual_by_tau[tau]
        w_eq = predicted_by_tau[tau]
        value_a = params_a.coins_per_block * price_a.values[-1]
        value_b = params_b.coins_per_block * price_b.values[-1]
        payoff = market.payoff_vector(value_a, value_b,
                                      params_a.target_block_time,
                                      params_b.target_block_time)
        move = market.find_arbitrage(w, payoff, params_a.target_block_time,
                                     params_b.target_block_time,
                                     step_cap=0.05)
        if move is None:
            report += "ARBITRAGE none (allocation at equilibrium)\n"
        else:
            gain = market.rebalancing_payoff(move.dc, payoff)
            report += (f"ARBITRAGE dw_A {move.dw[0]:+.6f} payoff "
                       f"{gain:.6g}/sec toward w_eq_A {w_eq.w_a:.4f}\n")

    with open(os.path.join(args.out, "metrics.txt"), "w", encoding="utf-8") as fh:
        fh.write(report)
    print(report, end="")
    _write_resolved_config(args.out, {
        "subcommand": "equilibrium",
        "chain_a": args.chain_a, "chain_b": args.chain_b,
        "price_a": args.price_a, "price_b": args.price_b,
        "hash_price_a": args.hash_price_a, "hash_price_b": args.hash_price_b,
        "block_time_a": args.block_time_a, "block_time_b": args.block_time_b,
        "coins_a": args.coins_a, "coins_b": args.coins_b,
        "pool_scale_a": args.pool_scale_a, "pool_scale_b": args.pool_scale_b,
        "half_life": args.half_life, "resample": args.resample,
        "check_arbitrage": args.check_arbitrage,
    })
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    actual = equilibrium.read_allocation_csv(args.actual)
    predicted = equilibrium.read_allocation_csv(args.predicted)
    metrics = equilibrium.fit_metrics(actual, predicted)
    text = _metrics_text(metrics)
    print(text, end="")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "metrics.txt"), "w",
                  encoding="utf-8") as fh:
            fh.write(text)
        _write_resolved_config(args.out, {
            "subcommand": "metrics", "actual": args.actual,
            "predicted": args.predicted,
        })
    return 0


def simulation_preset(name: str) -> SimConfig:
    """Built-in simulator configurations for the worked instances."""
    if name == "motivating":
        return SimConfig(
            chain_a=SimChain(ChainParams("A", 2.0, 1.0), initial_difficulty=6.0),
            chain_b=SimChain(ChainParams("B", 2.0, 1.0), initial_difficulty=6.0),
            miners=(MinerAgent("solo", 6.0, GreedyArbitrage(step_cap=0.05)),),
            price_path=ConstantPrices(2.0, 1.0),
            horizon_blocks=20_000,
            sample_interval=5.0)
    if name == "btc-bch-like":
        # Same-PoW pair, ~25:1 coin prices, slow price walks on both legs.
        return SimConfig(
            chain_a=SimChain(ChainParams("A", 600.0, 6.25),
                             initial_difficulty=600.0 * 96.0),
            chain_b=SimChain(ChainParams("B", 600.0, 6.25),
                             initial_difficulty=600.0 * 4.0),
            miners=(MinerAgent("g1", 70.0, GreedyArbitrage(step_cap=0.01)),
                    MinerAgent("g2", 30.0, GreedyArbitrage(step_cap=0.02,
                                                           initial_w_a=0.9))),
            price_path=RandomWalkPrices(1.0, 0.04, volatility_a=1e-4,
                                        volatility_b=1.5e-4),
            horizon_blocks=36_000,
            sample_interval=HOURS)
    if name == "btc-ltc-like":
        # Different PoW and cadence: 600 s vs 150 s blocks.
        return SimConfig(
            chain_a=SimChain(ChainParams("A", 600.0, 6.25),
                             initial_difficulty=600.0 * 90.0),
            chain_b=SimChain(ChainParams("B", 150.0, 12.5, "scrypt"),
                             initial_difficulty=150.0 * 10.0),
            miners=(MinerAgent("g1", 70.0, GreedyArbitrage(step_cap=0.01)),
                    MinerAgent("g2", 30.0, GreedyArbitrage(step_cap=0.02,
                                                           initial_w_a=0.9))),
            price_path=ConstantPrices(1.0, 0.01),
            horizon_blocks=20_000,
            sample_interval=HOURS)
    raise UsageError(f"unknown preset: {name!r}")


def cmd_simulate(args: argparse.Namespace) -> int:
    if bool(args.config) == bool(args.preset):
        raise UsageError("exactly one of --config or --preset is required")
    seed = args.seed
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                config, file_seed = simulator.config_from_json(fh.read())
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"bad config {args.config}: {exc}") from exc
        if seed is None:
            seed = file_seed
    else:
        config = simulation_preset(args.preset)
    if seed is None:
        seed = 0
    if args.horizon_blocks:
        config = dataclasses.replace(config, horizon_blocks=args.horizon_blocks)

    trace = simulator.run_simulation(config, seed)
    os.makedirs(args.out, exist_ok=True)
    trace.to_csv(os.path.join(args.out, "trace.csv"))
    with open(os.path.join(args.out, "resolved_config.json"), "w",
              encoding="utf-8") as fh:
        fh.write(simulator.config_to_json(config, seed))
        fh.write("\n")
    print(f"trace: {len(trace)} samples, terminal D_A={trace.difficulty_a[-1]:g} "
          f"D_B={trace.difficulty_b[-1]:g} w_A={trace.w_actual_a[-1]:.4f}")
    return 0


def cmd_mdp(args: argparse.Namespace) -> int:
    overrides = {}
    if args.reward_a is not None:
        overrides["reward_a"] = args.reward_a
    if args.reward_b is not None:
        overrides["reward_b"] = args.reward_b
    if args.discount is not None:
        overrides["discount"] = args.discount
    if args.hash_rate is not None:
        h = args.hash_rate
        overrides["total_hash_rate"] = h
        overrides["action_grid"] = tuple(float(a) for a in range(0, int(h) + 1))
        overrides["difficulty_grid"] = tuple(
            float(d) for d in range(1, int(h * 2) + 1))
    if args.grid_max is not None:
        overrides["difficulty_grid"] = tuple(
            float(d) for d in range(1, args.grid_max + 1))
    config = mdp.MdpConfig.motivating(**overrides)

    model = mdp.build_mdp(config)
    policy = mdp.solve_value_iteration(model)
    point = mdp.concentration_point(policy, config)

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "policy.csv"), "w", encoding="utf-8") as fh:
        fh.write("D_A,D_B,action,is_stationary\n")
        for (d_a, d_b), action in sorted(policy.actions.items()):
            stationary = (d_a, d_b) == point
            fh.write(f"{d_a:g},{d_b:g},{action:g},{int(stationary)}\n")
    _write_resolved_config(args.out, {
        "subcommand": "mdp", "preset": args.preset,
        "total_hash_rate": config.total_hash_rate,
        "block_time": config.block_time,
        "reward_a": config.reward_a, "reward_b": config.reward_b,
        "discount": config.discount,
        "difficulty_grid_max": config.difficulty_grid[-1],
    })
    print(f"concentration: D_A={point[0]:g} D_B={point[1]:g}")
    return 0


def cmd_oracle_replay(args: argparse.Namespace) -> int:
    space = oracle.small_hash_space(args.hash_bits)
    headers_a = oracle.load_headers(args.headers_a, space)
    headers_b = oracle.load_headers(args.headers_b, space)
    if not headers_a or not headers_b:
        raise UsageError("header files must contain at least a genesis header")
    if args.rule == "window":
        rule: oracle.TargetRule = oracle.WindowTargetRule(
            space, args.daa_window, args.block_time_b, args.daa_clamp)
    else:
        rule = oracle.StepBoundRule(space, args.daa_clamp)
    client = oracle.PriceOracle(space, headers_a, headers_b[0], rule,
                                args.coins_a, args.coins_b)
    for header in headers_b[1:]:
        rejection = client.update(header)
        if rejection is not None:
            print(f"{rejection.value} at height {header.height}", file=sys.stderr)
            return 1
    height_a, height_b = args.query
    try:
        ratio = client.query(height_a, height_b, args.sigma_delta)
    except oracle.UnknownHeightError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return 1
    print(f"price_ratio_B_over_A: {ratio!r}")
    return 0


def cmd_spot_sim(args: argparse.Namespace) -> int:
    space = oracle.small_hash_space(args.hash_bits)

    def fresh_contract() -> oracle.SpotContract:
        host = [oracle.genesis_header(space, target=space.size // args.host_difficulty)]
        return oracle.SpotContract(space, host, coins_per_block_a=args.coins_a,
                                   step_divisor=args.step_divisor,
                                   target_decay=args.target_decay,
                                   blocks_per_round=args.blocks_per_round,
                                   reward=args.reward)

    if args.mode == "rational":
        outcomes = oracle.run_spot_rational_miner(
            fresh_contract(), n_epochs=args.epochs,
            true_hash_price_ratio=args.true_ratio,
            host_coin_price=1.0, host_block_time=args.host_block_time)
        tail = outcomes[len(outcomes) // 2:]
        recovered = float(np.mean([o.reported_ratio for o in tail]))
        print(f"true_ratio {args.true_ratio} recovered {recovered:.6f} "
              f"epochs {args.epochs}")
    else:
        rows = []
        for mult in (1.0, args.attacker_mult):
            per_seed_rounds = []
            per_seed_sigma = []
            for seed in range(args.seeds):
                outcomes = oracle.run_spot_epochs(
                    fresh_contract(), n_epochs=args.epochs,
                    solver_hash_per_round=args.solver_hash * mult,
                    host_block_time=args.host_block_time, seed=seed)
                tail = outcomes[len(outcomes) // 2:]
                per_seed_rounds.append(np.mean([o.rounds for o in tail]))
                per_seed_sigma.append(np.mean([o.reported_ratio for o in tail]))
            rows.append((mult, float(np.mean(per_seed_rounds)),
                         float(np.mean(per_seed_sigma))))
            print(f"hash x{mult:g}: mean_final_rounds {rows[-1][1]:.3f} "
                  f"mean_sigma_delta {rows[-1][2]:.6f}")
        faster = rows[1][1] < rows[0][1]
        higher = rows[1][2] > rows[0][2]
        print(f"attacker_effect: rounds_decrease={faster} sigma_increase={higher}")
    return 0


def cmd_future_demo(args: argparse.Namespace) -> int:
    space = oracle.small_hash_space(args.hash_bits)
    rng = np.random.default_rng(args.seed)

    def grow(headers: list[oracle.BlockHeader], n: int, dt: float) -> None:
        for _ in range(n):
            prev = headers[-1]
            headers.append(oracle.mine_header(
                space, prev, prev.target,
                prev.timestamp + float(rng.exponential(dt))))

    host = [oracle.genesis_header(space, target=space.size // 400)]
    genesis_b = oracle.genesis_header(space, target=space.size // 100)
    client = oracle.PriceOracle(space, host, genesis_b,
                                oracle.StepBoundRule(space), args.coins_a,
                                args.coins_b)
    ledger = oracle.Ledger({"guarantor": 100.0, "beneficiary": 50.0})
    future = oracle.FutureContract("future-1", "guarantor", "beneficiary",
                                   client, ledger)
    total_before = ledger.total()

    future.deposit("guarantor", 20.0)
    print(f"deposit: guarantor -> contract 20.0 (phase {future.state.phase.value})")
    chain_b = [genesis_b]
    grow(host, 12, 600.0)
    grow(chain_b, 12, 150.0)
    for header in chain_b[1:]:
        rejection = client.update(header)
        assert rejection is None, rejection
    future.issue({"guarantor", "beneficiary"}, 2, 2, 10, 10, fee=1.0)
    print(f"issue: fee 1.0 beneficiary -> guarantor (phase {future.state.phase.value})")
    payout = future.redeem("beneficiary")
    print(f"redeem: contract -> beneficiary {payout:.6f} coins A "
          f"(phase {future.state.phase.value})")
    print(f"balances: {json.dumps(ledger.balances, sort_keys=True)}")
    assert abs(ledger.total() - total_before) < 1e-9
    print("conservation: ok")
    return 0


def cmd_granger(args: argparse.Namespace) -> int:
    actual = equilibrium.read_allocation_csv(args.actual)
    predicted = equilibrium.read_allocation_csv(args.equilibrium)
    rows = causality.granger_grid(actual, predicted, args.bucket, args.lag)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "granger.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bucket_start,direction,F,p,classification\n")
        for row in rows:
            if row.status != "ok":
                for direction in ("price->security", "security->price"):
                    fh.write(f"{row.bucket_start:g},{direction},,,"
                             f"insufficient data\n")
                continue
            for res in (row.price_to_security, row.security_to_price):
                fh.write(f"{row.bucket_start:g},{res.direction},{res.f_stat:.6g},"
                         f"{res.p_value:.6g},{res.classification}\n")
    _write_resolved_config(args.out, {
        "subcommand": "granger", "actual": args.actual,
        "equilibrium": args.equilibrium, "bucket": args.bucket,
        "lag": args.lag,
    })
    with open(path, encoding="utf-8") as fh:
        print(fh.read(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="powalloc",
        description="Two-chain PoW security allocation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eq = sub.add_parser("equilibrium",
                          help="actual vs equilibrium allocation from CSVs")
    p_eq.add_argument("--chain-a", required=True)
    p_eq.add_argument("--chain-b", required=True)
    p_eq.add_argument("--price-a", required=True)
    p_eq.add_argument("--price-b", required=True)
    p_eq.add_argument("--hash-price-a")
    p_eq.add_argument("--hash-price-b")
    p_eq.add_argument("--block-time-a", type=float, required=True)
    p_eq.add_argument("--block-time-b", type=float, required=True)
    p_eq.add_argument("--coins-a", type=float, required=True)
    p_eq.add_argument("--coins-b", type=float, required=True)
    p_eq.add_argument("--pool-scale-a", type=float, default=1.0)
    p_eq.add_argument("--pool-scale-b", type=float, default=1.0)
    p_eq.add_argument("--half-life", type=float, default=DEFAULT_HALF_LIFE)
    p_eq.add_argument("--resample", type=float, default=0.0,
                      help="LOCF-resample inputs to this grid (seconds)")
    p_eq.add_argument("--check-arbitrage", action="store_true")
    p_eq.add_argument("--out", required=True)
    p_eq.set_defaults(func=cmd_equilibrium)

    p_metrics = sub.add_parser("metrics", help="fit metrics between two allocation CSVs")
    p_metrics.add_argument("--actual", required=True)
    p_metrics.add_argument("--predicted", required=True)
    p_metrics.add_argument("--out")
    p_metrics.set_defaults(func=cmd_metrics)

    p_sim = sub.add_parser("simulate", help="run the two-chain mining simulator")
    p_sim.add_argument("--config")
    p_sim.add_argument("--preset",
                       choices=["motivating", "btc-bch-like", "btc-ltc-like"])
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--horizon-blocks", type=int)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_mdp = sub.add_parser("mdp", help="solve the allocation MDP")
    p_mdp.add_argument("--preset", choices=["motivating"], default="motivating")
    p_mdp.add_argument("--reward-a", type=float)
    p_mdp.add_argument("--reward-b", type=float)
    p_mdp.add_argument("--discount", type=float)
    p_mdp.add_argument("--hash-rate", type=float)
    p_mdp.add_argument("--grid-max", type=int)
    p_mdp.add_argument("--out", required=True)
    p_mdp.set_defaults(func=cmd_mdp)

    p_replay = sub.add_parser("oracle-replay",
                              help="replay header dumps through the oracle")
    p_replay.add_argument("--headers-a", required=True)
    p_replay.add_argument("--headers-b", required=True)
    p_replay.add_argument("--sigma-delta", type=float, default=1.0)
    p_replay.add_argument("--query", type=int, nargs=2, required=True,
                          metavar=("HEIGHT_A", "HEIGHT_B"))
    p_replay.add_argument("--hash-bits", type=int, default=24)
    p_replay.add_argument("--rule", choices=["window", "step"], default="window")
    p_replay.add_argument("--daa-window", type=int, default=1)
    p_replay.add_argument("--daa-clamp", type=float, default=4.0)
    p_replay.add_argument("--block-time-b", type=float, default=600.0)
    p_replay.add_argument("--coins-a", type=float, default=1.0)
    p_replay.add_argument("--coins-b", type=float, default=1.0)
    p_replay.set_defaults(func=cmd_oracle_replay)

    p_spot = sub.add_parser("spot-sim", help="spot hash-price contract experiments")
    p_spot.add_argument("--mode", choices=["rational", "manipulation"],
                        required=True)
    p_spot.add_argument("--epochs", type=int, default=40)
    p_spot.add_argument("--seeds", type=int, default=20)
    p_spot.add_argument("--true-ratio", type=float, default=0.3)
    p_spot.add_argument("--attacker-mult", type=float, default=2.0)
    p_spot.add_argument("--solver-hash", type=float, default=200.0)
    p_spot.add_argument("--hash-bits", type=int, default=24)
    p_spot.add_argument("--host-difficulty", type=int, default=500)
    p_spot.add_argument("--host-block-time", type=float, default=600.0)
    p_spot.add_argument("--coins-a", type=float, default=6.25)
    p_spot.add_argument("--step-divisor", type=float, default=64.0)
    p_spot.add_argument("--target-decay", type=float, default=0.5)
    p_spot.add_argument("--blocks-per-round", type=int, default=2)
    p_spot.add_argument("--reward", type=float, default=1.0)
    p_spot.set_defaults(func=cmd_spot_sim)

    p_future = sub.add_parser("future-demo",
                              help="walk a future contract lifecycle")
    p_future.add_argument("--seed", type=int, default=0)
    p_future.add_argument("--hash-bits", type=int, default=24)
    p_future.add_argument("--coins-a", type=float, default=1.0)
    p_future.add_argument("--coins-b", type=float, default=1.0)
    p_future.set_defaults(func=cmd_future_demo)

    p_granger = sub.add_parser("granger",
                               help="Granger-causality grid over two allocation CSVs")
    p_granger.add_argument("--actual", required=True)
    p_granger.add_argument("--equilibrium", required=True)
    p_granger.add_argument("--bucket", type=float, default=30 * 24 * HOURS)
    p_granger.add_argument("--lag", type=int, default=1)
    p_granger.add_argument("--out", required=True)
    p_granger.set_defaults(func=cmd_granger)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
