import dataclasses

import numpy as np
import pytest

from powalloc.core import ChainParams
from powalloc.oracle import (
    BadHeaderChainError,
    BadSignatureError,
    ExpiryNotReachedError,
    FutureContract,
    FuturePhase,
    HeaderRejection,
    InsufficientConfirmationsError,
    InsufficientDepositError,
    Ledger,
    MarginFutureContract,
    MarginPhase,
    PriceOracle,
    SpotContract,
    StepBoundRule,
    UnknownHeightError,
    WindowTargetRule,
    WrongPhaseError,
    build_chain,
    dump_headers,
    full_hash_space,
    genesis_header,
    header_hash,
    load_headers,
    make_header,
    mine_header,
    run_spot_epochs,
    run_spot_rational_miner,
    small_hash_space,
)
from powalloc.simulator import (
    ConstantPrices,
    GreedyArbitrage,
    MinerAgent,
    SimChain,
    SimConfig,
    run_simulation,
)

SPACE = small_hash_space(24)


def per_block_rule(block_time=600.0):
    return WindowTargetRule(SPACE, window=1, block_time=block_time)


def quick_chain(n_blocks=6, difficulty=200, block_time=600.0, jitter=None):
    rule = per_block_rule(block_time)
    times = [block_time] * n_blocks if jitter is None else jitter
    return build_chain(SPACE, rule, SPACE.size // difficulty, times), rule


class TestHeaderChain:
    def test_build_chain_is_valid(self):
        headers, rule = quick_chain()
        for i in range(1, len(headers)):
            assert headers[i].prev_hash == header_hash(SPACE, headers[i - 1])
            assert header_hash(SPACE, headers[i]) < headers[i - 1].target
            assert rule.valid_target(headers[:i], headers[i])

    def test_update_appends_valid_header(self):
        headers, rule = quick_chain()
        oracle = PriceOracle(SPACE, [genesis_header(SPACE, 1000)], headers[0],
                             rule, 1.0, 1.0)
        for header in headers[1:]:
            assert oracle.update(header) is None
        assert len(oracle.headers_b) == len(headers)

    def test_bad_link_rejected_without_state_change(self):
        headers, rule = quick_chain()
        oracle = PriceOracle(SPACE, [genesis_header(SPACE, 1000)], headers[0],
                             rule, 1.0, 1.0)
        assert oracle.update(headers[1]) is None
        stale = headers[1]  # prev_hash points at genesis, but tip is height 1
        relinked = dataclasses.replace(stale, height=2)
        assert oracle.update(relinked) == HeaderRejection.BAD_LINK
        assert len(oracle.headers_b) == 2

    def test_bad_pow_rejected(self):
        headers, rule = quick_chain()
        oracle = PriceOracle(SPACE, [genesis_header(SPACE, 1000)], headers[0],
                             rule, 1.0, 1.0)
        header = headers[1]
        # Find a nonce whose hash fails the previous target but keep the link.
        nonce = header.nonce
        while True:
            nonce += 1
            forged = dataclasses.replace(header, nonce=nonce)
            if header_hash(SPACE, forged) >= headers[0].target:
                break
        assert oracle.update(forged) == HeaderRejection.BAD_POW
        assert len(oracle.headers_b) == 1

    def test_bad_difficulty_rejected(self):
        headers, rule = quick_chain()
        oracle = PriceOracle(SPACE, [genesis_header(SPACE, 1000)], headers[0],
                             rule, 1.0, 1.0)
        wrong_target = headers[1].target // 2
        forged = mine_header(SPACE, headers[0], wrong_target,
                             headers[1].timestamp)
        assert oracle.update(forged) == HeaderRejection.BAD_DIFFICULTY
        assert len(oracle.headers_b) == 1

    def test_window_rule_adjusts_on_schedule(self):
        rule = WindowTargetRule(SPACE, window=3, block_time=600.0)
        slow = [900.0] * 7
        headers = build_chain(SPACE, rule, SPACE.size // 100, slow)
        targets = [h.target for h in headers]
        assert targets[0] == targets[1] == targets[2]
        assert targets[3] == int(round(targets[2] * 900.0 / 600.0))
        assert targets[3] == targets[4] == targets[5]
        assert targets[6] > targets[3]

    def test_step_bound_rule(self):
        rule = StepBoundRule(SPACE, max_step=2.0)
        genesis = genesis_header(SPACE, 1000)
        ok = make_header(SPACE, 1, 0, 1500, 0, 600.0)
        too_big = make_header(SPACE, 1, 0, 4000, 0, 600.0)
        assert rule.valid_target([genesis], ok)
        assert not rule.valid_target([genesis], too_big)

    def test_dump_load_round_trip(self, tmp_path):
        headers, _ = quick_chain()
        path = tmp_path / "headers.jsonl"
        dump_headers(headers, str(path))
        assert load_headers(str(path), SPACE) == headers

    def test_full_hash_space_mines_easy_targets(self):
        # The production-size space works with the same machinery; a target
        # of half the space needs ~2 attempts.
        space = full_hash_space()
        assert space.size == 2**256
        genesis = genesis_header(space, space.size // 2)
        nxt = mine_header(space, genesis, space.size // 2, 600.0)
        assert header_hash(space, nxt) < genesis.target
        assert nxt.difficulty == pytest.approx(2.0)

    def test_replay_reproduces_state(self):
        headers, rule = quick_chain(n_blocks=8)
        log = headers[1:]
        first = PriceOracle(SPACE, [genesis_header(SPACE, 1000)], headers[0],
                            rule, 1.0, 1.0)
        second = PriceOracle(SPACE, [genesis_header(SPACE, 1000)], headers[0],
                             per_block_rule(), 1.0, 1.0)
        for header in log:
            first.update(header)
        for header in log:
            second.update(header)
        assert first.headers_b == second.headers_b


class TestOracleQuery:
    def _oracle(self, host_difficulty=400, foreign_difficulty=100):
        host = [genesis_header(SPACE, SPACE.size // host_difficulty)]
        genesis_b = genesis_header(SPACE, SPACE.size // foreign_difficulty)
        return PriceOracle(SPACE, host, genesis_b, StepBoundRule(SPACE),
                           coins_per_block_a=1.0, coins_per_block_b=1.0)

    def test_identical_chains_report_unity(self):
        oracle = self._oracle(200, 200)
        assert oracle.query(0, 0, 1.0) == pytest.approx(1.0)

    def test_difficulty_ratio(self):
        oracle = self._oracle(400, 100)
        assert oracle.query(0, 0, 1.0) == pytest.approx(0.25, rel=1e-6)

    def test_unknown_heights_raise(self):
        oracle = self._oracle()
        with pytest.raises(UnknownHeightError, match="chain A"):
            oracle.query(5, 0, 1.0)
        with pytest.raises(UnknownHeightError, match="chain B"):
            oracle.query(0, 3, 1.0)

    def test_simulator_round_trip(self):
        # Same-PoW pair at equilibrium; headers carry the simulator's
        # difficulty path (under a common desk scale, which cancels in the
        # ratio). The oracle must recover the scripted price ratio.
        scripted_ratio = 0.1
        config = SimConfig(
            chain_a=SimChain(ChainParams("A", 600.0, 6.25),
                             initial_difficulty=600.0 * 60.0),
            chain_b=SimChain(ChainParams("B", 600.0, 6.25),
                             initial_difficulty=600.0 * 40.0),
            miners=(MinerAgent("g", 100.0, GreedyArbitrage(step_cap=0.02)),),
            price_path=ConstantPrices(1.0, scripted_ratio),
            horizon_blocks=4000,
            sample_interval=600.0)
        trace = run_simulation(config, seed=3)
        n = len(trace)
        tail = slice(n - 40, n)
        scale = 1000.0  # sim difficulty to desk-scale expected hashes
        times = trace.times[tail]

        def headers_from(difficulties):
            target0 = int(round(SPACE.size / (difficulties[0] / scale)))
            headers = [genesis_header(SPACE, target0, times[0])]
            for d, t in zip(difficulties[1:], times[1:]):
                target = int(min(max(round(SPACE.size / (d / scale)), 1),
                                 SPACE.size))
                headers.append(mine_header(SPACE, headers[-1], target, t))
            return headers

        host = headers_from(trace.difficulty_a[tail])
        foreign = headers_from(trace.difficulty_b[tail])
        oracle = PriceOracle(SPACE, host, foreign[0], StepBoundRule(SPACE),
                             6.25, 6.25)
        for header in foreign[1:]:
            assert oracle.update(header) is None
        estimate = oracle.query(len(host) - 1, len(oracle.headers_b) - 1, 1.0)
        assert estimate == pytest.approx(scripted_ratio, rel=0.02)


def fresh_spot(host_difficulty=500, step_divisor=64.0, target_decay=0.5,
               blocks_per_round=2, reward=1.0, coins_a=6.25):
    host = [genesis_header(SPACE, SPACE.size // host_difficulty)]
    return SpotContract(SPACE, host, coins_per_block_a=coins_a,
                        step_divisor=step_divisor, target_decay=target_decay,
                        blocks_per_round=blocks_per_round, reward=reward)


def grow_host(contract, n_blocks, block_time=600.0):
    for _ in range(n_blocks):
        prev = contract.host_headers[-1]
        contract.host_headers.append(
            mine_header(SPACE, prev, prev.target, prev.timestamp + block_time))
        contract.on_host_block()


def solve_now(contract, account="solver", ledger=None):
    ledger = ledger if ledger is not None else Ledger({account: 0.0})
    nonce = 0
    while not contract.solve(account, nonce, ledger):
        nonce += 1
    return ledger


class TestSpotContract:
    def test_invalid_solution_is_silent_noop(self):
        contract = fresh_spot()
        before = dataclasses.replace(contract.state)
        ledger = Ledger({"solver": 0.0})
        # With target == space size every hash solves, so shrink first.
        solve_now(contract)
        state = contract.state
        bad_nonce = 0
        while contract.solution_hash("solver", bad_nonce) < state.target:
            bad_nonce += 1
        reward_before = ledger.balance("solver")
        assert contract.solve("solver", bad_nonce, ledger) is False
        assert ledger.balance("solver") == reward_before
        assert contract.state.round_no == state.round_no

    def test_solve_rescales_target_and_step(self):
        contract = fresh_spot(step_divisor=32.0, target_decay=0.25)
        ledger = solve_now(contract)
        s = contract.state
        assert s.target == pytest.approx(0.25 * SPACE.size)
        assert s.target_step == pytest.approx(SPACE.size / 32.0)
        assert s.round_no == 1
        assert ledger.balance("solver") == contract.state.reward

    def test_consecutive_solves_compose_decay(self):
        contract = fresh_spot(target_decay=0.5)
        solve_now(contract)
        solve_now(contract)
        assert contract.state.target == pytest.approx(0.25 * SPACE.size)

    def test_round_advances_only_after_expiry(self):
        contract = fresh_spot(blocks_per_round=3)
        solve_now(contract)
        target_after_solve = contract.state.target
        grow_host(contract, 3)  # height == b_A + N: no round change yet
        assert contract.state.round_no == 1
        grow_host(contract, 1)
        assert contract.state.round_no == 2
        assert contract.state.target == pytest.approx(
            target_after_solve + contract.state.target_step)

    def test_long_stall_advances_rounds_and_clamps(self):
        contract = fresh_spot(blocks_per_round=2)
        solve_now(contract)
        start_target = contract.state.target
        step = contract.state.target_step
        grow_host(contract, 3 * (2 + 1))  # three round expiries
        assert contract.state.round_no == 4
        assert contract.state.target == pytest.approx(start_target + 3 * step)
        grow_host(contract, 400 * 3)
        assert contract.state.target <= SPACE.size

    def test_query_halves_when_reward_doubles(self):
        low = fresh_spot(reward=1.0)
        high = fresh_spot(reward=2.0)
        for contract in (low, high):
            solve_now(contract)
        assert high.query(0.0) == pytest.approx(low.query(0.0) / 2.0)

    def test_query_collects_fee(self):
        contract = fresh_spot()
        contract.query(3.5)
        assert contract.state.fee_balance == 3.5

    def test_epoch_reconstruction_identity(self):
        # The epoch start is decay * prev_base and each later round adds one
        # step, so the solve target reconstructs exactly. The very first
        # epoch starts at the full hash space where the target cap absorbs
        # round bumps, so burn it before asserting.
        contract = fresh_spot(blocks_per_round=1)
        solve_now(contract)
        rng = np.random.default_rng(4)
        for _ in range(12):
            stall_rounds = int(rng.integers(0, 5))
            grow_host(contract, stall_rounds * 2)
            state_rounds = contract.state.round_no
            solve_target = contract.state.target
            solve_now(contract)
            s = contract.state
            assert s.prev_rounds == state_rounds
            assert s.target_decay * s.prev_base + (s.prev_rounds - 1) * s.prev_step \
                == pytest.approx(solve_target, rel=1e-12)

    def test_rational_miner_recovers_ratio_within_step(self):
        contract = fresh_spot(step_divisor=200.0, target_decay=0.5,
                              blocks_per_round=1)
        true_ratio = 0.3
        outcomes = run_spot_rational_miner(contract, n_epochs=14,
                                           true_hash_price_ratio=true_ratio,
                                           host_coin_price=1.0,
                                           host_block_time=600.0)
        tail = outcomes[8:]
        host_target = contract.host_headers[-1].target
        threshold = contract.coins_per_block_a * host_target / \
            (contract.state.reward * true_ratio)
        for outcome in tail:
            implied = contract.coins_per_block_a * host_target / \
                (contract.state.reward * outcome.reported_ratio)
            step = outcome.solve_target / 200.0  # one target step, roughly
            assert abs(implied - threshold) <= 2.05 * step

    def test_more_attacker_hash_fewer_rounds_higher_ratio(self):
        means = []
        for hash_rate in (150.0, 300.0):
            rounds, ratios = [], []
            for seed in range(6):
                contract = fresh_spot(blocks_per_round=1)
                outcomes = run_spot_epochs(contract, n_epochs=24,
                                           solver_hash_per_round=hash_rate,
                                           host_block_time=600.0, seed=seed)
                tail = outcomes[12:]
                rounds.append(np.mean([o.rounds for o in tail]))
                ratios.append(np.mean([o.reported_ratio for o in tail]))
            means.append((np.mean(rounds), np.mean(ratios)))
        assert means[1][0] < means[0][0]
        assert means[1][1] > means[0][1]

    def test_replay_reproduces_state(self):
        def drive(contract):
            events = [("host", 4), ("solve", None), ("host", 7),
                      ("solve", None), ("host", 2), ("query", 1.0)]
            ledger = Ledger({"solver": 0.0})
            for kind, arg in events:
                if kind == "host":
                    grow_host(contract, arg)
                elif kind == "solve":
                    solve_now(contract, ledger=ledger)
                else:
                    contract.query(arg)
            return contract.state

        first = drive(fresh_spot())
        second = drive(fresh_spot())
        assert first == second


class TestFutureContract:
    def _setup(self, host_difficulty=400, foreign_difficulty=100,
               deposit=10.0):
        host = [genesis_header(SPACE, SPACE.size // host_difficulty)]
        genesis_b = genesis_header(SPACE, SPACE.size // foreign_difficulty)
        oracle = PriceOracle(SPACE, host, genesis_b, StepBoundRule(SPACE),
                             1.0, 1.0)
        ledger = Ledger({"g": 100.0, "b": 100.0})
        future = FutureContract("fut", "g", "b", oracle, ledger)
        return future, oracle, ledger

    def _grow(self, oracle, heights=6, ratio_shift=1.0):
        host = oracle.host_headers
        for _ in range(heights):
            prev = host[-1]
            host.append(mine_header(SPACE, prev, prev.target,
                                    prev.timestamp + 600.0))
        prev = oracle.headers_b[-1]
        for _ in range(heights):
            target = int(prev.target / ratio_shift)
            new = mine_header(SPACE, prev, target, prev.timestamp + 600.0)
            assert oracle.update(new) is None
            prev = new

    def test_happy_path_lifecycle(self):
        future, oracle, ledger = self._setup()
        total = ledger.total()
        future.deposit("g", 10.0)
        assert future.state.phase is FuturePhase.FUNDED
        self._grow(oracle)
        future.issue({"g", "b"}, 1, 1, 5, 5, fee=1.0)
        assert future.state.phase is FuturePhase.ISSUED
        payout = future.redeem("b")
        assert payout == pytest.approx(0.25, rel=1e-6)
        assert future.state.phase is FuturePhase.REDEEMED
        assert ledger.total() == pytest.approx(total)
        assert ledger.balance("fut") == pytest.approx(0.0)

    def test_recover_before_issue_refunds(self):
        future, _, ledger = self._setup()
        future.deposit("g", 10.0)
        future.recover("g")
        assert future.state.phase is FuturePhase.RECOVERED
        assert ledger.balance("g") == 100.0

    def test_redeem_before_expiry_headers(self):
        future, oracle, _ = self._setup()
        future.deposit("g", 10.0)
        self._grow(oracle, heights=3)
        future.issue({"g", "b"}, 1, 1, 8, 8, fee=0.0)
        with pytest.raises(ExpiryNotReachedError):
            future.redeem("b")
        assert future.state.phase is FuturePhase.ISSUED

    def test_signature_checks(self):
        future, oracle, _ = self._setup()
        with pytest.raises(BadSignatureError):
            future.deposit("b", 10.0)
        future.deposit("g", 10.0)
        with pytest.raises(BadSignatureError):
            future.recover("b")
        with pytest.raises(BadSignatureError):
            future.issue({"g"}, 1, 1, 5, 5, fee=0.0)
        self._grow(oracle)
        future.issue({"g", "b"}, 1, 1, 5, 5, fee=0.0)
        with pytest.raises(BadSignatureError):
            future.redeem("g")

    def test_every_illegal_phase_transition_rejected(self):
        methods = {
            "deposit": lambda f: f.deposit("g", 5.0),
            "recover": lambda f: f.recover("g"),
            "issue": lambda f: f.issue({"g", "b"}, 0, 0, 2, 2, fee=0.0),
            "redeem": lambda f: f.redeem("b"),
        }
        legal = {
            FuturePhase.EMPTY: {"deposit"},
            FuturePhase.FUNDED: {"recover", "issue"},
            FuturePhase.ISSUED: {"redeem"},
            FuturePhase.REDEEMED: set(),
            FuturePhase.RECOVERED: set(),
        }

        def in_phase(phase):
            future, oracle, _ = self._setup()
            if phase is FuturePhase.EMPTY:
                return future
            future.deposit("g", 10.0)
            if phase is FuturePhase.FUNDED:
                return future
            if phase is FuturePhase.RECOVERED:
                future.recover("g")
                return future
            self._grow(oracle)
            future.issue({"g", "b"}, 1, 1, 5, 5, fee=0.0)
            if phase is FuturePhase.ISSUED:
                return future
            future.redeem("b")
            return future

        for phase, allowed in legal.items():
            for name, call in methods.items():
                if name in allowed:
                    continue
                future = in_phase(phase)
                assert future.state.phase is phase
                with pytest.raises(WrongPhaseError):
                    call(future)

    def test_price_doubling_doubles_payout(self):
        flat, oracle_flat, _ = self._setup()
        flat.deposit("g", 10.0)
        self._grow(oracle_flat, heights=6, ratio_shift=1.0)
        flat.issue({"g", "b"}, 1, 1, 5, 5, fee=0.0)
        flat_payout = flat.redeem("b")

        moved, oracle_moved, _ = self._setup()
        moved.deposit("g", 10.0)
        # Chain B difficulty doubles by expiry: its coin price doubled.
        self._grow(oracle_moved, heights=6, ratio_shift=2 ** (1 / 5))
        moved.issue({"g", "b"}, 1, 1, 5, 5, fee=0.0)
        moved_payout = moved.redeem("b")
        assert moved_payout == pytest.approx(2 * flat_payout, rel=0.01)

    def test_insufficient_deposit_blocks_redeem(self):
        future, oracle, _ = self._setup(host_difficulty=100,
                                        foreign_difficulty=400)
        future.deposit("g", 1.0)  # payout will be ~4
        self._grow(oracle)
        future.issue({"g", "b"}, 1, 1, 5, 5, fee=0.0)
        with pytest.raises(InsufficientDepositError):
            future.redeem("b")


def margin_future_setup(issue=(2, 2), expiry=(8, 8), confirmations=3,
                        quantity_a=4.0, quantity_b=1.0, multiplier=0.5,
                        drift_b=1.0):
    host_genesis = genesis_header(SPACE, SPACE.size // 400)
    foreign_genesis = genesis_header(SPACE, SPACE.size // 100)
    ledger_a = Ledger({"alice": 50.0, "bob": 50.0})
    ledger_b = Ledger({"alice": 50.0, "bob": 50.0})
    contract = MarginFutureContract(
        "mf", "alice", "bob", SPACE, StepBoundRule(SPACE), StepBoundRule(SPACE),
        host_genesis, foreign_genesis, coins_per_block_a=1.0,
        coins_per_block_b=1.0, quantity_a=quantity_a, quantity_b=quantity_b,
        margin_multiplier=multiplier, confirmations=confirmations,
        issue_heights=issue, expiry_heights=expiry,
        ledger_a=ledger_a, ledger_b=ledger_b)

    def chains(n_blocks, drift=drift_b):
        host = [host_genesis]
        for _ in range(n_blocks):
            prev = host[-1]
            host.append(mine_header(SPACE, prev, prev.target,
                                    prev.timestamp + 600.0))
        foreign = [foreign_genesis]
        for _ in range(n_blocks):
            prev = foreign[-1]
            target = int(round(prev.target / drift ** (1 / max(n_blocks, 1))))
            foreign.append(mine_header(SPACE, prev, target,
                                       prev.timestamp + 600.0))
        return host, foreign

    return contract, ledger_a, ledger_b, chains


class TestMarginFuture:
    def test_flat_rate_returns_margins(self):
        contract, ledger_a, ledger_b, chains = margin_future_setup()
        contract.open()
        host, foreign = chains(12, drift=1.0)
        contract.submit_headers(host, foreign)
        transfers = contract.settle()
        assert contract.state.phase is MarginPhase.SETTLED
        assert transfers == {"A": 0.0, "B": 0.0}
        assert ledger_a.balance("alice") == pytest.approx(50.0)
        assert ledger_b.balance("bob") == pytest.approx(50.0)

    def test_margin_call_caps_payout(self):
        # Issue at genesis (ratio 0.25); total drift 8 over 12 blocks puts
        # the expiry ratio at 0.25 * 8^(8/12) = 1.0, so the owed delta is
        # 1 * (1.0 - 0.25) = 0.75 in coin A against margin_a = 4 * 0.125 =
        # 0.5: payout 1.5x margin -> margin call, loser pays margin only.
        contract, ledger_a, ledger_b, chains = margin_future_setup(
            issue=(0, 0), quantity_a=4.0, quantity_b=1.0, multiplier=0.125)
        contract.open()
        host, foreign = chains(12, drift=8.0)
        contract.submit_headers(host, foreign)
        transfers = contract.settle()
        assert contract.state.phase is MarginPhase.MARGIN_CALLED
        assert transfers["A"] == pytest.approx(0.5)  # full margin, no more
        assert ledger_a.balance("alice") == pytest.approx(49.5)
        assert ledger_a.balance("bob") == pytest.approx(50.5)

    def test_insufficient_confirmations(self):
        contract, _, _, chains = margin_future_setup(expiry=(8, 8),
                                                     confirmations=3)
        contract.open()
        host, foreign = chains(10)  # needs 8 + 3 = 11
        with pytest.raises(InsufficientConfirmationsError):
            contract.submit_headers(host, foreign)

    def test_bad_header_chain_rejected(self):
        contract, _, _, chains = margin_future_setup()
        contract.open()
        host, foreign = chains(12)
        foreign[5] = dataclasses.replace(foreign[5], nonce=foreign[5].nonce + 1)
        with pytest.raises(BadHeaderChainError):
            contract.submit_headers(host, foreign)

    def test_wrong_phase_ordering(self):
        contract, _, _, chains = margin_future_setup()
        host, foreign = chains(12)
        with pytest.raises(WrongPhaseError):
            contract.submit_headers(host, foreign)
        with pytest.raises(WrongPhaseError):
            contract.settle()
        contract.open()
        with pytest.raises(WrongPhaseError):
            contract.open()
        with pytest.raises(WrongPhaseError):
            contract.settle()
        contract.submit_headers(host, foreign)
        contract.settle()
        with pytest.raises(WrongPhaseError):
            contract.settle()


class TestCoinConservation:
    def test_randomized_future_lifecycles_conserve_coins(self):
        rng = np.random.default_rng(99)
        host_template = [genesis_header(SPACE, SPACE.size // 300)]
        for _ in range(5):
            prev = host_template[-1]
            host_template.append(mine_header(SPACE, prev, prev.target,
                                             prev.timestamp + 600.0))
        foreign = [genesis_header(SPACE, SPACE.size // 150)]
        for _ in range(5):
            prev = foreign[-1]
            foreign.append(mine_header(SPACE, prev, prev.target,
                                       prev.timestamp + 600.0))

        for trial in range(1000):
            ledger = Ledger({"g": float(rng.uniform(10, 100)),
                             "b": float(rng.uniform(10, 100))})
            oracle = PriceOracle(SPACE, list(host_template), foreign[0],
                                 StepBoundRule(SPACE), 1.0, 1.0)
            for header in foreign[1:]:
                oracle.update(header)
            future = FutureContract(f"fut{trial}", "g", "b", oracle, ledger)
            total = ledger.total()
            deposit = float(rng.uniform(2.1, 9.0))
            actions = rng.permutation(["deposit", "recover", "issue",
                                       "redeem", "deposit", "issue"])
            for action in actions:
                try:
                    if action == "deposit":
                        future.deposit("g", deposit)
                    elif action == "recover":
                        future.recover("g")
                    elif action == "issue":
                        future.issue({"g", "b"}, 1, 1, 4, 4,
                                     fee=float(rng.uniform(0, 1)))
                    else:
                        future.redeem("b")
                except (WrongPhaseError, InsufficientDepositError,
                        ExpiryNotReachedError):
                    pass
                assert ledger.total() == pytest.approx(total, abs=1e-9)

    def test_margin_future_conserves_both_coins(self):
        rng = np.random.default_rng(7)
        for _ in range(60):
            drift = float(rng.uniform(0.4, 2.5))
            multiplier = float(rng.uniform(0.05, 1.0))
            contract, ledger_a, ledger_b, chains = margin_future_setup(
                quantity_a=float(rng.uniform(0.5, 8.0)),
                quantity_b=float(rng.uniform(0.2, 2.0)),
                multiplier=multiplier)
            total_a, total_b = ledger_a.total(), ledger_b.total()
            contract.open()
            host, foreign = chains(12, drift=drift)
            contract.submit_headers(host, foreign)
            contract.settle()
            assert ledger_a.total() == pytest.approx(total_a, abs=1e-9)
            assert ledger_b.total() == pytest.approx(total_b, abs=1e-9)
            assert ledger_a.balance("mf") == pytest.approx(0.0, abs=1e-9)
            assert ledger_b.balance("mf") == pytest.approx(0.0, abs=1e-9)
