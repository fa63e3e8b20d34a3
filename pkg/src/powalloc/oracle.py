"""Header-chain light client, price-ratio oracle, and contract state machines.

Everything here runs in-process and deterministically. Hashing is pluggable
through a HashSpace so tests can use a 2**24 space where puzzles are solvable
at desk scale. Signatures are modeled as authenticated caller identities; the
contracts are state machines, not chain deployments. Each contract instance
is single-owner with serialized method calls; distinct instances are
independent.

Submitted chains are validated headers-only (linkage, PoW, and a declared-
target rule), so a counterparty who can cheaply fabricate slow timestamps or
falling difficulty is bounded, not eliminated, by the target rule's step
limits and the confirmation depth; see the margin-future notes.

Contracts:

* PriceOracle  - maintains a validated header chain for a foreign chain B and
  answers price-ratio queries from stored difficulties.
* SpotContract - a repeating hash puzzle whose solve-round count reveals the
  cross-algorithm hash price ratio sigma_A / sigma_B. Note the direction: the
  PriceOracle query expects sigma_B / sigma_A, so compose with the reciprocal.
* FutureContract - pays the beneficiary coins A equal to the value of one
  coin B at expiry, priced through the oracle.
* MarginFutureContract - a margined future settled from submitted header
  chains; the payout interpretation (value delta of the B leg in A coins,
  capped at posted margin) is documented where it is computed.
"""

from __future__ import annotations

import hashlib
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class HashSpace:
    """A deterministic hash onto integers in [0, size)."""

    size: int
    label: str = "sha256"

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("hash space must have size >= 2")

    def digest(self, *parts: object) -> int:
        payload = "|".join(str(p) for p in parts).encode("utf-8")
        value = int.from_bytes(hashlib.sha256(payload).digest(), "big")
        return value % self.size


def small_hash_space(bits: int = 24) -> HashSpace:
    """Small space so expected work per block stays desk-scale."""
    return HashSpace(size=2**bits, label=f"sha256-mod-2^{bits}")


def full_hash_space() -> HashSpace:
    """The full 256-bit digest space of a production chain."""
    return HashSpace(size=2**256, label="sha256")


@dataclass(frozen=True)
class BlockHeader:
    """One header-chain entry.

    ``target`` is the header's declared target, which (per the light-client
    rule here) applies to the *next* block; a submitted header must hash below
    the previous header's target. ``difficulty`` is the expected hashes per
    block implied by the declared target.
    """

    height: int
    prev_hash: int
    target: int
    nonce: int
    timestamp: float
    difficulty: float

    def __post_init__(self):
        if self.height < 0:
            raise ValueError("height must be >= 0")
        if self.target < 1:
            raise ValueError("target must be >= 1")


def header_hash(space: HashSpace, header: BlockHeader) -> int:
    return space.digest("hdr", header.height, header.prev_hash, header.target,
                        header.nonce, header.timestamp)


def make_header(space: HashSpace, height: int, prev_hash: int, target: int,
                nonce: int, timestamp: float) -> BlockHeader:
    return BlockHeader(height=height, prev_hash=prev_hash, target=target,
                       nonce=nonce, timestamp=timestamp,
                       difficulty=space.size / target)


def genesis_header(space: HashSpace, target: int, timestamp: float = 0.0) -> BlockHeader:
    return make_header(space, height=0, prev_hash=0, target=target,
                       nonce=0, timestamp=timestamp)


class HeaderRejection(Enum):
    BAD_LINK = "BadLink"
    BAD_POW = "BadPoW"
    BAD_DIFFICULTY = "BadDifficulty"


class TargetRule(ABC):
    """Validates the target a new header declares, given the chain so far."""

    @abstractmethod
    def valid_target(self, headers: Sequence[BlockHeader],
                     new_header: BlockHeader) -> bool:
        ...


class WindowTargetRule(TargetRule):
    """Deterministic adjustment every `window` blocks from observed times.

    Fully recomputable from stored headers, so a light client can verify the
    declared target exactly. With window=1 every block adjusts from the last
    inter-arrival.
    """

    def __init__(self, space: HashSpace, window: int, block_time: float,
                 clamp: float = 4.0):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.space = space
        self.window = window
        self.block_time = block_time
        self.clamp = clamp

    def next_target(self, headers: Sequence[BlockHeader],
                    new_timestamp: float) -> int:
        prev = headers[-1]
        height = prev.height + 1
        if height % self.window != 0 or height < self.window:
            return prev.target
        span_start = headers[height - self.window].timestamp
        mean_time = (new_timestamp - span_start) / self.window
        # Target scales opposite to difficulty: slow blocks raise the target.
        raw = prev.target * mean_time / self.block_time
        raw = min(max(raw, prev.target / self.clamp), prev.target * self.clamp)
        return int(min(max(round(raw), 1), self.space.size))

    def valid_target(self, headers: Sequence[BlockHeader],
                     new_header: BlockHeader) -> bool:
        return new_header.target == self.next_target(headers, new_header.timestamp)


class StepBoundRule(TargetRule):
    """Accepts any declared target within a multiplicative step of the last.

    For chains whose difficulty controller is not recomputable from headers
    alone (e.g. simulator chains with the idealized hash-rate-observing
    adjustment); bounds how fast a submitted chain may claim difficulty moved.
    """

    def __init__(self, space: HashSpace, max_step: float = 4.0):
        if max_step < 1.0:
            raise ValueError("max_step must be >= 1")
        self.space = space
        self.max_step = max_step

    def valid_target(self, headers: Sequence[BlockHeader],
                     new_header: BlockHeader) -> bool:
        prev = headers[-1].target
        lo = prev / self.max_step
        hi = prev * self.max_step
        return 1 <= new_header.target <= self.space.size and lo <= new_header.target <= hi


def mine_header(space: HashSpace, prev: BlockHeader, declared_target: int,
                timestamp: float, start_nonce: int = 0) -> BlockHeader:
    """Brute-force a nonce so the new header hashes below prev's target."""
    prev_digest = header_hash(space, prev)
    nonce = start_nonce
    while True:
        candidate = make_header(space, prev.height + 1, prev_digest,
                                declared_target, nonce, timestamp)
        if header_hash(space, candidate) < prev.target:
            return candidate
        nonce += 1


def build_chain(space: HashSpace, rule: WindowTargetRule, initial_target: int,
                block_times: Sequence[float], genesis_time: float = 0.0) -> list[BlockHeader]:
    """Mine a whole header chain from a sequence of inter-arrival times."""
    headers = [genesis_header(space, initial_target, genesis_time)]
    now = genesis_time
    for dt in block_times:
        now += dt
        target = rule.next_target(headers, now)
        headers.append(mine_header(space, headers[-1], target, now))
    return headers


class PriceOracle:
    """Light client for chain B plus Eq.-based price-ratio queries.

    ``host_headers`` is a live reference to chain A's header list (the oracle
    runs on chain A and reads it natively).
    """

    def __init__(self, space: HashSpace, host_headers: list[BlockHeader],
                 genesis_b: BlockHeader, rule: TargetRule,
                 coins_per_block_a: float, coins_per_block_b: float):
        self.space = space
        self.host_headers = host_headers
        self.headers_b: list[BlockHeader] = [genesis_b]
        self.rule = rule
        self.coins_per_block_a = coins_per_block_a
        self.coins_per_block_b = coins_per_block_b

    def update(self, header: BlockHeader) -> HeaderRejection | None:
        """Append a chain-B header if it links, meets PoW, and obeys the DAA.

        Returns None on success; on rejection the state is unchanged.
        """
        tip = self.headers_b[-1]
        if header.prev_hash != header_hash(self.space, tip) or header.height != tip.height + 1:
            return HeaderRejection.BAD_LINK
        if header_hash(self.space, header) >= tip.target:
            return HeaderRejection.BAD_POW
        if not self.rule.valid_target(self.headers_b, header):
            return HeaderRejection.BAD_DIFFICULTY
        self.headers_b.append(header)
        return None

    def query(self, height_a: int, height_b: int, hash_price_ratio: float) -> float:
        """P_B / P_A when the chains were at the given heights.

        ``hash_price_ratio`` is sigma_B / sigma_A. Unknown heights (not yet
        mined, or negative) raise UnknownHeightError.
        """
        if not 0 <= height_a < len(self.host_headers):
            raise UnknownHeightError("A", height_a)
        if not 0 <= height_b < len(self.headers_b):
            raise UnknownHeightError("B", height_b)
        d_a = self.host_headers[height_a].difficulty
        d_b = self.headers_b[height_b].difficulty
        return (hash_price_ratio
                * (self.coins_per_block_a / self.coins_per_block_b)
                * (d_b / d_a))


class UnknownHeightError(KeyError):
    def __init__(self, chain: str, height: int):
        self.chain = chain
        self.height = height
        super().__init__(f"chain {chain} height {height} has not been mined")


class Ledger:
    """Account balances for one coin; transfers preserve the total."""

    def __init__(self, balances: dict[str, float] | None = None):
        self.balances: dict[str, float] = dict(balances or {})

    def balance(self, account: str) -> float:
        return self.balances.get(account, 0.0)

    def mint(self, account: str, amount: float) -> None:
        self.balances[account] = self.balance(account) + amount

    def transfer(self, src: str, dst: str, amount: float) -> None:
        if amount < 0:
            raise ValueError("transfer amount must be >= 0")
        if self.balance(src) + 1e-12 < amount:
            raise ValueError(f"insufficient funds in {src!r}")
        self.balances[src] = self.balance(src) - amount
        self.balances[dst] = self.balance(dst) + amount

    def total(self) -> float:
        return sum(self.balances.values())


@dataclass
class SpotState:
    """Mutable state of the spot hash-price contract.

    ``target``/``target_step``/``round_no`` describe the puzzle currently
    running. The ``prev_*`` fields snapshot the inputs the price formula needs
    from the last completed epoch: the final target of the epoch before it,
    that epoch's step, and its final round count.
    """

    step_divisor: float  # j: step = epoch base target / j
    target_decay: float  # alpha: next epoch starts at alpha * final target
    blocks_per_round: int  # N host blocks per round
    reward: float  # coins A per solve
    space_size: int
    fee_balance: float = 0.0
    round_no: int = 1
    target: float = 0.0
    target_step: float = 0.0
    epoch_base: float = 0.0  # final target of the previous epoch / initial S
    prev_base: float = 0.0  # g' in the price formula
    prev_step: float = 0.0  # g_delta'
    prev_rounds: int = 1  # r retained from the last completed epoch
    last_host_height: int = 0
    epochs_completed: int = 0
    last_solve_target: float = 0.0

    def __post_init__(self):
        if self.step_divisor <= 0 or self.target_decay <= 0:
            raise ValueError("step divisor and target decay must be > 0")
        if self.blocks_per_round < 1:
            raise ValueError("blocks_per_round must be >= 1")
        if self.target == 0.0:
            self.target = float(self.space_size)
        if self.target_step == 0.0:
            self.target_step = self.space_size / self.step_divisor
        if self.epoch_base == 0.0:
            # The first epoch starts at the full space; expressing that start
            # as decay * base keeps the price formula uniform across epochs.
            self.epoch_base = self.space_size / self.target_decay
        if self.prev_base == 0.0:
            self.prev_base = float(self.space_size)
        if self.prev_step == 0.0:
            self.prev_step = self.space_size / self.step_divisor


class SpotContract:
    """Repeating puzzle revealing the hash price of algorithm B in coin A.

    Each epoch starts at a fraction of the previous epoch's final target and
    raises the target every ``blocks_per_round`` host blocks until someone
    solves; the final round count prices the foreign hash.
    """

    def __init__(self, space: HashSpace, host_headers: list[BlockHeader],
                 coins_per_block_a: float, step_divisor: float,
                 target_decay: float, blocks_per_round: int, reward: float):
        self.space = space
        self.host_headers = host_headers
        self.coins_per_block_a = coins_per_block_a
        self.state = SpotState(step_divisor=step_divisor,
                               target_decay=target_decay,
                               blocks_per_round=blocks_per_round,
                               reward=reward,
                               space_size=space.size,
                               last_host_height=len(host_headers) - 1)

    def solution_hash(self, payout_account: str, nonce: int) -> int:
        tip_digest = header_hash(self.space, self.host_headers[-1])
        return self.space.digest("spot", tip_digest, nonce, payout_account)

    def solve(self, payout_account: str, nonce: int, ledger: Ledger) -> bool:
        """Submit a puzzle solution; invalid submissions are silent no-ops."""
        s = self.state
        if self.solution_hash(payout_account, nonce) >= s.target:
            return False
        s.last_solve_target = s.target
        s.prev_base = s.epoch_base
        s.prev_step = s.target_step
        s.prev_rounds = s.round_no
        s.epochs_completed += 1
        # Start the next epoch.
        s.epoch_base = s.target
        s.round_no = 1
        s.target_step = s.target / s.step_divisor
        s.target = min(s.target_decay * s.target, float(s.space_size))
        s.last_host_height = len(self.host_headers) - 1
        ledger.mint(payout_account, s.reward)
        return True

    def on_host_block(self) -> None:
        """Runs once per host block; advances the round when one expires."""
        s = self.state
        height = len(self.host_headers) - 1
        if height > s.last_host_height + s.blocks_per_round:
            s.last_host_height = height
            s.round_no += 1
            s.target = min(s.target + s.target_step, float(s.space_size))

    def query(self, fee: float) -> float:
        """Latest spot hash price ratio sigma_A / sigma_B.

        Evaluates coins-per-hash on the host chain at its current target
        against coins-per-hash implied by the last completed epoch.
        """
        if fee < 0:
            raise ValueError("fee must be >= 0")
        s = self.state
        s.fee_balance += fee
        host_target = self.host_headers[-1].target
        denominator = s.reward * (s.target_decay * s.prev_base
                                  + s.prev_rounds * s.prev_step)
        return self.coins_per_block_a * host_target / denominator


class FuturePhase(Enum):
    EMPTY = "Empty"
    FUNDED = "Funded"
    ISSUED = "Issued"
    REDEEMED = "Redeemed"
    RECOVERED = "Recovered"


class ContractError(Exception):
    pass


class WrongPhaseError(ContractError):
    pass


class BadSignatureError(ContractError):
    pass


class ExpiryNotReachedError(ContractError):
    pass


class InsufficientDepositError(ContractError):
    pass


class InsufficientConfirmationsError(ContractError):
    pass


class BadHeaderChainError(ContractError):
    pass


@dataclass
class FutureState:
    phase: FuturePhase = FuturePhase.EMPTY
    guarantor: str = ""
    beneficiary: str = ""
    deposit: float = 0.0
    fee: float = 0.0
    issue_heights: tuple[int, int] | None = None
    expiry_heights: tuple[int, int] | None = None


class FutureContract:
    """Delivers coins A worth one coin B at expiry, priced via the oracle.

    The deposit and the issue fee are distinct quantities even though both
    are denominated in coin A.
    """

    def __init__(self, contract_id: str, guarantor: str, beneficiary: str,
                 oracle: PriceOracle, ledger: Ledger,
                 hash_price_ratio: float = 1.0):
        self.account = contract_id
        self.oracle = oracle
        self.ledger = ledger
        self.hash_price_ratio = hash_price_ratio
        self.state = FutureState(guarantor=guarantor, beneficiary=beneficiary)

    def _require_phase(self, *allowed: FuturePhase) -> None:
        if self.state.phase not in allowed:
            raise WrongPhaseError(
                f"method not allowed in phase {self.state.phase.value}")

    def deposit(self, signer: str, amount: float) -> None:
        self._require_phase(FuturePhase.EMPTY)
        if signer != self.state.guarantor:
            raise BadSignatureError("deposit must be signed by the guarantor")
        if amount <= 0:
            raise ValueError("deposit must be > 0")
        self.ledger.transfer(signer, self.account, amount)
        self.state.deposit = amount
        self.state.phase = FuturePhase.FUNDED

    def recover(self, signer: str) -> None:
        self._require_phase(FuturePhase.FUNDED)
        if signer != self.state.guarantor:
            raise BadSignatureError("recover must be signed by the guarantor")
        self.ledger.transfer(self.account, self.state.guarantor, self.state.deposit)
        self.state.deposit = 0.0
        self.state.phase = FuturePhase.RECOVERED

    def issue(self, signers: set[str], issue_height_a: int, issue_height_b: int,
              expiry_height_a: int, expiry_height_b: int, fee: float) -> None:
        self._require_phase(FuturePhase.FUNDED)
        if signers != {self.state.guarantor, self.state.beneficiary}:
            raise BadSignatureError("issue must be signed by both parties")
        if fee < 0:
            raise ValueError("fee must be >= 0")
        if expiry_height_a < issue_height_a or expiry_height_b < issue_height_b:
            raise ValueError("expiry heights must not precede issue heights")
        self.ledger.transfer(self.state.beneficiary, self.state.guarantor, fee)
        self.state.fee = fee
        self.state.issue_heights = (issue_height_a, issue_height_b)
        self.state.expiry_heights = (expiry_height_a, expiry_height_b)
        self.state.phase = FuturePhase.ISSUED

    def redeem(self, signer: str) -> float:
        """Pay the beneficiary the A-coin value of one coin B at expiry."""
        self._require_phase(FuturePhase.ISSUED)
        if signer != self.state.beneficiary:
            raise BadSignatureError("redeem must be signed by the beneficiary")
        expiry_a, expiry_b = self.state.expiry_heights
        if (expiry_a >= len(self.oracle.host_headers)
                or expiry_b >= len(self.oracle.headers_b)):
            raise ExpiryNotReachedError("expiry headers do not exist yet")
        payout = self.oracle.query(expiry_a, expiry_b, self.hash_price_ratio)
        if payout > self.state.deposit + 1e-12:
            raise InsufficientDepositError(
                f"payout {payout} exceeds deposit {self.state.deposit}")
        self.ledger.transfer(self.account, self.state.beneficiary, payout)
        self.ledger.transfer(self.account, self.state.guarantor,
                             self.state.deposit - payout)
        self.state.deposit = 0.0
        self.state.phase = FuturePhase.REDEEMED
        return payout


class MarginPhase(Enum):
    OPEN = "Open"
    MARGIN_CALLED = "MarginCalled"
    SETTLED = "Settled"


@dataclass
class MarginFutureState:
    phase: MarginPhase
    party_a: str
    party_b: str
    quantity_a: float
    quantity_b: float
    margin_multiplier: float
    confirmations: int  # z
    issue_heights: tuple[int, int]
    expiry_heights: tuple[int, int]
    margin_a: float = 0.0  # coin A posted by party_a
    margin_b: float = 0.0  # coin B posted by party_b
    submitted: bool = False


class MarginFutureContract:
    """Margined PoW-settled future over two submitted header chains.

    Settlement interpretation (the source design is an explicit sketch): the
    contract tracks the A-coin value of the B leg, delta = quantity_b *
    (ratio_at_checkpoint - ratio_at_issue). A positive delta is owed by party
    A from its coin-A margin; a negative delta is owed by party B from its
    coin-B margin after converting at the checkpoint ratio. If at any
    checkpoint the amount owed exceeds the posted margin, the contract closes
    at margin (a margin call).
    """

    def __init__(self, contract_id: str, party_a: str, party_b: str,
                 space: HashSpace, rule_a: TargetRule, rule_b: TargetRule,
                 genesis_a: BlockHeader, genesis_b: BlockHeader,
                 coins_per_block_a: float, coins_per_block_b: float,
                 quantity_a: float, quantity_b: float,
                 margin_multiplier: float, confirmations: int,
                 issue_heights: tuple[int, int], expiry_heights: tuple[int, int],
                 ledger_a: Ledger, ledger_b: Ledger,
                 hash_price_ratio: float = 1.0):
        if margin_multiplier <= 0 or confirmations < 0:
            raise ValueError("bad margin multiplier or confirmation depth")
        self.account = contract_id
        self.space = space
        self.rules = (rule_a, rule_b)
        self.genesis = (genesis_a, genesis_b)
        self.coins_per_block = (coins_per_block_a, coins_per_block_b)
        self.ledgers = (ledger_a, ledger_b)
        self.hash_price_ratio = hash_price_ratio
        self.chain_a: list[BlockHeader] | None = None
        self.chain_b: list[BlockHeader] | None = None
        self.state = MarginFutureState(
            phase=MarginPhase.OPEN, party_a=party_a, party_b=party_b,
            quantity_a=quantity_a, quantity_b=quantity_b,
            margin_multiplier=margin_multiplier, confirmations=confirmations,
            issue_heights=issue_heights, expiry_heights=expiry_heights)
        self._opened = False

    def open(self) -> None:
        """Collect both margins; the contract is live afterwards."""
        if self._opened:
            raise WrongPhaseError("contract already open")
        s = self.state
        s.margin_a = s.quantity_a * s.margin_multiplier
        s.margin_b = s.quantity_b * s.margin_multiplier
        self.ledgers[0].transfer(s.party_a, self.account, s.margin_a)
        self.ledgers[1].transfer(s.party_b, self.account, s.margin_b)
        self._opened = True

    def _validate_chain(self, headers: Sequence[BlockHeader], which: int) -> None:
        genesis = self.genesis[which]
        if not headers or headers[0] != genesis:
            raise BadHeaderChainError("chain must start at the agreed header")
        chain = [genesis]
        rule = self.rules[which]
        for header in headers[1:]:
            tip = chain[-1]
            if header.prev_hash != header_hash(self.space, tip) or header.height != tip.height + 1:
                raise BadHeaderChainError(f"bad link at height {header.height}")
            if header_hash(self.space, header) >= tip.target:
                raise BadHeaderChainError(f"bad PoW at height {header.height}")
            if not rule.valid_target(chain, header):
                raise BadHeaderChainError(f"bad difficulty at height {header.height}")
            chain.append(header)

    def submit_headers(self, headers_a: Sequence[BlockHeader],
                       headers_b: Sequence[BlockHeader]) -> None:
        """Validate both chains light-client style, z past expiry."""
        if not self._opened:
            raise WrongPhaseError("contract not open")
        if self.state.phase is not MarginPhase.OPEN:
            raise WrongPhaseError(f"phase is {self.state.phase.value}")
        s = self.state
        for headers, which, expiry in ((headers_a, 0, s.expiry_heights[0]),
                                       (headers_b, 1, s.expiry_heights[1])):
            tip_height = headers[-1].height if headers else -1
            if tip_height < expiry + s.confirmations:
                raise InsufficientConfirmationsError(
                    f"need {s.confirmations} confirmations past height {expiry}, "
                    f"tip is {tip_height}")
            self._validate_chain(headers, which)
        self.chain_a = list(headers_a)
        self.chain_b = list(headers_b)
        s.submitted = True

    def _ratio_at(self, height_a: int, height_b: int) -> float:
        d_a = self.chain_a[height_a].difficulty
        d_b = self.chain_b[height_b].difficulty
        return (self.hash_price_ratio
                * (self.coins_per_block[0] / self.coins_per_block[1])
                * (d_b / d_a))

    def _checkpoints(self) -> list[tuple[int, int]]:
        s = self.state
        issue_a, issue_b = s.issue_heights
        expiry_a, expiry_b = s.expiry_heights
        span_b = expiry_b - issue_b
        if span_b == 0:
            return [(expiry_a, expiry_b)]
        points = []
        for hb in range(issue_b + 1, expiry_b + 1):
            frac = (hb - issue_b) / span_b
            ha = issue_a + round(frac * (expiry_a - issue_a))
            points.append((ha, hb))
        return points

    def settle(self) -> dict[str, float]:
        """Apply the value delta of the B leg, walking issue -> expiry.

        Returns the transfers made, keyed by ledger ("A" or "B").
        """
        s = self.state
        if not self._opened or not s.submitted:
            raise WrongPhaseError("headers must be submitted before settlement")
        if s.phase is not MarginPhase.OPEN:
            raise WrongPhaseError(f"phase is {s.phase.value}")

        issue_ratio = self._ratio_at(*s.issue_heights)
        transfers = {"A": 0.0, "B": 0.0}
        final_delta = 0.0
        margin_called = False
        for ha, hb in self._checkpoints():
            ratio = self._ratio_at(ha, hb)
            delta = s.quantity_b * (ratio - issue_ratio)
            owed_a = max(delta, 0.0)
            owed_b = max(-delta, 0.0) / ratio  # B-coin equivalent at this checkpoint
            if owed_a > s.margin_a or owed_b > s.margin_b:
                margin_called = True
                final_delta = delta
                break
            final_delta = delta

        if margin_called:
            # Loser pays exactly its posted margin, never more.
            if final_delta > 0:
                transfers["A"] = s.margin_a
            else:
                transfers["B"] = s.margin_b
            s.phase = MarginPhase.MARGIN_CALLED
        else:
            if final_delta > 0:
                transfers["A"] = final_delta
            elif final_delta < 0:
                expiry_ratio = self._ratio_at(*s.expiry_heights)
                transfers["B"] = -final_delta / expiry_ratio
            s.phase = MarginPhase.SETTLED

        self.ledgers[0].transfer(self.account, s.party_b, transfers["A"])
        self.ledgers[0].transfer(self.account, s.party_a, s.margin_a - transfers["A"])
        self.ledgers[1].transfer(self.account, s.party_a, transfers["B"])
        self.ledgers[1].transfer(self.account, s.party_b, s.margin_b - transfers["B"])
        s.margin_a = 0.0
        s.margin_b = 0.0
        return transfers


@dataclass(frozen=True)
class SpotEpochOutcome:
    rounds: int
    solve_target: float
    reported_ratio: float


def _advance_host(space: HashSpace, host: list[BlockHeader],
                  block_time: float) -> None:
    # Host blocks carry a fixed target; only their cadence matters here.
    prev = host[-1]
    host.append(mine_header(space, prev, prev.target,
                            prev.timestamp + block_time))


def run_spot_epochs(contract: SpotContract, n_epochs: int,
                    solver_hash_per_round: float, host_block_time: float,
                    seed: int, max_rounds: int = 10_000) -> list[SpotEpochOutcome]:
    """Stochastic solver: a fixed hash budget is spent on the puzzle per round.

    Each round the probability of finding a solution is
    1 - (1 - target/space)^hashes. Returns one outcome per completed epoch;
    the reported ratio is read back through query() after each solve.
    """
    rng = np.random.default_rng(seed)
    ledger = Ledger({"solver": 0.0})
    outcomes = []
    for _ in range(n_epochs):
        rounds = 0
        while True:
            rounds += 1
            if rounds > max_rounds:
                raise RuntimeError("puzzle unsolved after max_rounds")
            p_solve = 1.0 - (1.0 - contract.state.target / contract.space.size) \
                ** solver_hash_per_round
            if rng.random() < p_solve:
                solve_target = contract.state.target
                _force_solve(contract, "solver", ledger)
                outcomes.append(SpotEpochOutcome(
                    rounds=rounds, solve_target=solve_target,
                    reported_ratio=contract.query(0.0)))
                break
            for _ in range(contract.state.blocks_per_round + 1):
                _advance_host(contract.space, contract.host_headers,
                              host_block_time)
                contract.on_host_block()
    return outcomes


def run_spot_rational_miner(contract: SpotContract, n_epochs: int,
                            true_hash_price_ratio: float,
                            host_coin_price: float, host_block_time: float,
                            max_rounds: int = 10_000) -> list[SpotEpochOutcome]:
    """Threshold solver: solves as soon as the puzzle pays at least as well
    as mining chain B with the same hardware.

    ``true_hash_price_ratio`` is sigma_A / sigma_B in fiat terms. The A-chain
    hash price implied by the host target is sigma_A = k_A P_A g_A / space;
    the miner solves once reward * target / space (coins A per hash, as fiat)
    reaches sigma_B.
    """
    host_target = contract.host_headers[-1].target
    sigma_a = (contract.coins_per_block_a * host_coin_price * host_target
               / contract.space.size)
    sigma_b = sigma_a / true_hash_price_ratio
    ledger = Ledger({"miner": 0.0})
    outcomes = []
    for _ in range(n_epochs):
        rounds = 0
        while True:
            rounds += 1
            if rounds > max_rounds:
                raise RuntimeError("puzzle never became profitable")
            payout_per_hash = (contract.state.reward * host_coin_price
                               * contract.state.target / contract.space.size)
            if payout_per_hash >= sigma_b:
                solve_target = contract.state.target
                _force_solve(contract, "miner", ledger)
                outcomes.append(SpotEpochOutcome(
                    rounds=rounds, solve_target=solve_target,
                    reported_ratio=contract.query(0.0)))
                break
            for _ in range(contract.state.blocks_per_round + 1):
                _advance_host(contract.space, contract.host_headers,
                              host_block_time)
                contract.on_host_block()
    return outcomes


def _force_solve(contract: SpotContract, account: str, ledger: Ledger) -> None:
    """Grind nonces until solve() accepts; desk-scale spaces keep this fast."""
    nonce = 0
    while not contract.solve(account, nonce, ledger):
        nonce += 1


def dump_headers(headers: Sequence[BlockHeader], path: str) -> None:
    """Write headers as JSON lines (prev_hash in hex)."""
    with open(path, "w", encoding="utf-8") as fh:
        for h in headers:
            fh.write(json.dumps({
                "height": h.height,
                "prev_hash": format(h.prev_hash, "x"),
                "target": h.target,
                "nonce": h.nonce,
                "timestamp": h.timestamp,
            }, sort_keys=True) + "\n")


def load_headers(path: str, space: HashSpace) -> list[BlockHeader]:
    """Read a JSON-lines header dump; difficulty is recomputed from targets."""
    headers = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            headers.append(make_header(
                space,
                height=int(doc["height"]),
                prev_hash=int(doc["prev_hash"], 16),
                target=int(doc["target"]),
                nonce=int(doc["nonce"]),
                timestamp=float(doc["timestamp"])))
    return headers
