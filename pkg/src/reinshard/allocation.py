"""RL-based PoS block placement.

The winning chain-pair decides where an incoming PoS block goes. Capacity
comes from the storage bound ``K^(A) = floor(G_a / (eta * G_e))``; among the
winner's pseudo chains, stakes and then the inverse reward ``R`` break ties.
When nothing fits, the block waits one round and is then delegated to the
chain-pair with the best Q-value that keeps spare room of its own.

Rationals stay exact wherever the inputs are exact. Every tie is broken by
the lowest pair id.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Hashable, Sequence

from .chain import DEFAULT_K_MAX
from .encoding import parse_fraction
from .errors import (
    BadProfile,
    DegenerateProfile,
    EmptyValidatorSet,
    EmptyWindow,
    NoDelegate,
    ZeroLearningRate,
)

log = logging.getLogger(__name__)

RATIO_EPSILON = 1e-6
DELEGATE = "delegate"
DISALLOW = "disallow"
ACTIONS = (DELEGATE, DISALLOW)


def _exact(x):
    if isinstance(x, bool):
        raise TypeError("boolean is not a numeric reward")
    if isinstance(x, int):
        return Fraction(x)
    return x


# ---------------------------------------------------------------- rewards

def extra_capacity(storage_avail: int, pseudo_ids: int, storage_per_block: int) -> int:
    """Additional blocks one pseudo ID can take: floor(G_a / (eta * G_e)), or 0 if eta*G_e > G_a."""
    if pseudo_ids <= 0 or storage_per_block <= 0:
        raise BadProfile("pseudo ID count and per-block storage must be positive")
    need = pseudo_ids * storage_per_block
    if need > storage_avail:
        return 0
    return storage_avail // need


def power_reward(k: int, ratios: Sequence[float], eps: float = RATIO_EPSILON) -> float:
    """omega = K / sum_j ln(1 / (1 - O_a/O_e)_j), each ratio clamped to [eps, 1 - eps]."""
    if k == 0:
        raise EmptyWindow("no blocks in the reward window")
    if len(ratios) != k:
        raise ValueError(f"expected {k} earning ratios, got {len(ratios)}")
    total = 0.0
    for r in ratios:
        r = float(r)
        if not eps <= r <= 1 - eps:
            clamped = min(max(r, eps), 1 - eps)
            log.warning("earning ratio %r clamped to %r", r, clamped)
            r = clamped
        total += math.log(1.0 / (1.0 - r))
    return k / total


def growth_reward(theta_prev, delta_prev, t: int):
    """theta_t = theta_{t-1} * (1 + delta_{t-1})^t."""
    if t < 1:
        raise ValueError("t must be >= 1")
    return _exact(theta_prev) * (1 + _exact(delta_prev)) ** t


def growth_ratio(actual_appends: int, expected_appends: int) -> Fraction:
    if expected_appends <= 0:
        raise ValueError("expected appends must be positive")
    return Fraction(actual_appends, expected_appends)


def selection_reward(theta, omega, gamma=1):
    """R = 1/theta + gamma/omega; the larger R marks the preferred chain."""
    theta, omega, gamma = _exact(theta), _exact(omega), _exact(gamma)
    if theta == 0 or omega == 0:
        raise DegenerateProfile("theta and omega must be non-zero")
    return 1 / theta + gamma / omega


def delegation_reward(theta, omega, gamma=1):
    """R' = theta + gamma * omega."""
    return _exact(theta) + _exact(gamma) * _exact(omega)


# ---------------------------------------------------------------- profiles

@dataclass(frozen=True)
class NodeProfile:
    pseudo_limit: int = 1  # eta_s
    pseudo_used: int = 1  # eta_x
    storage_avail: int = 0  # G_a
    storage_per_block: int = 1  # G_e
    stakes: int = 0  # S_a
    power: Fraction = Fraction(1)  # omega
    growth: Fraction = Fraction(1)  # theta
    earn_actual: Fraction = Fraction(0)
    earn_expected: Fraction = Fraction(1)
    growth_rate: Fraction = Fraction(0)  # delta
    coupling: Fraction = Fraction(1)  # gamma

    def __post_init__(self):
        if not 0 <= self.coupling <= 1:
            raise BadProfile("coupling gamma must lie in [0, 1]")

    @property
    def selection(self):
        return selection_reward(self.growth, self.power, self.coupling)

    @property
    def delegation(self):
        return delegation_reward(self.growth, self.power, self.coupling)


@dataclass(frozen=True)
class PseudoChain:
    """One sub-chain the winner can place into; index 0 is its own sub-chain."""

    pair_id: Hashable
    strength: int  # current sub-chain length
    stakes: int
    growth: Fraction = Fraction(1)
    power: Fraction = Fraction(1)
    coupling: Fraction = Fraction(1)
    storage_avail: int = 0
    storage_per_block: int = 1

    @property
    def selection(self):
        return selection_reward(self.growth, self.power, self.coupling)


@dataclass(frozen=True)
class Validator:
    pair_id: Hashable
    profile: NodeProfile
    chains: tuple = ()
    reward: Fraction | None = None  # R' at t; derived from the profile when omitted
    pseudo_rate: Fraction = Fraction(0)
    pending: bool = False

    def __post_init__(self):
        object.__setattr__(self, "chains", tuple(self.chains))
        if self.reward is None:
            object.__setattr__(self, "reward", self.profile.delegation)

    @property
    def pseudo_ids(self) -> int:
        return max(1, len(self.chains))

    def chain_capacity(self, j: int, pseudo_ids: int | None = None) -> int:
        eta = pseudo_ids or self.pseudo_ids
        if j == 0:
            p = self.profile
            return extra_capacity(p.storage_avail, eta, p.storage_per_block)
        c = self.chains[j]
        return extra_capacity(c.storage_avail, eta, c.storage_per_block)

    def strength(self, j: int = 0) -> int:
        return self.chains[j].strength if self.chains else 0

    def residual_capacity(self, k_cap: int = DEFAULT_K_MAX) -> int:
        return max(0, min(self.chain_capacity(0), k_cap - self.strength(0)))


def valid_pseudo_rate(rate) -> bool:
    return rate is not None and parse_fraction(rate) >= 0


def mean_reward(rewards: Sequence) -> Fraction:
    if not rewards:
        raise EmptyValidatorSet("no rewards to average")
    return sum((_exact(r) for r in rewards), Fraction(0)) / len(rewards)


def validator_list(validators: Sequence[Validator], mean_prev) -> list:
    """Pairs with R' >= previous mean, storage room, eta_x <= eta_s, a valid alpha_m, not pending."""
    listed = []
    for v in validators:
        p = v.profile
        if v.pending or not valid_pseudo_rate(v.pseudo_rate):
            continue
        if p.pseudo_used > p.pseudo_limit:
            continue
        if extra_capacity(p.storage_avail, p.pseudo_limit, p.storage_per_block) <= 0:
            continue
        if _exact(v.reward) >= _exact(mean_prev):
            listed.append(v.pair_id)
    if not listed:
        raise EmptyValidatorSet("no chain-pair qualifies as validator")
    return listed


# ---------------------------------------------------------------- Q-learning

def capacity_bucket(capacity: int) -> int:
    return min(max(capacity, 0), 3)


@dataclass
class QTable:
    reserve_prob: Fraction = Fraction(1)  # P_x = gamma
    entries: dict = field(default_factory=dict)

    def get(self, state, action=DELEGATE):
        return self.entries.get((state, action), Fraction(0))

    def to_json(self) -> str:
        rows = [
            {"state": [str(s) if not isinstance(s, bytes) else s.hex() for s in state],
             "action": action, "q": str(q)}
            for (state, action), q in sorted(self.entries.items(), key=lambda kv: repr(kv[0]))
        ]
        return json.dumps({"reserve_prob": str(self.reserve_prob), "entries": rows}, sort_keys=True)


def q_update(qtable: QTable, state, action, reward, delta, next_max) -> QTable:
    """Q_t(s,a) = Q_{t-1}(s,a) + delta * (R' + P_x * next_max), delta clamped to (0, 1]."""
    delta = _exact(delta)
    if delta == 0:
        raise ZeroLearningRate("learning rate delta must be non-zero")
    if delta < 0:
        raise ValueError("growth ratio delta cannot be negative")
    if delta > 1:
        log.info("growth ratio %s above 1 clamped to 1 for the Q update", delta)
        delta = Fraction(1)
    key = (state, action)
    qtable.entries[key] = qtable.get(state, action) + delta * (_exact(reward) + qtable.reserve_prob * _exact(next_max))
    return qtable


def choose_delegate(qtable: QTable, candidates: Sequence[tuple], action=DELEGATE):
    """argmax_c Q((c, bucket(capacity_c - 1)), action) over candidates keeping spare room."""
    best = None
    for pair_id, capacity in candidates:
        residual = capacity - 1
        if residual <= 0:
            continue
        key = (qtable.get((pair_id, capacity_bucket(residual)), action), pair_id)
        if best is None or key[0] > best[0] or (key[0] == best[0] and key[1] < best[1]):
            best = key
    if best is None:
        raise NoDelegate("no candidate keeps spare capacity after accepting")
    return best[1]


# ---------------------------------------------------------------- placement

class Outcome(str, enum.Enum):
    PLACED = "placed"
    WAITED = "waited"
    DELEGATED = "delegated"


class Branch(str, enum.Enum):
    NO_VALIDATORS = "no_validators"
    PSEUDO_LIMIT = "pseudo_limit_exceeded"
    NO_CAPACITY = "no_extra_capacity"
    NO_CANDIDATE = "no_candidate"
    SINGLE_CANDIDATE = "single_candidate"
    MAX_STAKES = "max_stakes"
    MAX_REWARD = "max_reward"
    DIRECT = "direct"
    SUB_CHAIN_FULL = "sub_chain_full"


@dataclass(frozen=True)
class AllocationDecision:
    outcome: Outcome
    reason: Branch
    winner: Hashable | None = None
    target_pair: Hashable | None = None
    pseudo_id: int | None = None

    def to_log(self, t) -> dict:
        def fmt(x):
            return x.hex() if isinstance(x, bytes) else x
        return {"t": t, "branch": self.reason.value, "outcome": self.outcome.value,
                "winner": fmt(self.winner), "target": fmt(self.target_pair), "pseudo_id": self.pseudo_id}


def pick_winner(validators: Sequence[Validator], leader=None) -> Validator:
    if leader is not None:
        for v in validators:
            if v.pair_id == leader:
                return v
        raise KeyError(f"leader {leader!r} is not a validator")
    return min(validators, key=lambda v: (-_exact(v.reward), v.pair_id))


def wait_or_delegate(winner: Validator | None, validators: Sequence[Validator], reason: Branch, *,
                     qtable: QTable | None, allow_delegate: bool, k_cap: int) -> AllocationDecision:
    winner_id = winner.pair_id if winner else None
    if not allow_delegate or qtable is None:
        return AllocationDecision(Outcome.WAITED, reason, winner_id)
    candidates = [(v.pair_id, v.residual_capacity(k_cap)) for v in validators if v.pair_id != winner_id]
    try:
        target = choose_delegate(qtable, candidates)
    except NoDelegate:
        return AllocationDecision(Outcome.WAITED, reason, winner_id)
    return AllocationDecision(Outcome.DELEGATED, reason, winner_id, target)


def allocate_pos_block(validators: Sequence[Validator], leader=None, *, qtable: QTable | None = None,
                       allow_delegate: bool = False, k_cap: int = DEFAULT_K_MAX) -> AllocationDecision:
    """Place one incoming PoS block by the winner's branch tree.

    ``allow_delegate`` is set by the caller once the block has already waited
    a round; until then an unplaceable block just waits.
    """
    def defer(winner, reason):
        return wait_or_delegate(winner, validators, reason, qtable=qtable,
                                allow_delegate=allow_delegate, k_cap=k_cap)

    if not validators:
        return AllocationDecision(Outcome.WAITED, Branch.NO_VALIDATORS)
    winner = pick_winner(validators, leader)
    eta_x = winner.pseudo_ids
    if eta_x > winner.profile.pseudo_limit:
        return defer(winner, Branch.PSEUDO_LIMIT)
    k_extra = winner.chain_capacity(0, eta_x)
    if k_extra == 0:
        return defer(winner, Branch.NO_CAPACITY)
    bound = k_extra + winner.strength(0)

    def place(j, reason):
        return AllocationDecision(Outcome.PLACED, reason, winner.pair_id, winner.chains[j].pair_id, j)

    if k_extra > 1 and eta_x > 1:
        fits = []
        for j, chain in enumerate(winner.chains):
            cap = winner.chain_capacity(j, eta_x)
            if cap >= 1 and chain.strength < k_cap and cap + chain.strength <= bound:
                fits.append(j)
        if not fits:
            return defer(winner, Branch.NO_CANDIDATE)
        if len(fits) == 1:
            return place(fits[0], Branch.SINGLE_CANDIDATE)
        top = max(winner.chains[j].stakes for j in fits)
        tied = [j for j in fits if winner.chains[j].stakes == top]
        if len(tied) == 1:
            return place(tied[0], Branch.MAX_STAKES)
        best = min(tied, key=lambda j: (-_exact(winner.chains[j].selection), winner.chains[j].pair_id))
        return place(best, Branch.MAX_REWARD)
    if k_extra == 1 or eta_x == 1:
        if winner.strength(0) >= k_cap:
            return defer(winner, Branch.SUB_CHAIN_FULL)
        return place(0, Branch.DIRECT)
    return defer(winner, Branch.NO_CAPACITY)


# ---------------------------------------------------------------- batches

@dataclass(frozen=True)
class IncomingBlock:
    block_id: Hashable
    size: int = 1
    arrival: int = 0


def order_incoming(blocks: Sequence[IncomingBlock], parallel: bool = False) -> list:
    """FCFS for a batch; decreasing memory footprint for parallel instances."""
    if parallel:
        return sorted(blocks, key=lambda b: (-b.size, b.arrival, b.block_id))
    return sorted(blocks, key=lambda b: (b.arrival, b.block_id))


def apply_placement(validator: Validator, j: int) -> Validator:
    """Consume one slot of chain ``j`` after a placement."""
    chains = list(validator.chains)
    chain = chains[j]
    profile = validator.profile
    if j == 0:
        profile = replace(profile, storage_avail=max(0, profile.storage_avail - profile.storage_per_block))
        chains[0] = replace(chain, strength=chain.strength + 1)
    else:
        chains[j] = replace(chain, strength=chain.strength + 1,
                            storage_avail=max(0, chain.storage_avail - chain.storage_per_block))
    return replace(validator, profile=profile, chains=tuple(chains))


def allocate_batch(blocks: Sequence[IncomingBlock], validators: Sequence[Validator], leader=None, *,
                   parallel: bool = False, k_cap: int = DEFAULT_K_MAX) -> list[tuple]:
    """Allocate a batch in FCFS (or memory) order; returns [(block_id, decision)]."""
    current = list(validators)
    results = []
    for block in order_incoming(blocks, parallel):
        decision = allocate_pos_block(current, leader, k_cap=k_cap)
        if decision.outcome is Outcome.PLACED:
            for i, v in enumerate(current):
                if v.pair_id == decision.winner:
                    current[i] = apply_placement(v, decision.pseudo_id)
        results.append((block.block_id, decision))
    return results
