"""Executable checks for chain growth, chain quality, common prefix and chain wait.

:func:`run_block_tree` produces a round-based trace: honest nodes and one
adversary win block slots in proportion to stake, blocks reach everyone
before the round ends, and honest nodes adopt the longest chain (ties to
the lowest tip digest). The checkers take such traces (or hand-built
fixtures) and return a :class:`Verdict`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from ..encoding import digest_int, tagged_hash, DOMAIN_POS_ID
from ..errors import ConfigError
from ..sim import RngStreams
from ..xshard import TxState


@dataclass(frozen=True)
class PropertyHarnessParams:
    rounds: int = 100  # horizon
    start_round: int = 0  # R_d
    window: int = 40  # L
    k_max: int = 48
    k_extra: int = 8  # K^(A)
    adversary_stake: Fraction = Fraction(0)  # Upsilon
    honest_ratio: Fraction = Fraction(1)  # varrho
    slack: Fraction = Fraction(1, 10)  # epsilon
    honest_nodes: int = 5
    activity: Fraction = Fraction(1, 2)  # chance that some slot is won in a round
    finality_depth: int = 1

    def __post_init__(self):
        ups, rho = Fraction(self.adversary_stake), Fraction(self.honest_ratio)
        object.__setattr__(self, "adversary_stake", ups)
        object.__setattr__(self, "honest_ratio", rho)
        object.__setattr__(self, "slack", Fraction(self.slack))
        object.__setattr__(self, "activity", Fraction(self.activity))
        if not 0 <= ups < 1 or not 0 <= rho <= 1:
            raise ConfigError("stake ratios out of range")
        if ups + rho > 1:
            raise ConfigError("adversarial plus honest stake cannot exceed 1")
        if not 0 < self.slack < 1:
            raise ConfigError("slack must lie in (0, 1)")
        if self.k_extra > self.k_max - self.window:
            raise ConfigError("K^(A) must not exceed K_max - L")
        if self.rounds < 1 or self.honest_nodes < 1:
            raise ConfigError("rounds and honest nodes must be positive")

    @classmethod
    def honest(cls, **kw) -> "PropertyHarnessParams":
        kw.setdefault("adversary_stake", Fraction(0))
        kw.setdefault("honest_ratio", 1 - Fraction(kw["adversary_stake"]))
        return cls(**kw)

    @property
    def quality_bound(self) -> Fraction:
        ups = self.adversary_stake
        return ups / (1 - ups) + self.slack


@dataclass
class Verdict:
    name: str
    ok: bool
    violations: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def __bool__(self):
        return self.ok


ADVERSARY = "adversary"


def _block_id(parent: str, owner: str, round_: int) -> str:
    return tagged_hash(DOMAIN_POS_ID, parent, owner, round_).hex()[:16]


def _tip_key(chain) -> int:
    tip = chain[-1]
    return -1 if tip == "genesis" else digest_int(bytes.fromhex(tip))


def run_block_tree(params: PropertyHarnessParams, seed: int) -> dict:
    """Round-based longest-chain run; returns a JSON-friendly trace."""
    rng = RngStreams(seed)["mining"]
    honest = [f"honest-{i}" for i in range(params.honest_nodes)]
    ups = params.adversary_stake
    share = {name: (1 - ups) / len(honest) for name in honest}
    if ups:
        share[ADVERSARY] = ups
    owner = {"genesis": None}
    chains = {name: ["genesis"] for name in honest}
    samples, honest_success = [], []
    for r in range(1, params.rounds + 1):
        # everyone starts the round on the common best chain
        base = chains[honest[0]]
        produced = []
        for name in sorted(share):
            p = float(params.activity * share[name])
            if rng.random() < p:
                parent = base if name == ADVERSARY else chains[name]
                bid = _block_id(parent[-1], name, r)
                owner[bid] = name
                produced.append((name, parent + [bid]))
        honest_success.append(any(n != ADVERSARY for n, _ in produced))
        # mid-round: producers already extend locally, nothing delivered yet
        for name, chain in produced:
            if name != ADVERSARY:
                chains[name] = chain
        for name in honest:
            samples.append({"round": r, "phase": "mid", "node": name, "chain": list(chains[name])})
        candidates = [chains[n] for n in honest] + [c for n, c in produced]
        best_len = max(len(c) for c in candidates)
        best = min((c for c in candidates if len(c) == best_len), key=_tip_key)
        for name in honest:
            chains[name] = list(best)
            samples.append({"round": r, "phase": "end", "node": name, "chain": list(best)})
    return {
        "seed": seed,
        "honest": honest,
        "owners": {k: v for k, v in owner.items() if v is not None},
        "honest_success": honest_success,
        "samples": samples,
    }


def _end_lengths(trace) -> dict:
    out: dict = {}
    for s in trace["samples"]:
        if s["phase"] == "end":
            out.setdefault(s["node"], {})[s["round"]] = len(s["chain"]) - 1
    return out


def check_chain_growth(trace, params: PropertyHarnessParams) -> Verdict:
    """length(aleph) >= length(R_d) + sum of capped per-round honest gains, and equal N."""
    lengths = _end_lengths(trace)
    gains = [min(int(x), params.k_max) for x in trace["honest_success"]]
    violations = []
    for node, by_round in lengths.items():
        rounds = sorted(by_round)
        for i, rd in enumerate(rounds):
            if rd < params.start_round:
                continue
            need = by_round[rd]
            for aleph in rounds[i + 1:]:
                need += gains[aleph - 1]
                if by_round[aleph] < need:
                    violations.append(f"{node}: length {by_round[aleph]} at round {aleph} < {need} from {rd}")
                    break
    per_round = {}
    for node, by_round in lengths.items():
        for r, n in by_round.items():
            per_round.setdefault(r, set()).add(n)
    for r, ns in sorted(per_round.items()):
        if len(ns) > 1:
            violations.append(f"round {r}: honest N disagree {sorted(ns)}")
    return Verdict("chain_growth", not violations, violations[:20])


def window_fractions(chain, owners, window: int) -> list[Fraction]:
    blocks = [b for b in chain if b != "genesis"]
    flags = [owners.get(b) == ADVERSARY for b in blocks]
    return [Fraction(sum(flags[i:i + window]), window) for i in range(0, len(flags) - window + 1)]


def quality_failure_bound(params: PropertyHarnessParams) -> float:
    """exp(-eps^2 * Upsilon * L + ln R), reported next to the observed failure rate."""
    eps, ups = float(params.slack), float(params.adversary_stake)
    return math.exp(-eps * eps * ups * params.window + math.log(params.rounds))


def check_chain_quality(trace, params: PropertyHarnessParams) -> Verdict:
    bound = params.quality_bound
    worst = Fraction(0)
    violations = []
    windows = 0
    finals = {}
    for s in trace["samples"]:
        if s["phase"] == "end":
            finals[s["node"]] = s["chain"]
    for node, chain in sorted(finals.items()):
        fr = window_fractions(chain, trace["owners"], params.window)
        windows += len(fr)
        for i, f in enumerate(fr):
            worst = max(worst, f)
            if f > bound:
                violations.append(f"{node}: window at {i} has adversarial fraction {float(f):.3f} > {float(bound):.3f}")
    return Verdict("chain_quality", not violations, violations[:20],
                   {"max_fraction": float(worst), "bound": float(bound), "windows": windows})


def _prefix(a, b) -> bool:
    n = min(len(a), len(b))
    return a[:n] == b[:n]


def check_common_prefix(trace, depth: int = 1) -> Verdict:
    """At every sample point, honest chains with the last ``depth`` blocks dropped are prefix-related."""
    by_time: dict = {}
    for s in trace["samples"]:
        chain = s["chain"][:-depth] if depth and len(s["chain"]) > depth else s["chain"][:1]
        by_time.setdefault((s["round"], s["phase"]), []).append((s["node"], chain))
    violations = []
    for when, entries in sorted(by_time.items()):
        for i in range(len(entries)):
            for j in range(i + 1, len(entries)):
                if not _prefix(entries[i][1], entries[j][1]):
                    violations.append(f"round {when[0]} {when[1]}: {entries[i][0]} and {entries[j][0]} diverge")
    return Verdict("common_prefix", not violations, violations[:20])


def check_chain_wait(trace) -> Verdict:
    """Advertised and observed hold waits match and t_V < tau < t_E, for completed sessions."""
    completed = {r["session"] for r in trace if r.get("state") == TxState.LEDGER_UPDATED.value}
    violations = []
    checked = 0
    for r in trace:
        if r.get("step") != 5 or r.get("session") not in completed:
            continue
        d = r["detail"]
        advertised = Fraction(d["advertised"])
        observed = (Fraction(d["hold"]) - Fraction(d["gamma"])) / int(d["D"])
        t_v, t_e = Fraction(d["t_v"]), Fraction(d["t_e"])
        checked += 1
        if advertised != observed:
            violations.append(f"{r['session']}: advertised {advertised} != observed {observed}")
        if not t_v < advertised < t_e:
            violations.append(f"{r['session']}: wait {advertised} outside ({t_v}, {t_e})")
    return Verdict("chain_wait", not violations, violations[:20], {"sessions": checked})


# ---------------------------------------------------------------- planted fixtures

def planted_violations() -> dict:
    """One trace per checker that must be flagged."""
    params = PropertyHarnessParams(rounds=3, window=2, k_max=10, k_extra=1, adversary_stake=Fraction(1, 4),
                                   honest_ratio=Fraction(3, 4))
    # growth: an honest round with no length gain (truncated trace)
    growth = {
        "honest": ["h"], "owners": {"a1": "h", "a2": "h"}, "honest_success": [True, True, True],
        "samples": [{"round": r, "phase": "end", "node": "h", "chain": c} for r, c in
                    ((1, ["genesis", "a1"]), (2, ["genesis", "a1", "a2"]), (3, ["genesis", "a1", "a2"]))],
    }
    quality = {
        "honest": ["h"], "owners": {"x1": ADVERSARY, "x2": ADVERSARY, "x3": ADVERSARY},
        "honest_success": [False] * 3,
        "samples": [{"round": 3, "phase": "end", "node": "h", "chain": ["genesis", "x1", "x2", "x3"]}],
    }
    prefix = {
        "honest": ["h1", "h2"], "owners": {}, "honest_success": [True],
        "samples": [{"round": 1, "phase": "end", "node": "h1", "chain": ["genesis", "a", "b", "c"]},
                    {"round": 1, "phase": "end", "node": "h2", "chain": ["genesis", "x", "y", "z"]}],
    }
    base = {"hold": "51/10", "gamma": "1/10", "D": 2, "t_v": "1", "t_e": "3"}
    wait_mismatch = [
        {"t": 0, "session": "s", "step": 5, "state": "HoldInit", "detail": {**base, "advertised": "2"}},
        {"t": 1, "session": "s", "step": 12, "state": "LedgerUpdated", "detail": {}},
    ]
    wait_boundary = [
        {"t": 0, "session": "s", "step": 5, "state": "HoldInit",
         "detail": {**base, "hold": "61/10", "advertised": "3"}},
        {"t": 1, "session": "s", "step": 12, "state": "LedgerUpdated", "detail": {}},
    ]
    return {"params": params, "chain_growth": growth, "chain_quality": quality, "common_prefix": prefix,
            "chain_wait_mismatch": wait_mismatch, "chain_wait_boundary": wait_boundary}


def detectors_fire() -> dict:
    """Run every checker on its planted fixture; True means the violation was caught."""
    fx = planted_violations()
    p = fx["params"]
    return {
        "chain_growth": not check_chain_growth(fx["chain_growth"], p).ok,
        "chain_quality": not check_chain_quality(fx["chain_quality"], p).ok,
        "common_prefix": not check_common_prefix(fx["common_prefix"]).ok,
        "chain_wait_mismatch": not check_chain_wait(fx["chain_wait_mismatch"]).ok,
        "chain_wait_boundary": not check_chain_wait(fx["chain_wait_boundary"]).ok,
    }


# ---------------------------------------------------------------- unbiased sharding

_TRIAL_VDF = None


def _trial_vdf():
    global _TRIAL_VDF
    if _TRIAL_VDF is None:
        from ..vdf import VdfParams
        _TRIAL_VDF = VdfParams(b"trial-eval", b"trial-verify", 128, 4, Fraction(1))
    return _TRIAL_VDF


def _seed_chain(n_pairs: int):
    """``n_pairs`` symmetric chain-pairs, each holding one block of an honest node."""
    from ..chain import ChainPair, GlobalChain, PowBlock, add_pair, expected_vdf_input, make_pos_block
    from ..encoding import H
    from ..vdf import evaluate

    chain = GlobalChain()
    params = _trial_vdf()
    for i in range(n_pairs):
        bare = ChainPair(PowBlock(H("trial-prev", i), H("trial-head", i), i, Fraction(0), False, f"miner-{i}"))
        block = make_pos_block(bare, evaluate(params, expected_vdf_input(bare)), f"honest-{i}", params.verify_key)
        chain = add_pair(chain, ChainPair(bare.pow, (block,)))
    return chain


def sharding_trial(seed: int, n_pairs: int = 4, preferred: int = 0, adversary_decides: bool = False) -> int:
    """Place one adversarial block and return the index of the pair it shares a shard with.

    The adversary names a ``preferred`` pair, but placement goes through the
    leader lottery and the allocation module, which never see that hint.
    ``adversary_decides=True`` is the biased control: the hint wins.
    """
    from .. import allocation as alloc
    from ..chain import append_pos_block, expected_vdf_input, make_pos_block
    from ..consensus import leader_ticket
    from ..sharding import build_shards
    from ..vdf import evaluate

    chain = _seed_chain(n_pairs)
    rng = RngStreams(seed)["sharding"]
    validators = []
    for p in chain.pairs:
        profile = alloc.NodeProfile(storage_avail=16, storage_per_block=1, stakes=p.stakes)
        validators.append(alloc.Validator(p.id, profile, (alloc.PseudoChain(p.id, p.k_i, p.stakes),)))
    if adversary_decides:
        target = chain.pairs[preferred].id
    else:
        # symmetric rewards: every ticket passes, the lowest one leads
        tickets = [(leader_ticket(p.pow, rng.getrandbits(128).to_bytes(16, "big")), i)
                   for i, p in enumerate(chain.pairs)]
        leader = validators[min(tickets)[1]].pair_id
        target = alloc.allocate_pos_block(validators, leader).target_pair
    pair = chain.pair(target)
    params = _trial_vdf()
    block = make_pos_block(pair, evaluate(params, expected_vdf_input(pair)), ADVERSARY, params.verify_key)
    chain = append_pos_block(chain, target, block)
    mine = next(s for s in build_shards(chain, "multi") if s.anchor == ADVERSARY)
    (partner,) = mine.members - {ADVERSARY}
    return int(partner.split("-")[1])


def co_shard_counts(seeds, n_pairs: int = 4, **kw) -> list[int]:
    counts = [0] * n_pairs
    for seed in seeds:
        counts[sharding_trial(seed, n_pairs, **kw)] += 1
    return counts
