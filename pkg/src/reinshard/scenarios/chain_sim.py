"""End-to-end chain run: leader election, block placement, VDF, difficulty, shards.

Each round one external node submits a PoS block. The validators draw
leader tickets; the lowest passing ticket allocates the block. A block
that cannot be placed waits one round and may then be delegated; if it
still has nowhere to go, a miner extends the PoW chain with a fresh
chain-pair that takes it as its first block. Difficulties are retargeted
every ``epoch_blocks`` appends and shards are rebuilt at the end.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction

from .. import allocation as alloc
from ..chain import ChainPair, GlobalChain, PowBlock, add_pair, append_pos_block, check_invariants, \
    make_pos_block, expected_vdf_input, update_pair, validate_chain_pair
from ..consensus import adjust_pos_difficulty, adjust_pow_difficulty, check_leader_ticket, leader_ticket, mine
from ..encoding import MAX_TARGET, ZERO_DIGEST, hex_digest
from ..errors import ShardingError
from ..sharding import ShardMode, build_shards
from ..sim import EventKind, SimConfig, Simulator, to_us
from ..vdf import evaluate, setup, verify_artifact

STORAGE_UNITS = 16  # G_a per chain-pair at creation; one unit per stored block
INITIAL_POW_TARGET = MAX_TARGET >> 4
INITIAL_POS_TARGET = MAX_TARGET >> 2


@dataclass
class ChainSimReport:
    seed: int
    rounds: int
    pairs: int
    pos_blocks: int
    placed: int = 0
    waited: int = 0
    delegated: int = 0
    new_pairs: int = 0
    leaderless: int = 0
    pow_target: int = 0
    pos_target: int = 0
    shards: list = field(default_factory=list)
    invariants_ok: bool = True
    trace: list = field(default_factory=list, repr=False)
    trace_digest: str = ""

    def summary_row(self) -> dict:
        return {
            "seed": self.seed, "scenario": "simulate", "rounds": self.rounds, "pairs": self.pairs,
            "pos_blocks": self.pos_blocks, "placed": self.placed, "waited": self.waited,
            "delegated": self.delegated, "new_pairs": self.new_pairs, "leaderless": self.leaderless,
            "shards": len(self.shards), "invariants_ok": int(self.invariants_ok),
            "pow_target_bits": self.pow_target.bit_length(), "pos_target_bits": self.pos_target.bit_length(),
            "trace_digest": self.trace_digest,
        }


class ChainRun:
    def __init__(self, cfg: SimConfig, rounds: int, cost_per_iteration=Fraction(1, 1000)):
        self.cfg = cfg
        self.rounds = rounds
        self.cost = cost_per_iteration
        self.sim = Simulator(cfg.seed)
        self.chain = GlobalChain()
        self.pow_target = INITIAL_POW_TARGET
        self.pos_target = INITIAL_POS_TARGET
        self.storage: dict = {}
        self.qtable = alloc.QTable()
        self.report = ChainSimReport(cfg.seed, rounds, 0, 0)
        self.appends_since_epoch = 0
        self.last_leader = 0
        self.pending = None  # (owner, waited)
        self.mode = ShardMode.parse(cfg.mode)
        self.fresh_nodes = 0
        self.miners = 0

    # -- helpers
    def _log(self, event, **detail):
        self.sim.log(event=event, **detail)

    def _vdf(self, pair: ChainPair):
        params = setup(128, self.cfg.t_eval, self.pos_target, cost_per_iteration=self.cost,
                       seed=self.cfg.seed.to_bytes(8, "big"))
        art = evaluate(params, expected_vdf_input(pair))
        if not verify_artifact(params.verify_key, art, rng=self.sim.rng["verify"],
                               t_verify=self.cfg.t_verify, t_eval=self.cfg.t_eval):
            raise AssertionError("freshly evaluated VDF failed verification")
        return params, art

    def _owner(self) -> str:
        if self.mode is ShardMode.SINGLE:
            # one block per external node keeps every node inside a single pair
            self.fresh_nodes += 1
            return f"node-{self.fresh_nodes:04d}"
        return f"node-{self.sim.rng['clients'].randrange(self.cfg.n_nodes):04d}"

    def _new_pair(self, owner: str) -> bytes | None:
        prev = self.chain.pairs[-1] if self.chain.pairs else None
        h_rho = prev.id if prev else ZERO_DIGEST
        h_s = prev.tail_hash if prev else ZERO_DIGEST
        miner = f"miner-{self.miners:03d}"
        nonce = None
        start = 0
        while nonce is None:
            nonce = mine(Fraction(0), h_rho, h_s, self.pow_target, start=start, budget=4096)
            start += 4096
            if start > 1 << 20:
                self._log("mining_stalled", target_bits=self.pow_target.bit_length())
                return None
        self.miners += 1
        pow_block = PowBlock(h_rho, h_s, nonce, Fraction(0), False, miner)
        bare = ChainPair(pow_block, (), k_max=self.cfg.k_max)
        params, art = self._vdf(bare)
        block = make_pos_block(bare, art, owner, params.verify_key)
        self.chain = add_pair(self.chain, ChainPair(pow_block, (block,), k_max=self.cfg.k_max))
        self.storage[pow_block.id] = STORAGE_UNITS - 1
        self.report.new_pairs += 1
        self._log("pair_mined", pair=hex_digest(pow_block.id)[:16], nonce=nonce, owner=owner)
        return pow_block.id

    def _validators(self) -> list:
        out = []
        for p in self.chain.pairs:
            profile = alloc.NodeProfile(pseudo_limit=1, pseudo_used=1, storage_avail=self.storage[p.id],
                                        storage_per_block=1, stakes=p.stakes)
            own = alloc.PseudoChain(p.id, p.k_i, p.stakes)
            out.append(alloc.Validator(p.id, profile, (own,)))
        return out

    def _elect(self, validators):
        round_rng = self.sim.rng["mining"]
        best = None
        for i, v in enumerate(validators):
            pair = self.chain.pair(v.pair_id)
            key = round_rng.getrandbits(128).to_bytes(16, "big")  # fresh verification key each round
            if check_leader_ticket(pair.pow, key, v.reward, self.pos_target):
                ticket = leader_ticket(pair.pow, key)
                if best is None or ticket < best[0]:
                    best = (ticket, i)
        return None if best is None else best[1]

    def _append(self, pair_id: bytes, owner: str, how: str):
        pair = self.chain.pair(pair_id)
        params, art = self._vdf(pair)
        block = make_pos_block(pair, art, owner, params.verify_key)
        self.chain = append_pos_block(self.chain, pair_id, block)
        self.chain = update_pair(self.chain, pair_id, stakes=self.chain.pair(pair_id).stakes + 1)
        self.storage[pair_id] -= 1
        self.appends_since_epoch += 1
        self._log("pos_appended", pair=hex_digest(pair_id)[:16], owner=owner, how=how,
                  zeta=art.iterations)

    def _epoch(self, validators):
        ks = [v.chain_capacity(0) for v in validators]
        stakes = [v.profile.stakes for v in validators]
        etas = [v.pseudo_ids for v in validators]
        rewards = [v.reward for v in validators]
        winner = min(self.last_leader, len(validators) - 1)
        incoming = 1 if self.pending else 0
        self.pos_target = adjust_pos_difficulty(ks, stakes, winner, incoming, self.pos_target)
        self.pow_target = adjust_pow_difficulty(etas, rewards, winner, self.pow_target)
        self.appends_since_epoch = 0
        self._log("epoch", pos_target_bits=self.pos_target.bit_length(),
                  pow_target_bits=self.pow_target.bit_length())

    def _round(self, r: int):
        owner, waited = self.pending if self.pending else (self._owner(), False)
        validators = self._validators()
        leader = self._elect(validators)
        if leader is None:
            self.report.leaderless += 1
            self._log("no_leader", round=r)
            self.pending = (owner, True)
            if waited:
                self._fallback(owner)
            return
        self.last_leader = leader
        decision = alloc.allocate_pos_block(validators, validators[leader].pair_id, qtable=self.qtable,
                                            allow_delegate=waited, k_cap=self.cfg.k_max)
        self._log("allocation", round=r, **{k: (v.hex()[:16] if isinstance(v, bytes) else v)
                                           for k, v in decision.to_log(r).items() if k != "t"})
        if decision.outcome is alloc.Outcome.PLACED:
            self.report.placed += 1
            self._append(decision.target_pair, owner, "placed")
            self.pending = None
        elif decision.outcome is alloc.Outcome.DELEGATED:
            self.report.delegated += 1
            target = next(v for v in validators if v.pair_id == decision.target_pair)
            state = (target.pair_id, alloc.capacity_bucket(target.residual_capacity(self.cfg.k_max) - 1))
            alloc.q_update(self.qtable, state, alloc.DELEGATE, target.reward, 1, 0)
            self._append(decision.target_pair, owner, "delegated")
            self.pending = None
        else:
            self.report.waited += 1
            if waited:
                self._fallback(owner)
            else:
                self.pending = (owner, True)
        if self.appends_since_epoch >= self.cfg.epoch_blocks:
            self._epoch(self._validators())

    def _fallback(self, owner):
        if self._new_pair(owner) is not None:
            self.pending = None

    def run(self) -> ChainSimReport:
        for _ in range(self.cfg.n_validators):
            self._new_pair(self._owner())
        self.report.new_pairs = 0
        step = to_us(self.cfg.t_eval)
        for r in range(self.rounds):
            self.sim.schedule(r * step, EventKind.MINE_ATTEMPT, lambda ev, r=r: self._round(r))
        self.sim.run_until()
        rep = self.report
        try:
            check_invariants(self.chain)
            rep.invariants_ok = all(validate_chain_pair(p) for p in self.chain.pairs)
        except Exception:  # reported, not raised
            rep.invariants_ok = False
        try:
            rep.shards = [s.to_dict() for s in build_shards(self.chain, self.mode)]
        except ShardingError as exc:
            self._log("sharding_error", error=str(exc))
            rep.invariants_ok = False
        rep.pairs = self.chain.m
        rep.pos_blocks = self.chain.n
        rep.pow_target, rep.pos_target = self.pow_target, self.pos_target
        rep.trace = self.sim.trace
        rep.trace_digest = self.sim.trace_digest()
        return rep


def run_simulation(cfg: SimConfig, rounds: int = 64) -> ChainSimReport:
    return ChainRun(cfg, rounds).run()
