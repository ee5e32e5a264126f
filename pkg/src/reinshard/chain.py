"""Dual-blockchain data model: PoW blocks, PoS sub-chains and chain-pairs.

A chain-pair is one PoW block plus the ordered PoS blocks attached under it.
The global chain is the ordered list of pairs; some PoW blocks are pseudo
blocks, admitted only to host extra PoS sub-chains. All values are frozen
snapshots; every mutation returns a new :class:`GlobalChain` after
re-checking the structural invariants.

Hash links inside a sub-chain:

* ``parent_pair`` of every PoS block is the pair's PoW id;
* ``parent_pos_hash`` (h_q) is the PoS head the PoW block committed to
  (``pow.pos_head_hash``);
* ``prev_pos_hash`` (h_g) is the previous PoS block's id, or the PoW id for
  the first block of a sub-chain;
* the embedded VDF input equals ``H(h_q, h_g)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from typing import Iterable

from .encoding import (
    DOMAIN_POS_ID,
    DOMAIN_POW_ID,
    check_digest,
    digest_int,
    format_fraction,
    hex_digest,
    parse_digest,
    parse_fraction,
    tagged_hash,
)
from .errors import (
    CapacityExceeded,
    InvariantBroken,
    LinkMismatch,
    MalformedBlock,
    NoValidPair,
    UnknownPair,
)
from .vdf import VdfArtifact, derive_input

SCHEMA = "reinshard.chain/1"
DEFAULT_K_MAX = 8
DEFAULT_S_MIN = 1
DEFAULT_S_MAX = 2**32


@dataclass(frozen=True)
class PowBlock:
    prev_pow_hash: bytes
    pos_head_hash: bytes
    nonce: int
    pseudo_rate: Fraction
    is_pseudo: bool
    miner: str
    id: bytes = field(init=False, repr=False)

    def __post_init__(self):
        check_digest(self.prev_pow_hash, "h_rho")
        check_digest(self.pos_head_hash, "h_s")
        if not 0 <= self.nonce < 2**64:
            raise MalformedBlock(f"nonce {self.nonce} outside unsigned-64")
        object.__setattr__(self, "pseudo_rate", parse_fraction(self.pseudo_rate))
        object.__setattr__(self, "id", tagged_hash(
            DOMAIN_POW_ID, self.prev_pow_hash, self.pos_head_hash, self.nonce,
            self.pseudo_rate, self.is_pseudo, self.miner))

    def to_dict(self) -> dict:
        return {
            "id": hex_digest(self.id),
            "h_rho": hex_digest(self.prev_pow_hash),
            "h_s": hex_digest(self.pos_head_hash),
            "rho": self.nonce,
            "alpha_m": format_fraction(self.pseudo_rate),
            "is_pseudo": self.is_pseudo,
            "miner": self.miner,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PowBlock":
        block = cls(
            prev_pow_hash=parse_digest(data["h_rho"], "h_rho"),
            pos_head_hash=parse_digest(data["h_s"], "h_s"),
            nonce=int(data["rho"]),
            pseudo_rate=parse_fraction(data["alpha_m"]),
            is_pseudo=bool(data["is_pseudo"]),
            miner=data["miner"],
        )
        if "id" in data and parse_digest(data["id"], "id") != block.id:
            raise MalformedBlock("PoW id does not match its fields")
        return block


@dataclass(frozen=True)
class PosBlock:
    parent_pair: bytes
    parent_pos_hash: bytes
    prev_pos_hash: bytes
    verification_key: bytes
    vdf: VdfArtifact
    owner: str
    stake_delta: int = 1
    id: bytes = field(init=False, repr=False)

    def __post_init__(self):
        check_digest(self.parent_pair, "parent_pair")
        check_digest(self.parent_pos_hash, "h_q")
        check_digest(self.prev_pos_hash, "h_g")
        if self.stake_delta < 0:
            raise MalformedBlock("stake_delta must be unsigned")
        v = self.vdf
        object.__setattr__(self, "id", tagged_hash(
            DOMAIN_POS_ID, self.parent_pair, self.parent_pos_hash, self.prev_pos_hash,
            bytes(self.verification_key), v.input, v.output, tuple(v.proof), v.iterations,
            self.owner, self.stake_delta))

    def to_dict(self) -> dict:
        return {
            "id": hex_digest(self.id),
            "parent_pair": hex_digest(self.parent_pair),
            "h_q": hex_digest(self.parent_pos_hash),
            "h_g": hex_digest(self.prev_pos_hash),
            "v_k": bytes(self.verification_key).hex(),
            "vdf": self.vdf.to_dict(),
            "owner": self.owner,
            "stake_delta": self.stake_delta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PosBlock":
        block = cls(
            parent_pair=parse_digest(data["parent_pair"], "parent_pair"),
            parent_pos_hash=parse_digest(data["h_q"], "h_q"),
            prev_pos_hash=parse_digest(data["h_g"], "h_g"),
            verification_key=bytes.fromhex(data["v_k"]),
            vdf=VdfArtifact.from_dict(data["vdf"]),
            owner=data["owner"],
            stake_delta=int(data["stake_delta"]),
        )
        if "id" in data and parse_digest(data["id"], "id") != block.id:
            raise MalformedBlock("PoS id does not match its fields")
        return block


@dataclass(frozen=True)
class ChainPair:
    pow: PowBlock
    sub_chain: tuple = ()
    pseudo_ids: int = 1
    k_max: int = DEFAULT_K_MAX
    stakes: int = DEFAULT_S_MIN

    def __post_init__(self):
        object.__setattr__(self, "sub_chain", tuple(self.sub_chain))

    @property
    def id(self) -> bytes:
        return self.pow.id

    @property
    def k_i(self) -> int:
        return len(self.sub_chain)

    @property
    def tail_hash(self) -> bytes:
        return self.sub_chain[-1].id if self.sub_chain else self.pow.id

    def to_dict(self) -> dict:
        return {
            "pow": self.pow.to_dict(),
            "sub_chain": [b.to_dict() for b in self.sub_chain],
            "eta_x": self.pseudo_ids,
            "k_i": self.k_i,
            "k_max": self.k_max,
            "stakes": self.stakes,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChainPair":
        pair = cls(
            pow=PowBlock.from_dict(data["pow"]),
            sub_chain=tuple(PosBlock.from_dict(b) for b in data["sub_chain"]),
            pseudo_ids=int(data["eta_x"]),
            k_max=int(data["k_max"]),
            stakes=int(data["stakes"]),
        )
        if int(data.get("k_i", pair.k_i)) != pair.k_i:
            raise MalformedBlock("k_i disagrees with sub_chain length")
        return pair


def make_pos_block(pair: ChainPair, vdf: VdfArtifact, owner: str, verification_key: bytes = b"",
                   stake_delta: int = 1) -> PosBlock:
    """Build a PoS block linked to the current tail of ``pair``."""
    return PosBlock(pair.id, pair.pow.pos_head_hash, pair.tail_hash, verification_key, vdf, owner, stake_delta)


def expected_vdf_input(pair: ChainPair) -> bytes:
    return derive_input(pair.pow.pos_head_hash, pair.tail_hash)


def _links_ok(pair: ChainPair) -> bool:
    prev = pair.pow.id
    h_q = pair.pow.pos_head_hash
    for block in pair.sub_chain:
        if block.parent_pair != pair.pow.id or block.parent_pos_hash != h_q:
            return False
        if block.prev_pos_hash != prev:
            return False
        if block.vdf.input != derive_input(h_q, prev):
            return False
        prev = block.id
    return True


def validate_chain_pair(pair: ChainPair, s_min: int = DEFAULT_S_MIN, s_max: int = DEFAULT_S_MAX) -> bool:
    for name, value in (("h_rho", pair.pow.prev_pow_hash), ("h_s", pair.pow.pos_head_hash)):
        check_digest(value, name)
    for block in pair.sub_chain:
        for name, value in (("parent_pair", block.parent_pair), ("h_q", block.parent_pos_hash),
                            ("h_g", block.prev_pos_hash)):
            check_digest(value, name)
    if not pair.sub_chain:
        return False
    if pair.k_i > pair.k_max:
        return False
    if not s_min <= pair.stakes <= s_max:
        return False
    return _links_ok(pair)


@dataclass(frozen=True)
class GlobalChain:
    pairs: tuple = ()
    promoted: frozenset = frozenset()
    s_min: int = DEFAULT_S_MIN
    s_max: int = DEFAULT_S_MAX
    pending: int = 0  # K^(R): incoming PoS blocks not yet placed

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        object.__setattr__(self, "promoted", frozenset(self.promoted))

    @cached_property
    def index(self) -> dict:
        return {p.id: i for i, p in enumerate(self.pairs)}

    @property
    def m(self) -> int:
        return len(self.pairs)

    @cached_property
    def pseudo_pair_ids(self) -> frozenset:
        return frozenset(p.id for p in self.pairs if p.pow.is_pseudo or p.id in self.promoted)

    @property
    def m_prime(self) -> int:
        return len(self.pseudo_pair_ids)

    @property
    def n(self) -> int:
        return sum(p.k_i for p in self.pairs)

    @property
    def n_min(self) -> int:
        return self.m - self.m_prime

    def pair(self, pair_id: bytes) -> ChainPair:
        try:
            return self.pairs[self.index[pair_id]]
        except KeyError:
            raise UnknownPair(hex_digest(pair_id)) from None

    def is_pseudo(self, pair_id: bytes) -> bool:
        return pair_id in self.pseudo_pair_ids

    def pos_blocks(self) -> Iterable[tuple[ChainPair, PosBlock]]:
        for pair in self.pairs:
            for block in pair.sub_chain:
                yield pair, block

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "s_min": self.s_min,
            "s_max": self.s_max,
            "k_r": self.pending,
            "promoted": sorted(hex_digest(p) for p in self.promoted),
            "pairs": [p.to_dict() for p in self.pairs],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GlobalChain":
        if data.get("schema") != SCHEMA:
            raise MalformedBlock(f"unsupported snapshot schema {data.get('schema')!r}")
        chain = cls(
            pairs=tuple(ChainPair.from_dict(p) for p in data["pairs"]),
            promoted=frozenset(parse_digest(p, "promoted") for p in data["promoted"]),
            s_min=int(data["s_min"]),
            s_max=int(data["s_max"]),
            pending=int(data["k_r"]),
        )
        check_invariants(chain)
        return chain


def dumps(obj) -> str:
    """Canonical JSON text for any serializable model object."""
    return json.dumps(obj.to_dict(), sort_keys=True, separators=(",", ":"))


def loads_chain(text: str) -> GlobalChain:
    return GlobalChain.from_dict(json.loads(text))


def check_invariants(chain: GlobalChain) -> None:
    if chain.n < chain.n_min:
        raise InvariantBroken(f"N={chain.n} below N_min={chain.n_min} (M={chain.m}, M'={chain.m_prime})")
    if chain.m and chain.m_prime >= chain.m:
        raise InvariantBroken("pseudo blocks must be a strict subset of the PoW blocks")
    if len(chain.index) != chain.m:
        raise InvariantBroken("duplicate PoW block in chain")
    seen = set()
    for _, block in chain.pos_blocks():
        if block.id in seen:
            raise InvariantBroken(f"PoS block {hex_digest(block.id)} appears twice")
        seen.add(block.id)


def total_pos_count(chain: GlobalChain) -> int:
    n = sum(p.k_i for p in chain.pairs)
    if n < chain.n_min:
        raise InvariantBroken(f"N={n} below N_min={chain.n_min}")
    return n


def add_pair(chain: GlobalChain, pair: ChainPair) -> GlobalChain:
    if pair.id in chain.index:
        raise InvariantBroken("pair already present")
    new = replace(chain, pairs=chain.pairs + (pair,))
    check_invariants(new)
    return new


def promote_to_pseudo(chain: GlobalChain, pair_id: bytes) -> GlobalChain:
    """Record an existing pair as pseudo after creation.

    Its PoW block keeps ``is_pseudo=False`` in the hashed payload; membership
    in the pseudo set comes from the promotion record.
    """
    chain.pair(pair_id)
    new = replace(chain, promoted=chain.promoted | {pair_id})
    check_invariants(new)
    return new


def append_pos_block(chain: GlobalChain, pair_id: bytes, block: PosBlock, position: int | None = None) -> GlobalChain:
    pair = chain.pair(pair_id)
    if position is not None and position != pair.k_i:
        raise LinkMismatch(f"position {position} is not the sub-chain tail ({pair.k_i})")
    if pair.k_i >= pair.k_max:
        raise CapacityExceeded(f"sub-chain already holds K_max={pair.k_max} blocks")
    if block.parent_pair != pair.id or block.parent_pos_hash != pair.pow.pos_head_hash:
        raise LinkMismatch("block is not addressed to this chain-pair")
    if block.prev_pos_hash != pair.tail_hash:
        raise LinkMismatch("h_g does not match the sub-chain tail")
    if block.vdf.input != expected_vdf_input(pair):
        raise LinkMismatch("VDF input is not H(h_q, h_g)")
    updated = replace(pair, sub_chain=pair.sub_chain + (block,))
    pairs = list(chain.pairs)
    pairs[chain.index[pair_id]] = updated
    new = replace(chain, pairs=tuple(pairs))
    check_invariants(new)
    return new


def update_pair(chain: GlobalChain, pair_id: bytes, **changes) -> GlobalChain:
    """Replace bookkeeping fields (stakes, pseudo_ids, k_max) of one pair."""
    pair = chain.pair(pair_id)
    pairs = list(chain.pairs)
    pairs[chain.index[pair_id]] = replace(pair, **changes)
    new = replace(chain, pairs=tuple(pairs))
    check_invariants(new)
    return new


def best_valid_pair(chain: GlobalChain) -> bytes:
    """Longest valid sub-chain; ties go to the numerically lowest PoW id."""
    valid = [p for p in chain.pairs if validate_chain_pair(p, chain.s_min, chain.s_max)]
    if not valid:
        raise NoValidPair("no chain-pair carries a valid sub-chain")
    best = min(valid, key=lambda p: (-p.k_i, digest_int(p.id)))
    return best.id
