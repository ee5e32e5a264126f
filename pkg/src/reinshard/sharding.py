"""Shard membership derived from where PoS blocks were placed.

Two deployment modes:

* ``single_block``: every external node stores its blocks in one chain-pair,
  so each pair with blocks becomes one shard and shards partition the nodes.
* ``multi_block``: a node may spread blocks over several pairs; each node
  gets a shard covering its own placements, shared with the owners of the
  other blocks in those pairs.

Shard ids hash the sorted anchor and member ids, so naming does not depend
on iteration order.
"""

from __future__ import annotations

import enum
import json
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction

from .chain import GlobalChain
from .encoding import DOMAIN_SHARD_ID, hex_digest, tagged_hash
from .errors import EmptyChain, ShardingError, UnknownNode


class ShardMode(str, enum.Enum):
    SINGLE = "single_block"
    MULTI = "multi_block"

    @classmethod
    def parse(cls, value) -> "ShardMode":
        aliases = {"single": cls.SINGLE, "multi": cls.MULTI}
        if isinstance(value, str) and value in aliases:
            return aliases[value]
        return cls(value)


def _anchor_key(anchor) -> str:
    return hex_digest(anchor) if isinstance(anchor, bytes) else str(anchor)


@dataclass(frozen=True)
class Shard:
    id: bytes
    anchor: object  # pair id (single_block) or node id (multi_block)
    members: frozenset
    blocks: frozenset

    def to_dict(self) -> dict:
        return {
            "shard_id": hex_digest(self.id),
            "anchor": _anchor_key(self.anchor),
            "members": sorted(self.members),
            "blocks": sorted(hex_digest(b) for b in self.blocks),
        }


def shard_id(anchor, members) -> bytes:
    return tagged_hash(DOMAIN_SHARD_ID, _anchor_key(anchor), sorted(members))


def _make(anchor, members, blocks) -> Shard:
    if not members:
        raise ShardingError("a shard needs at least one member")
    return Shard(shard_id(anchor, members), anchor, frozenset(members), frozenset(blocks))


def build_shards(chain: GlobalChain, mode=ShardMode.SINGLE) -> list[Shard]:
    mode = ShardMode.parse(mode)
    placements = list(chain.pos_blocks())
    if not placements:
        raise EmptyChain("no external node has placed a block")
    if mode is ShardMode.SINGLE:
        home = {}
        shards = []
        for pair in chain.pairs:
            if not pair.sub_chain:
                continue
            owners = {b.owner for b in pair.sub_chain}
            for owner in owners:
                if owner in home:
                    raise ShardingError(f"node {owner} stores blocks in two pairs under single_block mode")
                home[owner] = pair.id
            shards.append(_make(pair.id, owners, (b.id for b in pair.sub_chain)))
        return shards
    by_node = defaultdict(list)
    owners_of_pair = defaultdict(set)
    for pair, block in placements:
        by_node[block.owner].append((pair.id, block.id))
        owners_of_pair[pair.id].add(block.owner)
    shards = []
    for node in sorted(by_node):
        pairs = {p for p, _ in by_node[node]}
        members = {node}
        for p in pairs:
            members |= owners_of_pair[p]
        shards.append(_make(node, members, (b for _, b in by_node[node])))
    return shards


def shard_lookup(shards, node) -> set:
    found = {s.id for s in shards if node in s.members}
    if not found:
        raise UnknownNode(f"node {node!r} belongs to no shard")
    return found


def credit_shard_rewards(shards, mode=ShardMode.SINGLE, chain: GlobalChain | None = None,
                         leaders=(), leader_share=Fraction(1)) -> dict:
    """Stake deltas per node: one per appended block, plus a leader share in multi mode.

    ``leaders`` lists pair ids that led an allocation round; in multi mode
    every owner of a block inside such a pair earns ``leader_share`` once
    per round led.
    """
    mode = ShardMode.parse(mode)
    deltas = defaultdict(Fraction)
    counted = set()
    for shard in shards:
        for block in shard.blocks:
            counted.add(block)
    owner_of = {}
    pair_of = {}
    if chain is not None:
        for pair, block in chain.pos_blocks():
            owner_of[block.id] = block.owner
            pair_of[block.id] = pair.id
    for shard in shards:
        for member in shard.members:
            deltas.setdefault(member, Fraction(0))
        if mode is ShardMode.MULTI:
            deltas[shard.anchor] += len(shard.blocks)
    if mode is ShardMode.SINGLE:
        for block in counted:
            if block not in owner_of:
                raise ShardingError("single_block crediting needs the chain snapshot")
            deltas[owner_of[block]] += 1
    else:
        led = defaultdict(int)
        for pair_id in leaders:
            led[pair_id] += 1
        for pair_id, rounds in led.items():
            owners = {owner_of[b] for b, p in pair_of.items() if p == pair_id}
            for owner in owners:
                deltas[owner] += rounds * Fraction(leader_share)
    return dict(deltas)


def shard_map_json(shards) -> str:
    return json.dumps([s.to_dict() for s in shards], sort_keys=True, separators=(",", ":"))
