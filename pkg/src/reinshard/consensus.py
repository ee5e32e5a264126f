"""Hash-puzzle predicates and difficulty adjustment.

Chain extension accepts a new PoW block when
``H(alpha_m, Z(h_rho, h_s), rho) < T``; a validator is elected leader when
``H~(B_PoW, v_k) < R' * T~``. The two Reinshard difficulty rules are
evaluated in exact rational arithmetic and floored at the end; the Nakamoto
and TwinsCoin rules are kept for comparison runs.

Lone-validator and zero-denominator cases fall back to the unchanged target
(logged) unless ``strict=True``, which raises instead. Results are always
clamped to ``[1, 2^256 - 1]``; clamping is logged.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .chain import PowBlock
from .encoding import MAX_TARGET, H, H_tilde, Z, check_digest, digest_int, encode, parse_fraction
from .errors import ConfigError, LoneValidator, NotApplicable, ZeroDenominator

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DifficultyState:
    pow_target: int
    pos_target: int
    epoch: int = 0

    def __post_init__(self):
        for name in ("pow_target", "pos_target"):
            value = getattr(self, name)
            if not 0 < value <= MAX_TARGET:
                raise ConfigError(f"{name} must lie in (0, 2^256)")


class BaselineModel(str, enum.Enum):
    NAKAMOTO = "nakamoto"
    TWO_HOP = "two_hop"
    TWINSCOIN = "twinscoin"


@dataclass(frozen=True)
class BaselineParams:
    model: BaselineModel
    t: Fraction  # expected epoch time
    t_r: Fraction  # observed epoch time
    mu: int = 1
    mu_r: int = 1
    n: int = 1
    e: Fraction = Fraction(1)
    h_a: bytes = bytes(32)

    def __post_init__(self):
        object.__setattr__(self, "model", BaselineModel(self.model))
        object.__setattr__(self, "t", parse_fraction(self.t))
        object.__setattr__(self, "t_r", parse_fraction(self.t_r))
        object.__setattr__(self, "e", parse_fraction(self.e))
        if self.t <= 0 or self.mu <= 0:
            raise ConfigError("t and mu must be positive")
        if not 0 < self.e <= 1:
            raise ConfigError("E must lie in (0, 1]")


def clamp_target(value, *, what: str = "target") -> int:
    target = math.floor(value)
    if target < 1:
        log.warning("%s clamped up from %s to 1", what, target)
        return 1
    if target > MAX_TARGET:
        log.warning("%s clamped down to 2^256 - 1", what)
        return MAX_TARGET
    return target


def pow_digest(pseudo_rate, h_rho: bytes, h_s: bytes, nonce: int) -> bytes:
    inner = Z(check_digest(h_rho, "h_rho"), check_digest(h_s, "h_s"))
    return H(parse_fraction(pseudo_rate), inner, nonce)


def check_pow_solution(pseudo_rate, h_rho: bytes, h_s: bytes, nonce: int, target: int) -> bool:
    return digest_int(pow_digest(pseudo_rate, h_rho, h_s, nonce)) < target


def mine(pseudo_rate, h_rho: bytes, h_s: bytes, target: int, start: int = 0, budget: int = 1024) -> int | None:
    """Bounded nonce scan; returns the first solving nonce or None."""
    for nonce in range(start, start + budget):
        if check_pow_solution(pseudo_rate, h_rho, h_s, nonce, target):
            return nonce
    return None


def leader_ticket(pow_block: PowBlock | bytes, verification_key: bytes) -> int:
    block_bytes = pow_block if isinstance(pow_block, bytes) else encode(*_pow_fields(pow_block))
    return digest_int(H_tilde(block_bytes, bytes(verification_key)))


def _pow_fields(block: PowBlock) -> tuple:
    return (block.prev_pow_hash, block.pos_head_hash, block.nonce, block.pseudo_rate, block.is_pseudo, block.miner)


def leader_bound(reward, pos_target: int) -> Fraction:
    """R' * T~, saturating at 2^256 - 1."""
    return min(parse_fraction(reward) * pos_target, Fraction(MAX_TARGET))


def check_leader_ticket(pow_block: PowBlock | bytes, verification_key: bytes, reward, pos_target: int) -> bool:
    reward = parse_fraction(reward)
    if reward < 0:
        raise ValueError("R' must be non-negative")
    return leader_ticket(pow_block, verification_key) < leader_bound(reward, pos_target)


def _others(values: Sequence[Fraction], winner: int) -> Fraction:
    return sum((v for j, v in enumerate(values) if j != winner), Fraction(0))


def _fallback(exc: Exception, current: int, strict: bool) -> int:
    if strict:
        raise exc
    log.warning("difficulty fallback, target unchanged: %s", exc)
    return current


def pow_factor(pseudo_counts: Sequence[int], rewards: Sequence, winner: int) -> Fraction:
    etas = [Fraction(e) for e in pseudo_counts]
    rs = [parse_fraction(r) for r in rewards]
    if len(etas) != len(rs):
        raise ValueError("one eta_x and one R' per pair")
    if len(etas) < 2:
        raise LoneValidator("difficulty needs at least two valid pairs")
    eta_rest, r_rest = _others(etas, winner), _others(rs, winner)
    if eta_rest == 0 or r_rest == 0:
        raise ZeroDenominator("sum over the other pairs is zero")
    return (etas[winner] / eta_rest) * (rs[winner] / r_rest)


def adjust_pow_difficulty(pseudo_counts: Sequence[int], rewards: Sequence, winner: int, target: int, *,
                          strict: bool = False) -> int:
    """T_{r+1} = (eta_x,i / sum_{j!=i} eta_x,j) * (R'_i / sum_{j!=i} R'_j) * T_r."""
    try:
        factor = pow_factor(pseudo_counts, rewards, winner)
    except (LoneValidator, ZeroDenominator) as exc:
        return _fallback(exc, target, strict)
    return clamp_target(factor * target, what="PoW target")


def pos_factor(extra_capacity: Sequence[int], stakes: Sequence[int], winner: int, incoming: int) -> Fraction:
    ks = [Fraction(k) for k in extra_capacity]
    ss = [Fraction(s) for s in stakes]
    if len(ks) != len(ss):
        raise ValueError("one K^(A) and one S per pair")
    if len(ks) < 2:
        raise LoneValidator("difficulty needs at least two valid pairs")
    k_rest, s_rest = _others(ks, winner), _others(ss, winner)
    if k_rest == 0 or s_rest == 0:
        raise ZeroDenominator("sum over the other pairs is zero")
    stake_ratio = ss[winner] / s_rest
    if k_rest >= incoming:
        return (ks[winner] / k_rest) * stake_ratio
    if ks[winner] == 0:
        raise ZeroDenominator("winner K^(A) is zero in the inverted branch")
    return (k_rest / ks[winner]) * stake_ratio


def adjust_pos_difficulty(extra_capacity: Sequence[int], stakes: Sequence[int], winner: int, incoming: int,
                          target: int, *, strict: bool = False) -> int:
    """Sub-chain rule: capacity ratio inverted once incoming blocks exceed the others' spare room."""
    try:
        factor = pos_factor(extra_capacity, stakes, winner, incoming)
    except (LoneValidator, ZeroDenominator) as exc:
        return _fallback(exc, target, strict)
    return clamp_target(factor * target, what="PoS target")


def baseline_adjust(params: BaselineParams, state: DifficultyState) -> DifficultyState:
    if params.model is BaselineModel.TWO_HOP:
        raise NotApplicable("2-hop blockchain defines no difficulty adjustment")
    if params.model is BaselineModel.NAKAMOTO:
        pow_target = clamp_target(params.t_r / params.t * state.pow_target, what="PoW target")
        return DifficultyState(pow_target, state.pos_target, state.epoch + 1)
    if params.mu_r <= 0:
        raise ZeroDenominator("TwinsCoin rule needs mu_r > 0")
    pow_scale = Fraction(params.mu) * params.t_r / (Fraction(params.mu_r) * params.t * params.e)
    pos_scale = Fraction(params.mu_r) * params.e / params.mu
    return DifficultyState(
        clamp_target(pow_scale * state.pow_target, what="PoW target"),
        clamp_target(pos_scale * state.pos_target, what="PoS target"),
        state.epoch + 1,
    )
