"""Simulated verifiable delay function: iterated SHA-256 with checkpoints.

Eval walks ``zeta`` sequential hash steps from the input. The proof holds
``ceil(sqrt(zeta))`` entries: the intermediate digests at evenly spaced
positions, closed by a seal that commits to the verification key, input,
output and every checkpoint. Verify recomputes the seal (cheap) and fully
re-hashes a single randomly sampled segment of about ``sqrt(zeta)`` steps,
so a verifier spends roughly ``2*sqrt(zeta)`` hashes against ``zeta`` for
the evaluator.

Simulated timing (t_E, t_V) is separate from the wall-clock cost measured by
:func:`benchmark`; scenarios schedule completions from configured values.
"""

from __future__ import annotations

import csv
import hashlib
import math
import random
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .encoding import (
    DOMAIN_VDF_KEY,
    DOMAIN_VDF_SEAL,
    DOMAIN_VDF_STEP,
    MAX_TARGET,
    H,
    check_digest,
    hex_digest,
    parse_digest,
    parse_fraction,
    tagged_hash,
)
from .errors import BadSecurityLevel, ContractViolation, MalformedBlock, VdfParamError

SECURITY_LEVELS = (128, 256)
DEFAULT_COST_PER_ITERATION = Fraction(1, 1000)  # simulated seconds per hash step


@dataclass(frozen=True)
class VdfParams:
    eval_key: bytes
    verify_key: bytes
    security: int
    iterations: int
    tau: Fraction

    def __post_init__(self):
        if self.iterations < 1:
            raise VdfParamError("iterations must be >= 1")
        if self.tau <= 0:
            raise VdfParamError("tau must be positive")


@dataclass(frozen=True)
class VdfArtifact:
    input: bytes
    output: bytes
    proof: tuple
    iterations: int

    def to_dict(self) -> dict:
        return {
            "input": hex_digest(self.input),
            "output": hex_digest(self.output),
            "proof": [hex_digest(p) for p in self.proof],
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "VdfArtifact":
        return cls(
            input=parse_digest(data["input"], "vdf.input"),
            output=parse_digest(data["output"], "vdf.output"),
            proof=tuple(parse_digest(p, "vdf.proof") for p in data["proof"]),
            iterations=int(data["iterations"]),
        )


def ceil_sqrt(n: int) -> int:
    root = math.isqrt(n)
    return root if root * root == n else root + 1


def checkpoint_positions(iterations: int) -> list[int]:
    """Step indices (1-based, last == iterations) closing each proof segment."""
    m = ceil_sqrt(iterations)
    return [k * iterations // m for k in range(1, m + 1)]


def iterations_for(tau, pos_target: int, cost_per_iteration=DEFAULT_COST_PER_ITERATION) -> int:
    """zeta = ceil(tau / c) * max(1, bits(2^256 / T~) / 8), rounded up."""
    tau = parse_fraction(tau)
    cost = parse_fraction(cost_per_iteration)
    if tau <= 0:
        raise VdfParamError(f"tau must be positive, got {tau}")
    if cost <= 0:
        raise VdfParamError("cost per iteration must be positive")
    if not 1 <= pos_target <= MAX_TARGET:
        raise VdfParamError("PoS target must lie in [1, 2^256 - 1]")
    base = math.ceil(tau / cost)
    width = Fraction((2**256 // pos_target).bit_length(), 8)
    return math.ceil(base * max(Fraction(1), width))


def setup(security: int, tau, pos_target: int = MAX_TARGET, *,
          cost_per_iteration=DEFAULT_COST_PER_ITERATION, seed: bytes = b"") -> VdfParams:
    if security not in SECURITY_LEVELS:
        raise BadSecurityLevel(f"security must be one of {SECURITY_LEVELS}, got {security}")
    tau = parse_fraction(tau)
    zeta = iterations_for(tau, pos_target, cost_per_iteration)
    width = security // 8
    eval_key = tagged_hash(DOMAIN_VDF_KEY, "eval", seed, security)[:width]
    verify_key = tagged_hash(DOMAIN_VDF_KEY, "verify", seed, security)[:width]
    return VdfParams(eval_key, verify_key, security, zeta, tau)


def derive_input(h_q: bytes, h_g: bytes) -> bytes:
    """I = H(h_q, h_g): parent pair's PoS hash, then previous PoS hash."""
    return H(check_digest(h_q, "h_q"), check_digest(h_g, "h_g"))


def _walk(start: bytes, steps: int) -> bytes:
    sha = hashlib.sha256
    prefix = DOMAIN_VDF_STEP
    x = start
    for _ in range(steps):
        x = sha(prefix + x).digest()
    return x


def _seal(verify_key: bytes, input_: bytes, output: bytes, iterations: int,
          checkpoints: Sequence[bytes]) -> bytes:
    return tagged_hash(DOMAIN_VDF_SEAL, verify_key, input_, output, iterations, tuple(checkpoints))


def evaluate(params: VdfParams, input_: bytes) -> VdfArtifact:
    check_digest(input_, "vdf input")
    positions = checkpoint_positions(params.iterations)
    checkpoints = []
    x = input_
    done = 0
    for pos in positions:
        x = _walk(x, pos - done)
        done = pos
        checkpoints.append(x)
    output = checkpoints.pop()
    proof = tuple(checkpoints) + (_seal(params.verify_key, input_, output, params.iterations, checkpoints),)
    return VdfArtifact(input_, output, proof, params.iterations)


def check_timing(t_verify, t_eval) -> None:
    """Refuse to run when verification is not strictly faster than evaluation."""
    if parse_fraction(t_verify) >= parse_fraction(t_eval):
        raise ContractViolation(f"t_V={t_verify} must be strictly below t_E={t_eval}")


def verify(verify_key: bytes, input_: bytes, output: bytes, proof: Sequence[bytes], iterations: int, *,
           rng: random.Random | None = None, segment: int | None = None,
           t_verify=None, t_eval=None) -> bool:
    """Check the seal, then fully re-hash one sampled segment.

    ``segment`` pins the sampled segment (0-based); otherwise it is drawn
    from ``rng`` (a fresh unseeded generator if omitted).
    """
    if t_verify is not None and t_eval is not None:
        check_timing(t_verify, t_eval)
    if iterations < 1 or len(proof) != ceil_sqrt(iterations):
        return False
    try:
        check_digest(input_)
        check_digest(output)
        for p in proof:
            check_digest(p)
    except MalformedBlock:
        return False
    checkpoints = list(proof[:-1])
    if proof[-1] != _seal(verify_key, input_, output, iterations, checkpoints):
        return False
    positions = checkpoint_positions(iterations)
    m = len(positions)
    if segment is None:
        segment = (rng or random.Random()).randrange(m)
    if not 0 <= segment < m:
        raise ValueError(f"segment {segment} outside [0, {m})")
    start = input_ if segment == 0 else checkpoints[segment - 1]
    end = output if segment == m - 1 else checkpoints[segment]
    steps = positions[segment] - (positions[segment - 1] if segment else 0)
    return _walk(start, steps) == end


def verify_artifact(verify_key: bytes, artifact: VdfArtifact, **kwargs) -> bool:
    return verify(verify_key, artifact.input, artifact.output, artifact.proof, artifact.iterations, **kwargs)


def benchmark(iterations: Sequence[int], repeats: int = 3, seed: bytes = b"bench") -> list[dict]:
    """Wall-clock eval and verify time per iteration count (best of ``repeats``)."""
    rows = []
    for zeta in iterations:
        params = VdfParams(b"\x00" * 16, b"\x01" * 16, 128, zeta, Fraction(1))
        input_ = H(seed, zeta)
        eval_s = verify_s = math.inf
        for rep in range(repeats):
            t0 = time.perf_counter()
            art = evaluate(params, input_)
            eval_s = min(eval_s, time.perf_counter() - t0)
            t0 = time.perf_counter()
            ok = verify_artifact(params.verify_key, art, rng=random.Random(rep))
            verify_s = min(verify_s, time.perf_counter() - t0)
            assert ok
        rows.append({"zeta": zeta, "eval_ms": eval_s * 1e3, "verify_ms": verify_s * 1e3})
    return rows


def write_benchmark_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["zeta", "eval_ms", "verify_ms"])
        writer.writeheader()
        for row in rows:
            writer.writerow({"zeta": row["zeta"], "eval_ms": f"{row['eval_ms']:.4f}",
                             "verify_ms": f"{row['verify_ms']:.4f}"})
