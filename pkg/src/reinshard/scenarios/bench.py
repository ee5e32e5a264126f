"""Block-generation microbenchmark and the list of host-bound reference figures.

Generating a block means hashing its payload; validating means every
validator re-hashes the payload and signs the digest. Absolute timings
depend on the host, so only the size trend is checked.
"""

from __future__ import annotations

import hashlib
import hmac
import random
import time

from ..errors import ConfigError

KB = 1024
SIZES = (1 * KB, 1000 * KB)
VALIDATOR_RANGE = (100, 1000)
RATIO_BAND = (100, 10_000)

# Reference figures that depend on the original test machine. They are
# reported next to the local measurements and never asserted.
NON_REPRODUCIBLE = [
    {"figure": "allocation latency (controlled)", "value": "89.32 ms", "reason": "hardware-bound"},
    {"figure": "allocation latency reduction", "value": "46.6%", "reason": "hardware-bound"},
    {"figure": "allocation latency overhead", "value": "4.1%", "reason": "hardware-bound"},
    {"figure": "1 KB block generation", "value": "0.39 ms", "reason": "hardware-bound"},
    {"figure": "1000 KB block generation", "value": "69.22 ms", "reason": "hardware-bound"},
    {"figure": "SHA-256 vs SHA-512 difference", "value": "6.2%", "reason": "hardware-bound"},
]


def block_gen_benchmark(block_size: int, validators: int, *, hash_name: str = "sha256", repeats: int = 3,
                        seed: int = 0) -> dict:
    if validators < 1:
        raise ConfigError("at least one validator is required")
    if block_size < 1:
        raise ConfigError("block size must be positive")
    payload = random.Random(seed).randbytes(block_size)
    keys = [hashlib.sha256(b"validator-%d" % i).digest() for i in range(validators)]
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        digest = hashlib.new(hash_name, payload).digest()
        for key in keys:
            if hashlib.new(hash_name, payload).digest() != digest:
                raise AssertionError("validator disagrees on the block digest")
            hmac.new(key, digest, hash_name).digest()
        best = min(best, time.perf_counter() - t0)
    return {"block_size": block_size, "validators": validators, "hash": hash_name,
            "seconds": best, "ms": best * 1e3}


def linearity_check(validators: int = 100, repeats: int = 3) -> dict:
    small = block_gen_benchmark(SIZES[0], validators, repeats=repeats)
    large = block_gen_benchmark(SIZES[1], validators, repeats=repeats)
    ratio = large["seconds"] / small["seconds"]
    return {"small": small, "large": large, "ratio": ratio,
            "ok": RATIO_BAND[0] <= ratio <= RATIO_BAND[1]}


def hash_delta(block_size: int = 1000 * KB, validators: int = 100, repeats: int = 3) -> dict:
    """Relative SHA-512 vs SHA-256 time; informational only."""
    a = block_gen_benchmark(block_size, validators, hash_name="sha256", repeats=repeats)
    b = block_gen_benchmark(block_size, validators, hash_name="sha512", repeats=repeats)
    return {"sha256_ms": a["ms"], "sha512_ms": b["ms"], "delta_pct": 100 * (b["seconds"] - a["seconds"]) / a["seconds"]}


def bench_report(validators: int = 100, repeats: int = 3) -> dict:
    lin = linearity_check(validators, repeats)
    return {"linearity": lin, "hash_delta": hash_delta(validators=validators, repeats=repeats),
            "non_reproducible": NON_REPRODUCIBLE, "ok": lin["ok"]}
