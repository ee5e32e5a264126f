"""Self-checks: golden hash vectors, detector sanity and run-twice determinism."""

from __future__ import annotations

import json
from fractions import Fraction
from importlib import resources

from .chain import PowBlock
from .consensus import check_pow_solution, leader_ticket, pow_digest
from .encoding import parse_digest
from .sharding import shard_id
from .vdf import derive_input, evaluate, verify, VdfParams


def golden_vectors() -> dict:
    return json.loads(resources.files("reinshard").joinpath("data/golden_vectors.json").read_text())


def check_golden(vectors: dict | None = None) -> dict:
    v = vectors or golden_vectors()
    out = {}
    p = v["pow_digest"]
    out["pow_digest"] = pow_digest(p["alpha_m"], parse_digest(p["h_rho"]), parse_digest(p["h_s"]),
                                   p["nonce"]).hex() == p["digest"]
    z = v["pow_check_zero"]
    zero = bytes(32)
    out["pow_check_zero"] = (pow_digest(z["alpha_m"], zero, zero, z["nonce"]).hex() == z["digest"]
                             and check_pow_solution(z["alpha_m"], zero, zero, z["nonce"], int(z["target"]))
                             == z["accepted"])
    out["zero_vdf_input"] = derive_input(zero, zero).hex() == v["zero_vdf_input"]["input"]
    b = v["pow_id"]
    block = PowBlock(parse_digest(b["h_rho"]), parse_digest(b["h_s"]), b["nonce"], Fraction(b["alpha_m"]),
                     b["is_pseudo"], b["miner"])
    out["pow_id"] = block.id.hex() == b["id"]
    t = v["leader_ticket"]
    out["leader_ticket"] = leader_ticket(block, bytes.fromhex(t["v_k"])) == t["ticket"]
    d = v["vdf_input"]
    out["vdf_input"] = derive_input(parse_digest(d["h_q"]), parse_digest(d["h_g"])).hex() == d["input"]
    for key in sorted(k for k in v if k.startswith("vdf_") and k != "vdf_input"):
        e = v[key]
        params = VdfParams(b"", bytes.fromhex(e["verify_key"]), 128, e["iterations"], Fraction(1))
        art = evaluate(params, bytes.fromhex(e["input"]))
        ok = art.output.hex() == e["output"] and [x.hex() for x in art.proof] == e["proof"]
        ok = ok and all(verify(params.verify_key, art.input, art.output, art.proof, art.iterations, segment=s)
                        for s in range(len(art.proof)))
        out[key] = ok
    s = v["shard_id"]
    out["shard_id"] = shard_id(s["anchor"], s["members"]).hex() == s["id"]
    return out


def run_conformance(seeds=(1,)) -> dict:
    from .scenarios.properties import detectors_fire
    from .scenarios.train_hotel import TrainHotelConfig, run_train_hotel
    checks = {f"golden:{k}": ok for k, ok in check_golden().items()}
    checks.update({f"detector:{k}": ok for k, ok in detectors_fire().items()})
    for seed in seeds:
        cfg = TrainHotelConfig()
        a, b = run_train_hotel(cfg, seed), run_train_hotel(cfg, seed)
        checks[f"determinism:{seed}"] = a.trace_digest == b.trace_digest
    return {"command": "conformance", "checks": checks}
