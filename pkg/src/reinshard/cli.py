"""Command-line entry point.

Every command writes ``trace.jsonl``, ``summary.csv`` and ``report.json``
to the output directory (``--out``, overridden by ``$REINSHARD_OUT``).
Exit status: 0 when all checks pass, 1 when a check fails, 2 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

from .errors import ConfigError, ReinshardError

log = logging.getLogger("reinshard")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def parse_seeds(text: str) -> list[int]:
    """``"1..100"``, ``"1,5,9"`` or a mix like ``"1..3,10"``."""
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ConfigError(f"empty seed range {part}")
            seeds.extend(range(lo, hi + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ConfigError("seed list is empty")
    return seeds


def _load_config(path) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a flat JSON object")
    return data


def _pick(args, data: dict, name: str, flag: str | None = None, default=None):
    value = getattr(args, flag or name, None)
    if value is not None:
        return value
    return data.get(name, default)


# ---------------------------------------------------------------- workers (module level for pickling)

def _train_hotel_job(job):
    from .scenarios.train_hotel import TrainHotelConfig, run_adversary, run_train_hotel
    kind, cfg_kwargs, seed, capability = job
    cfg = TrainHotelConfig(**cfg_kwargs)
    rep = run_adversary(cfg, seed, capability) if kind == "adversary" else run_train_hotel(cfg, seed)
    row = rep.summary_row(kind if capability is None else f"{kind}:{capability}")
    checks = {
        "conservation": rep.tickets_booked["train"] <= cfg.train_tickets
        and rep.tickets_booked["hotel"] <= cfg.hotel_tickets,
        "both_bounded": rep.both <= min(cfg.train_tickets, cfg.hotel_tickets),
        "trace_clean": not rep.violations,
    }
    if cfg.vdf_enabled:
        checks["atomic"] = rep.single == 0
    return {"seed": seed, "row": row, "trace": rep.trace, "checks": checks, "deadlock": rep.deadlock}


def _simulate_job(job):
    from .scenarios.chain_sim import run_simulation
    from .sim import SimConfig
    cfg_kwargs, seed, rounds = job
    rep = run_simulation(SimConfig(**{**cfg_kwargs, "seed": seed}), rounds)
    return {"seed": seed, "row": rep.summary_row(), "trace": rep.trace,
            "checks": {"invariants": rep.invariants_ok}, "shards": rep.shards}


def _run_jobs(fn, jobs, n_workers: int):
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


# ---------------------------------------------------------------- output

def _out_dir(args) -> Path:
    out = Path(os.environ.get("REINSHARD_OUT") or args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_outputs(out: Path, results: list, report: dict, fmt: str) -> None:
    def dump(obj):
        return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)

    tmp = out / "trace.jsonl.tmp"
    with open(tmp, "w") as fh:
        for res in results:
            for rec in res.get("trace", []):
                fh.write(dump({"seed": res["seed"], **rec}) + "\n")
    tmp.replace(out / "trace.jsonl")
    rows = [res["row"] for res in results if "row" in res]
    fields = []
    for row in rows:
        fields.extend(k for k in row if k not in fields)
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=2, default=str)
    if fmt == "json":
        print(dump(report))
    else:
        for row in rows:
            print(",".join(str(row[k]) for k in fields))


def _verdict(results) -> dict:
    failed = {}
    for res in results:
        for name, ok in res["checks"].items():
            if not ok:
                failed.setdefault(name, []).append(res["seed"])
    return failed


# ---------------------------------------------------------------- commands

def _train_hotel_kwargs(args, data) -> dict:
    vdf = args.vdf if args.vdf is not None else data.get("vdf_enabled", True)
    kw = {
        "vdf_enabled": bool(vdf),
        "t_eval": _pick(args, data, "t_eval", "te", Fraction(3)),
        "t_verify": _pick(args, data, "t_verify", "tv", Fraction(1)),
        "delay": _pick(args, data, "delay", "delay", Fraction(5, 2)),
        "latency": data.get("latency", Fraction(1, 10)),
        "clients": int(_pick(args, data, "clients", "clients", 50)),
        "train_tickets": int(data.get("train_tickets", 5)),
        "hotel_tickets": int(data.get("hotel_tickets", 5)),
        "adversary_fraction": _pick(args, data, "adversary_fraction", "adversary", Fraction(0)),
    }
    return kw


def cmd_train_hotel(args, data, seeds, out) -> int:
    kw = _train_hotel_kwargs(args, data)
    jobs = [("train_hotel", kw, s, None) for s in seeds]
    results = _run_jobs(_train_hotel_job, jobs, args.jobs)
    failed = _verdict(results)
    deadlocks = [r["seed"] for r in results if r["deadlock"]]
    if args.expect_deadlock:
        if len(deadlocks) != len(seeds):
            failed["deadlock_expected"] = [r["seed"] for r in results if not r["deadlock"]]
    elif deadlocks:
        failed["deadlock"] = deadlocks
    if not kw["vdf_enabled"]:
        singles = sum(1 for r in results if r["row"]["single"] > 0)
        info = {"seeds_with_single": singles}
    else:
        info = {}
    report = {"command": "train-hotel", "config": {k: str(v) for k, v in kw.items()}, "seeds": seeds,
              "deadlock_seeds": deadlocks, "failed": failed, **info}
    _write_outputs(out, results, report, args.format)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_adversary(args, data, seeds, out) -> int:
    kw = _train_hotel_kwargs(args, data)
    if args.adversary is None and "adversary_fraction" not in data:
        kw["adversary_fraction"] = Fraction(3, 10)
    frac = Fraction(str(kw["adversary_fraction"]))
    if not Fraction(3, 10) <= frac <= Fraction(1, 2):
        raise ConfigError("adversary fraction must lie in [0.30, 0.50]")
    caps = ["with_vdf", "without_vdf"] if args.capability == "both" else [args.capability]
    jobs = [("adversary", kw, s, c) for c in caps for s in seeds]
    results = _run_jobs(_train_hotel_job, jobs, args.jobs)
    failed = _verdict(results)
    report = {"command": "adversary", "fraction": str(frac), "capabilities": caps, "seeds": seeds,
              "denied_total": sum(r["row"]["denied"] for r in results), "failed": failed}
    _write_outputs(out, results, report, args.format)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_simulate(args, data, seeds, out) -> int:
    from .sim import SimConfig
    kw = {k: v for k, v in data.items() if k in SimConfig.__dataclass_fields__}
    for name, flag in (("t_eval", "te"), ("t_verify", "tv"), ("delay", "delay"),
                       ("adversary_fraction", "adversary")):
        if getattr(args, flag) is not None:
            kw[name] = getattr(args, flag)
    if args.mode:
        kw["mode"] = {"single": "single_block", "multi": "multi_block"}[args.mode]
    SimConfig(**kw)  # validate once up front
    rounds = int(args.rounds or data.get("rounds", 64))
    results = _run_jobs(_simulate_job, [(kw, s, rounds) for s in seeds], args.jobs)
    failed = _verdict(results)
    report = {"command": "simulate", "config": {k: str(v) for k, v in kw.items()}, "rounds": rounds,
              "seeds": seeds, "shards": {r["seed"]: r["shards"] for r in results}, "failed": failed}
    _write_outputs(out, results, report, args.format)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_properties(args, data, seeds, out) -> int:
    from .scenarios import properties as pr
    from .scenarios.train_hotel import TrainHotelConfig, run_train_hotel
    honest = pr.PropertyHarnessParams.honest(rounds=int(args.rounds or data.get("rounds", 100)))
    ups = Fraction(str(_pick(args, data, "upsilon", "upsilon", Fraction(1, 4))))
    quality = pr.PropertyHarnessParams(rounds=int(data.get("quality_rounds", 200)), adversary_stake=ups,
                                       honest_ratio=1 - ups)
    results = []
    quality_pass = 0
    for seed in seeds:
        t_honest = pr.run_block_tree(honest, seed)
        t_adv = pr.run_block_tree(quality, seed)
        th = run_train_hotel(TrainHotelConfig(clients=10), seed)
        growth = pr.check_chain_growth(t_honest, honest)
        prefix = pr.check_common_prefix(t_honest)
        wait = pr.check_chain_wait(th.trace)
        qual = pr.check_chain_quality(t_adv, quality)
        quality_pass += qual.ok
        results.append({"seed": seed, "trace": [], "checks": {
            "chain_growth": growth.ok, "common_prefix": prefix.ok, "chain_wait": wait.ok},
            "row": {"seed": seed, "scenario": "properties", "chain_growth": int(growth.ok),
                    "common_prefix": int(prefix.ok), "chain_wait": int(wait.ok),
                    "chain_quality": int(qual.ok), "max_adv_fraction": f"{qual.stats['max_fraction']:.4f}"}})
    need = len(seeds) - len(seeds) // 50
    detectors = pr.detectors_fire()
    failed = _verdict(results)
    if quality_pass < need:
        failed["chain_quality"] = [r["seed"] for r in results if not r["row"]["chain_quality"]]
    missed = [k for k, v in detectors.items() if not v]
    if missed:
        failed["planted_fixtures"] = missed
    report = {"command": "properties", "seeds": seeds, "quality_pass": quality_pass, "quality_needed": need,
              "quality_failure_bound": pr.quality_failure_bound(quality), "detectors": detectors,
              "failed": failed}
    _write_outputs(out, results, report, args.format)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_bench(args, data, seeds, out) -> int:
    from .scenarios.bench import bench_report
    from .vdf import benchmark
    validators = int(data.get("validators", 100))
    rep = bench_report(validators=validators)
    zetas = [int(z) for z in (args.zeta or "1000,10000,100000,1000000").split(",")]
    rows = benchmark(zetas, repeats=1)
    vdf_ok = all(r["verify_ms"] / r["eval_ms"] <= 0.1 for r in rows if r["zeta"] >= 10**6)
    report = {"command": "bench", "block_gen": rep, "vdf": rows, "vdf_ratio_ok": vdf_ok,
              "failed": {} if rep["ok"] and vdf_ok else {"bench": True}}
    results = [{"seed": 0, "trace": [], "row": {"scenario": "vdf", **r}} for r in rows]
    _write_outputs(out, results, report, args.format)
    return EXIT_OK if rep["ok"] and vdf_ok else EXIT_FAIL


def cmd_conformance(args, data, seeds, out) -> int:
    from .conformance import run_conformance
    report = run_conformance(seeds[:3])
    results = [{"seed": 0, "trace": [], "row": {"check": k, "ok": int(v)}} for k, v in report["checks"].items()]
    _write_outputs(out, results, report, args.format)
    return EXIT_OK if all(report["checks"].values()) else EXIT_FAIL


COMMANDS = {
    "simulate": cmd_simulate, "train-hotel": cmd_train_hotel, "adversary": cmd_adversary,
    "properties": cmd_properties, "bench": cmd_bench, "conformance": cmd_conformance,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reinshard", description="Dual PoW/PoS sharding simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat JSON config; flags override its values")
        p.add_argument("--seeds", default="1", help="e.g. 1..100 or 1,2,5")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--vdf", dest="vdf", action="store_true", default=None)
        p.add_argument("--no-vdf", dest="vdf", action="store_false")
        p.add_argument("--te", help="VDF evaluation time t_E (seconds)")
        p.add_argument("--tv", help="VDF verification time t_V (seconds)")
        p.add_argument("--delay", help="hold quantum tau' (seconds)")
        p.add_argument("--adversary", help="adversary stake fraction")
        p.add_argument("--mode", choices=["single", "multi"])
        p.add_argument("--out", default="reinshard-out")
        p.add_argument("--format", choices=["csv", "json"], default="csv")
        p.add_argument("--clients", type=int)
        p.add_argument("--rounds", type=int)
        p.add_argument("--upsilon", help="adversarial stake ratio for the chain quality run")
        p.add_argument("--capability", choices=["with_vdf", "without_vdf", "both"], default="both")
        p.add_argument("--zeta", help="comma-separated VDF iteration counts for bench")
        p.add_argument("--expect-deadlock", action="store_true",
                       help="treat a deadlocked run as the expected outcome")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        data = _load_config(args.config)
        seeds = parse_seeds(args.seeds)
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        out = _out_dir(args)
        return COMMANDS[args.command](args, data, seeds, out)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"reinshard: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ReinshardError as exc:
        print(f"reinshard: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
