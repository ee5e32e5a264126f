"""Train-and-Hotel booking: two ticket servers in different shards.

With VDF holds every client runs one inter-shard session covering both
servers, and the booking commits both tickets or neither. Without holds a
client fires two independent requests and each server books first come,
first served, so some clients end up with a single ticket.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from ..encoding import parse_fraction
from ..errors import ConfigError
from ..sim import EventKind, Simulator, latency_model, to_seconds, to_us
from ..xshard import XShardConfig, XShardEngine, check_hold_safety, check_state_order

TRAIN = "train-server"
HOTEL = "hotel-server"
SERVER_SHARDS = {TRAIN: "shard-train", HOTEL: "shard-hotel"}


class Outcome(str, enum.Enum):
    BOTH = "both"
    TRAIN_ONLY = "train_only"
    HOTEL_ONLY = "hotel_only"
    NONE_DENIED = "none_denied"
    NONE_ERROR = "none_error"


SINGLE = (Outcome.TRAIN_ONLY.value, Outcome.HOTEL_ONLY.value)


@dataclass
class TrainHotelConfig:
    train_tickets: int = 5
    hotel_tickets: int = 5
    clients: int = 50
    vdf_enabled: bool = True
    t_eval: Fraction = Fraction(3)
    t_verify: Fraction = Fraction(1)
    delay: Fraction = Fraction(5, 2)
    latency: object = Fraction(1, 10)
    adversary_fraction: Fraction = Fraction(0)
    adversary_capability: str = "with_vdf"
    send_jitter: Fraction = Fraction(1)  # spread of independent requests without holds
    max_stakes: int = 9

    def __post_init__(self):
        for name in ("t_eval", "t_verify", "delay", "adversary_fraction", "send_jitter"):
            setattr(self, name, parse_fraction(getattr(self, name)))
        self.latency = latency_model(self.latency)
        if min(self.train_tickets, self.hotel_tickets, self.clients) < 0:
            raise ConfigError("ticket and client counts must be non-negative")
        if self.t_verify >= self.t_eval:
            raise ConfigError("t_V must be below t_E")
        if not 0 <= self.adversary_fraction <= Fraction(1, 2):
            raise ConfigError("adversary fraction must lie in [0, 0.5]")
        if self.adversary_capability not in ("with_vdf", "without_vdf"):
            raise ConfigError("adversary capability must be with_vdf or without_vdf")
        if SERVER_SHARDS[TRAIN] == SERVER_SHARDS[HOTEL]:
            raise ConfigError("the two servers must sit in different shards")

    def to_dict(self) -> dict:
        out = {k: (str(v) if isinstance(v, Fraction) else v) for k, v in asdict(self).items()}
        out["latency"] = repr(self.latency)
        return out


@dataclass
class ScenarioReport:
    seed: int
    outcomes: dict
    totals: dict
    completion_time: float
    booking_time: float | None
    deadlock: bool
    errors: int
    tickets_booked: dict
    adversarial_sessions: int = 0
    trace: list = field(default_factory=list, repr=False)
    trace_digest: str = ""
    violations: list = field(default_factory=list)

    @property
    def single(self) -> int:
        return sum(self.totals.get(k, 0) for k in SINGLE)

    @property
    def both(self) -> int:
        return self.totals.get(Outcome.BOTH.value, 0)

    @property
    def denied(self) -> int:
        return self.totals.get(Outcome.NONE_DENIED.value, 0)

    def summary_row(self, scenario: str = "train_hotel") -> dict:
        return {
            "seed": self.seed, "scenario": scenario,
            "both": self.both, "single": self.single, "denied": self.denied,
            "error": self.totals.get(Outcome.NONE_ERROR.value, 0),
            "train_booked": self.tickets_booked["train"], "hotel_booked": self.tickets_booked["hotel"],
            "completion_s": f"{self.completion_time:.6f}",
            "booking_s": "" if self.booking_time is None else f"{self.booking_time:.6f}",
            "deadlock": int(self.deadlock), "errors": self.errors,
            "adversarial": self.adversarial_sessions, "trace_digest": self.trace_digest,
        }


def theoretical_completion(n_participants: int, t_eval, delay) -> Fraction:
    """n * t_E + tau': sequential evaluations followed by one hold quantum."""
    if n_participants < 0:
        raise ValueError("participant count cannot be negative")
    return n_participants * parse_fraction(t_eval) + parse_fraction(delay)


def _client_names(n: int) -> list[str]:
    return [f"client-{i:03d}" for i in range(n)]


def _run_with_holds(cfg: TrainHotelConfig, seed: int, n_adversarial: int) -> ScenarioReport:
    sim = Simulator(seed)
    stock = {TRAIN: cfg.train_tickets, HOTEL: cfg.hotel_tickets}
    outcomes: dict = {}
    commits: list = []
    finished_at: list = []

    def commit(session):
        if stock[TRAIN] > 0 and stock[HOTEL] > 0:
            stock[TRAIN] -= 1
            stock[HOTEL] -= 1
            commits.append(sim.now)
            return Outcome.BOTH.value
        return Outcome.NONE_DENIED.value

    def finish(session):
        if session.tags.get("adversarial"):
            return
        finished_at.append(sim.now)
        label = session.outcome
        if label in ("error", "rejected"):
            label = Outcome.NONE_ERROR.value
        outcomes[session.sender] = label

    xcfg = XShardConfig(cfg.t_eval, cfg.t_verify, cfg.delay, cfg.latency)
    engine = XShardEngine(sim, xcfg, on_commit=commit, on_finish=finish)
    stakes_rng = sim.rng["stakes"]
    for name in _client_names(cfg.clients):
        engine.submit(name, (TRAIN, HOTEL), stakes_rng.randint(0, cfg.max_stakes), at=0,
                      session_id=name)
    if n_adversarial:
        forged = cfg.adversary_capability == "without_vdf"
        adv_rng = sim.rng["adversary"]
        for i in range(n_adversarial):
            at = to_us(Fraction(adv_rng.randint(0, 1000), 1000))
            engine.submit(f"adversary-{i:03d}", (TRAIN, HOTEL), cfg.max_stakes + 1, at=at,
                          forged=forged, withhold=not forged, session_id=f"adversary-{i:03d}",
                          adversarial=True)
    sim.run_until()
    totals = Counter(outcomes.values())
    errors = sum(1 for r in sim.trace if "error" in (r.get("detail") or {}))
    booked = {"train": cfg.train_tickets - stock[TRAIN], "hotel": cfg.hotel_tickets - stock[HOTEL]}
    violations = check_state_order(sim.trace) + check_hold_safety(sim.trace)
    return ScenarioReport(
        seed=seed, outcomes=outcomes, totals=dict(totals),
        completion_time=to_seconds(max(finished_at, default=0)),
        booking_time=to_seconds(commits[-1]) if commits else None,
        deadlock=booked["train"] == 0 and booked["hotel"] == 0 and errors > 0 and cfg.clients > 0,
        errors=errors, tickets_booked=booked, adversarial_sessions=n_adversarial,
        trace=sim.trace, trace_digest=sim.trace_digest(), violations=violations,
    )


def _run_without_holds(cfg: TrainHotelConfig, seed: int, n_adversarial: int) -> ScenarioReport:
    sim = Simulator(seed)
    stock = {TRAIN: cfg.train_tickets, HOTEL: cfg.hotel_tickets}
    free_at = {TRAIN: 0, HOTEL: 0}
    got = {name: set() for name in _client_names(cfg.clients)}
    commits = []
    done = []
    send_rng, lat_rng = sim.rng["clients"], sim.rng["latency"]
    jitter_us = to_us(cfg.send_jitter)

    def arrive(client, server):
        def handler(ev):
            # each server books first come, first served, one booking per tau'
            start = max(sim.now, free_at[server])
            free_at[server] = start + to_us(cfg.delay)
            ok = stock[server] > 0
            if ok:
                stock[server] -= 1
                got[client].add(server)
                commits.append(free_at[server])
            done.append(free_at[server])
            sim.log(session=f"{client}/{server}", step=None, state="Booked" if ok else "Denied",
                    detail={"server": server, "done_at": to_seconds(free_at[server])})
        return handler

    for client in got:
        for server in (TRAIN, HOTEL):
            at = send_rng.randint(0, jitter_us) + to_us(cfg.latency.sample(lat_rng))
            sim.schedule(at, EventKind.TX_STEP, arrive(client, server))
    sim.run_until()
    outcomes = {}
    for client, servers in got.items():
        if servers == {TRAIN, HOTEL}:
            outcomes[client] = Outcome.BOTH.value
        elif servers == {TRAIN}:
            outcomes[client] = Outcome.TRAIN_ONLY.value
        elif servers == {HOTEL}:
            outcomes[client] = Outcome.HOTEL_ONLY.value
        else:
            outcomes[client] = Outcome.NONE_DENIED.value
    booked = {"train": cfg.train_tickets - stock[TRAIN], "hotel": cfg.hotel_tickets - stock[HOTEL]}
    return ScenarioReport(
        seed=seed, outcomes=outcomes, totals=dict(Counter(outcomes.values())),
        completion_time=to_seconds(max(done, default=0)),
        booking_time=to_seconds(max(commits)) if commits else None,
        deadlock=False, errors=0, tickets_booked=booked, adversarial_sessions=n_adversarial,
        trace=sim.trace, trace_digest=sim.trace_digest(),
    )


def run_train_hotel(cfg: TrainHotelConfig, seed: int) -> ScenarioReport:
    return _run(cfg, seed, 0)


def _run(cfg, seed, n_adversarial):
    if cfg.vdf_enabled:
        return _run_with_holds(cfg, seed, n_adversarial)
    return _run_without_holds(cfg, seed, n_adversarial)


def run_adversary(cfg: TrainHotelConfig, seed: int, capability: str | None = None) -> ScenarioReport:
    """Adversary owning ``adversary_fraction`` of the stakes spams high-priority holds.

    ``with_vdf``: it evaluates at honest speed, takes the holds and never
    confirms, so receivers stay blocked until expiry. ``without_vdf``: it
    skips evaluation and its forged proofs are rejected at verification.
    Either way bookings stay atomic; the damage is delay and denial.
    """
    if capability is not None:
        cfg = TrainHotelConfig(**{**asdict(cfg), "adversary_capability": capability,
                                  "latency": cfg.latency})
    n_adv = round(cfg.adversary_fraction * cfg.clients)
    return _run(cfg, seed, n_adv)
