"""Intra- and inter-shard transaction sessions.

An inter-shard session walks the twelve-step handshake:

 1 prove priority        7 hold confirmed
 2 request info          8 channel request
 3 info fetched          9 channel set
 4 receiver resolved    10 protocol up
 5 hold initiated       11 transactions active
 6 verify hold          12 ledgers updated

Before step 5 the sender evaluates the VDF once per receiver. A hold
reserves every receiver for ``tau' * D + Gamma``; the verifier needs
``D * t_V + Gamma`` to confirm it, so the hold only confirms when
``t_V < tau'``. Receivers already held make later senders wait; waiting
senders are served by stakes (desc), then arrival, then session digest.

Sessions are advanced only by events of a :class:`~reinshard.sim.Simulator`.
Every step lands in the trace as ``{t, session, step, state, detail}``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .encoding import digest_int, parse_fraction, tagged_hash, DOMAIN_NODE_ID
from .errors import ContractViolation, HoldContention, IllegalState, InvalidParty, UnknownNode
from .sim import ConstantLatency, EventKind, Simulator, latency_model, to_us
from .sharding import shard_lookup

log = logging.getLogger(__name__)


class TxState(str, enum.Enum):
    INIT = "Init"
    PRIORITY_PROVED = "PriorityProved"
    INFO_FETCHED = "InfoFetched"
    RECEIVER_RESOLVED = "ReceiverResolved"
    HOLD_INIT = "HoldInit"
    HOLD_CONFIRMED = "HoldConfirmed"
    CHANNEL_SET = "ChannelSet"
    PROTOCOL_UP = "ProtocolUp"
    TX_ACTIVE = "TxActive"
    LEDGER_UPDATED = "LedgerUpdated"
    TIMED_OUT = "TimedOut"
    REJECTED = "Rejected"


ORDER = [
    TxState.INIT, TxState.PRIORITY_PROVED, TxState.INFO_FETCHED, TxState.RECEIVER_RESOLVED,
    TxState.HOLD_INIT, TxState.HOLD_CONFIRMED, TxState.CHANNEL_SET, TxState.PROTOCOL_UP,
    TxState.TX_ACTIVE, TxState.LEDGER_UPDATED,
]
STEP = {
    TxState.PRIORITY_PROVED: 1, TxState.INFO_FETCHED: 3, TxState.RECEIVER_RESOLVED: 4,
    TxState.HOLD_INIT: 5, TxState.HOLD_CONFIRMED: 7, TxState.CHANNEL_SET: 9,
    TxState.PROTOCOL_UP: 10, TxState.TX_ACTIVE: 11, TxState.LEDGER_UPDATED: 12,
}
TERMINAL = {TxState.LEDGER_UPDATED, TxState.TIMED_OUT, TxState.REJECTED}
TIMEOUT_FROM = {TxState.HOLD_INIT, TxState.HOLD_CONFIRMED}


class TxMode(str, enum.Enum):
    P2P = "P2P"
    P2MP = "P2MP"


def choose_mode(n_receivers: int) -> TxMode:
    if n_receivers < 1:
        raise InvalidParty("a transaction needs at least one receiver")
    return TxMode.P2P if n_receivers == 1 else TxMode.P2MP


def party_digest(name) -> int:
    return digest_int(tagged_hash(DOMAIN_NODE_ID, str(name)))


def priority(profile) -> int:
    """psi = stakes earned; accepts a profile with ``stakes`` or a plain count."""
    stakes = getattr(profile, "stakes", profile)
    return max(0, int(stakes))


def priority_key(psi: int, name) -> tuple:
    """Sort key: higher psi first, then lower node digest."""
    return (-psi, party_digest(name))


def hold_duration(delay, pairs_involved: int, latency, tau=None) -> Fraction:
    """tau' * D + Gamma, guarded by tau' < tau when the VDF delay is known."""
    delay, latency = parse_fraction(delay), parse_fraction(latency)
    if tau is not None and delay >= parse_fraction(tau):
        raise ContractViolation(f"delay factor {delay} must stay below the VDF delay {tau}")
    if pairs_involved < 1:
        raise ValueError("D must be at least 1")
    return delay * pairs_involved + latency


@dataclass(frozen=True)
class HoldTicket:
    sender: str
    receivers: frozenset
    priority: int
    pairs_involved: int
    latency: Fraction
    hold_duration: Fraction
    start: int  # microseconds
    expires_at: int  # microseconds
    session: str = ""

    @property
    def advertised_wait(self) -> Fraction:
        return (self.hold_duration - self.latency) / self.pairs_involved


@dataclass
class TxSession:
    id: str
    sender: str
    receivers: tuple
    psi: int = 0
    kind: str = "inter"
    arrival: int = 0
    timer: int | None = None  # absolute deadline, microseconds
    state: TxState = TxState.INIT
    history: list = field(default_factory=list)
    ticket: HoldTicket | None = None
    outcome: str | None = None
    forged: bool = False
    withhold: bool = False
    tags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.receivers = tuple(self.receivers)
        self.mode = choose_mode(len(self.receivers))
        self.digest = digest_int(tagged_hash(DOMAIN_NODE_ID, "session", self.id, self.sender))

    @property
    def pairs_involved(self) -> int:
        return len(self.receivers)

    def advance(self, new: TxState, t: int) -> None:
        if self.state in TERMINAL:
            raise IllegalState(f"session {self.id} already finished in {self.state.value}")
        if new is TxState.TIMED_OUT:
            if self.state not in TIMEOUT_FROM:
                raise IllegalState(f"timeout is not possible from {self.state.value}")
        elif new is not TxState.REJECTED:
            if ORDER.index(new) <= ORDER.index(self.state):
                raise IllegalState(f"{self.state.value} -> {new.value} goes backwards")
            if self.kind == "inter" and ORDER.index(new) != ORDER.index(self.state) + 1:
                raise IllegalState(f"{self.state.value} -> {new.value} skips a step")
        self.state = new
        self.history.append((t, new))


@dataclass
class TxResult:
    session: TxSession
    ledger: list
    trace: list

    @property
    def state(self) -> TxState:
        return self.session.state


def update_ledgers(session: TxSession, ledger: list, t: int = 0) -> list:
    """One entry per party, sender first; moves the session to LedgerUpdated."""
    if session.state is not TxState.TX_ACTIVE:
        raise IllegalState(f"ledger update needs TxActive, session is {session.state.value}")
    entries = [{"session": session.id, "party": session.sender, "role": "sender", "reward": 1}]
    entries += [{"session": session.id, "party": r, "role": "receiver", "reward": 1} for r in session.receivers]
    ledger.extend(entries)
    session.advance(TxState.LEDGER_UPDATED, t)
    return entries


class HoldRegistry:
    """At most one active hold per receiver."""

    def __init__(self):
        self.held: dict = {}

    def free(self, receivers) -> bool:
        return all(r not in self.held for r in receivers)

    def acquire(self, ticket: HoldTicket) -> None:
        busy = [r for r in ticket.receivers if r in self.held]
        if busy:
            raise HoldContention(f"receivers already held: {sorted(busy)}")
        for r in ticket.receivers:
            self.held[r] = ticket

    def release(self, ticket: HoldTicket) -> list:
        freed = [r for r in sorted(ticket.receivers) if self.held.get(r) is ticket]
        for r in freed:
            del self.held[r]
        return freed


# ---------------------------------------------------------------- intra-shard

def intra_shard_tx(sender, receivers, shard, ledger: list | None = None, t: int = 0) -> TxResult:
    """Validate, fetch, pick P2P/P2MP, run, update ledgers; no holds inside one shard."""
    receivers = tuple(receivers)
    members = shard.members if hasattr(shard, "members") else set(shard)
    bad = [p for p in (sender,) + receivers if p not in members]
    if bad:
        log.warning("intra-shard tx rejected, parties outside the shard: %s", bad)
        raise InvalidParty(f"parties not in shard: {bad}")
    session = TxSession(f"intra:{sender}:{t}", sender, receivers, kind="intra", arrival=t)
    trace = []
    for state in (TxState.PRIORITY_PROVED, TxState.INFO_FETCHED, TxState.PROTOCOL_UP, TxState.TX_ACTIVE):
        session.advance(state, t)
        trace.append({"t": t, "session": session.id, "step": STEP[state], "state": state.value,
                      "detail": {"mode": session.mode.value}})
    ledger = [] if ledger is None else ledger
    entries = update_ledgers(session, ledger, t)
    trace.append({"t": t, "session": session.id, "step": 12, "state": session.state.value,
                  "detail": {"entries": len(entries)}})
    return TxResult(session, entries, trace)


# ---------------------------------------------------------------- inter-shard engine

@dataclass
class XShardConfig:
    t_eval: Fraction = Fraction(3)
    t_verify: Fraction = Fraction(1)
    delay: Fraction = Fraction(5, 2)  # tau'
    latency: object = field(default_factory=lambda: ConstantLatency(Fraction(1, 10)))
    tau: Fraction | None = None  # VDF delay; defaults to t_eval
    tx_time: Fraction | None = None  # time spent in step 11; defaults to the delay factor
    evaluator: str = "shared"  # or "per_sender"

    def __post_init__(self):
        self.t_eval = parse_fraction(self.t_eval)
        self.t_verify = parse_fraction(self.t_verify)
        self.delay = parse_fraction(self.delay)
        self.latency = latency_model(self.latency)
        self.tau = self.t_eval if self.tau is None else parse_fraction(self.tau)
        self.tx_time = self.delay if self.tx_time is None else parse_fraction(self.tx_time)
        if self.evaluator not in ("shared", "per_sender"):
            raise ValueError("evaluator must be 'shared' or 'per_sender'")


class XShardEngine:
    """Drives inter-shard sessions on a simulator.

    ``on_commit(session) -> str`` runs at the end of step 11 and returns the
    outcome label; ``on_finish(session)`` fires on every terminal state.
    """

    def __init__(self, sim: Simulator, config: XShardConfig | None = None, *, directory=None,
                 on_commit: Callable | None = None, on_finish: Callable | None = None):
        self.sim = sim
        self.cfg = config or XShardConfig()
        self.directory = directory  # optional set of known party names
        self.on_commit = on_commit or (lambda s: "done")
        self.on_finish = on_finish
        self.holds = HoldRegistry()
        self.ledger: list = []
        self.sessions: dict[str, TxSession] = {}
        self._eval_queue: list = []
        self._eval_busy = False
        self._hold_waiting: list = []
        self._hold_dispatch = None
        self._eval_dispatch = None
        self._expiry: dict = {}
        self._latency_rng = sim.rng["latency"]

    # -- helpers
    def _gamma(self) -> Fraction:
        return self.cfg.latency.sample(self._latency_rng)

    def _log(self, s: TxSession, step, detail=None, state=None):
        self.sim.log(session=s.id, step=step, state=(state or s.state).value, detail=detail or {})

    def _go(self, s: TxSession, state: TxState, detail=None):
        s.advance(state, self.sim.now)
        self._log(s, STEP.get(state), detail)

    def _later(self, seconds, fn, kind=EventKind.TX_STEP, **payload):
        return self.sim.after(to_us(seconds), kind, lambda ev: fn(), payload)

    def _finish(self, s: TxSession, outcome: str):
        s.outcome = outcome
        if self.on_finish:
            self.on_finish(s)

    # -- public
    def submit(self, sender, receivers, psi: int = 0, *, at: int | None = None, timer: int | None = None,
               forged: bool = False, withhold: bool = False, session_id: str | None = None, **tags) -> TxSession:
        at = self.sim.now if at is None else at
        sid = session_id or f"s{len(self.sessions):04d}"
        s = TxSession(sid, sender, receivers, psi, arrival=at, timer=timer, forged=forged,
                      withhold=withhold, tags=tags)
        self.sessions[sid] = s
        self.sim.schedule(at, EventKind.TX_STEP, lambda ev: self._start(s), {"session": sid})
        return s

    # -- steps
    def _start(self, s: TxSession):
        if self.directory is not None:
            bad = [p for p in (s.sender,) + s.receivers if p not in self.directory]
            if bad:
                s.advance(TxState.REJECTED, self.sim.now)
                self._log(s, None, {"error": "invalid party", "parties": bad})
                return self._finish(s, "rejected")
        self._go(s, TxState.PRIORITY_PROVED, {"psi": s.psi, "mode": s.mode.value})
        self._log(s, 2, {"action": "request_info"})
        self._later(self._gamma(), lambda: self._info(s))

    def _info(self, s):
        self._go(s, TxState.INFO_FETCHED)
        self._later(self._gamma(), lambda: self._resolved(s))

    def _resolved(self, s):
        self._go(s, TxState.RECEIVER_RESOLVED, {"receivers": list(s.receivers)})
        if s.forged:
            return self._request_hold(s)
        if self.cfg.evaluator == "per_sender":
            self._later(self.cfg.t_eval * s.pairs_involved, lambda: self._eval_done(s), EventKind.VDF_EVAL_DONE)
            return
        self._eval_queue.append(s)
        self._kick_eval()

    def _kick_eval(self):
        if self._eval_dispatch is None:
            self._eval_dispatch = self.sim.after(0, EventKind.TX_STEP, lambda ev: self._dispatch_eval())

    def _dispatch_eval(self):
        self._eval_dispatch = None
        if self._eval_busy or not self._eval_queue:
            return
        self._eval_queue.sort(key=lambda x: (-x.psi, x.arrival, x.digest))
        s = self._eval_queue.pop(0)
        self._eval_busy = True
        self._later(self.cfg.t_eval * s.pairs_involved, lambda: self._eval_done(s, shared=True),
                    EventKind.VDF_EVAL_DONE)

    def _eval_done(self, s, shared=False):
        if shared:
            self._eval_busy = False
            self._kick_eval()
        self._request_hold(s)

    def _request_hold(self, s):
        self._hold_waiting.append(s)
        self._kick_hold()

    def _kick_hold(self):
        if self._hold_dispatch is None:
            self._hold_dispatch = self.sim.after(0, EventKind.TX_STEP, lambda ev: self._dispatch_hold())

    def _dispatch_hold(self):
        self._hold_dispatch = None
        self._hold_waiting.sort(key=lambda x: (-x.psi, x.arrival, x.digest))
        still = []
        for s in self._hold_waiting:
            try:
                self._hold_init(s)
            except HoldContention as exc:
                if not s.tags.get("_contended"):
                    self._log(s, None, {"contention": str(exc)})
                    s.tags["_contended"] = True
                still.append(s)
        self._hold_waiting = still

    def _hold_init(self, s):
        gamma = self._gamma()
        duration = hold_duration(self.cfg.delay, s.pairs_involved, gamma, self.cfg.tau)
        now = self.sim.now
        ticket = HoldTicket(s.sender, frozenset(s.receivers), s.psi, s.pairs_involved, gamma, duration,
                            now, now + to_us(duration), s.id)
        self.holds.acquire(ticket)
        s.ticket = ticket
        self._go(s, TxState.HOLD_INIT, {
            "receivers": sorted(s.receivers), "hold": str(duration), "gamma": str(gamma),
            "D": s.pairs_involved, "advertised": str(self.cfg.delay), "expires_at": ticket.expires_at,
            "t_v": str(self.cfg.t_verify), "t_e": str(self.cfg.t_eval)})
        self._expiry[s.id] = self.sim.schedule(ticket.expires_at, EventKind.HOLD_EXPIRE,
                                               lambda ev: self._expire(s))
        self._log(s, 6, {"action": "verify_hold"})
        if s.withhold:
            return
        verify_time = self.cfg.t_verify * s.pairs_involved + gamma
        if s.forged:
            self._later(self.cfg.t_verify, lambda: self._reject_forged(s), EventKind.VDF_VERIFY_DONE)
            return
        self._later(verify_time, lambda: self._confirm(s), EventKind.VDF_VERIFY_DONE)

    def _release(self, s):
        ev = self._expiry.pop(s.id, None)
        if ev is not None:
            self.sim.cancel(ev)
        if s.ticket is not None:
            freed = self.holds.release(s.ticket)
            if freed:
                self.sim.log(session=s.id, step=None, state=s.state.value, detail={"released": freed})
                self._kick_hold()

    def _expire(self, s):
        self._expiry.pop(s.id, None)
        if s.ticket is not None and any(self.holds.held.get(r) is s.ticket for r in s.receivers):
            freed = self.holds.release(s.ticket)
            self.sim.log(session=s.id, step=None, state=s.state.value, detail={"released": freed, "expired": True})
            self._kick_hold()
        if s.withhold and s.state in TIMEOUT_FROM:
            self._timeout(s, "hold withheld")

    def _timeout(self, s, why):
        s.advance(TxState.TIMED_OUT, self.sim.now)
        self._log(s, None, {"error": why})
        self._release(s)
        self._finish(s, "error")

    def _reject_forged(self, s):
        s.advance(TxState.REJECTED, self.sim.now)
        self._log(s, None, {"error": "VDF proof rejected"})
        self._release(s)
        self._finish(s, "rejected")

    def _expired(self, s) -> bool:
        if self.sim.now >= s.ticket.expires_at:
            return True
        return s.timer is not None and self.sim.now > s.timer

    def _confirm(self, s):
        if self._expired(s):
            return self._timeout(s, "hold expired before confirmation")
        self._go(s, TxState.HOLD_CONFIRMED)
        self._log(s, 8, {"action": "channel_request"})
        self._later(self._gamma(), lambda: self._channel(s))

    def _channel(self, s):
        if s.timer is not None and self.sim.now > s.timer:
            return self._timeout(s, "session timer expired before channel setup")
        self._go(s, TxState.CHANNEL_SET)
        self._release(s)
        self._go(s, TxState.PROTOCOL_UP, {"mode": s.mode.value})
        self._go(s, TxState.TX_ACTIVE)
        self._later(self.cfg.tx_time, lambda: self._commit(s))

    def _commit(self, s):
        outcome = self.on_commit(s)
        entries = update_ledgers(s, self.ledger, self.sim.now)
        self._log(s, 12, {"entries": len(entries), "outcome": outcome})
        self._finish(s, outcome)


def inter_shard_tx(sender, receivers, shards, vdf_config: XShardConfig | None = None, *, psi: int = 0,
                   timer=None, seed: int = 0) -> TxResult:
    """One standalone session on a private simulator.

    ``timer`` is a deadline in seconds after submission. A timed-out session
    is returned with state TimedOut and no ledger entries.
    """
    receivers = tuple(receivers)
    try:
        home = shard_lookup(shards, sender)
        where = [shard_lookup(shards, r) for r in receivers]
    except UnknownNode as exc:
        raise InvalidParty(str(exc)) from None
    if not receivers or all(w & home for w in where):
        raise InvalidParty("inter-shard transaction needs a receiver in a foreign shard")
    sim = Simulator(seed)
    engine = XShardEngine(sim, vdf_config)
    deadline = None if timer is None else to_us(timer)
    s = engine.submit(sender, receivers, psi, timer=deadline)
    sim.run_until()
    return TxResult(s, list(engine.ledger), list(sim.trace))


# ---------------------------------------------------------------- trace audits

def sessions_in(trace) -> dict:
    out: dict = {}
    for rec in trace:
        if rec.get("session") is not None:
            out.setdefault(rec["session"], []).append(rec)
    return out


def check_state_order(trace) -> list[str]:
    """Return violations: non-increasing steps or timeouts outside the hold states."""
    problems = []
    for sid, recs in sessions_in(trace).items():
        last_step = 0
        last_state = TxState.INIT.value
        for rec in recs:
            step = rec.get("step")
            if step is not None:
                if step <= last_step:
                    problems.append(f"{sid}: step {step} after {last_step}")
                last_step = step
            if rec["state"] == TxState.TIMED_OUT.value and last_state not in {x.value for x in TIMEOUT_FROM} \
                    and last_state != TxState.TIMED_OUT.value:
                problems.append(f"{sid}: timeout from {last_state}")
            last_state = rec["state"]
    return problems


def check_hold_safety(trace) -> list[str]:
    """No receiver carries two overlapping holds."""
    holder: dict = {}
    problems = []
    for rec in trace:
        detail = rec.get("detail") or {}
        if rec.get("state") == TxState.HOLD_INIT.value and rec.get("step") == 5:
            for r in detail.get("receivers", []):
                if r in holder:
                    problems.append(f"t={rec['t']}: {r} held by {holder[r]} and {rec['session']}")
                holder[r] = rec["session"]
        for r in detail.get("released", []):
            if holder.get(r) == rec["session"]:
                del holder[r]
    return problems
