"""Deterministic discrete-event core.

The clock is an integer count of microseconds. Events pop in ``(at, seq)``
order, where ``seq`` is a monotone counter, so two runs with the same seed
and configuration produce the same trace byte for byte. Randomness comes
from named streams derived from the master seed; drawing from one stream
never shifts another.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import json
import random
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from typing import Callable

from .encoding import parse_fraction
from .errors import ConfigError, PastEvent

US = 10**6


def to_us(seconds) -> int:
    return round(parse_fraction(seconds) * US)


def to_seconds(us: int) -> float:
    return us / US


class EventKind(str, enum.Enum):
    MINE_ATTEMPT = "MineAttempt"
    VDF_EVAL_DONE = "VdfEvalDone"
    VDF_VERIFY_DONE = "VdfVerifyDone"
    BLOCK_ARRIVE = "BlockArrive"
    HOLD_EXPIRE = "HoldExpire"
    TX_STEP = "TxStep"
    EPOCH_BOUNDARY = "EpochBoundary"
    ADVERSARY_ACT = "AdversaryAct"


@dataclass
class Event:
    at: int
    seq: int
    kind: EventKind
    payload: dict = field(default_factory=dict)
    handler: Callable | None = None
    cancelled: bool = False

    def __lt__(self, other):
        return (self.at, self.seq) < (other.at, other.seq)


class RngStreams:
    """Independent ``random.Random`` per subsystem name."""

    def __init__(self, seed: int):
        self.seed = seed
        self._streams = {}

    def __getitem__(self, name: str) -> random.Random:
        rng = self._streams.get(name)
        if rng is None:
            material = hashlib.sha256(f"{self.seed}:{name}".encode()).digest()
            rng = random.Random(int.from_bytes(material, "big"))
            self._streams[name] = rng
        return rng


# ---------------------------------------------------------------- latency

@dataclass(frozen=True)
class ConstantLatency:
    value: Fraction = Fraction(1, 10)

    def sample(self, rng: random.Random) -> Fraction:
        return self.value


@dataclass(frozen=True)
class UniformLatency:
    low: Fraction
    high: Fraction

    def __post_init__(self):
        if self.low > self.high or self.low < 0:
            raise ConfigError("uniform latency needs 0 <= low <= high")

    def sample(self, rng: random.Random) -> Fraction:
        return Fraction(rng.randint(to_us(self.low), to_us(self.high)), US)


def latency_model(desc):
    """Build a model from a number (constant), ``"a..b"`` or ``{"uniform": [a, b]}``."""
    if isinstance(desc, (ConstantLatency, UniformLatency)):
        return desc
    if isinstance(desc, dict):
        if "uniform" in desc:
            low, high = desc["uniform"]
            return UniformLatency(parse_fraction(low), parse_fraction(high))
        if "constant" in desc:
            return ConstantLatency(parse_fraction(desc["constant"]))
        raise ConfigError(f"unknown latency model {desc!r}")
    if isinstance(desc, str) and ".." in desc:
        low, high = desc.split("..")
        return UniformLatency(parse_fraction(low), parse_fraction(high))
    return ConstantLatency(parse_fraction(desc))


def sample_latency(model, rng: random.Random) -> Fraction:
    return latency_model(model).sample(rng)


# ---------------------------------------------------------------- config

@dataclass
class SimConfig:
    seed: int = 0
    n_nodes: int = 10
    n_validators: int = 4
    t_eval: Fraction = Fraction(3)
    t_verify: Fraction = Fraction(1)
    delay: Fraction = Fraction(5, 2)  # tau'
    latency: object = Fraction(1, 10)
    epoch_blocks: int = 16
    k_max: int = 8
    adversary_fraction: Fraction = Fraction(0)
    mode: str = "single_block"
    allow_equal_timing: bool = False

    def __post_init__(self):
        for name in ("t_eval", "t_verify", "delay", "adversary_fraction"):
            setattr(self, name, parse_fraction(getattr(self, name)))
        self.latency = latency_model(self.latency)
        if self.t_verify >= self.t_eval and not self.allow_equal_timing:
            raise ConfigError(f"t_V={self.t_verify} must be below t_E={self.t_eval}")
        if not 0 <= self.adversary_fraction <= Fraction(1, 2):
            raise ConfigError("adversary fraction must lie in [0, 0.5]")
        if self.n_nodes < 1 or self.k_max < 1 or self.epoch_blocks < 1:
            raise ConfigError("counts must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        out = {}
        for key, value in asdict(self).items():
            if isinstance(value, Fraction):
                value = str(value)
            elif isinstance(value, dict):
                value = {k: str(v) for k, v in value.items()}
            out[key] = value
        lat = self.latency
        out["latency"] = ({"uniform": [str(lat.low), str(lat.high)]} if isinstance(lat, UniformLatency)
                          else {"constant": str(lat.value)})
        return out


# ---------------------------------------------------------------- engine

class Simulator:
    def __init__(self, seed: int = 0):
        self.now = 0
        self.seed = seed
        self.rng = RngStreams(seed)
        self._queue: list[Event] = []
        self._seq = 0
        self.trace: list[dict] = []
        self.processed = 0
        self.cancelled = 0

    def schedule(self, at: int, kind=EventKind.TX_STEP, handler: Callable | None = None,
                 payload: dict | None = None) -> Event:
        if at < self.now:
            raise PastEvent(f"event at {at}us is before now={self.now}us")
        event = Event(at, self._seq, EventKind(kind), payload or {}, handler)
        self._seq += 1
        heapq.heappush(self._queue, event)
        return event

    def after(self, delay_us: int, kind=EventKind.TX_STEP, handler=None, payload=None) -> Event:
        return self.schedule(self.now + delay_us, kind, handler, payload)

    def cancel(self, event: Event) -> None:
        if not event.cancelled:
            event.cancelled = True
            self.cancelled += 1

    @property
    def pending(self) -> int:
        return sum(1 for e in self._queue if not e.cancelled)

    def step(self) -> Event | None:
        while self._queue:
            event = heapq.heappop(self._queue)
            if event.cancelled:
                continue
            if event.at < self.now:
                raise PastEvent("clock would run backwards")
            self.now = event.at
            self.processed += 1
            if event.handler is not None:
                event.handler(event)
            return event
        return None

    def run_until(self, t_us: int | None = None) -> list[dict]:
        """Process events up to ``t_us`` inclusive, or until the queue drains."""
        while self._queue:
            head = self._queue[0]
            if head.cancelled:
                heapq.heappop(self._queue)
                continue
            if t_us is not None and head.at > t_us:
                self.now = t_us
                break
            self.step()
        return self.trace

    def log(self, **record) -> dict:
        entry = {"t": to_seconds(self.now)}
        entry.update(record)
        self.trace.append(entry)
        return entry

    def trace_lines(self) -> list[str]:
        return [json.dumps(r, sort_keys=True, separators=(",", ":"), default=str) for r in self.trace]

    def trace_digest(self) -> str:
        return trace_digest(self.trace)


def trace_digest(trace) -> str:
    h = hashlib.sha256()
    for record in trace:
        h.update(json.dumps(record, sort_keys=True, separators=(",", ":"), default=str).encode())
        h.update(b"\n")
    return h.hexdigest()
