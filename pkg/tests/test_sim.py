from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from reinshard.errors import ConfigError, PastEvent
from reinshard.sim import (
    ConstantLatency,
    EventKind,
    RngStreams,
    SimConfig,
    Simulator,
    UniformLatency,
    latency_model,
    to_seconds,
    to_us,
)


def test_time_conversion():
    assert to_us("2.5") == 2_500_000
    assert to_us(Fraction(1, 10)) == 100_000
    assert to_seconds(64_900_000) == 64.9


def test_same_time_events_pop_in_schedule_order():
    sim = Simulator()
    seen = []
    for name in "abc":
        sim.schedule(10, EventKind.TX_STEP, lambda ev: seen.append(ev.payload["n"]), {"n": name})
    sim.schedule(5, EventKind.BLOCK_ARRIVE, lambda ev: seen.append("first"))
    sim.run_until()
    assert seen == ["first", "a", "b", "c"]


def test_past_event_rejected():
    sim = Simulator()
    sim.schedule(10)
    sim.step()
    with pytest.raises(PastEvent):
        sim.schedule(9)


def test_cancel_and_run_until():
    sim = Simulator()
    hit = []
    ev = sim.schedule(3, handler=lambda e: hit.append(3))
    sim.schedule(8, handler=lambda e: hit.append(8))
    sim.cancel(ev)
    assert sim.pending == 1
    sim.run_until(5)
    assert sim.now == 5 and hit == []
    sim.run_until()
    assert hit == [8] and sim.cancelled == 1


def test_uniform_latency_mean():
    rng = RngStreams(7)["latency"]
    model = UniformLatency(Fraction(1, 20), Fraction(3, 20))
    draws = [model.sample(rng) for _ in range(20_000)]
    assert all(Fraction(1, 20) <= d <= Fraction(3, 20) for d in draws)
    assert abs(float(sum(draws)) / len(draws) - 0.1) <= 0.005


def test_latency_specs():
    assert latency_model("0.1") == ConstantLatency(Fraction(1, 10))
    assert latency_model("0.05..0.15") == UniformLatency(Fraction(1, 20), Fraction(3, 20))
    assert latency_model({"uniform": [0, 1]}).high == 1
    with pytest.raises(ConfigError):
        latency_model({"gauss": 1})
    with pytest.raises(ConfigError):
        UniformLatency(Fraction(2), Fraction(1))


def test_streams_are_independent():
    a = RngStreams(3)
    b = RngStreams(3)
    a["noise"].random()
    a["noise"].random()
    assert a["latency"].random() == b["latency"].random()
    assert RngStreams(4)["latency"].random() != RngStreams(3)["latency"].random()


def test_config_validation_and_round_trip():
    cfg = SimConfig(t_eval="3", t_verify="1", latency="0.05..0.15")
    assert SimConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        SimConfig(t_eval=1, t_verify=1)
    assert SimConfig(t_eval=1, t_verify=1, allow_equal_timing=True).t_verify == 1
    with pytest.raises(ConfigError):
        SimConfig(adversary_fraction="0.6")
    with pytest.raises(ConfigError):
        SimConfig.from_dict({"speed": 2})


def _random_run(seed):
    sim = Simulator(seed)
    rng = sim.rng["workload"]

    def tick(ev):
        sim.log(kind=ev.kind.value, n=ev.payload["n"])
        if ev.payload["n"] < 30:
            sim.after(rng.randint(0, 5), EventKind.MINE_ATTEMPT, tick, {"n": ev.payload["n"] + 1})

    for i in range(3):
        sim.schedule(rng.randint(0, 10), EventKind.TX_STEP, tick, {"n": i * 10})
    sim.run_until()
    return sim


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32))
def test_deterministic_and_monotone_clock(seed):
    a, b = _random_run(seed), _random_run(seed)
    assert a.trace_digest() == b.trace_digest()
    times = [r["t"] for r in a.trace]
    assert times == sorted(times)
