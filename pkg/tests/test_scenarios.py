from fractions import Fraction

import pytest

from reinshard.errors import ConfigError
from reinshard.scenarios import properties as pr
from reinshard.scenarios.bench import block_gen_benchmark, linearity_check
from reinshard.scenarios.chain_sim import run_simulation
from reinshard.scenarios.train_hotel import (
    TrainHotelConfig,
    run_adversary,
    run_train_hotel,
    theoretical_completion,
)
from reinshard.sim import SimConfig
from reinshard.xshard import check_hold_safety, check_state_order


def test_theoretical_completion():
    assert theoretical_completion(10, 3, "2.5") == Fraction(65, 2)
    assert theoretical_completion(0, 3, 1) == 1
    with pytest.raises(ValueError):
        theoretical_completion(-1, 3, 1)


def test_config_rejects_bad_timing_and_fraction():
    with pytest.raises(ConfigError):
        TrainHotelConfig(t_verify=3, t_eval=3)
    with pytest.raises(ConfigError):
        TrainHotelConfig(adversary_fraction="0.7")
    with pytest.raises(ConfigError):
        TrainHotelConfig(adversary_capability="oracle")


def test_vdf_run_is_atomic_and_audited():
    r = run_train_hotel(TrainHotelConfig(), 3)
    assert (r.both, r.single, r.denied) == (5, 0, 45)
    assert r.tickets_booked == {"train": 5, "hotel": 5}
    assert not check_state_order(r.trace) and not check_hold_safety(r.trace)
    assert pr.check_chain_wait(r.trace).ok


def test_small_run_timing():
    r = run_train_hotel(TrainHotelConfig(clients=10), 1)
    assert r.completion_time == pytest.approx(64.9)
    assert r.booking_time == pytest.approx(34.9)


def test_without_vdf_tickets_split():
    r = run_train_hotel(TrainHotelConfig(vdf_enabled=False), 1)
    assert r.single > 0
    assert r.tickets_booked == {"train": 5, "hotel": 5}


def test_fewer_clients_than_tickets():
    r = run_train_hotel(TrainHotelConfig(clients=3), 1)
    assert (r.both, r.single, r.denied) == (3, 0, 0)


def test_adversary_capabilities():
    cfg = TrainHotelConfig(adversary_fraction="0.4", clients=20)
    for cap in ("with_vdf", "without_vdf"):
        r = run_adversary(cfg, 2, cap)
        assert r.single == 0
        assert r.adversarial_sessions == 8
        assert not check_hold_safety(r.trace)
    slow = run_adversary(cfg, 2, "with_vdf")
    quick = run_adversary(cfg, 2, "without_vdf")
    assert slow.completion_time > quick.completion_time


def test_property_params_validation():
    with pytest.raises(ConfigError):
        pr.PropertyHarnessParams(k_extra=20)
    with pytest.raises(ConfigError):
        pr.PropertyHarnessParams(adversary_stake="0.5", honest_ratio="0.6")
    assert pr.PropertyHarnessParams.honest(adversary_stake="0.2").honest_ratio == Fraction(4, 5)


def test_planted_fixtures_flagged():
    assert all(pr.detectors_fire().values())


def test_honest_block_tree_passes_checks():
    params = pr.PropertyHarnessParams.honest(rounds=60)
    trace = pr.run_block_tree(params, 4)
    assert pr.check_chain_growth(trace, params).ok
    assert pr.check_common_prefix(trace).ok
    assert trace == pr.run_block_tree(params, 4)


def test_window_fractions():
    owners = {"a": pr.ADVERSARY, "b": "h", "c": pr.ADVERSARY}
    assert pr.window_fractions(["genesis", "a", "b", "c"], owners, 2) == [Fraction(1, 2), Fraction(1, 2)]


def test_sharding_trial_ignores_hint():
    picks = {pr.sharding_trial(s, preferred=0) for s in range(20)}
    assert len(picks) > 1
    assert {pr.sharding_trial(s, adversary_decides=True, preferred=2) for s in range(5)} == {2}


@pytest.mark.parametrize("mode", ["single_block", "multi_block"])
def test_chain_simulation(mode):
    rep = run_simulation(SimConfig(seed=1, mode=mode), rounds=24)
    assert rep.invariants_ok
    # every pair, seeded or mined, starts with one block
    assert rep.pos_blocks == rep.placed + rep.delegated + rep.pairs
    assert rep.shards
    again = run_simulation(SimConfig(seed=1, mode=mode), rounds=24)
    assert again.trace_digest == rep.trace_digest


def test_block_benchmark_scales_with_size():
    small = block_gen_benchmark(1024, 10, repeats=1)
    assert small["ms"] > 0
    assert linearity_check(validators=20, repeats=2)["ratio"] > 10
    with pytest.raises(ConfigError):
        block_gen_benchmark(1024, 0)
