import logging
import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from reinshard.consensus import (
    BaselineModel,
    BaselineParams,
    DifficultyState,
    adjust_pos_difficulty,
    adjust_pow_difficulty,
    baseline_adjust,
    check_leader_ticket,
    check_pow_solution,
    leader_ticket,
    mine,
)
from reinshard.encoding import MAX_TARGET, ZERO_DIGEST
from reinshard.errors import LoneValidator, NotApplicable, ZeroDenominator

import oracles
from conftest import make_pow

H_RHO = bytes(range(32))
H_S = bytes(reversed(range(32)))


def test_saturated_and_impossible_pow_targets():
    for nonce in range(20):
        assert check_pow_solution(Fraction(1, 10), H_RHO, H_S, nonce, MAX_TARGET + 1)
        assert not check_pow_solution(Fraction(1, 10), H_RHO, H_S, nonce, 0)


def test_mine_finds_solution_within_budget():
    target = MAX_TARGET >> 6
    nonce = mine(Fraction(0), H_RHO, H_S, target, budget=5000)
    assert nonce is not None and check_pow_solution(Fraction(0), H_RHO, H_S, nonce, target)
    assert mine(Fraction(0), H_RHO, H_S, 1, budget=10) is None


def test_leader_ticket_saturated_and_zero():
    block = make_pow(0)
    assert check_leader_ticket(block, b"k", 2, MAX_TARGET)
    assert not check_leader_ticket(block, b"k", 5, 0)


def test_leader_win_frequency_tracks_reward():
    # windows R'*T~ of width 1*2^252 and 4*2^252: win rates 1/16 and 1/4
    block = make_pow(3)
    rng = random.Random(0)
    n = 10_000
    keys = [rng.getrandbits(128).to_bytes(16, "big") for _ in range(n)]
    for reward, p in ((1, 1 / 16), (4, 1 / 4)):
        wins = sum(check_leader_ticket(block, k, reward, 2**252) for k in keys)
        sigma = math.sqrt(n * p * (1 - p))
        assert abs(wins - n * p) <= 3 * sigma


def test_pow_rule_examples():
    t = 10**30
    assert adjust_pow_difficulty([3, 3], [2, 2], 0, t) == t
    assert adjust_pow_difficulty([4, 2, 2], [6, 3, 3], 0, t) == t
    assert adjust_pow_difficulty([2, 4], [1, 3], 0, t) == t // 6


def test_pos_rule_examples():
    t = 10**30
    assert adjust_pos_difficulty([2, 2], [5, 5], 0, 1, t) == t
    assert adjust_pos_difficulty([1, 4], [5, 5], 0, 2, t) == t // 4
    assert adjust_pos_difficulty([1, 4], [5, 5], 0, 6, t) == 4 * t


def test_lone_validator_and_zero_denominator(caplog):
    with caplog.at_level(logging.WARNING):
        assert adjust_pow_difficulty([3], [1], 0, 77) == 77
        assert adjust_pos_difficulty([0, 0], [1, 1], 0, 0, 77) == 77
    assert "fallback" in caplog.text
    with pytest.raises(LoneValidator):
        adjust_pow_difficulty([3], [1], 0, 77, strict=True)
    with pytest.raises(ZeroDenominator):
        adjust_pos_difficulty([0, 3], [1, 1], 0, 9, 77, strict=True)


def test_clamping_logged(caplog):
    with caplog.at_level(logging.WARNING):
        assert adjust_pow_difficulty([100, 1], [100, 1], 0, MAX_TARGET) == MAX_TARGET
        assert adjust_pos_difficulty([1, 100], [1, 100], 0, 1, 5) == 1
    assert "clamped" in caplog.text


def test_baselines():
    state = DifficultyState(1000, 2000)
    same = baseline_adjust(BaselineParams(BaselineModel.NAKAMOTO, 10, 10), state)
    assert same.pow_target == 1000
    assert baseline_adjust(BaselineParams("nakamoto", 10, 20), state).pow_target == 2000
    twins = baseline_adjust(BaselineParams("twinscoin", 10, 10, mu=3, mu_r=3, e=1), state)
    assert (twins.pow_target, twins.pos_target) == (1000, 2000)
    with pytest.raises(NotApplicable):
        baseline_adjust(BaselineParams("two_hop", 10, 10), state)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2**16), st.integers(0, 2**16)), min_size=1, max_size=6),
       st.data(), st.integers(1, MAX_TARGET))
def test_rules_match_fraction_oracle(rows, data, target):
    w = data.draw(st.integers(0, len(rows) - 1))
    incoming = data.draw(st.integers(0, 2**16))
    a = [r[0] for r in rows]
    b = [r[1] for r in rows]
    expect = oracles.pow_rule(a, b, w, target)
    assert adjust_pow_difficulty(a, b, w, target) == (target if expect is None else expect)
    expect = oracles.pos_rule(a, b, w, incoming, target)
    assert adjust_pos_difficulty(a, b, w, incoming, target) == (target if expect is None else expect)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.integers(1, 2**16), st.integers(1, 2**16), st.integers(1, MAX_TARGET))
def test_symmetric_inputs_are_fixed_points(n, a, b, target):
    # symmetric two-pair case: both ratios are exactly 1
    assert adjust_pow_difficulty([a, a], [b, b], 0, target) == target
    assert adjust_pos_difficulty([a, a], [b, b], 1, a, target) == target


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**20), st.integers(1, MAX_TARGET), st.integers(1, 2**64))
def test_predicate_monotone_in_target(nonce, t1, extra):
    t2 = t1 + extra
    if check_pow_solution(Fraction(1, 3), H_RHO, ZERO_DIGEST, nonce, t1):
        assert check_pow_solution(Fraction(1, 3), H_RHO, ZERO_DIGEST, nonce, t2)
    key = nonce.to_bytes(8, "big")
    block = make_pow(1)
    if check_leader_ticket(block, key, 1, t1):
        assert check_leader_ticket(block, key, 1, t2)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 2**16), min_size=2, max_size=6), st.integers(1, MAX_TARGET))
def test_targets_stay_in_range(vals, target):
    out = adjust_pow_difficulty(vals, vals[::-1], 0, target)
    assert 1 <= out <= MAX_TARGET
