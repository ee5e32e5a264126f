import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import pytest

from reinshard.chain import ChainPair, GlobalChain, PowBlock, expected_vdf_input, make_pos_block
from reinshard.encoding import H
from reinshard.vdf import VdfParams, evaluate

sys.path.insert(0, str(Path(__file__).parent))

SMALL_VDF = VdfParams(b"e" * 16, b"v" * 16, 128, 4, Fraction(1))


def make_pow(i, pseudo=False, miner="miner"):
    return PowBlock(H("prev", i), H("head", i), i, Fraction(0), pseudo, f"{miner}-{i}")


def grow(pair, n, owner="node"):
    """Append ``n`` correctly linked PoS blocks; ``owner`` may be a list per block."""
    for k in range(n):
        who = owner[k] if isinstance(owner, (list, tuple)) else owner
        art = evaluate(SMALL_VDF, expected_vdf_input(pair))
        block = make_pos_block(pair, art, who, SMALL_VDF.verify_key)
        pair = replace(pair, sub_chain=pair.sub_chain + (block,))
    return pair


def make_pair(i, k, owner="node", pseudo=False, **kw):
    return grow(ChainPair(make_pow(i, pseudo), **kw), k, owner)


def make_chain(ks, pseudo=(), owners=None):
    pairs = []
    for i, k in enumerate(ks):
        owner = owners[i] if owners else f"node-{i}"
        pairs.append(make_pair(i, k, owner, pseudo=i in pseudo))
    return GlobalChain(tuple(pairs))


@pytest.fixture
def small_vdf():
    return SMALL_VDF


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
