import json
from fractions import Fraction

import pytest

import gen_golden
from reinshard.conformance import check_golden, golden_vectors
from reinshard.encoding import (
    H,
    H_tilde,
    Z,
    check_digest,
    encode,
    format_fraction,
    parse_digest,
    parse_fraction,
)
from reinshard.errors import MalformedBlock


def test_shipped_vectors_match_oracle():
    # the JSON in the package must be exactly what the independent script produces
    assert golden_vectors() == json.loads(json.dumps(gen_golden.build()))


def test_package_reproduces_golden_vectors():
    results = check_golden()
    assert results and all(results.values()), results


def test_domain_separation():
    assert len({H(b"x"), Z(b"x"), H_tilde(b"x")}) == 3


def test_fraction_encoding_and_parsing():
    assert encode(Fraction(2, 4)) == encode(Fraction(1, 2))
    assert parse_fraction("3/12") == Fraction(1, 4)
    assert parse_fraction(0.1) == Fraction(1, 10)
    assert format_fraction(Fraction(6, 3)) == "2"
    with pytest.raises(ValueError):
        encode(Fraction(-1, 2))


def test_digest_checks():
    with pytest.raises(MalformedBlock):
        check_digest(b"\x00" * 20)
    with pytest.raises(MalformedBlock):
        parse_digest("zz")
    assert parse_digest("00" * 32) == bytes(32)
