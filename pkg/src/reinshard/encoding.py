"""Canonical byte encoding and the domain-separated SHA-256 instances.

Every hashed structure goes through :func:`encode`, a type-tagged,
length-prefixed serialization of a fixed-order field tuple, so two different
field lists can never produce the same byte string.

Digests are 32-byte ``bytes`` and compare as unsigned big-endian integers.
"""

from __future__ import annotations

import hashlib
from fractions import Fraction

from .errors import MalformedBlock

DIGEST_SIZE = 32
MAX_TARGET = 2**256 - 1
ZERO_DIGEST = bytes(DIGEST_SIZE)

# one-byte domain prefixes
DOMAIN_H = b"\x01"  # chain extension puzzle, VDF input derivation
DOMAIN_Z = b"\x02"  # inner hash of (h_rho, h_s)
DOMAIN_H_TILDE = b"\x03"  # leader ticket
DOMAIN_VDF_STEP = b"\x04"
DOMAIN_VDF_SEAL = b"\x05"
DOMAIN_VDF_KEY = b"\x06"
DOMAIN_POW_ID = b"\x10"
DOMAIN_POS_ID = b"\x11"
DOMAIN_SHARD_ID = b"\x20"
DOMAIN_NODE_ID = b"\x21"


def _length(n: int) -> bytes:
    return n.to_bytes(4, "big")


def _uint(value: int) -> bytes:
    if value < 0:
        raise ValueError(f"cannot encode negative integer {value}")
    raw = value.to_bytes(max(1, (value.bit_length() + 7) // 8), "big")
    return _length(len(raw)) + raw


def encode_field(value) -> bytes:
    if value is None:
        return b"N"
    if isinstance(value, bool):
        return b"T" + (b"\x01" if value else b"\x00")
    if isinstance(value, int):
        return b"I" + _uint(value)
    if isinstance(value, Fraction):
        if value < 0:
            raise ValueError(f"cannot encode negative rational {value}")
        return b"Q" + _uint(value.numerator) + _uint(value.denominator)
    if isinstance(value, (bytes, bytearray)):
        return b"B" + _length(len(value)) + bytes(value)
    if isinstance(value, str):
        raw = value.encode("utf-8")
        return b"S" + _length(len(raw)) + raw
    if isinstance(value, (list, tuple)):
        return b"L" + _length(len(value)) + b"".join(encode_field(v) for v in value)
    raise TypeError(f"no canonical encoding for {type(value).__name__}")


def encode(*fields) -> bytes:
    return b"".join(encode_field(f) for f in fields)


def tagged_hash(domain: bytes, *fields) -> bytes:
    return hashlib.sha256(domain + encode(*fields)).digest()


def H(*fields) -> bytes:
    return tagged_hash(DOMAIN_H, *fields)


def Z(*fields) -> bytes:
    return tagged_hash(DOMAIN_Z, *fields)


def H_tilde(*fields) -> bytes:
    return tagged_hash(DOMAIN_H_TILDE, *fields)


def digest_int(digest: bytes) -> int:
    return int.from_bytes(digest, "big")


def check_digest(value, name: str = "digest") -> bytes:
    if not isinstance(value, (bytes, bytearray)) or len(value) != DIGEST_SIZE:
        size = len(value) * 8 if isinstance(value, (bytes, bytearray)) else "non-bytes"
        raise MalformedBlock(f"{name} must be 256 bits, got {size}")
    return bytes(value)


def hex_digest(digest: bytes) -> str:
    return bytes(digest).hex()


def parse_digest(text: str, name: str = "digest") -> bytes:
    try:
        raw = bytes.fromhex(text)
    except (TypeError, ValueError) as exc:
        raise MalformedBlock(f"{name} is not hex: {text!r}") from exc
    return check_digest(raw, name)


def parse_fraction(text) -> Fraction:
    """Parse ``"a/b"``, an int, or a decimal string into an exact rational."""
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int):
        return Fraction(text)
    if isinstance(text, float):
        return Fraction(repr(text))
    return Fraction(str(text))


def format_fraction(value: Fraction) -> str:
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def node_id(name: str) -> bytes:
    """Stable 256-bit identifier for a human-readable node name."""
    return tagged_hash(DOMAIN_NODE_ID, name)
