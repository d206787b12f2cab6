"""Keyed tags and the chained tag evolution used by the shuffle.

Tags are 16-byte HMAC-SHA256 truncations.  Each index entry carries a
tag; every shuffle pass steps it with the passing server's secret
scalar, so after a full round both servers have contributed one step
each and only a party knowing both scalars (the client) can recompute
the current tag of a term.  Position addresses for the oblivious update
merge are a second PRF applied to the current tag.
"""

from __future__ import annotations

import hmac
import hashlib

from ..errors import ParameterError

TAG_BYTES = 16
KEY_BYTES = 32
_SCALAR_BYTES = 32  # group orders are at most 256 bits


def prf(key: bytes, data: bytes) -> bytes:
    """16-byte keyed PRF output."""
    if len(key) == 0:
        raise ParameterError("empty PRF key")
    return hmac.new(key, data, hashlib.sha256).digest()[:TAG_BYTES]


def new_key(rng) -> bytes:
    return rng.randbytes(KEY_BYTES)


def initial_tag(tag_key: bytes, side: int, term: bytes) -> bytes:
    """Tag of a term at insertion time, domain-separated by index side."""
    if side not in (1, 2):
        raise ParameterError(f"side must be 1 or 2, got {side}")
    return prf(tag_key, bytes([side]) + term)


def step_tag(tag: bytes, scalar: int) -> bytes:
    """One shuffle pass advances a tag under the passing server's scalar."""
    if len(tag) != TAG_BYTES:
        raise ParameterError(f"tag must be {TAG_BYTES} bytes")
    return prf(tag, scalar.to_bytes(_SCALAR_BYTES, "big"))


def chain_tag(tag: bytes, side: int, r1: int, r2: int, rounds: int) -> bytes:
    """Tag after `rounds` full shuffle rounds.

    A side-1 index is passed through server 2 first and back to server 1,
    so its tags see r2 then r1 each round; side 2 is the mirror image.
    """
    if rounds < 0:
        raise ParameterError("round count cannot be negative")
    first, second = (r2, r1) if side == 1 else (r1, r2)
    if side not in (1, 2):
        raise ParameterError(f"side must be 1 or 2, got {side}")
    for _ in range(rounds):
        tag = step_tag(step_tag(tag, first), second)
    return tag


def position_key(perm_key: bytes, tag: bytes) -> bytes:
    """Content-blind address of an entry inside its index."""
    return prf(perm_key, tag)
