"""Keyed searchable labels with proxy re-keying.

A label for a term m under key k is H_G(m)**k, where H_G hashes into the
prime-order subgroup.  A holder of the ratio k2/k1 (mod group order) can
convert labels under k1 into labels under k2 without learning either key
or the term, which is what lets one server re-address another server's
tokens and lets the periodic shuffle re-key a whole index in place.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ParameterError
from .group import GroupParams


@dataclass(frozen=True)
class LabelKey:
    """Secret exponent in [1, order-1]."""

    value: int


def keygen(group: GroupParams, rng) -> LabelKey:
    return LabelKey(group.random_scalar(rng))


def evaluate(group: GroupParams, key: LabelKey, message: bytes) -> int:
    """Deterministic label H_G(message)**key."""
    if not 1 <= key.value < group.order:
        raise ParameterError("label key out of range")
    return group.exp(group.hash_to_group(message), key.value)


def switch_key(group: GroupParams, from_key: LabelKey, to_key: LabelKey) -> LabelKey:
    """Ratio to_key/from_key; applying it moves labels between the keys."""
    ratio = to_key.value * group.inverse_exponent(from_key.value) % group.order
    if ratio == 0:
        raise ParameterError("degenerate re-keying ratio")
    return LabelKey(ratio)


def apply_switch(group: GroupParams, label: int, ratio: LabelKey) -> int:
    """Re-key one label by exponentiating with the switch ratio."""
    return group.exp(group.check_range(label), ratio.value)


def epoch_key(group: GroupParams, base: LabelKey, r1: int, r2: int, epochs: int) -> LabelKey:
    """Key after `epochs` full shuffle rounds: base * (r1*r2)**epochs mod q.

    Each full round raises every stored label to r1*r2, so token keys must
    track the same drift.
    """
    if epochs < 0:
        raise ParameterError("epoch count cannot be negative")
    q = group.order
    drift = int(pow(r1 * r2 % q, epochs, q))
    value = base.value * drift % q
    if value == 0:
        raise ParameterError("degenerate epoch key")
    return LabelKey(value)
