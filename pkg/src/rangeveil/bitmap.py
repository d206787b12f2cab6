"""Object-membership bitmaps and their random two-way sharing.

A bitmap over n objects marks which objects carry a term.  Bit i belongs
to object i and is the i-th bit from the right in the string rendering.
Each bitmap is stored nowhere in the clear: it is split into two share
bitmaps whose slot-wise sum mod 2 recovers the original, and each server
holds only one share per term.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParameterError


@dataclass(frozen=True)
class Bitmap:
    """Immutable bit vector: bit(i) = (value >> i) & 1."""

    value: int
    length: int

    def __post_init__(self):
        if self.length < 0:
            raise ParameterError("negative bitmap length")
        if self.value < 0 or self.value.bit_length() > self.length:
            raise ParameterError("bitmap value wider than its length")

    @classmethod
    def zeros(cls, length: int) -> "Bitmap":
        return cls(0, length)

    @classmethod
    def from_positions(cls, positions, length: int) -> "Bitmap":
        value = 0
        for i in positions:
            if not 0 <= i < length:
                raise ParameterError(f"bit position {i} out of range")
            value |= 1 << i
        return cls(value, length)

    @classmethod
    def from_string(cls, text: str) -> "Bitmap":
        """Parse the rendering produced by to_string (object 0 rightmost)."""
        if any(c not in "01" for c in text):
            raise ParameterError(f"malformed bitmap string: {text!r}")
        return cls(int(text, 2) if text else 0, len(text))

    def to_string(self) -> str:
        return format(self.value, f"0{self.length}b") if self.length else ""

    def bit(self, i: int) -> int:
        if not 0 <= i < self.length:
            raise ParameterError(f"bit position {i} out of range")
        return (self.value >> i) & 1

    def with_bit(self, i: int, on: bool = True) -> "Bitmap":
        if not 0 <= i < self.length:
            raise ParameterError(f"bit position {i} out of range")
        value = self.value | (1 << i) if on else self.value & ~(1 << i)
        return Bitmap(value, self.length)

    def extended(self, length: int) -> "Bitmap":
        """Same bits over a larger object universe (new bits are 0)."""
        if length < self.length:
            raise ParameterError("cannot shrink a bitmap")
        return Bitmap(self.value, length)

    def positions(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.length) if (self.value >> i) & 1)

    @property
    def popcount(self) -> int:
        return self.value.bit_count()

    def _check_peer(self, other: "Bitmap") -> None:
        if self.length != other.length:
            raise ParameterError(
                f"bitmap lengths differ: {self.length} vs {other.length}"
            )

    def __or__(self, other: "Bitmap") -> "Bitmap":
        self._check_peer(other)
        return Bitmap(self.value | other.value, self.length)

    def __and__(self, other: "Bitmap") -> "Bitmap":
        self._check_peer(other)
        return Bitmap(self.value & other.value, self.length)


def split_shares(bitmap: Bitmap, rng) -> tuple[Bitmap, Bitmap]:
    """Disjoint random split: every set bit goes to exactly one share.

    Share sum mod 2 equals the original, and each share alone reveals only
    a random subset of the membership list.
    """
    share1 = 0
    for i in range(bitmap.length):
        if (bitmap.value >> i) & 1 and rng.randbits(1):
            share1 |= 1 << i
    return Bitmap(share1, bitmap.length), Bitmap(bitmap.value ^ share1, bitmap.length)


def combine_shares(a: Bitmap, b: Bitmap) -> Bitmap:
    """Slot-wise (a + b) mod 2; the inverse of split_shares."""
    a._check_peer(b)
    return Bitmap(a.value ^ b.value, a.length)
