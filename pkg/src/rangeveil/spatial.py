"""Grid quantization, Hilbert-curve mapping, and prefix range covers.

Locations are quantized onto a 2^j x 2^j grid and linearized with a
Hilbert curve, so one integer in [0, 2^(2j)) stands for a cell and
spatially close cells tend to get close integers.  A range of curve
positions is then covered by a minimal set of bit-string prefixes; an
object is in the range iff the prefix family of its position intersects
the cover.  That reduces geometric filtering to exact matches on prefix
terms, which is what the encrypted index stores.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ParameterError

MAX_ORDER = 16


@dataclass(frozen=True)
class GridSpec:
    """Bounding box plus curve order j; the grid has 2^j cells per axis."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float
    order: int = 3

    def __post_init__(self):
        if not (self.min_x < self.max_x and self.min_y < self.max_y):
            raise ParameterError("degenerate bounding box")
        if not 1 <= self.order <= MAX_ORDER:
            raise ParameterError(f"order must be in [1, {MAX_ORDER}]")

    @property
    def cells_per_axis(self) -> int:
        return 1 << self.order

    @property
    def total_bits(self) -> int:
        """Bits in one curve position (two axes of `order` bits each)."""
        return 2 * self.order

    @property
    def cell_count(self) -> int:
        return 1 << self.total_bits

    def quantize(self, x: float, y: float) -> tuple[int, int]:
        """Cell coordinates of a point; the top edges fold into the last cell."""
        if not (self.min_x <= x <= self.max_x and self.min_y <= y <= self.max_y):
            raise ParameterError(f"point ({x}, {y}) outside bounding box")
        n = self.cells_per_axis
        cx = int((x - self.min_x) / (self.max_x - self.min_x) * n)
        cy = int((y - self.min_y) / (self.max_y - self.min_y) * n)
        return min(cx, n - 1), min(cy, n - 1)

    def curve_position(self, x: float, y: float) -> int:
        cx, cy = self.quantize(x, y)
        return hilbert_encode(cx, cy, self.order)


def _rotate(n: int, x: int, y: int, rx: int, ry: int) -> tuple[int, int]:
    if ry == 0:
        if rx == 1:
            x = n - 1 - x
            y = n - 1 - y
        x, y = y, x
    return x, y


def hilbert_encode(cx: int, cy: int, order: int) -> int:
    """Curve position of a cell under the fixed canonical orientation."""
    n = 1 << order
    if not (0 <= cx < n and 0 <= cy < n):
        raise ParameterError(f"cell ({cx}, {cy}) out of range for order {order}")
    position = 0
    s = n >> 1
    while s > 0:
        rx = 1 if cx & s else 0
        ry = 1 if cy & s else 0
        position += s * s * ((3 * rx) ^ ry)
        cx, cy = _rotate(n, cx, cy, rx, ry)
        s >>= 1
    return position


def hilbert_decode(position: int, order: int) -> tuple[int, int]:
    """Inverse of hilbert_encode."""
    n = 1 << order
    if not 0 <= position < n * n:
        raise ParameterError(f"position {position} out of range for order {order}")
    x = y = 0
    t = position
    s = 1
    while s < n:
        rx = 1 & (t >> 1)
        ry = 1 & (t ^ rx)
        x, y = _rotate(s, x, y, rx, ry)
        x += s * rx
        y += s * ry
        t >>= 2
        s <<= 1
    return x, y


@dataclass(frozen=True)
class PrefixElement:
    """A bit-string prefix: `length` fixed leading bits, wildcards after.

    Covers the aligned block of values sharing those leading bits.
    """

    value: int
    length: int

    def __post_init__(self):
        if not 0 <= self.length <= 64:
            raise ParameterError(f"prefix length out of range: {self.length}")
        if self.value < 0 or self.value.bit_length() > self.length:
            raise ParameterError(f"prefix value {self.value} wider than {self.length} bits")

    def covers(self, x: int, total_bits: int) -> bool:
        return x >> (total_bits - self.length) == self.value

    def block(self, total_bits: int) -> tuple[int, int]:
        """Closed interval of covered values."""
        span = total_bits - self.length
        if span < 0:
            raise ParameterError("prefix longer than the value width")
        return self.value << span, ((self.value + 1) << span) - 1

    def to_string(self, total_bits: int) -> str:
        fixed = format(self.value, f"0{self.length}b") if self.length else ""
        return fixed + "*" * (total_bits - self.length)

    @classmethod
    def from_string(cls, text: str) -> "PrefixElement":
        stripped = text.rstrip("*")
        if "*" in stripped or any(c not in "01" for c in stripped):
            raise ParameterError(f"malformed prefix string: {text!r}")
        return cls(int(stripped, 2) if stripped else 0, len(stripped))


Interval = tuple[int, int]


def normalize_intervals(intervals: Iterable[Interval], total_bits: int) -> tuple[Interval, ...]:
    """Sort, bound-check, and merge overlapping or adjacent intervals."""
    top = (1 << total_bits) - 1
    items = sorted(intervals)
    merged: list[Interval] = []
    for lo, hi in items:
        if not (0 <= lo <= hi <= top):
            raise ParameterError(f"interval [{lo}, {hi}] out of [0, {top}]")
        if merged and lo <= merged[-1][1] + 1:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return tuple(merged)


@dataclass(frozen=True)
class SpatialRange:
    """Disjoint, maximal, sorted closed intervals of curve positions."""

    intervals: tuple[Interval, ...]
    total_bits: int

    @classmethod
    def from_intervals(cls, intervals: Iterable[Interval], total_bits: int) -> "SpatialRange":
        return cls(normalize_intervals(intervals, total_bits), total_bits)

    @property
    def empty(self) -> bool:
        return not self.intervals

    def __contains__(self, position: int) -> bool:
        return any(lo <= position <= hi for lo, hi in self.intervals)


def region_to_intervals(
    rect: tuple[float, float, float, float], grid: GridSpec
) -> SpatialRange:
    """Curve positions of every cell a query rectangle touches.

    The rectangle is clipped to the grid; an empty intersection yields an
    empty range.
    """
    x0, y0, x1, y1 = rect
    if x0 > x1 or y0 > y1:
        raise ParameterError("rectangle corners out of order")
    if x1 < grid.min_x or x0 > grid.max_x or y1 < grid.min_y or y0 > grid.max_y:
        return SpatialRange((), grid.total_bits)
    cx0, cy0 = grid.quantize(max(x0, grid.min_x), max(y0, grid.min_y))
    cx1, cy1 = grid.quantize(min(x1, grid.max_x), min(y1, grid.max_y))
    positions = [
        hilbert_encode(cx, cy, grid.order)
        for cx in range(cx0, cx1 + 1)
        for cy in range(cy0, cy1 + 1)
    ]
    return SpatialRange.from_intervals(((p, p) for p in positions), grid.total_bits)


def prefix_family(x: int, total_bits: int) -> list[PrefixElement]:
    """All prefixes of x, longest first, ending with the all-wildcard."""
    if not 0 <= x < (1 << total_bits):
        raise ParameterError(f"value {x} out of range for {total_bits} bits")
    return [PrefixElement(x >> (total_bits - l), l) for l in range(total_bits, -1, -1)]


def prefix_universe(total_bits: int) -> list[PrefixElement]:
    """Every prefix that can appear as an index row: lengths 1..total_bits.

    The all-wildcard element is excluded from storage, giving
    2^(total_bits+1) - 2 rows (126 at 6 bits); see universe_diagnostics
    for the bookkeeping around that count.
    """
    return [
        PrefixElement(value, length)
        for length in range(1, total_bits + 1)
        for value in range(1 << length)
    ]


def min_prefix_cover(spatial_range: SpatialRange, total_bits: int) -> list[PrefixElement]:
    """Minimal set of prefixes covering the range exactly.

    Each interval is decomposed into maximal aligned blocks from the left
    (the binary-trie decomposition); multi-interval ranges are unioned.
    """
    cover: list[PrefixElement] = []
    top = 1 << total_bits
    for lo, hi in spatial_range.intervals:
        pos = lo
        while pos <= hi:
            size = pos & -pos if pos else top
            while size > hi - pos + 1:
                size >>= 1
            length = total_bits - size.bit_length() + 1
            cover.append(PrefixElement(pos >> (size.bit_length() - 1), length))
            pos += size
    return cover


def membership_check(x: int, cover: Sequence[PrefixElement], total_bits: int) -> bool:
    """True iff the prefix family of x meets the cover."""
    family = set(prefix_family(x, total_bits))
    return any(element in family for element in cover)


def universe_diagnostics(total_bits: int) -> dict:
    """Size bookkeeping for the stored prefix universe.

    `stored` counts distinct prefixes of lengths 1..total_bits, the rows
    the index actually keeps (126 at 6 bits).  `with_multiplicity` counts
    one non-wildcard prefix per value per length, without deduplication
    (384 at 6 bits); it is kept because reported universe sizes in the
    wild sometimes follow that looser count.
    """
    return {
        "total_bits": total_bits,
        "stored": (1 << (total_bits + 1)) - 2,
        "family_size": total_bits + 1,
        "with_multiplicity": total_bits * (1 << total_bits),
    }
