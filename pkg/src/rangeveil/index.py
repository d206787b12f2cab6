"""Plaintext inverted indexes and their encrypted, share-split form.

The builder produces one row per prefix in the stored universe and one
row per vocabulary keyword, each carrying an object bitmap.  Encryption
turns a row into (label, packed share ciphertexts, tag): the label is
the keyed hash-group label of the canonical term bytes, the bitmap is
split into two disjoint shares with one share per server, and the tag
seeds the shuffle's address chain.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from typing import Optional

from .bitmap import Bitmap, split_shares
from .crypto import labels as labels_mod
from .crypto import prf
from .crypto.group import GroupParams
from .crypto.labels import LabelKey
from .crypto.paillier import PaillierPublicKey
from .errors import ParameterError, ProtocolError
from .packing import PackedBitmap, pack_bitmap
from .spatial import GridSpec, PrefixElement, prefix_family, prefix_universe

PREFIX_TERM = 1
KEYWORD_TERM = 2


@dataclass(frozen=True)
class SpatioTextualObject:
    """One record: dense id, curve position, and its keyword set."""

    oid: int
    loc: int
    keywords: tuple[str, ...]

    def __post_init__(self):
        if self.oid < 0:
            raise ParameterError("object ids must be non-negative")
        if any(not kw for kw in self.keywords):
            raise ParameterError("keywords must be non-empty strings")


def canonical_keyword(word: str) -> str:
    """NFC-normalized, case-folded form used for matching and labels."""
    return unicodedata.normalize("NFC", word).lower()


def keyword_bytes(word: str) -> bytes:
    return bytes([KEYWORD_TERM]) + canonical_keyword(word).encode("utf-8")


def prefix_bytes(element: PrefixElement) -> bytes:
    return bytes([PREFIX_TERM, element.length]) + element.value.to_bytes(8, "big")


def build_plain_indexes(
    db: list[SpatioTextualObject], grid: GridSpec
) -> tuple[dict[PrefixElement, Bitmap], dict[str, Bitmap]]:
    """Inverted prefix and keyword indexes with n-bit membership bitmaps.

    The prefix index has a row for every universe element even when its
    bitmap is zero, so the index shape is data-independent.  The keyword
    index has one row per vocabulary word, sorted.
    """
    n = len(db)
    gamma = grid.total_bits
    if sorted(o.oid for o in db) != list(range(n)):
        raise ParameterError("object ids must be dense in [0, n)")
    prefix_rows = {p: 0 for p in prefix_universe(gamma)}
    keyword_rows: dict[str, int] = {}
    for obj in db:
        if not 0 <= obj.loc < grid.cell_count:
            raise ParameterError(f"location {obj.loc} outside the grid")
        for element in prefix_family(obj.loc, gamma):
            if element.length > 0:
                prefix_rows[element] |= 1 << obj.oid
        for word in obj.keywords:
            canon = canonical_keyword(word)
            keyword_rows[canon] = keyword_rows.get(canon, 0) | (1 << obj.oid)
    prefix_index = {p: Bitmap(v, n) for p, v in prefix_rows.items()}
    keyword_index = {w: Bitmap(keyword_rows[w], n) for w in sorted(keyword_rows)}
    return prefix_index, keyword_index


@dataclass(frozen=True)
class EncryptedIndexEntry:
    label: int
    id_field: PackedBitmap
    tag: bytes


@dataclass
class EncryptedIndex:
    """One server's share of one index.  Replaced wholesale on mutation."""

    kind: str  # "prefix" | "keyword"
    side: int
    entries: list[EncryptedIndexEntry]
    epoch: int = 0
    _by_label: Optional[dict[int, int]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("prefix", "keyword"):
            raise ParameterError(f"unknown index kind: {self.kind}")
        if self.side not in (1, 2):
            raise ParameterError(f"side must be 1 or 2, got {self.side}")

    def lookup(self, label: int) -> Optional[EncryptedIndexEntry]:
        if self._by_label is None or len(self._by_label) != len(self.entries):
            self._by_label = {e.label: i for i, e in enumerate(self.entries)}
            if len(self._by_label) != len(self.entries):
                raise ProtocolError(f"duplicate labels in {self.kind} index side {self.side}")
        i = self._by_label.get(label)
        return self.entries[i] if i is not None else None

    def replace_entries(self, entries: list[EncryptedIndexEntry], epoch: Optional[int] = None) -> None:
        self.entries = entries
        self._by_label = None
        if epoch is not None:
            self.epoch = epoch

    def replace_id_field(self, label: int, id_field: PackedBitmap) -> None:
        entry = self.lookup(label)
        if entry is None:
            raise ProtocolError("no entry under the given label")
        i = self._by_label[label]
        self.entries[i] = EncryptedIndexEntry(label, id_field, entry.tag)


def encrypted_index_build(
    prefix_rows: dict[PrefixElement, Bitmap],
    keyword_rows: dict[str, Bitmap],
    master_key: LabelKey,
    tag_key: bytes,
    group: GroupParams,
    pk: PaillierPublicKey,
    slot_bits: int,
    rng,
) -> dict[int, tuple[EncryptedIndex, EncryptedIndex]]:
    """Both servers' encrypted index pair: side -> (prefix, keyword).

    Labels are deterministic in the master key and canonical term bytes;
    share ciphertexts are independent across sides.
    """
    sides: dict[int, tuple[list, list]] = {1: ([], []), 2: ([], [])}
    for rows, to_bytes, slot in (
        (prefix_rows, prefix_bytes, 0),
        (keyword_rows, keyword_bytes, 1),
    ):
        for term, bitmap in rows.items():
            term_b = to_bytes(term)
            label = labels_mod.evaluate(group, master_key, term_b)
            share1, share2 = split_shares(bitmap, rng)
            for side, share in ((1, share1), (2, share2)):
                sides[side][slot].append(
                    EncryptedIndexEntry(
                        label,
                        pack_bitmap(share, slot_bits, pk, rng),
                        prf.initial_tag(tag_key, side, term_b),
                    )
                )
    return {
        side: (
            EncryptedIndex("prefix", side, pair[0]),
            EncryptedIndex("keyword", side, pair[1]),
        )
        for side, pair in sides.items()
    }
