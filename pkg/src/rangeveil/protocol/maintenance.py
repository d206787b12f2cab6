"""Index shuffling and oblivious updates.

A shuffle round for one server's indexes makes two hops: the peer
re-keys every label with its scalar, re-randomizes every ID field,
steps every tag, and permutes; the holder then does the same with its
own scalar.  After a full round (both servers' indexes) every label has
absorbed r1*r2 and nothing is byte-linkable across the round.

An update inserts one object.  The client turns the object's prefix and
keyword terms into per-side tokens: existing rows are addressed by a
keyed position derived from the row's current tag, fresh keywords carry
a client-keyed label and a starting tag.  The merge is oblivious to the
row holder: the holder sends its rows re-randomized and keyed only by
position, the peer folds each delta in while touching every position
identically, and the holder rebuilds from what comes back.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..bitmap import Bitmap
from ..crypto import labels as labels_mod
from ..crypto import prf
from ..crypto.group import GroupParams
from ..crypto.labels import LabelKey
from ..crypto.paillier import PaillierPublicKey
from ..errors import EpochMismatchError, ParameterError, ProtocolError
from ..index import (
    EncryptedIndex,
    EncryptedIndexEntry,
    SpatioTextualObject,
    keyword_bytes,
    prefix_bytes,
)
from ..packing import PackedBitmap, add_packed, pack_bitmap, rerandomize_packed
from ..spatial import GridSpec, prefix_family
from .state import TermStateTable


@dataclass(frozen=True)
class ShuffleScalars:
    """The per-server shuffle secrets; both are label exponents and
    tag-chain inputs."""

    r1: int
    r2: int

    def check(self, group: GroupParams) -> None:
        for r in (self.r1, self.r2):
            if r % group.order == 0:
                raise ParameterError("shuffle scalar is zero mod the group order")

    def for_side(self, side: int) -> int:
        if side not in (1, 2):
            raise ParameterError(f"side must be 1 or 2, got {side}")
        return self.r1 if side == 1 else self.r2


def shuffle_pass(
    entries: list[EncryptedIndexEntry],
    scalar: int,
    group: GroupParams,
    pk: PaillierPublicKey,
    rng,
) -> list[EncryptedIndexEntry]:
    """One hop: re-key labels, re-randomize ID fields, step tags, permute."""
    ratio = LabelKey(scalar % group.order)
    out = [
        EncryptedIndexEntry(
            labels_mod.apply_switch(group, e.label, ratio),
            rerandomize_packed(pk, e.id_field, rng),
            prf.step_tag(e.tag, scalar),
        )
        for e in entries
    ]
    rng.shuffle(out)
    return out


def check_round_epoch(expected: int, *indexes: EncryptedIndex) -> None:
    for index in indexes:
        if index.epoch != expected:
            raise EpochMismatchError(
                f"index at epoch {index.epoch}, round expects {expected}"
            )


@dataclass(frozen=True)
class UpdateToken:
    """One per-term update instruction for one side.

    Existing rows: `address` names the row obliviously and `delta` is
    added into its slots.  Fresh keywords: `label` (client-keyed) and
    `tag` define a new row whose ID field is `delta`.
    """

    delta: PackedBitmap
    address: Optional[bytes] = None
    label: Optional[int] = None
    tag: Optional[bytes] = None

    def __post_init__(self):
        positioned = self.address is not None
        fresh = self.label is not None and self.tag is not None
        if positioned == fresh:
            raise ParameterError("token must be either positioned or fresh")


@dataclass(frozen=True)
class UpdateTokenSet:
    """All tokens one side's indexes need for one inserted object."""

    epoch: int
    side: int
    object_id: int
    new_count: int
    prefix: tuple[UpdateToken, ...]
    keyword: tuple[UpdateToken, ...]


def generate_update_tokens(
    obj: SpatioTextualObject,
    grid: GridSpec,
    group: GroupParams,
    client_key: LabelKey,
    tag_key: bytes,
    perm_key: bytes,
    scalars: ShuffleScalars,
    state: TermStateTable,
    pk: PaillierPublicKey,
    slot_bits: int,
    rng,
) -> dict[int, UpdateTokenSet]:
    """Token sets for both sides, plus the client-state bookkeeping.

    Every term of the new object yields one token per side; the set bit
    goes to one uniformly chosen side, the other side receives a zero
    delta of identical shape.  Prefix rows always exist (the universe is
    complete), so they are always position-addressed; keywords split
    into existing (position-addressed) and fresh (new-row) cases.
    """
    if obj.oid != state.object_count:
        raise ParameterError(
            f"expected the next dense id {state.object_count}, got {obj.oid}"
        )
    new_count = state.object_count + 1
    prefix_terms = [
        prefix_bytes(e) for e in prefix_family(obj.loc, grid.total_bits) if e.length > 0
    ]
    keyword_terms = [keyword_bytes(w) for w in sorted(set(obj.keywords))]

    cap = (1 << slot_bits) - 2
    for term in prefix_terms + keyword_terms:
        if state.known(term) and state.pending_adds.get(term, 0) + 1 > cap:
            raise ParameterError(
                "slot capacity exhausted for a term; redistribute before updating"
            )

    def delta_pair(term: bytes) -> dict[int, PackedBitmap]:
        bit_side = 1 + rng.randbits(1)
        out = {}
        for side in (1, 2):
            bits = Bitmap.from_positions([obj.oid] if side == bit_side else [], new_count)
            out[side] = pack_bitmap(bits, slot_bits, pk, rng)
        return out

    sides: dict[int, dict[str, list[UpdateToken]]] = {
        1: {"prefix": [], "keyword": []},
        2: {"prefix": [], "keyword": []},
    }
    for kind, terms in (("prefix", prefix_terms), ("keyword", keyword_terms)):
        for term in terms:
            deltas = delta_pair(term)
            fresh = kind == "keyword" and not state.known(term)
            for side in (1, 2):
                if fresh:
                    token = UpdateToken(
                        delta=deltas[side],
                        label=labels_mod.evaluate(group, client_key, term),
                        tag=prf.initial_tag(tag_key, side, term),
                    )
                else:
                    base = prf.initial_tag(tag_key, side, term)
                    current = prf.chain_tag(
                        base, side, scalars.r1, scalars.r2, state.counter_for(term)
                    )
                    token = UpdateToken(
                        delta=deltas[side], address=prf.position_key(perm_key, current)
                    )
                sides[side][kind].append(token)

    for term in prefix_terms + keyword_terms:
        if state.known(term):
            state.record_add(term, slot_bits)
        else:
            state.insert_term(term)
    state.object_count = new_count

    return {
        side: UpdateTokenSet(
            state.epoch,
            side,
            obj.oid,
            new_count,
            tuple(lists["prefix"]),
            tuple(lists["keyword"]),
        )
        for side, lists in sides.items()
    }


@dataclass(frozen=True)
class UpdateTable:
    """Position-keyed, re-randomized ID fields of one index, sorted by
    position so the layout itself carries no entry order."""

    epoch: int
    side: int
    kind: str
    rows: tuple[tuple[bytes, PackedBitmap], ...]


def update_prepare(
    index: EncryptedIndex, perm_key: bytes, pk: PaillierPublicKey, rng
) -> UpdateTable:
    """Holder step one: mask the rows and key them by position only."""
    rows = sorted(
        (
            (prf.position_key(perm_key, e.tag), rerandomize_packed(pk, e.id_field, rng))
            for e in index.entries
        ),
        key=lambda row: row[0],
    )
    return UpdateTable(index.epoch, index.side, index.kind, tuple(rows))


def update_merge(
    table: UpdateTable,
    tokens: tuple[UpdateToken, ...],
    new_count: int,
    pk: PaillierPublicKey,
    slot_bits: int,
    rng,
) -> tuple[UpdateTable, tuple[UpdateToken, ...]]:
    """Peer step: fold each delta into its position, touching every row.

    Rows without a matching token get a fresh zero delta of the same
    shape, so the write pattern is identical whether or not a row was
    updated.  Fresh-row tokens pass through re-randomized.
    """
    deltas: dict[bytes, PackedBitmap] = {}
    fresh: list[UpdateToken] = []
    for token in tokens:
        if token.address is not None:
            if token.address in deltas:
                raise ProtocolError("duplicate position address in tokens")
            deltas[token.address] = token.delta
        else:
            fresh.append(
                UpdateToken(
                    delta=rerandomize_packed(pk, token.delta, rng),
                    label=token.label,
                    tag=token.tag,
                )
            )
    known = {addr for addr, _ in table.rows}
    missing = set(deltas) - known
    if missing:
        raise ProtocolError("position address not in the table; state desync")
    zero = Bitmap.zeros(new_count)
    merged = tuple(
        (
            addr,
            add_packed(
                pk,
                chunks,
                deltas[addr] if addr in deltas else pack_bitmap(zero, slot_bits, pk, rng),
            ),
        )
        for addr, chunks in table.rows
    )
    return UpdateTable(table.epoch, table.side, table.kind, merged), tuple(fresh)


def update_finalize(
    index: EncryptedIndex,
    merged: UpdateTable,
    fresh: tuple[UpdateToken, ...],
    switch: LabelKey,
    perm_key: bytes,
    group: GroupParams,
) -> None:
    """Holder step two: rebuild rows from the merged table, append fresh
    keyword rows re-keyed to the index, and lay everything out in
    position order."""
    if merged.epoch != index.epoch:
        raise EpochMismatchError("merged table from a different epoch")
    by_position = {prf.position_key(perm_key, e.tag): e for e in index.entries}
    if len(by_position) != len(index.entries):
        raise ProtocolError("position collision inside one index")
    if len(merged.rows) != len(index.entries):
        raise ProtocolError("merged table size mismatch")
    rebuilt = []
    for addr, chunks in merged.rows:
        entry = by_position.get(addr)
        if entry is None:
            raise ProtocolError("merged table names an unknown position")
        rebuilt.append((addr, EncryptedIndexEntry(entry.label, chunks, entry.tag)))
    existing_labels = {e.label for e in index.entries}
    for token in fresh:
        label = labels_mod.apply_switch(group, token.label, switch)
        if label in existing_labels:
            raise ProtocolError("fresh row collides with an existing label")
        existing_labels.add(label)
        rebuilt.append(
            (
                prf.position_key(perm_key, token.tag),
                EncryptedIndexEntry(label, token.delta, token.tag),
            )
        )
    rebuilt.sort(key=lambda pair: pair[0])
    index.replace_entries([entry for _, entry in rebuilt])
