"""Byte encodings for every protocol message.

All multi-byte integers are big-endian and fixed width: group elements
carry the modulus width, Paillier ciphertexts 2x the modulus width, tags
16 bytes.  Every payload starts with a one-byte phase code and embeds
the element widths it uses, so a transcript can be parsed with no side
channel beyond the bytes themselves.  Key material and persisted state
additionally carry a one-byte format version.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

from .crypto.paillier import PartialDecryption
from .crypto.prf import TAG_BYTES
from .errors import ProtocolError
from .index import EncryptedIndexEntry
from .packing import PackedBitmap
from .protocol.maintenance import UpdateTable, UpdateToken, UpdateTokenSet
from .protocol.query import RedistributionSet, ResolveReport, SearchResponse, TrapdoorSet

FORMAT_VERSION = 1

PHASE_SETUP = "setup-keys"
PHASE_OBJECTS = "object-store"
PHASE_INDEX_SHIP = "index-ship"
PHASE_STATE_TABLE = "state-table"
PHASE_TOKENS = "tokens"
PHASE_RESOLVE = "resolve"
PHASE_RESPONSE = "response"
PHASE_REDISTRIBUTE = "redistribute"
PHASE_SHUFFLE_OUT = "shuffle-out"
PHASE_SHUFFLE_RETURN = "shuffle-return"
PHASE_UPDATE_TOKENS = "update-tokens"
PHASE_UPDATE_TABLE = "update-table"
PHASE_UPDATE_MERGED = "update-merged"

_PHASE_CODES = {
    PHASE_SETUP: 1,
    PHASE_OBJECTS: 2,
    PHASE_INDEX_SHIP: 3,
    PHASE_STATE_TABLE: 4,
    PHASE_TOKENS: 5,
    PHASE_RESOLVE: 6,
    PHASE_RESPONSE: 7,
    PHASE_REDISTRIBUTE: 8,
    PHASE_SHUFFLE_OUT: 9,
    PHASE_SHUFFLE_RETURN: 10,
    PHASE_UPDATE_TOKENS: 11,
    PHASE_UPDATE_TABLE: 12,
    PHASE_UPDATE_MERGED: 13,
}
_CODE_PHASES = {v: k for k, v in _PHASE_CODES.items()}

_KIND_CODES = {"prefix": 1, "keyword": 2}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


class _Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def u8(self, v: int):
        self.parts.append(struct.pack(">B", v))

    def u16(self, v: int):
        self.parts.append(struct.pack(">H", v))

    def u32(self, v: int):
        self.parts.append(struct.pack(">I", v))

    def fixed(self, data: bytes, width: int):
        if len(data) != width:
            raise ProtocolError(f"expected {width} bytes, got {len(data)}")
        self.parts.append(data)

    def integer(self, v: int, width: int):
        self.parts.append(v.to_bytes(width, "big"))

    def blob(self, data: bytes):
        self.u32(len(data))
        self.parts.append(data)

    def done(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ProtocolError("truncated payload")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def fixed(self, width: int) -> bytes:
        return self._take(width)

    def integer(self, width: int) -> int:
        return int.from_bytes(self._take(width), "big")

    def blob(self) -> bytes:
        return self._take(self.u32())

    def expect_end(self):
        if self.pos != len(self.data):
            raise ProtocolError("trailing bytes in payload")


def phase_of(payload: bytes) -> str:
    if not payload:
        raise ProtocolError("empty payload")
    phase = _CODE_PHASES.get(payload[0])
    if phase is None:
        raise ProtocolError(f"unknown phase code {payload[0]}")
    return phase


def _header(w: _Writer, phase: str, epoch: int):
    w.u8(_PHASE_CODES[phase])
    w.u32(epoch)


def _open(payload: bytes, phase: str) -> _Reader:
    r = _Reader(payload)
    code = r.u8()
    if code != _PHASE_CODES[phase]:
        raise ProtocolError(f"expected {phase} payload, got {_CODE_PHASES.get(code)}")
    return r


# --- versioned opaque payloads (setup keys, persisted blobs) -------------

def encode_opaque(phase: str, data: bytes) -> bytes:
    w = _Writer()
    w.u8(_PHASE_CODES[phase])
    w.u8(FORMAT_VERSION)
    w.blob(data)
    return w.done()


def decode_opaque(payload: bytes, phase: str) -> bytes:
    r = _open(payload, phase)
    version = r.u8()
    if version != FORMAT_VERSION:
        raise ProtocolError(f"unsupported format version {version}")
    data = r.blob()
    r.expect_end()
    return data


# --- object store shipments ----------------------------------------------

def encode_objects(items: list[tuple[int, bytes]]) -> bytes:
    w = _Writer()
    w.u8(_PHASE_CODES[PHASE_OBJECTS])
    w.u32(len(items))
    for oid, blob in items:
        w.u32(oid)
        w.blob(blob)
    return w.done()


def decode_objects(payload: bytes) -> list[tuple[int, bytes]]:
    r = _open(payload, PHASE_OBJECTS)
    items = [(r.u32(), r.blob()) for _ in range(r.u32())]
    r.expect_end()
    return items


# --- client state table ----------------------------------------------------

def encode_state_table(object_count: int, terms: list[bytes]) -> bytes:
    w = _Writer()
    w.u8(_PHASE_CODES[PHASE_STATE_TABLE])
    w.u8(FORMAT_VERSION)
    w.u32(object_count)
    w.u32(len(terms))
    for term in terms:
        w.u16(len(term))
        w.parts.append(term)
    return w.done()


def decode_state_table(payload: bytes) -> tuple[int, list[bytes]]:
    r = _open(payload, PHASE_STATE_TABLE)
    if r.u8() != FORMAT_VERSION:
        raise ProtocolError("unsupported format version")
    object_count = r.u32()
    terms = [r.fixed(r.u16()) for _ in range(r.u32())]
    r.expect_end()
    return object_count, terms


# --- index shipments (build and shuffle hops) ------------------------------

def _write_entries(w: _Writer, entries: list[EncryptedIndexEntry], gb: int, cb: int):
    w.u32(len(entries))
    for e in entries:
        w.integer(e.label, gb)
        w.fixed(e.tag, TAG_BYTES)
        w.u16(len(e.id_field.chunks))
        for c in e.id_field.chunks:
            w.integer(c, cb)


def _read_entries(r: _Reader, gb: int, cb: int) -> list[EncryptedIndexEntry]:
    out = []
    for _ in range(r.u32()):
        label = r.integer(gb)
        tag = r.fixed(TAG_BYTES)
        chunks = tuple(r.integer(cb) for _ in range(r.u16()))
        out.append(EncryptedIndexEntry(label, PackedBitmap(chunks), tag))
    return out


def encode_index_ship(
    phase: str,
    epoch: int,
    side: int,
    group_bytes: int,
    ct_bytes: int,
    prefix_entries: list[EncryptedIndexEntry],
    keyword_entries: list[EncryptedIndexEntry],
) -> bytes:
    w = _Writer()
    _header(w, phase, epoch)
    w.u8(side)
    w.u16(group_bytes)
    w.u16(ct_bytes)
    _write_entries(w, prefix_entries, group_bytes, ct_bytes)
    _write_entries(w, keyword_entries, group_bytes, ct_bytes)
    return w.done()


@dataclass(frozen=True)
class IndexShipment:
    epoch: int
    side: int
    prefix_entries: list[EncryptedIndexEntry]
    keyword_entries: list[EncryptedIndexEntry]


def decode_index_ship(payload: bytes, phase: str) -> IndexShipment:
    r = _open(payload, phase)
    epoch, side = r.u32(), r.u8()
    gb, cb = r.u16(), r.u16()
    prefix_entries = _read_entries(r, gb, cb)
    keyword_entries = _read_entries(r, gb, cb)
    r.expect_end()
    return IndexShipment(epoch, side, prefix_entries, keyword_entries)


# --- query messages ---------------------------------------------------------

def encode_tokens(tokens: TrapdoorSet, group_bytes: int) -> bytes:
    w = _Writer()
    _header(w, PHASE_TOKENS, tokens.epoch)
    w.u16(group_bytes)
    w.u16(len(tokens.prefix))
    w.u16(len(tokens.keyword))
    for label in tokens.prefix + tokens.keyword:
        w.integer(label, group_bytes)
    return w.done()


def decode_tokens(payload: bytes) -> TrapdoorSet:
    r = _open(payload, PHASE_TOKENS)
    epoch = r.u32()
    gb = r.u16()
    np, nw = r.u16(), r.u16()
    labels = [r.integer(gb) for _ in range(np + nw)]
    r.expect_end()
    return TrapdoorSet(epoch, tuple(labels[:np]), tuple(labels[np:]))


def _write_partial_terms(
    w: _Writer, terms: tuple[Optional[tuple[PartialDecryption, ...]], ...], cb: int
):
    w.u16(len(terms))
    for partials in terms:
        if partials is None:
            w.u8(0)
            continue
        w.u8(1)
        w.u16(len(partials))
        for pd in partials:
            w.integer(pd.ciphertext, cb)
            w.integer(pd.partial, cb)
            w.u8(pd.share_index)


def _read_partial_terms(r: _Reader, cb: int):
    out = []
    for _ in range(r.u16()):
        if r.u8() == 0:
            out.append(None)
            continue
        out.append(
            tuple(
                PartialDecryption(r.integer(cb), r.integer(cb), r.u8())
                for _ in range(r.u16())
            )
        )
    return tuple(out)


def encode_resolve(report: ResolveReport, ct_bytes: int) -> bytes:
    w = _Writer()
    _header(w, PHASE_RESOLVE, report.epoch)
    w.u8(report.share_side)
    w.u16(ct_bytes)
    _write_partial_terms(w, report.prefix, ct_bytes)
    _write_partial_terms(w, report.keyword, ct_bytes)
    return w.done()


def decode_resolve(payload: bytes) -> ResolveReport:
    r = _open(payload, PHASE_RESOLVE)
    epoch, side = r.u32(), r.u8()
    cb = r.u16()
    prefix = _read_partial_terms(r, cb)
    keyword = _read_partial_terms(r, cb)
    r.expect_end()
    return ResolveReport(epoch, side, prefix, keyword)


def _write_chunk_terms(w: _Writer, terms, chunk_bytes: int):
    w.u16(len(terms))
    for chunks in terms:
        if chunks is None:
            w.u8(0)
            continue
        w.u8(1)
        w.u16(len(chunks))
        for value in chunks:
            w.integer(value, chunk_bytes)


def _read_chunk_terms(r: _Reader, chunk_bytes: int):
    out = []
    for _ in range(r.u16()):
        if r.u8() == 0:
            out.append(None)
        else:
            out.append(tuple(r.integer(chunk_bytes) for _ in range(r.u16())))
    return tuple(out)


def encode_response(resp: SearchResponse, chunk_bytes: int) -> bytes:
    w = _Writer()
    _header(w, PHASE_RESPONSE, resp.epoch)
    w.u8(resp.share_side)
    w.u32(resp.object_count)
    w.u16(chunk_bytes)
    _write_chunk_terms(w, resp.prefix_chunks, chunk_bytes)
    _write_chunk_terms(w, resp.keyword_chunks, chunk_bytes)
    w.u32(len(resp.candidates))
    for oid, blob in resp.candidates:
        w.u32(oid)
        w.blob(blob)
    return w.done()


def decode_response(payload: bytes) -> SearchResponse:
    r = _open(payload, PHASE_RESPONSE)
    epoch, side, count = r.u32(), r.u8(), r.u32()
    chunk_bytes = r.u16()
    prefix_chunks = _read_chunk_terms(r, chunk_bytes)
    keyword_chunks = _read_chunk_terms(r, chunk_bytes)
    candidates = tuple((r.u32(), r.blob()) for _ in range(r.u32()))
    r.expect_end()
    return SearchResponse(epoch, side, count, prefix_chunks, keyword_chunks, candidates)


def response_candidate_bytes(payload: bytes) -> int:
    """Bytes of the candidate section (result-volume dependent part)."""
    resp = decode_response(payload)
    return sum(8 + len(blob) for _, blob in resp.candidates) + 4


# --- redistribution ---------------------------------------------------------

def encode_redistribution(rset: RedistributionSet, group_bytes: int, ct_bytes: int) -> bytes:
    w = _Writer()
    _header(w, PHASE_REDISTRIBUTE, rset.epoch)
    w.u16(group_bytes)
    w.u16(ct_bytes)
    for items in (rset.prefix, rset.keyword):
        w.u16(len(items))
        for trapdoor, packed in items:
            w.integer(trapdoor, group_bytes)
            w.u16(len(packed.chunks))
            for c in packed.chunks:
                w.integer(c, ct_bytes)
    return w.done()


def decode_redistribution(payload: bytes) -> RedistributionSet:
    r = _open(payload, PHASE_REDISTRIBUTE)
    epoch = r.u32()
    gb, cb = r.u16(), r.u16()
    sections = []
    for _ in range(2):
        items = []
        for _ in range(r.u16()):
            trapdoor = r.integer(gb)
            chunks = tuple(r.integer(cb) for _ in range(r.u16()))
            items.append((trapdoor, PackedBitmap(chunks)))
        sections.append(tuple(items))
    r.expect_end()
    return RedistributionSet(epoch, sections[0], sections[1])


# --- update messages --------------------------------------------------------

def _write_update_tokens(w: _Writer, tokens: tuple[UpdateToken, ...], gb: int, cb: int):
    w.u16(len(tokens))
    for t in tokens:
        if t.address is not None:
            w.u8(0)
            w.fixed(t.address, TAG_BYTES)
        else:
            w.u8(1)
            w.integer(t.label, gb)
            w.fixed(t.tag, TAG_BYTES)
        w.u16(len(t.delta.chunks))
        for c in t.delta.chunks:
            w.integer(c, cb)


def _read_update_tokens(r: _Reader, gb: int, cb: int) -> tuple[UpdateToken, ...]:
    out = []
    for _ in range(r.u16()):
        fresh = r.u8()
        if fresh == 0:
            address, label, tag = r.fixed(TAG_BYTES), None, None
        else:
            address, label, tag = None, r.integer(gb), r.fixed(TAG_BYTES)
        chunks = tuple(r.integer(cb) for _ in range(r.u16()))
        out.append(UpdateToken(PackedBitmap(chunks), address, label, tag))
    return tuple(out)


def encode_update_tokens(ts: UpdateTokenSet, group_bytes: int, ct_bytes: int) -> bytes:
    w = _Writer()
    _header(w, PHASE_UPDATE_TOKENS, ts.epoch)
    w.u8(ts.side)
    w.u32(ts.object_id)
    w.u32(ts.new_count)
    w.u16(group_bytes)
    w.u16(ct_bytes)
    _write_update_tokens(w, ts.prefix, group_bytes, ct_bytes)
    _write_update_tokens(w, ts.keyword, group_bytes, ct_bytes)
    return w.done()


def decode_update_tokens(payload: bytes) -> UpdateTokenSet:
    r = _open(payload, PHASE_UPDATE_TOKENS)
    epoch, side = r.u32(), r.u8()
    oid, new_count = r.u32(), r.u32()
    gb, cb = r.u16(), r.u16()
    prefix = _read_update_tokens(r, gb, cb)
    keyword = _read_update_tokens(r, gb, cb)
    r.expect_end()
    return UpdateTokenSet(epoch, side, oid, new_count, prefix, keyword)


def _write_table(w: _Writer, table: UpdateTable, cb: int):
    w.u8(_KIND_CODES[table.kind])
    w.u32(len(table.rows))
    for addr, packed in table.rows:
        w.fixed(addr, TAG_BYTES)
        w.u16(len(packed.chunks))
        for c in packed.chunks:
            w.integer(c, cb)


def _read_table(r: _Reader, epoch: int, side: int, cb: int) -> UpdateTable:
    kind = _KIND_NAMES[r.u8()]
    rows = []
    for _ in range(r.u32()):
        addr = r.fixed(TAG_BYTES)
        chunks = tuple(r.integer(cb) for _ in range(r.u16()))
        rows.append((addr, PackedBitmap(chunks)))
    return UpdateTable(epoch, side, kind, tuple(rows))


def encode_update_tables(
    phase: str, epoch: int, side: int, ct_bytes: int,
    prefix_table: UpdateTable, keyword_table: UpdateTable,
    group_bytes: int = 0,
    fresh_keyword: tuple[UpdateToken, ...] = (),
) -> bytes:
    w = _Writer()
    _header(w, phase, epoch)
    w.u8(side)
    w.u16(ct_bytes)
    _write_table(w, prefix_table, ct_bytes)
    _write_table(w, keyword_table, ct_bytes)
    if phase == PHASE_UPDATE_MERGED:
        w.u16(group_bytes)
        _write_update_tokens(w, fresh_keyword, group_bytes, ct_bytes)
    return w.done()


@dataclass(frozen=True)
class UpdateTablesMessage:
    epoch: int
    side: int
    prefix_table: UpdateTable
    keyword_table: UpdateTable
    fresh_keyword: tuple[UpdateToken, ...]


def decode_update_tables(payload: bytes, phase: str) -> UpdateTablesMessage:
    r = _open(payload, phase)
    epoch, side = r.u32(), r.u8()
    cb = r.u16()
    prefix_table = _read_table(r, epoch, side, cb)
    keyword_table = _read_table(r, epoch, side, cb)
    fresh: tuple[UpdateToken, ...] = ()
    if phase == PHASE_UPDATE_MERGED:
        gb = r.u16()
        fresh = _read_update_tokens(r, gb, cb)
    r.expect_end()
    return UpdateTablesMessage(epoch, side, prefix_table, keyword_table, fresh)
