"""The query protocol: tokens, two-server resolution, recovery, re-split.

One query runs the same exchange in both directions.  Each server
re-addresses the client's trapdoors to the current index labels with its
re-keying ratio, looks them up in its own index share, and partially
decrypts the matching ID fields with its half of the decryption key; the
opposite server finishes the decryption, recovers that share's bitmaps
in the clear, and returns them with candidate sealed objects.  The
client combines the two shares per term, evaluates the Boolean range
predicate, and finally re-splits every touched row so neither server's
view of the next query correlates with this one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..bitmap import Bitmap, combine_shares, split_shares
from ..crypto import labels as labels_mod
from ..crypto.group import GroupParams
from ..crypto.labels import LabelKey
from ..crypto.paillier import KeyShare, PaillierPublicKey, PartialDecryption, finish_decrypt
from ..crypto.sealing import open_sealed
from ..errors import EpochMismatchError, ParameterError, ProtocolError
from ..index import EncryptedIndex, keyword_bytes, prefix_bytes, canonical_keyword
from ..packing import PackedBitmap, pack_bitmap, partial_decrypt_packed, unpack_bitmap
from ..spatial import (
    GridSpec,
    PrefixElement,
    SpatialRange,
    min_prefix_cover,
    region_to_intervals,
)
from .state import TermStateTable

MODE_CORRECTED = "corrected"
MODE_LITERAL = "literal"


@dataclass(frozen=True)
class BooleanRangeQuery:
    """Conjunctive query: location in a range AND all keywords present.

    The range comes either from a coordinate rectangle or directly as
    curve-position intervals.
    """

    keywords: tuple[str, ...] = ()
    rect: Optional[tuple[float, float, float, float]] = None
    intervals: Optional[tuple[tuple[int, int], ...]] = None

    def __post_init__(self):
        if (self.rect is None) == (self.intervals is None):
            raise ParameterError("provide exactly one of rect or intervals")

    def resolve_range(self, grid: GridSpec) -> SpatialRange:
        if self.rect is not None:
            return region_to_intervals(self.rect, grid)
        return SpatialRange.from_intervals(self.intervals, grid.total_bits)

    def canonical_keywords(self) -> tuple[str, ...]:
        return tuple(sorted({canonical_keyword(w) for w in self.keywords}))


def cover_terms(spatial_range: SpatialRange, total_bits: int) -> list[PrefixElement]:
    """Cover elements as index terms.

    The stored universe has no all-wildcard row, so a full-space cover is
    expanded into the two half-space prefixes; coverage is unchanged.
    """
    cover = []
    for element in min_prefix_cover(spatial_range, total_bits):
        if element.length == 0:
            cover.extend([PrefixElement(0, 1), PrefixElement(1, 1)])
        else:
            cover.append(element)
    return cover


@dataclass(frozen=True)
class TrapdoorSet:
    """What a server receives: epoch plus one label per query term."""

    epoch: int
    prefix: tuple[int, ...]
    keyword: tuple[int, ...]


@dataclass(frozen=True)
class QueryPlan:
    """Client-side memory needed to interpret the responses."""

    epoch: int
    prefix_terms: tuple[bytes, ...]
    keyword_terms: tuple[bytes, ...]
    prefix_trapdoors: tuple[int, ...]
    keyword_trapdoors: tuple[int, ...]


def generate_tokens(
    query: BooleanRangeQuery,
    grid: GridSpec,
    group: GroupParams,
    client_key: LabelKey,
    r1: int,
    r2: int,
    state: TermStateTable,
) -> tuple[TrapdoorSet, QueryPlan]:
    """Trapdoors under the client key drifted to each term's round count.

    A term that has been through U rounds carries label exponent
    k_M*(r1*r2)^U on the servers, so the matching trapdoor uses
    k_u*(r1*r2)^U; the server-side re-keying ratio k_M/k_u then lands
    exactly on the stored label.  Unknown keywords still get a trapdoor
    (they resolve to nothing).
    """
    gamma = grid.total_bits
    prefix_terms = tuple(prefix_bytes(e) for e in cover_terms(query.resolve_range(grid), gamma))
    keyword_terms = tuple(keyword_bytes(w) for w in query.canonical_keywords())

    def trapdoor(term: bytes) -> int:
        drifted = labels_mod.epoch_key(group, client_key, r1, r2, state.counter_for(term))
        return labels_mod.evaluate(group, drifted, term)

    prefix_td = tuple(trapdoor(t) for t in prefix_terms)
    keyword_td = tuple(trapdoor(t) for t in keyword_terms)
    tokens = TrapdoorSet(state.epoch, prefix_td, keyword_td)
    plan = QueryPlan(state.epoch, prefix_terms, keyword_terms, prefix_td, keyword_td)
    return tokens, plan


@dataclass(frozen=True)
class ResolveReport:
    """Per-term partial decryptions of one side's ID fields."""

    epoch: int
    share_side: int
    prefix: tuple[Optional[tuple[PartialDecryption, ...]], ...]
    keyword: tuple[Optional[tuple[PartialDecryption, ...]], ...]


def server_resolve(
    tokens: TrapdoorSet,
    prefix_index: EncryptedIndex,
    keyword_index: EncryptedIndex,
    switch: LabelKey,
    share: KeyShare,
    group: GroupParams,
    pk: PaillierPublicKey,
) -> ResolveReport:
    """Re-address each trapdoor to the index and partially decrypt its row.

    A missing label is reported per term rather than failing the query:
    the client may probe keywords outside the vocabulary.
    """
    if tokens.epoch != prefix_index.epoch or tokens.epoch != keyword_index.epoch:
        raise EpochMismatchError(
            f"tokens at epoch {tokens.epoch}, index at {prefix_index.epoch}"
        )

    def resolve(index: EncryptedIndex, trapdoors):
        out = []
        for t in trapdoors:
            entry = index.lookup(labels_mod.apply_switch(group, t, switch))
            out.append(
                tuple(partial_decrypt_packed(pk, entry.id_field, share)) if entry else None
            )
        return tuple(out)

    return ResolveReport(
        tokens.epoch,
        prefix_index.side,
        resolve(prefix_index, tokens.prefix),
        resolve(keyword_index, tokens.keyword),
    )


@dataclass(frozen=True)
class SearchResponse:
    """One direction's answer: recovered share chunks plus candidates.

    Chunks are the decrypted slot-packed integers of the resolving side's
    share bitmaps; candidates carry the sealed objects those shares could
    possibly mark as results.
    """

    epoch: int
    share_side: int
    object_count: int
    prefix_chunks: tuple[Optional[tuple[int, ...]], ...]
    keyword_chunks: tuple[Optional[tuple[int, ...]], ...]
    candidates: tuple[tuple[int, bytes], ...]


def server_complete(
    report: ResolveReport,
    share: KeyShare,
    object_store: dict[int, bytes],
    pk: PaillierPublicKey,
    slot_bits: int,
    object_count: int,
    literal: bool = False,
) -> SearchResponse:
    """Finish the opposite server's partial decryptions and pick candidates.

    Default candidates are every object marked in any recovered prefix
    share: any final result must show up in at least one side's prefix
    shares, so the union over both directions always covers it.  Literal
    mode instead intersects keyword shares locally, reproducing the
    original per-server candidate rule for fidelity experiments.
    """

    def finish(per_term):
        chunks, bitmaps = [], []
        for partials in per_term:
            if partials is None:
                chunks.append(None)
                bitmaps.append(None)
            else:
                values = tuple(finish_decrypt(pk, pd, share) for pd in partials)
                chunks.append(values)
                bitmaps.append(unpack_bitmap(list(values), object_count, slot_bits, pk))
        return tuple(chunks), bitmaps

    prefix_chunks, prefix_bitmaps = finish(report.prefix)
    keyword_chunks, keyword_bitmaps = finish(report.keyword)

    zeros = Bitmap.zeros(object_count)
    prefix_union = zeros
    for bm in prefix_bitmaps:
        prefix_union = prefix_union | (bm or zeros)
    if literal:
        marked = prefix_union
        for bm in keyword_bitmaps:
            marked = marked & (bm or zeros)
    else:
        marked = prefix_union
    missing = [i for i in marked.positions() if i not in object_store]
    if missing:
        raise ProtocolError(f"object store lacks ids {missing}")
    candidates = tuple((i, object_store[i]) for i in marked.positions())
    return SearchResponse(
        report.epoch,
        report.share_side,
        object_count,
        prefix_chunks,
        keyword_chunks,
        candidates,
    )


@dataclass(frozen=True)
class ResultSet:
    ids: tuple[int, ...]
    objects: dict[int, bytes]


@dataclass(frozen=True)
class RecoveryOutcome:
    """Result plus the per-term combined bitmaps needed for the re-split."""

    result: ResultSet
    prefix_bitmaps: tuple[Optional[Bitmap], ...]
    keyword_bitmaps: tuple[Optional[Bitmap], ...]


def client_recover(
    resp_a: SearchResponse,
    resp_b: SearchResponse,
    plan: QueryPlan,
    object_key: bytes,
    pk: PaillierPublicKey,
    slot_bits: int,
    mode: str = MODE_CORRECTED,
) -> RecoveryOutcome:
    """Combine both share sides and evaluate the Boolean predicate.

    Corrected mode (default) reconstructs each term's full bitmap before
    intersecting, which matches the plaintext semantics even when an
    object's keyword bits sit in opposite shares.  Literal mode unions
    the two servers' own candidate sets instead.
    """
    if mode not in (MODE_CORRECTED, MODE_LITERAL):
        raise ParameterError(f"unknown recovery mode: {mode}")
    by_side = {resp_a.share_side: resp_a, resp_b.share_side: resp_b}
    if set(by_side) != {1, 2}:
        raise ProtocolError("need one response per share side")
    r1, r2 = by_side[1], by_side[2]
    if r1.epoch != r2.epoch or r1.object_count != r2.object_count:
        raise ProtocolError("responses disagree on epoch or object count")
    n = r1.object_count

    def combine(chunks_a, chunks_b, count):
        if len(chunks_a) != count or len(chunks_b) != count:
            raise ProtocolError("per-term response length mismatch")
        combined: list[Optional[Bitmap]] = []
        for ca, cb in zip(chunks_a, chunks_b):
            if (ca is None) != (cb is None):
                raise ProtocolError("servers disagree on term presence")
            if ca is None:
                combined.append(None)
            else:
                combined.append(
                    combine_shares(
                        unpack_bitmap(list(ca), n, slot_bits, pk),
                        unpack_bitmap(list(cb), n, slot_bits, pk),
                    )
                )
        return tuple(combined)

    prefix_full = combine(r1.prefix_chunks, r2.prefix_chunks, len(plan.prefix_terms))
    keyword_full = combine(r1.keyword_chunks, r2.keyword_chunks, len(plan.keyword_terms))

    sealed = dict(r1.candidates)
    sealed.update(r2.candidates)

    if mode == MODE_LITERAL:
        ids = tuple(sorted(sealed))
    else:
        zeros = Bitmap.zeros(n)
        range_bits = zeros
        for bm in prefix_full:
            range_bits = range_bits | (bm or zeros)
        result_bits = range_bits
        for bm in keyword_full:
            result_bits = result_bits & (bm or zeros)
        ids = result_bits.positions()

    objects = {}
    for oid in ids:
        if oid not in sealed:
            raise ProtocolError(f"result object {oid} missing from candidates")
        objects[oid] = open_sealed(object_key, sealed[oid])
    return RecoveryOutcome(ResultSet(ids, objects), prefix_full, keyword_full)


@dataclass(frozen=True)
class RedistributionSet:
    """Fresh ID fields for one server, addressed by the search trapdoors."""

    epoch: int
    prefix: tuple[tuple[int, PackedBitmap], ...]
    keyword: tuple[tuple[int, PackedBitmap], ...]


def build_redistribution(
    plan: QueryPlan,
    outcome: RecoveryOutcome,
    pk: PaillierPublicKey,
    slot_bits: int,
    rng,
) -> dict[int, RedistributionSet]:
    """Re-split every row the query touched into fresh random shares.

    The combined bitmaps are preserved exactly; the share assignment is
    drawn fresh, so post-query rows carry no correlation with what either
    server recovered during the search.
    """
    per_side: dict[int, dict[str, list]] = {
        1: {"prefix": [], "keyword": []},
        2: {"prefix": [], "keyword": []},
    }
    for kind, trapdoors, bitmaps in (
        ("prefix", plan.prefix_trapdoors, outcome.prefix_bitmaps),
        ("keyword", plan.keyword_trapdoors, outcome.keyword_bitmaps),
    ):
        for trapdoor, bitmap in zip(trapdoors, bitmaps):
            if bitmap is None:
                continue
            share1, share2 = split_shares(bitmap, rng)
            per_side[1][kind].append((trapdoor, pack_bitmap(share1, slot_bits, pk, rng)))
            per_side[2][kind].append((trapdoor, pack_bitmap(share2, slot_bits, pk, rng)))
    return {
        side: RedistributionSet(
            plan.epoch, tuple(lists["prefix"]), tuple(lists["keyword"])
        )
        for side, lists in per_side.items()
    }


def apply_redistribution(
    rset: RedistributionSet,
    prefix_index: EncryptedIndex,
    keyword_index: EncryptedIndex,
    switch: LabelKey,
    group: GroupParams,
) -> None:
    """Replace touched rows' ID fields in place, addressed by trapdoor."""
    if rset.epoch != prefix_index.epoch or rset.epoch != keyword_index.epoch:
        raise EpochMismatchError("redistribution built against a different epoch")
    for index, items in ((prefix_index, rset.prefix), (keyword_index, rset.keyword)):
        for trapdoor, packed in items:
            label = labels_mod.apply_switch(group, trapdoor, switch)
            if index.lookup(label) is None:
                raise EpochMismatchError(
                    "row vanished since the search; resync and retry"
                )
            index.replace_id_field(label, packed)
