"""Plaintext oracles and transcript analysis.

Everything here works on ground-truth records or captured envelopes,
never on live actor state: the oracles give an independent answer to
compare protocol output against, and the linkage functions measure what
an honest-but-curious server could correlate across its own view.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import wire
from .errors import ParameterError
from .index import EncryptedIndexEntry, canonical_keyword
from .spatial import GridSpec, PrefixElement, SpatialRange
from .harness.fabric import Envelope


def plaintext_query_oracle(
    records: Sequence[dict],
    grid: GridSpec,
    rect: Optional[tuple[float, float, float, float]] = None,
    intervals: Optional[Sequence[tuple[int, int]]] = None,
    keywords: Sequence[str] = (),
) -> tuple[int, ...]:
    """Reference answer by direct plaintext evaluation.

    Rectangle queries compare cell coordinates axis by axis, deliberately
    bypassing the curve and cover machinery; interval queries test curve
    positions against the intervals directly.
    """
    if (rect is None) == (intervals is None):
        raise ParameterError("provide exactly one of rect or intervals")
    want = {canonical_keyword(w) for w in keywords}

    if rect is not None:
        x0, y0, x1, y1 = rect
        if x0 > x1 or y0 > y1:
            raise ParameterError("rectangle corners out of order")
        outside = (
            x1 < grid.min_x or x0 > grid.max_x or y1 < grid.min_y or y0 > grid.max_y
        )
        if outside:
            def in_range(rec) -> bool:
                return False
        else:
            cx0, cy0 = grid.quantize(max(x0, grid.min_x), max(y0, grid.min_y))
            cx1, cy1 = grid.quantize(min(x1, grid.max_x), min(y1, grid.max_y))

            def in_range(rec) -> bool:
                cx, cy = grid.quantize(rec["x"], rec["y"])
                return cx0 <= cx <= cx1 and cy0 <= cy <= cy1
    else:
        spans = [tuple(iv) for iv in intervals]

        def in_range(rec) -> bool:
            pos = grid.curve_position(rec["x"], rec["y"])
            return any(lo <= pos <= hi for lo, hi in spans)

    hits = [
        rec["id"]
        for rec in records
        if in_range(rec) and want <= {canonical_keyword(w) for w in rec["keywords"]}
    ]
    return tuple(sorted(hits))


@dataclass(frozen=True)
class PatternMatrix:
    """Access pattern (queries x objects) and search pattern (queries x queries)."""

    alpha: np.ndarray
    sigma: np.ndarray


def pattern_matrices(history, object_count: int) -> PatternMatrix:
    """Binary matrices over an executed query history.

    alpha[l, j] = 1 iff query l returned object j; sigma[l, k] = 1 iff
    queries l and k asked the same thing (same range, same keyword set).
    """
    t = len(history)
    alpha = np.zeros((t, object_count), dtype=np.uint8)
    sigma = np.zeros((t, t), dtype=np.uint8)
    keys = [(tuple(q.intervals), tuple(q.keywords)) for q in history]
    for l, q in enumerate(history):
        for j in q.result_ids:
            alpha[l, j] = 1
        for k in range(t):
            sigma[l, k] = 1 if keys[l] == keys[k] else 0
    return PatternMatrix(alpha, sigma)


def byte_links(
    pre: Sequence[EncryptedIndexEntry], post: Sequence[EncryptedIndexEntry]
) -> dict[str, int]:
    """How many byte-identical values survive from one snapshot to the next."""
    pre_labels = {e.label for e in pre}
    post_labels = {e.label for e in post}
    pre_chunks = {c for e in pre for c in e.id_field.chunks}
    post_chunks = {c for e in post for c in e.id_field.chunks}
    pre_tags = {e.tag for e in pre}
    post_tags = {e.tag for e in post}
    return {
        "labels": len(pre_labels & post_labels),
        "id_fields": len(pre_chunks & post_chunks),
        "tags": len(pre_tags & post_tags),
    }


def position_persistence(
    pre: Sequence[EncryptedIndexEntry],
    post: Sequence[EncryptedIndexEntry],
    tag_map: Callable[[bytes], bytes],
) -> tuple[int, int]:
    """(entries that kept their slot, entries total) across one transition.

    `tag_map` is the ground-truth tag transform for the transition, so
    this measures the true permutation, not an adversary's guess.
    """
    where_post = {e.tag: i for i, e in enumerate(post)}
    fixed = total = 0
    for i, entry in enumerate(pre):
        j = where_post.get(tag_map(entry.tag))
        if j is None:
            raise ParameterError("tag map does not land in the post snapshot")
        total += 1
        fixed += 1 if i == j else 0
    return fixed, total


def trapdoor_link_rate(view: Sequence[Envelope], history) -> tuple[int, int]:
    """(linked pairs, ground-truth-equal pairs) over one server's view.

    A pair of equal queries counts as linked when the two token messages
    share any label value.  Without ground truth there are no pairs to
    score, so an empty history yields (0, 0).
    """
    token_envs = [e for e in view if e.phase == wire.PHASE_TOKENS]
    if not history:
        return 0, 0
    if len(token_envs) != len(history):
        raise ParameterError(
            f"view has {len(token_envs)} token messages for {len(history)} queries"
        )
    decoded = [wire.decode_tokens(e.payload) for e in token_envs]
    labels = [set(t.prefix) | set(t.keyword) for t in decoded]
    keys = [(tuple(q.intervals), tuple(q.keywords)) for q in history]
    pairs = links = 0
    for i in range(len(history)):
        for j in range(i + 1, len(history)):
            if keys[i] != keys[j]:
                continue
            pairs += 1
            if labels[i] & labels[j]:
                links += 1
    return links, pairs


@dataclass(frozen=True)
class LinkageReport:
    """What one server could link across its own observation surface."""

    trapdoor_pairs: int
    trapdoor_links: int
    shuffle_transitions: int
    label_links: int
    id_field_links: int
    tag_links: int
    position_fixed: int
    position_total: int
    chance_baseline: float
    verdict: str

    @property
    def trapdoor_rate(self) -> float:
        return self.trapdoor_links / self.trapdoor_pairs if self.trapdoor_pairs else 0.0

    @property
    def position_rate(self) -> float:
        return self.position_fixed / self.position_total if self.position_total else 0.0

    def to_json(self) -> str:
        data = asdict(self)
        data["trapdoor_rate"] = self.trapdoor_rate
        data["position_rate"] = self.position_rate
        return json.dumps(data, sort_keys=True, indent=2)


def adversary_linkage(
    view: Sequence[Envelope],
    history,
    round_tag_map: Optional[Callable[[bytes, int], bytes]] = None,
) -> LinkageReport:
    """Linkage over one server's transcript view.

    Trapdoor linking compares token messages of ground-truth-equal
    queries.  Shuffle linking compares each side's consecutive outbound
    shipments — the same index one full round apart.  Position
    persistence additionally needs `round_tag_map(tag, side)`, the
    ground-truth tag transform across one round; it assumes no rows were
    inserted between the compared shipments.
    """
    trapdoor_links, trapdoor_pairs = trapdoor_link_rate(view, history)

    ships_by_side: dict[int, list] = {1: [], 2: []}
    for env in view:
        if env.phase == wire.PHASE_SHUFFLE_OUT:
            ship = wire.decode_index_ship(env.payload, wire.PHASE_SHUFFLE_OUT)
            ships_by_side[ship.side].append(ship)

    transitions = label_links = id_links = tag_links = 0
    fixed = total = 0
    for side, ships in ships_by_side.items():
        for before, after in zip(ships, ships[1:]):
            transitions += 1
            for pre, post in (
                (before.prefix_entries, after.prefix_entries),
                (before.keyword_entries, after.keyword_entries),
            ):
                counts = byte_links(pre, post)
                label_links += counts["labels"]
                id_links += counts["id_fields"]
                tag_links += counts["tags"]
            if round_tag_map is not None:
                f, t = position_persistence(
                    before.prefix_entries,
                    after.prefix_entries,
                    lambda tag: round_tag_map(tag, side),
                )
                fixed += f
                total += t

    # Each transition's chance of a slot match is 1/N; totals aggregate to
    # transitions/total when every transition compares N entries.
    baseline = transitions / total if total else 0.0
    clean = trapdoor_links == 0 and label_links == 0 and id_links == 0 and tag_links == 0
    compared = trapdoor_pairs > 0 or transitions > 0
    verdict = "hiding" if clean and compared else ("linkable" if compared else "inconclusive")
    return LinkageReport(
        trapdoor_pairs,
        trapdoor_links,
        transitions,
        label_links,
        id_links,
        tag_links,
        fixed,
        total,
        baseline,
        verdict,
    )


def min_cover_oracle(spatial_range: SpatialRange, total_bits: int) -> list[PrefixElement]:
    """Provably minimal exact prefix cover by trie recursion.

    Walks the binary trie and keeps every maximal block fully inside the
    range.  Exact prefix covers are dyadic partitions, every partition
    refines the maximal-block one, so this cover has minimum size.  Kept
    independent of the production greedy on purpose.
    """
    if total_bits > 10:
        raise ParameterError("oracle is exhaustive; keep total_bits <= 10")
    intervals = spatial_range.intervals

    def fully_inside(lo: int, hi: int) -> bool:
        return any(a <= lo and hi <= b for a, b in intervals)

    def overlaps(lo: int, hi: int) -> bool:
        return any(a <= hi and lo <= b for a, b in intervals)

    def walk(value: int, length: int) -> list[PrefixElement]:
        span = total_bits - length
        lo = value << span
        hi = lo + (1 << span) - 1
        if not overlaps(lo, hi):
            return []
        if fully_inside(lo, hi):
            return [PrefixElement(value, length)]
        if length == total_bits:
            return []
        return walk(value << 1, length + 1) + walk((value << 1) | 1, length + 1)

    return walk(0, 0)
