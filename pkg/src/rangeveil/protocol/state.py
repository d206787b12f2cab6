"""Client-side shuffle-state tracking.

The client must generate tokens consistent with how many shuffle rounds
each index row has absorbed.  Rows created at build time have absorbed
every round; rows inserted later by updates start counting at their
insertion epoch.  The table also tracks how many single-bit additions
each row has accumulated since its slots were last redistributed, to
stop slot counters before they could carry across a boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ParameterError, ProtocolError


@dataclass
class TermStateTable:
    """Per-term insertion epochs plus the global shuffle epoch."""

    epoch: int = 0
    object_count: int = 0
    insertion_epoch: dict[bytes, int] = field(default_factory=dict)
    pending_adds: dict[bytes, int] = field(default_factory=dict)

    def known(self, term: bytes) -> bool:
        return term in self.insertion_epoch

    def counter_for(self, term: bytes) -> int:
        """Shuffle rounds this term's row has been through.

        Unknown terms are treated as epoch-0 rows: their tokens will not
        resolve anyway, and choosing a fixed rule keeps token generation
        deterministic.
        """
        return self.epoch - self.insertion_epoch.get(term, 0)

    def insert_term(self, term: bytes) -> None:
        if term in self.insertion_epoch:
            raise ProtocolError("term already tracked")
        self.insertion_epoch[term] = self.epoch

    def advance(self) -> None:
        """One full shuffle round completed; every row moved with it."""
        self.epoch += 1

    def record_add(self, term: bytes, slot_bits: int) -> None:
        """Count one slot addition, refusing to risk a carry."""
        pending = self.pending_adds.get(term, 0)
        if pending + 1 > (1 << slot_bits) - 2:
            raise ParameterError(
                "slot capacity exhausted for a term; redistribute before updating"
            )
        self.pending_adds[term] = pending + 1

    def reset_adds(self, term: bytes) -> None:
        self.pending_adds.pop(term, None)
