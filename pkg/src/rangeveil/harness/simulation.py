"""Deterministic dual-server simulation.

A `Simulation` wires the four actors over one fabric, derives every
random stream from a single string seed, and exposes the operation
surface (setup, ingest, build, shuffle, query, update) plus scripted
runs, transcript export, and checksummed persistence.  The same seed
and script reproduce every envelope byte.
"""

from __future__ import annotations

import hashlib
import pickle
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

from ..crypto.group import GroupParams, standard_group
from ..errors import ParameterError, ProtocolError, StorageError
from ..protocol.query import MODE_CORRECTED, MODE_LITERAL, BooleanRangeQuery
from ..rng import RandomSource
from ..spatial import GridSpec
from .actors import ClientActor, DataOwnerActor, KeyDistribution, ServerActor
from .fabric import ActorId, Envelope, Fabric, server_actor

_MAGIC = b"RVS1"
_VERSION = 1


@dataclass(frozen=True)
class SimConfig:
    """Everything that determines a run, in plain JSON-friendly fields."""

    seed: str = "rangeveil"
    paillier_bits: int = 512
    group_bits: int = 512
    grid_min_x: float = 0.0
    grid_min_y: float = 0.0
    grid_max_x: float = 1.0
    grid_max_y: float = 1.0
    grid_order: int = 3
    slot_bits: int = 16
    mode: str = MODE_CORRECTED
    shuffle_on_build: bool = True
    shuffle_after_query: bool = True

    def __post_init__(self):
        if self.mode not in (MODE_CORRECTED, MODE_LITERAL):
            raise ParameterError(f"unknown mode: {self.mode}")

    @property
    def grid(self) -> GridSpec:
        return GridSpec(
            self.grid_min_x, self.grid_min_y,
            self.grid_max_x, self.grid_max_y, self.grid_order,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class QueryRecord:
    """Ground truth the analysis layer needs about one executed query."""

    intervals: tuple[tuple[int, int], ...]
    keywords: tuple[str, ...]
    result_ids: tuple[int, ...]


class Simulation:
    """The four actors plus the scheduler, driven to quiescence per step."""

    def __init__(self, config: SimConfig, group: Optional[GroupParams] = None):
        self.config = config
        self.fabric = Fabric()
        root = RandomSource.seeded(config.seed)
        self.group = group if group is not None else standard_group(config.group_bits)
        self.owner = DataOwnerActor(
            self.fabric, self.group, config.paillier_bits,
            config.grid, config.slot_bits, root.child("data-owner"),
        )
        self.client = ClientActor(self.fabric, root.child("client"), config.mode)
        literal = config.mode == MODE_LITERAL
        self.servers = {
            side: ServerActor(self.fabric, side, root.child(f"server-{side}"), literal)
            for side in (1, 2)
        }
        self.keys_ready = False
        self.built = False
        self.records: list[dict] = []
        self.history: list[QueryRecord] = []

    # -- plumbing -------------------------------------------------------------

    @property
    def _handlers(self):
        return {
            ActorId.DATA_OWNER: self.owner.receive,
            ActorId.CLIENT: self.client.receive,
            ActorId.SERVER1: self.servers[1].receive,
            ActorId.SERVER2: self.servers[2].receive,
        }

    def _run(self) -> None:
        self.fabric.deliver_all(self._handlers)

    @property
    def transcript(self):
        return self.fabric.transcript

    def server_view(self, side: int) -> list[Envelope]:
        return self.transcript.view(server_actor(side))

    @property
    def epoch(self) -> int:
        return self.client.state.epoch

    # -- operations -------------------------------------------------------------

    def setup(self) -> KeyDistribution:
        if self.keys_ready:
            raise ProtocolError("setup already ran")
        distribution = self.owner.run_setup()
        self._run()
        self.keys_ready = True
        return distribution

    def ingest(self, records: list[dict]) -> None:
        if self.built:
            raise ProtocolError("cannot ingest after build; use update")
        self.owner.ingest(records)
        self.records = [dict(r, keywords=sorted(set(r["keywords"]))) for r in records]

    def build(self) -> None:
        if not self.keys_ready:
            raise ProtocolError("setup has not run")
        if self.built:
            raise ProtocolError("build already ran")
        if not self.owner.records:
            raise ProtocolError("nothing ingested")
        self.owner.build()
        self._run()
        self.built = True
        if self.config.shuffle_on_build:
            self.shuffle_round()

    def shuffle_round(self) -> None:
        """One full round: each side's indexes make the two-hop trip."""
        if not self.built:
            raise ProtocolError("nothing to shuffle before build")
        for side in (1, 2):
            self.servers[side].start_shuffle_round()
            self._run()
        self.client.note_round()

    def query(
        self,
        rect: Optional[tuple[float, float, float, float]] = None,
        intervals: Optional[tuple[tuple[int, int], ...]] = None,
        keywords: tuple[str, ...] = (),
    ) -> dict:
        if not self.built:
            raise ProtocolError("cannot query before build")
        q = BooleanRangeQuery(
            tuple(keywords),
            tuple(rect) if rect is not None else None,
            tuple(tuple(iv) for iv in intervals) if intervals is not None else None,
        )
        resolved = q.resolve_range(self.config.grid)
        self.client.begin_query(q)
        self._run()
        result = self.client.results[-1]
        self.history.append(
            QueryRecord(
                resolved.intervals, q.canonical_keywords(), tuple(result["ids"])
            )
        )
        if self.config.shuffle_after_query:
            self.shuffle_round()
        return result

    def update(self, record: dict) -> int:
        if not self.built:
            raise ProtocolError("cannot update before build")
        oid = self.client.begin_update(record)
        self._run()
        self.records.append(
            {
                "id": oid,
                "x": record["x"],
                "y": record["y"],
                "keywords": sorted(set(record["keywords"])),
            }
        )
        return oid

    # -- scripted runs --------------------------------------------------------------

    def run_script(self, actions: list[dict]) -> list[dict]:
        """Execute a JSON-shaped action list; returns one entry per query.

        Redistribution happens automatically as part of every query, so a
        `redistribute` action is a cadence marker that just asserts a
        query has completed.
        """
        if not self.keys_ready:
            self.setup()
        results = []
        for action in actions:
            if "op" not in action:
                raise ParameterError("script action needs an 'op' field")
            op = action["op"]
            args = {k: v for k, v in action.items() if k != "op"}
            if op == "ingest":
                self.ingest(args["records"])
            elif op == "build":
                self.build()
            elif op == "shuffle":
                self.shuffle_round()
            elif op == "query":
                results.append(
                    self.query(
                        rect=tuple(args["rect"]) if "rect" in args else None,
                        intervals=(
                            tuple(tuple(iv) for iv in args["intervals"])
                            if "intervals" in args
                            else None
                        ),
                        keywords=tuple(args.get("keywords", ())),
                    )
                )
            elif op == "redistribute":
                if not self.history:
                    raise ProtocolError("redistribute marker before any query")
            elif op == "update":
                self.update(args["record"])
            else:
                raise ParameterError(f"unknown script op: {op}")
        return results

    # -- persistence ----------------------------------------------------------------

    def save(self, path) -> None:
        if not self.fabric.idle:
            raise ProtocolError("cannot persist with messages in flight")
        # One dump/load round canonicalizes object sharing (interned
        # strings differ between a live graph and a loaded one), making
        # save -> load -> save byte-identical.
        blob = pickle.dumps(pickle.loads(pickle.dumps(self, protocol=4)), protocol=4)
        digest = hashlib.sha256(blob).digest()
        Path(path).write_bytes(_MAGIC + bytes([_VERSION]) + digest + blob)

    @classmethod
    def load(cls, path) -> "Simulation":
        data = Path(path).read_bytes()
        if len(data) < len(_MAGIC) + 1 + 32:
            raise StorageError("state file truncated")
        if data[: len(_MAGIC)] != _MAGIC:
            raise StorageError("not a simulation state file")
        version = data[len(_MAGIC)]
        if version != _VERSION:
            raise StorageError(f"state version {version} not supported")
        digest = data[len(_MAGIC) + 1 : len(_MAGIC) + 33]
        blob = data[len(_MAGIC) + 33 :]
        if hashlib.sha256(blob).digest() != digest:
            raise StorageError("state file corrupted (checksum mismatch)")
        sim = pickle.loads(blob)
        if not isinstance(sim, cls):
            raise StorageError("state file holds something else")
        return sim
