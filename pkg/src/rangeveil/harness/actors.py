"""The four parties as message-driven actors.

Each actor owns its keys and state exclusively and interacts only
through fabric envelopes, so the observation surface of any party is
exactly its transcript view.  The data owner runs setup and the initial
build, then goes offline; the client issues queries and updates; the
two servers hold one index share side each and jointly execute search,
shuffle, and merge.
"""

from __future__ import annotations

import json
import pickle
from dataclasses import dataclass, field
from typing import Optional

from .. import wire
from ..crypto import labels as labels_mod
from ..crypto import prf, sealing
from ..crypto.group import GroupParams, standard_group
from ..crypto.labels import LabelKey
from ..crypto.paillier import KeyShare, PaillierKeyPair, PaillierPublicKey, generate_keypair
from ..errors import ParameterError, ProtocolError
from ..index import (
    EncryptedIndex,
    SpatioTextualObject,
    build_plain_indexes,
    encrypted_index_build,
    keyword_bytes,
    prefix_bytes,
)
from ..protocol import maintenance, query as query_mod
from ..protocol.state import TermStateTable
from ..spatial import GridSpec, prefix_universe
from .fabric import ActorId, Envelope, Fabric, server_actor

_PICKLE_PROTOCOL = 4


def _grid_tuple(grid: GridSpec):
    return (grid.min_x, grid.min_y, grid.max_x, grid.max_y, grid.order)


def _grid_from(values) -> GridSpec:
    return GridSpec(*values)


def canonical_record_bytes(record: dict) -> bytes:
    return json.dumps(record, sort_keys=True, separators=(",", ":")).encode()


@dataclass
class KeyDistribution:
    """Who holds which secret, per the setup hand-out."""

    holders: dict[str, tuple[str, ...]] = field(
        default_factory=lambda: {
            "master_label_key": ("data-owner",),
            "client_label_key": ("data-owner", "client"),
            "rekey_client_to_master": ("data-owner", "server-1", "server-2"),
            "paillier_private": ("data-owner",),
            "decryption_share_1": ("data-owner", "server-1"),
            "decryption_share_2": ("data-owner", "server-2"),
            "shuffle_scalar_1": ("data-owner", "client", "server-1"),
            "shuffle_scalar_2": ("data-owner", "client", "server-2"),
            "tag_key": ("data-owner", "client"),
            "object_key": ("data-owner", "client"),
            "position_key": ("data-owner", "client", "server-1", "server-2"),
        }
    )


class DataOwnerActor:
    """Generates all key material, builds the encrypted state, ships it."""

    def __init__(self, fabric: Fabric, group: GroupParams, paillier_bits: int,
                 grid: GridSpec, slot_bits: int, rng):
        self.fabric = fabric
        self.group = group
        self.grid = grid
        self.slot_bits = slot_bits
        self.rng = rng
        self.master_key = labels_mod.keygen(group, rng)
        self.client_key = labels_mod.keygen(group, rng)
        self.rekey = labels_mod.switch_key(group, self.client_key, self.master_key)
        self.keypair: PaillierKeyPair = generate_keypair(paillier_bits, rng)
        self.share1, self.share2 = self.keypair.split(rng)
        self.scalars = maintenance.ShuffleScalars(
            group.random_scalar(rng), group.random_scalar(rng)
        )
        self.tag_key = prf.new_key(rng)
        self.object_key = sealing.new_object_key(rng)
        self.position_key = prf.new_key(rng)
        self.records: list[dict] = []

    def secret_material(self) -> dict[str, bytes]:
        """Byte patterns that must never reach a server."""
        kp = self.keypair

        def b(v: int) -> bytes:
            return v.to_bytes((v.bit_length() + 7) // 8, "big")

        return {
            "master_label_key": b(self.master_key.value),
            "paillier_lambda": b(kp.lam),
            "paillier_combined": b(kp.combined),
            "paillier_prime_p": b(kp.prime_p),
            "paillier_prime_q": b(kp.prime_q),
        }

    def _send_keys(self, receiver: ActorId, material: dict) -> None:
        payload = wire.encode_opaque(
            wire.PHASE_SETUP, pickle.dumps(material, protocol=_PICKLE_PROTOCOL)
        )
        self.fabric.send(ActorId.DATA_OWNER, receiver, wire.PHASE_SETUP, 0, payload)

    def run_setup(self) -> KeyDistribution:
        """Hand every party its share of the key material."""
        group_t = (self.group.modulus, self.group.order, self.group.generator)
        common = {
            "group": group_t,
            "paillier_n": self.keypair.public.n,
            "slot_bits": self.slot_bits,
            "position_key": self.position_key,
        }
        self._send_keys(
            ActorId.CLIENT,
            {
                **common,
                "client_key": self.client_key.value,
                "r1": self.scalars.r1,
                "r2": self.scalars.r2,
                "tag_key": self.tag_key,
                "object_key": self.object_key,
                "grid": _grid_tuple(self.grid),
            },
        )
        for side, scalar, share in (
            (1, self.scalars.r1, self.share1),
            (2, self.scalars.r2, self.share2),
        ):
            self._send_keys(
                server_actor(side),
                {
                    **common,
                    "side": side,
                    "scalar": scalar,
                    "share_index": share.index,
                    "share_value": share.value,
                    "rekey": self.rekey.value,
                },
            )
        return KeyDistribution()

    def ingest(self, records: list[dict]) -> None:
        for i, rec in enumerate(records):
            if set(rec) != {"id", "x", "y", "keywords"}:
                raise ParameterError("records need exactly id, x, y, keywords")
            if rec["id"] != i:
                raise ParameterError("object ids must be dense and ordered from 0")
            if not rec["keywords"]:
                raise ParameterError("objects need at least one keyword")
        self.records = records

    def build(self) -> None:
        """Encrypt everything and ship index shares, objects, and state."""
        db = [
            SpatioTextualObject(
                rec["id"],
                self.grid.curve_position(rec["x"], rec["y"]),
                tuple(sorted(set(rec["keywords"]))),
            )
            for rec in self.records
        ]
        prefix_rows, keyword_rows = build_plain_indexes(db, self.grid)
        indexes = encrypted_index_build(
            prefix_rows,
            keyword_rows,
            self.master_key,
            self.tag_key,
            self.group,
            self.keypair.public,
            self.slot_bits,
            self.rng,
        )
        sealed = [
            (rec["id"], sealing.seal(self.object_key, canonical_record_bytes(rec), self.rng))
            for rec in self.records
        ]
        gb = self.group.element_bytes
        cb = self.keypair.public.ciphertext_bytes
        for side in (1, 2):
            prefix_index, keyword_index = indexes[side]
            self.fabric.send(
                ActorId.DATA_OWNER,
                server_actor(side),
                wire.PHASE_INDEX_SHIP,
                0,
                wire.encode_index_ship(
                    wire.PHASE_INDEX_SHIP, 0, side, gb, cb,
                    prefix_index.entries, keyword_index.entries,
                ),
            )
            self.fabric.send(
                ActorId.DATA_OWNER,
                server_actor(side),
                wire.PHASE_OBJECTS,
                0,
                wire.encode_objects(sealed),
            )
        terms = [prefix_bytes(p) for p in prefix_universe(self.grid.total_bits)]
        terms += [keyword_bytes(w) for w in keyword_rows]
        self.fabric.send(
            ActorId.DATA_OWNER,
            ActorId.CLIENT,
            wire.PHASE_STATE_TABLE,
            0,
            wire.encode_state_table(len(db), terms),
        )

    def receive(self, env: Envelope) -> None:
        raise ProtocolError(f"data owner expects no messages, got {env.phase}")


@dataclass
class _QueryContext:
    plan: query_mod.QueryPlan
    mode: str
    responses: dict[int, query_mod.SearchResponse] = field(default_factory=dict)
    outcome: Optional[query_mod.RecoveryOutcome] = None


class ClientActor:
    """Issues queries and updates; the only party that sees results."""

    def __init__(self, fabric: Fabric, rng, mode: str = query_mod.MODE_CORRECTED):
        self.fabric = fabric
        self.rng = rng
        self.mode = mode
        self.state = TermStateTable()
        self.group: Optional[GroupParams] = None
        self.pk: Optional[PaillierPublicKey] = None
        self.grid: Optional[GridSpec] = None
        self.slot_bits = 0
        self.client_key: Optional[LabelKey] = None
        self.scalars: Optional[maintenance.ShuffleScalars] = None
        self.tag_key = b""
        self.object_key = b""
        self.position_key = b""
        self.active: Optional[_QueryContext] = None
        self.results: list[dict] = []

    # -- inbound ------------------------------------------------------------

    def receive(self, env: Envelope) -> None:
        if env.phase == wire.PHASE_SETUP:
            self._load_keys(wire.decode_opaque(env.payload, wire.PHASE_SETUP))
        elif env.phase == wire.PHASE_STATE_TABLE:
            count, terms = wire.decode_state_table(env.payload)
            self.state = TermStateTable(epoch=0, object_count=count)
            for term in terms:
                self.state.insert_term(term)
        elif env.phase == wire.PHASE_RESPONSE:
            self._on_response(wire.decode_response(env.payload))
        else:
            raise ProtocolError(f"client cannot handle phase {env.phase}")

    def _load_keys(self, blob: bytes) -> None:
        material = pickle.loads(blob)
        self.group = GroupParams(*material["group"])
        self.pk = PaillierPublicKey(material["paillier_n"])
        self.slot_bits = material["slot_bits"]
        self.position_key = material["position_key"]
        self.client_key = LabelKey(material["client_key"])
        self.scalars = maintenance.ShuffleScalars(material["r1"], material["r2"])
        self.tag_key = material["tag_key"]
        self.object_key = material["object_key"]
        self.grid = _grid_from(material["grid"])

    # -- queries --------------------------------------------------------------

    def begin_query(self, q: query_mod.BooleanRangeQuery) -> None:
        if self.active is not None:
            raise ProtocolError("a query is already in flight")
        tokens, plan = query_mod.generate_tokens(
            q, self.grid, self.group, self.client_key,
            self.scalars.r1, self.scalars.r2, self.state,
        )
        self.active = _QueryContext(plan, self.mode)
        payload = wire.encode_tokens(tokens, self.group.element_bytes)
        for side in (1, 2):
            self.fabric.send(
                ActorId.CLIENT, server_actor(side), wire.PHASE_TOKENS,
                self.state.epoch, payload,
            )

    def _on_response(self, resp: query_mod.SearchResponse) -> None:
        ctx = self.active
        if ctx is None:
            raise ProtocolError("response with no query in flight")
        if resp.share_side in ctx.responses:
            raise ProtocolError("duplicate response side")
        ctx.responses[resp.share_side] = resp
        if len(ctx.responses) < 2:
            return
        ctx.outcome = query_mod.client_recover(
            ctx.responses[1], ctx.responses[2], ctx.plan,
            self.object_key, self.pk, self.slot_bits, ctx.mode,
        )
        result = ctx.outcome.result
        self.results.append(
            {
                "ids": list(result.ids),
                "objects": {oid: json.loads(blob) for oid, blob in result.objects.items()},
            }
        )
        self._send_redistribution(ctx)
        for term, bitmap in zip(ctx.plan.prefix_terms, ctx.outcome.prefix_bitmaps):
            if bitmap is not None:
                self.state.reset_adds(term)
        for term, bitmap in zip(ctx.plan.keyword_terms, ctx.outcome.keyword_bitmaps):
            if bitmap is not None:
                self.state.reset_adds(term)
        self.active = None

    def _send_redistribution(self, ctx: _QueryContext) -> None:
        per_side = query_mod.build_redistribution(
            ctx.plan, ctx.outcome, self.pk, self.slot_bits, self.rng
        )
        for side, rset in per_side.items():
            payload = wire.encode_redistribution(
                rset, self.group.element_bytes, self.pk.ciphertext_bytes
            )
            self.fabric.send(
                ActorId.CLIENT, server_actor(side), wire.PHASE_REDISTRIBUTE,
                self.state.epoch, payload,
            )

    # -- updates ----------------------------------------------------------------

    def begin_update(self, record: dict) -> int:
        """Insert one object: seal it, token both sides' indexes."""
        oid = self.state.object_count
        record = {
            "id": oid,
            "x": record["x"],
            "y": record["y"],
            "keywords": sorted(set(record["keywords"])),
        }
        if not record["keywords"]:
            raise ParameterError("objects need at least one keyword")
        obj = SpatioTextualObject(
            oid, self.grid.curve_position(record["x"], record["y"]),
            tuple(record["keywords"]),
        )
        token_sets = maintenance.generate_update_tokens(
            obj, self.grid, self.group, self.client_key, self.tag_key,
            self.position_key, self.scalars, self.state, self.pk,
            self.slot_bits, self.rng,
        )
        sealed = sealing.seal(self.object_key, canonical_record_bytes(record), self.rng)
        objects_payload = wire.encode_objects([(oid, sealed)])
        for side in (1, 2):
            self.fabric.send(
                ActorId.CLIENT, server_actor(side), wire.PHASE_OBJECTS,
                self.state.epoch, objects_payload,
            )
        for side in (1, 2):
            payload = wire.encode_update_tokens(
                token_sets[side], self.group.element_bytes, self.pk.ciphertext_bytes
            )
            self.fabric.send(
                ActorId.CLIENT, server_actor(3 - side), wire.PHASE_UPDATE_TOKENS,
                self.state.epoch, payload,
            )
        return oid

    def note_round(self) -> None:
        """The public shuffle cadence: one full round has completed."""
        self.state.advance()


class ServerActor:
    """One of the two non-colluding servers; holds one share side."""

    def __init__(self, fabric: Fabric, side: int, rng, literal: bool = False):
        self.fabric = fabric
        self.side = side
        self.rng = rng
        self.literal = literal
        self.group: Optional[GroupParams] = None
        self.pk: Optional[PaillierPublicKey] = None
        self.slot_bits = 0
        self.scalar = 0
        self.share: Optional[KeyShare] = None
        self.rekey: Optional[LabelKey] = None
        self.position_key = b""
        self.prefix_index: Optional[EncryptedIndex] = None
        self.keyword_index: Optional[EncryptedIndex] = None
        self.store: dict[int, bytes] = {}
        self.pending_tokens: Optional[maintenance.UpdateTokenSet] = None
        self.pending_tables: Optional[wire.UpdateTablesMessage] = None

    @property
    def actor_id(self) -> ActorId:
        return server_actor(self.side)

    @property
    def peer_id(self) -> ActorId:
        return server_actor(3 - self.side)

    @property
    def epoch(self) -> int:
        return self.prefix_index.epoch if self.prefix_index else 0

    # -- inbound ---------------------------------------------------------------

    def receive(self, env: Envelope) -> None:
        if env.phase == wire.PHASE_SETUP:
            self._load_keys(wire.decode_opaque(env.payload, wire.PHASE_SETUP))
        elif env.phase == wire.PHASE_INDEX_SHIP:
            self._load_indexes(env.payload)
        elif env.phase == wire.PHASE_OBJECTS:
            self._load_objects(env)
        elif env.phase == wire.PHASE_TOKENS:
            self._on_tokens(env)
        elif env.phase == wire.PHASE_RESOLVE:
            self._on_resolve(env)
        elif env.phase == wire.PHASE_REDISTRIBUTE:
            self._on_redistribute(env)
        elif env.phase == wire.PHASE_SHUFFLE_OUT:
            self._on_shuffle_out(env)
        elif env.phase == wire.PHASE_SHUFFLE_RETURN:
            self._on_shuffle_return(env)
        elif env.phase == wire.PHASE_UPDATE_TOKENS:
            self._on_update_tokens(env)
        elif env.phase == wire.PHASE_UPDATE_TABLE:
            self._on_update_table(env)
        elif env.phase == wire.PHASE_UPDATE_MERGED:
            self._on_update_merged(env)
        else:
            raise ProtocolError(f"server cannot handle phase {env.phase}")

    def _load_keys(self, blob: bytes) -> None:
        material = pickle.loads(blob)
        if material["side"] != self.side:
            raise ProtocolError("key material addressed to the other server")
        self.group = GroupParams(*material["group"])
        self.pk = PaillierPublicKey(material["paillier_n"])
        self.slot_bits = material["slot_bits"]
        self.scalar = material["scalar"]
        self.share = KeyShare(material["share_index"], material["share_value"])
        self.rekey = LabelKey(material["rekey"])
        self.position_key = material["position_key"]

    def _load_indexes(self, payload: bytes) -> None:
        ship = wire.decode_index_ship(payload, wire.PHASE_INDEX_SHIP)
        if ship.side != self.side:
            raise ProtocolError("index shipment for the other side")
        self.prefix_index = EncryptedIndex("prefix", self.side, ship.prefix_entries, ship.epoch)
        self.keyword_index = EncryptedIndex("keyword", self.side, ship.keyword_entries, ship.epoch)

    def _load_objects(self, env: Envelope) -> None:
        items = wire.decode_objects(env.payload)
        if env.sender == ActorId.DATA_OWNER:
            self.store = dict(items)
            return
        # A client append announces an update in flight: stage our own
        # tables for the peer to merge into.
        for oid, blob in items:
            if oid != len(self.store):
                raise ProtocolError("update must append the next dense id")
            self.store[oid] = blob
        self._send_update_tables()

    # -- search ------------------------------------------------------------------

    def _on_tokens(self, env: Envelope) -> None:
        tokens = wire.decode_tokens(env.payload)
        report = query_mod.server_resolve(
            tokens, self.prefix_index, self.keyword_index,
            self.rekey, self.share, self.group, self.pk,
        )
        self.fabric.send(
            self.actor_id, self.peer_id, wire.PHASE_RESOLVE, self.epoch,
            wire.encode_resolve(report, self.pk.ciphertext_bytes),
        )

    def _on_resolve(self, env: Envelope) -> None:
        report = wire.decode_resolve(env.payload)
        resp = query_mod.server_complete(
            report, self.share, self.store, self.pk,
            self.slot_bits, len(self.store), self.literal,
        )
        chunk_bytes = (self.pk.n.bit_length() + 7) // 8
        self.fabric.send(
            self.actor_id, ActorId.CLIENT, wire.PHASE_RESPONSE, self.epoch,
            wire.encode_response(resp, chunk_bytes),
        )

    def _on_redistribute(self, env: Envelope) -> None:
        rset = wire.decode_redistribution(env.payload)
        query_mod.apply_redistribution(
            rset, self.prefix_index, self.keyword_index, self.rekey, self.group
        )

    # -- shuffle -------------------------------------------------------------------

    def start_shuffle_round(self) -> None:
        """Ship this server's indexes to the peer for the first hop."""
        self.fabric.send(
            self.actor_id, self.peer_id, wire.PHASE_SHUFFLE_OUT, self.epoch,
            wire.encode_index_ship(
                wire.PHASE_SHUFFLE_OUT, self.epoch, self.side,
                self.group.element_bytes, self.pk.ciphertext_bytes,
                self.prefix_index.entries, self.keyword_index.entries,
            ),
        )

    def _on_shuffle_out(self, env: Envelope) -> None:
        ship = wire.decode_index_ship(env.payload, wire.PHASE_SHUFFLE_OUT)
        if ship.side == self.side:
            raise ProtocolError("received own side's shuffle shipment")
        transformed = [
            maintenance.shuffle_pass(entries, self.scalar, self.group, self.pk, self.rng)
            for entries in (ship.prefix_entries, ship.keyword_entries)
        ]
        self.fabric.send(
            self.actor_id, self.peer_id, wire.PHASE_SHUFFLE_RETURN, ship.epoch,
            wire.encode_index_ship(
                wire.PHASE_SHUFFLE_RETURN, ship.epoch, ship.side,
                self.group.element_bytes, self.pk.ciphertext_bytes,
                transformed[0], transformed[1],
            ),
        )

    def _on_shuffle_return(self, env: Envelope) -> None:
        ship = wire.decode_index_ship(env.payload, wire.PHASE_SHUFFLE_RETURN)
        if ship.side != self.side:
            raise ProtocolError("shuffle return for the other side")
        maintenance.check_round_epoch(ship.epoch, self.prefix_index, self.keyword_index)
        for index, entries in (
            (self.prefix_index, ship.prefix_entries),
            (self.keyword_index, ship.keyword_entries),
        ):
            index.replace_entries(
                maintenance.shuffle_pass(entries, self.scalar, self.group, self.pk, self.rng),
                epoch=ship.epoch + 1,
            )

    # -- update --------------------------------------------------------------------

    def _send_update_tables(self) -> None:
        for_peer = [
            maintenance.update_prepare(index, self.position_key, self.pk, self.rng)
            for index in (self.prefix_index, self.keyword_index)
        ]
        self.fabric.send(
            self.actor_id, self.peer_id, wire.PHASE_UPDATE_TABLE, self.epoch,
            wire.encode_update_tables(
                wire.PHASE_UPDATE_TABLE, self.epoch, self.side,
                self.pk.ciphertext_bytes, for_peer[0], for_peer[1],
            ),
        )

    def _on_update_tokens(self, env: Envelope) -> None:
        tokens = wire.decode_update_tokens(env.payload)
        if tokens.side == self.side:
            raise ProtocolError("update tokens addressed to the holder directly")
        if self.pending_tokens is not None:
            raise ProtocolError("an update is already pending")
        self.pending_tokens = tokens
        self._try_merge()

    def _on_update_table(self, env: Envelope) -> None:
        msg = wire.decode_update_tables(env.payload, wire.PHASE_UPDATE_TABLE)
        if msg.side == self.side:
            raise ProtocolError("received own side's update table")
        if self.pending_tables is not None:
            raise ProtocolError("an update table is already pending")
        self.pending_tables = msg
        self._try_merge()

    def _try_merge(self) -> None:
        """Peer role: once tokens and tables are both here, fold them in."""
        if self.pending_tokens is None or self.pending_tables is None:
            return
        tokens, tables = self.pending_tokens, self.pending_tables
        self.pending_tokens = None
        self.pending_tables = None
        if tokens.side != tables.side:
            raise ProtocolError("update tokens and tables disagree on side")
        if tokens.epoch != tables.epoch:
            raise ProtocolError("update tokens and tables disagree on epoch")
        merged_p, fresh_p = maintenance.update_merge(
            tables.prefix_table, tokens.prefix, tokens.new_count,
            self.pk, self.slot_bits, self.rng,
        )
        merged_w, fresh_w = maintenance.update_merge(
            tables.keyword_table, tokens.keyword, tokens.new_count,
            self.pk, self.slot_bits, self.rng,
        )
        if fresh_p:
            raise ProtocolError("prefix rows are never fresh after build")
        self.fabric.send(
            self.actor_id, self.peer_id, wire.PHASE_UPDATE_MERGED, tokens.epoch,
            wire.encode_update_tables(
                wire.PHASE_UPDATE_MERGED, tokens.epoch, tokens.side,
                self.pk.ciphertext_bytes, merged_p, merged_w,
                self.group.element_bytes, fresh_w,
            ),
        )

    def _on_update_merged(self, env: Envelope) -> None:
        msg = wire.decode_update_tables(env.payload, wire.PHASE_UPDATE_MERGED)
        if msg.side != self.side:
            raise ProtocolError("merged tables for the other side")
        maintenance.update_finalize(
            self.prefix_index, msg.prefix_table, (), self.rekey,
            self.position_key, self.group,
        )
        maintenance.update_finalize(
            self.keyword_index, msg.keyword_table, msg.fresh_keyword, self.rekey,
            self.position_key, self.group,
        )
