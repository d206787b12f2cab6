import copy
import dataclasses

import pytest

from rangeveil.bitmap import Bitmap
from rangeveil.crypto import labels as labels_mod
from rangeveil.crypto import prf
from rangeveil.crypto.sealing import seal
from rangeveil.errors import EpochMismatchError, ParameterError, ProtocolError
from rangeveil.index import SpatioTextualObject, keyword_bytes, prefix_bytes
from rangeveil.packing import PackedBitmap, unpack_bitmap
from rangeveil.protocol.maintenance import (
    ShuffleScalars,
    UpdateToken,
    check_round_epoch,
    generate_update_tokens,
    shuffle_pass,
    update_finalize,
    update_merge,
    update_prepare,
)
from rangeveil.protocol.query import BooleanRangeQuery
from rangeveil.rng import RandomSource
from rangeveil.spatial import prefix_family


def test_shuffle_scalars_guards(tiny_group):
    scalars = ShuffleScalars(3, 5)
    scalars.check(tiny_group)
    assert scalars.for_side(1) == 3
    assert scalars.for_side(2) == 5
    with pytest.raises(ParameterError):
        scalars.for_side(3)
    with pytest.raises(ParameterError):
        ShuffleScalars(tiny_group.order, 5).check(tiny_group)


def test_update_token_shape_validation():
    packed = PackedBitmap((1,))
    UpdateToken(delta=packed, address=b"a" * 16)
    UpdateToken(delta=packed, label=5, tag=b"t" * 16)
    with pytest.raises(ParameterError):
        UpdateToken(delta=packed)
    with pytest.raises(ParameterError):
        UpdateToken(delta=packed, address=b"a" * 16, label=5, tag=b"t" * 16)


def test_shuffle_pass_rekeys_rerandomizes_steps_and_permutes(proto_env):
    env = proto_env
    rng = RandomSource.seeded("maint/pass")
    entries = list(env.pair[1][0].entries)
    scalar = env.r2
    out = shuffle_pass(entries, scalar, env.group, env.pk, rng)
    assert len(out) == len(entries)
    ratio = labels_mod.LabelKey(scalar % env.group.order)
    expected_labels = {
        labels_mod.apply_switch(env.group, e.label, ratio) for e in entries
    }
    assert {e.label for e in out} == expected_labels
    assert {e.tag for e in out} == {prf.step_tag(e.tag, scalar) for e in entries}
    # no ciphertext byte survives, but decrypted content is preserved
    old_chunks = {c for e in entries for c in e.id_field.chunks}
    assert all(c not in old_chunks for e in out for c in e.id_field.chunks)
    old_values = sorted(
        tuple(env.kp.decrypt(c) for c in e.id_field.chunks) for e in entries
    )
    new_values = sorted(
        tuple(env.kp.decrypt(c) for c in e.id_field.chunks) for e in out
    )
    assert old_values == new_values
    # the permutation actually moved something
    assert [e.label for e in out] != [
        labels_mod.apply_switch(env.group, e.label, ratio) for e in entries
    ]


def test_full_round_tags_match_chain(proto_env):
    env = proto_env
    rng = RandomSource.seeded("maint/round")
    for side in (1, 2):
        entries = list(env.pair[side][0].entries)
        first = env.scalars.for_side(3 - side)
        second = env.scalars.for_side(side)
        out = shuffle_pass(
            shuffle_pass(entries, first, env.group, env.pk, rng),
            second, env.group, env.pk, rng,
        )
        expected = {
            prf.chain_tag(e.tag, side, env.r1, env.r2, 1) for e in entries
        }
        assert {e.tag for e in out} == expected


def test_check_round_epoch(proto_env):
    prefix_index = copy.deepcopy(proto_env.pair[1][0])
    check_round_epoch(0, prefix_index)
    prefix_index.epoch = 2
    with pytest.raises(EpochMismatchError):
        check_round_epoch(0, prefix_index)


def _new_object(env, keywords=("w4", "brand-new")):
    oid = len(env.db)
    return SpatioTextualObject(oid, 46, tuple(keywords))


def test_generate_update_tokens_shapes_and_state(proto_env):
    env = proto_env
    rng = RandomSource.seeded("maint/tokens")
    state = env.fresh_state()
    obj = _new_object(env)
    sets = generate_update_tokens(
        obj, env.grid, env.group, env.client, env.tag_key, env.perm_key,
        env.scalars, state, env.pk, env.slot_bits, rng,
    )
    gamma = env.grid.total_bits
    for side in (1, 2):
        ts = sets[side]
        assert (ts.epoch, ts.side, ts.object_id, ts.new_count) == (0, side, obj.oid, obj.oid + 1)
        assert len(ts.prefix) == gamma
        assert all(t.address is not None for t in ts.prefix)
        assert len(ts.keyword) == 2
    # sorted unique keywords: "brand-new" is fresh, "w4" exists
    for side in (1, 2):
        fresh, existing = sets[side].keyword
        assert fresh.label is not None and fresh.tag is not None
        assert existing.address is not None
    assert state.object_count == obj.oid + 1
    assert state.known(keyword_bytes("brand-new"))
    assert state.pending_adds[keyword_bytes("w4")] == 1
    assert state.pending_adds[prefix_bytes(prefix_family(obj.loc, gamma)[0])] == 1


def test_generate_update_tokens_deltas_split_one_bit(proto_env):
    env = proto_env
    rng = RandomSource.seeded("maint/deltas")
    state = env.fresh_state()
    obj = _new_object(env, keywords=("w4",))
    sets = generate_update_tokens(
        obj, env.grid, env.group, env.client, env.tag_key, env.perm_key,
        env.scalars, state, env.pk, env.slot_bits, rng,
    )
    for i in range(len(sets[1].prefix)):
        bits = []
        for side in (1, 2):
            delta = sets[side].prefix[i].delta
            values = [env.kp.decrypt(c) for c in delta.chunks]
            bits.append(unpack_bitmap(values, obj.oid + 1, env.slot_bits, env.pk))
        total = Bitmap(bits[0].value ^ bits[1].value, obj.oid + 1)
        assert total.positions() == (obj.oid,)
        assert bits[0].value & bits[1].value == 0


def test_generate_update_tokens_addressing_matches_index(proto_env):
    """Position addresses land exactly on the holder's update table keys."""
    env = proto_env
    rng = RandomSource.seeded("maint/address")
    state = env.fresh_state()
    obj = _new_object(env, keywords=("w4",))
    sets = generate_update_tokens(
        obj, env.grid, env.group, env.client, env.tag_key, env.perm_key,
        env.scalars, state, env.pk, env.slot_bits, rng,
    )
    for side in (1, 2):
        table = update_prepare(env.pair[side][0], env.perm_key, env.pk, rng)
        known = {addr for addr, _ in table.rows}
        assert all(t.address in known for t in sets[side].prefix)


def test_generate_update_tokens_guards(proto_env):
    env = proto_env
    rng = RandomSource.seeded("maint/guards")
    state = env.fresh_state()
    with pytest.raises(ParameterError):
        generate_update_tokens(
            SpatioTextualObject(99, 46, ("w4",)), env.grid, env.group, env.client,
            env.tag_key, env.perm_key, env.scalars, state, env.pk, env.slot_bits, rng,
        )
    # exhaust one term's slot budget at a tiny slot width
    tight = env.fresh_state()
    term = prefix_bytes(prefix_family(46, 6)[0])
    for _ in range((1 << 2) - 2):
        tight.record_add(term, 2)
    with pytest.raises(ParameterError):
        generate_update_tokens(
            _new_object(env, keywords=("w4",)), env.grid, env.group, env.client,
            env.tag_key, env.perm_key, env.scalars, tight, env.pk, 2, rng,
        )
    # the failed attempt must not have mutated the counters
    assert tight.object_count == len(env.db)


def test_update_prepare_masks_and_sorts(proto_env):
    env = proto_env
    rng = RandomSource.seeded("maint/prepare")
    index = env.pair[2][1]
    table = update_prepare(index, env.perm_key, env.pk, rng)
    assert (table.epoch, table.side, table.kind) == (0, 2, "keyword")
    assert len(table.rows) == len(index.entries)
    assert list(table.rows) == sorted(table.rows, key=lambda r: r[0])
    expected = {prf.position_key(env.perm_key, e.tag) for e in index.entries}
    assert {addr for addr, _ in table.rows} == expected
    old_chunks = {c for e in index.entries for c in e.id_field.chunks}
    assert all(c not in old_chunks for _, packed in table.rows for c in packed.chunks)


def test_update_merge_touches_every_row(proto_env):
    env = proto_env
    rng = RandomSource.seeded("maint/merge")
    state = env.fresh_state()
    obj = _new_object(env, keywords=("w4",))
    sets = generate_update_tokens(
        obj, env.grid, env.group, env.client, env.tag_key, env.perm_key,
        env.scalars, state, env.pk, env.slot_bits, rng,
    )
    table = update_prepare(env.pair[1][0], env.perm_key, env.pk, rng)
    merged, fresh = update_merge(
        table, sets[1].prefix, sets[1].new_count, env.pk, env.slot_bits, rng
    )
    assert fresh == ()
    assert len(merged.rows) == len(table.rows)
    assert [a for a, _ in merged.rows] == [a for a, _ in table.rows]
    before = dict(table.rows)
    assert all(packed != before[addr] for addr, packed in merged.rows)


def test_update_merge_guards(proto_env):
    env = proto_env
    rng = RandomSource.seeded("maint/merge-guards")
    table = update_prepare(env.pair[1][0], env.perm_key, env.pk, rng)
    delta = PackedBitmap((env.pk.encrypt(0, rng),))
    addr = table.rows[0][0]
    dup = (UpdateToken(delta=delta, address=addr),) * 2
    with pytest.raises(ProtocolError):
        update_merge(table, dup, 5, env.pk, env.slot_bits, rng)
    stranger = (UpdateToken(delta=delta, address=b"x" * 16),)
    with pytest.raises(ProtocolError):
        update_merge(table, stranger, 5, env.pk, env.slot_bits, rng)


def test_update_merge_passes_fresh_tokens_rerandomized(proto_env):
    env = proto_env
    rng = RandomSource.seeded("maint/fresh")
    table = update_prepare(env.pair[1][1], env.perm_key, env.pk, rng)
    token = UpdateToken(
        delta=PackedBitmap((env.pk.encrypt(1, rng),)),
        label=labels_mod.evaluate(env.group, env.client, keyword_bytes("new")),
        tag=prf.initial_tag(env.tag_key, 1, keyword_bytes("new")),
    )
    _, fresh = update_merge(table, (token,), 6, env.pk, env.slot_bits, rng)
    assert len(fresh) == 1
    assert fresh[0].label == token.label and fresh[0].tag == token.tag
    assert fresh[0].delta != token.delta
    assert env.kp.decrypt(fresh[0].delta.chunks[0]) == 1


def test_update_round_trip_inserts_object(proto_env):
    """Full three-step update on copies of both sides; touched rows must
    carry the new object's bit."""
    env = proto_env
    rng = RandomSource.seeded("maint/roundtrip")
    pair = copy.deepcopy(env.pair)
    state = env.fresh_state()
    obj = _new_object(env, keywords=("w4", "w6"))
    sets = generate_update_tokens(
        obj, env.grid, env.group, env.client, env.tag_key, env.perm_key,
        env.scalars, state, env.pk, env.slot_bits, rng,
    )
    for side in (1, 2):
        for slot, tokens in ((0, sets[side].prefix), (1, sets[side].keyword)):
            index = pair[side][slot]
            table = update_prepare(index, env.perm_key, env.pk, rng)
            merged, fresh = update_merge(
                table, tokens, sets[side].new_count, env.pk, env.slot_bits, rng
            )
            update_finalize(index, merged, fresh, env.switch, env.perm_key, env.group)
    # the new object's row content is correct on every touched term
    n = obj.oid + 1
    for term in [prefix_bytes(e) for e in prefix_family(obj.loc, 6) if e.length]:
        label = labels_mod.evaluate(env.group, env.master, term)
        combined = 0
        for side in (1, 2):
            entry = pair[side][0].lookup(label)
            values = [env.kp.decrypt(c) for c in entry.id_field.chunks]
            combined ^= unpack_bitmap(values, n, env.slot_bits, env.pk).value
        assert (combined >> obj.oid) & 1 == 1
    label = labels_mod.evaluate(env.group, env.master, keyword_bytes("w6"))
    combined = 0
    for side in (1, 2):
        entry = pair[side][1].lookup(label)
        values = [env.kp.decrypt(c) for c in entry.id_field.chunks]
        combined ^= unpack_bitmap(values, n, env.slot_bits, env.pk).value
    assert Bitmap(combined, n).positions() == (0, 3, 4, obj.oid)


def test_update_finalize_guards(proto_env):
    env = proto_env
    rng = RandomSource.seeded("maint/final-guards")
    index = copy.deepcopy(env.pair[1][1])
    table = update_prepare(index, env.perm_key, env.pk, rng)
    merged, _ = update_merge(table, (), 5, env.pk, env.slot_bits, rng)
    with pytest.raises(EpochMismatchError):
        update_finalize(
            index, dataclasses.replace(merged, epoch=4), (), env.switch,
            env.perm_key, env.group,
        )
    with pytest.raises(ProtocolError):
        update_finalize(
            index, dataclasses.replace(merged, rows=merged.rows[:-1]), (),
            env.switch, env.perm_key, env.group,
        )
    renamed = (((b"y" * 16), merged.rows[0][1]),) + merged.rows[1:]
    with pytest.raises(ProtocolError):
        update_finalize(
            index, dataclasses.replace(merged, rows=renamed), (), env.switch,
            env.perm_key, env.group,
        )
    # a fresh row whose switched label collides with an existing row
    existing_term = keyword_bytes(sorted(env.keyword_rows)[0])
    clash = UpdateToken(
        delta=PackedBitmap((env.pk.encrypt(0, rng),)),
        label=labels_mod.evaluate(env.group, env.client, existing_term),
        tag=prf.initial_tag(env.tag_key, 1, existing_term),
    )
    with pytest.raises(ProtocolError):
        update_finalize(index, merged, (clash,), env.switch, env.perm_key, env.group)


def test_updated_object_found_by_query(proto_env, worked_example):
    """State-table drift bookkeeping: insert, then query via run_query on a
    patched environment copy."""
    env = proto_env
    rng = RandomSource.seeded("maint/query-after")
    patched = copy.copy(env)
    patched.pair = copy.deepcopy(env.pair)
    patched.db = list(env.db)
    patched.store = dict(env.store)
    state = env.fresh_state()
    obj = _new_object(env, keywords=("w4", "w6"))
    sets = generate_update_tokens(
        obj, env.grid, env.group, env.client, env.tag_key, env.perm_key,
        env.scalars, state, env.pk, env.slot_bits, rng,
    )
    for side in (1, 2):
        for slot, tokens in ((0, sets[side].prefix), (1, sets[side].keyword)):
            index = patched.pair[side][slot]
            table = update_prepare(index, env.perm_key, env.pk, rng)
            merged, fresh = update_merge(
                table, tokens, sets[side].new_count, env.pk, env.slot_bits, rng
            )
            update_finalize(index, merged, fresh, env.switch, env.perm_key, env.group)
    patched.db.append(obj)
    patched.store[obj.oid] = seal(env.object_key, b"object-new", rng)
    query = BooleanRangeQuery(
        keywords=worked_example["keywords"], intervals=worked_example["intervals"]
    )
    _, _, _, outcome = patched.run_query(query, state=state)
    assert outcome.result.ids == (4, obj.oid)
    assert outcome.result.objects[obj.oid] == b"object-new"
