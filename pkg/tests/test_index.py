import pytest

from rangeveil.bitmap import Bitmap, combine_shares
from rangeveil.crypto import labels as labels_mod
from rangeveil.crypto import prf
from rangeveil.errors import ParameterError, ProtocolError
from rangeveil.index import (
    EncryptedIndex,
    EncryptedIndexEntry,
    SpatioTextualObject,
    build_plain_indexes,
    canonical_keyword,
    encrypted_index_build,
    keyword_bytes,
    prefix_bytes,
)
from rangeveil.packing import PackedBitmap, chunk_capacity, unpack_bitmap
from rangeveil.rng import RandomSource
from rangeveil.spatial import GridSpec, PrefixElement, prefix_family


def _objects(worked_example):
    grid = worked_example["grid"]
    return [
        SpatioTextualObject(
            r["id"], grid.curve_position(r["x"], r["y"]), tuple(r["keywords"])
        )
        for r in worked_example["records"]
    ]


def test_object_validation():
    with pytest.raises(ParameterError):
        SpatioTextualObject(-1, 0, ("a",))
    with pytest.raises(ParameterError):
        SpatioTextualObject(0, 0, ("a", ""))


def test_canonical_keyword_folds():
    assert canonical_keyword("CaFe") == "cafe"
    assert canonical_keyword("Café") == canonical_keyword("Café")


def test_term_bytes_are_injective_across_kinds():
    seen = set()
    for element in prefix_family(45, 6):
        if element.length:
            seen.add(prefix_bytes(element))
    for word in ("w1", "W1", "w2"):
        seen.add(keyword_bytes(word))
    # "w1" and "W1" canonicalize together; everything else is distinct
    assert len(seen) == 6 + 2
    assert all(b[0] in (1, 2) for b in seen)


def test_build_plain_indexes_shape(worked_example):
    db = _objects(worked_example)
    prefix_rows, keyword_rows = build_plain_indexes(db, worked_example["grid"])
    assert len(prefix_rows) == 126
    assert all(bm.length == 5 for bm in prefix_rows.values())
    assert sorted(keyword_rows) == ["w1", "w2", "w3", "w4", "w5", "w6", "w7", "w8"]
    assert keyword_rows["w4"].positions() == (1, 3, 4)
    assert keyword_rows["w6"].positions() == (0, 3, 4)


def test_build_plain_indexes_prefix_rows_match_families(worked_example):
    db = _objects(worked_example)
    prefix_rows, _ = build_plain_indexes(db, worked_example["grid"])
    for element, bitmap in prefix_rows.items():
        expected = tuple(
            o.oid for o in db if element in prefix_family(o.loc, 6)[:-1]
        )
        assert bitmap.positions() == expected


def test_build_plain_indexes_rejects_sparse_ids(worked_example):
    grid = worked_example["grid"]
    db = [SpatioTextualObject(0, 0, ("a",)), SpatioTextualObject(2, 1, ("b",))]
    with pytest.raises(ParameterError):
        build_plain_indexes(db, grid)


def test_build_plain_indexes_rejects_out_of_grid(worked_example):
    grid = worked_example["grid"]
    with pytest.raises(ParameterError):
        build_plain_indexes([SpatioTextualObject(0, 64, ("a",))], grid)


def test_encrypted_index_lookup_and_guards():
    entry = EncryptedIndexEntry(7, PackedBitmap((1,)), b"t" * 32)
    index = EncryptedIndex("prefix", 1, [entry])
    assert index.lookup(7) is entry
    assert index.lookup(8) is None
    with pytest.raises(ParameterError):
        EncryptedIndex("other", 1, [])
    with pytest.raises(ParameterError):
        EncryptedIndex("prefix", 3, [])
    dup = EncryptedIndex("prefix", 1, [entry, entry])
    with pytest.raises(ProtocolError):
        dup.lookup(7)


def test_encrypted_index_replace_id_field():
    entry = EncryptedIndexEntry(7, PackedBitmap((1,)), b"t" * 32)
    index = EncryptedIndex("keyword", 2, [entry])
    index.replace_id_field(7, PackedBitmap((2,)))
    assert index.lookup(7).id_field == PackedBitmap((2,))
    assert index.lookup(7).tag == b"t" * 32
    with pytest.raises(ProtocolError):
        index.replace_id_field(9, PackedBitmap((2,)))


def test_encrypted_index_build_recombines(worked_example, paillier256, group512):
    group = group512
    rng = RandomSource.seeded("index/build")
    master = labels_mod.keygen(group, rng)
    tag_key = b"k" * 32
    db = _objects(worked_example)
    prefix_rows, keyword_rows = build_plain_indexes(db, worked_example["grid"])
    pair = encrypted_index_build(
        prefix_rows, keyword_rows, master, tag_key, group, paillier256.public, 16, rng
    )
    capacity = chunk_capacity(paillier256.public.n.bit_length(), 16)
    assert capacity >= len(db)
    for rows, to_bytes, slot in (
        (prefix_rows, prefix_bytes, 0),
        (keyword_rows, keyword_bytes, 1),
    ):
        for term, bitmap in rows.items():
            label = labels_mod.evaluate(group, master, to_bytes(term))
            shares = []
            for side in (1, 2):
                entry = pair[side][slot].lookup(label)
                assert entry is not None
                assert entry.tag == prf.initial_tag(tag_key, side, to_bytes(term))
                values = [paillier256.decrypt(c) for c in entry.id_field.chunks]
                shares.append(unpack_bitmap(values, len(db), 16, paillier256.public))
            assert combine_shares(*shares) == bitmap


def test_encrypted_index_build_counts(worked_example, paillier256, group512):
    group = group512
    rng = RandomSource.seeded("index/counts")
    master = labels_mod.keygen(group, rng)
    db = _objects(worked_example)
    prefix_rows, keyword_rows = build_plain_indexes(db, worked_example["grid"])
    pair = encrypted_index_build(
        prefix_rows, keyword_rows, master, b"k" * 32, group, paillier256.public, 16, rng
    )
    for side in (1, 2):
        assert len(pair[side][0].entries) == 126
        assert len(pair[side][1].entries) == len(keyword_rows)
        assert pair[side][0].epoch == 0 and pair[side][1].epoch == 0
        assert (pair[side][0].kind, pair[side][1].kind) == ("prefix", "keyword")
