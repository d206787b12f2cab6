import pytest

from rangeveil.crypto import prf
from rangeveil.errors import ParameterError
from rangeveil.rng import RandomSource


def test_prf_width_and_determinism():
    out = prf.prf(b"k" * 32, b"data")
    assert len(out) == prf.TAG_BYTES
    assert out == prf.prf(b"k" * 32, b"data")
    assert out != prf.prf(b"j" * 32, b"data")
    with pytest.raises(ParameterError):
        prf.prf(b"", b"data")


def test_initial_tag_separates_sides_and_terms():
    key = prf.new_key(RandomSource.seeded("prf/key"))
    assert prf.initial_tag(key, 1, b"t") != prf.initial_tag(key, 2, b"t")
    assert prf.initial_tag(key, 1, b"t") != prf.initial_tag(key, 1, b"u")
    with pytest.raises(ParameterError):
        prf.initial_tag(key, 3, b"t")


def test_step_tag_validates_width():
    with pytest.raises(ParameterError):
        prf.step_tag(b"short", 5)
    stepped = prf.step_tag(b"\x00" * prf.TAG_BYTES, 5)
    assert len(stepped) == prf.TAG_BYTES


def test_chain_tag_order_per_side():
    key = prf.new_key(RandomSource.seeded("prf/chain"))
    t1 = prf.initial_tag(key, 1, b"term")
    t2 = prf.initial_tag(key, 2, b"term")
    r1, r2 = 1234, 5678
    # side 1 travels to server 2 first: r2 then r1
    assert prf.chain_tag(t1, 1, r1, r2, 1) == prf.step_tag(prf.step_tag(t1, r2), r1)
    assert prf.chain_tag(t2, 2, r1, r2, 1) == prf.step_tag(prf.step_tag(t2, r1), r2)
    assert prf.chain_tag(t1, 1, r1, r2, 0) == t1
    two = prf.chain_tag(prf.chain_tag(t1, 1, r1, r2, 1), 1, r1, r2, 1)
    assert prf.chain_tag(t1, 1, r1, r2, 2) == two
    with pytest.raises(ParameterError):
        prf.chain_tag(t1, 1, r1, r2, -1)


def test_position_key_is_keyed():
    tag = b"\xab" * prf.TAG_BYTES
    k1, k2 = b"1" * 32, b"2" * 32
    assert prf.position_key(k1, tag) != prf.position_key(k2, tag)
    assert len(prf.position_key(k1, tag)) == prf.TAG_BYTES


def test_new_key_width():
    assert len(prf.new_key(RandomSource.seeded("prf/new"))) == prf.KEY_BYTES
