import pytest

from rangeveil.crypto.group import GroupParams, standard_group, toy_group
from rangeveil.errors import GroupElementError, ParameterError
from rangeveil.rng import RandomSource


def test_toy_group_enumerates_subgroup(tiny_group):
    # brute-force oracle: powers of the generator
    elements = {tiny_group.exp(tiny_group.generator, e) for e in range(tiny_group.order)}
    assert len(elements) == tiny_group.order
    for value in range(1, tiny_group.modulus):
        assert tiny_group.contains(value) == (value in elements)


def test_exp_matches_builtin_pow(tiny_group):
    rng = RandomSource.seeded("group/exp")
    for _ in range(50):
        base = rng.randrange(1, tiny_group.modulus)
        e = rng.randrange(0, 2 * tiny_group.order)
        assert tiny_group.exp(base, e) == pow(base, e, tiny_group.modulus)


def test_inverse_exponent_law(tiny_group):
    for k in range(1, tiny_group.order):
        inv = tiny_group.inverse_exponent(k)
        assert k * inv % tiny_group.order == 1
    with pytest.raises(ParameterError):
        tiny_group.inverse_exponent(tiny_group.order)


@pytest.mark.parametrize("bits", [512, 1024, 2048])
def test_standard_groups_are_well_formed(bits):
    g = standard_group(bits)
    assert g.modulus.bit_length() == bits
    assert g.order.bit_length() == 256
    assert (g.modulus - 1) % g.order == 0
    assert g.exp(g.generator, g.order) == 1
    assert g.generator != 1


def test_standard_group_unknown_size():
    with pytest.raises(ParameterError):
        standard_group(768)


def test_hash_to_group_lands_in_subgroup(group512):
    for i in range(10):
        h = group512.hash_to_group(f"term-{i}".encode())
        assert group512.contains(h)
    assert group512.hash_to_group(b"x") == group512.hash_to_group(b"x")
    assert group512.hash_to_group(b"x") != group512.hash_to_group(b"y")


def test_random_scalar_range(tiny_group):
    rng = RandomSource.seeded("group/scalar")
    seen = {tiny_group.random_scalar(rng) for _ in range(200)}
    assert seen == set(range(1, tiny_group.order))


def test_element_codec_round_trip(group512):
    rng = RandomSource.seeded("group/codec")
    for _ in range(10):
        value = group512.exp(group512.generator, group512.random_scalar(rng))
        data = group512.encode_element(value)
        assert len(data) == group512.element_bytes
        assert group512.decode_element(data) == value


def test_element_codec_rejects_bad_input(group512):
    with pytest.raises(GroupElementError):
        group512.encode_element(0)
    with pytest.raises(GroupElementError):
        group512.encode_element(group512.modulus)
    with pytest.raises(GroupElementError):
        group512.decode_element(b"\x00" * (group512.element_bytes - 1))
    with pytest.raises(GroupElementError):
        group512.decode_element(b"\xff" * group512.element_bytes)


def test_contains_rejects_out_of_range_and_cosets(tiny_group):
    assert not tiny_group.contains(0)
    assert not tiny_group.contains(tiny_group.modulus)
    # 5 generates the full Z_23* (order 22), so it is outside the subgroup
    assert not tiny_group.contains(5)


def test_check_range_is_cheap_boundary_only(tiny_group):
    # 5 is inside [1, p) even though it is not a subgroup member
    assert tiny_group.check_range(5) == 5
    with pytest.raises(GroupElementError):
        tiny_group.check_range(0)


def test_group_params_value_object():
    assert toy_group() == GroupParams(23, 11, 2)
    assert toy_group().element_bytes == 1
