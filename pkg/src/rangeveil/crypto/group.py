"""Prime-order subgroup arithmetic used by the label layer.

Labels live in a subgroup of Z_p* with 256-bit prime order q, where
p = q*r + 1.  Exponents are reduced mod q, so re-keying ratios can be
computed with a modular inverse.  Parameter sets for 512/1024/2048-bit
moduli are fixed constants (generated once from a nothing-up-my-sleeve
seed); a tiny order-11 group backs exhaustive tests.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import gmpy2

from ..errors import GroupElementError, ParameterError

# Generated deterministically from the seed string
# "rangeveil-group-params-v1": q is a 256-bit prime, p = q*r + 1 is prime
# with the stated modulus size, and g = h**r mod p generates the order-q
# subgroup.
_P512 = 0x8C92831DC5923099EBD7B5FD48934F2BA6826E9F86A4A693E8208B1220CF1474B0F1ADB2410F43234C372FDAED64687487B19899F3C888D6CCB12F37693DC8D1
_Q512 = 0x8E459A55C14D994B2ED9D407AC0F5A9545C73863D638FD8F9F932AE83E6007E3
_G512 = 0x2BC233E23C619BB3858BE7119DF0CD9BF9519B72B3814090A2CB08485B024BE9FEB46A03BDDB9B38BDB266B65A5586A46BFF756276660F02F6A8C0E7E7D07849

_P1024 = 0xC0F697C1A95A73A1239E9910BD6E22F36BC0868BC6AF6E47BA238CF00E71DB375DE6D21DBB2A592A29469774DDC2BFF70A65BF65033283DBC66E4C16DB4EDA31D750B699EAC786517820482E3FA3F4DF7782DACA9686D3824C3BB85E207CD54682FBAC6599F45D802F951CB8720E05874B3E633247CF3B16246708BA6B7A262D
_Q1024 = 0xCCBB610E7EEB89245772D01D8D371AA290D8490DE1690C271C7780C6FA0B6545
_G1024 = 0x91ADA38E45D08517BFE23537135A1C90AA6388AE858785CD1791FC12AF98BBC5939511AEDCBBAB5BD7020A6D5E4B90A48F14AC3AEC0F4D1157AA0135D59FB2E87B4544B569EF36E6429E4376AE6D8F0D636DBF7CFECDE21057891A6267F411EA9961FD21A0F06AEBA36746F2F1DBD5218D739A85AFAA76C1FDA49F81D7797F5F

_P2048 = 0xA46E09EB2CDBF366D03441B5B857465CB338DDE0B7AA84823F6C4EBE4762414807791FB32E1CDEB3CE41298536D8601406F41E183F1F60082EFF762A7BC71F0CD8539AD4B3EA1DE2406EB268717EEC25C1CB4121510582771C29E238FB5275A0D5B898CF0B426F8460A7C719CB634908E4DD132A28C8EC8A853E6CCBE3BA25D2099A6E933D6359B74DAF14B6EF700DEE93B1CE5A9E994A565DAE79DF033460A65F7129A50FAEC71C2A206495D2B93A6E61D7C2E5A56C78E781C60BC8305FE19BFD300A59EC2A7E58E5AC5E247221D79574DED7FBAF3569F5ECD8AF9C4BA4A9BDC48795A41D3E073B2F54E19C7E26BF1DED317A1E0E99E43CF339888CFE8D527F
_Q2048 = 0xBEC5789A26545B76F9838BFD8A262E22F7517CEADB937918A39B7DF2470FBDC9
_G2048 = 0x24E70F5F7FC0AA306D2D7D48CE293E178FFECBE619602FAB3F59B645B634086C9347A366D92C5ABA3389778CBB5709E890C66F0FD173D3CDF8D2D1B742659C8E992CB8DDA20D6E782452C903EE1D9B3B479D557CD1402EF1F9C54374197D3C26378010199E4BBFC9BE0E75EABC340EDB66E852F1C55AFC33D444A0696EDE847D13C9503DD9FA7F9B206B89EAADCA3D25DABB0E3458171CE9A29953DF70AC209C7DC3C505C5CD715F34CAD3B493051CC4D17AC434A05E85CB120AB39F1D621473812D78F9C28375A7E0A1BDD63A0FB4121BD9023E8B34FC0DF3BB1D56BCE31FF094E5FFB1E3D0AD515D624F7AE50382B8A77F40ADB9BAAE303B7FEC3B40C3E793


@dataclass(frozen=True)
class GroupParams:
    """A subgroup of Z_p* with prime order q and generator g."""

    modulus: int
    order: int
    generator: int

    @property
    def element_bytes(self) -> int:
        """Fixed serialized width of one element."""
        return (self.modulus.bit_length() + 7) // 8

    def exp(self, base: int, exponent: int) -> int:
        return int(gmpy2.powmod(base, exponent, self.modulus))

    def mul(self, a: int, b: int) -> int:
        return a * b % self.modulus

    def inverse_exponent(self, k: int) -> int:
        if k % self.order == 0:
            raise ParameterError("exponent is zero mod the group order")
        return int(gmpy2.invert(k, self.order))

    def contains(self, value: int) -> bool:
        """Full subgroup membership test (one exponentiation)."""
        if not 1 <= value < self.modulus:
            return False
        return self.exp(value, self.order) == 1

    def check_range(self, value: int) -> int:
        """Cheap boundary check used on the hot path and at decode time."""
        if not 1 <= value < self.modulus:
            raise GroupElementError(f"value out of range for modulus: {value}")
        return value

    def hash_to_group(self, data: bytes) -> int:
        """Map arbitrary bytes onto the subgroup as g**(H(data) mod q)."""
        digest = hashlib.sha256(data).digest()
        return self.exp(self.generator, int.from_bytes(digest, "big") % self.order)

    def random_scalar(self, rng) -> int:
        """Uniform nonzero exponent in [1, q-1]."""
        return rng.randrange(1, self.order)

    def encode_element(self, value: int) -> bytes:
        return self.check_range(value).to_bytes(self.element_bytes, "big")

    def decode_element(self, data: bytes) -> int:
        if len(data) != self.element_bytes:
            raise GroupElementError(f"expected {self.element_bytes} bytes, got {len(data)}")
        return self.check_range(int.from_bytes(data, "big"))


_STANDARD = {
    512: GroupParams(_P512, _Q512, _G512),
    1024: GroupParams(_P1024, _Q1024, _G1024),
    2048: GroupParams(_P2048, _Q2048, _G2048),
}


def standard_group(modulus_bits: int) -> GroupParams:
    """Fixed parameter set with a 256-bit-order subgroup."""
    try:
        return _STANDARD[modulus_bits]
    except KeyError:
        raise ParameterError(
            f"no fixed group with a {modulus_bits}-bit modulus; choose from {sorted(_STANDARD)}"
        ) from None


def toy_group() -> GroupParams:
    """Order-11 subgroup of Z_23*, small enough to enumerate in tests."""
    return GroupParams(modulus=23, order=11, generator=2)
