"""Additively homomorphic counters with split two-step decryption.

Standard Paillier (g = n+1), plus a combined secret exponent d chosen so
that d = 0 mod lambda and d = 1 mod n.  Then C**d = 1 + m*n mod n^2,
which makes decryption a single exponentiation and, more importantly,
lets d be split as d = d1 + d2 over the integers: one server raises a
ciphertext to its share, the other finishes with the complementary
share, and neither share alone reveals anything.  Ciphertexts can also
be re-randomized (multiply by a fresh encryption of zero) without any
secret, which the shuffle relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import gmpy2

from ..errors import CiphertextError, ParameterError, ShareIndexError


@dataclass(frozen=True)
class PaillierPublicKey:
    n: int

    @property
    def n_sq(self) -> int:
        return self.n * self.n

    @property
    def ciphertext_bytes(self) -> int:
        """Fixed serialized width of one ciphertext (an element mod n^2)."""
        return 2 * ((self.n.bit_length() + 7) // 8)

    def check_plaintext(self, m: int) -> int:
        if not 0 <= m < self.n:
            raise ParameterError(f"plaintext out of range [0, n): {m}")
        return m

    def check_ciphertext(self, c: int) -> int:
        if not 1 <= c < self.n_sq:
            raise CiphertextError("ciphertext out of range [1, n^2)")
        return c

    def encrypt(self, m: int, rng) -> int:
        self.check_plaintext(m)
        n, n_sq = self.n, self.n_sq
        r = self._random_unit(rng)
        return (1 + m * n) * int(gmpy2.powmod(r, n, n_sq)) % n_sq

    def rerandomize(self, c: int, rng) -> int:
        """Fresh ciphertext of the same plaintext; no secret needed."""
        self.check_ciphertext(c)
        r = self._random_unit(rng)
        return c * int(gmpy2.powmod(r, self.n, self.n_sq)) % self.n_sq

    def add(self, c1: int, c2: int) -> int:
        """Ciphertext of the sum of the two underlying plaintexts."""
        return self.check_ciphertext(c1) * self.check_ciphertext(c2) % self.n_sq

    def _random_unit(self, rng) -> int:
        while True:
            r = rng.randrange(1, self.n)
            if math.gcd(r, self.n) == 1:
                return r

    def encode_ciphertext(self, c: int) -> bytes:
        return self.check_ciphertext(c).to_bytes(self.ciphertext_bytes, "big")

    def decode_ciphertext(self, data: bytes) -> int:
        if len(data) != self.ciphertext_bytes:
            raise CiphertextError(
                f"expected {self.ciphertext_bytes} bytes, got {len(data)}"
            )
        return self.check_ciphertext(int.from_bytes(data, "big"))


@dataclass(frozen=True)
class KeyShare:
    """One additive share of the combined exponent d = d1 + d2."""

    index: int
    value: int


@dataclass(frozen=True)
class PartialDecryption:
    """Ciphertext raised to one share, tagged with the share that made it.

    Carries the original ciphertext so the finishing party can apply the
    complementary share without a second message leg.
    """

    ciphertext: int
    partial: int
    share_index: int


@dataclass(frozen=True)
class PaillierKeyPair:
    public: PaillierPublicKey
    prime_p: int
    prime_q: int
    lam: int
    combined: int  # d = 0 mod lambda, d = 1 mod n; decryption exponent

    @classmethod
    def from_primes(cls, p: int, q: int) -> "PaillierKeyPair":
        if p == q:
            raise ParameterError("primes must be distinct")
        n = p * q
        lam = math.lcm(p - 1, q - 1)
        # d = lam * (lam^-1 mod n) satisfies both congruences and is < lam*n.
        d = lam * int(gmpy2.invert(lam, n))
        return cls(PaillierPublicKey(n), p, q, lam, d)

    def decrypt(self, c: int) -> int:
        """Direct decryption through the combined exponent."""
        self.public.check_ciphertext(c)
        n, n_sq = self.public.n, self.public.n_sq
        u = int(gmpy2.powmod(c, self.combined, n_sq))
        if (u - 1) % n != 0:
            raise CiphertextError("ciphertext is not a valid encryption")
        return (u - 1) // n % n

    def decrypt_classic(self, c: int) -> int:
        """Textbook decryption via lambda and its inverse; kept as an
        independent check on the combined-exponent route."""
        self.public.check_ciphertext(c)
        n, n_sq = self.public.n, self.public.n_sq
        u = int(gmpy2.powmod(c, self.lam, n_sq))
        if (u - 1) % n != 0:
            raise CiphertextError("ciphertext is not a valid encryption")
        ell = (u - 1) // n
        return ell * int(gmpy2.invert(self.lam, n)) % n

    def split(self, rng) -> tuple[KeyShare, KeyShare]:
        """Two nonzero shares with d1 + d2 = d exactly (over the integers)."""
        d1 = rng.randrange(1, self.combined)
        return KeyShare(1, d1), KeyShare(2, self.combined - d1)


def partial_decrypt(pk: PaillierPublicKey, c: int, share: KeyShare) -> PartialDecryption:
    pk.check_ciphertext(c)
    return PartialDecryption(c, int(gmpy2.powmod(c, share.value, pk.n_sq)), share.index)


def finish_decrypt(pk: PaillierPublicKey, pd: PartialDecryption, share: KeyShare) -> int:
    """Complete a two-step decryption with the complementary share."""
    if share.index == pd.share_index:
        raise ShareIndexError(f"both halves used share {share.index}")
    n, n_sq = pk.n, pk.n_sq
    full = pd.partial * int(gmpy2.powmod(pd.ciphertext, share.value, n_sq)) % n_sq
    if (full - 1) % n != 0:
        raise CiphertextError("shares do not complete to a valid decryption")
    return (full - 1) // n % n


def _random_prime(bits: int, rng) -> int:
    if bits < 3:
        raise ParameterError("prime size too small")
    while True:
        candidate = rng.randbits(bits) | (1 << (bits - 1)) | 1
        if gmpy2.is_prime(candidate, 40):
            return candidate


def generate_keypair(modulus_bits: int, rng) -> PaillierKeyPair:
    """Fresh keypair with two equal-size primes and an exactly sized modulus."""
    if modulus_bits < 16:
        raise ParameterError("modulus too small")
    half = modulus_bits // 2
    while True:
        p = _random_prime(half, rng)
        q = _random_prime(half, rng)
        if p != q and (p * q).bit_length() == modulus_bits:
            return PaillierKeyPair.from_primes(p, q)
