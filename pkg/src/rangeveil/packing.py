"""Slot packing of share bitmaps into homomorphic counter ciphertexts.

Each object owns an s-bit slot inside a Paillier plaintext, little slot
first, and a bitmap spans a list of chunk ciphertexts.  A logical bit is
the slot value mod 2, so merging a single-bit delta is plain ciphertext
addition: flipping a bit adds 1 to its slot, and up to 2^s - 1 additions
accumulate per slot before the carries could cross a slot boundary.
Leaving 64 headroom bits per chunk keeps the total below the modulus.
"""

from __future__ import annotations

from dataclasses import dataclass

from .bitmap import Bitmap
from .crypto.paillier import KeyShare, PaillierPublicKey, PartialDecryption, partial_decrypt
from .errors import ParameterError, SlotOverflowError

MIN_SLOT_BITS = 2
MAX_SLOT_BITS = 32
_HEADROOM_BITS = 64


def chunk_capacity(modulus_bits: int, slot_bits: int) -> int:
    """Objects per ciphertext: floor((modulus_bits - 64) / s)."""
    if not MIN_SLOT_BITS <= slot_bits <= MAX_SLOT_BITS:
        raise ParameterError(f"slot width must be in [{MIN_SLOT_BITS}, {MAX_SLOT_BITS}]")
    capacity = (modulus_bits - _HEADROOM_BITS) // slot_bits
    if capacity < 1:
        raise ParameterError("modulus too small for even one slot")
    return capacity


def chunks_needed(n: int, capacity: int) -> int:
    return max(1, -(-n // capacity))


def encode_slots(bitmap: Bitmap, slot_bits: int, capacity: int) -> list[int]:
    """Plaintext chunk integers, slot i of chunk c holding bit c*capacity+i."""
    chunks = []
    for base in range(0, max(bitmap.length, 1), capacity):
        value = 0
        for i in range(min(capacity, bitmap.length - base)):
            value |= bitmap.bit(base + i) << (i * slot_bits)
        chunks.append(value)
    return chunks


def decode_slots(chunk_values: list[int], length: int, slot_bits: int, capacity: int) -> Bitmap:
    """Bitmap of slot parities; rejects chunks wider than their slots."""
    mask = (1 << slot_bits) - 1
    value = 0
    for c, chunk in enumerate(chunk_values):
        slots = min(capacity, max(length - c * capacity, 0))
        if chunk < 0 or chunk.bit_length() > slot_bits * slots:
            raise SlotOverflowError(
                f"chunk {c} wider than its {slots} slots; redistribute before decoding"
            )
        for i in range(slots):
            if (chunk >> (i * slot_bits)) & mask & 1:
                value |= 1 << (c * capacity + i)
    return Bitmap(value, length)


@dataclass(frozen=True)
class PackedBitmap:
    """Encrypted slot chunks of one share bitmap."""

    chunks: tuple[int, ...]

    def __post_init__(self):
        if not self.chunks:
            raise ParameterError("a packed bitmap needs at least one chunk")


def pack_bitmap(bitmap: Bitmap, slot_bits: int, pk: PaillierPublicKey, rng) -> PackedBitmap:
    capacity = chunk_capacity(pk.n.bit_length(), slot_bits)
    return PackedBitmap(
        tuple(pk.encrypt(v, rng) for v in encode_slots(bitmap, slot_bits, capacity))
    )


def single_bit_delta(
    position: int, length: int, slot_bits: int, pk: PaillierPublicKey, rng
) -> PackedBitmap:
    """Packing of the bitmap with only `position` set, sized for `length`."""
    return pack_bitmap(
        Bitmap.from_positions([position], length), slot_bits, pk, rng
    )


def add_packed(pk: PaillierPublicKey, a: PackedBitmap, b: PackedBitmap) -> PackedBitmap:
    """Slot-wise sum.  A longer operand keeps its extra chunks as-is, which
    is how an index entry grows when the object universe has grown."""
    shorter, longer = (a, b) if len(a.chunks) <= len(b.chunks) else (b, a)
    merged = tuple(
        pk.add(x, y) for x, y in zip(shorter.chunks, longer.chunks)
    ) + longer.chunks[len(shorter.chunks):]
    return PackedBitmap(merged)


def rerandomize_packed(pk: PaillierPublicKey, packed: PackedBitmap, rng) -> PackedBitmap:
    return PackedBitmap(tuple(pk.rerandomize(c, rng) for c in packed.chunks))


def partial_decrypt_packed(
    pk: PaillierPublicKey, packed: PackedBitmap, share: KeyShare
) -> list[PartialDecryption]:
    return [partial_decrypt(pk, c, share) for c in packed.chunks]


def unpack_bitmap(
    chunk_values: list[int], length: int, slot_bits: int, pk: PaillierPublicKey
) -> Bitmap:
    """Decode decrypted chunk integers back into a share bitmap."""
    return decode_slots(chunk_values, length, slot_bits, chunk_capacity(pk.n.bit_length(), slot_bits))
