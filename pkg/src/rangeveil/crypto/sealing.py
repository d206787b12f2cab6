"""Authenticated sealing of object payloads (AES-256-GCM)."""

from __future__ import annotations

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from ..errors import ParameterError, SealError

NONCE_BYTES = 12
OBJECT_KEY_BYTES = 32


def new_object_key(rng) -> bytes:
    return rng.randbytes(OBJECT_KEY_BYTES)


def seal(key: bytes, payload: bytes, rng) -> bytes:
    """Nonce-prefixed authenticated ciphertext of one object payload."""
    if len(key) != OBJECT_KEY_BYTES:
        raise ParameterError(f"object key must be {OBJECT_KEY_BYTES} bytes")
    nonce = rng.randbytes(NONCE_BYTES)
    return nonce + AESGCM(key).encrypt(nonce, payload, None)


def open_sealed(key: bytes, blob: bytes) -> bytes:
    if len(key) != OBJECT_KEY_BYTES:
        raise ParameterError(f"object key must be {OBJECT_KEY_BYTES} bytes")
    if len(blob) < NONCE_BYTES + 16:
        raise SealError("sealed blob too short")
    try:
        return AESGCM(key).decrypt(blob[:NONCE_BYTES], blob[NONCE_BYTES:], None)
    except InvalidTag as exc:
        raise SealError("authentication failed") from exc
