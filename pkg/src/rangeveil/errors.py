"""Exception types shared across the library."""


class RangeVeilError(Exception):
    """Base class for all library errors."""


class ParameterError(RangeVeilError):
    """A value falls outside the domain a routine accepts."""


class GroupElementError(ParameterError):
    """A value is not an element of the expected multiplicative subgroup."""


class CiphertextError(ParameterError):
    """A ciphertext is malformed or outside the valid range."""


class ShareIndexError(RangeVeilError):
    """Two decryption shares with the same index were combined."""


class SlotOverflowError(RangeVeilError):
    """A packed counter chunk decrypted to a value wider than its slots.

    Raised when additive carries have crossed a slot boundary, which means
    the per-slot parities can no longer be trusted.
    """


class SealError(RangeVeilError):
    """Authenticated decryption of a sealed object payload failed."""


class ProtocolError(RangeVeilError):
    """A message violates the two-server protocol state machine."""


class EpochMismatchError(ProtocolError):
    """A message was built against a different shuffle epoch than the index."""


class StorageError(RangeVeilError):
    """Persisted state could not be loaded or failed its checksum."""
