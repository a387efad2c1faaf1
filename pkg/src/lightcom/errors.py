"""Exception types shared across the package."""


class LightComError(Exception):
    """Base class for every error raised by this package."""


class ArgumentError(LightComError, ValueError):
    """An argument is outside the domain an operation accepts."""


class RangeError(ArgumentError):
    """A public range guard (bit length, exponent spread, ...) is violated."""


class GenerationFailure(LightComError):
    """Key generation ran out of its retry budget."""


class KeyMismatchError(LightComError):
    """Ciphertexts or shares belong to different key contexts."""


class MalformedCiphertextError(LightComError):
    """A ciphertext is not a valid element for the key it claims."""


class IncompleteShareSetError(LightComError):
    """A recombination got a missing or duplicated party index."""


class GroupMismatchError(LightComError):
    """Shares and a delta matrix live in different groups."""


class DecodeError(LightComError, ValueError):
    """An integer is not a valid Unicode scalar value."""


class IntegrityError(LightComError):
    """Sealed-record tag check failed (the unseal result is bottom)."""


class AccessDenied(LightComError):
    """A party or user touched a record it does not own."""


class ConflictError(LightComError):
    """An id or user id is already taken."""


class ConfigurationError(LightComError):
    """The cluster was configured with unusable parameters."""


class ProtocolAbort(LightComError):
    """A protocol run could not complete (unreachable party, deadlock, desync)."""


class ConsumedRandomnessError(LightComError):
    """Offline randomness was reused or is missing."""


class PipelineError(LightComError):
    """A pipeline is malformed or names an unknown protocol."""
