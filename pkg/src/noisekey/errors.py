"""Exception hierarchy shared by every noisekey module."""


class NoiseKeyError(Exception):
    """Base class for all package errors."""


class ContractViolation(NoiseKeyError, ValueError):
    """An argument broke an operation's precondition."""


class DomainError(NoiseKeyError, ValueError):
    """A physical parameter lies outside its admissible range."""


class KeyExhausted(NoiseKeyError):
    """Not enough unconsumed key or keystream bits for the request."""


class ProtocolViolation(NoiseKeyError):
    """The peer sent something inconsistent with the cycle protocol."""


class UndefinedLikelihood(NoiseKeyError, ValueError):
    """A noiseless likelihood was asked for an observation off the constellation."""


class AttackRefused(NoiseKeyError, ValueError):
    """Exhaustive search refused by the resource guard."""


class WireError(NoiseKeyError):
    """Malformed frame on the byte stream."""


class BadMagic(WireError):
    pass


class BadVersion(WireError):
    pass


class BadLength(WireError):
    pass


class BadTag(WireError):
    pass


class BadType(WireError):
    pass


class HandshakeError(NoiseKeyError):
    """The two endpoints refused to start a session."""


class FingerprintMismatch(HandshakeError):
    pass


class ConfigMismatch(HandshakeError):
    pass
