"""Exception hierarchy shared across the package."""


class FairSSEError(Exception):
    """Base class for every error raised by this package."""


# crypto
class KeyLengthError(FairSSEError, ValueError):
    pass


class EmptyOutputError(FairSSEError, ValueError):
    pass


class EntropyError(FairSSEError):
    pass


class DecodeError(FairSSEError, ValueError):
    pass


# sse
class DatabaseError(FairSSEError, ValueError):
    pass


class EmptyKeywordError(FairSSEError, ValueError):
    pass


class LabelCollisionError(FairSSEError):
    pass


# ledger
class InsufficientFundsError(FairSSEError):
    pass


class ImmutabilityError(FairSSEError):
    pass


class GasAssertionError(FairSSEError):
    pass


class AlreadySettledError(FairSSEError):
    pass


class UnauthorizedError(FairSSEError):
    pass


class InvariantViolation(FairSSEError):
    """A ledger or scenario invariant (e.g. money conservation) broke."""


# frameworks
class ConfigError(FairSSEError, ValueError):
    pass


class AbortNoDeposit(FairSSEError):
    pass


class ProtocolAbort(FairSSEError):
    """A party refused to continue because a verification failed."""


class PhaseError(FairSSEError):
    """An operation was attempted in the wrong session state."""


class RetrievalIntegrityError(FairSSEError):
    pass


# harness
class EmptyCorpusError(FairSSEError, ValueError):
    pass
