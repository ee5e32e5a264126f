"""Exception hierarchy shared by every reinshard module."""


class ReinshardError(Exception):
    """Base class for all library errors."""


# chain data model
class MalformedBlock(ReinshardError):
    pass


class InvariantBroken(ReinshardError):
    pass


class CapacityExceeded(ReinshardError):
    pass


class LinkMismatch(ReinshardError):
    pass


class NoValidPair(ReinshardError):
    pass


class UnknownPair(ReinshardError):
    pass


# consensus
class LoneValidator(ReinshardError):
    pass


class ZeroDenominator(ReinshardError):
    pass


class NotApplicable(ReinshardError):
    pass


# vdf
class BadSecurityLevel(ReinshardError):
    pass


class VdfParamError(ReinshardError):
    pass


class ContractViolation(ReinshardError):
    """A timing contract (t_V < t_E, or tau' < tau) does not hold."""


# allocation
class BadProfile(ReinshardError):
    pass


class EmptyWindow(ReinshardError):
    pass


class DegenerateProfile(ReinshardError):
    pass


class EmptyValidatorSet(ReinshardError):
    pass


class ZeroLearningRate(ReinshardError):
    pass


class NoDelegate(ReinshardError):
    pass


# sharding
class EmptyChain(ReinshardError):
    pass


class UnknownNode(ReinshardError):
    pass


class ShardingError(ReinshardError):
    pass


# cross-shard protocol
class InvalidParty(ReinshardError):
    pass


class IllegalState(ReinshardError):
    pass


class HoldContention(ReinshardError):
    pass


class SessionTimedOut(ReinshardError):
    pass


# simulation engine
class PastEvent(ReinshardError):
    pass


class ConfigError(ReinshardError):
    pass
