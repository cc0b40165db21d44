"""Exception hierarchy shared by all modules."""


class ConsensusError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(ConsensusError, ValueError):
    """Input violates a modelling assumption or a configuration constraint."""


class NumericalError(ConsensusError, ArithmeticError):
    """A run produced a result that breaks a guaranteed numerical invariant."""


class DimensionMismatch(ValidationError):
    pass


class NotControllable(ValidationError):
    pass


class UnstableCompression(ValidationError):
    pass


class IdentityViolation(ValidationError):
    pass


class NonPositivePeriod(ValidationError):
    pass


class AsymmetricGraph(ValidationError):
    pass


class EdgeNotInUnion(ValidationError):
    pass


class MismatchedAgentCount(ValidationError):
    pass


class NotErgodic(ValidationError):
    pass


class NotConnected(ValidationError):
    pass


class NotJointlyConnected(NotConnected):
    pass


class NonPositiveSigma(ValidationError):
    pass


class NonPositiveRadius(ValidationError):
    pass


class MaskMismatch(ValidationError):
    pass


class GammaTooSmall(ValidationError):
    pass


class NonPositiveMetric(ValidationError):
    pass


class InsufficientHorizon(ValidationError):
    pass


class BoundednessViolation(NumericalError):
    """Compressed state left the [-M, M] band guaranteed by the t0 condition."""


class IllConditionedWarning(RuntimeWarning):
    pass
