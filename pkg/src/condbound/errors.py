"""Exception types raised across the package."""


class CondboundError(Exception):
    """Base class for all package errors."""


class InvalidInput(CondboundError, ValueError):
    """Input violates a documented precondition."""


class InvalidDispersion(InvalidInput):
    pass


class SupportViolation(InvalidInput):
    pass


class PreconditionViolated(InvalidInput):
    pass


class EmptyInterval(InvalidInput):
    pass


class UnsupportedEvent(InvalidInput):
    pass


class DegreeMismatch(InvalidInput):
    pass


class ZeroEventMass(CondboundError):
    """The distribution puts no mass on the conditioning event."""


class RootNotBracketed(CondboundError):
    pass


class QuarticRootNotFound(CondboundError):
    pass


class SolverFailure(CondboundError):
    """Backend solver crashed or returned an unusable status."""


class InfeasibleDiscretization(CondboundError):
    pass


class EventMassVanishes(CondboundError):
    pass


class BracketInvalid(CondboundError):
    pass


class TooManyAtoms(CondboundError):
    pass


class QuadratureFailure(CondboundError):
    pass
