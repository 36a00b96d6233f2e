"""Exception types shared across the package."""


class IrsaError(Exception):
    """Base class for all errors raised by this package."""


class EmptyDistribution(IrsaError):
    """A degree distribution was built from no coefficient pairs."""


class NegativeMass(IrsaError):
    """A degree distribution coefficient is negative."""


class ZeroTotalMass(IrsaError):
    """All degree distribution coefficients are zero."""


class DomainError(IrsaError):
    """An argument lies outside the mathematical domain of an operation."""


class TruncationError(IrsaError):
    """The slot-degree pmf cannot reach the target tail mass under its cap."""


class BracketError(IrsaError):
    """A threshold bisection bracket could not be established."""


class InfeasibleConstraint(IrsaError):
    """The mean-degree constraint is unattainable on the allowed degrees."""


class DegreeExceedsSlots(IrsaError):
    """A repetition degree exceeds the number of slots in the frame."""


class NotPowerOfTwo(IrsaError):
    """Pilot count must be a power of two for the Sylvester construction."""


class DoubleSubtraction(IrsaError):
    """A decoded user was subtracted from the received signal twice."""


class ZeroSlots(IrsaError):
    """The latency budget leaves no room for even one slot."""
