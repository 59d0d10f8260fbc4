"""Exception types shared by all solver modules."""


class MiwError(Exception):
    """Base class for every error raised by this package."""


class DuplicatePoints(MiwError):
    """Two world positions coincide within the separation tolerance."""


class OutOfRegion(MiwError):
    """A world position lies outside the computational region."""


class EmptyEnsemble(MiwError):
    """An operation received zero worlds."""


class NonpositiveDensity(MiwError):
    """A target density is zero or negative where a positive value is required."""


class ZeroDenominator(MiwError):
    """A kernel sum in a bandwidth update underflowed to zero."""


class NonpositiveDenominator(MiwError):
    """The node-domain bandwidth update produced a non-positive denominator."""


class DensityUnderflow(MiwError):
    """The estimated density at a world fell below the safe division floor."""


class KernelNotSmooth(MiwError):
    """The chosen kernel lacks the derivatives an operation requires."""


class SingularEvaluation(MiwError):
    """A potential was evaluated exactly at its singular point."""


class NondifferentiablePoint(MiwError):
    """A potential gradient was requested where it does not exist."""


class CollisionDetected(MiwError):
    """Two worlds moved closer than the collision guard allows."""


class InvalidLayout(MiwError):
    """An initial world layout request is inconsistent or degenerate."""


class SymmetryViolation(MiwError):
    """A declared symmetry does not hold for the ensemble or the potential."""


class EigenFailure(MiwError):
    """The reference eigensolver did not converge."""


class IndexOutOfRange(MiwError, IndexError):
    """A state index exceeds the number of computed states."""


class ConfigError(MiwError):
    """A run configuration failed validation."""


class MismatchedProblem(MiwError):
    """Two artifacts being compared describe different physical problems."""
