"""Exception hierarchy shared across the package."""


class MlsosError(Exception):
    """Base class for all errors raised by mlsos."""


class SingularMatrix(MlsosError):
    pass


class NoConvergence(MlsosError):
    pass


class NumericalFailure(MlsosError):
    pass


class CapExceeded(MlsosError):
    """An enumeration or basis size exceeded its configured cap."""


class InconsistentEqualities(MlsosError):
    """Equality rows b = Bx contradict each other (Assumption 1, clause 1)."""


class DegenerateBlock(MlsosError):
    """The affine hull of a block is a single point: d - n = 0 (Assumption 1, clause 1)."""


class EmptyRelativeInterior(MlsosError):
    """The block is not full-dimensional in its affine hull (Assumption 1, clause 2)."""


class UnboundedBlock(MlsosError):
    pass


class TooManyCombinations(CapExceeded):
    pass


class OrderTooSmall(MlsosError):
    pass


class DimensionMismatch(MlsosError):
    pass


class NonPositiveEntries(MlsosError):
    pass


class NoNontrivialOptimizer(MlsosError):
    """Every located optimizer of the game program has a zero block sum."""


class KernelConditionFailed(MlsosError):
    pass


class DegenerateGameWarning(UserWarning):
    """Finite convergence is not guaranteed for degenerate games."""
