"""Exception types raised across the package."""


class RobinHeatError(Exception):
    """Base class."""


class InvalidPolygon(RobinHeatError, ValueError):
    pass


class NonObtuseUnachievable(RobinHeatError):
    pass


class NonSymmetricTensor(RobinHeatError, ValueError):
    pass


class NegativePotential(RobinHeatError, ValueError):
    pass


class QuadratureSingularity(RobinHeatError, FloatingPointError):
    pass


class DimensionMismatch(RobinHeatError, ValueError):
    pass


class SingularMass(RobinHeatError, ValueError):
    pass


class ShiftAtSpectrum(RobinHeatError, ValueError):
    pass


class SpaceMismatch(RobinHeatError, ValueError):
    pass


class GridMismatch(RobinHeatError, ValueError):
    pass


class PreconditionUnmet(RobinHeatError):
    pass


class EmptySampleSet(RobinHeatError, ValueError):
    pass


class DiagonalPairRejected(RobinHeatError, ValueError):
    pass


class BesselRangeError(RobinHeatError, OverflowError):
    """K_nu(x) over- or underflows double precision."""


class QuadratureNonConvergence(RobinHeatError):
    pass


class SpecError(RobinHeatError, ValueError):
    """Problem-spec file failed validation."""
