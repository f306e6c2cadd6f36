"""Exception hierarchy shared across the package."""


class TanFemError(Exception):
    """Base class for all package errors."""


class ParseError(TanFemError):
    """A mesh or config file could not be parsed."""


class TopologyError(TanFemError):
    """Non-manifold edge, non-orientable surface, or similar defect."""


class DegenerateElement(TanFemError):
    """Triangle area below the sliver threshold."""


class SingularGradient(TanFemError):
    """Level-set gradient vanishes where a normal is required."""


class DimensionMismatch(TanFemError):
    """Field degrees, sizes, or component counts do not line up."""


class NotQTensor(TanFemError):
    """Input violates the symmetric/traceless tolerance of the Q ansatz."""


class UnsupportedDegree(TanFemError):
    """Tensor degree outside the implemented range."""


class BadContractionIndex(TanFemError):
    """Contraction slot index out of range for the given degree."""


class NoBoundary(TanFemError):
    """Boundary data supplied for a closed mesh."""


class NoConvergence(TanFemError):
    """An iterative procedure stalled; carries the best iterate if any."""

    def __init__(self, message, best=None, trace=None):
        super().__init__(message)
        self.best = best
        self.trace = trace


class BreakdownError(TanFemError):
    """Krylov recurrence broke down twice in a row."""


class AmbiguousWinding(TanFemError):
    """Angle increment too large to read a winding number; mesh too coarse."""


class ConfigError(TanFemError):
    """Run configuration is invalid (unknown key, bad value, missing path)."""
