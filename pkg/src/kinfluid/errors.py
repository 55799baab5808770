"""Exception types shared by all solver and diagnostic modules."""


class KinfluidError(Exception):
    """Base class for all package errors."""


class NonFiniteField(KinfluidError):
    """A field contains NaN or Inf where a finite value is required."""


class GhostLayerMissing(KinfluidError):
    """A differential operator received a field without its ghost layer."""


class TimeStepTooLarge(KinfluidError):
    """The requested dt violates a stability bound of an explicit substep."""


class InvalidInflow(KinfluidError):
    """Kinetic inflow data is negative or lives on outgoing velocities."""


class InsufficientHistory(KinfluidError):
    """A time-series diagnostic needs at least two snapshots."""


class EllipticSolveFailed(KinfluidError):
    """The Poisson solver did not reach the requested residual."""


class StencilUnderresolved(KinfluidError):
    """The grid is too coarse for the requested high-order stencil."""


class ExtensionFailed(KinfluidError):
    """No boundary-layer width yields a divergence-sign-compatible extension."""

    def __init__(self, message, worst_cell=None, worst_value=None):
        super().__init__(message)
        self.worst_cell = worst_cell
        self.worst_value = worst_value


class PositivityLost(KinfluidError):
    """A density update produced a nonpositive value."""


class NoConvergence(KinfluidError):
    """The fixed-point iteration did not converge within its budget."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InvalidTestFunction(KinfluidError):
    """A weak-form test function violates its support condition."""


class GridMismatch(KinfluidError):
    """Two fields or histograms live on incompatible grids."""


class EmptyDistribution(KinfluidError):
    """Cannot sample particles from a zero-mass distribution."""


class BlowUp(KinfluidError):
    """A particle acquired a non-finite position or velocity."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ExcessiveTruncation(KinfluidError):
    """Velocity-domain truncation removed more mass than allowed."""


class MissingInput(KinfluidError):
    """An expected artifact file or directory is absent."""
