"""Exception types shared across the package."""


class VsrefError(Exception):
    """Base class for all package errors."""


class HalfSpaceConditionError(VsrefError):
    """A target set fails the admissibility inequalities (positive minimum
    radius and 2*ell*c > L); the message names the violated inequality."""


class InfeasibleError(VsrefError):
    """A requested configuration has an empty feasibility window."""


class DomainError(VsrefError):
    """A direction lies outside the polar-radius domain of a hyperboloid."""


class EmptyApertureError(VsrefError):
    """The cap intersection defining the aperture contains no grid cell."""


class TotalInternalReflectionError(VsrefError):
    """Snell refraction has a negative radicand for the given index."""


class ConvergenceError(VsrefError):
    """The solver exhausted its sweep budget; carries the final residuals."""

    def __init__(self, message, residuals=None, trace=None):
        super().__init__(message)
        self.residuals = residuals
        self.trace = trace


class MonotonicityError(VsrefError):
    """The sweep residual increased, violating the engine's comparison
    contract; indicates an infeasible scene or an engine defect."""
