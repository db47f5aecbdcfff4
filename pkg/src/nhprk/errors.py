"""Exception types shared across the package."""


class NhprkError(Exception):
    """Base class for all errors raised by this package."""


class TableauError(NhprkError):
    """Invalid stage count, degenerate nodes, or coefficient checks failed."""


class SingularMatrixError(NhprkError):
    """A dense factorization hit a pivot below the scaled tolerance."""


class SingularJacobianError(SingularMatrixError):
    """Newton iteration produced a numerically singular Jacobian."""

    def __init__(self, message, iteration):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class DivergenceError(NhprkError):
    """A residual evaluated to NaN/Inf during iteration."""


class RegularityError(NhprkError):
    """The velocity Hessian is not invertible along the Newton path."""


class CompatibilityError(NhprkError):
    """The constraint compatibility matrix is singular."""


class HypothesisError(NhprkError):
    """The supplied tableau pair lacks the structure the stepper requires."""


class InconsistentStateError(NhprkError):
    """Initial data violates the constraint beyond the admission tolerance."""


class RetractionDomainError(NhprkError):
    """An algebra increment left the retraction's domain (step too large)."""


class StepFailureError(NhprkError):
    """An integrator step did not converge."""

    def __init__(self, message, step_index=None, report=None):
        super().__init__(message)
        self.step_index = step_index
        self.report = report


class ConfigError(NhprkError):
    """Bad run configuration (unknown key, parse error, missing value)."""
