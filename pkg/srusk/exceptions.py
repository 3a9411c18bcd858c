"""
Exception hierarchy for the srusk package.
"""


class SruskError(Exception):
    """Base class for every error raised by the engine."""


class DomainError(SruskError, ValueError):
    """An elementary function was evaluated outside its domain."""


class NoConvergenceError(SruskError):
    """A Newton iteration did not reach its tolerance."""


class SingularJacobianError(SruskError):
    """A Newton step met a rank-deficient Jacobian."""


class SingularHessianError(SruskError):
    """The velocity Hessian is singular where a regular system was required."""


class NotOnW1Error(SruskError):
    """The point violates the primary constraints."""


class NotOnConstraintSetError(SruskError):
    """The point is not on the zero set of the current constraint chain."""


class InconsistentSystemError(SruskError):
    """A discovered constraint has no zero set inside the sampling box."""


class ConstantRankError(SruskError):
    """The null-space dimension changes across sample points."""


class ProjectionFailedError(SruskError):
    """A point could not be projected onto the constraint chain."""


class VectorFieldUndeterminedError(SruskError):
    """Free coefficients remain and no rule was supplied to fix them."""


class UnknownModelError(SruskError, KeyError):
    """The requested model or registry entry does not exist."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown model"


class ConfigError(SruskError):
    """The run configuration could not be parsed or validated."""
