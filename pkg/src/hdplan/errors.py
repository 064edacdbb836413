"""
Exception hierarchy for HD-Plan.

Every error raised on purpose by the library derives from :class:`HDPlanError`
so that the command line front end can map failures to exit codes.
"""


class HDPlanError(Exception):
    """Base class for all HD-Plan errors."""
    pass


class ConfigurationError(HDPlanError):
    """Custom exception for configuration-related errors."""
    pass


class InstanceValidationError(HDPlanError):
    """Instance or network document does not match its schema or invariants."""
    pass


class DimensionMismatchError(InstanceValidationError):
    """Layer or vector dimensions do not chain."""

    def __init__(self, message: str, layer: int = None):
        super().__init__(message)
        self.layer = layer


class NonFiniteWeightError(InstanceValidationError):
    """A weight or bias is NaN or infinite."""

    def __init__(self, message: str, layer: int = None):
        super().__init__(message)
        self.layer = layer


class UnboundedDomainError(HDPlanError):
    """A variable domain needed for bound propagation is infinite."""
    pass


class MissingInitialValueError(HDPlanError):
    """Simulation needs a fully fixed initial state."""
    pass


class ModelError(HDPlanError):
    """Malformed optimization model."""
    pass


class InfeasibleError(HDPlanError):
    """The optimization problem has no feasible point."""
    pass


class UnboundedError(HDPlanError):
    """The optimization problem is unbounded in the optimization direction."""
    pass


class NumericBreakdownError(HDPlanError):
    """The simplex or active-set method stalled or lost numerical accuracy."""
    pass


class NonConvexError(ModelError):
    """Quadratic objective is not convex in the requested sense."""
    pass


class SolverStatusError(HDPlanError):
    """A solve finished with a status the caller cannot use."""

    def __init__(self, message: str, status: str = None):
        super().__init__(message)
        self.status = status


class PotentialMismatchError(HDPlanError):
    """Reward potentials were computed for a different network or interval count."""
    pass


class DegenerateInstanceError(HDPlanError):
    """Potentials cannot bound the reward (for example a network without hidden units)."""
    pass


class NonterminationError(HDPlanError):
    """Constraint generation exceeded its iteration guard."""
    pass


class ScaleGuardError(HDPlanError):
    """Brute-force enumeration would exceed its pattern budget."""
    pass
