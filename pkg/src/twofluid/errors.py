"""Exception hierarchy.

Each class carries the CLI exit code it maps to, so the front end can
translate failures without a lookup table.
"""


class TwoFluidError(Exception):
    exit_code = 1


class DomainError(TwoFluidError, ValueError):
    """Input outside the admissible set (negative density, total vacuum, ...)."""

    exit_code = 2


class ConfigError(TwoFluidError, ValueError):
    exit_code = 2


class ShapeError(TwoFluidError, ValueError):
    exit_code = 2


class InvariantError(TwoFluidError):
    """A proved bound or structural invariant was violated at run time."""

    exit_code = 3


class SmallnessError(InvariantError):
    """The flow-map budget int_0^t ||grad v||_inf <= delta was exceeded."""

    def __init__(self, message, budget=None, delta=None):
        super().__init__(message)
        self.budget = budget
        self.delta = delta


class SingularityError(InvariantError):
    pass


class SolverError(TwoFluidError):
    exit_code = 4

    def __init__(self, message, residual=None, bracket=None):
        super().__init__(message)
        self.residual = residual
        self.bracket = bracket


class ContractionError(SolverError):
    """Picard iteration failed to contract; ``suggested_T`` is a smaller window."""

    def __init__(self, message, suggested_T=None, ratios=None):
        super().__init__(message)
        self.suggested_T = suggested_T
        self.ratios = ratios
