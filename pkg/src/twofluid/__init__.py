"""Two-fluid compressible Navier-Stokes with an algebraic pressure closure,
solved in Lagrangian coordinates by Picard iteration over a linear implicit core."""

__version__ = "0.1.0"

from .closure import (ClosureParams, PhasePoint, closure_derivatives, omega_coefficients,
                      pressure, recover_phases, solve_z)
from .errors import (ConfigError, ContractionError, DomainError, InvariantError, ShapeError,
                     SingularityError, SmallnessError, SolverError, TwoFluidError)
from .grid import Grid, diff_ops

__all__ = [
    "ClosureParams", "PhasePoint", "solve_z", "closure_derivatives", "omega_coefficients",
    "pressure", "recover_phases", "Grid", "diff_ops", "TwoFluidError", "DomainError",
    "ConfigError", "ShapeError", "InvariantError", "SmallnessError", "SingularityError",
    "SolverError", "ContractionError",
]
