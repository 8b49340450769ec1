"""Containers shared by the Lagrangian, linear and Picard layers."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .closure import ClosureParams, omega_coefficients, solve_z
from .errors import InvariantError, ShapeError
from .grid import Grid

AROUND_INITIAL = "around_initial"
AROUND_CONSTANT = "around_constant"


@dataclass
class SimState:
    """Lagrangian fields at one time level (or a stack of levels along axis 0).

    ``r``, ``q`` are cell arrays, ``v`` a node vector field.  ``dvdt`` is the time
    derivative of ``v`` used by the inertia correction; ``None`` means zero.
    """

    r: np.ndarray
    q: np.ndarray
    v: np.ndarray
    dvdt: np.ndarray | None = None

    def check(self, grid: Grid):
        if np.shape(self.r)[-grid.dim:] != grid.cell_shape or np.shape(self.q) != np.shape(self.r):
            raise ShapeError("densities must be cell fields of equal shape")
        if np.shape(self.v)[-grid.dim - 1:] != (grid.dim,) + grid.shape:
            raise ShapeError("velocity must be a node vector field")
        return self


@dataclass
class LinearCoeffs:
    """Frozen coefficients of the linearised system.

    Densities ``r0``, ``q0`` sit on cells (they multiply the cell divergence);
    the inertia ``r0 + q0`` and the pressure sensitivities ``omega1``, ``omega2``
    are evaluated on nodes from the interpolated densities.
    """

    r0: np.ndarray
    q0: np.ndarray
    r0_nodes: np.ndarray
    q0_nodes: np.ndarray
    z0_nodes: np.ndarray
    omega1: np.ndarray
    omega2: np.ndarray
    params: ClosureParams
    mode: str = AROUND_INITIAL

    @classmethod
    def from_cells(cls, grid: Grid, r0, q0, params: ClosureParams, mode=AROUND_INITIAL,
                   density_floor=0.0):
        r0 = np.asarray(r0, dtype=float)
        q0 = np.asarray(q0, dtype=float)
        if r0.shape != grid.cell_shape or q0.shape != grid.cell_shape:
            raise ShapeError("frozen densities must be cell fields")
        if np.any(r0 < 0) or np.any(q0 < 0):
            raise InvariantError("frozen partial densities must be non-negative")
        if np.any(r0 + q0 <= density_floor):
            raise InvariantError("total frozen density r0 + q0 is not bounded away from zero")
        rn, qn = grid.to_nodes(r0), grid.to_nodes(q0)
        zn = solve_z(rn, qn, params)
        w1, w2 = omega_coefficients(zn, rn, params)
        return cls(r0, q0, rn, qn, zn, np.asarray(w1), np.asarray(w2), params, mode)

    @classmethod
    def constant(cls, grid: Grid, r_star: float, q_star: float, params: ClosureParams):
        r0 = np.full(grid.cell_shape, float(r_star))
        q0 = np.full(grid.cell_shape, float(q_star))
        return cls.from_cells(grid, r0, q0, params, mode=AROUND_CONSTANT)

    @property
    def rho_nodes(self):
        return self.r0_nodes + self.q0_nodes

    @property
    def is_constant(self):
        return self.mode == AROUND_CONSTANT


@dataclass
class RhsBundle:
    """Right-hand sides of the linearised system: cell ``f1``, ``f2``; node ``f3``."""

    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    mode: str = AROUND_INITIAL

    @classmethod
    def zeros(cls, grid: Grid, mode=AROUND_INITIAL):
        return cls(np.zeros(grid.cell_shape), np.zeros(grid.cell_shape),
                   np.zeros((grid.dim,) + grid.shape), mode)

    def at(self, n):
        """Slice one time level out of a stacked bundle."""
        return replace(self, f1=self.f1[n], f2=self.f2[n], f3=self.f3[n])


@dataclass
class Trajectory:
    """Perturbation trajectory over a time window.

    ``sigma``/``eta`` have shape ``(nt, *cell_shape)`` and ``v`` has shape
    ``(nt, d, *shape)``; ``times`` has length ``nt``.
    """

    times: np.ndarray
    sigma: np.ndarray
    eta: np.ndarray
    v: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def nt(self):
        return len(self.times)

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    def __sub__(self, other):
        return Trajectory(self.times, self.sigma - other.sigma, self.eta - other.eta,
                          self.v - other.v)

    def __add__(self, other):
        return Trajectory(self.times, self.sigma + other.sigma, self.eta + other.eta,
                          self.v + other.v)

    def scaled(self, a):
        return Trajectory(self.times, a * self.sigma, a * self.eta, a * self.v)

    @classmethod
    def constant(cls, times, sigma0, eta0, v0):
        nt = len(times)
        rep = lambda a: np.repeat(np.asarray(a, dtype=float)[None], nt, axis=0)
        return cls(np.asarray(times, dtype=float), rep(sigma0), rep(eta0), rep(v0))
