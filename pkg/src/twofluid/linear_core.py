"""Implicit Euler step of the linearised system by density elimination.

With ``lam = 1/dt`` the densities at the new level are
``sigma' = sigma + dt (f1 - r0 div v')`` and ``eta' = eta + dt (f2 - q0 div v')``;
substituting them into the momentum equation leaves one elliptic problem for
the velocity,

    (r0 + q0) lam v - mu Lap v - nu grad div v
        - lam^-1 [omega1 grad(r0 div v) + omega2 grad(q0 div v)] = b,

which is the resolvent problem at ``lam``.  Keeping ``grad(r0 div v)`` whole
(rather than splitting off ``div v grad r0``) makes the elimination exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, InvariantError, SolverError
from .grid import Grid
from .state import LinearCoeffs, RhsBundle

LAMBDA0 = 1.0
SOLVER_RTOL = 1e-10


def _block_diag_vector(grid: Grid, M):
    return sp.block_diag([M] * grid.dim, format="csr")


def viscous_matrix(grid: Grid, mu, nu):
    """Sparse ``mu Lap + nu grad div`` on stacked node vectors."""
    lap = sum(grid.matrix("d2", a) for a in range(grid.dim))
    blocks = [[mu * lap * (i == j) + nu * grid.matrix("hess", i, j) for j in range(grid.dim)]
              for i in range(grid.dim)]
    return sp.bmat(blocks, format="csr")


def divergence_matrix(grid: Grid):
    """Node vector -> cell divergence."""
    return sp.hstack([grid.matrix("fwd", a) for a in range(grid.dim)], format="csr")


def gradient_matrix(grid: Grid):
    """Cell scalar -> node vector gradient."""
    return sp.vstack([grid.matrix("bwd", a) for a in range(grid.dim)], format="csr")


def _node_diag(grid: Grid, values):
    vals = np.broadcast_to(np.asarray(values), grid.shape).ravel()
    return sp.diags(np.tile(vals, grid.dim))


def _dirichlet(grid: Grid, M):
    """Replace boundary rows by identity rows."""
    mask = np.tile(grid.boundary_mask.ravel(), grid.dim)
    if not mask.any():
        return M.tocsr()
    keep = sp.diags((~mask).astype(float))
    fix = sp.diags(mask.astype(float))
    return (keep @ M + fix).tocsr()


def pressure_coupling(grid: Grid, coeffs: LinearCoeffs):
    """``omega1 grad(r0 div .) + omega2 grad(q0 div .)`` as a sparse matrix."""
    D = divergence_matrix(grid)
    B = gradient_matrix(grid)
    W1 = _node_diag(grid, coeffs.omega1)
    W2 = _node_diag(grid, coeffs.omega2)
    R0 = sp.diags(coeffs.r0.ravel())
    Q0 = sp.diags(coeffs.q0.ravel())
    return (W1 @ B @ R0 @ D + W2 @ B @ Q0 @ D).tocsr()


@dataclass
class EllipticOperator:
    """The reduced velocity operator at ``lam`` with Dirichlet rows.

    ``lam`` may be complex for resolvent sweeps; time stepping uses real
    ``lam = 1/dt``.  The factorisation is built on first use and reused.
    """

    grid: Grid
    coeffs: LinearCoeffs
    lam: complex
    matrix: sp.csr_matrix
    rtol: float = SOLVER_RTOL
    _solve: object = field(default=None, repr=False)

    @property
    def dt(self):
        return 1.0 / float(np.real(self.lam))

    @property
    def size(self):
        return self.matrix.shape[0]

    def _factor(self):
        A = self.matrix.tocsc()
        if self.grid.dim == 1:
            lu = spla.splu(A)
            return lambda b: lu.solve(b)
        ilu = spla.spilu(A, drop_tol=1e-6, fill_factor=20)
        prec = spla.LinearOperator(A.shape, ilu.solve, dtype=A.dtype)

        def gmres(b):
            x, info = spla.gmres(A, b, rtol=self.rtol, atol=0.0, M=prec,
                                 restart=60, maxiter=200)
            if info != 0:
                res = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300)
                raise SolverError(f"GMRES did not converge (info={info})", residual=res)
            return x
        return gmres

    def solve_flat(self, b):
        if self._solve is None:
            self._solve = self._factor()
        x = self._solve(b)
        if not np.all(np.isfinite(x)):
            raise SolverError("linear solve produced non-finite values")
        nb = np.linalg.norm(b)
        res = np.linalg.norm(self.matrix @ x - b)
        if nb > 0 and res > 100 * self.rtol * nb:
            raise SolverError(f"linear solve residual {res / nb:.2e} above tolerance",
                              residual=res / nb)
        return x

    def solve(self, b):
        """Solve for a node vector field given a node vector right-hand side."""
        shape = (self.grid.dim,) + self.grid.shape
        b = np.asarray(b).reshape(-1)
        return self.solve_flat(b).reshape(shape)

    def apply(self, v):
        return (self.matrix @ np.asarray(v).reshape(-1)).reshape(np.shape(v))

    def step_rhs(self, sigma, eta, v, rhs: RhsBundle):
        """Right-hand side of the reduced problem for one implicit step."""
        g, c = self.grid, self.coeffs
        dt = self.dt
        lam = 1.0 / dt
        expand = lambda a: np.expand_dims(np.asarray(a), 0)
        b = (rhs.f3 + expand(c.rho_nodes) * lam * v
             - expand(c.omega1) * g.cell_grad(sigma + dt * rhs.f1)
             - expand(c.omega2) * g.cell_grad(eta + dt * rhs.f2))
        return g.zero_boundary(b)

    def dump(self, path):
        """Write the matrix in MatrixMarket coordinate format."""
        scipy.io.mmwrite(str(path), self.matrix.tocoo(),
                         comment=f"reduced velocity operator, lambda={self.lam}")


def _check_coeffs(coeffs: LinearCoeffs):
    rho = coeffs.r0 + coeffs.q0
    if np.any(rho <= 0) or np.any(coeffs.rho_nodes <= 0):
        raise InvariantError("r0 + q0 must stay positive for the reduced operator")
    if np.any(coeffs.omega1 <= 0) or np.any(coeffs.omega2 <= 0):
        raise InvariantError("pressure sensitivities must be positive")


def resolvent_operator(grid: Grid, coeffs: LinearCoeffs, lam, lambda0=LAMBDA0):
    """Reduced operator at a (possibly complex) resolvent parameter ``lam``."""
    if abs(lam) < lambda0:
        raise DomainError(f"|lambda| = {abs(lam):.3g} is below lambda0 = {lambda0}")
    _check_coeffs(coeffs)
    p = coeffs.params
    M = (lam * _node_diag(grid, coeffs.rho_nodes) - viscous_matrix(grid, p.mu, p.nu)
         - pressure_coupling(grid, coeffs) / lam)
    return EllipticOperator(grid, coeffs, lam, _dirichlet(grid, M))


def eliminate_density(grid: Grid, coeffs: LinearCoeffs, dt, lambda0=LAMBDA0):
    """Assemble the implicit-Euler step operator at ``lam = 1/dt``."""
    if not dt > 0:
        raise DomainError("dt must be positive")
    lam = 1.0 / dt
    if lam < lambda0:
        raise DomainError(f"1/dt = {lam:.3g} is below lambda0 = {lambda0}; refine dt")
    return resolvent_operator(grid, coeffs, lam, lambda0)


def linear_step(op: EllipticOperator, sigma, eta, v, rhs: RhsBundle):
    """Advance ``(sigma, eta, v)`` by one implicit step of size ``op.dt``."""
    g, c = op.grid, op.coeffs
    dt = op.dt
    v_new = g.zero_boundary(op.solve(op.step_rhs(sigma, eta, v, rhs)))
    div = g.cell_div(v_new)
    sigma_new = sigma + dt * (rhs.f1 - c.r0 * div)
    eta_new = eta + dt * (rhs.f2 - c.q0 * div)
    return sigma_new, eta_new, v_new


def resolvent_apply(op: EllipticOperator, f):
    """``v = C(lam) f``: solve the reduced problem with zero Dirichlet data."""
    f = op.grid.zero_boundary(np.asarray(f))
    return op.solve(f)
