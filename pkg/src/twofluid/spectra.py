"""Resolvent norm sweeps over a sector and the spectrum of the linear generator."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, SolverError
from .grid import Grid
from .linear_core import (LAMBDA0, divergence_matrix, gradient_matrix, resolvent_operator,
                          viscous_matrix)
from .state import LinearCoeffs

log = logging.getLogger(__name__)

POWER_ITERS = 50
POWER_RTOL = 1e-6
POWER_SEED = 12345


@dataclass
class SectorSpec:
    """Log-spaced radii times equally spaced rays with ``|arg lam| <= pi - epsilon``."""

    epsilon: float = np.pi / 4
    lambda0: float = LAMBDA0
    n_radii: int = 16
    n_rays: int = 9
    r_max: float = 1e3
    samples: np.ndarray = field(default=None)

    def __post_init__(self):
        if not 0 < self.epsilon < np.pi / 2:
            raise DomainError("epsilon must lie in (0, pi/2)")
        if not 0 < self.lambda0 < self.r_max:
            raise DomainError("need 0 < lambda0 < r_max")
        if self.samples is None:
            radii = np.geomspace(self.lambda0, self.r_max, self.n_radii)
            theta = np.linspace(-(np.pi - self.epsilon), np.pi - self.epsilon, self.n_rays)
            self.samples = (radii[:, None] * np.exp(1j * theta[None, :])).ravel()
        self.samples = np.asarray(self.samples, dtype=complex)

    def contains(self, lam):
        tol = 1e-12
        return (abs(np.angle(lam)) <= np.pi - self.epsilon + tol
                and abs(lam) >= self.lambda0 * (1 - tol))


@dataclass
class ResolventSample:
    lam: complex
    norm_j0: float
    norm_j1: float
    norm_j2: float
    ok: bool = True


def derivative_matrices(grid: Grid):
    """First (node -> cell) and second (node) derivative maps on stacked vectors."""
    d = grid.dim
    first = sp.vstack([sp.block_diag([grid.matrix("fwd", a)] * d) for a in range(d)])
    second = sp.vstack([sp.block_diag([grid.matrix("hess", l, m)] * d)
                        for l in range(d) for m in range(d)])
    return first.tocsr(), second.tocsr()


def _power_norm(apply, apply_h, n, rng):
    """Largest singular value of a linear map by power iteration on ``T^H T``."""
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(POWER_ITERS):
        y = apply_h(apply(x))
        new = np.sqrt(abs(np.vdot(x, y)))
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0
        x = y / ny
        if est > 0 and abs(new - est) <= POWER_RTOL * new:
            return float(new)
        est = new
    return float(est)


def resolvent_norms(grid: Grid, coeffs: LinearCoeffs, lam, lambda0=LAMBDA0, seed=POWER_SEED):
    """``(||lam B||, ||lam^(1/2) grad B||, ||grad^2 B||)`` for the resolvent ``B(lam)``.

    Norms are Euclidean over the free (non-Dirichlet) velocity values, which
    is the discrete L_2 norm up to a common factor on a uniform grid.
    """
    op = resolvent_operator(grid, coeffs, lam, lambda0)
    lu = spla.splu(op.matrix.tocsc().astype(complex))
    free = ~np.tile(grid.boundary_mask.ravel(), grid.dim)
    n = op.size
    P = sp.diags(free.astype(float))
    D1, D2 = derivative_matrices(grid)
    rng = np.random.default_rng(seed)

    def B(x):
        return lu.solve(P @ x)

    def BH(y):
        return P @ lu.solve(y, trans="H")

    out = []
    for scale, T in ((abs(lam), None), (abs(lam) ** 0.5, D1), (1.0, D2)):
        if T is None:
            f, fh = B, BH
        else:
            f = lambda x, T=T: T @ B(x)
            fh = lambda y, T=T: BH(T.conj().T @ y)
        out.append(scale * _power_norm(f, fh, n, rng))
    return tuple(out)


def sweep_sector(grid: Grid, coeffs: LinearCoeffs, spec: SectorSpec):
    """Norm proxies at every sample of the sector; failing samples are flagged."""
    if not coeffs.is_constant:
        raise DomainError("the sector sweep expects constant coefficients")
    out = []
    for lam in spec.samples:
        if not spec.contains(lam):
            raise DomainError(f"sample {lam} lies outside the sector")
        try:
            j0, j1, j2 = resolvent_norms(grid, coeffs, lam, spec.lambda0)
            out.append(ResolventSample(complex(lam), j0, j1, j2))
        except (RuntimeError, SolverError) as exc:
            log.warning("resolvent solve failed at lambda=%s: %s", lam, exc)
            nan = float("nan")
            out.append(ResolventSample(complex(lam), nan, nan, nan, ok=False))
    return out


def sweep_sup(samples):
    good = [s for s in samples if s.ok]
    if not good:
        raise SolverError("every resolvent sample failed")
    return (max(s.norm_j0 for s in good), max(s.norm_j1 for s in good),
            max(s.norm_j2 for s in good))


def symbol_norms(grid: Grid, coeffs: LinearCoeffs, lam):
    """Closed-form norm proxies on a 1D periodic grid from the Fourier symbol

    ``a(xi) = rho lam + (mu + nu) s2 + c s2 / lam`` with ``s2 = 4 sin^2(xi h / 2) / h^2``
    and ``c = omega1 r + omega2 q``, maximised over the grid's discrete modes.
    """
    if grid.dim != 1 or not grid.periodic or not coeffs.is_constant:
        raise DomainError("the symbol formula needs constant coefficients on a 1D periodic grid")
    h = grid.spacing[0]
    n = grid.shape[0]
    xi = 2 * np.pi * np.arange(n) / (n * h)
    s2 = 4 * np.sin(xi * h / 2) ** 2 / h**2
    p = coeffs.params
    r, q = float(coeffs.r0.flat[0]), float(coeffs.q0.flat[0])
    c = float(coeffs.omega1.flat[0]) * r + float(coeffs.omega2.flat[0]) * q
    a = (r + q) * lam + (p.mu + p.nu) * s2 + c * s2 / lam
    return (float(np.max(abs(lam) / abs(a))), float(np.max(abs(lam) ** 0.5 * np.sqrt(s2) / abs(a))),
            float(np.max(s2 / abs(a))))


def generator_matrix(grid: Grid, coeffs: LinearCoeffs):
    """Dense generator of the linear system on (sigma, eta, free velocity values)."""
    p = coeffs.params
    free = ~np.tile(grid.boundary_mask.ravel(), grid.dim)
    Dv = divergence_matrix(grid)[:, free]
    Bg = gradient_matrix(grid)[free, :]
    rho = np.tile(np.broadcast_to(coeffs.rho_nodes, grid.shape).ravel(), grid.dim)[free]
    w1 = np.tile(np.broadcast_to(coeffs.omega1, grid.shape).ravel(), grid.dim)[free]
    w2 = np.tile(np.broadcast_to(coeffs.omega2, grid.shape).ravel(), grid.dim)[free]
    Lv = viscous_matrix(grid, p.mu, p.nu)[free][:, free]
    inv_rho = sp.diags(1.0 / rho)
    nc = grid.n_cells
    Z = sp.csr_matrix((nc, nc))
    blocks = [
        [Z, Z, -sp.diags(coeffs.r0.ravel()) @ Dv],
        [Z, Z, -sp.diags(coeffs.q0.ravel()) @ Dv],
        [-inv_rho @ sp.diags(w1) @ Bg, -inv_rho @ sp.diags(w2) @ Bg, inv_rho @ Lv],
    ]
    return sp.bmat(blocks).toarray()


@dataclass
class DecaySpectrum:
    eigenvalues: np.ndarray
    conserved: np.ndarray
    beta_hat: float


def decay_spectrum(grid: Grid, coeffs: LinearCoeffs, zero_tol=1e-9):
    """Eigenvalues of the linear generator and ``beta_hat = -max Re`` over the
    modes that actually evolve.

    Eigenvalues with ``|lam| <= zero_tol * max|lam|`` belong to conserved
    quantities (mass, the pointwise ratio combination, steady pressure
    states) and are excluded from ``beta_hat``.
    """
    if grid.periodic:
        raise DomainError("decay needs a bounded domain with Dirichlet velocity")
    ev = np.linalg.eigvals(generator_matrix(grid, coeffs))
    if not np.all(np.isfinite(ev)):
        raise SolverError("eigenvalue computation returned non-finite values")
    scale = np.max(np.abs(ev))
    conserved = np.abs(ev) <= zero_tol * scale
    moving = ev[~conserved]
    beta = float(-np.max(moving.real))
    order = np.argsort(-ev.real)
    return DecaySpectrum(ev[order], conserved[order], beta)
