"""Algebraic pressure closure.

Equal phase pressures (rho+)^gamma_plus = (rho-)^gamma_minus, together with the
partial densities R = alpha rho+, Q = (1 - alpha) rho-, determine Z = rho+
implicitly through

    Q = (1 - R/Z) Z**gamma,   gamma = gamma_plus / gamma_minus,   R <= Z,

and the mixture pressure is p = Z**gamma_plus.  Everything here is vectorised:
scalars in give floats out, arrays in give arrays out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvariantError, SingularityError, SolverError

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 100


@dataclass(frozen=True)
class ClosureParams:
    """Pressure exponents and viscosities.

    ``mu`` multiplies the Laplacian and ``nu`` the grad-div term of the momentum
    equation.  Only ``mu > 0`` and ``mu + nu > 0`` are accepted so the velocity
    block stays parabolic.
    """

    gamma_plus: float = 3.0
    gamma_minus: float = 1.5
    mu: float = 1.0
    nu: float = 0.0

    def __post_init__(self):
        gp, gm = float(self.gamma_plus), float(self.gamma_minus)
        if not (gm > 1.0):
            raise DomainError(f"gamma_minus must be > 1, got {gm}")
        if gp < gm:
            raise DomainError(f"gamma_plus ({gp}) must be >= gamma_minus ({gm})")
        if not (self.mu > 0.0):
            raise DomainError(f"mu must be > 0, got {self.mu}")
        if not (self.mu + self.nu > 0.0):
            raise DomainError(f"mu + nu must be > 0, got {self.mu + self.nu}")

    @property
    def gamma(self) -> float:
        return self.gamma_plus / self.gamma_minus


@dataclass(frozen=True)
class PhasePoint:
    R: float
    Q: float
    Z: float
    alpha: float
    rho_plus: float
    rho_minus: float  # nan when the minus phase is absent
    p: float
    minus_vacuum: bool


def _as_float(x):
    return float(x) if np.ndim(x) == 0 else x


def z_bracket(R, Q, gamma):
    """Bracket [lower, upper] containing Z(R, Q).

    upper = max((2Q)**(1/gamma), 2R).  For the lower end, k = R + Q <= Z + Z**gamma
    gives lower = max(R, min(k/2, (k/2)**(1/gamma))).  The exponent is 1/gamma:
    with gamma in its place the bound exceeds the root once k > 2.
    """
    R = np.asarray(R, dtype=float)
    Q = np.asarray(Q, dtype=float)
    half = 0.5 * (R + Q)
    lo = np.maximum(R, np.minimum(half, half ** (1.0 / gamma)))
    hi = np.maximum((2.0 * Q) ** (1.0 / gamma), 2.0 * R)
    return lo, hi


def closure_residual(Z, R, Q, gamma):
    """G(Z) = (1 - R/Z) Z**gamma - Q, written without the division."""
    Z = np.asarray(Z, dtype=float)
    return Z ** (gamma - 1.0) * (Z - R) - Q


def solve_z(R, Q, params: ClosureParams, tol: float = DEFAULT_TOL,
            max_iter: int = DEFAULT_MAX_ITER):
    """Solve the closure for Z with safeguarded Newton inside an a priori bracket.

    G is increasing and convex on [R, inf), so Newton started from the upper
    bound decreases monotonically onto the root; bisection only kicks in if a
    step leaves the bracket through round-off.  Convergence is declared when the
    Newton correction reaches round-off and ``|G| <= tol * max(1, Q, Z**gamma)``;
    the scaling keeps the check attainable when Z - R cancels in floating point.
    """
    R_in, Q_in = R, Q
    R = np.asarray(R, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R, Q = np.broadcast_arrays(R, Q)
    if tol <= 0:
        raise DomainError("tol must be positive")
    if np.any(~np.isfinite(R)) or np.any(~np.isfinite(Q)):
        raise DomainError("non-finite partial density")
    if np.any(R < 0) or np.any(Q < 0):
        raise DomainError("partial densities must be non-negative")
    if np.any(R + Q <= 0):
        raise DomainError("total vacuum R + Q = 0 has no closure solution")

    g = params.gamma
    Z = np.empty(R.shape, dtype=float)
    pure_plus = Q == 0.0
    pure_minus = (R == 0.0) & ~pure_plus
    Z[pure_plus] = R[pure_plus]
    Z[pure_minus] = Q[pure_minus] ** (1.0 / g)
    mixed = ~(pure_plus | pure_minus)
    if np.any(mixed):
        Z[mixed] = _newton(R[mixed], Q[mixed], g, tol, max_iter)
    if np.ndim(R_in) == 0 and np.ndim(Q_in) == 0:
        return float(Z.reshape(()))
    return Z


def _newton(R, Q, g, tol, max_iter):
    lo, hi = z_bracket(R, Q, g)
    # the bracket bounds are exact; round-off can only push them by an ulp
    lo = np.where(closure_residual(lo, R, Q, g) > 0, R, lo)
    hi = np.where(closure_residual(hi, R, Q, g) < 0, hi * (1 + 1e-12) + 1e-300, hi)
    z = hi.copy()
    active = np.ones(z.shape, dtype=bool)
    scale = np.maximum(np.maximum(1.0, Q), hi**g)
    for _ in range(max_iter):
        if not active.any():
            break
        za, Ra, Qa = z[active], R[active], Q[active]
        G = closure_residual(za, Ra, Qa, g)
        dG = za ** (g - 2.0) * (g * za - (g - 1.0) * Ra)
        pos = G > 0
        hi_a, lo_a = hi[active], lo[active]
        hi_a = np.where(pos, za, hi_a)
        lo_a = np.where(~pos, za, lo_a)
        step = np.where(dG > 0, G / np.where(dG > 0, dG, 1.0), np.inf)
        znew = za - step
        outside = ~((znew >= lo_a) & (znew <= hi_a)) | ~np.isfinite(znew)
        znew = np.where(outside, 0.5 * (lo_a + hi_a), znew)
        done = (G == 0.0) | ((np.abs(znew - za) <= 4 * np.finfo(float).eps * za)
                             & (np.abs(G) <= tol * scale[active]))
        z[active] = np.where(G == 0.0, za, znew)
        hi[active], lo[active] = hi_a, lo_a
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    res = np.abs(closure_residual(z, R, Q, g))
    bad = (res > tol * np.maximum(np.maximum(1.0, Q), z**g)) | ~np.isfinite(z)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise SolverError(
            f"closure solve did not converge at R={R[i]!r}, Q={Q[i]!r}",
            residual=float(res[i]), bracket=(float(lo[i]), float(hi[i])))
    return z


def _check_zr(Z, R):
    Z = np.asarray(Z, dtype=float)
    R = np.asarray(R, dtype=float)
    if np.any(Z <= 0):
        raise SingularityError("closure derivatives are singular at Z = 0")
    return Z, R


def closure_derivatives(Z, R, params: ClosureParams):
    """Partial derivatives (dZ/dR, dZ/dQ) by implicit differentiation.

    dZ/dQ = 1 / (g Z^(g-1) - R (g-1) Z^(g-2)),  dZ/dR = Z^(g-1) dZ/dQ.
    """
    Z, R = _check_zr(Z, R)
    g = params.gamma
    denom = g * Z ** (g - 1.0) - R * (g - 1.0) * Z ** (g - 2.0)
    dZ_dQ = 1.0 / denom
    dZ_dR = Z ** (g - 1.0) / denom
    return _as_float(dZ_dR), _as_float(dZ_dQ)


def omega_coefficients(Z, R, params: ClosureParams):
    """Pressure sensitivities omega1 = Z^(g+ - 1) dZ/dR, omega2 = Z^(g+ - 1) dZ/dQ."""
    Z, R = _check_zr(Z, R)
    g, gp = params.gamma, params.gamma_plus
    zp = Z**gp
    omega1 = zp / (g * Z - (g - 1.0) * R)
    omega2 = zp / (g * Z**g - (g - 1.0) * R * Z ** (g - 1.0))
    return _as_float(omega1), _as_float(omega2)


def pressure(Z, params: ClosureParams):
    return _as_float(np.asarray(Z, dtype=float) ** params.gamma_plus)


def recover_phases(R: float, Q: float, Z: float, params: ClosureParams,
                   tol: float = 1e-10) -> PhasePoint:
    """Volume fraction and phase densities from a solved closure point."""
    R, Q, Z = float(R), float(Q), float(Z)
    if Z <= 0:
        raise SingularityError("Z must be positive")
    alpha = R / Z
    if alpha > 1.0 + tol or alpha < 0.0:
        raise InvariantError(f"volume fraction {alpha} outside [0, 1]")
    alpha = min(alpha, 1.0)
    p = Z**params.gamma_plus
    vacuum = Q == 0.0 or alpha >= 1.0
    rho_minus = math.nan if vacuum else Q / (1.0 - alpha)
    return PhasePoint(R=R, Q=Q, Z=Z, alpha=alpha, rho_plus=Z, rho_minus=rho_minus,
                      p=p, minus_vacuum=vacuum)


def recover_phase_fields(R, Q, Z):
    """Array version returning (alpha, rho_minus); rho_minus is nan where Q = 0."""
    R = np.asarray(R, dtype=float)
    Q = np.asarray(Q, dtype=float)
    Z = np.asarray(Z, dtype=float)
    alpha = R / Z
    with np.errstate(divide="ignore", invalid="ignore"):
        rho_minus = np.where(alpha < 1.0, Q / (1.0 - alpha), np.nan)
    return alpha, rho_minus
