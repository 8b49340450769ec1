"""Manufactured solutions for the linear system in one dimension.

The exact fields are ``a(t)`` times fixed spatial profiles.  With
``a(t) = 1 + t`` implicit Euler has no time truncation error, so the
measured error is purely spatial; ``a(t) = exp(-t)`` on a fine grid isolates
the time error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .closure import ClosureParams, omega_coefficients, solve_z
from .errors import DomainError
from .grid import Grid
from .linear_core import eliminate_density, linear_step
from .state import LinearCoeffs, RhsBundle

PI = np.pi


def _amplitude(kind):
    if kind == "linear":
        return (lambda t: 1.0 + t), (lambda t: 1.0)
    if kind == "exp":
        return (lambda t: np.exp(-t)), (lambda t: -np.exp(-t))
    raise DomainError(f"unknown time profile {kind!r}")


def r0_profile(y):
    return 1.0 + 0.2 * np.sin(PI * y)


def q0_profile(y):
    return 0.8 + 0.1 * y


def exact_fields(y_cells, y_nodes, t, kind="linear"):
    a, _ = _amplitude(kind)
    s = a(t) * np.cos(PI * y_cells)
    e = a(t) * 0.5 * np.cos(2 * PI * y_cells)
    v = a(t) * np.sin(PI * y_nodes)
    return s, e, v[None]


def forcing(grid: Grid, params: ClosureParams, t, kind="linear"):
    """Analytic right-hand sides at time ``t`` for the manufactured fields."""
    a, da = _amplitude(kind)
    yc = grid.cell_axes()[0]
    yn = grid.axes()[0]
    r0c, q0c = r0_profile(yc), q0_profile(yc)
    vy_c = a(t) * PI * np.cos(PI * yc)
    f1 = da(t) * np.cos(PI * yc) + r0c * vy_c
    f2 = da(t) * 0.5 * np.cos(2 * PI * yc) + q0c * vy_c
    r0n, q0n = r0_profile(yn), q0_profile(yn)
    zn = solve_z(r0n, q0n, params)
    w1, w2 = omega_coefficients(zn, r0n, params)
    sy = -a(t) * PI * np.sin(PI * yn)
    ey = -a(t) * PI * np.sin(2 * PI * yn)
    vyy = -a(t) * PI**2 * np.sin(PI * yn)
    f3 = ((r0n + q0n) * da(t) * np.sin(PI * yn) - (params.mu + params.nu) * vyy
          + w1 * sy + w2 * ey)
    return RhsBundle(f1, f2, grid.zero_boundary(f3[None]))


@dataclass
class MMSResult:
    nodes: int
    dt: float
    err_sigma: float
    err_eta: float
    err_v: float

    @property
    def error(self):
        return max(self.err_sigma, self.err_eta, self.err_v)


def run_mms(nodes, dt, T=1.0, kind="linear", params=None):
    """March the manufactured problem to ``T``; max-norm errors at the end."""
    params = params or ClosureParams()
    grid = Grid(nodes)
    yc, yn = grid.cell_axes()[0], grid.axes()[0]
    coeffs = LinearCoeffs.from_cells(grid, r0_profile(yc), q0_profile(yc), params)
    op = eliminate_density(grid, coeffs, dt)
    steps = int(round(T / dt))
    s, e, v = exact_fields(yc, yn, 0.0, kind)
    for n in range(steps):
        s, e, v = linear_step(op, s, e, v, forcing(grid, params, (n + 1) * dt, kind))
    se, ee, ve = exact_fields(yc, yn, steps * dt, kind)
    return MMSResult(nodes, dt, float(np.max(abs(s - se))), float(np.max(abs(e - ee))),
                     float(np.max(abs(v - ve))))


def observed_orders(errors, sizes):
    """Orders ``log(e_i / e_{i+1}) / log(s_i / s_{i+1})`` between successive runs."""
    e = np.asarray(errors, dtype=float)
    s = np.asarray(sizes, dtype=float)
    return np.log(e[:-1] / e[1:]) / np.log(s[:-1] / s[1:])


def spatial_study(nodes=(17, 33, 65), dt=0.1, T=1.0, params=None):
    runs = [run_mms(n, dt, T, "linear", params) for n in nodes]
    h = [1.0 / (n - 1) for n in nodes]
    return runs, observed_orders([r.error for r in runs], h)


def temporal_study(dts=(0.1, 0.05, 0.025), nodes=257, T=1.0, params=None):
    runs = [run_mms(nodes, dt, T, "exp", params) for dt in dts]
    return runs, observed_orders([r.error for r in runs], dts)
