"""Lagrangian flow-map bookkeeping and the nonlinear right-hand sides.

Convention: ``k[a, b] = int_0^t d_a v_b ds`` (derivative index first), so that
``d/dx_i = sum_j (delta_ij + V0_ij(k)) d/dy_j`` with ``I + V0(k) = (I + k)^-1``.
``k2[l, a, b] = int_0^t d_l d_a v_b ds`` carries the spatial derivatives of ``k``.

Pointwise helpers take tensors with their indices *trailing* (``(..., d, d)``);
grid-level functions take the grid layout (indices before the spatial axes) and
convert.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .closure import ClosureParams, omega_coefficients, solve_z
from .errors import InvariantError, SmallnessError
from .grid import Grid
from .state import AROUND_CONSTANT, AROUND_INITIAL, LinearCoeffs, RhsBundle, SimState

DEFAULT_DELTA = 0.1


# -- layout helpers ------------------------------------------------------------------

def _pointwise(T, nidx, dim):
    """Move ``nidx`` tensor axes sitting before the spatial axes to the end."""
    src = list(range(T.ndim - dim - nidx, T.ndim - dim))
    return np.moveaxis(T, src, list(range(T.ndim - nidx, T.ndim)))


def _gridwise(T, nidx, dim):
    src = list(range(T.ndim - nidx, T.ndim))
    return np.moveaxis(T, src, list(range(T.ndim - dim - nidx, T.ndim - dim)))


# -- pointwise algebra ---------------------------------------------------------------------

def v0_matrix(k, delta=None):
    """``(I + k)^-1 - I`` for stacked ``(..., d, d)`` matrices.

    With ``delta`` given, refuse entries ``max |k_ab| >= delta``; always refuse a
    non-positive Jacobian ``det(I + k)``.
    """
    k = np.asarray(k, dtype=float)
    if delta is not None:
        kmax = float(np.max(np.abs(k))) if k.size else 0.0
        if kmax >= delta:
            raise SmallnessError(f"|k| = {kmax:.3e} reached the smallness budget {delta}",
                                 budget=kmax, delta=delta)
    d = k.shape[-1]
    eye = np.eye(d)
    F = eye + k
    if np.any(np.linalg.det(F) <= 0):
        raise SmallnessError("I + k is singular or orientation-reversing")
    return np.linalg.inv(F) - eye


def v0_gradient(A, k2):
    """``d_l V0 = -A (d_l k) A``: the chain-rule contraction grad_k V0 : d_l k."""
    return -np.einsum("...ia,...lab,...bj->...lij", A, k2, A)


def laplacian_terms(A, dV, G, H):
    """Second- and first-order parts of ``Delta_x v - Delta_y v``.

    ``G[..., m, c] = d_m v_c``, ``H[..., l, m, c] = d_l d_m v_c``.  Returns
    ``(A2lap, A1lap)`` each shaped ``(..., d)``.
    """
    B = np.einsum("...kl,...km->...lm", A, A) - np.eye(A.shape[-1])
    second = np.einsum("...lm,...lmc->...c", B, H)
    first = np.einsum("...kl,...lkm,...mc->...c", A, dV, G)
    return second, first


def graddiv_terms(A, dV, G, H):
    """Second- and first-order parts of ``grad_x div_x v - grad_y div_y v``."""
    inner2 = np.einsum("...lm,...kml->...k", A, H)
    second = np.einsum("...jk,...k->...j", A, inner2) - np.einsum("...jll->...j", H)
    first = np.einsum("...jk,...klm,...ml->...j", A, dV, G)
    return second, first


def transported_divergence(V, G):
    """``sum_ij V_ij d_j v_i`` with ``G[..., j, i] = d_j v_i``."""
    return np.einsum("...ij,...ji->...", V, G)


# -- flow history --------------------------------------------------------------------------

@dataclass
class FlowHistory:
    """Accumulated velocity gradients of the flow map.

    Arrays follow the grid layout; a leading time axis is allowed.
    ``grad_budget`` is ``int_0^t ||grad v||_inf``.
    """

    k: np.ndarray
    k2: np.ndarray
    k_cell: np.ndarray
    grad_budget: np.ndarray | float
    delta: float = DEFAULT_DELTA

    @classmethod
    def zeros(cls, grid: Grid, delta=DEFAULT_DELTA):
        d = grid.dim
        return cls(np.zeros((d, d) + grid.shape), np.zeros((d, d, d) + grid.shape),
                   np.zeros((d, d) + grid.cell_shape), 0.0, float(delta))

    def at(self, n):
        return FlowHistory(self.k[n], self.k2[n], self.k_cell[n],
                           float(np.asarray(self.grad_budget)[n]), self.delta)

    def last(self):
        return self.at(-1)

    def jacobian(self, grid: Grid):
        """``J = det(I + k)`` on cells, the Lagrangian volume ratio."""
        kc = _pointwise(np.asarray(self.k_cell), 2, grid.dim)
        return np.linalg.det(np.eye(grid.dim) + kc)


def grad_sup(grid: Grid, v):
    """``||grad v||_inf`` per leading index (max over nodes and entries)."""
    G = grid.vector_grad(v)
    axes = tuple(range(G.ndim - grid.dim - 2, G.ndim))
    return np.max(np.abs(G), axis=axes)


def accumulate_history(grid: Grid, v, dt, start: FlowHistory):
    """Trapezoid-in-time accumulation along a velocity trajectory ``v[n]``.

    Level 0 of the result equals ``start``.
    """
    v = np.asarray(v, dtype=float)
    G = grid.vector_grad(v)
    H = grid.vector_hessian(v)
    Gc = grid.cell_vector_grad(v)
    sup = grad_sup(grid, v)

    def trap(X, x0):
        inc = 0.5 * dt * (X[1:] + X[:-1])
        out = np.empty_like(X)
        out[0] = x0
        out[1:] = x0 + np.cumsum(inc, axis=0)
        return out

    # H[l, m, c] = d_l d_m v_c  ->  k2[l, a, b] = int d_l d_a v_b, identical layout
    return FlowHistory(trap(G, start.k), trap(H, start.k2), trap(Gc, start.k_cell),
                       trap(sup, float(start.grad_budget)), start.delta)


def advance_history(grid: Grid, history: FlowHistory, v_old, v_new, dt):
    """One trapezoid step of the accumulators."""
    stacked = accumulate_history(grid, np.stack([v_old, v_new]), dt, history)
    return stacked.at(1)


# -- Lagrangian right-hand sides -----------------------------------------------------------------

def transport_rhs(grid: Grid, state: SimState, history: FlowHistory):
    """Cell fields ``O1 = -r sum V0_ij d_j v_i`` and ``O2`` (same with ``q``)."""
    d = grid.dim
    kc = _pointwise(np.asarray(history.k_cell), 2, d)
    V = v0_matrix(kc, history.delta)
    Gc = _pointwise(grid.cell_vector_grad(state.v), 2, d)
    tr = transported_divergence(V, Gc)
    return -state.r * tr, -state.q * tr


def _node_closure(grid, r, q, params):
    rn, qn = grid.to_nodes(r), grid.to_nodes(q)
    zn = solve_z(rn, qn, params)
    return rn, qn, np.asarray(zn)


def _check_denominators(z, r, params, label):
    g = params.gamma
    slack = 1.0 - 1e-12
    d1 = g * z - (g - 1.0) * r
    d2 = g * z**g - (g - 1.0) * r * z ** (g - 1.0)
    if np.any(d1 < z * slack) or np.any(d2 < z**g * slack):
        raise InvariantError(f"closure denominator fell below its lower bound ({label}); "
                             "R <= Z is violated")
    return d1, d2


def momentum_correction(grid: Grid, state: SimState, history: FlowHistory,
                        params: ClosureParams, closure_nodes=None):
    """``O3``: metric corrections of the viscous terms plus the pressure correction.

    ``mu (A2lap + A1lap) + nu (A2div + A1div) - omega1 V0 grad r - omega2 V0 grad q``
    on nodes; boundary rows are zeroed (they carry Dirichlet data).
    """
    d = grid.dim
    k = _pointwise(np.asarray(history.k), 2, d)
    k2 = _pointwise(np.asarray(history.k2), 3, d)
    A = v0_matrix(k, history.delta) + np.eye(d)
    V = A - np.eye(d)
    dV = v0_gradient(A, k2)
    G = _pointwise(grid.vector_grad(state.v), 2, d)
    H = _pointwise(grid.vector_hessian(state.v), 3, d)
    lap2, lap1 = laplacian_terms(A, dV, G, H)
    gd2, gd1 = graddiv_terms(A, dV, G, H)
    out = params.mu * (lap2 + lap1) + params.nu * (gd2 + gd1)
    if closure_nodes is None:
        closure_nodes = _node_closure(grid, state.r, state.q, params)
    rn, _, zn = closure_nodes
    _check_denominators(zn, rn, params, "state")
    w1, w2 = omega_coefficients(zn, rn, params)
    gr = _pointwise(grid.cell_grad(state.r), 1, d)
    gq = _pointwise(grid.cell_grad(state.q), 1, d)
    w1 = np.asarray(w1)[..., None]
    w2 = np.asarray(w2)[..., None]
    out = out - w1 * np.einsum("...ij,...j->...i", V, gr) - w2 * np.einsum("...ij,...j->...i", V, gq)
    return grid.zero_boundary(_gridwise(out, 1, d))


# -- the I / J fractions -------------------------------------------------------------------------

def i1_coefficient(r, z, r0, z0, params: ClosureParams):
    """Scalar factor multiplying grad sigma in I1 (J1 with starred data)."""
    g, gp = params.gamma, params.gamma_plus
    num = (g * (z0 * (z**gp - z0**gp) + z0**gp * (z0 - z))
           + (g - 1.0) * (z0**gp * (r - r0) + r0 * (z0**gp - z**gp)))
    den = (g * z0 - (g - 1.0) * r0) * (g * z - (g - 1.0) * r)
    return num / den


def i2_coefficient(r, z, r0, z0, params: ClosureParams):
    g, gp = params.gamma, params.gamma_plus
    num = g * (z0**gp * (z0**g - z**g) + z0**g * (z**gp - z0**gp))
    den = ((g * z**g - (g - 1.0) * r * z ** (g - 1.0))
           * (g * z0**g - (g - 1.0) * r0 * z0 ** (g - 1.0)))
    return num / den


def i3_coefficient(r, z, r0, z0, params: ClosureParams):
    g, gp = params.gamma, params.gamma_plus
    num = (g - 1.0) * (r * z0**gp * (z ** (g - 1.0) - z0 ** (g - 1.0))
                       + z0**gp * z0 ** (g - 1.0) * (r - r0)
                       + r0 * z0 ** (g - 1.0) * (z0**gp - z**gp))
    den = ((g * z**g - (g - 1.0) * r * z ** (g - 1.0))
           * (g * z0**g - (g - 1.0) * r0 * z0 ** (g - 1.0)))
    return num / den


def pressure_terms(grid: Grid, state: SimState, coeffs: LinearCoeffs, closure_nodes,
                   include_frozen_gradient=True):
    """``(I1, I2, I3, I4)`` as node vector fields (``I4`` zero when excluded)."""
    params = coeffs.params
    rn, _, zn = closure_nodes
    r0n, z0n = coeffs.r0_nodes, coeffs.z0_nodes
    _check_denominators(z0n, r0n, params, "frozen")
    _check_denominators(zn, rn, params, "state")
    sigma = state.r - coeffs.r0
    eta = state.q - coeffs.q0
    gs = grid.cell_grad(sigma)
    ge = grid.cell_grad(eta)
    expand = lambda c: np.expand_dims(c, axis=-grid.dim - 1)
    I1 = expand(i1_coefficient(rn, zn, r0n, z0n, params)) * gs
    I2 = expand(i2_coefficient(rn, zn, r0n, z0n, params)) * ge
    I3 = expand(i3_coefficient(rn, zn, r0n, z0n, params)) * ge
    if include_frozen_gradient:
        w1, w2 = omega_coefficients(zn, rn, params)
        I4 = expand(np.asarray(w1)) * grid.cell_grad(coeffs.r0) \
            + expand(np.asarray(w2)) * grid.cell_grad(coeffs.q0)
    else:
        I4 = np.zeros_like(I1)
    return I1, I2, I3, I4


def _rhs(grid, state, history, coeffs, include_frozen_gradient, mode):
    state.check(grid)
    params = coeffs.params
    sigma = state.r - coeffs.r0
    eta = state.q - coeffs.q0
    O1, O2 = transport_rhs(grid, state, history)
    divc = grid.cell_div(state.v)
    f1 = O1 - sigma * divc
    f2 = O2 - eta * divc
    nodes = _node_closure(grid, state.r, state.q, params)
    O3 = momentum_correction(grid, state, history, params, closure_nodes=nodes)
    I1, I2, I3, I4 = pressure_terms(grid, state, coeffs, nodes, include_frozen_gradient)
    f3 = O3 - I1 - I2 - I3 - I4
    if state.dvdt is not None:
        pert_nodes = grid.to_nodes(sigma + eta)
        f3 = f3 - np.expand_dims(pert_nodes, axis=-grid.dim - 1) * state.dvdt
    return RhsBundle(f1, f2, grid.zero_boundary(f3), mode)


def rhs_local(grid: Grid, state: SimState, history: FlowHistory, coeffs: LinearCoeffs):
    """``(f1, f2, f3)`` of the system linearised around the frozen data ``coeffs``."""
    return _rhs(grid, state, history, coeffs, True, AROUND_INITIAL)


def rhs_global(grid: Grid, state: SimState, history: FlowHistory, coeffs: LinearCoeffs):
    """``(g1, g2, g3)`` around constant data: same terms, no frozen-gradient term."""
    return _rhs(grid, state, history, coeffs, False, AROUND_CONSTANT)
