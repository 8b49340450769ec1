"""Uniform structured grids in one or two dimensions.

Velocities live on the nodes (Dirichlet data on the boundary nodes) and the
densities on cell centres, one cell between each pair of neighbouring nodes.
The node-to-cell divergence and the cell-to-node gradient are then compact, so
the density/pressure coupling has no grid-scale null modes beyond the single 2D
checkerboard of the cell-vertex arrangement.

Fields are plain numpy arrays with the spatial axes last:

* node scalar ``(..., *grid.shape)``
* node vector ``(..., d, *grid.shape)``
* cell scalar ``(..., *grid.cell_shape)``

Leading axes are treated as a batch (time levels, components, ...).
"""

from __future__ import annotations

import csv
from functools import cached_property, reduce
from math import prod

import numpy as np
import scipy.sparse as sp

from .errors import ShapeError


def _first_derivative(n, h, periodic):
    if periodic:
        m = sp.diags([-0.5, 0.5], [-1, 1], shape=(n, n), format="lil")
        m[0, n - 1] = -0.5
        m[n - 1, 0] = 0.5
        return (m / h).tocsr()
    m = sp.diags([-0.5, 0.5], [-1, 1], shape=(n, n), format="lil")
    m[0, :3] = [-1.5, 2.0, -0.5]
    m[n - 1, n - 3:] = [0.5, -2.0, 1.5]
    return (m / h).tocsr()


def _second_derivative(n, h, periodic):
    m = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n), format="lil")
    if periodic:
        m[0, n - 1] = 1.0
        m[n - 1, 0] = 1.0
    elif n >= 4:
        m[0, :4] = [2.0, -5.0, 4.0, -1.0]
        m[n - 1, n - 4:] = [-1.0, 4.0, -5.0, 2.0]
    else:
        m[0, :3] = [1.0, -2.0, 1.0]
        m[n - 1, n - 3:] = [1.0, -2.0, 1.0]
    return (m / h**2).tocsr()


def _node_to_cell_diff(n, h, periodic):
    nc = n if periodic else n - 1
    m = sp.lil_matrix((nc, n))
    for i in range(nc):
        m[i, i] = -1.0
        m[i, (i + 1) % n] = 1.0
    return (m / h).tocsr()


def _node_to_cell_avg(n, periodic):
    nc = n if periodic else n - 1
    m = sp.lil_matrix((nc, n))
    for i in range(nc):
        m[i, i] = 0.5
        m[i, (i + 1) % n] = 0.5
    return m.tocsr()


def _cell_to_node_diff(n, h, periodic):
    if periodic:
        m = sp.lil_matrix((n, n))
        for i in range(n):
            m[i, i] = 1.0
            m[i, (i - 1) % n] = -1.0
        return (m / h).tocsr()
    nc = n - 1
    m = sp.lil_matrix((n, nc))
    for i in range(1, n - 1):
        m[i, i - 1] = -1.0
        m[i, i] = 1.0
    if nc >= 3:
        # one-sided, second order from cells at h/2, 3h/2, 5h/2
        m[0, :3] = [-2.0, 3.0, -1.0]
        m[n - 1, nc - 3:] = [1.0, -3.0, 2.0]
    else:
        m[0, :2] = [-1.0, 1.0]
        m[n - 1, nc - 2:] = [-1.0, 1.0]
    return (m / h).tocsr()


def _cell_to_node_avg(n, periodic):
    if periodic:
        m = sp.lil_matrix((n, n))
        for i in range(n):
            m[i, i] = 0.5
            m[i, (i - 1) % n] = 0.5
        return m.tocsr()
    nc = n - 1
    m = sp.lil_matrix((n, nc))
    for i in range(1, n - 1):
        m[i, i - 1] = 0.5
        m[i, i] = 0.5
    # boundary nodes take the adjacent cell; they only feed Dirichlet rows
    m[0, 0] = 1.0
    m[n - 1, nc - 1] = 1.0
    return m.tocsr()


def _kron_all(factors):
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), factors).tocsr()


class Grid:
    """Uniform node grid on an interval or rectangle.

    Parameters
    ----------
    shape : int or tuple of int
        Node counts per axis (at least 3 each).
    lower, upper : float or tuple of float
        Domain bounds per axis.
    periodic : bool
        Periodic in every axis.  The last node is then identified with
        ``upper`` wrapping onto ``lower`` and is not stored.
    """

    def __init__(self, shape, lower=0.0, upper=1.0, periodic=False):
        shape = (int(shape),) if np.ndim(shape) == 0 else tuple(int(s) for s in shape)
        if len(shape) not in (1, 2):
            raise ShapeError(f"only 1D and 2D grids are supported, got shape {shape}")
        if min(shape) < 3:
            raise ShapeError(f"need at least 3 nodes per axis, got {shape}")
        dim = len(shape)
        lower = (float(lower),) * dim if np.ndim(lower) == 0 else tuple(map(float, lower))
        upper = (float(upper),) * dim if np.ndim(upper) == 0 else tuple(map(float, upper))
        if len(lower) != dim or len(upper) != dim:
            raise ShapeError("bounds do not match the grid dimension")
        if any(u <= l for l, u in zip(lower, upper)):
            raise ShapeError("upper bounds must exceed lower bounds")
        self.shape = shape
        self.dim = dim
        self.lower = lower
        self.upper = upper
        self.periodic = bool(periodic)
        if self.periodic:
            self.spacing = tuple((u - l) / n for l, u, n in zip(lower, upper, shape))
            self.cell_shape = shape
        else:
            self.spacing = tuple((u - l) / (n - 1) for l, u, n in zip(lower, upper, shape))
            self.cell_shape = tuple(n - 1 for n in shape)

    def __repr__(self):
        return (f"Grid(shape={self.shape}, lower={self.lower}, upper={self.upper}, "
                f"periodic={self.periodic})")

    @property
    def n_nodes(self):
        return prod(self.shape)

    @property
    def n_cells(self):
        return prod(self.cell_shape)

    # -- coordinates -------------------------------------------------------

    def axes(self):
        return [l + h * np.arange(n) for l, h, n in zip(self.lower, self.spacing, self.shape)]

    def cell_axes(self):
        return [l + h * (np.arange(n) + 0.5)
                for l, h, n in zip(self.lower, self.spacing, self.cell_shape)]

    def mesh(self):
        """Node coordinates, shape ``(d, *shape)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"))

    def cell_mesh(self):
        return np.stack(np.meshgrid(*self.cell_axes(), indexing="ij"))

    @cached_property
    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        if self.periodic:
            return mask
        for ax in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = -1
            mask[tuple(idx)] = True
        return mask

    @property
    def interior_mask(self):
        return ~self.boundary_mask

    def zero_boundary(self, v):
        """Copy of a node field with boundary values set to exactly zero."""
        v = np.array(v, dtype=np.result_type(v, float))
        v[..., self.boundary_mask] = 0
        return v

    # -- sparse operators (flattened C order) ---------------------------------

    def _factors(self, ax, on_axis, off_axis):
        return [on_axis(i) if i == ax else off_axis(i) for i in range(self.dim)]

    def _eye(self, i):
        return sp.identity(self.shape[i], format="csr")

    @cached_property
    def _d1(self):
        return [_kron_all(self._factors(a, lambda i: _first_derivative(
            self.shape[i], self.spacing[i], self.periodic), self._eye)) for a in range(self.dim)]

    @cached_property
    def _d2(self):
        return [_kron_all(self._factors(a, lambda i: _second_derivative(
            self.shape[i], self.spacing[i], self.periodic), self._eye)) for a in range(self.dim)]

    @cached_property
    def _hess(self):
        """Matrices for d^2/dy_l dy_m on nodes."""
        return [[self._d2[l] if l == m else (self._d1[l] @ self._d1[m]).tocsr()
                 for m in range(self.dim)] for l in range(self.dim)]

    @cached_property
    def _n2c_avg(self):
        return _kron_all([_node_to_cell_avg(n, self.periodic) for n in self.shape])

    @cached_property
    def _c2n_avg(self):
        return _kron_all([_cell_to_node_avg(n, self.periodic) for n in self.shape])

    @cached_property
    def _n2c_diff(self):
        return [_kron_all(self._factors(
            a, lambda i: _node_to_cell_diff(self.shape[i], self.spacing[i], self.periodic),
            lambda i: _node_to_cell_avg(self.shape[i], self.periodic))) for a in range(self.dim)]

    @cached_property
    def _c2n_diff(self):
        return [_kron_all(self._factors(
            a, lambda i: _cell_to_node_diff(self.shape[i], self.spacing[i], self.periodic),
            lambda i: _cell_to_node_avg(self.shape[i], self.periodic))) for a in range(self.dim)]

    def matrix(self, name, axis=None, axis2=None):
        """Sparse operator matrix by name.

        ``d1``/``d2`` (node->node along ``axis``), ``hess`` (``axis``, ``axis2``),
        ``fwd`` (node->cell difference), ``bwd`` (cell->node difference),
        ``n2c``/``c2n`` (averaging).
        """
        if name == "d1":
            return self._d1[axis]
        if name == "d2":
            return self._d2[axis]
        if name == "hess":
            return self._hess[axis][axis2]
        if name == "fwd":
            return self._n2c_diff[axis]
        if name == "bwd":
            return self._c2n_diff[axis]
        if name == "n2c":
            return self._n2c_avg
        if name == "c2n":
            return self._c2n_avg
        raise KeyError(name)

    # -- batched field operators ------------------------------------------------

    def _apply(self, M, f, in_shape, out_shape):
        f = np.asarray(f)
        k = len(in_shape)
        if f.ndim < k or f.shape[f.ndim - k:] != tuple(in_shape):
            raise ShapeError(f"field of shape {f.shape} does not end in {tuple(in_shape)}")
        lead = f.shape[: f.ndim - k]
        flat = f.reshape(-1, prod(in_shape))
        out = (M @ flat.T).T
        return np.asarray(out).reshape(lead + tuple(out_shape))

    def _node(self, M, f):
        return self._apply(M, f, self.shape, self.shape)

    def _check_vector(self, v):
        v = np.asarray(v)
        if v.ndim < self.dim + 1 or v.shape[v.ndim - self.dim - 1] != self.dim:
            raise ShapeError(f"expected a vector field (..., {self.dim}, *{self.shape}), "
                             f"got {v.shape}")
        return v

    def _vcomp(self, v, c):
        return v[(Ellipsis, c) + (slice(None),) * self.dim]

    def grad(self, f):
        """Node gradient of a node scalar, ``(..., d, *shape)``."""
        return np.stack([self._node(self._d1[a], f) for a in range(self.dim)], axis=-self.dim - 1)

    def div(self, v):
        v = self._check_vector(v)
        return sum(self._node(self._d1[a], self._vcomp(v, a)) for a in range(self.dim))

    def laplacian(self, f):
        """Componentwise node Laplacian (any leading axes)."""
        return sum(self._node(self._d2[a], f) for a in range(self.dim))

    def hessian(self, f):
        """``H[..., l, m, *shape] = d_l d_m f`` for a node scalar."""
        rows = [np.stack([self._node(self._hess[l][m], f) for m in range(self.dim)],
                         axis=-self.dim - 1) for l in range(self.dim)]
        return np.stack(rows, axis=-self.dim - 2)

    def grad_div(self, v):
        v = self._check_vector(v)
        return np.stack([sum(self._node(self._hess[i][j], self._vcomp(v, j))
                             for j in range(self.dim)) for i in range(self.dim)],
                        axis=-self.dim - 1)

    def vector_grad(self, v):
        """``G[..., a, b, *shape] = d_a v_b`` on nodes."""
        v = self._check_vector(v)
        return np.stack([np.stack([self._node(self._d1[a], self._vcomp(v, b))
                                   for b in range(self.dim)], axis=-self.dim - 1)
                         for a in range(self.dim)], axis=-self.dim - 2)

    def vector_hessian(self, v):
        """``H[..., l, m, c, *shape] = d_l d_m v_c`` on nodes."""
        v = self._check_vector(v)
        comps = np.stack([self.hessian(self._vcomp(v, c)) for c in range(self.dim)],
                         axis=-self.dim - 1)
        return comps

    def cell_vector_grad(self, v):
        """``G[..., a, b, *cell_shape] = d_a v_b`` at cell centres."""
        v = self._check_vector(v)
        return np.stack([np.stack([self._apply(self._n2c_diff[a], self._vcomp(v, b),
                                               self.shape, self.cell_shape)
                                   for b in range(self.dim)], axis=-self.dim - 1)
                         for a in range(self.dim)], axis=-self.dim - 2)

    def cell_div(self, v):
        v = self._check_vector(v)
        return sum(self._apply(self._n2c_diff[a], self._vcomp(v, a), self.shape, self.cell_shape)
                   for a in range(self.dim))

    def cell_grad(self, c):
        """Gradient of a cell scalar evaluated on nodes, ``(..., d, *shape)``."""
        return np.stack([self._apply(self._c2n_diff[a], c, self.cell_shape, self.shape)
                         for a in range(self.dim)], axis=-self.dim - 1)

    def to_cells(self, f):
        return self._apply(self._n2c_avg, f, self.shape, self.cell_shape)

    def to_nodes(self, c):
        return self._apply(self._c2n_avg, c, self.cell_shape, self.shape)

    # -- quadrature -----------------------------------------------------------------

    @cached_property
    def node_weights(self):
        """Composite trapezoid weights on nodes."""
        ws = []
        for n, h in zip(self.shape, self.spacing):
            w = np.full(n, h)
            if not self.periodic:
                w[0] = w[-1] = 0.5 * h
            ws.append(w)
        return reduce(np.multiply.outer, ws)

    @cached_property
    def cell_weights(self):
        return np.full(self.cell_shape, prod(self.spacing))

    def weights_for(self, field):
        shape = np.shape(field)[-self.dim:]
        if shape == self.shape:
            return self.node_weights
        if shape == self.cell_shape:
            return self.cell_weights
        raise ShapeError(f"field shape {np.shape(field)} matches neither nodes {self.shape} "
                         f"nor cells {self.cell_shape}")

    def integrate(self, field, weight=None):
        """Trapezoid (nodes) or midpoint (cells) quadrature over the spatial axes."""
        field = np.asarray(field)
        w = self.weights_for(field)
        if weight is not None:
            weight = np.asarray(weight)
            if weight.shape[-self.dim:] != field.shape[-self.dim:]:
                raise ShapeError("weight and field live on different locations")
            field = field * weight
        axes = tuple(range(field.ndim - self.dim, field.ndim))
        return np.sum(field * w, axis=axes)

    def lq_norm(self, field, q=2.0, axes_extra=()):
        """Discrete L_q norm over space; extra leading axes in ``axes_extra`` are summed
        pointwise (e.g. vector components) before integration."""
        a = np.abs(np.asarray(field)) ** q
        if axes_extra:
            a = np.sum(a, axis=axes_extra)
        return self.integrate(a) ** (1.0 / q)

    # -- serialisation -----------------------------------------------------------------

    def to_csv(self, path, fields, location="node"):
        """Write fields sharing one location to CSV with 17 significant digits.

        ``fields`` maps column names to arrays of the location's shape; vector
        fields ``(d, *shape)`` are split into ``name_0``, ``name_1`` ... columns.
        """
        if location == "node":
            shape, coords = self.shape, self.mesh()
        elif location == "cell":
            shape, coords = self.cell_shape, self.cell_mesh()
        else:
            raise ValueError(location)
        names = ["index"] + [f"x{a}" for a in range(self.dim)]
        cols = [np.arange(prod(shape))] + [c.ravel() for c in coords]
        for name, arr in fields.items():
            arr = np.asarray(arr)
            if arr.shape == shape:
                names.append(name)
                cols.append(arr.ravel())
            elif arr.shape == (self.dim,) + shape:
                for a in range(self.dim):
                    names.append(f"{name}_{a}")
                    cols.append(arr[a].ravel())
            else:
                raise ShapeError(f"field {name!r} has shape {arr.shape}, expected {shape}")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for row in zip(*cols):
                w.writerow([str(int(row[0]))] + [format(float(x), ".17g") for x in row[1:]])


def diff_ops(grid: Grid, field, which: str):
    """Dispatch to the named node operator: grad, div, laplacian or grad_div."""
    ops = {"grad": grid.grad, "div": grid.div, "laplacian": grid.laplacian,
           "grad_div": grid.grad_div}
    try:
        op = ops[which]
    except KeyError:
        raise ValueError(f"unknown operator {which!r}; choose from {sorted(ops)}") from None
    return op(field)


def read_csv(path):
    """Read a field CSV back into a dict of column arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], np.array(rows[1:], dtype=float)
    return {name: data[:, i] for i, name in enumerate(header)}
