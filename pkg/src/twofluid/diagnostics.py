"""Discrete solution norms, run monitors and decay-rate fitting.

Sobolev norms are sums of the L_q norms of the derivatives up to the stated
order, each derivative tensor measured by its pointwise Euclidean magnitude.
Time integrals use the trapezoid rule over the stored levels and time
derivatives ``np.gradient`` (second order, one-sided at the ends).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .closure import ClosureParams, solve_z
from .errors import DomainError, ShapeError
from .grid import Grid
from .state import Trajectory

REPORT_KEYS = (
    "p", "q", "T",
    "v_lp_w2q", "vt_lp_lq", "dens_w1p_w1q", "x_norm",
    "grad_dens_lp_lq", "dens_t_lp_w1q", "xdot_norm",
    "grad_budget", "delta", "mass_r", "mass_q", "mass_drift",
    "alpha_min", "alpha_max", "r_minus_z_max",
    "beta_fit", "beta_residual", "beta_reliable", "holder_factor",
)


def _time_lp(times, values, p):
    values = np.asarray(values, dtype=float)
    if len(times) == 1:
        return 0.0
    return float(np.trapezoid(values**p, times) ** (1.0 / p))


def time_derivative(times, X):
    if len(times) < 2:
        raise ShapeError("a time derivative needs at least two levels")
    return np.gradient(X, times, axis=0, edge_order=2 if len(times) > 2 else 1)


def _vec_lq(grid: Grid, X, nidx, q):
    """L_q over space of the Euclidean norm across ``nidx`` tensor axes."""
    axes = tuple(range(X.ndim - grid.dim - nidx, X.ndim - grid.dim))
    return grid.lq_norm(X, q, axes_extra=axes) if nidx else grid.lq_norm(X, q)


def velocity_w2q(grid: Grid, v, q):
    """``||v||_{W^2_q}`` per leading index of a node vector field."""
    return (_vec_lq(grid, v, 1, q) + _vec_lq(grid, grid.vector_grad(v), 2, q)
            + _vec_lq(grid, grid.vector_hessian(v), 3, q))


def density_lq(grid: Grid, sigma, eta, q):
    s = np.stack([sigma, eta], axis=-grid.dim - 1)
    return _vec_lq(grid, s, 1, q)


def density_grad_lq(grid: Grid, sigma, eta, q):
    g = np.stack([grid.cell_grad(sigma), grid.cell_grad(eta)], axis=-grid.dim - 2)
    return _vec_lq(grid, g, 2, q)


def density_w1q(grid: Grid, sigma, eta, q):
    return density_lq(grid, sigma, eta, q) + density_grad_lq(grid, sigma, eta, q)


@dataclass
class NormReport:
    """Components of the discrete solution norm and seminorm plus monitors."""

    p: float
    q: float
    T: float
    v_lp_w2q: float
    vt_lp_lq: float
    dens_w1p_w1q: float
    grad_dens_lp_lq: float
    dens_t_lp_w1q: float
    grad_budget: float = float("nan")
    delta: float = float("nan")
    mass_r: float = float("nan")
    mass_q: float = float("nan")
    mass_drift: float = float("nan")
    alpha_min: float = float("nan")
    alpha_max: float = float("nan")
    r_minus_z_max: float = float("nan")
    beta_fit: float = float("nan")
    beta_residual: float = float("nan")
    beta_reliable: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def x_norm(self):
        return self.v_lp_w2q + self.vt_lp_lq + self.dens_w1p_w1q

    @property
    def xdot_norm(self):
        return self.v_lp_w2q + self.vt_lp_lq + self.grad_dens_lp_lq + self.dens_t_lp_w1q

    @property
    def x_components(self):
        return (self.v_lp_w2q, self.vt_lp_lq, self.dens_w1p_w1q)

    @property
    def holder_factor(self):
        """``T^(1 - 1/p)``: the factor gained when an L_1-in-time quantity is
        bounded by its L_p norm; it shows how smallness in T enters."""
        return self.T ** (1.0 - 1.0 / self.p)

    def to_dict(self):
        d = asdict(self)
        d.pop("extra")
        d["x_norm"] = self.x_norm
        d["xdot_norm"] = self.xdot_norm
        d["holder_factor"] = self.holder_factor
        out = {k: _json_safe(d[k]) for k in REPORT_KEYS}
        out.update({k: _json_safe(v) for k, v in self.extra.items()})
        return out

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=False)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def _json_safe(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else None
    return x


def _check_pq(p, q):
    if not (1 < p < np.inf and 1 < q < np.inf):
        raise DomainError("norm exponents must satisfy 1 < p, q < inf")


def xnorm(grid: Grid, traj: Trajectory, p=2.0, q=2.0) -> NormReport:
    """Norm components of a perturbation trajectory ``(sigma, eta, v)``."""
    _check_pq(p, q)
    if traj.nt < 2:
        raise ShapeError("the discrete norm needs at least two time levels")
    t = np.asarray(traj.times, dtype=float)
    vt = time_derivative(t, traj.v)
    st, et = time_derivative(t, traj.sigma), time_derivative(t, traj.eta)
    dens = density_w1q(grid, traj.sigma, traj.eta, q)
    dens_t = density_w1q(grid, st, et, q)
    return NormReport(
        p=float(p), q=float(q), T=float(t[-1] - t[0]),
        v_lp_w2q=_time_lp(t, velocity_w2q(grid, traj.v, q), p),
        vt_lp_lq=_time_lp(t, _vec_lq(grid, vt, 1, q), p),
        dens_w1p_w1q=_time_lp(t, dens, p) + _time_lp(t, dens_t, p),
        grad_dens_lp_lq=_time_lp(t, density_grad_lq(grid, traj.sigma, traj.eta, q), p),
        dens_t_lp_w1q=_time_lp(t, dens_t, p),
    )


def x_distance(grid: Grid, a: Trajectory, b: Trajectory, p=2.0, q=2.0):
    return xnorm(grid, a - b, p, q).x_norm


def xdot_density(grid: Grid, traj: Trajectory, q=2.0):
    """Instantaneous integrand of the seminorm at each stored level."""
    t = np.asarray(traj.times, dtype=float)
    vt = time_derivative(t, traj.v)
    st, et = time_derivative(t, traj.sigma), time_derivative(t, traj.eta)
    return (velocity_w2q(grid, traj.v, q) + _vec_lq(grid, vt, 1, q)
            + density_grad_lq(grid, traj.sigma, traj.eta, q) + density_w1q(grid, st, et, q))


def weighted_xdot(grid: Grid, traj: Trajectory, beta, p=2.0, q=2.0):
    """``||e^(beta t) (sigma, eta, v)||`` in the seminorm, time integral over the run."""
    t = np.asarray(traj.times, dtype=float)
    return _time_lp(t, np.exp(beta * t) * xdot_density(grid, traj, q), p)


@dataclass
class DecayFit:
    beta: float
    residual: float
    reliable: bool
    weighted_sup: float = float("nan")


def fit_decay(times, series, tail=0.5, monotone_tol=0.1, beta_trial=None) -> DecayFit:
    """Least-squares decay rate of ``series`` over the last ``tail`` of the horizon.

    The fit is flagged unreliable when the tail rises by more than
    ``monotone_tol`` (relative) between any two stored levels.  With
    ``beta_trial`` the supremum of ``e^(beta_trial t) series`` is reported;
    it stays bounded when ``beta_trial`` is below the true rate.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(series, dtype=float)
    if t.shape != y.shape or len(t) < 3:
        raise ShapeError("fit_decay needs matching time and value arrays of length >= 3")
    sel = t >= t[0] + (1.0 - tail) * (t[-1] - t[0])
    tt, yy = t[sel], y[sel]
    if len(tt) < 2:
        raise ShapeError("tail window holds fewer than two samples")
    if np.all(yy == 0):
        return DecayFit(0.0, 0.0, False)
    if np.any(yy <= 0):
        raise DomainError("decay series must be positive on the fitted window")
    A = np.vstack([tt, np.ones_like(tt)]).T
    coef, res, *_ = np.linalg.lstsq(A, np.log(yy), rcond=None)
    resid = float(np.sqrt(res[0] / len(tt))) if res.size else 0.0
    rises = yy[1:] / yy[:-1] - 1.0
    reliable = bool(np.all(rises <= monotone_tol))
    wsup = float("nan") if beta_trial is None else float(np.max(np.exp(beta_trial * t) * y))
    return DecayFit(float(-coef[0]), resid, reliable, wsup)


def besov_proxy(grid: Grid, v, p=2.0, q=2.0):
    """Stand-in for the trace-space norm of initial velocities:
    ``max(||v||_{W^1_q}, h^(2/p) ||grad^2 v||_q)``."""
    w1 = _vec_lq(grid, v, 1, q) + _vec_lq(grid, grid.vector_grad(v), 2, q)
    h = max(grid.spacing)
    return float(max(w1, h ** (2.0 / p) * _vec_lq(grid, grid.vector_hessian(v), 3, q)))


def dichotomy_roots(C, eps):
    """Roots ``x1 <= x2`` of ``x^2 - x/C + eps = 0``.

    A continuous norm that starts below ``x1`` and obeys ``x <= C (x^2 + eps)``
    can never cross into ``(x1, x2)``.
    """
    if C <= 0 or eps < 0:
        raise DomainError("need C > 0 and eps >= 0")
    disc = 1.0 / (4.0 * C * C) - eps
    if disc < 0:
        raise DomainError(f"eps = {eps:g} too large for C = {C:g}: no real roots")
    s = np.sqrt(disc)
    return 1.0 / (2.0 * C) - s, 1.0 / (2.0 * C) + s


def grad_budget(grid: Grid, times, v):
    """Running ``int_0^t ||grad v||_inf`` (trapezoid), one value per level."""
    G = grid.vector_grad(v)
    sup = np.max(np.abs(G.reshape(G.shape[0], -1)), axis=1)
    out = np.zeros(len(times))
    out[1:] = np.cumsum(0.5 * np.diff(times) * (sup[1:] + sup[:-1]))
    return out


def masses(grid: Grid, R, Q, jacobian):
    """Eulerian masses ``int R J dy`` and ``int Q J dy`` per level."""
    if np.shape(jacobian) != np.shape(R) or np.shape(Q) != np.shape(R):
        raise ShapeError("densities and Jacobian must share the cell layout")
    return grid.integrate(R * jacobian), grid.integrate(Q * jacobian)


def relative_drift(m):
    m = np.asarray(m, dtype=float)
    return float(np.max(np.abs(m - m[0])) / abs(m[0]))


def closure_invariants(R, Q, params: ClosureParams):
    """``(alpha_min, alpha_max, max(R - Z))`` over every level and cell."""
    Z = np.asarray(solve_z(R, Q, params))
    alpha = np.asarray(R) / Z
    return float(alpha.min()), float(alpha.max()), float(np.max(np.asarray(R) - Z))


def time_series_csv(path, columns: dict):
    """CSV time series with 17 significant digits; all columns share one length."""
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    n = {len(c) for c in data}
    if len(n) != 1:
        raise ShapeError("time-series columns differ in length")
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*data):
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")
