"""Picard iteration for the nonlinear Lagrangian system, window by window.

One iteration evaluates the nonlinear right-hand sides along the previous
iterate and marches the linear implicit scheme over the window.  A single
flow map is carried from ``t = 0``: the history integrals keep accumulating
across windows, while the linearisation point is re-frozen at each window's
initial densities (local mode) or held at the constant state (global mode).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics
from .closure import ClosureParams
from .errors import ContractionError, DomainError, InvariantError, SmallnessError
from .grid import Grid
from .lagrangian import DEFAULT_DELTA, FlowHistory, accumulate_history, rhs_global, rhs_local
from .linear_core import LAMBDA0, eliminate_density, linear_step
from .state import LinearCoeffs, SimState, Trajectory

log = logging.getLogger(__name__)

MODE_LOCAL = "local"
MODE_GLOBAL = "global"


@dataclass
class PicardConfig:
    window_T: float = 0.1
    dt: float = 1e-2
    max_iter: int = 30
    tol: float = 1e-10
    ball_M: float = 10.0
    delta: float = DEFAULT_DELTA
    density_floor: float = 1e-8
    lambda0: float = LAMBDA0
    accept_ratio: float = 0.9
    stall_count: int = 3
    p: float = 2.0
    q: float = 2.0

    def __post_init__(self):
        for name in ("window_T", "dt", "tol", "ball_M", "delta"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be at least 1")
        if self.tol >= self.ball_M:
            raise DomainError("tol must be smaller than ball_M")
        if self.density_floor < 0:
            raise DomainError("density_floor must be non-negative")
        if self.dt > self.window_T:
            raise DomainError("dt exceeds the window length")
        self.steps_per_window

    @property
    def steps_per_window(self):
        n = self.window_T / self.dt
        m = int(round(n))
        if abs(n - m) > 1e-9 * max(1.0, n):
            raise DomainError("window_T must be an integer multiple of dt")
        return m


@dataclass
class IterationTrace:
    """Per-iteration differences in the discrete solution norm.

    ``ratios[k]`` compares iteration ``k + 2`` with ``k + 1`` and is only
    recorded from the second iteration on.
    """

    window: int
    t0: float
    diffs: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    norms: list = field(default_factory=list)
    converged: bool = False
    accepted: bool = False

    def record(self, diff, norm):
        if self.diffs and self.diffs[-1] > 0:
            self.ratios.append(diff / self.diffs[-1])
        elif self.diffs:
            self.ratios.append(0.0)
        self.diffs.append(diff)
        self.norms.append(norm)

    @property
    def iterations(self):
        return len(self.diffs)


@dataclass
class WindowStart:
    """Everything a window needs: data at its first level and the flow map so far."""

    t0: float
    R: np.ndarray
    Q: np.ndarray
    u: np.ndarray
    history: FlowHistory


def _full_state(coeffs: LinearCoeffs, traj: Trajectory, dvdt=None):
    return SimState(coeffs.r0 + traj.sigma, coeffs.q0 + traj.eta, traj.v, dvdt)


def _check_positivity(coeffs, traj, floor):
    r = coeffs.r0 + traj.sigma
    q = coeffs.q0 + traj.eta
    if np.any(r < 0) or np.any(q < 0):
        raise InvariantError("a partial density became negative")
    if np.any(r + q <= floor):
        raise InvariantError(f"total density fell below the floor {floor:g}")


def apply_S(grid: Grid, prev: Trajectory, coeffs: LinearCoeffs, start: WindowStart,
            config: PicardConfig, op=None, mode=MODE_LOCAL):
    """One Picard map: linear march with right-hand sides taken from ``prev``.

    Returns the new trajectory and the flow history accumulated along ``prev``.
    """
    _check_positivity(coeffs, prev, config.density_floor)
    dt = prev.dt
    if op is None:
        op = eliminate_density(grid, coeffs, dt, config.lambda0)
    hist = accumulate_history(grid, prev.v, dt, start.history)
    budget = float(np.asarray(hist.grad_budget)[-1])
    if budget > config.delta:
        raise SmallnessError(f"int ||grad v||_inf = {budget:.4g} exceeds delta = {config.delta}",
                             budget=budget, delta=config.delta)
    n = slice(1, None)
    dvdt = (prev.v[1:] - prev.v[:-1]) / dt
    state = SimState(coeffs.r0 + prev.sigma[n], coeffs.q0 + prev.eta[n], prev.v[n], dvdt)
    hist_n = FlowHistory(hist.k[n], hist.k2[n], hist.k_cell[n], hist.grad_budget[n], hist.delta)
    rhs_fn = rhs_local if mode == MODE_LOCAL else rhs_global
    rhs = rhs_fn(grid, state, hist_n, coeffs)

    sigma = np.empty_like(prev.sigma)
    eta = np.empty_like(prev.eta)
    v = np.empty_like(prev.v)
    sigma[0], eta[0], v[0] = prev.sigma[0], prev.eta[0], prev.v[0]
    for i in range(prev.nt - 1):
        sigma[i + 1], eta[i + 1], v[i + 1] = linear_step(op, sigma[i], eta[i], v[i], rhs.at(i))
    return Trajectory(prev.times, sigma, eta, v), hist


def solve_window(grid: Grid, start: WindowStart, coeffs: LinearCoeffs, config: PicardConfig,
                 window=0, mode=MODE_LOCAL):
    """Iterate the Picard map to a fixed point on one window."""
    nt = config.steps_per_window + 1
    times = start.t0 + config.dt * np.arange(nt)
    sigma0 = start.R - coeffs.r0
    eta0 = start.Q - coeffs.q0
    current = Trajectory.constant(times, sigma0, eta0, start.u)
    op = eliminate_density(grid, coeffs, config.dt, config.lambda0)
    trace = IterationTrace(window, start.t0)
    stalled = 0
    hist = None
    for it in range(config.max_iter):
        new, hist = apply_S(grid, current, coeffs, start, config, op, mode)
        diff = diagnostics.x_distance(grid, new, current, config.p, config.q)
        norm = diagnostics.xnorm(grid, new, config.p, config.q).x_norm
        trace.record(diff, norm)
        log.debug("window %d iteration %d: diff %.3e", window, it + 1, diff)
        if norm > config.ball_M:
            raise InvariantError(f"iterate left the ball of radius {config.ball_M} "
                                 f"(norm {norm:.3g})")
        current = new
        if diff <= config.tol:
            trace.converged = True
            break
        if trace.ratios and trace.ratios[-1] >= 1.0:
            stalled += 1
            if stalled >= config.stall_count:
                raise ContractionError(
                    f"no contraction on window {window}: ratios {trace.ratios[-3:]}",
                    suggested_T=config.window_T / 2, ratios=list(trace.ratios))
        else:
            stalled = 0
    if not trace.converged:
        raise ContractionError(f"window {window} did not converge in {config.max_iter} "
                               "iterations", suggested_T=config.window_T / 2,
                               ratios=list(trace.ratios))
    # the history must follow the converged trajectory, not the previous iterate
    hist = accumulate_history(grid, current.v, config.dt, start.history)
    late = trace.ratios[-2:]
    trace.accepted = all(r < config.accept_ratio for r in late)
    _check_positivity(coeffs, current, config.density_floor)
    return current, hist, trace


@dataclass
class RunResult:
    """Concatenated run: levels at every time step of every window."""

    grid: Grid
    params: ClosureParams
    times: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    u: np.ndarray
    grad_budget: np.ndarray
    jacobian: np.ndarray
    traces: list
    mode: str
    reference: tuple | None = None
    energy: np.ndarray | None = None
    blowup: bool = False
    history: FlowHistory | None = None

    def perturbation(self, r_ref, q_ref):
        return Trajectory(self.times, self.R - r_ref, self.Q - q_ref, self.u)

    @property
    def windows_done(self):
        return len(self.traces)


def _append(result: RunResult | None, grid, params, traj, coeffs, hist, trace, mode):
    R = coeffs.r0 + traj.sigma
    Q = coeffs.q0 + traj.eta
    J = hist.jacobian(grid)
    gb = np.asarray(hist.grad_budget, dtype=float)
    if result is None:
        return RunResult(grid, params, traj.times.copy(), R, Q, traj.v.copy(), gb, J,
                         [trace], mode, history=hist.last())
    cat = lambda a, b: np.concatenate([a, b[1:]])
    result.times = cat(result.times, traj.times)
    result.R = cat(result.R, R)
    result.Q = cat(result.Q, Q)
    result.u = cat(result.u, traj.v)
    result.grad_budget = cat(result.grad_budget, gb)
    result.jacobian = cat(result.jacobian, J)
    result.traces.append(trace)
    result.history = hist.last()
    return result


def _start_from(result: RunResult):
    return WindowStart(float(result.times[-1]), result.R[-1], result.Q[-1], result.u[-1],
                       result.history)


def initial_start(grid: Grid, R0, Q0, u0, delta=DEFAULT_DELTA):
    R0 = np.asarray(R0, dtype=float)
    Q0 = np.asarray(Q0, dtype=float)
    u0 = grid.zero_boundary(np.asarray(u0, dtype=float))
    if R0.shape != grid.cell_shape or Q0.shape != grid.cell_shape:
        raise DomainError("initial densities must be cell fields")
    if u0.shape != (grid.dim,) + grid.shape:
        raise DomainError("initial velocity must be a node vector field")
    return WindowStart(0.0, R0, Q0, u0, FlowHistory.zeros(grid, delta))


def solve_local(grid: Grid, params: ClosureParams, R0, Q0, u0, config: PicardConfig,
                horizon=None, result: RunResult | None = None, on_window=None):
    """March local windows up to ``horizon`` (default one window).

    Coefficients are re-frozen at each window's initial densities.  Pass a
    previous ``result`` to resume after its last window; ``on_window`` is
    called with the running result after every window (checkpoint hook).
    """
    horizon = config.window_T if horizon is None else float(horizon)
    n_windows = _window_count(horizon, config.window_T)
    start = initial_start(grid, R0, Q0, u0, config.delta) if result is None else _start_from(result)
    for w in range(0 if result is None else result.windows_done, n_windows):
        coeffs = LinearCoeffs.from_cells(grid, start.R, start.Q, params,
                                         density_floor=config.density_floor)
        traj, hist, trace = solve_window(grid, start, coeffs, config, w, MODE_LOCAL)
        result = _append(result, grid, params, traj, coeffs, hist, trace, MODE_LOCAL)
        if on_window is not None:
            on_window(result)
        start = _start_from(result)
    return result


def _window_count(horizon, window_T):
    n = horizon / window_T
    m = int(round(n))
    if m < 1 or abs(n - m) > 1e-9 * max(1.0, n):
        raise DomainError("the horizon must be a positive integer multiple of window_T")
    return m


def linear_energy(grid: Grid, coeffs: LinearCoeffs, sigma, eta, v):
    """Energy of the constant-coefficient linear system, per level.

    ``E = 1/2 int rho |v|^2 + 1/(2c) int p^2`` with ``p = omega1 sigma + omega2 eta``
    and ``c = omega1 r + omega2 q``; it is non-increasing for the linear flow.
    """
    w1 = float(np.mean(coeffs.omega1))
    w2 = float(np.mean(coeffs.omega2))
    r, q = float(np.mean(coeffs.r0)), float(np.mean(coeffs.q0))
    c = w1 * r + w2 * q
    kin = 0.5 * (r + q) * grid.integrate(np.sum(v**2, axis=-grid.dim - 1))
    p = w1 * sigma + w2 * eta
    return kin + 0.5 / c * grid.integrate(p**2)


def continue_global(grid: Grid, params: ClosureParams, R0, Q0, u0, r_star, q_star,
                    config: PicardConfig, horizon, result: RunResult | None = None,
                    on_window=None, blowup_factor=2.0):
    """March windows linearised around the constant state ``(r_star, q_star)``.

    The linear energy is monitored; if its square root exceeds
    ``blowup_factor`` times its initial value the run is flagged (data not
    small enough) and stops after that window.
    """
    n_windows = _window_count(horizon, config.window_T)
    coeffs = LinearCoeffs.constant(grid, r_star, q_star, params)
    start = initial_start(grid, R0, Q0, u0, config.delta) if result is None else _start_from(result)
    for w in range(0 if result is None else result.windows_done, n_windows):
        traj, hist, trace = solve_window(grid, start, coeffs, config, w, MODE_GLOBAL)
        result = _append(result, grid, params, traj, coeffs, hist, trace, MODE_GLOBAL)
        result.reference = (float(r_star), float(q_star))
        E = linear_energy(grid, coeffs, result.R - r_star, result.Q - q_star, result.u)
        result.energy = E
        if E[0] > 0 and np.sqrt(np.max(E) / E[0]) > blowup_factor:
            result.blowup = True
            log.warning("energy grew beyond %.1fx its initial value at t=%.3g",
                        blowup_factor, result.times[-1])
        if on_window is not None:
            on_window(result)
        if result.blowup:
            break
        start = _start_from(result)
    return result


# -- checkpoints ------------------------------------------------------------------------

def save_checkpoint(path, result: RunResult):
    """Store everything needed to resume after the last completed window."""
    h = result.history
    traces = [(t.window, t.t0, t.converged, t.accepted, np.asarray(t.diffs), np.asarray(t.ratios),
               np.asarray(t.norms)) for t in result.traces]
    arrays = dict(times=result.times, R=result.R, Q=result.Q, u=result.u,
                  grad_budget=result.grad_budget, jacobian=result.jacobian,
                  hist_k=h.k, hist_k2=h.k2, hist_k_cell=h.k_cell,
                  hist_budget=np.asarray(h.grad_budget), hist_delta=np.asarray(h.delta),
                  mode=np.asarray(result.mode), blowup=np.asarray(result.blowup),
                  reference=np.asarray(result.reference if result.reference else (np.nan, np.nan)),
                  n_traces=np.asarray(len(traces)))
    if result.energy is not None:
        arrays["energy"] = result.energy
    for i, (w, t0, conv, acc, d, r, n) in enumerate(traces):
        arrays[f"trace{i}_meta"] = np.asarray([w, t0, conv, acc], dtype=float)
        arrays[f"trace{i}_diffs"] = d
        arrays[f"trace{i}_ratios"] = r
        arrays[f"trace{i}_norms"] = n
    np.savez(path, **arrays)


def load_checkpoint(path, grid: Grid, params: ClosureParams) -> RunResult:
    with np.load(path) as z:
        hist = FlowHistory(z["hist_k"], z["hist_k2"], z["hist_k_cell"],
                           float(z["hist_budget"]), float(z["hist_delta"]))
        traces = []
        for i in range(int(z["n_traces"])):
            w, t0, conv, acc = z[f"trace{i}_meta"]
            tr = IterationTrace(int(w), float(t0), list(z[f"trace{i}_diffs"]),
                                list(z[f"trace{i}_ratios"]), list(z[f"trace{i}_norms"]),
                                bool(conv), bool(acc))
            traces.append(tr)
        ref = tuple(float(x) for x in z["reference"])
        res = RunResult(grid, params, z["times"], z["R"], z["Q"], z["u"], z["grad_budget"],
                        z["jacobian"], traces, str(z["mode"]),
                        reference=None if np.isnan(ref[0]) else ref,
                        energy=z["energy"] if "energy" in z else None,
                        blowup=bool(z["blowup"]), history=hist)
    if res.u.shape[1:] != (grid.dim,) + grid.shape:
        raise DomainError("checkpoint does not match the grid")
    return res
