"""Command-line front end.

Exit codes: 0 success, 2 configuration or input error, 3 invariant
violation (including the smallness budget), 4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__, diagnostics
from .closure import (ClosureParams, closure_derivatives, omega_coefficients, pressure,
                      solve_z)
from .config import RunConfig
from .errors import ConfigError, TwoFluidError
from .lagrangian import FlowHistory
from .linear_core import eliminate_density, linear_step
from .mms import spatial_study, temporal_study
from .picard import continue_global, load_checkpoint, save_checkpoint, solve_local
from .spectra import decay_spectrum, sweep_sector, sweep_sup, symbol_norms
from .state import LinearCoeffs, RhsBundle, Trajectory

log = logging.getLogger("twofluid")

EXIT_OK = 0
EXIT_CONFIG = 2


class RunDir:
    """Output directory of one command plus the list of files written."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.path = cfg.output_root() / (cfg.run_name or command)
        self.path.mkdir(parents=True, exist_ok=True)
        self.files = []

    def file(self, name):
        self.files.append(name)
        return self.path / name

    def write_json(self, name, obj):
        with open(self.file(name), "w") as fh:
            json.dump(obj, fh, indent=2)
            fh.write("\n")

    def manifest(self, exit_code, extra=None):
        self.file("config.txt").write_text(self.cfg.to_text())
        man = {
            "command": self.command,
            "exit_code": exit_code,
            "config_sha256": self.cfg.digest(),
            "versions": {"twofluid": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "outputs": sorted(set(self.files)),
        }
        man.update(extra or {})
        with open(self.path / "manifest.json", "w") as fh:
            json.dump(man, fh, indent=2)
            fh.write("\n")


# -- closure ------------------------------------------------------------------------------

def closure_eval(R, Q, gamma_plus, gamma_minus, tol=1e-12):
    params = ClosureParams(gamma_plus, gamma_minus)
    Z = solve_z(R, Q, params, tol=tol)
    dR, dQ = closure_derivatives(Z, R, params)
    w1, w2 = omega_coefficients(Z, R, params)
    return {"Z": Z, "alpha": R / Z, "p": pressure(Z, params), "dZ_dR": dR, "dZ_dQ": dQ,
            "omega1": w1, "omega2": w2}


def cmd_closure(args):
    out = closure_eval(args.r, args.q, args.gamma_plus, args.gamma_minus, args.tol)
    print(json.dumps({k: float(v) for k, v in out.items()}))
    return EXIT_OK


# -- trajectory outputs -------------------------------------------------------------------------

def _write_trace(rd: RunDir, traces):
    rows = {"window": [], "t0": [], "iteration": [], "diff": [], "ratio": [], "norm": [],
            "converged": [], "accepted": []}
    for tr in traces:
        for i, d in enumerate(tr.diffs):
            rows["window"].append(tr.window)
            rows["t0"].append(tr.t0)
            rows["iteration"].append(i + 1)
            rows["diff"].append(d)
            rows["ratio"].append(tr.ratios[i - 1] if i >= 1 else float("nan"))
            rows["norm"].append(tr.norms[i])
            rows["converged"].append(tr.converged)
            rows["accepted"].append(tr.accepted)
    diagnostics.time_series_csv(rd.file("iteration_trace.csv"), rows)


def _write_run(rd: RunDir, cfg: RunConfig, result, r_ref, q_ref, extra_report=None):
    grid, params = result.grid, result.params
    traj = result.perturbation(r_ref, q_ref)
    every = cfg.snapshot_every
    for n in range(0, len(result.times), every):
        tag = f"{n:06d}"
        grid.to_csv(rd.file(f"snap_{tag}_nodes.csv"), {"u": result.u[n]}, "node")
        grid.to_csv(rd.file(f"snap_{tag}_cells.csv"),
                    {"R": result.R[n], "Q": result.Q[n], "J": result.jacobian[n]}, "cell")
    _write_trace(rd, result.traces)
    mr, mq = diagnostics.masses(grid, result.R, result.Q, result.jacobian)
    Z = np.asarray(solve_z(result.R, result.Q, params))
    alpha = result.R / Z
    axes = tuple(range(1, alpha.ndim))
    cols = {"t": result.times, "grad_budget": result.grad_budget, "mass_r": mr, "mass_q": mq,
            "alpha_min": alpha.min(axis=axes), "alpha_max": alpha.max(axis=axes)}
    if traj.nt >= 2:
        cols["xdot_density"] = diagnostics.xdot_density(grid, traj, cfg.q)
    if result.energy is not None:
        cols["energy"] = result.energy
    diagnostics.time_series_csv(rd.file("timeseries.csv"), cols)
    if traj.nt < 2:
        return None
    rep = diagnostics.xnorm(grid, traj, cfg.p, cfg.q)
    rep.grad_budget = float(result.grad_budget[-1])
    rep.delta = cfg.delta
    rep.mass_r, rep.mass_q = float(mr[-1]), float(mq[-1])
    rep.mass_drift = max(diagnostics.relative_drift(mr), diagnostics.relative_drift(mq))
    rep.alpha_min, rep.alpha_max, rep.r_minus_z_max = diagnostics.closure_invariants(
        result.R, result.Q, params)
    rep.extra.update(extra_report or {})
    rep.extra["windows"] = result.windows_done
    rep.extra["accepted_windows"] = sum(t.accepted for t in result.traces)
    rep.extra["iterations"] = [t.iterations for t in result.traces]
    return rep


def _checkpoint_hook(rd: RunDir, cfg: RunConfig, holder):
    def hook(result):
        holder["result"] = result
        if cfg.checkpoint:
            save_checkpoint(rd.path / "checkpoint.npz", result)
            rd.files.append("checkpoint.npz")
    return hook


def _maybe_dump(rd, cfg, grid, coeffs):
    if cfg.dump_matrix:
        op = eliminate_density(grid, coeffs, cfg.dt, cfg.lambda0)
        op.dump(rd.file("operator.mtx"))


def _fail(rd: RunDir, exc: TwoFluidError, holder, cfg, r_ref=None, q_ref=None):
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
    for attr in ("budget", "delta", "residual", "suggested_T", "ratios"):
        val = getattr(exc, attr, None)
        if val is not None:
            record[attr] = val if not isinstance(val, np.ndarray) else val.tolist()
    partial = holder.get("result")
    record["windows_completed"] = partial.windows_done if partial else 0
    if partial is not None:
        try:
            _write_run(rd, cfg, partial, partial.R[0] if r_ref is None else r_ref,
                       partial.Q[0] if q_ref is None else q_ref)
        except TwoFluidError:
            pass
    rd.write_json("failure.json", record)
    rd.manifest(exc.exit_code)
    log.error("%s: %s", type(exc).__name__, exc)
    return exc.exit_code


def cmd_simulate(args, cfg: RunConfig):
    rd = RunDir(cfg, "simulate")
    grid, params, pc = cfg.grid(), cfg.closure_params(), cfg.picard_config()
    R0, Q0, u0 = cfg.initial_data(grid)
    holder = {}
    try:
        prior = load_checkpoint(args.restart, grid, params) if args.restart else None
        if prior is not None:
            R0, Q0 = prior.R[0], prior.Q[0]
        _maybe_dump(rd, cfg, grid, LinearCoeffs.from_cells(grid, R0, Q0, params))
        result = solve_local(grid, params, R0, Q0, u0, pc, cfg.horizon, result=prior,
                             on_window=_checkpoint_hook(rd, cfg, holder))
        rep = _write_run(rd, cfg, result, R0, Q0)
    except TwoFluidError as exc:
        return _fail(rd, exc, holder, cfg)
    rd.write_json("report.json", rep.to_dict())
    rd.manifest(EXIT_OK)
    print(json.dumps({"run_dir": str(rd.path), "grad_budget": rep.grad_budget,
                      "x_norm": rep.x_norm, "mass_drift": rep.mass_drift}))
    return EXIT_OK


def _linear_reference(grid, coeffs, R0, Q0, u0, dt, horizon):
    """Linear march with zero right-hand side from the same data."""
    op = eliminate_density(grid, coeffs, dt)
    nt = int(round(horizon / dt)) + 1
    s = np.empty((nt,) + grid.cell_shape)
    e = np.empty_like(s)
    v = np.empty((nt, grid.dim) + grid.shape)
    s[0], e[0], v[0] = R0 - coeffs.r0, Q0 - coeffs.q0, u0
    zero = RhsBundle.zeros(grid)
    for n in range(nt - 1):
        s[n + 1], e[n + 1], v[n + 1] = linear_step(op, s[n], e[n], v[n], zero)
    return Trajectory(dt * np.arange(nt), s, e, v)


def data_size(grid, R0, Q0, u0, r_star, q_star, p=2.0, q=2.0):
    """Size of initial data: trace-space proxy of ``u0`` plus density W^1_q norms."""
    return (diagnostics.besov_proxy(grid, u0, p, q)
            + float(diagnostics.density_w1q(grid, R0 - r_star, Q0 - q_star, q)))


def cmd_decay(args, cfg: RunConfig):
    rd = RunDir(cfg, "decay")
    grid, params, pc = cfg.grid(), cfg.closure_params(), cfg.picard_config()
    R0, Q0, u0 = cfg.initial_data(grid)
    holder = {}
    rs, qs = cfg.r_star, cfg.q_star
    try:
        coeffs = LinearCoeffs.constant(grid, rs, qs, params)
        _maybe_dump(rd, cfg, grid, coeffs)
        prior = load_checkpoint(args.restart, grid, params) if args.restart else None
        result = continue_global(grid, params, R0, Q0, u0, rs, qs, pc, cfg.horizon,
                                 result=prior, on_window=_checkpoint_hook(rd, cfg, holder))
        traj = result.perturbation(rs, qs)
        dens = diagnostics.xdot_density(grid, traj, cfg.q)
        fit = diagnostics.fit_decay(result.times, dens)
        spec = decay_spectrum(grid, coeffs)
        eps = data_size(grid, R0, Q0, u0, rs, qs, cfg.p, cfg.q)
        lin = _linear_reference(grid, coeffs, R0, Q0, u0, cfg.dt, float(result.times[-1]))
        x_lin = diagnostics.xnorm(grid, lin, cfg.p, cfg.q).xdot_norm
        x_run = diagnostics.xnorm(grid, traj, cfg.p, cfg.q).xdot_norm
        extra = {"beta_hat_spectrum": spec.beta_hat, "blowup": result.blowup,
                 "data_size": eps, "xdot_linear": x_lin, "xdot_run": x_run}
        if eps > 0 and x_lin > 0:
            C = x_lin / eps
            extra["calibrated_C"] = C
            try:
                x1, x2 = diagnostics.dichotomy_roots(C, eps)
                extra.update(small_root=x1, large_root=x2, below_small_root=bool(x_run < x1))
            except TwoFluidError as exc:
                extra["dichotomy"] = str(exc)
        if fit.beta > 0 and spec.beta_hat > 0:
            extra["beta_relative_gap"] = abs(fit.beta - spec.beta_hat) / spec.beta_hat
        rep = _write_run(rd, cfg, result, rs, qs, extra)
        rep.beta_fit, rep.beta_residual, rep.beta_reliable = fit.beta, fit.residual, fit.reliable
    except TwoFluidError as exc:
        return _fail(rd, exc, holder, cfg, rs, qs)
    rd.write_json("report.json", rep.to_dict())
    rd.manifest(EXIT_OK)
    print(json.dumps({"run_dir": str(rd.path), "beta_fit": fit.beta,
                      "beta_hat_spectrum": spec.beta_hat, "blowup": result.blowup}))
    return EXIT_OK


def cmd_resolvent(args, cfg: RunConfig):
    rd = RunDir(cfg, "resolvent")
    try:
        grid, params = cfg.grid(), cfg.closure_params()
        coeffs = LinearCoeffs.constant(grid, cfg.r_star, cfg.q_star, params)
        samples = sweep_sector(grid, coeffs, cfg.sector_spec())
        cols = {"re": [s.lam.real for s in samples], "im": [s.lam.imag for s in samples],
                "norm_j0": [s.norm_j0 for s in samples], "norm_j1": [s.norm_j1 for s in samples],
                "norm_j2": [s.norm_j2 for s in samples], "ok": [s.ok for s in samples]}
        diagnostics.time_series_csv(rd.file("resolvent.csv"), cols)
        sup = sweep_sup(samples)
        summary = {"sup_norm_j0": sup[0], "sup_norm_j1": sup[1], "sup_norm_j2": sup[2],
                   "samples": len(samples), "failed": sum(not s.ok for s in samples)}
        if grid.dim == 1 and grid.periodic:
            sym = [symbol_norms(grid, coeffs, s.lam) for s in samples]
            summary.update({f"symbol_sup_norm_j{j}": max(x[j] for x in sym) for j in range(3)})
    except TwoFluidError as exc:
        return _fail(rd, exc, {}, cfg)
    rd.write_json("summary.json", summary)
    rd.manifest(EXIT_OK)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_decay_spectrum(args, cfg: RunConfig):
    rd = RunDir(cfg, "decay-spectrum")
    try:
        grid, params = cfg.grid(), cfg.closure_params()
        coeffs = LinearCoeffs.constant(grid, cfg.r_star, cfg.q_star, params)
        spec = decay_spectrum(grid, coeffs)
        diagnostics.time_series_csv(rd.file("eigenvalues.csv"),
                                    {"re": spec.eigenvalues.real, "im": spec.eigenvalues.imag,
                                     "conserved": spec.conserved})
        summary = {"beta_hat": spec.beta_hat, "n_eigenvalues": int(spec.eigenvalues.size),
                   "n_conserved": int(spec.conserved.sum())}
    except TwoFluidError as exc:
        return _fail(rd, exc, {}, cfg)
    rd.write_json("summary.json", summary)
    rd.manifest(EXIT_OK)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_mms(args, cfg: RunConfig):
    rd = RunDir(cfg, "mms")
    try:
        params = cfg.closure_params()
        sruns, sord = spatial_study(cfg.mms_nodes, dt=cfg.dt, params=params)
        truns, tord = temporal_study(cfg.mms_dts, nodes=cfg.mms_fine_nodes, params=params)
    except TwoFluidError as exc:
        return _fail(rd, exc, {}, cfg)
    for name, runs in (("mms_space.csv", sruns), ("mms_time.csv", truns)):
        diagnostics.time_series_csv(rd.file(name), {
            "nodes": [r.nodes for r in runs], "dt": [r.dt for r in runs],
            "err_sigma": [r.err_sigma for r in runs], "err_eta": [r.err_eta for r in runs],
            "err_v": [r.err_v for r in runs], "error": [r.error for r in runs]})
    summary = {"spatial_orders": [float(x) for x in sord],
               "temporal_orders": [float(x) for x in tord]}
    rd.write_json("summary.json", summary)
    rd.manifest(EXIT_OK)
    print(json.dumps(summary))
    return EXIT_OK


# -- entry point ----------------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="twofluid", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    cl = sub.add_parser("closure", help="evaluate the pressure closure")
    clsub = cl.add_subparsers(dest="action", required=True)
    ev = clsub.add_parser("eval")
    ev.add_argument("--r", type=float, required=True)
    ev.add_argument("--q", type=float, required=True)
    ev.add_argument("--gamma-plus", type=float, default=3.0)
    ev.add_argument("--gamma-minus", type=float, default=1.5)
    ev.add_argument("--tol", type=float, default=1e-12)

    for name, helptext in (("simulate", "local Picard run"),
                           ("decay", "long run around a constant state"),
                           ("resolvent", "resolvent sector sweep"),
                           ("decay-spectrum", "spectrum of the linear generator"),
                           ("mms", "manufactured-solution convergence study")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="flat key = value file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--output", help="output root (overrides $TWOFLUID_OUTPUT)")
        if name in ("simulate", "decay"):
            p.add_argument("--restart", help="checkpoint.npz to resume from")
    return ap


COMMANDS = {"simulate": cmd_simulate, "decay": cmd_decay, "resolvent": cmd_resolvent,
            "decay-spectrum": cmd_decay_spectrum, "mms": cmd_mms}


def load_config(args):
    overrides = list(args.set)
    if args.output:
        overrides.append(f"output_dir = {args.output}")
    if args.config:
        return RunConfig.from_file(args.config, overrides)
    return RunConfig.from_text("", "<defaults>", overrides)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "closure":
            return cmd_closure(args)
        cfg = load_config(args)
    except TwoFluidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return COMMANDS[args.command](args, cfg)


if __name__ == "__main__":
    sys.exit(main())
