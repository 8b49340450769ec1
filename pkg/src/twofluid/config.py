"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Every key must be known; values
are parsed by the schema below and cross-checked when the config is built.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .closure import ClosureParams
from .errors import ConfigError, DomainError, TwoFluidError
from .grid import Grid
from .picard import PicardConfig
from .spectra import SectorSpec

OUTPUT_ENV = "TWOFLUID_OUTPUT"

MODES = ("local", "global", "resolvent", "decay-spectrum", "closure", "mms")
SHAPES = ("cos", "sin", "bump", "linear")
PERTURB = ("density", "velocity", "both")


def _bool(s):
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s):
    return tuple(int(x) for x in s.replace(",", " ").split())


def _floats(s):
    return tuple(float(x) for x in s.replace(",", " ").split())


def _str(s):
    return s.strip()


@dataclass
class RunConfig:
    mode: str = "local"
    gamma_plus: float = 3.0
    gamma_minus: float = 1.5
    mu: float = 1.0
    nu: float = 0.0
    nodes: tuple = (33,)
    lower: float = 0.0
    upper: float = 1.0
    periodic: bool = False
    r_star: float = 1.0
    q_star: float = 1.0
    amplitude: float = 1e-2
    shape: str = "cos"
    perturb: str = "density"
    initial_file: str = ""
    dt: float = 1e-2
    window_T: float = 0.1
    horizon: float = 0.1
    max_iter: int = 30
    tol: float = 1e-10
    ball_M: float = 10.0
    delta: float = 0.1
    density_floor: float = 1e-8
    lambda0: float = 1.0
    accept_ratio: float = 0.9
    p: float = 2.0
    q: float = 2.0
    sector_epsilon: float = float(np.pi / 4)
    sector_radii: int = 16
    sector_rays: int = 9
    sector_rmax: float = 1e3
    mms_nodes: tuple = (17, 33, 65)
    mms_dts: tuple = (0.1, 0.05, 0.025)
    mms_fine_nodes: int = 257
    snapshot_every: int = 10
    checkpoint: bool = True
    dump_matrix: bool = False
    output_dir: str = ""
    run_name: str = ""
    seed: int = 0

    def __post_init__(self):
        self.validate()

    # -- parsing -------------------------------------------------------------------------------

    @classmethod
    def parsers(cls):
        out = {}
        for f in fields(cls):
            default = f.default
            if isinstance(default, bool):
                out[f.name] = _bool
            elif isinstance(default, int):
                out[f.name] = int
            elif isinstance(default, float):
                out[f.name] = float
            elif isinstance(default, tuple):
                out[f.name] = _ints if f.name in ("nodes", "mms_nodes") else _floats
            else:
                out[f.name] = _str
        return out

    @classmethod
    def from_text(cls, text, source="<config>", overrides=()):
        parsers = cls.parsers()
        values = {}
        lines = [(i + 1, line) for i, line in enumerate(text.splitlines())]
        lines += [(f"override {j + 1}", o) for j, o in enumerate(overrides)]
        for lineno, raw in lines:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in parsers:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            try:
                values[key] = parsers[key](value)
            except ValueError as exc:
                raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
        try:
            return cls(**values)
        except ConfigError as exc:
            raise ConfigError(f"{source}: {exc}") from None

    @classmethod
    def from_file(cls, path, overrides=()):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text, str(path), overrides)

    def to_text(self):
        """Canonical text form; parsing it back gives an equal config."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                s = "true" if v else "false"
            elif isinstance(v, tuple):
                s = " ".join(repr(x) for x in v)
            else:
                s = repr(v) if isinstance(v, float) else str(v)
            lines.append(f"{f.name} = {s}")
        return "\n".join(lines) + "\n"

    def digest(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    # -- validation and builders ----------------------------------------------------------------

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.shape not in SHAPES:
            raise ConfigError(f"shape must be one of {SHAPES}")
        if self.perturb not in PERTURB:
            raise ConfigError(f"perturb must be one of {PERTURB}")
        if len(self.nodes) not in (1, 2):
            raise ConfigError("nodes takes one or two counts")
        if self.r_star < 0 or self.q_star < 0 or self.r_star + self.q_star <= 0:
            raise ConfigError("r_star, q_star must be non-negative with a positive sum")
        if self.snapshot_every < 1:
            raise ConfigError("snapshot_every must be at least 1")
        try:
            self.closure_params()
            self.grid()
            self.picard_config()
            self.sector_spec()
        except TwoFluidError as exc:
            raise ConfigError(str(exc)) from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def closure_params(self):
        return ClosureParams(self.gamma_plus, self.gamma_minus, self.mu, self.nu)

    def grid(self):
        return Grid(self.nodes, self.lower, self.upper, self.periodic)

    def picard_config(self):
        cfg = PicardConfig(window_T=self.window_T, dt=self.dt, max_iter=self.max_iter,
                           tol=self.tol, ball_M=self.ball_M, delta=self.delta,
                           density_floor=self.density_floor, lambda0=self.lambda0,
                           accept_ratio=self.accept_ratio, p=self.p, q=self.q)
        cfg.steps_per_window
        n = self.horizon / self.window_T
        if self.horizon <= 0 or abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise DomainError("horizon must be a positive integer multiple of window_T")
        return cfg

    def sector_spec(self):
        return SectorSpec(self.sector_epsilon, self.lambda0, self.sector_radii,
                          self.sector_rays, self.sector_rmax)

    def output_root(self):
        """``output_dir`` if set, else ``$TWOFLUID_OUTPUT``, else ``./twofluid_out``."""
        if self.output_dir:
            return Path(self.output_dir)
        return Path(os.environ.get(OUTPUT_ENV, "twofluid_out"))

    def initial_data(self, grid: Grid):
        """``(R0, Q0, u0)`` from the constants and the perturbation settings, or a file."""
        if self.initial_file:
            try:
                with np.load(self.initial_file) as z:
                    R0, Q0, u0 = z["R"], z["Q"], z["u"]
            except (OSError, KeyError) as exc:
                raise ConfigError(f"cannot load initial data: {exc}") from None
            return R0, Q0, u0
        yc = grid.cell_mesh()
        yn = grid.mesh()
        prof_c = _profile(self.shape, yc, grid)
        R0 = np.full(grid.cell_shape, self.r_star)
        Q0 = np.full(grid.cell_shape, self.q_star)
        u0 = np.zeros((grid.dim,) + grid.shape)
        if self.perturb in ("density", "both"):
            # same relative profile in both phases: the phase ratio stays uniform
            R0 = R0 * (1.0 + self.amplitude * prof_c)
            Q0 = Q0 * (1.0 + self.amplitude * prof_c)
        if self.perturb in ("velocity", "both"):
            L = np.array(grid.upper) - np.array(grid.lower)
            s = np.prod(np.sin(np.pi * (yn - np.array(grid.lower).reshape((-1,) + (1,) * grid.dim))
                               / L.reshape((-1,) + (1,) * grid.dim)), axis=0)
            u0 = u0 + self.amplitude * s[None] * np.ones((grid.dim,) + (1,) * grid.dim)
            u0 = grid.zero_boundary(u0)
        return R0, Q0, u0


def _profile(shape, y, grid: Grid):
    lo = np.array(grid.lower).reshape((-1,) + (1,) * grid.dim)
    L = (np.array(grid.upper) - np.array(grid.lower)).reshape((-1,) + (1,) * grid.dim)
    s = (y - lo) / L
    if shape == "cos":
        return np.prod(np.cos(np.pi * s), axis=0)
    if shape == "sin":
        return np.prod(np.sin(np.pi * s), axis=0)
    if shape == "bump":
        return np.exp(-np.sum((s - 0.5) ** 2, axis=0) / 0.02)
    return np.sum(s - 0.5, axis=0)
