"""Obstacle problem on a truncated space-time grid.

``u`` starts from the initial potential and evolves by the heat operator
``sigma^2/2 d^2/dx^2`` while being held above the obstacle ``U_mu - C``. The
scheme is explicit and monotone: each interior node becomes a nonnegative
combination of its neighbours at the previous level, then is projected onto
the obstacle. Boundary nodes keep their initial values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import DomainTooNarrow, ObstacleAboveInitial, TimeOutOfRange
from .model import DiffusionSpec, ProbabilityMeasure, c_star

EPS = np.finfo(float).eps
DEFAULT_FRAME_BYTES = 256 * 2**20


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Nodes ``x_min + i*dx`` for ``i < nx`` and levels ``n*dt`` for ``n <= nt``."""

    x_min: float
    dx: float
    nx: int
    dt: float
    nt: int

    @property
    def x_max(self) -> float:
        return self.x_min + (self.nx - 1) * self.dx

    @property
    def x(self) -> np.ndarray:
        return self.x_min + np.arange(self.nx) * self.dx

    @property
    def t_max(self) -> float:
        return self.nt * self.dt

    def describe(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "nx": self.nx, "dx": self.dx,
                "dt": self.dt, "nt": self.nt, "t_max": self.t_max}


def _cfl_dt(dx: float, smax: float) -> float:
    dt = dx * dx / (smax * smax)
    while dt * smax * smax / (dx * dx) > 1.0:
        dt = math.nextafter(dt, 0.0)
    return dt


def build_grid(nu: ProbabilityMeasure, mu: ProbabilityMeasure, sigma: DiffusionSpec, t_max: float,
               nx: int | None = None, dx: float | None = None, margin_factor: float = 6.0,
               x_range: tuple[float, float] | None = None) -> SpaceTimeGrid:
    """Grid covering both supports with ``margin_factor`` standard deviations of slack.

    Give either ``nx`` (domain from the margin rule, dx derived) or ``dx``
    (domain snapped outward to multiples of dx, so integers and 0 are nodes).
    ``x_range`` forces the domain and is checked against the margin rule.
    """
    if not t_max > 0:
        raise DomainTooNarrow("t_max must be positive")
    if (nx is None) == (dx is None):
        raise ValueError("give exactly one of nx and dx")
    if nx is not None and nx < 3:
        raise DomainTooNarrow(f"need at least 3 nodes, got nx={nx}")
    if dx is not None and not dx > 0:
        raise DomainTooNarrow("dx must be positive")
    smax = sigma.max_sigma
    pts = np.concatenate([nu.breakpoints, mu.breakpoints])
    lo, hi = float(pts.min()), float(pts.max())

    def margin(t):
        return margin_factor * math.sqrt(t) * smax

    if dx is not None:
        dt = _cfl_dt(dx, smax)
        nt = math.ceil(t_max / dt - 1e-9)
        need = margin(nt * dt)
        if x_range is None:
            i_lo = math.floor((lo - need) / dx)
            i_hi = math.ceil((hi + need) / dx)
            x_min = i_lo * dx
            n = i_hi - i_lo + 1
        else:
            x_min, x_max = map(float, x_range)
            n = int(round((x_max - x_min) / dx)) + 1
            if n < 3 or abs(x_min + (n - 1) * dx - x_max) > 1e-9 * max(1.0, abs(x_max)):
                raise DomainTooNarrow("x_range is not a whole number of dx steps")
        grid = SpaceTimeGrid(x_min, float(dx), n, dt, nt)
    else:
        t_eff = t_max
        for _ in range(8):
            m = margin(t_eff)
            x_min, x_max = (lo - m, hi + m) if x_range is None else map(float, x_range)
            d = (x_max - x_min) / (nx - 1)
            dt = _cfl_dt(d, smax)
            nt = math.ceil(t_max / dt - 1e-9)
            if nt * dt <= t_eff * (1 + 1e-12):
                break
            t_eff = nt * dt
        grid = SpaceTimeGrid(x_min, d, nx, dt, nt)

    need = margin(grid.t_max)
    if grid.x_min > lo - need * (1 - 1e-9) or grid.x_max < hi + need * (1 - 1e-9):
        raise DomainTooNarrow(
            f"domain [{grid.x_min}, {grid.x_max}] does not cover [{lo}, {hi}] with margin {need:.4g}")
    return grid


@dataclass
class PotentialSurface:
    """Stored time levels of the discrete solution.

    ``frames[r]`` is the solution at step ``frame_steps[r]``; at moderate sizes
    every step is stored. ``contact_step`` is the first step at which each
    node touches the obstacle (-1 if never), tracked at full resolution.
    """

    grid: SpaceTimeGrid
    frames: np.ndarray
    frame_steps: np.ndarray
    obstacle: np.ndarray
    initial: np.ndarray
    C: float
    contact_step: np.ndarray
    tol_contact: np.ndarray
    sigma_nodes: np.ndarray
    nu: ProbabilityMeasure
    mu: ProbabilityMeasure
    sigma: DiffusionSpec
    c_star: float
    backend: str = "compiled"
    meta: dict = field(default_factory=dict)

    @property
    def u(self) -> np.ndarray:
        """``nx x n_frames`` array of stored values."""
        return self.frames.T

    @property
    def times(self) -> np.ndarray:
        return self.frame_steps * self.grid.dt

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def at_step(self, n: int) -> np.ndarray:
        r = np.searchsorted(self.frame_steps, n)
        if r >= len(self.frame_steps) or self.frame_steps[r] != n:
            raise KeyError(f"step {n} not stored (frame stride {self.meta.get('stride')})")
        return self.frames[r]


def solve_vi(nu: ProbabilityMeasure, mu: ProbabilityMeasure, C: float, sigma: DiffusionSpec,
             grid: SpaceTimeGrid, backend_name: str | None = None,
             max_frame_bytes: int = DEFAULT_FRAME_BYTES) -> PotentialSurface:
    """Solve the obstacle problem with obstacle ``U_mu - C`` from ``U_nu``."""
    cs = c_star(nu, mu)
    if C < cs - 1e-12 * max(1.0, abs(cs)):
        raise ObstacleAboveInitial(f"C = {C!r} is below C* = {cs!r}; the obstacle exceeds U_nu")
    x = grid.x
    u0 = np.asarray(nu.potential(x), dtype=float)
    ubar = np.asarray(mu.potential(x), dtype=float) - C
    # C may sit a rounding error below C*; never let the obstacle poke above u0
    ubar = np.minimum(ubar, u0)
    sig = np.asarray(sigma(x), dtype=float)
    lam = np.minimum(sig * sig * grid.dt / (2.0 * grid.dx * grid.dx), 0.5)
    a = 1.0 - 2.0 * lam
    tol = 10.0 * EPS * (1.0 + np.abs(ubar)) + 1e-10

    nt = grid.nt
    stride = max(1, math.ceil((nt + 1) * grid.nx * 8 / max_frame_bytes))
    steps = np.arange(0, nt + 1, stride, dtype=np.int64)
    if steps[-1] != nt:
        steps = np.append(steps, nt)
    frame_row = np.full(nt + 1, -1, dtype=np.int64)
    frame_row[steps] = np.arange(len(steps))
    frames = np.empty((len(steps), grid.nx))
    contact = np.empty(grid.nx, dtype=np.int64)
    kern = backend.get(backend_name)
    kern.vi_steps(u0, ubar, a, lam, tol, int(nt), frame_row, frames, contact)
    name = "python" if kern is backend._pykernels else "compiled"
    return PotentialSurface(grid, frames, steps, ubar, u0, float(C), contact, tol, sig,
                            nu, mu, sigma, cs, name, {"stride": stride})


def surface_query(s: PotentialSurface, x, t):
    """Bilinear interpolation in (x, t); x is clamped to the domain."""
    xa = np.asarray(x, dtype=float)
    ta = np.asarray(t, dtype=float)
    xa, ta = np.broadcast_arrays(xa, ta)
    if np.any(ta < 0) or np.any(ta > s.grid.t_max * (1 + 1e-12)):
        raise TimeOutOfRange(f"t must lie in [0, {s.grid.t_max}]")
    g = s.grid
    fx = np.clip((xa - g.x_min) / g.dx, 0.0, g.nx - 1.0)
    i = np.minimum(np.floor(fx).astype(np.int64), g.nx - 2)
    wx = fx - i
    tt = s.times
    r = np.clip(np.searchsorted(tt, ta, side="right") - 1, 0, len(tt) - 2)
    wt = np.clip((ta - tt[r]) / (tt[r + 1] - tt[r]), 0.0, 1.0)
    F = s.frames

    def lerp_x(row):
        return np.where(wx == 0.0, F[row, i], (1 - wx) * F[row, i] + wx * F[row, i + 1])

    lo, hi = lerp_x(r), lerp_x(r + 1)
    out = np.where(wt == 0.0, lo, np.where(wt == 1.0, hi, (1 - wt) * lo + wt * hi))
    return out if out.ndim else float(out)


def snapshots(s: PotentialSurface, times) -> np.ndarray:
    """``len(times) x nx`` curves ``u(., t)``."""
    return np.stack([surface_query(s, s.x, np.full(s.grid.nx, t)) for t in times])


def export_surface_csv(s: PotentialSurface, path, x_every: int = 1, t_every: int = 1) -> None:
    xs = s.x[::x_every]
    with open(path, "w") as fh:
        fh.write("x,t,u\n")
        for r in range(0, len(s.frame_steps), t_every):
            t = s.frame_steps[r] * s.grid.dt
            row = s.frames[r, ::x_every]
            fh.writelines(f"{float(x)!r},{float(t)!r},{float(v)!r}\n" for x, v in zip(xs, row))


def export_snapshots_csv(s: PotentialSurface, path, times) -> None:
    """One row per node: x, U_nu, obstacle, then u at each requested time."""
    curves = snapshots(s, times)
    with open(path, "w") as fh:
        fh.write("x,U_nu,obstacle," + ",".join(f"u(t={float(t)!r})" for t in times) + "\n")
        for i, x in enumerate(s.x):
            vals = [s.initial[i], s.obstacle[i], *curves[:, i]]
            fh.write(f"{float(x)!r}," + ",".join(repr(float(v)) for v in vals) + "\n")
