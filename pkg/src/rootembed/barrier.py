"""Barrier function R(x): first time each grid node touches the obstacle.

The stopping region is ``{(x, t): t >= R(x)}``. ``R = inf`` means no contact
was observed inside the solve window, which also covers contact that would
happen after it.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import IOFailure, ParseFailure, TrivialBarrierWarning
from .solver import PotentialSurface

CSV_MAGIC = "# rootembed barrier v1"


@dataclass
class Barrier:
    """Per-node barrier on an evenly spaced grid ``x_min + i*dx``."""

    x_min: float
    dx: float
    R: np.ndarray
    dt: float = float("nan")
    tol_contact: float = float("nan")
    t_window: float = float("inf")
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        if self.R.ndim != 1 or self.R.size < 1:
            raise ValueError("R must be a non-empty 1-d array")
        if np.any(np.isnan(self.R)) or np.any(self.R < 0):
            raise ValueError("R must lie in [0, inf]")

    @property
    def n(self) -> int:
        return self.R.size

    @property
    def x_nodes(self) -> np.ndarray:
        return self.x_min + np.arange(self.n) * self.dx

    @property
    def has_finite(self) -> bool:
        """Whether any node is ever stopped (zero-one law: if not, nothing stops)."""
        return bool(np.isfinite(self.R).any())

    def nearest(self, x) -> np.ndarray:
        j = np.floor((np.asarray(x, dtype=float) - self.x_min) / self.dx + 0.5).astype(np.int64)
        return np.clip(j, 0, self.n - 1)

    def R_at(self, x):
        """Piecewise-constant barrier: R at the nearest node."""
        return self.R[self.nearest(x)]

    def in_stopping_region(self, x, t) -> np.ndarray:
        return np.asarray(t) >= self.R_at(x)

    @classmethod
    def from_function(cls, x_min: float, dx: float, n: int, fn, **kw) -> "Barrier":
        xs = x_min + np.arange(n) * dx
        return cls(x_min, dx, np.array([fn(x) for x in xs], dtype=float), **kw)

    def equals(self, other: "Barrier") -> bool:
        return (self.x_min == other.x_min and self.dx == other.dx
                and np.array_equal(self.R, other.R))


def extract_barrier(s: PotentialSurface, warn: bool = True) -> Barrier:
    """``R_i = dt * (first step with u_i - obstacle_i <= tol)``; ``inf`` if none."""
    R = np.where(s.contact_step >= 0, s.contact_step * s.grid.dt, np.inf)
    b = Barrier(s.grid.x_min, s.grid.dx, R, s.grid.dt, float(np.max(s.tol_contact)),
                s.grid.t_max, {"C": s.C, "c_star": s.c_star, "nu": s.nu, "mu": s.mu,
                               "sigma": s.sigma})
    if warn and not b.has_finite:
        warnings.warn("no node reached the obstacle inside the solve window; "
                      "every path would run forever", TrivialBarrierWarning, stacklevel=2)
    return b


def write_barrier(b: Barrier, path) -> None:
    lines = [CSV_MAGIC,
             f"# x_min={float(b.x_min)!r}",
             f"# dx={float(b.dx)!r}",
             f"# dt={float(b.dt)!r}",
             f"# tol_contact={float(b.tol_contact)!r}",
             f"# t_window={float(b.t_window)!r}",
             "x,R"]
    for x, r in zip(b.x_nodes, b.R):
        lines.append(f"{float(x)!r},{'inf' if math.isinf(r) else repr(float(r))}")
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IOFailure(f"cannot write barrier to {path}: {exc}") from exc


def _float(tok: str, where: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ParseFailure(f"{where}: {tok!r} is not a number") from None


def read_barrier(path) -> Barrier:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise IOFailure(f"cannot read barrier from {path}: {exc}") from exc
    meta: dict[str, float] = {}
    xs, Rs = [], []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                meta[k.strip()] = _float(v.strip(), f"line {lineno}")
            continue
        if not header_seen:
            if line.replace(" ", "") != "x,R":
                raise ParseFailure(f"line {lineno}: expected header 'x,R', got {line!r}")
            header_seen = True
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise ParseFailure(f"line {lineno}: expected 2 columns, got {len(parts)}")
        x = _float(parts[0], f"line {lineno}")
        r = math.inf if parts[1].lower() in ("inf", "+inf") else _float(parts[1], f"line {lineno}")
        if not math.isfinite(x):
            raise ParseFailure(f"line {lineno}: x must be finite")
        if math.isnan(r) or r < 0:
            raise ParseFailure(f"line {lineno}: R must lie in [0, inf], got {parts[1]!r}")
        xs.append(x)
        Rs.append(r)
    if not header_seen or not xs:
        raise ParseFailure("no barrier rows found")
    xs_a = np.asarray(xs)
    if len(xs_a) > 1 and np.any(np.diff(xs_a) <= 0):
        raise ParseFailure("x column must be strictly increasing")
    x_min = meta.get("x_min", xs_a[0])
    dx = meta.get("dx", (xs_a[-1] - xs_a[0]) / max(len(xs_a) - 1, 1) if len(xs_a) > 1 else 1.0)
    expected = x_min + np.arange(len(xs_a)) * dx
    if not np.allclose(expected, xs_a, rtol=0, atol=1e-9 * max(1.0, float(np.max(np.abs(xs_a))))):
        raise ParseFailure("x column is not an evenly spaced grid")
    return Barrier(float(x_min), float(dx), np.asarray(Rs), meta.get("dt", float("nan")),
                   meta.get("tol_contact", float("nan")), meta.get("t_window", float("inf")))


def point_barrier(x_min: float, dx: float, n: int, x_stop: float) -> Barrier:
    """Stop immediately at the node closest to ``x_stop``; run freely elsewhere."""
    R = np.full(n, np.inf)
    j = int(np.clip(np.floor((x_stop - x_min) / dx + 0.5), 0, n - 1))
    R[j] = 0.0
    return Barrier(x_min, dx, R, meta={"kind": "point", "x_stop": float(x_min + j * dx)})


def exit_barrier(x_min: float, dx: float, n: int, lo: float, hi: float) -> Barrier:
    """Stop immediately at nodes outside the open interval ``(lo, hi)``."""
    xs = x_min + np.arange(n) * dx
    tol = 1e-9 * max(1.0, abs(lo), abs(hi))
    R = np.where((xs <= lo + tol) | (xs >= hi - tol), 0.0, np.inf)
    return Barrier(x_min, dx, R, meta={"kind": "exit", "interval": (lo, hi)})
