"""Probability measures, potential functions, C*, the attainment set and sigma.

Measures are finite mixtures of point masses and uniform intervals, so every
potential ``U(x) = -E|Y - x|`` is available in closed form (piecewise linear
between atoms, piecewise quadratic across uniform pieces).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidMeasure, ViolatesEllipticity, ViolatesLipschitz

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class Atom:
    x: float
    w: float


@dataclass(frozen=True)
class Uniform:
    a: float
    b: float
    w: float


@dataclass(frozen=True)
class ProbabilityMeasure:
    """Finite mixture of atoms and uniform pieces on the real line."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise InvalidMeasure("measure needs at least one component")
        total = 0.0
        for c in comps:
            if isinstance(c, Atom):
                vals = (c.x, c.w)
            elif isinstance(c, Uniform):
                vals = (c.a, c.b, c.w)
                if not c.a < c.b:
                    raise InvalidMeasure(f"uniform component needs a < b, got [{c.a}, {c.b}]")
            else:
                raise InvalidMeasure(f"unknown component {c!r}")
            if not all(math.isfinite(v) for v in vals):
                raise InvalidMeasure(f"component {c!r} is not finite")
            if c.w <= 0:
                raise InvalidMeasure(f"component {c!r} has non-positive weight")
            total += c.w
        if abs(total - 1.0) > WEIGHT_TOL:
            raise InvalidMeasure(f"weights sum to {total!r}, expected 1")
        object.__setattr__(self, "components", comps)

    # construction helpers
    @classmethod
    def dirac(cls, x: float) -> "ProbabilityMeasure":
        return cls((Atom(float(x), 1.0),))

    @classmethod
    def atoms(cls, xs: Sequence[float], ws: Sequence[float] | None = None) -> "ProbabilityMeasure":
        if ws is None:
            ws = [1.0 / len(xs)] * len(xs)
        return cls(tuple(Atom(float(x), float(w)) for x, w in zip(xs, ws)))

    @classmethod
    def uniform(cls, a: float, b: float) -> "ProbabilityMeasure":
        return cls((Uniform(float(a), float(b), 1.0),))

    @property
    def mean(self) -> float:
        return math.fsum(
            c.w * c.x if isinstance(c, Atom) else c.w * 0.5 * (c.a + c.b) for c in self.components
        )

    @property
    def breakpoints(self) -> np.ndarray:
        pts = []
        for c in self.components:
            if isinstance(c, Atom):
                pts.append(c.x)
            else:
                pts.extend((c.a, c.b))
        return np.unique(np.asarray(pts, dtype=float))

    @property
    def atom_locations(self) -> np.ndarray:
        return np.unique([c.x for c in self.components if isinstance(c, Atom)])

    def potential(self, x) -> np.ndarray | float:
        """Exact potential ``-E|Y - x|``."""
        xa = np.asarray(x, dtype=float)
        out = np.zeros_like(xa)
        for c in self.components:
            if isinstance(c, Atom):
                out -= c.w * np.abs(xa - c.x)
            else:
                a, b = c.a, c.b
                mid = 0.5 * (a + b)
                inside = ((xa - a) ** 2 + (b - xa) ** 2) / (2.0 * (b - a))
                e = np.where(xa <= a, mid - xa, np.where(xa >= b, xa - mid, inside))
                out -= c.w * e
        return out if out.ndim else float(out)

    def cdf(self, x, left: bool = False) -> np.ndarray | float:
        """``P[Y <= x]`` (or ``P[Y < x]`` with ``left=True``)."""
        xa = np.asarray(x, dtype=float)
        out = np.zeros_like(xa)
        for c in self.components:
            if isinstance(c, Atom):
                hit = xa > c.x if left else xa >= c.x
                out += c.w * hit
            else:
                out += c.w * np.clip((xa - c.a) / (c.b - c.a), 0.0, 1.0)
        return out if out.ndim else float(out)

    def density_pieces(self):
        """Continuous density as sorted (lo, hi, value) pieces; atoms excluded."""
        edges = np.unique([e for c in self.components if isinstance(c, Uniform) for e in (c.a, c.b)])
        pieces = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            mid = 0.5 * (lo + hi)
            val = sum(c.w / (c.b - c.a) for c in self.components
                      if isinstance(c, Uniform) and c.a <= mid <= c.b)
            if val > 0:
                pieces.append((lo, hi, val))
        return pieces

    def mixture_tables(self):
        """Cumulative weights and [lo, hi] per component for inverse-transform sampling."""
        cw = np.cumsum([c.w for c in self.components])
        cw[-1] = 1.0
        lo = np.array([c.x if isinstance(c, Atom) else c.a for c in self.components], dtype=float)
        hi = np.array([c.x if isinstance(c, Atom) else c.b for c in self.components], dtype=float)
        return cw, lo, hi

    def sample_from_uniforms(self, u_comp, u_pos) -> np.ndarray:
        cw, lo, hi = self.mixture_tables()
        j = np.searchsorted(cw, np.asarray(u_comp), side="right")
        j = np.minimum(j, len(cw) - 1)
        return lo[j] + (hi[j] - lo[j]) * np.asarray(u_pos)

    def describe(self) -> list[str]:
        lines = []
        for c in self.components:
            if isinstance(c, Atom):
                lines.append(f"atom {c.x!r} {c.w!r}")
            else:
                lines.append(f"uniform {c.a!r} {c.b!r} {c.w!r}")
        return lines


def potential_at(m: ProbabilityMeasure, x):
    return m.potential(x)


@dataclass(frozen=True)
class PotentialFn:
    """Concave potential of a measure, sampled at its breakpoints.

    Outside the breakpoint span the potential is affine with slopes +1 (left)
    and -1 (right). Between breakpoints it is linear unless a uniform piece
    covers the gap, in which case ``__call__`` uses the exact quadratic.
    """

    measure: ProbabilityMeasure
    breakpoints: np.ndarray
    values: np.ndarray
    left_slope: float = 1.0
    right_slope: float = -1.0

    def __call__(self, x):
        return self.measure.potential(x)

    def to_csv(self, path, xs: Iterable[float]) -> None:
        xs = np.asarray(list(xs), dtype=float)
        vals = self.measure.potential(xs)
        with open(path, "w") as fh:
            fh.write("x,U\n")
            for a, b in zip(xs, vals):
                fh.write(f"{float(a)!r},{float(b)!r}\n")


def potential_fn(m: ProbabilityMeasure) -> PotentialFn:
    bp = m.breakpoints
    return PotentialFn(m, bp, np.asarray(m.potential(bp)))


def _diff(nu, mu, x):
    return mu.potential(x) - nu.potential(x)


def _gap_quadratics(nu: ProbabilityMeasure, mu: ProbabilityMeasure):
    """``U_mu - U_nu`` on each gap between breakpoints as ``c0 + c1*y + c2*y**2``, ``y = x - lo``.

    The difference is at most quadratic on a gap, so three samples pin it down.
    """
    pts = np.unique(np.concatenate([nu.breakpoints, mu.breakpoints]))
    gaps = []
    for lo, hi in zip(pts[:-1], pts[1:]):
        L = hi - lo
        d0, dm, d1 = _diff(nu, mu, np.array([lo, 0.5 * (lo + hi), hi]))
        c2 = 2.0 * (d0 - 2.0 * dm + d1) / (L * L)
        c1 = (d1 - d0) / L - c2 * L
        gaps.append((float(lo), float(hi), float(d0), float(c1), float(c2)))
    return pts, gaps


def c_star(nu: ProbabilityMeasure, mu: ProbabilityMeasure) -> float:
    """``sup_x (U_mu - U_nu)(x)``, exact for mixtures of atoms and uniforms.

    Beyond the outermost breakpoints the difference is constant and equals the
    tail limits ``+-(m_mu - m_nu)``, so those are covered by the endpoints.
    """
    pts, gaps = _gap_quadratics(nu, mu)
    cand = list(pts)
    for lo, hi, c0, c1, c2 in gaps:
        if c2 < 0:
            y = -c1 / (2.0 * c2)
            if 0.0 < y < hi - lo:
                cand.append(lo + y)
    vals = _diff(nu, mu, np.asarray(cand))
    tails = (mu.mean - nu.mean, nu.mean - mu.mean)
    return float(max(np.max(vals), *tails))


def _superlevel_in_gap(lo, hi, c0, c1, c2, level):
    """Sub-intervals of [lo, hi] where the gap quadratic is >= level."""
    L = hi - lo
    a, b, c = c2, c1, c0 - level
    if abs(a) * L * L <= 1e-14 * max(1.0, abs(c0)):
        if abs(b) * L <= 1e-14 * max(1.0, abs(c0)):
            return [(lo, hi)] if c >= 0 else []
        root = -c / b
        if b > 0:
            y0 = max(0.0, root)
            return [(lo + y0, hi)] if y0 <= L else []
        y1 = min(L, root)
        return [(lo, lo + y1)] if y1 >= 0 else []
    disc = b * b - 4 * a * c
    if disc < 0:
        return [(lo, hi)] if a > 0 else []
    sq = math.sqrt(disc)
    r1, r2 = sorted(((-b - sq) / (2 * a), (-b + sq) / (2 * a)))
    if a < 0:
        y0, y1 = max(0.0, r1), min(L, r2)
        return [(lo + y0, lo + y1)] if y0 <= y1 else []
    out = []
    if r1 >= 0:
        out.append((lo, lo + min(L, r1)))
    if r2 <= L:
        out.append((lo + max(0.0, r2), hi))
    return out


@dataclass(frozen=True)
class AdmissibleSet:
    """Closure of the set where ``U_mu - U_nu`` attains C*, in the extended reals."""

    finite_intervals: tuple
    contains_plus_inf: bool
    contains_minus_inf: bool
    a_minus: float
    a_plus: float

    @property
    def real_part_nonempty(self) -> bool:
        return len(self.finite_intervals) > 0

    def contains(self, x: float) -> bool:
        if x == math.inf:
            return self.contains_plus_inf
        if x == -math.inf:
            return self.contains_minus_inf
        return any(lo <= x <= hi for lo, hi in self.finite_intervals)

    def finite_endpoints(self) -> list[float]:
        return [v for iv in self.finite_intervals for v in iv if math.isfinite(v)]


def a_set(nu: ProbabilityMeasure, mu: ProbabilityMeasure, c_star_value: float | None = None,
          tol: float | None = None) -> AdmissibleSet:
    """Where ``U_mu - U_nu >= C* - tol``, as merged closed intervals plus the +-inf flags."""
    if c_star_value is None:
        c_star_value = c_star(nu, mu)
    if tol is None:
        tol = 1e-9 * max(1.0, abs(c_star_value))
    level = c_star_value - tol
    pts, gaps = _gap_quadratics(nu, mu)
    vals = _diff(nu, mu, pts)

    raw = []
    if vals[0] >= level:
        raw.append((-math.inf, float(pts[0])))
    raw.extend((float(p), float(p)) for p, v in zip(pts, vals) if v >= level)
    for g in gaps:
        raw.extend(_superlevel_in_gap(*g, level))
    if vals[-1] >= level:
        raw.append((float(pts[-1]), math.inf))

    # the tolerance widens each interval by ~tol/slope (or sqrt(tol) at a
    # tangency); pull such blurred endpoints back onto the breakpoint
    snap = 10.0 * math.sqrt(tol)

    def _snap(v):
        if not math.isfinite(v):
            return v
        j = int(np.argmin(np.abs(pts - v)))
        return float(pts[j]) if abs(pts[j] - v) <= snap * (1.0 + abs(pts[j])) else v

    raw = sorted((_snap(lo), _snap(hi)) for lo, hi in raw)
    merged = []
    for lo, hi in raw:
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    intervals = tuple((float(lo), float(hi)) for lo, hi in merged)

    plus = (mu.mean - nu.mean) >= level
    minus = (nu.mean - mu.mean) >= level
    if intervals:
        a_minus = -math.inf if minus else intervals[0][0]
        a_plus = math.inf if plus else intervals[-1][1]
    else:
        a_minus = -math.inf if minus else math.inf
        a_plus = math.inf if plus else -math.inf
    return AdmissibleSet(intervals, plus, minus, a_minus, a_plus)


@dataclass(frozen=True)
class DiffusionSpec:
    """Diffusion coefficient: a constant or a piecewise-linear table.

    Between table nodes sigma is interpolated linearly; beyond the table it is
    held constant.
    """

    nodes_x: tuple
    nodes_sigma: tuple
    K: float = 2.0

    @classmethod
    def constant(cls, value: float, K: float = 2.0) -> "DiffusionSpec":
        return cls((0.0,), (float(value),), float(K))

    @classmethod
    def table(cls, xs: Sequence[float], sigmas: Sequence[float], K: float) -> "DiffusionSpec":
        order = np.argsort(xs)
        return cls(tuple(float(xs[i]) for i in order), tuple(float(sigmas[i]) for i in order), float(K))

    @property
    def kind(self) -> str:
        return "constant" if len(self.nodes_x) == 1 else "table"

    @property
    def table_arrays(self):
        return np.asarray(self.nodes_x, dtype=float), np.asarray(self.nodes_sigma, dtype=float)

    def __call__(self, x):
        sx, sv = self.table_arrays
        return sigma_eval(sx, sv, x)

    @property
    def max_sigma(self) -> float:
        return float(max(self.nodes_sigma))

    @property
    def min_sigma(self) -> float:
        return float(min(self.nodes_sigma))

    def describe(self) -> list[str]:
        if self.kind == "constant":
            return [f"constant {self.nodes_sigma[0]!r}"]
        return [f"{x!r} {s!r}" for x, s in zip(self.nodes_x, self.nodes_sigma)]


def sigma_eval(sx: np.ndarray, sv: np.ndarray, x):
    """Piecewise-linear sigma with flat extrapolation.

    Written out explicitly (rather than ``np.interp``) so the compiled kernel
    can reproduce it operation for operation.
    """
    xa = np.asarray(x, dtype=float)
    if len(sx) == 1:
        out = np.full_like(xa, sv[0])
    else:
        j = np.clip(np.searchsorted(sx, xa, side="right") - 1, 0, len(sx) - 2)
        frac = (xa - sx[j]) / (sx[j + 1] - sx[j])
        out = sv[j] + (sv[j + 1] - sv[j]) * frac
        out = np.where(xa <= sx[0], sv[0], np.where(xa >= sx[-1], sv[-1], out))
    return out if out.ndim else float(out)


@dataclass
class SigmaReport:
    passed: bool
    ellipticity_violations: list = field(default_factory=list)
    lipschitz_violations: list = field(default_factory=list)
    notes: list = field(default_factory=list)


def validate_sigma(s: DiffusionSpec, raise_on_failure: bool = True) -> SigmaReport:
    """Check ``1/K < sigma < K`` and the discrete Lipschitz bound ``<= K``."""
    sx, sv = s.table_arrays
    K = s.K
    ell = [(float(x), float(v)) for x, v in zip(sx, sv) if not (1.0 / K < v < K)]
    lip = []
    for i in range(len(sx) - 1):
        ratio = abs(sv[i + 1] - sv[i]) / (sx[i + 1] - sx[i])
        if ratio > K:
            lip.append((float(sx[i]), float(sx[i + 1]), float(ratio)))
    notes = []
    if s.kind == "table":
        notes.append("sigma is piecewise linear between nodes and flat beyond them; "
                     "smoothness is approximated, not satisfied")
    rep = SigmaReport(not ell and not lip, ell, lip, notes)
    if raise_on_failure:
        if ell:
            raise ViolatesEllipticity(f"sigma outside (1/K, K) at nodes {ell}")
        if lip:
            raise ViolatesLipschitz(f"sigma slope exceeds K between nodes {lip}")
    return rep


def sample_measure(m: ProbabilityMeasure, size: int, seed: int, stream: int = 7) -> np.ndarray:
    """Deterministic i.i.d. draws of ``m`` from a counter-based stream."""
    from .rng import philox_uniforms

    u = philox_uniforms(seed, stream, size, 2)
    return m.sample_from_uniforms(u[:, 0], u[:, 1])
