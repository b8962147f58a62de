"""Optimality of the Root stopping time for concave functionals ``E[F(tau)]``.

For increasing concave ``F`` with ``F(0) = 0`` and right derivative ``f``:

* ``M(x, t) = E^{(x,t)}[f(tau)]`` for the Root stopping time started at time t,
* ``Z(x) = int_0^x int_0^y 2 M(z, 0) / sigma^2(z) dz dy`` and the same with
  ``alpha = f(0)`` in place of ``M`` for ``A``,
* ``G(x, t) = int_0^t M(x, s) ds - Z(x)``,
* ``H(x) = int_0^{R(x)} (f(s) - M(x, s)) ds + Z(x)`` (``+inf`` off the barrier).

Then ``G(x, t) + H(x) >= F(t)`` with equality at ``t = R(x)``, ``G`` stopped at
the Root time is a martingale and unstopped it is a supermartingale. This
module assembles these objects on the solver grid and checks the statements,
and compares Root and alternative embeddings on ``E[tau ^ t]``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .barrier import Barrier, exit_barrier, extract_barrier, point_barrier
from .errors import HorizonExceeded, InfiniteInitialSlope, MismatchedProblem, NotConcave
from .model import DiffusionSpec, ProbabilityMeasure
from .simulator import HittingEnsemble, SimConfig, _mean_se, principal_expectation, simulate_chain
from .solver import SpaceTimeGrid, build_grid, solve_vi


@dataclass(frozen=True)
class ConcavePayoff:
    """``f = sum_j c_j * 1[t <= T_j]`` with ``c_j > 0``; ``F(t) = sum_j c_j min(t, T_j)``.

    ``T_j = inf`` is allowed for a constant slope; such a payoff is cut off at
    the grid horizon when assembled (``F(t ^ N)``).
    """

    coeffs: tuple
    knots: tuple
    kind: str = "step"

    @property
    def alpha(self) -> float:
        return float(sum(self.coeffs))

    @property
    def cutoff(self) -> float:
        return max(self.knots)

    def f(self, t):
        t = np.asarray(t, dtype=float)
        out = sum(c * (t <= T) for c, T in zip(self.coeffs, self.knots))
        return np.asarray(out, dtype=float) * np.ones_like(t)

    def F(self, t):
        t = np.asarray(t, dtype=float)
        out = sum(c * np.minimum(t, T) for c, T in zip(self.coeffs, self.knots))
        return np.asarray(out, dtype=float) * np.ones_like(t)

    def truncated(self, N: float) -> "ConcavePayoff":
        return ConcavePayoff(self.coeffs, tuple(min(T, N) for T in self.knots), self.kind)


def build_payoff(kind: str, **params) -> ConcavePayoff:
    """Payoff from a description.

    * ``"min"``, ``T``: ``F(s) = min(s, T)``.
    * ``"linear"``, ``slope`` (default 1), optional ``cutoff``.
    * ``"piecewise"``, ``slopes`` on consecutive intervals ending at ``knots``
      (the last slope continues to ``inf`` unless it is 0).
    * ``"callable"``, ``F`` and ``horizon``: sampled on ``n`` chords.
    """
    if kind == "min":
        T = float(params["T"])
        if not T > 0:
            raise NotConcave("T must be positive")
        return ConcavePayoff((1.0,), (T,), "min")
    if kind == "linear":
        s = float(params.get("slope", 1.0))
        if s <= 0:
            raise NotConcave("slope must be positive for an increasing payoff")
        return ConcavePayoff((s,), (float(params.get("cutoff", math.inf)),), "linear")
    if kind == "piecewise":
        slopes = [float(v) for v in params["slopes"]]
        knots = [float(v) for v in params["knots"]]
        if len(knots) not in (len(slopes), len(slopes) - 1):
            raise ValueError("need one knot per slope (the last may be omitted)")
        return _from_slopes(slopes, knots + [math.inf] * (len(slopes) - len(knots)), "piecewise")
    if kind == "callable":
        return _from_callable(params["F"], float(params["horizon"]), int(params.get("n", 2000)))
    raise ValueError(f"unknown payoff kind {kind!r}")


def _from_slopes(slopes, ends, kind) -> ConcavePayoff:
    if any(math.isinf(s) or math.isnan(s) for s in slopes):
        raise InfiniteInitialSlope("slopes must be finite")
    if any(s < 0 for s in slopes):
        raise NotConcave("slopes must be nonnegative")
    if any(b > a + 1e-12 for a, b in zip(slopes, slopes[1:])):
        raise NotConcave("slopes must be nonincreasing")
    if any(b <= a for a, b in zip(ends, ends[1:])):
        raise ValueError("knots must be increasing")
    coeffs, knots = [], []
    for j, (s, T) in enumerate(zip(slopes, ends)):
        nxt = slopes[j + 1] if j + 1 < len(slopes) else 0.0
        c = s - nxt
        if c > 0:
            coeffs.append(c)
            knots.append(T)
    if not coeffs:
        raise NotConcave("payoff is identically zero")
    return ConcavePayoff(tuple(coeffs), tuple(knots), kind)


def _from_callable(F: Callable[[float], float], horizon: float, n: int) -> ConcavePayoff:
    if abs(F(0.0)) > 1e-12:
        raise NotConcave("F(0) must be 0")
    h_small = [1e-6, 1e-8, 1e-10]
    s0 = [(F(h) - F(0.0)) / h for h in h_small]
    if not all(math.isfinite(v) for v in s0) or s0[-1] > 10.0 * max(s0[0], 1e-300) + 1.0:
        raise InfiniteInitialSlope("right derivative of F at 0 is unbounded")
    ts = np.linspace(0.0, horizon, n + 1)
    vals = np.array([F(t) for t in ts])
    chords = np.diff(vals) / np.diff(ts)
    scale = max(1.0, float(np.max(np.abs(chords))))
    if np.any(np.diff(chords) > 1e-9 * scale):
        raise NotConcave("F is not concave on [0, horizon]")
    if np.any(chords < -1e-12 * scale):
        raise NotConcave("F is not increasing")
    chords = np.maximum.accumulate(chords[::-1])[::-1]  # clean up rounding
    return _from_slopes(list(chords), list(ts[1:]), "callable")


def _stencil(sigma_nodes: np.ndarray, grid: SpaceTimeGrid):
    lam = np.minimum(sigma_nodes ** 2 * grid.dt / (2.0 * grid.dx ** 2), 0.5)
    return 1.0 - 2.0 * lam, lam


def _check_grid(b: Barrier, grid: SpaceTimeGrid):
    if b.n != grid.nx or b.x_min != grid.x_min or b.dx != grid.dx:
        raise ValueError("barrier and grid do not share nodes")


def hitting_probability(b: Barrier, sigma: DiffusionSpec, grid: SpaceTimeGrid, T: float) -> np.ndarray:
    """``P^{(x,t)}[tau <= T]`` on ``(nt+1) x nx``, by backward induction from ``T``."""
    _check_grid(b, grid)
    nT = int(math.floor(T / grid.dt + 1e-9))
    if nT > grid.nt:
        raise HorizonExceeded(f"T={T} is beyond the grid horizon {grid.t_max}")
    a, lam = _stencil(np.asarray(sigma(grid.x), dtype=float), grid)
    with np.errstate(invalid="ignore"):
        r_step = np.where(np.isfinite(b.R), np.round(b.R / grid.dt), np.iinfo(np.int64).max // 2)
    r_step = r_step.astype(np.int64)
    q = np.zeros((grid.nt + 1, grid.nx))
    cur = (nT >= r_step).astype(float)
    q[nT] = cur
    ai, li = a[1:-1], lam[1:-1]
    for n in range(nT - 1, -1, -1):
        on = n >= r_step
        nxt = np.empty_like(cur)
        nxt[1:-1] = ai * cur[1:-1] + li * (cur[:-2] + cur[2:])
        nxt[0] = nxt[-1] = 0.0
        cur = np.where(on, 1.0, nxt)
        q[n] = cur
    return q


def m_surface(b: Barrier, sigma: DiffusionSpec, p: ConcavePayoff, grid: SpaceTimeGrid):
    """``M = E^{(x,t)}[f(tau)]`` by superposing hitting probabilities of the payoff's steps."""
    if p.cutoff > grid.t_max * (1 + 1e-12) and math.isfinite(p.cutoff):
        raise HorizonExceeded(f"payoff cutoff {p.cutoff} exceeds grid horizon {grid.t_max}")
    pt = p.truncated(grid.t_max)
    M = np.zeros((grid.nt + 1, grid.nx))
    for c, T in zip(pt.coeffs, pt.knots):
        M += c * hitting_probability(b, sigma, grid, T)
    return M, pt


def _cum_from(g: np.ndarray, dx: float, i0: int) -> np.ndarray:
    """Signed trapezoid ``int_{x_{i0}}^{x_i} g``."""
    out = np.zeros_like(g)
    seg = 0.5 * dx * (g[1:] + g[:-1])
    out[i0 + 1:] = np.cumsum(seg[i0:])
    out[:i0] = -np.cumsum(seg[:i0][::-1])[::-1]
    return out


def _cumtrapz_time(M: np.ndarray, dt: float) -> np.ndarray:
    out = np.zeros_like(M)
    out[1:] = np.cumsum(0.5 * dt * (M[1:] + M[:-1]), axis=0)
    return out


@dataclass
class CorrectionFunctions:
    M: np.ndarray
    Z: np.ndarray
    A: np.ndarray
    G: np.ndarray
    H: np.ndarray
    grid: SpaceTimeGrid
    payoff: ConcavePayoff
    barrier: Barrier
    origin_index: int
    split_residual_G: float
    split_residual_H: float
    z_condition: dict = field(default_factory=dict)

    def G_at(self, x, t):
        """Bilinear interpolation of G; x clamped to the domain, t to the horizon."""
        g = self.grid
        x = np.asarray(x, dtype=float)
        t = np.clip(np.asarray(t, dtype=float), 0.0, g.t_max)
        fx = np.clip((x - g.x_min) / g.dx, 0.0, g.nx - 1.0)
        i = np.minimum(np.floor(fx).astype(np.int64), g.nx - 2)
        wx = fx - i
        ft = t / g.dt
        n = np.minimum(np.floor(ft).astype(np.int64), g.nt - 1)
        wt = ft - n
        G = self.G
        lo = (1 - wx) * G[n, i] + wx * G[n, i + 1]
        hi = (1 - wx) * G[n + 1, i] + wx * G[n + 1, i + 1]
        return (1 - wt) * lo + wt * hi


def correction_functions(M: np.ndarray, sigma: DiffusionSpec, p: ConcavePayoff, b: Barrier,
                         grid: SpaceTimeGrid) -> CorrectionFunctions:
    _check_grid(b, grid)
    x = grid.x
    i0 = int(np.argmin(np.abs(x)))
    s2 = np.asarray(sigma(x), dtype=float) ** 2
    alpha = p.alpha
    Z = _cum_from(_cum_from(2.0 * M[0] / s2, grid.dx, i0), grid.dx, i0)
    A = _cum_from(_cum_from(np.full(grid.nx, 2.0 * alpha) / s2, grid.dx, i0), grid.dx, i0)
    intM = _cumtrapz_time(M, grid.dt)
    G = intM - Z[None, :]

    t = np.arange(grid.nt + 1) * grid.dt
    fvals = p.f(t)
    H = np.full(grid.nx, np.inf)
    fin = np.isfinite(b.R) & (b.R <= grid.t_max * (1 + 1e-12))
    intF = _cumtrapz_time(fvals[:, None] - M, grid.dt)
    r_step = np.round(np.where(fin, b.R, 0.0) / grid.dt).astype(np.int64)
    H[fin] = intF[r_step[fin], np.nonzero(fin)[0]] + Z[fin]

    # the convex/concave split, assembled independently from alpha - M
    Mt = alpha - M
    Zt = _cum_from(_cum_from(2.0 * Mt[0] / s2, grid.dx, i0), grid.dx, i0)
    Gt = _cumtrapz_time(Mt, grid.dt) - Zt[None, :]
    res_G = float(np.max(np.abs(G - ((alpha * t)[:, None] - A[None, :] - Gt))))
    intFt = _cumtrapz_time(M - fvals[:, None], grid.dt)
    Ht = np.full(grid.nx, np.inf)
    Ht[fin] = intFt[r_step[fin], np.nonzero(fin)[0]] + Zt[fin]
    res_H = float(np.max(np.abs(H[fin] - (A[fin] - Ht[fin])))) if fin.any() else 0.0

    dA = np.gradient(A, grid.dx)
    zc = {"sup_abs_A_prime": float(np.max(np.abs(dA))), "sigma_max": sigma.max_sigma,
          "bounded": bool(np.all(np.isfinite(dA)))}
    return CorrectionFunctions(M, Z, A, G, H, grid, p, b, i0, res_G, res_H, zc)


@dataclass
class PathwiseReport:
    min_slack: float
    argmin_x: float
    argmin_t: float
    contact_residual: float
    contact_tol: float
    path_tol: float
    n_nodes_checked: int
    n_nodes_excluded: int

    @property
    def passed(self) -> bool:
        return self.min_slack >= -self.path_tol and self.contact_residual <= self.contact_tol

    def to_dict(self) -> dict:
        return {"min_slack": self.min_slack, "argmin_x": self.argmin_x, "argmin_t": self.argmin_t,
                "contact_residual": self.contact_residual, "contact_tol": self.contact_tol,
                "path_tol": self.path_tol, "nodes_checked": self.n_nodes_checked,
                "nodes_excluded_infinite_H": self.n_nodes_excluded, "passed": self.passed}


def pathwise_check(cf: CorrectionFunctions, p: ConcavePayoff | None = None,
                   path_tol: float = 1e-2) -> PathwiseReport:
    """Minimum of ``G + H - F`` over finite-H nodes and all grid times."""
    p = p or cf.payoff
    g = cf.grid
    fin = np.isfinite(cf.H)
    t = np.arange(g.nt + 1) * g.dt
    Ft = p.F(t)
    if not fin.any():
        return PathwiseReport(math.inf, math.nan, math.nan, 0.0, p.alpha * g.dt + 1e-3, path_tol,
                              0, int(g.nx))
    cols = np.nonzero(fin)[0]
    slack = cf.G[:, cols] + cf.H[cols][None, :] - Ft[:, None]
    n, j = np.unravel_index(int(np.argmin(slack)), slack.shape)
    r_step = np.round(cf.barrier.R[cols] / g.dt).astype(np.int64)
    contact = np.abs(slack[r_step, np.arange(cols.size)])
    return PathwiseReport(float(slack[n, j]), float(g.x[cols[j]]), float(t[n]), float(contact.max()),
                          p.alpha * g.dt + 1e-3, path_tol, int(cols.size), int(g.nx - cols.size))


@dataclass
class MartingaleReport:
    times: list
    stopped_means: list
    stopped_se: list
    free_means: list | None
    free_se: list | None
    pair_table: list  # (t_a, t_b, mean diff, se, ok)
    free_table: list | None
    stopped_ok: bool
    free_ok: bool | None
    z_condition: dict

    def to_dict(self) -> dict:
        return {"times": self.times, "stopped_means": self.stopped_means,
                "stopped_se": self.stopped_se, "free_means": self.free_means,
                "free_se": self.free_se,
                "pairs": [dict(zip(("t_a", "t_b", "diff", "se", "ok"), r)) for r in self.pair_table],
                "free_steps": None if self.free_table is None else
                [dict(zip(("t_a", "t_b", "diff", "se", "ok"), r)) for r in self.free_table],
                "stopped_ok": self.stopped_ok, "free_ok": self.free_ok,
                "z_condition": self.z_condition}


def martingale_check(e: HittingEnsemble, cf: CorrectionFunctions, times=None,
                     n_se: float = 3.0) -> MartingaleReport:
    """Drift of ``G`` along stopped (and, if recorded, unstopped) paths across checkpoints.

    Stopped paths are evaluated at the barrier node where they stopped. The
    raw position overshoots the barrier by O(sqrt(dt)), and ``G`` has a slope
    there, which shows up as a spurious drift.
    """
    times = list(e.config.checkpoint_times if times is None else times)
    vals = []
    for t in times:
        xt = e.checkpoint(t).copy()
        done = (~e.censored) & (e.tau <= t + 1e-12)
        xt[done] = e.x_tau[done]
        vals.append(cf.G_at(xt, np.minimum(e.tau, t)))
    means, ses = zip(*(_mean_se(v) for v in vals))
    pairs = []
    ok = True
    for a in range(len(times)):
        for b in range(a + 1, len(times)):
            m, s = _mean_se(vals[b] - vals[a])
            good = abs(m) <= n_se * s + 1e-12
            ok &= good
            pairs.append((times[a], times[b], m, s, bool(good)))
    fm = fs = ftab = None
    fok = None
    if e.free_checkpoints is not None:
        fv = [cf.G_at(e.checkpoint(t, free=True), np.full(e.n_paths, t)) for t in times]
        fm, fs = (list(z) for z in zip(*(_mean_se(v) for v in fv)))
        ftab = []
        fok = True
        for a in range(len(times) - 1):
            m, s = _mean_se(fv[a + 1] - fv[a])
            good = m <= n_se * s + 1e-12
            fok &= good
            ftab.append((times[a], times[a + 1], m, s, bool(good)))
    return MartingaleReport(times, list(means), list(ses), fm, fs, pairs, ftab, bool(ok),
                            None if fok is None else bool(fok), cf.z_condition)


def problem_tag(nu: ProbabilityMeasure, mu: ProbabilityMeasure, kind: str) -> dict:
    return {"nu": nu.describe(), "mu": mu.describe(), "kind": kind}


def trivial_embedding_sampler(nu: ProbabilityMeasure, mu: ProbabilityMeasure, sigma: DiffusionSpec,
                              cfg: SimConfig, dx: float, t_max: float = 2.0,
                              backend_name: str | None = None) -> HittingEnsemble:
    """Run to the mean of ``mu``, then follow the Root barrier embedding ``mu`` from that point."""
    m = mu.mean
    start = ProbabilityMeasure.dirac(m)
    g1 = build_grid(nu, mu, sigma, max(cfg.t_cap, t_max), dx=dx)
    first = point_barrier(g1.x_min, g1.dx, g1.nx, m)
    g2 = build_grid(start, mu, sigma, t_max, dx=dx)
    second = extract_barrier(solve_vi(start, mu, 0.0, sigma, g2, backend_name), warn=False)
    return simulate_chain(nu, sigma, [first, second], cfg, backend_name,
                          problem_tag(nu, mu, "run-to-mean"))


def excursion_embedding(sigma: DiffusionSpec, cfg: SimConfig, dx: float, half_width: float = 1.0,
                        span: float = 10.0, backend_name: str | None = None) -> HittingEnsemble:
    """From 0: leave ``(-w, w)``, then stop on returning to 0. Embeds the point mass at 0."""
    n = int(round(2 * span / dx)) + 1
    x_min = -round(span / dx) * dx
    d0 = ProbabilityMeasure.dirac(0.0)
    return simulate_chain(d0, sigma, [exit_barrier(x_min, dx, n, -half_width, half_width),
                                      point_barrier(x_min, dx, n, 0.0)], cfg, backend_name,
                          problem_tag(d0, d0, "excursion"))


@dataclass
class MPEReport:
    times: list
    root: list
    root_se: list
    alt: list
    alt_se: list
    diff: list
    diff_se: list
    passed: bool

    def to_dict(self) -> dict:
        return {"times": self.times, "root": self.root, "root_se": self.root_se, "alt": self.alt,
                "alt_se": self.alt_se, "diff": self.diff, "diff_se": self.diff_se,
                "passed": self.passed}


def mpe_compare(root: HittingEnsemble, alt: HittingEnsemble, t_list, n_se: float = 2.0) -> MPEReport:
    """``E[tau_root ^ t] - E[tau_alt ^ t]``; passes if no difference is below ``-n_se`` SEs."""
    for key in ("nu", "mu"):
        if key in root.problem and key in alt.problem and root.problem[key] != alt.problem[key]:
            raise MismatchedProblem(f"ensembles embed different {key}: "
                                    f"{root.problem[key]} vs {alt.problem[key]}")
    ts = [float(t) for t in t_list]
    r, rs = principal_expectation(root, ts)
    a, as_ = principal_expectation(alt, ts)
    diffs, dses = [], []
    for i, t in enumerate(ts):
        if root.n_paths == alt.n_paths:
            d, s = _mean_se(np.minimum(root.tau, t) - np.minimum(alt.tau, t))
        else:
            d, s = r[i] - a[i], math.hypot(rs[i], as_[i])
        diffs.append(d)
        dses.append(s)
    ok = all(d >= -n_se * s - 1e-12 for d, s in zip(diffs, dses))
    return MPEReport(ts, list(map(float, r)), list(map(float, rs)), list(map(float, a)),
                     list(map(float, as_)), diffs, dses, bool(ok))


def m_mc_spotcheck(b: Barrier, sigma: DiffusionSpec, p: ConcavePayoff, x: float, t: float,
                   n_paths: int, dt_sim: float, seed: int = 0, backend_name: str | None = None):
    """Monte Carlo ``E^{(x,t)}[f(tau)]`` for cross-checking the lattice ``M``."""
    shifted = Barrier(b.x_min, b.dx, np.maximum(b.R - t, 0.0))
    horizon = p.cutoff - t
    if horizon <= 0:
        return float(p.f(t)), 0.0
    cfg = SimConfig(n_paths, dt_sim, horizon, seed)
    e = simulate_chain(ProbabilityMeasure.dirac(x), sigma, [shifted], cfg, backend_name,
                       allow_all_censored=True)
    vals = np.where(e.censored, 0.0, p.f(t + e.tau))
    return _mean_se(vals)


def write_optimality_json(path, pathwise: PathwiseReport | None = None,
                          martingale: MartingaleReport | None = None, mpe: MPEReport | None = None,
                          extra: dict | None = None) -> None:
    doc = {"schema_version": 1,
           "pathwise": None if pathwise is None else pathwise.to_dict(),
           "martingale": None if martingale is None else martingale.to_dict(),
           "mpe": None if mpe is None else mpe.to_dict()}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
