"""Checks on simulated ensembles: embedding accuracy, minimality, comparison, convergence."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LatticeMismatch, TooManyCensored
from .model import ProbabilityMeasure, a_set, c_star
from .simulator import HittingEnsemble, stopped_potential_mc
from .solver import PotentialSurface, surface_query

ATOM_SNAP = 1e-9


@dataclass
class EmbeddingReport:
    ks_distance: float
    wasserstein1: float
    ks_tol: float
    w_tol: float
    ks_pass: bool
    w1_pass: bool
    censored_fraction: float
    n_used: int
    ks_stopped: float = float("nan")
    w1_checked: bool = True

    @property
    def passed(self) -> bool:
        return self.ks_pass and (self.w1_pass or not self.w1_checked)

    def to_dict(self) -> dict:
        return {"ks": self.ks_distance, "ks_stopped_only": self.ks_stopped,
                "w1": self.wasserstein1, "ks_tol": self.ks_tol, "w_tol": self.w_tol,
                "ks_pass": self.ks_pass, "w1_pass": self.w1_pass, "w1_checked": self.w1_checked,
                "censored_fraction": self.censored_fraction, "n_used": self.n_used,
                "passed": self.passed}


def _snap_to_atoms(v: np.ndarray, mu: ProbabilityMeasure) -> np.ndarray:
    out = v.copy()
    for a in mu.atom_locations:
        out[np.abs(out - a) <= ATOM_SNAP * max(1.0, abs(a))] = a
    return out


def _abs_linear_integral(c0: float, c1: float, L: float) -> float:
    """``int_0^L |c0 + c1*y| dy``."""
    if L <= 0:
        return 0.0
    e0, e1 = c0, c0 + c1 * L
    if e0 * e1 >= 0:
        return 0.5 * (abs(e0) + abs(e1)) * L
    y = -c0 / c1
    return 0.5 * abs(e0) * y + 0.5 * abs(e1) * (L - y)


def _band_distance(F, lo, width):
    """Distance of ``F`` from the band ``[lo, lo + width]``."""
    return np.maximum(np.maximum(lo - F, F - (lo + width)), 0.0)


def ks_w1(samples: np.ndarray, mu: ProbabilityMeasure) -> tuple[float, float]:
    """Exact Kolmogorov-Smirnov and Wasserstein-1 distances of an empirical law to ``mu``."""
    s = np.sort(np.asarray(samples, dtype=float))
    n = s.size
    pts = np.unique(np.concatenate([s, mu.breakpoints]))
    Fn = np.searchsorted(s, pts, side="right") / n
    Fn_left = np.searchsorted(s, pts, side="left") / n
    F = np.asarray(mu.cdf(pts))
    F_left = np.asarray(mu.cdf(pts, left=True))
    ks = float(max(np.max(np.abs(Fn - F)), np.max(np.abs(Fn_left - F_left))))
    # between consecutive points Fn is flat and F is linear
    w1 = math.fsum(
        _abs_linear_integral(F[i] - Fn[i], (F_left[i + 1] - F[i]) / (pts[i + 1] - pts[i]),
                             pts[i + 1] - pts[i])
        for i in range(pts.size - 1))
    return ks, w1


def censored_ks(stopped: np.ndarray, n_total: int, mu: ProbabilityMeasure) -> float:
    """KS distance that holds whatever the censored paths would have done.

    With ``c`` the censored fraction and ``S(x)`` the fraction of all paths
    stopped at or below ``x``, the true distribution function lies in
    ``[S(x), S(x) + c]``; this is the largest distance from the target's
    distribution function to that band. With no censoring it is plain KS.
    """
    s = np.sort(np.asarray(stopped, dtype=float))
    c = 1.0 - s.size / n_total
    pts = np.unique(np.concatenate([s, mu.breakpoints]))
    S = np.searchsorted(s, pts, side="right") / n_total
    S_left = np.searchsorted(s, pts, side="left") / n_total
    d = max(np.max(_band_distance(np.asarray(mu.cdf(pts)), S, c)),
            np.max(_band_distance(np.asarray(mu.cdf(pts, left=True)), S_left, c)))
    return float(d)


def verify_embedding(e: HittingEnsemble, mu: ProbabilityMeasure, ks_tol: float = 0.02,
                     w_tol: float | None = None, dx: float = 0.0,
                     max_censored: float = 0.01) -> EmbeddingReport:
    """Distance between the law of stopped values and the target ``mu``.

    Censored paths enter the KS statistic through :func:`censored_ks`. The
    Wasserstein check needs every path stopped and is skipped otherwise.
    """
    frac = e.censored_fraction
    if frac > max_censored:
        raise TooManyCensored(f"{frac:.2%} of paths censored (limit {max_censored:.2%})")
    v = _snap_to_atoms(e.x_tau[~e.censored], mu)
    ks_stop, w1 = ks_w1(v, mu)
    ks = censored_ks(v, e.n_paths, mu)
    if w_tol is None:
        sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
        w_tol = dx + 3.0 * sd / math.sqrt(max(v.size, 1))
    return EmbeddingReport(ks, w1, ks_tol, float(w_tol), ks <= ks_tol, w1 <= w_tol, frac,
                           int(v.size), ks_stop, not e.censored.any())


@dataclass
class MinimalityReport:
    c_star: float
    c_l_estimate: float
    c_l_se: float
    inf_local_time_estimate: float
    argmin_x: float
    literal_inf_local_time: float
    h_A_exceedance: float
    verdict: str
    tol: float
    t_final: float
    admissible: object = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"c_star": self.c_star, "c_l_estimate": self.c_l_estimate, "c_l_se": self.c_l_se,
                "inf_local_time": self.inf_local_time_estimate, "argmin_x": self.argmin_x,
                "literal_inf_local_time": self.literal_inf_local_time,
                "h_A_exceedance": self.h_A_exceedance, "verdict": self.verdict,
                "min_tol": self.tol, "t_final": self.t_final, "notes": list(self.notes)}


def default_probes(nu: ProbabilityMeasure, mu: ProbabilityMeasure, domain: tuple[float, float],
                   n: int = 601) -> np.ndarray:
    lo, hi = domain
    w = hi - lo
    A = a_set(nu, mu)
    extra = [v for v in A.finite_endpoints()] + list(nu.breakpoints) + list(mu.breakpoints)
    return np.unique(np.concatenate([np.linspace(lo - 3 * w, hi + 3 * w, n), extra]))


def admissible_exceedance(e: HittingEnsemble, nu: ProbabilityMeasure, mu: ProbabilityMeasure) -> float:
    """Fraction of paths whose pre-stop range meets the attainment set on the real line."""
    A = a_set(nu, mu)
    if not A.real_part_nonempty:
        return 0.0
    hit = np.zeros(e.n_paths, dtype=bool)
    for lo, hi in A.finite_intervals:
        hit |= (e.run_min <= hi) & (e.run_max >= lo)
    return float(np.mean(hit))


def minimality_report(e: HittingEnsemble, nu: ProbabilityMeasure, mu: ProbabilityMeasure,
                      x_probes=None, t_final: float | None = None, min_tol: float = 0.05,
                      max_exceedance: float = 0.01,
                      domain: tuple[float, float] | None = None) -> MinimalityReport:
    """Estimate the limit constant and classify the embedding.

    At a fixed time ``t``, ``U_mu(x) - u(x, t)`` lies between ``U_mu - U_nu``
    and the limit constant and increases towards it as ``t`` grows, so its
    maximum over probes estimates the limit constant from below. The gap to
    C* is the infimum of the terminal local-time profile.
    """
    cs = c_star(nu, mu)
    if t_final is None:
        t_final = e.config.checkpoint_times[-1]
    if x_probes is None:
        if domain is None:
            pts = np.concatenate([nu.breakpoints, mu.breakpoints])
            domain = (float(pts.min()) - 1.0, float(pts.max()) + 1.0)
        x_probes = default_probes(nu, mu, domain)
    xs = np.asarray(x_probes, dtype=float)
    u, se = stopped_potential_mc(e, xs, [t_final])
    u, se = u[0], se[0]
    g = np.asarray(mu.potential(xs)) - u
    i = int(np.argmax(g))
    c_l, c_l_se = float(g[i]), float(se[i])
    lt = np.asarray(nu.potential(xs)) - u
    gap = c_l - cs
    exc = admissible_exceedance(e, nu, mu)
    if gap <= min_tol and exc <= max_exceedance:
        verdict = "minimal"
    elif gap - 3.0 * c_l_se > min_tol or exc > max_exceedance:
        verdict = "non-minimal"
    else:
        verdict = "inconclusive"
    notes = [f"limit constant estimated at t={t_final}; a lower bound that tightens as t grows"]
    return MinimalityReport(cs, c_l, c_l_se, gap, float(xs[i]), float(np.min(lt)), exc, verdict,
                            min_tol, float(t_final), a_set(nu, mu), notes)


@dataclass
class SurfaceEstimate:
    x: np.ndarray
    t: np.ndarray
    est: np.ndarray  # (len(t), len(x))
    se: np.ndarray


def surface_estimate(e: HittingEnsemble, x_list, t_list) -> SurfaceEstimate:
    est, se = stopped_potential_mc(e, x_list, t_list)
    return SurfaceEstimate(np.asarray(x_list, dtype=float), np.asarray(t_list, dtype=float), est, se)


@dataclass
class ComparisonReport:
    max_violation: float
    se_at_max: float
    x_at_max: float
    t_at_max: float
    slack: float
    passed: bool

    def to_dict(self) -> dict:
        return {"max_violation": self.max_violation, "se_at_max": self.se_at_max,
                "x_at_max": self.x_at_max, "t_at_max": self.t_at_max, "slack": self.slack,
                "passed": self.passed}


def comparison_report(u_root: SurfaceEstimate, u_alt: SurfaceEstimate,
                      slack: float = 0.02) -> ComparisonReport:
    """Largest amount by which the alternative's stopped potential falls below the Root one."""
    if (u_root.x.shape != u_alt.x.shape or u_root.t.shape != u_alt.t.shape
            or not np.array_equal(u_root.x, u_alt.x) or not np.array_equal(u_root.t, u_alt.t)):
        raise LatticeMismatch("surface estimates are on different (x, t) lattices")
    d = u_root.est - u_alt.est
    s = np.sqrt(u_root.se ** 2 + u_alt.se ** 2)
    a, b = np.unravel_index(int(np.argmax(d)), d.shape)
    ok = bool(np.all(d <= 3.0 * s + slack))
    return ComparisonReport(float(d[a, b]), float(s[a, b]), float(u_root.x[b]), float(u_root.t[a]),
                            slack, ok)


@dataclass
class ConvergenceReport:
    times: np.ndarray
    gaps: np.ndarray
    nonincreasing: bool
    final_gap: float
    point_gaps: dict


def convergence_report(s: PotentialSurface, mu: ProbabilityMeasure, C: float, times=None,
                       window: tuple[float, float] | None = None, x_points=()) -> ConvergenceReport:
    """``sup_x |u(x, t) - (U_mu(x) - C)|`` over a window, at each snapshot time."""
    if times is None:
        times = s.times[:: max(1, len(s.times) // 20)]
    times = np.asarray(times, dtype=float)
    if window is None:
        pts = np.concatenate([s.nu.breakpoints, mu.breakpoints])
        window = (float(pts.min()), float(pts.max()))
    x = s.x
    m = (x >= window[0] - 1e-12) & (x <= window[1] + 1e-12)
    target = np.asarray(mu.potential(x[m])) - C
    gaps = np.array([float(np.max(np.abs(surface_query(s, x[m], np.full(m.sum(), t)) - target)))
                     for t in times])
    pg = {}
    for xp in x_points:
        tgt = float(mu.potential(xp)) - C
        pg[float(xp)] = [abs(float(surface_query(s, xp, t)) - tgt) for t in times]
    mono = bool(np.all(np.diff(gaps) <= 1e-12))
    return ConvergenceReport(times, gaps, mono, float(gaps[-1]), pg)
