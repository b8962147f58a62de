"""Euler paths of ``dX = sigma(X) dW`` stopped on entering ``{t >= R(X_t)}``.

Paths are split into a fixed number of contiguous batches. Each batch is a
deterministic function of ``(seed, path index)``, and batch results are
combined in batch order, so the ensemble does not depend on ``workers``.

A path may be stopped by a chain of barriers: on reaching the stopping region
of one barrier it is placed on the stop node and continues under the next,
with the barrier clock restarted. A single barrier is the ordinary case.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import backend, rng
from .barrier import Barrier
from .errors import AllPathsCensored, MissingCheckpoint
from .model import DiffusionSpec, ProbabilityMeasure, validate_sigma


@dataclass(frozen=True)
class SimConfig:
    n_paths: int
    dt_sim: float
    t_cap: float
    master_seed: int = 0
    checkpoint_times: tuple = ()
    record_unstopped: bool = False
    occupation: bool = False
    n_batches: int = 16
    workers: int = 1

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if not self.dt_sim > 0:
            raise ValueError("dt_sim must be positive")
        cks = tuple(sorted(float(c) for c in self.checkpoint_times))
        if len(set(cks)) != len(cks):
            raise ValueError("checkpoint times must be distinct")
        if cks and (cks[0] < 0 or cks[-1] > self.t_cap * (1 + 1e-12)):
            raise ValueError("checkpoints must lie in [0, t_cap]")
        object.__setattr__(self, "checkpoint_times", cks)

    @property
    def max_steps(self) -> int:
        return int(math.ceil(self.t_cap / self.dt_sim - 1e-9))

    def checkpoint_steps(self) -> np.ndarray:
        out = []
        for c in self.checkpoint_times:
            k = int(round(c / self.dt_sim))
            if abs(k * self.dt_sim - c) > 1e-9 * max(1.0, c):
                raise ValueError(f"checkpoint {c} is not a multiple of dt_sim={self.dt_sim}")
            out.append(k)
        return np.asarray(out, dtype=np.int64)

    def to_dict(self) -> dict:
        return {"n_paths": self.n_paths, "dt_sim": self.dt_sim, "t_cap": self.t_cap,
                "master_seed": self.master_seed, "checkpoint_times": list(self.checkpoint_times),
                "record_unstopped": self.record_unstopped, "n_batches": self.n_batches}


@dataclass
class HittingEnsemble:
    tau: np.ndarray
    x_tau: np.ndarray
    x_tau_raw: np.ndarray
    censored: np.ndarray
    checkpoints: np.ndarray
    free_checkpoints: np.ndarray | None
    run_min: np.ndarray
    run_max: np.ndarray
    config: SimConfig
    nu: ProbabilityMeasure
    sigma: DiffusionSpec
    occupation: np.ndarray | None = None
    occ_x0: float = 0.0
    occ_h: float = 1.0
    occ_eps: float = 0.0
    batch_bounds: np.ndarray | None = None
    problem: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.tau.size

    @property
    def censored_fraction(self) -> float:
        return float(np.mean(self.censored))

    def checkpoint(self, t: float, free: bool = False) -> np.ndarray:
        m = self._ck_index(t)
        if free:
            if self.free_checkpoints is None:
                raise MissingCheckpoint("unstopped paths were not recorded")
            return self.free_checkpoints[:, m]
        return self.checkpoints[:, m]

    def _ck_index(self, t: float) -> int:
        cks = self.config.checkpoint_times
        for m, c in enumerate(cks):
            if abs(c - t) <= 1e-9 * max(1.0, abs(t)):
                return m
        raise MissingCheckpoint(f"t={t} is not a checkpoint (have {list(cks)})")


def _phase_arrays(barriers):
    x0 = np.array([b.x_min for b in barriers], dtype=float)
    dx = np.array([b.dx for b in barriers], dtype=float)
    n = np.array([b.n for b in barriers], dtype=np.int64)
    off = np.concatenate([[0], np.cumsum(n)[:-1]]).astype(np.int64)
    R = np.ascontiguousarray(np.concatenate([b.R for b in barriers]), dtype=float)
    return x0, dx, n, off, R


def simulate_chain(nu: ProbabilityMeasure, sigma: DiffusionSpec, barriers, cfg: SimConfig,
                   backend_name: str | None = None, problem: dict | None = None,
                   allow_all_censored: bool = False) -> HittingEnsemble:
    """Paths from ``nu`` stopped successively at each barrier in ``barriers``."""
    validate_sigma(sigma)
    barriers = list(barriers)
    if not barriers:
        raise ValueError("need at least one barrier")
    kern = backend.get(backend_name)
    n = cfg.n_paths
    ck_idx = cfg.checkpoint_steps()
    nck = ck_idx.size
    max_steps = cfg.max_steps
    k0, k1 = rng.seed_key(int(cfg.master_seed))
    cw, clo, chi = (np.ascontiguousarray(a, dtype=float) for a in nu.mixture_tables())
    sx, sv = (np.ascontiguousarray(a) for a in sigma.table_arrays)
    ph = _phase_arrays(barriers)

    occ_eps = 3.0 * sigma.max_sigma * math.sqrt(cfg.dt_sim)
    occ_h = occ_eps / 4.0
    b0 = barriers[0]
    occ_x0 = b0.x_min
    nbins = int(math.ceil((b0.dx * (b0.n - 1)) / occ_h)) + 1 if cfg.occupation else 1

    nb = max(1, min(cfg.n_batches, n))
    bounds = np.linspace(0, n, nb + 1).round().astype(np.int64)
    tau = np.empty(n)
    xtau = np.empty(n)
    xraw = np.empty(n)
    cens = np.empty(n, dtype=np.uint8)
    ck = np.zeros((n, nck))
    ckfree = np.zeros((n, nck)) if cfg.record_unstopped else np.zeros((n, 0))
    rmin = np.empty(n)
    rmax = np.empty(n)
    occ = np.zeros((nb, nck + 1, nbins))

    def run(bi):
        s, e = int(bounds[bi]), int(bounds[bi + 1])
        if s == e:
            return
        free_view = ckfree[s:e] if cfg.record_unstopped else np.zeros((e - s, max(nck, 1)))
        kern.simulate_paths(k0, k1, s, e, cw, clo, chi, sx, sv, float(cfg.dt_sim), int(max_steps),
                            *ph, ck_idx, int(cfg.record_unstopped),
                            int(cfg.occupation), float(occ_x0), float(occ_h), occ[bi],
                            tau[s:e], xtau[s:e], xraw[s:e], cens[s:e], ck[s:e], free_view,
                            rmin[s:e], rmax[s:e])

    if kern is backend._pykernels and not cfg.occupation:
        # the numpy kernel pays per call, not per path; paths are independent
        # so one call over all of them gives the same numbers
        free_all = ckfree if cfg.record_unstopped else np.zeros((n, max(nck, 1)))
        kern.simulate_paths(k0, k1, 0, n, cw, clo, chi, sx, sv, float(cfg.dt_sim), int(max_steps),
                            *ph, ck_idx, int(cfg.record_unstopped), 0, float(occ_x0),
                            float(occ_h), occ[0], tau, xtau, xraw, cens, ck, free_all, rmin, rmax)
    elif cfg.workers > 1 and nb > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            list(pool.map(run, range(nb)))
    else:
        for bi in range(nb):
            run(bi)

    censored = cens.astype(bool)
    tau[censored] = cfg.t_cap
    if censored.all() and not allow_all_censored:
        raise AllPathsCensored(f"all {n} paths ran to t_cap={cfg.t_cap} without stopping")
    return HittingEnsemble(tau, xtau, xraw, censored, ck,
                           ckfree if cfg.record_unstopped else None, rmin, rmax, cfg, nu, sigma,
                           occ if cfg.occupation else None, occ_x0, occ_h, occ_eps, bounds,
                           dict(problem or {}))


def simulate_hitting(nu: ProbabilityMeasure, sigma: DiffusionSpec, b: Barrier, cfg: SimConfig,
                     backend_name: str | None = None, problem: dict | None = None,
                     **kw) -> HittingEnsemble:
    """Paths from ``nu`` stopped at the Root barrier ``b``."""
    if problem is None and "mu" in b.meta:
        problem = {"nu": nu.describe(), "mu": b.meta["mu"].describe(), "kind": "root"}
    return simulate_chain(nu, sigma, [b], cfg, backend_name, problem, **kw)


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    n = v.size
    m = math.fsum(v) / n
    if n < 2:
        return m, math.inf
    var = math.fsum((v - m) ** 2) / (n - 1)
    return m, math.sqrt(var / n)


def stopped_potential_mc(e: HittingEnsemble, x_list, t_list, free: bool = False):
    """``-mean|x - X_{t^tau}|`` and its standard error, shapes ``(len(t), len(x))``."""
    xs = np.atleast_1d(np.asarray(x_list, dtype=float))
    ts = list(np.atleast_1d(t_list))
    est = np.empty((len(ts), xs.size))
    se = np.empty_like(est)
    for a, t in enumerate(ts):
        col = e.checkpoint(float(t), free=free)
        for b, x in enumerate(xs):
            m, s = _mean_se(np.abs(x - col))
            est[a, b], se[a, b] = -m, s
    return est, se


@dataclass
class LocalTimeProfile:
    x: np.ndarray
    t: float
    estimate: np.ndarray
    se: np.ndarray
    occupation: np.ndarray | None
    occupation_se: np.ndarray | None
    eps: float


def local_time_profile(e: HittingEnsemble, x_list, t: float) -> LocalTimeProfile:
    """``E[L^x_{t^tau}]`` from Tanaka's formula, plus the occupation estimator if recorded."""
    xs = np.atleast_1d(np.asarray(x_list, dtype=float))
    u, se = stopped_potential_mc(e, xs, [t])
    est = np.asarray(e.nu.potential(xs)) - u[0]
    occ = occ_se = None
    if e.occupation is not None:
        m = e._ck_index(t)
        cum = e.occupation[:, : m + 1, :].sum(axis=1)  # (batch, bin)
        centers = e.occ_x0 + (np.arange(cum.shape[1]) + 0.5) * e.occ_h
        sizes = np.diff(e.batch_bounds).astype(float)
        keep = sizes > 0
        occ = np.empty(xs.size)
        occ_se = np.empty(xs.size)
        for i, x in enumerate(xs):
            win = np.abs(centers - x) < e.occ_eps
            per_batch = cum[keep][:, win].sum(axis=1) / (2.0 * e.occ_eps * sizes[keep])
            w = sizes[keep] / sizes[keep].sum()
            occ[i] = float(np.sum(w * per_batch))
            nbk = per_batch.size
            occ_se[i] = (float(np.sqrt(np.sum(w * (per_batch - occ[i]) ** 2) / max(nbk - 1, 1)))
                         if nbk > 1 else math.inf)
    return LocalTimeProfile(xs, float(t), est, se[0], occ, occ_se, e.occ_eps)


def principal_expectation(e: HittingEnsemble, t_list):
    """``mean(min(tau, t))`` with standard errors."""
    ts = np.atleast_1d(np.asarray(t_list, dtype=float))
    if np.any(ts > e.config.t_cap * (1 + 1e-12)):
        raise ValueError("principal expectations are only available for t <= t_cap")
    est = np.empty(ts.size)
    se = np.empty(ts.size)
    for i, t in enumerate(ts):
        est[i], se[i] = _mean_se(np.minimum(e.tau, t))
    return est, se


def ensemble_summary(e: HittingEnsemble, bins: int = 50) -> dict:
    q = [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99]
    tq = np.quantile(e.tau, q)
    counts, edges = np.histogram(e.x_tau[~e.censored], bins=bins) if (~e.censored).any() else ([], [])
    return {
        "n_paths": e.n_paths,
        "censored_fraction": e.censored_fraction,
        "tau_mean": _mean_se(e.tau)[0],
        "tau_quantiles": {str(a): float(b) for a, b in zip(q, tq)},
        "x_tau_histogram": {"edges": [float(v) for v in edges], "counts": [int(c) for c in counts]},
        "config": e.config.to_dict(),
    }


def write_summary_json(e: HittingEnsemble, path) -> None:
    with open(path, "w") as fh:
        json.dump(ensemble_summary(e), fh, indent=2, sort_keys=True)


def write_raw_csv(e: HittingEnsemble, path) -> None:
    with open(path, "w") as fh:
        fh.write("path,tau,x_tau,censored\n")
        for i in range(e.n_paths):
            fh.write(f"{i},{float(e.tau[i])!r},{float(e.x_tau[i])!r},{int(e.censored[i])}\n")
