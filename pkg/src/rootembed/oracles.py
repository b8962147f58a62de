"""Independent reference values: closed forms for Brownian motion and a lattice stopping solver.

Nothing here shares code with the obstacle solver. The lattice solver uses
its own (trinomial) discretization and an undamped cone of nodes instead of
boundary conditions, so agreement with the solver is evidence rather than a
restatement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import InvalidTreeParameters
from .model import DiffusionSpec, ProbabilityMeasure


def norm_cdf(z):
    return special.ndtr(z)


def norm_pdf(z):
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


def example1_u(x, t, a: float = 1.0):
    """``-E|x - B_{t ^ H_a}|`` for Brownian motion from 0 stopped on first hitting ``a > 0``."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    x, t = np.broadcast_arrays(x, t)
    out = -np.abs(x)
    pos = t > 0
    st = np.sqrt(np.where(pos, t, 1.0))
    y = x - 2.0 * a
    v = (x - 2.0 * x * norm_cdf(x / st) + 2.0 * y * norm_cdf(y / st)
         - 2.0 * st * (norm_pdf(x / st) - norm_pdf(y / st)))
    out = np.where(pos, v, out)
    out = np.where(x >= a, -x, out)
    return _scalar(out)


def example2_u(x, t, a: float = 1.0):
    """``-E|x - B_{t ^ H_0}|`` for Brownian motion from ``+-a`` (equal weights) stopped at 0."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    x, t = np.broadcast_arrays(x, t)
    ax = np.abs(x)
    pos = t > 0
    st = np.sqrt(np.where(pos, t, 1.0))
    p, m = (ax + a) / st, (ax - a) / st
    v = (-(ax + 2.0 * a) + (ax + a) * norm_cdf(p) - (ax - a) * norm_cdf(m)
         + st * (norm_pdf(p) - norm_pdf(m)))
    out = np.where(pos, v, -np.maximum(ax, a))
    return _scalar(out)


def hitting_time_cdf(a: float, t):
    """``P[H_a <= t]`` for standard Brownian motion from 0 and a level ``a > 0``."""
    t = np.asarray(t, dtype=float)
    out = np.where(t > 0, 2.0 * (1.0 - norm_cdf(a / np.sqrt(np.where(t > 0, t, 1.0)))), 0.0)
    return _scalar(out)


def hitting_time_median(a: float) -> float:
    return (a / special.ndtri(0.75)) ** 2


def expected_min_hitting(a: float, t: float) -> float:
    """``E[min(H_a, t)] = int_0^t P[H_a > s] ds``."""
    val, _ = integrate.quad(lambda s: 1.0 - hitting_time_cdf(a, s), 0.0, t, limit=200)
    return val


@dataclass
class LatticeValue:
    x: np.ndarray
    times: np.ndarray
    values: np.ndarray  # (len(times), len(x))
    dt: float
    dx: float
    p: float

    def at(self, t_index: int) -> np.ndarray:
        return self.values[t_index]


def dp_value(nu: ProbabilityMeasure, mu: ProbabilityMeasure, C: float, sigma: DiffusionSpec,
             t_max: float, dx_tree: float, x_window: tuple[float, float], p: float = 1.0 / 3.0,
             steps: int | None = None) -> LatticeValue:
    """Value of stopping ``X`` before time-to-go runs out, on a trinomial lattice.

    Stopping early pays the obstacle ``U_mu - C``; running to the end pays
    ``U_nu``. Backward induction in time-to-go gives
    ``V_k = max(obstacle, p V_{k-1}(x - dx) + (1 - 2p) V_{k-1}(x) + p V_{k-1}(x + dx))``
    with a state-dependent ``p`` when sigma varies. The lattice is a cone
    wide enough that no boundary condition is needed.
    """
    smax = sigma.max_sigma
    if not 0 < p <= 0.5:
        raise InvalidTreeParameters(f"branch probability p={p} must lie in (0, 1/2]")
    dt = 2.0 * p * dx_tree * dx_tree / (smax * smax)
    K = int(steps) if steps is not None else int(math.ceil(t_max / dt - 1e-9))
    lo, hi = x_window
    i_lo = math.floor(lo / dx_tree + 1e-9)
    i_hi = math.ceil(hi / dx_tree - 1e-9)
    nw = i_hi - i_lo + 1
    idx = np.arange(i_lo - K, i_hi + K + 1)
    xs = idx * dx_tree
    pi = np.asarray(sigma(xs), dtype=float) ** 2 * dt / (2.0 * dx_tree * dx_tree)
    if np.any(2.0 * pi > 1.0 + 1e-15):
        raise InvalidTreeParameters("sigma^2 dt / dx^2 exceeds 1 somewhere on the lattice")
    obst = np.asarray(mu.potential(xs), dtype=float) - C
    V = np.asarray(nu.potential(xs), dtype=float)
    # with C >= C* the obstacle is below U_nu; drop rounding noise that says otherwise
    obst = np.minimum(obst, V)
    out = np.empty((K + 1, nw))
    out[0] = V[K:K + nw]
    for k in range(1, K + 1):
        q = pi[k:-k]
        cont = q * V[:-2] + (1.0 - 2.0 * q) * V[1:-1] + q * V[2:]
        # the value is nonincreasing in time-to-go; the cap only removes
        # rounding above a locally linear V
        V = np.minimum(np.maximum(obst[k:-k], cont), V[1:-1])
        off = K - k
        out[k] = V[off:off + nw]
    return LatticeValue(xs[K:K + nw], np.arange(K + 1) * dt, out, dt, dx_tree, p)
