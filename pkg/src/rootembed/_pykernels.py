"""Pure-numpy twins of the compiled kernels (same signatures, same arithmetic).

The obstacle stepper vectorizes over nodes and reproduces the compiled loop
bit for bit. The path kernel vectorizes over paths moving in lockstep; it
draws the same normals and applies the same stopping rule, so paths agree
with the compiled backend up to ulp-level differences in transcendental
functions.
"""
from __future__ import annotations

import numpy as np

from . import rng


def philox_block(c0, c1, c2, c3, k0, k1):
    out = rng.philox4x64(np.uint64(c0), np.uint64(c1), np.uint64(c2), np.uint64(c3), k0, k1)
    return tuple(int(w[0]) for w in out)


def vi_steps(u0, ubar, a, lam, tol, nt, frame_row, frames, contact):
    u0 = np.asarray(u0, dtype=float)
    cur = u0.copy()
    contact[:] = np.where(cur - ubar <= tol, 0, -1)
    if frame_row[0] >= 0:
        frames[frame_row[0], :] = cur
    ai, li, bi, ti = a[1:-1], lam[1:-1], ubar[1:-1], tol[1:-1]
    for n in range(1, nt + 1):
        v = ai * cur[1:-1] + li * (cur[:-2] + cur[2:])
        v = np.minimum(np.maximum(v, bi), cur[1:-1])
        nxt = cur.copy()
        nxt[1:-1] = v
        hit = (contact[1:-1] < 0) & (v - bi <= ti)
        contact[1:-1][hit] = n
        cur = nxt
        if frame_row[n] >= 0:
            frames[frame_row[n], :] = cur


def _sigma(x, sx, sv):
    if len(sx) == 1:
        return np.full_like(x, sv[0])
    j = np.clip(np.searchsorted(sx, x, side="right") - 1, 0, len(sx) - 2)
    frac = (x - sx[j]) / (sx[j + 1] - sx[j])
    out = sv[j] + (sv[j + 1] - sv[j]) * frac
    return np.where(x <= sx[0], sv[0], np.where(x >= sx[-1], sv[-1], out))


def _nearest(x, x0, dx, n):
    return np.clip(np.floor((x - x0) / dx + 0.5).astype(np.int64), 0, n - 1)


BRIDGE_CUT = 40.0


def _bridge(fprev, f, lim, c2, ub, n, R):
    """Bridge excursion to the nearest stopping node below or above the segment."""
    fmin = np.minimum(f, fprev)
    fmax = np.maximum(f, fprev)
    res = np.full(f.shape, -1, dtype=np.int64)
    pd = np.zeros(f.shape)
    pu = np.zeros(f.shape)
    jd = np.minimum(np.floor(fmin).astype(np.int64), n - 1)
    ju = np.maximum(np.floor(fmax).astype(np.int64) + 1, 0)
    jd_hit = np.full(f.shape, -1, dtype=np.int64)
    ju_hit = np.full(f.shape, -1, dtype=np.int64)
    open_ = np.ones(f.shape, dtype=bool)
    while True:
        open_ &= (jd >= 0) & ((fmin - jd) * (fmin - jd) * c2 <= BRIDGE_CUT)
        if not open_.any():
            break
        i = np.nonzero(open_)[0]
        hit = R[jd[i]] <= lim[i]
        h = i[hit]
        pd[h] = np.exp(-c2[h] * (fprev[h] - jd[h]) * (f[h] - jd[h]))
        jd_hit[h] = jd[h]
        open_[h] = False
        jd[i[~hit]] -= 1
    open_ = np.ones(f.shape, dtype=bool)
    while True:
        open_ &= (ju <= n - 1) & ((ju - fmax) * (ju - fmax) * c2 <= BRIDGE_CUT)
        if not open_.any():
            break
        i = np.nonzero(open_)[0]
        hit = R[ju[i]] <= lim[i]
        h = i[hit]
        pu[h] = np.exp(-c2[h] * (fprev[h] - ju[h]) * (f[h] - ju[h]))
        ju_hit[h] = ju[h]
        open_[h] = False
        ju[i[~hit]] += 1
    down = ub < pd
    up = ~down & (ub < pd + (1.0 - pd) * pu)
    res[down] = jd_hit[down]
    res[up] = ju_hit[up]
    return res


def _find_stop(xprev, x, trel, first, x0, dx, n, R, c2=None, ub=None):
    """Vectorized version of the kernel's stopping rule; -1 where no stop."""
    res = np.full(x.shape, -1, dtype=np.int64)
    lim = trel + 1e-12
    upw = (~first) & (x > xprev)
    dnw = (~first) & (x < xprev)
    if upw.any():
        i = np.nonzero(upw)[0]
        jlo = np.maximum(np.floor((xprev[i] - x0) / dx).astype(np.int64) + 1, 0)
        jhi = np.minimum(np.floor((x[i] - x0) / dx).astype(np.int64), n - 1)
        for d in range(int(np.max(jhi - jlo, initial=-1)) + 1):
            j = jlo + d
            open_ = (res[i] < 0) & (j <= jhi)
            hit = open_.copy()
            hit[open_] = R[j[open_]] <= lim[i][open_]
            res[i[hit]] = j[hit]
    if dnw.any():
        i = np.nonzero(dnw)[0]
        jhi = np.minimum(np.ceil((xprev[i] - x0) / dx).astype(np.int64) - 1, n - 1)
        jlo = np.maximum(np.ceil((x[i] - x0) / dx).astype(np.int64), 0)
        for d in range(int(np.max(jhi - jlo, initial=-1)) + 1):
            j = jhi - d
            open_ = (res[i] < 0) & (j >= jlo)
            hit = open_.copy()
            hit[open_] = R[j[open_]] <= lim[i][open_]
            res[i[hit]] = j[hit]
    rest = np.nonzero(res < 0)[0]
    if rest.size:
        f = (x[rest] - x0) / dx
        jl = np.clip(np.floor(f).astype(np.int64), 0, n - 1)
        jr = np.minimum(jl + 1, n - 1)
        r = np.where(f != jl, np.maximum(R[jl], R[jr]), R[jl])
        r = np.where(f <= 0.0, R[0], np.where(f >= n - 1, R[n - 1], r))
        ok = r <= lim[rest]
        res[rest[ok]] = _nearest(x[rest[ok]], x0, dx, n)
    if c2 is not None:
        rest = np.nonzero((res < 0) & ~first)[0]
        if rest.size:
            res[rest] = _bridge((xprev[rest] - x0) / dx, (x[rest] - x0) / dx, lim[rest],
                                c2[rest], ub[rest], n, R)
    return res


def simulate_paths(k0, k1, p_start, p_end, cw, clo, chi, sx, sv, dt, max_steps,
                   ph_x0, ph_dx, ph_n, ph_off, R_all, ck_idx, record_free,
                   occ_on, occ_x0, occ_h, occ, tau, xtau, xraw, cens, ck, ckfree, rmin, rmax):
    n = p_end - p_start
    nph = len(ph_x0)
    nck = len(ck_idx)
    nbins = occ.shape[1]
    sqdt = np.sqrt(dt)
    last_ck = int(ck_idx[-1]) if nck else 0
    ck_pos = {int(c): m for m, c in enumerate(ck_idx)}
    Rs = [R_all[ph_off[p]:ph_off[p] + ph_n[p]] for p in range(nph)]

    paths = np.arange(p_start, p_end, dtype=np.uint64)
    r0, r1, _, _ = rng.philox4x64(0, paths, 1, 0, k0, k1)
    j = np.minimum(np.searchsorted(cw, rng.bits_to_unit(r0), side="right"), len(cw) - 1)
    x = clo[j] + (chi[j] - clo[j]) * rng.bits_to_unit(r1)
    xf = x.copy()
    xr = x.copy()
    lo_run = np.full(n, np.inf)
    hi_run = np.full(n, -np.inf)
    ph = np.zeros(n, dtype=np.int64)
    kstart = np.zeros(n, dtype=np.int64)
    stopped = np.zeros(n, dtype=bool)
    t_stop = np.zeros(n)

    def settle(idx, xprev_idx, trel_idx, first_flags, k, s2dt=None, ub=None):
        """Apply stops (and phase switches) for paths ``idx`` at step ``k``."""
        first = first_flags
        while idx.size:
            jj = np.full(idx.size, -1, dtype=np.int64)
            for p in np.unique(ph[idx]):
                sel = ph[idx] == p
                c2 = None if s2dt is None else 2.0 * ph_dx[p] * ph_dx[p] / s2dt[sel]
                jj[sel] = _find_stop(xprev_idx[sel], x[idx[sel]], trel_idx[sel], first[sel],
                                     ph_x0[p], ph_dx[p], ph_n[p], Rs[p], c2,
                                     None if ub is None else ub[sel])
            got = jj >= 0
            idx, jj = idx[got], jj[got]
            s2dt = ub = None
            if not idx.size:
                return
            xr[idx] = x[idx]
            x[idx] = ph_x0[ph[idx]] + jj * ph_dx[ph[idx]]
            done = ph[idx] == nph - 1
            stopped[idx[done]] = True
            t_stop[idx[done]] = k * dt
            idx = idx[~done]
            ph[idx] += 1
            kstart[idx] = k
            xprev_idx = x[idx].copy()
            trel_idx = np.zeros(idx.size)
            first = np.ones(idx.size, dtype=bool)

    all_idx = np.arange(n)
    settle(all_idx, x.copy(), np.zeros(n), np.ones(n, dtype=bool), 0)
    xr[stopped] = xf[stopped]
    if 0 in ck_pos:
        ck[:, ck_pos[0]] = x
        if record_free:
            ckfree[:, ck_pos[0]] = xf

    k = 0
    z = None
    while True:
        moving = ~stopped if k < max_steps else np.zeros(n, dtype=bool)
        free_on = bool(record_free) and k < last_ck
        if not moving.any() and not free_on:
            break
        if (k & 3) == 0:
            z = rng.normal_block(int(k0) | (int(k1) << 64), k >> 2, paths)
            ubr = rng.bridge_block(int(k0) | (int(k1) << 64), k >> 2, paths)
        xi = z[:, k & 3]
        mi = np.nonzero(moving)[0]
        xprev = x[mi].copy()
        s = _sigma(xprev, sx, sv)
        if occ_on:
            b = np.floor((xprev - occ_x0) / occ_h).astype(np.int64)
            ok = (b >= 0) & (b < nbins)
            m_row = int(np.searchsorted(ck_idx, k, side="right"))
            np.add.at(occ[m_row], b[ok], (s * s * dt)[ok])
        x[mi] = xprev + s * sqdt * xi[mi]
        if free_on:
            xf[:] = xf + _sigma(xf, sx, sv) * sqdt * xi
        elif record_free:
            xf[mi] = xf[mi] + _sigma(xf[mi], sx, sv) * sqdt * xi[mi]
        lo_run[mi] = np.minimum(lo_run[mi], xprev)
        hi_run[mi] = np.maximum(hi_run[mi], xprev)
        k += 1
        trel = (k - kstart[mi]).astype(np.float64) * dt
        settle(mi, xprev, trel, np.zeros(mi.size, dtype=bool), k, s * s * dt, ubr[mi, (k - 1) & 3])
        if k in ck_pos:
            ck[:, ck_pos[k]] = x
            if record_free:
                ckfree[:, ck_pos[k]] = xf

    # checkpoints never reached keep the final (stopped) value
    reached = np.asarray(ck_idx) <= k
    for m in np.nonzero(~reached)[0]:
        ck[:, m] = x
    tau[:] = np.where(stopped, t_stop, max_steps * dt)
    xtau[:] = x
    xraw[:] = np.where(stopped, xr, x)
    cens[:] = (~stopped).astype(np.uint8)
    rmin[:] = lo_run
    rmax[:] = hi_run
