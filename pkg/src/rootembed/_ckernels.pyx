# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: projected explicit obstacle stepping and barrier-stopped paths.

Both functions mirror ``_pykernels`` operation for operation. The obstacle
solver is bitwise identical across backends; the path kernel differs only
where libm and numpy disagree in the last ulp of log/sin/cos.
"""
from libc.math cimport sqrt, log, cos, sin, exp, floor, ceil, INFINITY
from libc.stdint cimport uint64_t, int64_t, uint8_t

cdef extern from *:
    """
    #include <stdint.h>
    static inline uint64_t mulhilo64(uint64_t a, uint64_t b, uint64_t* hi) {
        unsigned __int128 p = (unsigned __int128)a * b;
        *hi = (uint64_t)(p >> 64);
        return (uint64_t)p;
    }
    """
    uint64_t mulhilo64(uint64_t a, uint64_t b, uint64_t* hi) nogil

cdef uint64_t M0 = 0xD2E7470EE14C6C93ULL
cdef uint64_t M1 = 0xCA5A826395121157ULL
cdef uint64_t W0 = 0x9E3779B97F4A7C15ULL
cdef uint64_t W1 = 0xBB67AE8584CAA73BULL
cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.1102230246251565e-16
# bridge crossing probabilities below exp(-BRIDGE_CUT) are treated as zero
cdef double BRIDGE_CUT = 40.0


cdef inline void philox(uint64_t* c, uint64_t k0, uint64_t k1) noexcept nogil:
    cdef int r
    cdef uint64_t hi0, lo0, hi1, lo1
    for r in range(10):
        lo0 = mulhilo64(M0, c[0], &hi0)
        lo1 = mulhilo64(M1, c[2], &hi1)
        c[0] = hi1 ^ c[1] ^ k0
        c[1] = lo1
        c[2] = hi0 ^ c[3] ^ k1
        c[3] = lo0
        k0 += W0
        k1 += W1


def philox_block(uint64_t c0, uint64_t c1, uint64_t c2, uint64_t c3, uint64_t k0, uint64_t k1):
    """Single Philox4x64-10 evaluation, exposed for cross-backend tests."""
    cdef uint64_t c[4]
    c[0] = c0; c[1] = c1; c[2] = c2; c[3] = c3
    philox(c, k0, k1)
    return c[0], c[1], c[2], c[3]


cdef inline double unit(uint64_t r) noexcept nogil:
    return <double>(r >> 11) * INV_2_53


cdef inline double open_unit(uint64_t r) noexcept nogil:
    return <double>((r >> 11) + 1) * INV_2_53


cdef inline void normals(uint64_t block, uint64_t path, uint64_t k0, uint64_t k1, double* z) noexcept nogil:
    cdef uint64_t c[4]
    cdef double rad, ang
    c[0] = block; c[1] = path; c[2] = 0; c[3] = 0
    philox(c, k0, k1)
    rad = sqrt(-2.0 * log(open_unit(c[0])))
    ang = TWO_PI * unit(c[1])
    z[0] = rad * cos(ang)
    z[1] = rad * sin(ang)
    rad = sqrt(-2.0 * log(open_unit(c[2])))
    ang = TWO_PI * unit(c[3])
    z[2] = rad * cos(ang)
    z[3] = rad * sin(ang)


cdef inline void bridge_units(uint64_t block, uint64_t path, uint64_t k0, uint64_t k1, double* u) noexcept nogil:
    cdef uint64_t c[4]
    c[0] = block; c[1] = path; c[2] = 0; c[3] = 1
    philox(c, k0, k1)
    u[0] = unit(c[0])
    u[1] = unit(c[1])
    u[2] = unit(c[2])
    u[3] = unit(c[3])


cdef inline double sigma_at(double x, const double* sx, const double* sv, int64_t ns) noexcept nogil:
    cdef int64_t lo, hi, mid
    cdef double frac
    if ns == 1 or x <= sx[0]:
        return sv[0]
    if x >= sx[ns - 1]:
        return sv[ns - 1]
    lo = 0
    hi = ns - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if sx[mid] <= x:
            lo = mid
        else:
            hi = mid
    frac = (x - sx[lo]) / (sx[lo + 1] - sx[lo])
    return sv[lo] + (sv[lo + 1] - sv[lo]) * frac


def vi_steps(const double[::1] u0, const double[::1] ubar, const double[::1] a,
             const double[::1] lam, const double[::1] tol, int64_t nt,
             const int64_t[::1] frame_row, double[:, ::1] frames, int64_t[::1] contact):
    """Projected explicit steps ``u <- max(a*u + lam*(u[i-1] + u[i+1]), ubar)``.

    The result is also capped by the previous level. In exact arithmetic the
    cap never binds (the scheme is monotone and u0 is concave); in floating
    point it absorbs last-ulp rounding so time-monotonicity holds exactly.

    ``frame_row[n]`` is the output row for time level ``n`` or -1. ``contact``
    receives the first level at which ``u - ubar <= tol`` (-1 if never).
    """
    cdef Py_ssize_t nx = u0.shape[0]
    cdef Py_ssize_t i
    cdef int64_t n, row
    cdef double v
    cdef double[::1] buf_a = u0.copy()
    cdef double[::1] buf_b = u0.copy()
    cdef double* cur = &buf_a[0]
    cdef double* nxt = &buf_b[0]
    cdef double* tmp
    with nogil:
        for i in range(nx):
            contact[i] = 0 if cur[i] - ubar[i] <= tol[i] else -1
        row = frame_row[0]
        if row >= 0:
            for i in range(nx):
                frames[row, i] = cur[i]
        for n in range(1, nt + 1):
            for i in range(1, nx - 1):
                v = a[i] * cur[i] + lam[i] * (cur[i - 1] + cur[i + 1])
                if v < ubar[i]:
                    v = ubar[i]
                if v > cur[i]:
                    v = cur[i]
                nxt[i] = v
                if contact[i] < 0 and v - ubar[i] <= tol[i]:
                    contact[i] = n
            tmp = cur
            cur = nxt
            nxt = tmp
            row = frame_row[n]
            if row >= 0:
                for i in range(nx):
                    frames[row, i] = cur[i]


cdef inline int64_t find_stop(double fprev, double f, double trel, int first,
                              int64_t n, const double* R, double c2, double ub) noexcept nogil:
    """Node at which the path stops this step, or -1.

    ``f`` is the position in grid units, ``(x - x0) / dx``. Nodes swept by the
    segment ``fprev -> f`` are checked in travel order, then the end point,
    then a Brownian-bridge excursion to the nearest stopping node on either
    side: with ``c2 = 2 dx^2 / (sigma^2 dt)`` the bridge reaches node ``j``
    with probability ``exp(-c2 (fprev - j)(f - j))``, compared against ``ub``.
    """
    cdef int64_t j, jlo, jhi, jd, ju
    cdef double fmin, fmax, pd, pu
    if not first:
        if f > fprev:
            jlo = <int64_t>floor(fprev) + 1
            jhi = <int64_t>floor(f)
            if jlo < 0:
                jlo = 0
            if jhi > n - 1:
                jhi = n - 1
            j = jlo
            while j <= jhi:
                if R[j] <= trel + 1e-12:
                    return j
                j += 1
        elif f < fprev:
            jhi = <int64_t>ceil(fprev) - 1
            jlo = <int64_t>ceil(f)
            if jlo < 0:
                jlo = 0
            if jhi > n - 1:
                jhi = n - 1
            j = jhi
            while j >= jlo:
                if R[j] <= trel + 1e-12:
                    return j
                j -= 1
    j = inside_stop(f, trel, n, R)
    if j >= 0 or first:
        return j
    fmin = f if f < fprev else fprev
    fmax = f if f > fprev else fprev
    pd = 0.0
    pu = 0.0
    jd = <int64_t>floor(fmin)
    if jd > n - 1:
        jd = n - 1
    while jd >= 0 and (fmin - jd) * (fmin - jd) * c2 <= BRIDGE_CUT:
        if R[jd] <= trel + 1e-12:
            pd = exp(-c2 * (fprev - jd) * (f - jd))
            break
        jd -= 1
    ju = <int64_t>floor(fmax) + 1
    if ju < 0:
        ju = 0
    while ju <= n - 1 and (ju - fmax) * (ju - fmax) * c2 <= BRIDGE_CUT:
        if R[ju] <= trel + 1e-12:
            pu = exp(-c2 * (fprev - ju) * (f - ju))
            break
        ju += 1
    if ub < pd:
        return jd
    if ub < pd + (1.0 - pd) * pu:
        return ju
    return -1


cdef inline int64_t inside_stop(double f, double trel, int64_t n, const double* R) noexcept nogil:
    """Stop node if ``f`` lies in the stopping region, or -1.

    Between nodes the barrier is the larger of the two bracketing values, so
    a point strictly inside an interval stops only once both ends have.
    Beyond the grid the edge node applies.
    """
    cdef int64_t j
    cdef double r
    if f <= 0.0:
        return 0 if R[0] <= trel + 1e-12 else -1
    if f >= n - 1:
        return n - 1 if R[n - 1] <= trel + 1e-12 else -1
    j = <int64_t>floor(f)
    r = R[j]
    if f != <double>j and R[j + 1] > r:
        r = R[j + 1]
    if r <= trel + 1e-12:
        return <int64_t>floor(f + 0.5)
    return -1


def simulate_paths(uint64_t k0, uint64_t k1, int64_t p_start, int64_t p_end,
                   const double[::1] cw, const double[::1] clo, const double[::1] chi,
                   const double[::1] sx, const double[::1] sv,
                   double dt, int64_t max_steps,
                   const double[::1] ph_x0, const double[::1] ph_dx, const int64_t[::1] ph_n,
                   const int64_t[::1] ph_off, const double[::1] R_all,
                   const int64_t[::1] ck_idx, int record_free,
                   int occ_on, double occ_x0, double occ_h, double[:, ::1] occ,
                   double[::1] tau, double[::1] xtau, double[::1] xraw, uint8_t[::1] cens,
                   double[:, ::1] ck, double[:, ::1] ckfree,
                   double[::1] rmin, double[::1] rmax):
    """Euler paths ``p_start .. p_end-1`` stopped at a chain of barriers.

    Output arrays are indexed from 0 for path ``p_start``. ``occ`` has one
    row per checkpoint interval (plus a trailing overflow row) and
    accumulates ``sigma^2 dt`` of pre-stop time per spatial bin.
    """
    cdef int64_t nph = ph_x0.shape[0]
    cdef int64_t nck = ck_idx.shape[0]
    cdef int64_t ncomp = cw.shape[0]
    cdef int64_t ns = sx.shape[0]
    cdef int64_t nbins = occ.shape[1]
    cdef double sqdt = sqrt(dt)
    cdef int64_t p, q, k, kstart, ph, j, m, mf, last_ck, b
    cdef uint64_t c[4]
    cdef double z[4]
    cdef double ubr[4]
    cdef double c2
    cdef double x, xf, xprev, s, xi, lo_run, hi_run, uc, up, f, fprev
    cdef int stopped, first
    cdef const double* R
    with nogil:
        last_ck = ck_idx[nck - 1] if nck > 0 else 0
        for p in range(p_start, p_end):
            q = p - p_start
            c[0] = 0; c[1] = <uint64_t>p; c[2] = 1; c[3] = 0
            philox(c, k0, k1)
            uc = unit(c[0])
            up = unit(c[1])
            j = 0
            while j < ncomp - 1 and cw[j] <= uc:
                j += 1
            x = clo[j] + (chi[j] - clo[j]) * up
            xf = x
            lo_run = INFINITY
            hi_run = -INFINITY
            ph = 0
            kstart = 0
            k = 0
            m = 0
            mf = 0
            stopped = 0
            first = 1
            # phase starts (including t=0) test the start point only
            while True:
                R = &R_all[ph_off[ph]]
                f = (x - ph_x0[ph]) / ph_dx[ph]
                j = find_stop(f, f, 0.0, 1, ph_n[ph], R, 0.0, 1.0)
                if j < 0:
                    break
                x = ph_x0[ph] + j * ph_dx[ph]
                if ph == nph - 1:
                    stopped = 1
                    break
                ph += 1
            f = (x - ph_x0[ph]) / ph_dx[ph]
            while m < nck and ck_idx[m] == 0:
                ck[q, m] = x
                m += 1
            if record_free:
                while mf < nck and ck_idx[mf] == 0:
                    ckfree[q, mf] = xf
                    mf += 1
            while not stopped and k < max_steps:
                if (k & 3) == 0:
                    normals(<uint64_t>(k >> 2), <uint64_t>p, k0, k1, z)
                    bridge_units(<uint64_t>(k >> 2), <uint64_t>p, k0, k1, ubr)
                xi = z[k & 3]
                xprev = x
                s = sigma_at(x, &sx[0], &sv[0], ns)
                c2 = 2.0 * ph_dx[ph] * ph_dx[ph] / (s * s * dt)
                if occ_on:
                    b = <int64_t>floor((xprev - occ_x0) / occ_h)
                    if b >= 0 and b < nbins:
                        occ[m, b] += s * s * dt
                x = x + s * sqdt * xi
                if record_free:
                    xf = xf + sigma_at(xf, &sx[0], &sv[0], ns) * sqdt * xi
                if xprev < lo_run:
                    lo_run = xprev
                if xprev > hi_run:
                    hi_run = xprev
                k += 1
                first = 0
                fprev = f
                while True:
                    R = &R_all[ph_off[ph]]
                    f = (x - ph_x0[ph]) / ph_dx[ph]
                    j = find_stop(fprev, f, (k - kstart) * dt, first, ph_n[ph], R,
                                  c2, ubr[(k - 1) & 3])
                    if j < 0:
                        break
                    xraw[q] = x
                    x = ph_x0[ph] + j * ph_dx[ph]
                    if ph == nph - 1:
                        stopped = 1
                        break
                    ph += 1
                    kstart = k
                    first = 1
                    fprev = (x - ph_x0[ph]) / ph_dx[ph]
                while m < nck and ck_idx[m] == k:
                    ck[q, m] = x
                    m += 1
                if record_free:
                    while mf < nck and ck_idx[mf] == k:
                        ckfree[q, mf] = xf
                        mf += 1
            if stopped:
                tau[q] = k * dt
                xtau[q] = x
                if k == 0:
                    xraw[q] = xf
                cens[q] = 0
            else:
                tau[q] = k * dt
                xtau[q] = x
                xraw[q] = x
                cens[q] = 1
            rmin[q] = lo_run
            rmax[q] = hi_run
            while m < nck:
                ck[q, m] = x
                m += 1
            if record_free:
                while mf < nck:
                    if (k & 3) == 0:
                        normals(<uint64_t>(k >> 2), <uint64_t>p, k0, k1, z)
                    xi = z[k & 3]
                    xf = xf + sigma_at(xf, &sx[0], &sv[0], ns) * sqdt * xi
                    k += 1
                    while mf < nck and ck_idx[mf] == k:
                        ckfree[q, mf] = xf
                        mf += 1
