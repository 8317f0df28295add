# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled trajectory kernel.

Mirrors ``walk.simulate`` and ``backend.run_paths_python`` operation for
operation (same Philox streams, same floating-point expression order), so the
two backends agree bit for bit.
"""
from libc.math cimport sqrt, cos, sin, tan, atan, atan2, fabs, remainder, M_PI
from libc.stdint cimport uint64_t, int64_t

import numpy as np
cimport numpy as cnp

cdef extern from *:
    """
    #include <stdint.h>
    static inline void eitwalk_mulhilo(uint64_t a, uint64_t b, uint64_t *hi, uint64_t *lo) {
        unsigned __int128 p = (unsigned __int128)a * (unsigned __int128)b;
        *hi = (uint64_t)(p >> 64);
        *lo = (uint64_t)p;
    }
    """
    void eitwalk_mulhilo(uint64_t a, uint64_t b, uint64_t *hi, uint64_t *lo) nogil

DEF MAX_HALVINGS = 6

cdef uint64_t PH_M0 = 0xD2E7470EE14C6C93ULL
cdef uint64_t PH_M1 = 0xCA5A826395121157ULL
cdef uint64_t PH_W0 = 0x9E3779B97F4A7C15ULL
cdef uint64_t PH_W1 = 0xBB67AE8584CAA73BULL
cdef double TWO_PI = 2.0 * M_PI
cdef double INV53 = 1.0 / 9007199254740992.0


cdef struct Stream:
    uint64_t k0
    uint64_t k1
    uint64_t c1
    uint64_t c2
    uint64_t block
    uint64_t buf[4]
    int idx


cdef inline void stream_init(Stream *s, uint64_t seed, uint64_t path_id, uint64_t level, uint64_t nest_id) noexcept nogil:
    s.k0 = seed
    s.k1 = path_id
    s.c1 = nest_id
    s.c2 = level
    s.block = 0
    s.idx = 4


cdef inline void philox_block(Stream *s) noexcept nogil:
    cdef uint64_t c0 = s.block, c1 = s.c1, c2 = s.c2, c3 = 0
    cdef uint64_t k0 = s.k0, k1 = s.k1
    cdef uint64_t hi0, lo0, hi1, lo1
    cdef int r
    for r in range(10):
        eitwalk_mulhilo(PH_M0, c0, &hi0, &lo0)
        eitwalk_mulhilo(PH_M1, c2, &hi1, &lo1)
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = k0 + PH_W0
        k1 = k1 + PH_W1
    s.buf[0] = c0
    s.buf[1] = c1
    s.buf[2] = c2
    s.buf[3] = c3


cdef inline double uniform(Stream *s) noexcept nogil:
    if s.idx == 4:
        s.block += 1
        philox_block(s)
        s.idx = 0
    cdef uint64_t v = s.buf[s.idx]
    s.idx += 1
    return <double>(v >> 11) * INV53


cdef struct Model:
    double R0
    double rho
    int has_inc
    int has_if
    double eps
    int bc_kind          # 0 idealized Robin, 1 CEM, 2 Dirichlet
    double *ca
    double *cb
    int n_coef
    double *centers
    double *U
    int n_el
    double hw
    double z
    double h
    int sampler
    int scheme
    int through
    int64_t max_steps
    double credit
    int use_g


cdef struct Medium:
    double ko
    double ki
    double rif


cdef struct Outcome:
    double score
    double score_pre
    int terminal
    int hit
    double hx
    double hy
    int electrode
    int64_t hits
    int64_t steps


cdef inline double phi(Model *m, double theta) noexcept nogil:
    cdef double s = 0.0
    cdef int k
    for k in range(m.n_coef):
        s += m.ca[k] * cos(k * theta) + m.cb[k] * sin(k * theta)
    return s


cdef inline int electrode_of(Model *m, double theta) noexcept nogil:
    cdef int l
    for l in range(m.n_el):
        if fabs(remainder(theta - m.centers[l], TWO_PI)) <= m.hw:
            return l + 1
    return 0


cdef void walk(Model *m, Medium *med, double x, double y, int inc_active, int use_g,
               double credit, Stream *rng, Outcome *out) noexcept nogil:
    cdef double score = 0.0, r, s, theta, ex, ey, f, gv, ze, hh, pa, u, d, Rd
    cdef double xa, ya, xb, yb, xc, yc, q, fx, fy, ha, hb, rho_a, a
    cdef int64_t hits = 0, steps = 0
    cdef int l, i, region
    out.hit = 0
    out.hx = 0.0
    out.hy = 0.0
    out.score_pre = 0.0
    out.electrode = 0
    while True:
        if steps >= m.max_steps:
            out.terminal = 2
            break
        steps += 1
        r = sqrt(x * x + y * y)
        if r > m.R0:
            s = m.R0 / r
            x = x * s
            y = y * s
            r = sqrt(x * x + y * y)
        # classify: 0 bulk, 1 boundary, 2 inclusion (layer or inside), 3 interface
        if m.R0 - r <= m.eps:
            region = 1
        elif m.has_inc and inc_active and (fabs(r - m.rho) <= m.eps or r - m.rho < 0):
            region = 2
        elif m.has_if and fabs(r - med.rif) <= m.eps:
            region = 3
        else:
            region = 0

        if region == 1:
            hits += 1
            theta = atan2(y, x)
            if m.bc_kind == 2:
                if use_g:
                    score += phi(m, theta)
                out.terminal = 0
                break
            ex = x / r
            ey = y / r
            l = 0
            if m.bc_kind == 1:
                l = electrode_of(m, theta)
                if l == 0:
                    f = 0.0
                    gv = 0.0
                else:
                    f = 1.0
                    gv = m.U[l - 1]
            else:
                f = 1.0
                gv = phi(m, theta)
            ze = m.z * med.ko
            hh = m.h
            for i in range(MAX_HALVINGS):
                xa = x + hh * (-ex - ey)
                ya = y + hh * (-ey + ex)
                xb = x + hh * (-ex + ey)
                yb = y + hh * (-ey - ex)
                xc = x - 2.0 * hh * ex
                yc = y - 2.0 * hh * ey
                q = xa * xa + ya * ya
                if xb * xb + yb * yb > q:
                    q = xb * xb + yb * yb
                if xc * xc + yc * yc > q:
                    q = xc * xc + yc * yc
                if q <= m.R0 * m.R0:
                    break
                hh = 0.5 * hh
            s = hh * gv / (f * hh + ze)
            pa = f * hh / (f * hh + ze)
            if use_g:
                score += s
            u = uniform(rng)
            if u < pa:
                out.terminal = 0
                out.electrode = l
                break
            if u < pa + 0.5 * (1.0 - pa):
                x, y = x + hh * (-ex - ey), y + hh * (-ey + ex)
            else:
                x, y = x + hh * (-ex + ey), y + hh * (-ey - ex)
        elif region == 2:
            s = m.rho / r
            out.hit = 1
            out.hx = x * s
            out.hy = y * s
            out.score_pre = score
            if not m.through:
                score += credit
                out.terminal = 1
                break
            inc_active = 0
        elif region == 3:
            ex = x / r
            ey = y / r
            fx = med.rif * ex
            fy = med.rif * ey
            if m.scheme == 0:
                ha = m.h / med.ki
                hb = m.h / med.ko
            elif m.scheme == 2:
                ha = m.h / sqrt(med.ki)
                hb = m.h / sqrt(med.ko)
            else:
                ha = m.h
                hb = m.h
            rho_a = m.rho if (m.has_inc and inc_active) else 0.0
            for i in range(MAX_HALVINGS):
                if (med.rif + ha) * (med.rif + ha) + ha * ha < m.R0 * m.R0 and med.rif - hb > rho_a:
                    break
                ha = 0.5 * ha
                hb = 0.5 * hb
            pa = med.ko * hb / (med.ko * hb + med.ki * ha)
            u = uniform(rng)
            if u < 0.5 * pa:
                x, y = fx + ha * (ex - ey), fy + ha * (ey + ex)
            elif u < pa:
                x, y = fx + ha * (ex + ey), fy + ha * (ey - ex)
            elif u < pa + 0.5 * (1.0 - pa):
                x, y = fx + hb * (-ex - ey), fy + hb * (-ey + ex)
            else:
                x, y = fx + hb * (-ex + ey), fy + hb * (-ey - ex)
        else:
            Rd = 0.0
            if m.sampler == 1 and not (m.has_inc and inc_active):
                if m.has_if:
                    if r < med.rif:
                        Rd = med.rif
                else:
                    Rd = m.R0
            if Rd > 0.0:
                a = atan2(y, x) + 2.0 * atan(((Rd - r) / (Rd + r)) * tan(M_PI * uniform(rng)))
                x = Rd * cos(a)
                y = Rd * sin(a)
            else:
                d = m.R0 - r
                if m.has_inc and inc_active:
                    if r - m.rho < d:
                        d = r - m.rho
                if m.has_if:
                    if fabs(r - med.rif) < d:
                        d = fabs(r - med.rif)
                a = TWO_PI * uniform(rng)
                x = x + d * cos(a)
                y = y + d * sin(a)
    out.score = score
    if not out.hit:
        out.score_pre = score
    out.hits = hits
    out.steps = steps


def run_paths(dict p, int64_t first, int64_t n, dict out):
    """Fill the per-path arrays in ``out`` for path ids ``first .. first + n - 1``."""
    cdef Model m
    cdef Medium med
    cdef Outcome res, sub
    cdef Stream rng, ms, ns
    cdef double[:] ca = p["ca"]
    cdef double[:] cb = p["cb"]
    cdef double[:] centers = p["centers"]
    cdef double[:] U = p["U"]
    cdef double[:, :] bounds = p["bounds"]
    cdef double[:] o_score = out["score"]
    cdef double[:] o_pre = out["score_pre"]
    cdef signed char[:] o_term = out["terminal"]
    cdef signed char[:] o_hit = out["hit"]
    cdef double[:] o_hx = out["hit_x"]
    cdef double[:] o_hy = out["hit_y"]
    cdef short[:] o_el = out["electrode"]
    cdef int64_t[:] o_hits = out["boundary_hits"]
    cdef int64_t[:] o_steps = out["steps"]
    cdef double[:] o_x0 = out["x0"]
    cdef double[:] o_y0 = out["y0"]
    cdef double[:] o_ko = out["kappa_outer"]
    cdef double[:] o_ki = out["kappa_inner"]
    cdef double[:] o_rif = out["interface_radius"]
    cdef double[:] o_nv = out["nested_v"]
    cdef double[:] o_nv0 = out["nested_v0"]
    cdef int64_t[:] o_ns = out["nested_steps"]
    cdef uint64_t seed = <uint64_t>p["seed"]
    cdef int electrode = p["electrode"]
    cdef double sx = p["sx"], sy = p["sy"]
    cdef int nested_k = p["nested_k"], nested_x0 = p["nested_x0"]
    cdef int no_inclusion = p["no_inclusion"]
    cdef uint64_t medium_mod = <uint64_t>p["medium_mod"], medium_div = <uint64_t>p["medium_div"]
    cdef uint64_t mpid
    cdef int64_t i, nsteps
    cdef uint64_t pid
    cdef int j
    cdef double th, x0, y0, acc

    m.R0 = p["R0"]
    m.rho = p["rho"]
    m.has_inc = p["has_inc"]
    m.has_if = p["has_if"]
    m.eps = p["eps"]
    m.bc_kind = p["bc_kind"]
    m.ca = &ca[0]
    m.cb = &cb[0]
    m.n_coef = ca.shape[0]
    m.centers = &centers[0]
    m.U = &U[0]
    m.n_el = centers.shape[0] if m.bc_kind == 1 else 0
    m.hw = p["hw"]
    m.z = p["z"]
    m.h = p["h"]
    m.sampler = p["sampler"]
    m.scheme = p["scheme"]
    m.through = p["through"]
    m.max_steps = p["max_steps"]
    m.credit = p["credit"]
    m.use_g = p["use_g"]

    with nogil:
        for i in range(n):
            pid = <uint64_t>(first + i)
            mpid = pid % medium_mod if medium_mod else pid
            stream_init(&ms, seed, mpid // medium_div, 2, 0)
            med.ko = bounds[0, 0] + (bounds[0, 1] - bounds[0, 0]) * uniform(&ms)
            med.ki = bounds[1, 0] + (bounds[1, 1] - bounds[1, 0]) * uniform(&ms)
            med.rif = bounds[2, 0] + (bounds[2, 1] - bounds[2, 0]) * uniform(&ms)
            stream_init(&rng, seed, pid, 0, 0)
            if electrode > 0:
                th = m.centers[electrode - 1] + m.hw * (2.0 * uniform(&rng) - 1.0)
                x0 = m.R0 * cos(th)
                y0 = m.R0 * sin(th)
            else:
                x0 = sx
                y0 = sy
            walk(&m, &med, x0, y0, 0 if no_inclusion else 1, m.use_g, m.credit, &rng, &res)
            o_score[i] = res.score
            o_pre[i] = res.score_pre
            o_term[i] = res.terminal
            o_hit[i] = res.hit
            o_hx[i] = res.hx
            o_hy[i] = res.hy
            o_el[i] = res.electrode
            o_hits[i] = res.hits
            o_steps[i] = res.steps
            o_x0[i] = x0
            o_y0[i] = y0
            o_ko[i] = med.ko
            o_ki[i] = med.ki
            o_rif[i] = med.rif
            if nested_k > 0 and not m.through:
                nsteps = 0
                if res.hit:
                    acc = 0.0
                    for j in range(nested_k):
                        stream_init(&ns, seed, pid, 1, <uint64_t>j)
                        walk(&m, &med, res.hx, res.hy, 0, 1, 0.0, &ns, &sub)
                        acc += sub.score
                        nsteps += sub.steps
                    o_nv[i] = acc / nested_k
                if nested_x0:
                    acc = 0.0
                    for j in range(nested_k):
                        stream_init(&ns, seed, pid, 1, <uint64_t>(nested_k + j))
                        walk(&m, &med, x0, y0, 0, 1, 0.0, &ns, &sub)
                        acc += sub.score
                        nsteps += sub.steps
                    o_nv0[i] = acc / nested_k
                o_ns[i] = nsteps


def philox_raw(uint64_t seed, uint64_t path_id, uint64_t level, uint64_t nest_id, int64_t n):
    """First ``n`` raw 64-bit outputs of a stream (for cross-checking the Python generator)."""
    cdef Stream s
    cdef int64_t i
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] res = np.empty(n, dtype=np.uint64)
    stream_init(&s, seed, path_id, level, nest_id)
    for i in range(n):
        if s.idx == 4:
            s.block += 1
            philox_block(&s)
            s.idx = 0
        res[i] = s.buf[s.idx]
        s.idx += 1
    return res
