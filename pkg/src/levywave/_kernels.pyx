# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batch path simulator.

Same contract as ``_kernels_py.simulate_batch``; each path is processed
sequentially, merging its events with the observation times.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, cosh, sinh, exp, expm1, sqrt, log, pow, floor, ceil, isfinite, fabs

cnp.import_array()


cdef inline void _mcoef(signed char kind, double p, double dt,
                        double* m11, double* m12, double* m21, double* m22) noexcept nogil:
    cdef double w, x, s
    if kind == 0:
        if p > 0:
            w = sqrt(p)
            x = w * dt
            m11[0] = cos(x)
            s = sin(x) / w
        elif p < 0:
            w = sqrt(-p)
            x = w * dt
            m11[0] = cosh(x)
            s = sinh(x) / w
        else:
            m11[0] = 1.0
            s = dt
        m12[0] = s
        m21[0] = -p * s
        m22[0] = m11[0]
    else:
        m11[0] = exp(-p * dt)
        m12[0] = 0.0
        m21[0] = 0.0
        m22[0] = 0.0


cdef inline void _advance(int N, const signed char[:] kind, const double[:] param,
                          double* y, double dt) noexcept nogil:
    cdef int n
    cdef double m11, m12, m21, m22, a, b
    if dt == 0.0:
        return
    for n in range(N):
        _mcoef(kind[n], param[n], dt, &m11, &m12, &m21, &m22)
        a = y[n]
        b = y[N + n]
        y[n] = m11 * a + m12 * b
        y[N + n] = m21 * a + m22 * b


cdef inline void _forced(int N, const signed char[:] kind, const double[:] param,
                         const double[:] inj, double* y, double dt, double v) noexcept nogil:
    """In-place exact step of ``y`` over ``dt`` under constant input ``v``."""
    cdef int n
    cdef double m11, m12, m21, m22, a, b, p, w, S1, S2, g
    for n in range(N):
        p = param[n]
        _mcoef(kind[n], p, dt, &m11, &m12, &m21, &m22)
        a = y[n]
        b = y[N + n]
        if kind[n] == 0:
            S1 = m12
            if p > 0:
                w = sin(0.5 * sqrt(p) * dt)
                S2 = 2.0 * w * w / p
            elif p < 0:
                w = sinh(0.5 * sqrt(-p) * dt)
                S2 = 2.0 * w * w / (-p)
            else:
                S2 = 0.5 * dt * dt
            y[n] = m11 * a + m12 * b + (inj[n] * S1 + inj[N + n] * S2) * v
            y[N + n] = m21 * a + m22 * b + (-p * S2 * inj[n] + inj[N + n] * S1) * v
        else:
            g = -expm1(-p * dt) / p if p > 0 else dt
            y[n] = m11 * a + inj[n] * g * v
            y[N + n] = 0.0


cdef inline void _control_state(int N, const signed char[:] kind, const double[:] param,
                                const double[:] inj, const double[:] ctrl, double ctrl_dt,
                                const double[:, :] cgrid, double t, double* out) noexcept nogil:
    cdef int ns = ctrl.shape[0]
    cdef long k = <long> floor(t / ctrl_dt)
    cdef int i
    cdef double v
    if k < 0:
        k = 0
    if k > ns:
        k = ns
    for i in range(2 * N):
        out[i] = cgrid[k, i]
    v = ctrl[k] if k < ns else 0.0
    _forced(N, kind, param, inj, out, t - k * ctrl_dt, v)


cdef inline double _ctrl_at(const double[:] ctrl, double ctrl_dt, double t) noexcept nogil:
    cdef int ns = ctrl.shape[0]
    cdef long k = <long> ceil(t / ctrl_dt) - 1
    if k < 0:
        k = 0
    if k >= ns:
        return 0.0
    return ctrl[k]


cdef inline double _interp(const double[:] xs, const double[:] ys, double x) noexcept nogil:
    cdef int lo = 0, hi = xs.shape[0] - 1, mid
    if x <= xs[0]:
        return ys[0]
    if x >= xs[hi]:
        return ys[hi]
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if xs[mid] <= x:
            lo = mid
        else:
            hi = mid
    return ys[lo] + (ys[hi] - ys[lo]) * (x - xs[lo]) / (xs[hi] - xs[lo])


cdef inline void _profile(const double[:] prof, double K, double z,
                          double* h, double* hz) noexcept nogil:
    cdef double r1 = prof[0], beta1 = prof[1], nu = prof[2], gamma2 = prof[3]
    cdef double beta2 = prof[4], buf = prof[5], Cc = prof[6], small = prof[7]
    cdef double lo, hi, A, e, bl, br, g, t
    h[0] = 0.0
    hz[0] = 0.0
    if K <= 0:
        return
    if K >= 1.0:
        lo = pow(K, nu) * r1
        hi = 2.0 * lo
        A = K
        e = beta1
    else:
        lo = r1
        hi = r1 * (1.0 + pow(K, gamma2))
        A = Cc * (K if small != 0 else 1.0)
        e = beta2
    bl = buf if buf < 0.5 * lo else 0.5 * lo
    br = 2.0 * A * pow(hi, -e)
    if br < buf:
        br = buf
    if z <= lo - bl or z >= hi + br:
        return
    if z < lo:
        g = A * pow(lo, -e)
        t = (z - lo + bl) / bl
        h[0] = t * t * (3.0 - 2.0 * t) * g
        hz[0] = 6.0 * t * (1.0 - t) / bl * g
    elif z > hi:
        g = A * pow(hi, -e)
        t = (hi + br - z) / br
        h[0] = t * t * (3.0 - 2.0 * t) * g
        hz[0] = -6.0 * t * (1.0 - t) / br * g
    else:
        h[0] = A * pow(z, -e)
        hz[0] = -e * A * pow(z, -e - 1.0)


def profile_hz(prof, K, z):
    """Scalar-loop ``(h, h_z)`` over matching arrays ``K`` and ``z`` (for tests)."""
    cdef const double[:] pv = np.ascontiguousarray(prof, dtype=np.float64)
    Ka = np.ascontiguousarray(np.broadcast_to(np.asarray(K, float), np.shape(z)), dtype=np.float64).ravel()
    za = np.ascontiguousarray(z, dtype=np.float64).ravel()
    h = np.empty_like(za)
    hz = np.empty_like(za)
    cdef double[:] hv = h, hzv = hz
    cdef const double[:] kv = Ka, zv = za
    cdef Py_ssize_t i
    cdef double a, b
    for i in range(za.shape[0]):
        _profile(pv, kv[i], zv[i], &a, &b)
        hv[i] = a
        hzv[i] = b
    return h.reshape(np.shape(z)), hz.reshape(np.shape(z))


def simulate_batch(kind, param, inj, x0, offsets, times, marks, signs,
                   double delta0, double alpha, sig, int ctrl_mode, ctrl, double ctrl_dt, cgrid,
                   w_tab, K_tab, prof, obs_times):
    cdef const signed char[:] kd = np.ascontiguousarray(kind, dtype=np.int8)
    cdef const double[:] pr = np.ascontiguousarray(param, dtype=np.float64)
    cdef const double[:] ij = np.ascontiguousarray(inj, dtype=np.float64)
    cdef const double[:, :] X0 = np.ascontiguousarray(x0, dtype=np.float64)
    cdef const long long[:] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef const double[:] tv = np.ascontiguousarray(times, dtype=np.float64)
    cdef const double[:] zv = np.ascontiguousarray(marks, dtype=np.float64)
    cdef const signed char[:] sv = np.ascontiguousarray(signs, dtype=np.int8)
    cdef const double[:] cv = np.ascontiguousarray(ctrl, dtype=np.float64)
    cdef const double[:, :] cg = np.ascontiguousarray(cgrid, dtype=np.float64)
    cdef const double[:] wt = np.ascontiguousarray(w_tab, dtype=np.float64)
    cdef const double[:] kt = np.ascontiguousarray(K_tab, dtype=np.float64)
    cdef const double[:] pf = np.ascontiguousarray(prof, dtype=np.float64)
    cdef const double[:] ob = np.ascontiguousarray(obs_times, dtype=np.float64)
    cdef int N = kd.shape[0]
    cdef int D = 2 * N
    cdef Py_ssize_t P = X0.shape[0]
    cdef int n_obs = ob.shape[0]
    cdef int sig_mode = <int> sig[0]
    cdef double sig_c0 = sig[1], sig_lo = sig[2], sig_hi = sig[3]
    cdef double inv_a = 1.0 / alpha
    cdef double w_max = wt[wt.shape[0] - 1] if wt.shape[0] > 0 else 0.0

    states = np.empty((P, n_obs, D))
    G_obs = np.empty((P, n_obs))
    status = np.zeros(P, dtype=np.int8)
    cdef double[:, :, :] st = states
    cdef double[:, :] go = G_obs
    cdef signed char[:] stv = status
    y_buf = np.empty(D)
    c_buf = np.empty(D)
    cdef double[:] yb = y_buf, cb = c_buf
    cdef double* y = &yb[0]
    cdef double* cs = &cb[0]

    cdef Py_ssize_t p, e, e_end
    cdef int j, i, n
    cdef double cur, t, s, u2, vt, K, h, hz, f, z, jump, G
    cdef signed char sgn

    with nogil:
        for p in range(P):
            for i in range(D):
                y[i] = X0[p, i]
            cur = 0.0
            G = 1.0
            e = off[p]
            e_end = off[p + 1]
            for j in range(n_obs):
                while e < e_end and tv[e] <= ob[j]:
                    t = tv[e]
                    _advance(N, kd, pr, y, t - cur)
                    cur = t
                    if sig_mode == 0:
                        s = sig_c0
                    else:
                        if ctrl_mode == 1:
                            _control_state(N, kd, pr, ij, cv, ctrl_dt, cg, t, cs)
                        u2 = 0.0
                        for n in range(N):
                            if ctrl_mode == 1:
                                u2 += (y[n] + cs[n]) * (y[n] + cs[n])
                            else:
                                u2 += y[n] * y[n]
                        s = log(2.0 + sqrt(u2))
                    if s < sig_lo:
                        s = sig_lo
                    if s > sig_hi:
                        s = sig_hi
                    z = zv[e]
                    sgn = sv[e]
                    if ctrl_mode == 2:
                        vt = -_ctrl_at(cv, ctrl_dt, t) / s
                        if vt != 0.0 and ((vt > 0) == (sgn > 0)):
                            if fabs(vt) > w_max:
                                if stv[p] < 2:
                                    stv[p] = 2
                            else:
                                K = _interp(wt, kt, fabs(vt))
                                _profile(pf, K, z, &h, &hz)
                                f = 1.0 + hz
                                if f <= 0 and stv[p] < 3:
                                    stv[p] = 3
                                G *= f
                                z = z + h
                    jump = sgn * delta0 * pow(z, -inv_a) * s
                    for i in range(D):
                        y[i] += jump * ij[i]
                    e += 1
                _advance(N, kd, pr, y, ob[j] - cur)
                cur = ob[j]
                if ctrl_mode == 1:
                    _control_state(N, kd, pr, ij, cv, ctrl_dt, cg, ob[j], cs)
                    for i in range(D):
                        st[p, j, i] = y[i] + cs[i]
                else:
                    for i in range(D):
                        st[p, j, i] = y[i]
                go[p, j] = G
            for j in range(n_obs):
                for i in range(D):
                    if not isfinite(st[p, j, i]):
                        if stv[p] < 1:
                            stv[p] = 1
    return states, G_obs, status
