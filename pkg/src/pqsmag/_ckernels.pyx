# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Semantics are identical to ``_pykernels``."""

from libc.math cimport exp, log, isfinite, erfc, sqrt, fabs

import numpy as np
cimport numpy as cnp

cnp.import_array()

# status codes shared with the Python wrappers
DEF OK = 0
DEF UNDERFLOW = 1
DEF NONFINITE = 2
DEF DESYNC = 3


cdef inline void _apply_poly(const double* s, double y, double w,
                             const double* v, double* out) noexcept nogil:
    # s points at a C-contiguous (3, 4, 4) block: out = w (s0 + y s1 + y^2 s2) v
    cdef double m
    cdef int i, j
    cdef double y2 = y * y
    for i in range(4):
        m = 0.0
        for j in range(4):
            m = m + (s[4 * i + j] + y * s[16 + 4 * i + j] + y2 * s[32 + 4 * i + j]) * v[j]
        out[i] = w * m


cdef double _INV_SQRT2 = 0.7071067811865476
cdef double _INV_SQRT2PI = 0.3989422804014327


cdef inline double _predictive_z(double c0, double b, double c, double z0) noexcept nogil:
    # Quantile transform: the z with F(z) = Phi(z0) for the density
    # phi(z) (c0 + b z + c z^2) / (c0 + c). Upper tail is solved on the survival side.
    cdef double tot = c0 + c
    cdef double z = z0 + b / tot
    cdef double target, pdf, g, step
    cdef int it
    cdef bint upper = z0 > 0.0
    if upper:
        target = 0.5 * erfc(z0 * _INV_SQRT2)
    else:
        target = 0.5 * erfc(-z0 * _INV_SQRT2)
    for it in range(60):
        pdf = _INV_SQRT2PI * exp(-0.5 * z * z)
        if upper:
            g = (tot * 0.5 * erfc(z * _INV_SQRT2) + (b + c * z) * pdf) / tot - target
            step = g / (pdf * (c0 + b * z + c * z * z) / tot)
        else:
            g = (tot * 0.5 * erfc(-z * _INV_SQRT2) - (b + c * z) * pdf) / tot - target
            step = -g / (pdf * (c0 + b * z + c * z * z) / tot)
        z = z + step
        if fabs(step) < 1e-14 * (1.0 + fabs(z)):
            break
    return z


def sample_chain(long n0, const double[:] up, const double[:] down, double dt,
                 const double[:] u, long[:] out):
    cdef Py_ssize_t t, steps = u.shape[0]
    cdef long n = n0
    cdef double pu, pd
    with nogil:
        for t in range(steps):
            out[t] = n
            pu = up[n] * dt
            pd = down[n] * dt
            if u[t] < pu:
                n = n + 1
            elif u[t] < pu + pd:
                n = n - 1
    return n


def simulate_truth(const long[:] states, const double[:, :, :, ::1] s, const double[:] a,
                   double dt, const double[:] dw, double[:] v0,
                   double[:] dy_out, long stride, double[:, :] v_ckpt):
    cdef Py_ssize_t t, i, steps = states.shape[0]
    cdef long n
    cdef double v[4]
    cdef double nv[4]
    cdef double coef[3]
    cdef double y, tr, rdt = sqrt(dt)
    cdef const double* sn
    cdef int status = OK
    cdef Py_ssize_t bad = -1
    cdef int k, j
    for i in range(4):
        v[i] = v0[i]
    with nogil:
        for t in range(steps):
            if t % stride == 0:
                for i in range(4):
                    v_ckpt[t // stride, i] = v[i]
            n = states[t]
            sn = &s[n, 0, 0, 0]
            # trace of each polynomial coefficient applied to v
            for k in range(3):
                coef[k] = 0.0
                for j in range(4):
                    coef[k] = coef[k] + (sn[16 * k + j] + sn[16 * k + 4 + j]) * v[j]
            y = rdt * _predictive_z(coef[0], coef[1] * rdt, coef[2] * dt, dw[t] / rdt)
            dy_out[t] = y + 2.0 * a[n] * dt
            _apply_poly(sn, y, 1.0, v, nv)
            tr = nv[0] + nv[1]
            if not (tr > 0.0 and isfinite(tr)):
                status = NONFINITE
                bad = t
                break
            for i in range(4):
                v[i] = nv[i] / tr
        if status == OK and steps % stride == 0:
            for i in range(4):
                v_ckpt[steps // stride, i] = v[i]
    for i in range(4):
        v0[i] = v[i]
    return status, bad


def forward_pass(const double[:] dy, const double[:, :, :, ::1] s, const double[:] a,
                 const double[:] up, const double[:] down, double dt, double[:, ::1] v,
                 long stride, double[:, :] prob_out, const double[:, :, :] e_ckpt,
                 double[:, :] pqs_out, double[:, :, :] rho_ckpt, double[:] lognorm_out):
    """Filter ``v`` (M, 4) in place over ``dy``.

    Posterior at every ``stride``-th time goes to ``prob_out``; if ``e_ckpt``
    has rows, the combined estimate goes to ``pqs_out``; if ``rho_ckpt`` has
    rows, the normalized blocks are stored there. ``lognorm_out[k]`` receives
    the accumulated log normalization at checkpoint ``k``.
    """
    cdef Py_ssize_t steps = dy.shape[0]
    cdef Py_ssize_t nblk = v.shape[0]
    cdef bint do_pqs = e_ckpt.shape[0] > 0
    cdef bint do_rho = rho_ckpt.shape[0] > 0
    cdef double[:, ::1] tmp = np.empty((nblk, 4))
    cdef Py_ssize_t t, n, i, k
    cdef double y, w, tot, loss, x
    cdef double lognorm = 0.0
    cdef int status = OK
    cdef Py_ssize_t bad = -1
    with nogil:
        for t in range(steps + 1):
            if t % stride == 0:
                k = t // stride
                lognorm_out[k] = lognorm
                tot = 0.0
                for n in range(nblk):
                    prob_out[k, n] = v[n, 0] + v[n, 1]
                    tot = tot + prob_out[k, n]
                for n in range(nblk):
                    prob_out[k, n] = prob_out[k, n] / tot
                if do_rho:
                    for n in range(nblk):
                        for i in range(4):
                            rho_ckpt[k, n, i] = v[n, i]
                if do_pqs:
                    tot = 0.0
                    for n in range(nblk):
                        x = (v[n, 0] * e_ckpt[k, n, 0] + v[n, 1] * e_ckpt[k, n, 1]
                             + 2.0 * (v[n, 2] * e_ckpt[k, n, 2] + v[n, 3] * e_ckpt[k, n, 3]))
                        if x < 0.0:
                            x = 0.0
                        pqs_out[k, n] = x
                        tot = tot + x
                    if not (tot > 0.0 and isfinite(tot)):
                        status = DESYNC
                        bad = t
                        break
                    for n in range(nblk):
                        pqs_out[k, n] = pqs_out[k, n] / tot
            if t == steps:
                break
            for n in range(nblk):
                y = dy[t] - 2.0 * a[n] * dt
                w = exp(2.0 * a[n] * dy[t] - 2.0 * a[n] * a[n] * dt)
                _apply_poly(&s[n, 0, 0, 0], y, w, &v[n, 0], &tmp[n, 0])
            tot = 0.0
            for n in range(nblk):
                loss = 1.0 - (up[n] + down[n]) * dt
                for i in range(4):
                    x = loss * tmp[n, i]
                    if n > 0:
                        x = x + up[n - 1] * dt * tmp[n - 1, i]
                    if n < nblk - 1:
                        x = x + down[n + 1] * dt * tmp[n + 1, i]
                    v[n, i] = x
                tot = tot + v[n, 0] + v[n, 1]
            if not (tot > 0.0 and isfinite(tot)):
                status = UNDERFLOW
                bad = t
                break
            for n in range(nblk):
                for i in range(4):
                    v[n, i] = v[n, i] / tot
            lognorm = lognorm + log(tot)
    return status, bad, lognorm


def backward_pass(const double[:] dy, const double[:, :, :, ::1] s_adj, const double[:] a,
                  const double[:] up, const double[:] down, double dt, double[:, ::1] e,
                  long stride, double[:, :, :] e_ckpt):
    """Propagate effect blocks ``e`` (M, 4) from the end of ``dy`` to its start."""
    cdef Py_ssize_t steps = dy.shape[0]
    cdef Py_ssize_t nblk = e.shape[0]
    cdef double[:, ::1] tmp = np.empty((nblk, 4))
    cdef Py_ssize_t t, n, i
    cdef double y, w, tot, loss, x
    cdef double lognorm = 0.0
    cdef int status = OK
    cdef Py_ssize_t bad = -1
    with nogil:
        if steps % stride == 0:
            for n in range(nblk):
                for i in range(4):
                    e_ckpt[steps // stride, n, i] = e[n, i]
        t = steps
        while t > 0:
            t = t - 1
            for n in range(nblk):
                loss = 1.0 - (up[n] + down[n]) * dt
                for i in range(4):
                    x = loss * e[n, i]
                    if n < nblk - 1:
                        x = x + up[n] * dt * e[n + 1, i]
                    if n > 0:
                        x = x + down[n] * dt * e[n - 1, i]
                    tmp[n, i] = x
            tot = 0.0
            for n in range(nblk):
                y = dy[t] - 2.0 * a[n] * dt
                w = exp(2.0 * a[n] * dy[t] - 2.0 * a[n] * a[n] * dt)
                _apply_poly(&s_adj[n, 0, 0, 0], y, w, &tmp[n, 0], &e[n, 0])
                tot = tot + e[n, 0] + e[n, 1]
            if not (tot > 0.0 and isfinite(tot)):
                status = UNDERFLOW
                bad = t
                break
            for n in range(nblk):
                for i in range(4):
                    e[n, i] = e[n, i] / tot
            lognorm = lognorm + log(tot)
            if t % stride == 0:
                for n in range(nblk):
                    for i in range(4):
                        e_ckpt[t // stride, n, i] = e[n, i]
    return status, bad, lognorm
