# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled solver kernels.

Same contract as ``_pykernels``; loops are written out so a full solve runs
without touching the Python interpreter.
"""

import numpy as np

cimport cython
from libc.math cimport cos, sin, sqrt, fabs, fmod, hypot, isfinite, M_PI

cdef double TWO_PI = 2.0 * M_PI
cdef double NORM_FLOOR = 1e-12

cdef int STATUS_CONVERGED = 0
cdef int STATUS_MAX_ITER = 1
cdef int STATUS_ZERO_ALPHA = 2
cdef int STATUS_ZERO_BETA = 3
cdef int STATUS_NON_FINITE = 4


cdef inline double _wrap(double phi) nogil:
    phi = fmod(phi, TWO_PI)
    if phi < 0.0:
        phi += TWO_PI
    if phi >= TWO_PI:
        phi = 0.0
    return phi


cdef inline double _soft(double v, double t) nogil:
    if v > t:
        return v - t
    if v < -t:
        return v + t
    return 0.0


cdef double _quad(double[:, ::1] A, double[::1] w) nogil:
    cdef Py_ssize_t i, j, n = w.shape[0]
    cdef double acc = 0.0, row
    for i in range(n):
        row = 0.0
        for j in range(n):
            row += A[i, j] * w[j]
        acc += w[i] * row
    return acc


cdef double _sub_objective(double[::1] w, double[::1] c, double[:, ::1] A, double lam) nogil:
    cdef Py_ssize_t i, n = w.shape[0]
    cdef double lin = 0.0, l1 = 0.0
    for i in range(n):
        lin += c[i] * w[i]
        l1 += fabs(w[i])
    return -lin + lam * l1 + 0.5 * _quad(A, w)


cdef void _prox_step(double[::1] src, double[::1] dst, double[::1] c,
                     double[:, ::1] A, double t, double lam) nogil:
    # dst = soft(src - t (A src - c), lam t)
    cdef Py_ssize_t i, j, n = src.shape[0]
    cdef double g
    for i in range(n):
        g = -c[i]
        for j in range(n):
            g += A[i, j] * src[j]
        dst[i] = _soft(src[i] - t * g, lam * t)


cdef void _prox_descend(double[::1] w, double[::1] c, double[:, ::1] A, double t,
                        double lam, int inner_steps, double[::1] x_new,
                        double[::1] z) nogil:
    # updates w in place
    cdef Py_ssize_t i, n = w.shape[0]
    cdef int s
    cdef double tk = 1.0, tk_new, f_prev, f_new, mom
    if inner_steps == 1:
        _prox_step(w, x_new, c, A, t, lam)
        for i in range(n):
            w[i] = x_new[i]
        return
    for i in range(n):
        z[i] = w[i]
    f_prev = _sub_objective(w, c, A, lam)
    for s in range(inner_steps):
        _prox_step(z, x_new, c, A, t, lam)
        f_new = _sub_objective(x_new, c, A, lam)
        if f_new > f_prev:
            tk = 1.0
            _prox_step(w, x_new, c, A, t, lam)
            f_new = _sub_objective(x_new, c, A, lam)
        tk_new = 0.5 * (1.0 + sqrt(1.0 + 4.0 * tk * tk))
        mom = (tk - 1.0) / tk_new
        for i in range(n):
            z[i] = x_new[i] + mom * (x_new[i] - w[i])
            w[i] = x_new[i]
        tk = tk_new
        f_prev = f_new


cdef double _lm_phase(double a, double b, double phi, double tol, int max_steps,
                      double damping, int* steps_out) nogil:
    cdef double r = hypot(a, b), ca, sb, g, delta
    cdef int steps = 0
    if r == 0.0 or not isfinite(r):
        steps_out[0] = -1
        return phi
    ca = a / r
    sb = b / r
    while steps < max_steps:
        g = ca * sin(phi) - sb * cos(phi)
        delta = g / (1.0 + damping)
        phi -= delta
        steps += 1
        if fabs(delta) < tol:
            break
    if ca * cos(phi) + sb * sin(phi) < 0.0:
        phi += M_PI
    steps_out[0] = steps
    return _wrap(phi)


def lm_phase(double a, double b, double phi0, double tol=1e-10, int max_steps=100,
             double damping=1.0):
    cdef int steps = 0
    cdef double phi = _lm_phase(a, b, phi0, tol, max_steps, damping, &steps)
    return phi, steps


cdef double _bilinear(double[::1] alpha, double[:, ::1] M, double[::1] beta) nogil:
    cdef Py_ssize_t i, j
    cdef double acc = 0.0, row
    for i in range(alpha.shape[0]):
        row = 0.0
        for j in range(beta.shape[0]):
            row += M[i, j] * beta[j]
        acc += alpha[i] * row
    return acc


def solve_alternating(
    double[:, ::1] s_re,
    double[:, ::1] s_im,
    double[:, ::1] A,
    double[:, ::1] B,
    double t_alpha,
    double t_beta,
    double lam1,
    double lam2,
    alpha0,
    beta0,
    double phi0,
    int max_iter,
    double rel_tol,
    int inner_steps,
    double damping=1.0,
):
    cdef Py_ssize_t p = s_re.shape[0], q = s_re.shape[1]
    cdef Py_ssize_t i, j
    cdef int k, steps = 0, status = STATUS_MAX_ITER, n_iter = 0
    cdef double phi = phi0, cph, sph, nrm, a, b, f, f_prev = 0.0, l1a, l1b, lin

    alpha_arr = np.array(alpha0, dtype=np.float64)
    beta_arr = np.array(beta0, dtype=np.float64)
    trace_arr = np.empty(max(max_iter, 1), dtype=np.float64)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] beta = beta_arr
    cdef double[::1] trace = trace_arr
    cdef double[::1] ca = np.empty(p)
    cdef double[::1] cb = np.empty(q)
    cdef double[::1] xa = np.empty(p)
    cdef double[::1] za = np.empty(p)
    cdef double[::1] xb = np.empty(q)
    cdef double[::1] zb = np.empty(q)
    cdef double[:, ::1] sr = np.empty((p, q))

    with nogil:
        for k in range(max_iter):
            cph = cos(phi)
            sph = sin(phi)
            for i in range(p):
                for j in range(q):
                    sr[i, j] = s_re[i, j] * cph + s_im[i, j] * sph

            for i in range(p):
                lin = 0.0
                for j in range(q):
                    lin += sr[i, j] * beta[j]
                ca[i] = lin
            _prox_descend(alpha, ca, A, t_alpha, lam1, inner_steps, xa, za)
            nrm = _quad(A, alpha)
            if not nrm > NORM_FLOOR * NORM_FLOOR:
                status = STATUS_ZERO_ALPHA if isfinite(nrm) else STATUS_NON_FINITE
                break
            nrm = sqrt(nrm)
            for i in range(p):
                alpha[i] /= nrm

            for j in range(q):
                lin = 0.0
                for i in range(p):
                    lin += sr[i, j] * alpha[i]
                cb[j] = lin
            _prox_descend(beta, cb, B, t_beta, lam2, inner_steps, xb, zb)
            nrm = _quad(B, beta)
            if not nrm > NORM_FLOOR * NORM_FLOOR:
                status = STATUS_ZERO_BETA if isfinite(nrm) else STATUS_NON_FINITE
                break
            nrm = sqrt(nrm)
            for j in range(q):
                beta[j] /= nrm

            a = _bilinear(alpha, s_re, beta)
            b = _bilinear(alpha, s_im, beta)
            phi = _lm_phase(a, b, phi, 1e-10, 100, damping, &steps)

            cph = cos(phi)
            sph = sin(phi)
            for i in range(p):
                for j in range(q):
                    sr[i, j] = s_re[i, j] * cph + s_im[i, j] * sph
            l1a = 0.0
            for i in range(p):
                l1a += fabs(alpha[i])
            l1b = 0.0
            for j in range(q):
                l1b += fabs(beta[j])
            f = (-_bilinear(alpha, sr, beta) + lam1 * l1a + lam2 * l1b
                 + 0.5 * _quad(A, alpha) + 0.5 * _quad(B, beta))
            if not isfinite(f):
                status = STATUS_NON_FINITE
                break
            trace[n_iter] = f
            n_iter += 1
            if k > 0 and fabs(f - f_prev) <= rel_tol * (fabs(f_prev) if fabs(f_prev) > 1e-300 else 1e-300):
                status = STATUS_CONVERGED
                break
            f_prev = f

    return alpha_arr, beta_arr, phi, trace_arr[:n_iter].copy(), n_iter, status
