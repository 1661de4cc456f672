# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled reductions used by the quadrature and grid-oracle inner loops."""
import numpy as np
from libc.math cimport exp, log, fabs, isinf


def panel_sums(const double[::1] energy, const double[:, ::1] weights, double floor,
               const double[::1] kronrod, const double[::1] gauss,
               const double[::1] jacobian):
    cdef Py_ssize_t P = jacobian.shape[0]
    cdef Py_ssize_t N = kronrod.shape[0]
    cdef Py_ssize_t K = weights.shape[1]
    cdef Py_ssize_t p, n, k, row
    cdef double w, v, jac, wk, wg
    k_out = np.zeros((P, K))
    g_out = np.zeros((P, K))
    a_out = np.zeros((P, K))
    cdef double[:, ::1] ko = k_out
    cdef double[:, ::1] go = g_out
    cdef double[:, ::1] ao = a_out
    for p in range(P):
        for n in range(N):
            row = p * N + n
            if isinf(energy[row]) and energy[row] > 0:
                continue
            w = exp(floor - energy[row])
            wk = kronrod[n]
            wg = gauss[n]
            for k in range(K):
                v = w * weights[row, k]
                ko[p, k] += wk * v
                go[p, k] += wg * v
                ao[p, k] += wk * fabs(v)
        jac = jacobian[p]
        for k in range(K):
            ko[p, k] *= jac
            go[p, k] *= jac
            ao[p, k] *= jac
    return k_out, g_out, a_out


def tilted_line_stats(const double[::1] logw, const double[::1] f, double t):
    cdef Py_ssize_t n = logw.shape[0]
    cdef Py_ssize_t i, imax = 0
    cdef double amax = -1e308
    cdef double a, e, c, d, s0 = 0.0, s1 = 0.0, s2 = 0.0, mean
    for i in range(n):
        a = logw[i] - t * f[i]
        if a > amax:
            amax = a
            imax = i
    # moments about the mode value keep the one-pass variance well conditioned
    c = f[imax]
    for i in range(n):
        e = exp(logw[i] - t * f[i] - amax)
        d = f[i] - c
        s0 += e
        s1 += e * d
        s2 += e * d * d
    mean = s1 / s0
    return amax + log(s0), c + mean, max(s2 / s0 - mean * mean, 0.0)
