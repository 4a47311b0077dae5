# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: SPM phase rotation and bit-wise posterior sums."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, cos, sin

cnp.import_array()

cdef double LN2 = 0.6931471805599453


def spm_rotate(const double complex[:, ::1] samples, double scale):
    """Return ``samples * exp(1j * scale * (|x|^2 + |y|^2))`` sample-wise."""
    cdef Py_ssize_t n = samples.shape[1], i
    out = np.empty((2, n), dtype=np.complex128)
    cdef double complex[:, ::1] o = out
    cdef double complex ux, uy, rot
    cdef double p, ph
    with nogil:
        for i in range(n):
            ux = samples[0, i]
            uy = samples[1, i]
            p = ux.real * ux.real + ux.imag * ux.imag + uy.real * uy.real + uy.imag * uy.imag
            ph = scale * p
            rot = cos(ph) + 1j * sin(ph)
            o[0, i] = ux * rot
            o[1, i] = uy * rot
    return out


cdef inline void _axis_weights(double y, const double[::1] pam, double inv_var,
                               double* w, Py_ssize_t side) noexcept nogil:
    cdef Py_ssize_t i
    cdef double d, mn = 1e300
    for i in range(side):
        d = (y - pam[i]) * (y - pam[i]) * inv_var
        w[i] = d
        if d < mn:
            mn = d
    for i in range(side):
        w[i] = exp(mn - w[i])


def qam_bit_log_posteriors(const double[::1] yr, const double[::1] yi, const long[::1] ti, const long[::1] tq,
                           const double[::1] pam, const double[:, ::1] prior,
                           const unsigned char[:, ::1] lab, double inv_var):
    """Per-symbol ``sum_j log2 P(b_j = b_j(x_k) | y_k)`` for square QAM.

    The Gaussian metric factors over I and Q, so each symbol needs only
    ``2 * side`` exponentials; ``prior[i, q]`` may be any joint pmf.
    """
    cdef Py_ssize_t n = yr.shape[0], side = pam.shape[0], nb = lab.shape[1]
    cdef Py_ssize_t k, i, q, j
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double[::1] wi = np.empty(side), wq = np.empty(side)
    cdef double[::1] a = np.empty(side), b = np.empty(side)
    cdef double total, acc, s1, sb, t
    with nogil:
        for k in range(n):
            _axis_weights(yr[k], pam, inv_var, &wi[0], side)
            _axis_weights(yi[k], pam, inv_var, &wq[0], side)
            for i in range(side):
                a[i] = 0.0
            for q in range(side):
                b[q] = 0.0
            for i in range(side):
                for q in range(side):
                    t = prior[i, q] * wi[i] * wq[q]
                    a[i] += t
                    b[q] += t
            total = 0.0
            for i in range(side):
                total += a[i]
            acc = 0.0
            for j in range(nb):
                s1 = 0.0
                for i in range(side):
                    if lab[i, j]:
                        s1 += a[i]
                sb = s1 if lab[ti[k], j] else total - s1
                if sb < 1e-300:
                    sb = 1e-300
                acc += log(sb / total)
                s1 = 0.0
                for q in range(side):
                    if lab[q, j]:
                        s1 += b[q]
                sb = s1 if lab[tq[k], j] else total - s1
                if sb < 1e-300:
                    sb = 1e-300
                acc += log(sb / total)
            o[k] = acc / LN2
    return out
