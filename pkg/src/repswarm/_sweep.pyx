# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled frequency-sweep determinant kernel."""

import numpy as np
from libc.math cimport cos, sin, fabs
from libc.stdlib cimport malloc, free


cdef inline double _mag1(double complex z) nogil:
    return fabs(z.real) + fabs(z.imag)


cdef double complex _lu_det(double complex* a, Py_ssize_t n) nogil:
    cdef Py_ssize_t i, j, k, p
    cdef double best, m
    cdef double complex det = 1.0, piv, f, tmp
    for k in range(n):
        p = k
        best = _mag1(a[k * n + k])
        for i in range(k + 1, n):
            m = _mag1(a[i * n + k])
            if m > best:
                best = m
                p = i
        if best == 0.0:
            return 0.0
        if p != k:
            for j in range(n):
                tmp = a[k * n + j]
                a[k * n + j] = a[p * n + j]
                a[p * n + j] = tmp
            det = -det
        piv = a[k * n + k]
        det = det * piv
        for i in range(k + 1, n):
            f = a[i * n + k] / piv
            if f != 0:
                for j in range(k + 1, n):
                    a[i * n + j] = a[i * n + j] - f * a[k * n + j]
    return det


cdef inline double complex _cis(double ph) nogil:
    return cos(ph) + 1j * sin(ph)


# on a uniform grid the phases advance by a fixed rotation per point; they
# are recomputed exactly every RESYNC points to bound rounding drift, and
# each point's offset from the ideal progression (an ulp or so of w) is
# applied to first order
DEF RESYNC = 64


def sweep_det(const double complex[:, ::1] hr, const double[:, ::1] tau,
              const double[::1] alpha, const double[::1] nu,
              const double[::1] omegas, double omega_ref, bint scale_amp):
    """det(I - D_a(w) HR(w)) for every w in ``omegas``."""
    cdef Py_ssize_t n = hr.shape[0]
    cdef Py_ssize_t nf = omegas.shape[0]
    cdef Py_ssize_t f, i, k
    cdef double w, dw, s, step = 0.0, w_sync = 0.0, delta = 0.0
    cdef Py_ssize_t f_sync = 0
    cdef double complex ai
    cdef bint uniform = nf > 2
    out = np.empty(nf, dtype=np.complex128)
    cdef double complex[::1] res = out
    if n == 0:
        out[:] = 1.0
        return out
    if uniform:
        step = (omegas[nf - 1] - omegas[0]) / (nf - 1)
        for f in range(nf):
            if fabs(omegas[f] - (omegas[0] + f * step)) > 1e-9 * fabs(step) * (f + 1):
                uniform = False
                break
    cdef double complex* a = <double complex*> malloc(n * n * sizeof(double complex))
    cdef double complex* ph = <double complex*> malloc(n * n * sizeof(double complex))
    cdef double complex* rot = <double complex*> malloc(n * n * sizeof(double complex))
    cdef double complex* phn = <double complex*> malloc(n * sizeof(double complex))
    cdef double complex* rotn = <double complex*> malloc(n * sizeof(double complex))
    if a == NULL or ph == NULL or rot == NULL or phn == NULL or rotn == NULL:
        free(a); free(ph); free(rot); free(phn); free(rotn)
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                rotn[i] = _cis(-step * nu[i])
                for k in range(n):
                    rot[i * n + k] = _cis(-step * tau[i, k])
            for f in range(nf):
                w = omegas[f]
                dw = w - omega_ref
                if not uniform or f % RESYNC == 0:
                    w_sync = w
                    f_sync = f
                    delta = 0.0
                    for i in range(n):
                        phn[i] = _cis(-w * nu[i])
                        for k in range(n):
                            ph[i * n + k] = _cis(-dw * tau[i, k])
                else:
                    delta = (w - w_sync) - (f - f_sync) * step  # exact difference first
                    for i in range(n):
                        phn[i] = phn[i] * rotn[i]
                        for k in range(n):
                            ph[i * n + k] = ph[i * n + k] * rot[i * n + k]
                s = omega_ref / w if scale_amp else 1.0
                for i in range(n):
                    ai = -alpha[i] * s * phn[i] * (1.0 - 1j * delta * nu[i])
                    for k in range(n):
                        a[i * n + k] = ai * hr[i, k] * ph[i * n + k] * (1.0 - 1j * delta * tau[i, k])
                    a[i * n + i] = a[i * n + i] + 1.0
                res[f] = _lu_det(a, n)
    finally:
        free(a); free(ph); free(rot); free(phn); free(rotn)
    return out
