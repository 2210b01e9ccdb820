# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: batched cyclic Jacobi and elementary symmetric sums.

Mirrors ``sigmahess._fallback`` exactly; the package picks one at import.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, hypot

from .errors import NumericalFailure

cnp.import_array()


cdef void _esp_into(const double* x, Py_ssize_t n, Py_ssize_t skip,
                    double* c, Py_ssize_t k) noexcept nogil:
    # coefficients 0..k of prod(1 + x_j t) over j != skip
    cdef Py_ssize_t j, m, top, cnt = 0
    c[0] = 1.0
    for m in range(1, k + 1):
        c[m] = 0.0
    for j in range(n):
        if j == skip:
            continue
        top = cnt + 1
        if top > k:
            top = k
        m = top
        while m >= 1:
            c[m] += x[j] * c[m - 1]
            m -= 1
        cnt += 1


def esp_all(x):
    cdef cnp.ndarray[double, ndim=1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    cdef cnp.ndarray[double, ndim=1] c = np.empty(n + 1)
    if n == 0:
        c[0] = 1.0
        return c
    _esp_into(&xv[0], n, -1, &c[0], n)
    return c


def batch_esp(X, Py_ssize_t k):
    cdef cnp.ndarray[double, ndim=2] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t N = Xv.shape[0], n = Xv.shape[1], i
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(N)
    if k < 0 or k > n:
        return out
    cdef double[64] buf
    if k >= 64:
        raise ValueError("order too large for compiled kernel")
    with nogil:
        for i in range(N):
            _esp_into(&Xv[i, 0], n, -1, buf, k)
            out[i] = buf[k]
    return out


def batch_sigma_grad(X, Py_ssize_t k):
    cdef cnp.ndarray[double, ndim=2] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t N = Xv.shape[0], n = Xv.shape[1], i, p
    cdef cnp.ndarray[double, ndim=1] val = np.zeros(N)
    cdef cnp.ndarray[double, ndim=2] grad = np.zeros((N, n))
    cdef double[64] buf
    if k >= 64 or n >= 64:
        raise ValueError("dimension too large for compiled kernel")
    with nogil:
        for i in range(N):
            if 0 <= k <= n:
                _esp_into(&Xv[i, 0], n, -1, buf, k)
                val[i] = buf[k]
            if 1 <= k and k - 1 <= n - 1:
                for p in range(n):
                    _esp_into(&Xv[i, 0], n, p, buf, k - 1)
                    grad[i, p] = buf[k - 1]
    return val, grad


cdef int _jacobi_one(double* a, double* v, Py_ssize_t n, double tol,
                     int max_sweeps) noexcept nogil:
    # a: row-major n*n, overwritten; v: eigenvectors column-wise
    cdef Py_ssize_t p, q, r
    cdef int sweep
    cdef double fro = 0.0, off, apq, theta, t, c, s, x, y
    for r in range(n * n):
        fro += a[r] * a[r]
        v[r] = 0.0
    for r in range(n):
        v[r * n + r] = 1.0
    fro = sqrt(fro)
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += 2.0 * a[p * n + q] * a[p * n + q]
        if sqrt(off) <= tol * fro:
            return 0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p * n + q]
                if fabs(apq) <= 1e-300:
                    continue
                theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif theta > 0.0:
                    t = 1.0 / (theta + hypot(1.0, theta))
                else:
                    t = -1.0 / (-theta + hypot(1.0, theta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for r in range(n):
                    x = a[r * n + p]
                    y = a[r * n + q]
                    a[r * n + p] = c * x - s * y
                    a[r * n + q] = s * x + c * y
                for r in range(n):
                    x = a[p * n + r]
                    y = a[q * n + r]
                    a[p * n + r] = c * x - s * y
                    a[q * n + r] = s * x + c * y
                a[p * n + q] = 0.0
                a[q * n + p] = 0.0
                for r in range(n):
                    x = v[r * n + p]
                    y = v[r * n + q]
                    v[r * n + p] = c * x - s * y
                    v[r * n + q] = s * x + c * y
    return 1


def batch_jacobi_eigh(A, double tol=1e-13, int max_sweeps=60):
    cdef cnp.ndarray[double, ndim=3] Av = np.array(A, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t N = Av.shape[0], n = Av.shape[1], i, r
    cdef cnp.ndarray[double, ndim=3] V = np.empty((N, n, n))
    cdef cnp.ndarray[double, ndim=2] w = np.empty((N, n))
    cdef int failed = 0
    with nogil:
        for i in range(N):
            if _jacobi_one(&Av[i, 0, 0], &V[i, 0, 0], n, tol, max_sweeps):
                failed = 1
                break
            for r in range(n):
                w[i, r] = Av[i, r, r]
    if failed:
        raise NumericalFailure(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    return w, V
