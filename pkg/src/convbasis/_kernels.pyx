# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the loop-bound hot paths.

Signature-compatible with the pure-numpy twin `_kernels_py`; callers prepare
float64 C-contiguous inputs.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv_matvec_naive(double[::1] a, double[::1] x):
    """Triangular convolution matvec, direct O(n^2) multiply-accumulate."""
    cdef Py_ssize_t n = a.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(n)
    cdef double[::1] y = out
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(i + 1):
            acc += a[i - j] * x[j]
        y[i] = acc
    return out


def causal_matvec(double[:, ::1] u1, double[:, ::1] u2, double[::1] v):
    """(M o U1 U2^T) v via prefix sums of the rank-k key states, O(nk)."""
    cdef Py_ssize_t n = u1.shape[0]
    cdef Py_ssize_t k = u1.shape[1]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n)
    cdef double[::1] y = out
    cdef double[::1] acc = np.zeros(k)
    cdef Py_ssize_t j, kk
    cdef double dot
    for j in range(n):
        for kk in range(k):
            acc[kk] += u2[j, kk] * v[j]
        dot = 0.0
        for kk in range(k):
            dot += u1[j, kk] * acc[kk]
        y[j] = dot
    return out


def rowchange_matvec(double[:, ::1] u1, double[:, ::1] u2, double[::1] v,
                     long long[::1] add_idx, long long[::1] add_ptr,
                     long long[::1] rem_idx, long long[::1] rem_ptr):
    """(W o U1 U2^T) v for a row-change mask given CSR-flattened deltas."""
    cdef Py_ssize_t n = u1.shape[0]
    cdef Py_ssize_t k = u1.shape[1]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n)
    cdef double[::1] y = out
    cdef double[::1] acc = np.zeros(k)
    cdef Py_ssize_t j, kk, t, i
    cdef double dot
    for j in range(n):
        for t in range(add_ptr[j], add_ptr[j + 1]):
            i = add_idx[t]
            for kk in range(k):
                acc[kk] += u2[i, kk] * v[i]
        for t in range(rem_ptr[j], rem_ptr[j + 1]):
            i = rem_idx[t]
            for kk in range(k):
                acc[kk] -= u2[i, kk] * v[i]
        dot = 0.0
        for kk in range(k):
            dot += u1[j, kk] * acc[kk]
        y[j] = dot
    return out


def continuous_matvec(double[:, ::1] u1, double[:, ::1] u2, double[::1] v,
                      long long[::1] starts, long long[::1] ends):
    """(W o U1 U2^T) v for a continuous-row mask via segment-tree range sums."""
    cdef Py_ssize_t n = u1.shape[0]
    cdef Py_ssize_t k = u1.shape[1]
    cdef Py_ssize_t size = 1
    while size < n:
        size <<= 1
    cdef cnp.ndarray[double, ndim=2] tree_arr = np.zeros((2 * size, k))
    cdef double[:, ::1] tree = tree_arr
    cdef Py_ssize_t i, j, kk, lo, hi
    for i in range(n):
        for kk in range(k):
            tree[size + i, kk] = u2[i, kk] * v[i]
    for i in range(size - 1, 0, -1):
        for kk in range(k):
            tree[i, kk] = tree[2 * i, kk] + tree[2 * i + 1, kk]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n)
    cdef double[::1] y = out
    cdef double[::1] acc = np.empty(k)
    cdef double dot
    for j in range(n):
        for kk in range(k):
            acc[kk] = 0.0
        lo = starts[j] + size
        hi = ends[j] + size + 1
        while lo < hi:
            if lo & 1:
                for kk in range(k):
                    acc[kk] += tree[lo, kk]
                lo += 1
            if hi & 1:
                hi -= 1
                for kk in range(k):
                    acc[kk] += tree[hi, kk]
            lo >>= 1
            hi >>= 1
        dot = 0.0
        for kk in range(k):
            dot += u1[j, kk] * acc[kk]
        y[j] = dot
    return out
