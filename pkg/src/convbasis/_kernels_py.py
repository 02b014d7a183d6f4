"""Pure-numpy fallback kernels, signature-compatible with the compiled core.

All inputs are float64 C-contiguous arrays prepared by the callers; these
functions do no validation of their own.
"""

import numpy as np

from .segtree import SegmentTree


def conv_matvec_naive(a, x):
    """Triangular convolution matvec, direct O(n^2) multiply-accumulate."""
    return np.convolve(a, x)[: a.size]


def causal_matvec(u1, u2, v):
    """(M o U1 U2^T) v via prefix sums of the rank-k key states, O(nk)."""
    c = np.cumsum(u2 * v[:, None], axis=0)
    return np.einsum("ij,ij->i", u1, c)


def rowchange_matvec(u1, u2, v, add_idx, add_ptr, rem_idx, rem_ptr):
    """(W o U1 U2^T) v for a row-change mask given CSR-flattened deltas."""
    n, k = u1.shape
    b = u2 * v[:, None]
    c = np.empty((n, k))
    acc = np.zeros(k)
    for j in range(n):
        for t in range(add_ptr[j], add_ptr[j + 1]):
            acc += b[add_idx[t]]
        for t in range(rem_ptr[j], rem_ptr[j + 1]):
            acc -= b[rem_idx[t]]
        c[j] = acc
    return np.einsum("ij,ij->i", u1, c)


def continuous_matvec(u1, u2, v, starts, ends):
    """(W o U1 U2^T) v for a continuous-row mask via segment-tree range sums."""
    n, k = u1.shape
    tree = SegmentTree(u2 * v[:, None])
    c = np.empty((n, k))
    for j in range(n):
        c[j] = tree.range_sum(int(starts[j]), int(ends[j]))
    return np.einsum("ij,ij->i", u1, c)
