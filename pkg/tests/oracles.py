"""Independent reference implementations used by the tests.

Everything here is written as direct summation loops (or the matching
one-liner) with no imports from the package under test, so a bug in the
library cannot hide in its own oracle. Slow on purpose.
"""

import numpy as np


def dft_direct(x, inverse=False):
    """O(n^2) DFT by explicit summation."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.size
    sign = 1.0 if inverse else -1.0
    out = np.empty(n, dtype=np.complex128)
    for k in range(n):
        acc = 0.0 + 0.0j
        for j in range(n):
            acc += x[j] * np.exp(sign * 2j * np.pi * j * k / n)
        out[k] = acc
    return out / n if inverse else out


def conv_dense(a):
    """Lower-triangular convolution matrix: entry (i, j) = a[i - j] for i >= j."""
    a = np.asarray(a, dtype=np.float64)
    n = a.size
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            out[i, j] = a[i - j]
    return out


def subconv_dense(b, m, n):
    """conv(b, m): conv(b[:m]) in the trailing m x m block, zero elsewhere."""
    out = np.zeros((n, n))
    out[n - m :, n - m :] = conv_dense(np.asarray(b, dtype=np.float64)[:m])
    return out


def basis_dense(n, vectors, windows):
    """Sum of sub-convolution matrices."""
    out = np.zeros((n, n))
    for b, m in zip(vectors, windows):
        out += subconv_dense(b, m, n)
    return out


def toeplitz_dense(diags, n):
    """Entry (i, j) = diags[n - 1 + i - j]; diags has length 2n - 1."""
    diags = np.asarray(diags, dtype=np.float64)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = diags[n - 1 + i - j]
    return out


def circulant_dense(c):
    """Entry (i, j) = c[(i - j) mod n]."""
    c = np.asarray(c, dtype=np.float64)
    n = c.size
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = c[(i - j) % n]
    return out


def conv_dense_fast(a):
    """Vectorized conv(a) materialization for sizes where loops are too slow."""
    a = np.asarray(a, dtype=np.float64)
    n = a.size
    idx = np.arange(n)
    diff = idx[:, None] - idx[None, :]
    return np.where(diff >= 0, a[np.clip(diff, 0, n - 1)], 0.0)


def softmax_attention_rows(q, k, w, v, scale=1.0):
    """Masked softmax attention, one row at a time by explicit sums."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    n, d = v.shape
    out = np.zeros((n, d))
    for i in range(n):
        weights = np.zeros(n)
        for j in range(n):
            if w[i, j] > 0:
                weights[j] = np.exp(scale * float(np.dot(q[i], k[j])))
        den = weights.sum()
        for c in range(d):
            out[i, c] = float(np.dot(weights, v[:, c])) / den
    return out


def masked_product_matvec(w, u1, u2, v):
    """[W o (U1 U2^T)] v by explicit summation."""
    n = w.shape[0]
    out = np.zeros(n)
    for i in range(n):
        for j in range(n):
            if w[i, j] > 0:
                out[i] += float(np.dot(u1[i], u2[j])) * v[j]
    return out


def range_sum_direct(rows, lo, hi):
    """Sum of rows[lo..hi] inclusive."""
    return np.asarray(rows, dtype=np.float64)[lo : hi + 1].sum(axis=0)


def attention_loss_direct(a1, a2, a3, x, y, e):
    """0.5 || f (A3 Y) - E ||_F^2 with f the causal softmax of A1 X A2^T,
    assembled entry by entry; independent of any library code."""
    n, d = np.shape(a1)
    scores = np.asarray(a1) @ np.asarray(x) @ np.asarray(a2).T
    h = np.asarray(a3) @ np.asarray(y)
    total = 0.0
    for i in range(n):
        weights = np.exp(scores[i, : i + 1])
        f_row = weights / weights.sum()
        for c in range(d):
            pred = float(np.dot(f_row, h[: i + 1, c]))
            total += (pred - e[i, c]) ** 2
    return 0.5 * total


def fd_gradient_direct(a1, a2, a3, x, y, e, step_scale=1e-5):
    """Central finite differences of attention_loss_direct in X."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[0]
    grad = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            h = step_scale * max(1.0, abs(x[i, j]))
            xp = x.copy()
            xp[i, j] += h
            xm = x.copy()
            xm[i, j] -= h
            grad[i, j] = (
                attention_loss_direct(a1, a2, a3, xp, y, e)
                - attention_loss_direct(a1, a2, a3, xm, y, e)
            ) / (2 * h)
    return grad


def nondegen_margin_direct(vectors, windows, t):
    """Exhaustive min over j <= i of || sum_{l=j..i} b_l[:t] ||_1."""
    k = len(windows)
    margin = np.inf
    for i in range(k):
        for j in range(i + 1):
            acc = np.zeros(t)
            for l in range(j, i + 1):
                acc += np.asarray(vectors[l], dtype=np.float64)[:t]
            margin = min(margin, float(np.sum(np.abs(acc))))
    return margin


def linear_scan_onset(columns, v, t, threshold, lo, hi):
    """Smallest j in [lo, hi] with ||columns[j][j:j+t] - v||_1 >= threshold,
    else hi; the binary search must agree with this when monotone."""
    for j in range(lo, hi + 1):
        if float(np.sum(np.abs(columns[j][j : j + t] - v))) >= threshold:
            return j
    return hi
