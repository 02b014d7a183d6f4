"""Dense brute-force attention oracle and norm helpers.

Everything here is O(n^2) on purpose: these are the reference paths the fast
kernels are validated against.
"""

import numpy as np

from .errors import NormalizationError, ScoreOverflowError
from .validate import as_matrix, as_vector

# float64 exp overflows near 709.78; reject anything past 700 instead of
# silently producing inf. No per-row max subtraction: a non-uniform row shift
# would destroy the conv structure the fast paths rely on.
MAX_SCORE = 700.0


def linf_norm(a):
    """Max absolute entry."""
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        raise ValueError("empty input")
    return float(np.max(np.abs(a)))


def l1_norm(a):
    """Sum of absolute entries."""
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        raise ValueError("empty input")
    return float(np.sum(np.abs(a)))


def relative_frobenius_diff(y, yt):
    """||y - yt||_F^2 / ||y||_F^2."""
    y = as_matrix(y, "y")
    yt = as_matrix(yt, "yt")
    if y.shape != yt.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {yt.shape}")
    ref = float(np.sum(y * y))
    if ref == 0.0:
        raise ValueError("reference matrix has zero Frobenius norm")
    return float(np.sum((y - yt) ** 2)) / ref


def check_score_overflow(scores, support):
    """Reject masked scaled scores beyond the exp overflow guard."""
    masked = scores[support > 0]
    if masked.size and np.max(masked) > MAX_SCORE:
        raise ScoreOverflowError(
            f"masked score {np.max(masked):.3g} exceeds exp guard {MAX_SCORE}"
        )


def masked_exp_scores(q, k, mask, scale=1.0):
    """A = W o exp(scale * Q K^T), with the overflow guard applied."""
    q = as_matrix(q, "Q")
    k = as_matrix(k, "K")
    if q.shape != k.shape:
        raise ValueError(f"Q and K must share shape, got {q.shape} vs {k.shape}")
    if q.shape[0] != mask.n:
        raise ValueError(f"mask size {mask.n} != n {q.shape[0]}")
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    w = mask.materialize()
    scores = scale * (q @ k.T)
    check_score_overflow(scores, w)
    return w * np.exp(np.where(w > 0, scores, 0.0))


def naive_masked_attention(q, k, v, mask, scale=1.0):
    """D^-1 A V with A = W o exp(scale * Q K^T), D = diag(A 1_n).

    Each output row is a convex combination of V rows. Raises
    NormalizationError naming the first row whose mask support is empty.
    """
    v = as_matrix(v, "V")
    a = masked_exp_scores(q, k, mask, scale)
    if v.shape[0] != a.shape[0]:
        raise ValueError(f"V has {v.shape[0]} rows, expected {a.shape[0]}")
    d = a.sum(axis=1)
    bad = np.nonzero(d <= 0.0)[0]
    if bad.size:
        raise NormalizationError(f"row {bad[0]} has empty mask support")
    return (a / d[:, None]) @ v


def masked_attention_weights(q, k, mask, scale=1.0):
    """The row-stochastic matrix D^-1 A (oracle; rows sum to 1)."""
    a = masked_exp_scores(q, k, mask, scale)
    d = a.sum(axis=1)
    bad = np.nonzero(d <= 0.0)[0]
    if bad.size:
        raise NormalizationError(f"row {bad[0]} has empty mask support")
    return a / d[:, None]


def norm_product_bound(g, x):
    """||G x||_1 <= ||G||_1 ||x||_inf; returns (lhs, rhs) for assertion."""
    g = as_matrix(g, "G")
    x = as_vector(x, "x")
    return l1_norm(g @ x), l1_norm(g) * linf_norm(x)
