"""Masked low-rank attention: W o (U1 U2^T) matvecs without the n x n matrix.

Each supported mask family has a matvec costing far below n^2 when the rank r
is small: causal masks use running prefix sums, row-change masks replay CSR
support deltas, continuous-row masks query a segment tree, and the two
distinct-pattern families group identical mask columns/rows. Attention
normalizes with one extra matvec against the all-ones vector.
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from .dense import MAX_SCORE, linf_norm
from .errors import FactorizationError, NormalizationError, ScoreOverflowError
from .masks import (
    CausalMask,
    ContinuousRowMask,
    DenseMask,
    DistinctColumnsMask,
    DistinctRowsMask,
    RowChangeMask,
)
from .validate import as_matrix, as_vector


@dataclass(frozen=True)
class LowRankFactors:
    """U1, U2 with n rows and r columns each; the product means U1 U2^T."""

    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u1", as_matrix(self.u1, "U1"))
        object.__setattr__(self, "u2", as_matrix(self.u2, "U2"))
        if self.u1.shape != self.u2.shape:
            raise ValueError(
                f"U1 and U2 must share shape, got {self.u1.shape} vs {self.u2.shape}"
            )

    @property
    def n(self):
        return self.u1.shape[0]

    @property
    def rank(self):
        return self.u1.shape[1]

    def dense(self):
        return self.u1 @ self.u2.T


def dense_masked_product(factors, mask):
    """W o (U1 U2^T), materialized (oracle path)."""
    if factors.n != mask.n:
        raise ValueError(f"factors have n={factors.n}, mask has n={mask.n}")
    return mask.materialize() * factors.dense()


def _check_v(factors, v):
    v = as_vector(v, "v")
    if v.size != factors.n:
        raise ValueError(f"v must have length {factors.n}, got {v.size}")
    return v


def causal_matvec(factors, v):
    """[M o (U1 U2^T)] v in O(n r) by prefix sums of U2 scaled by v."""
    v = _check_v(factors, v)
    return backend.kernels.causal_matvec(factors.u1, factors.u2, v)


def rowchange_matvec(factors, mask, v):
    """Masked matvec replaying per-row support deltas; O((n + total changes) r)."""
    v = _check_v(factors, v)
    if not isinstance(mask, RowChangeMask):
        raise TypeError(f"expected RowChangeMask, got {type(mask).__name__}")
    if mask.n != factors.n:
        raise ValueError(f"factors have n={factors.n}, mask has n={mask.n}")
    add_idx, add_ptr, rem_idx, rem_ptr = mask.deltas_csr()
    return backend.kernels.rowchange_matvec(
        factors.u1, factors.u2, v, add_idx, add_ptr, rem_idx, rem_ptr
    )


def continuous_matvec(factors, mask, v):
    """Masked matvec for one contiguous support interval per row; a segment
    tree over the rows of U2 o v answers each interval in O(log n) node sums."""
    v = _check_v(factors, v)
    if not isinstance(mask, ContinuousRowMask):
        raise TypeError(f"expected ContinuousRowMask, got {type(mask).__name__}")
    if mask.n != factors.n:
        raise ValueError(f"factors have n={factors.n}, mask has n={mask.n}")
    return backend.kernels.continuous_matvec(factors.u1, factors.u2, v, mask.starts, mask.ends)


def distinct_columns_matvec(factors, mask, v):
    """Masked matvec when columns repeat among r' prototypes: group the
    columns, reduce each group's U2 rows against v once, then combine the
    group results through the prototype columns. O((n + r') r + n r')."""
    v = _check_v(factors, v)
    if not isinstance(mask, DistinctColumnsMask):
        raise TypeError(f"expected DistinctColumnsMask, got {type(mask).__name__}")
    if mask.n != factors.n:
        raise ValueError(f"factors have n={factors.n}, mask has n={mask.n}")
    out = np.zeros(factors.n)
    for g in range(mask.num_groups):
        idx = mask.group_members(g)
        w = factors.u2[idx].T @ v[idx]
        out += mask.prototypes[:, g] * (factors.u1 @ w)
    return out


def distinct_rows_matvec(factors, mask, v):
    """Masked matvec when rows repeat among r' prototypes: mask v by each
    prototype row, reduce through U2 once, scatter U1 times the reduction
    into that group's rows. O((n + r') r + n r')."""
    v = _check_v(factors, v)
    if not isinstance(mask, DistinctRowsMask):
        raise TypeError(f"expected DistinctRowsMask, got {type(mask).__name__}")
    if mask.n != factors.n:
        raise ValueError(f"factors have n={factors.n}, mask has n={mask.n}")
    out = np.zeros(factors.n)
    for g in range(mask.num_groups):
        z = factors.u2.T @ (mask.prototypes[g] * v)
        idx = mask.group_members(g)
        out[idx] = factors.u1[idx] @ z
    return out


def masked_matvec(factors, mask, v):
    """Dispatch to the structured matvec matching the mask family."""
    if isinstance(mask, CausalMask):
        return causal_matvec(factors, v)
    if isinstance(mask, RowChangeMask):
        return rowchange_matvec(factors, mask, v)
    if isinstance(mask, ContinuousRowMask):
        return continuous_matvec(factors, mask, v)
    if isinstance(mask, DistinctColumnsMask):
        return distinct_columns_matvec(factors, mask, v)
    if isinstance(mask, DistinctRowsMask):
        return distinct_rows_matvec(factors, mask, v)
    if isinstance(mask, DenseMask):
        v = _check_v(factors, v)
        return (mask.materialize() * factors.dense()) @ v
    raise TypeError(f"no structured matvec for mask type {type(mask).__name__}")


def masked_lowrank_attention(factors, mask, v):
    """D^{-1} [W o (U1 U2^T)] V with D = diag of the masked row sums.

    d + 1 structured matvecs total; raises NormalizationError on a zero
    normalizer row.
    """
    v = as_matrix(v, "V")
    if v.shape[0] != factors.n:
        raise ValueError(f"V must have {factors.n} rows, got {v.shape[0]}")
    den = masked_matvec(factors, mask, np.ones(factors.n))
    bad = np.nonzero(den == 0.0)[0]
    if bad.size:
        raise NormalizationError(f"row {bad[0]} has zero normalizer")
    out = np.empty_like(v)
    for c in range(v.shape[1]):
        out[:, c] = masked_matvec(factors, mask, v[:, c])
    return out / den[:, None]


def scaled_exp_scores(q, k):
    """H = exp(Q K^T / d), the positive matrix the low-rank route factors.

    Dense by construction; the guard rejects scaled scores beyond MAX_SCORE.
    """
    q = as_matrix(q, "Q")
    k = as_matrix(k, "K")
    if q.shape != k.shape:
        raise ValueError(f"Q and K must share shape, got {q.shape} vs {k.shape}")
    scores = q @ k.T / q.shape[1]
    top = float(np.max(scores))
    if top > MAX_SCORE:
        raise ScoreOverflowError(f"scaled score {top:.3g} exceeds exp guard {MAX_SCORE}")
    return np.exp(scores)


def best_rank_factors(h, rank):
    """Best Frobenius rank-r factors of a dense matrix, via truncated SVD."""
    h = as_matrix(h, "H")
    rank = int(rank)
    if not 1 <= rank <= min(h.shape):
        raise ValueError(f"rank {rank} out of [1, {min(h.shape)}]")
    u, s, vt = np.linalg.svd(h, full_matrices=False)
    return LowRankFactors(u[:, :rank] * s[:rank], vt[:rank].T)


def entrywise_relative_error(h, factors):
    """max |U1 U2^T - H| / H over entries; H must be strictly positive."""
    h = as_matrix(h, "H")
    if np.min(h) <= 0:
        raise ValueError("entrywise relative error needs a strictly positive H")
    if h.shape != (factors.n, factors.n):
        raise ValueError(f"H must be ({factors.n}, {factors.n}), got {h.shape}")
    return float(np.max(np.abs(factors.dense() - h) / h))


def epsk_factors(h, rank, epsilon):
    """Rank-r factors of a positive H with entrywise relative error <= epsilon.

    Truncated SVD; raises FactorizationError carrying the achieved error when
    the target is missed.
    """
    epsilon = float(epsilon)
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    factors = best_rank_factors(h, rank)
    achieved = entrywise_relative_error(h, factors)
    if achieved > epsilon:
        raise FactorizationError(epsilon, achieved, int(rank))
    return factors


def lowrank_error_bound(epsilon, v):
    """linf bound 4 eps max|V| between exact attention on H and attention on
    an entrywise eps-approximation; certified for eps in [0, 0.1]."""
    epsilon = float(epsilon)
    if not 0 <= epsilon <= 0.1:
        raise ValueError(f"bound certified only for epsilon in [0, 0.1], got {epsilon}")
    return 4.0 * epsilon * linf_norm(np.asarray(v, dtype=np.float64))
