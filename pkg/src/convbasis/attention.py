"""Causal attention through recovered conv bases.

conv_forward never materializes the n x n score matrix: it recovers the conv
basis of M o (Q K^T) from O(k log n) column queries, exponentiates the basis
(same windows), and evaluates numerator and row normalizer with k FFT matvecs
per output column. Accuracy degrades gracefully with the recovery noise
level: linf error at most 2 (exp(2 eps) - 1) max|V|.
"""

import numpy as np

from .dense import linf_norm
from .errors import NormalizationError
from .recovery import RecoveryParams, recover, score_column_oracle
from .structures import ConvBasis
from .validate import as_matrix


def conv_error_bound(epsilon, v):
    """linf bound 2 (exp(2 eps) - 1) max|V| on the attention output error when
    the recovered scores are within eps of the truth entrywise."""
    epsilon = float(epsilon)
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    return 2.0 * (np.exp(2.0 * epsilon) - 1.0) * linf_norm(np.asarray(v, dtype=np.float64))


def forward_from_basis(exp_basis, v):
    """diag(B 1)^{-1} B V for an exponentiated basis B."""
    if not isinstance(exp_basis, ConvBasis):
        raise TypeError(f"expected ConvBasis, got {type(exp_basis).__name__}")
    v = as_matrix(v, "V")
    if v.shape[0] != exp_basis.n:
        raise ValueError(f"V must have {exp_basis.n} rows, got {v.shape[0]}")
    denom = exp_basis.matvec(np.ones(exp_basis.n))
    bad = np.nonzero(denom <= 0)[0]
    if bad.size:
        raise NormalizationError(
            f"row {bad[0]} has non-positive normalizer {denom[bad[0]]:.6g}"
        )
    return exp_basis.matmat(v) / denom[:, None]


def conv_forward(q, k, v, params):
    """Causal attention D^{-1} (M o exp(Q K^T)) V via conv-basis recovery.

    Returns (output, recovery_result). Exact when the recovery hypothesis
    holds with epsilon=0; under epsilon-bounded score noise the linf output
    error stays within conv_error_bound(params.epsilon, V).
    """
    q = as_matrix(q, "Q")
    k = as_matrix(k, "K")
    v = as_matrix(v, "V")
    if q.shape[0] != k.shape[0] or q.shape[0] != v.shape[0]:
        raise ValueError(
            f"row mismatch: Q has {q.shape[0]}, K has {k.shape[0]}, V has {v.shape[0]}"
        )
    oracle = score_column_oracle(q, k)
    rec = recover(oracle, params)
    return forward_from_basis(rec.exp_basis(), v), rec


def exact_forward_via_conv(q, k, v):
    """Exact causal attention by peeling all n columns (k=n, T=1, delta=0).

    Same output as the dense route up to FFT roundoff; no structural
    assumption on Q K^T beyond the overflow guard.
    """
    q = as_matrix(q, "Q")
    params = RecoveryParams(k=q.shape[0], t_window=1, delta=0.0, epsilon=0.0)
    out, _ = conv_forward(q, k, v, params)
    return out


def _upper_parts(q, k, v, params):
    """Numerator/normalizer contributions of the strictly upper triangle.

    The transpose of the mirrored causal matrix A' = M o exp(K Q^T) covers
    the upper triangle including the diagonal, so the strict part is
    A'^T minus diag(exp(q_i . k_i)). Returned as (num, den) with the diagonal
    already subtracted.
    """
    oracle = score_column_oracle(k, q)
    rec = recover(oracle, params)
    basis = rec.exp_basis()
    diag = np.exp(np.einsum("ij,ij->i", q, k))
    num = basis.rmatmat(v) - diag[:, None] * v
    den = basis.rmatvec(np.ones(q.shape[0])) - diag
    return num, den


def full_self_attention_forward(q, k, v, params_lower, params_upper=None):
    """Unmasked softmax attention D^{-1} exp(Q K^T) V from two causal runs.

    exp(Q K^T) = [M o exp(Q K^T)] + [M o exp(K Q^T)]^T - diag(exp(q_i . k_i));
    numerator and normalizer are assembled from both triangles and normalized
    once. params_upper defaults to params_lower.
    """
    q = as_matrix(q, "Q")
    k = as_matrix(k, "K")
    v = as_matrix(v, "V")
    if q.shape != k.shape or q.shape[0] != v.shape[0]:
        raise ValueError(
            f"inconsistent shapes Q{q.shape} K{k.shape} V{v.shape}"
        )
    if params_upper is None:
        params_upper = params_lower
    oracle = score_column_oracle(q, k)
    rec = recover(oracle, params_lower)
    basis = rec.exp_basis()
    num = basis.matmat(v)
    den = basis.matvec(np.ones(q.shape[0]))
    up_num, up_den = _upper_parts(q, k, v, params_upper)
    num = num + up_num
    den = den + up_den
    bad = np.nonzero(den <= 0)[0]
    if bad.size:
        raise NormalizationError(
            f"row {bad[0]} has non-positive normalizer {den[bad[0]]:.6g}"
        )
    return num / den[:, None]
