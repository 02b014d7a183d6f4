"""Conv-basis recovery from column queries.

The score matrix H = M o (Q K^T) is never materialized: a ColumnOracle
returns single columns in O(nd). Recovery walks the columns left to right; a
binary search (predicate: l1 distance between the column's leading T-slice
and the accumulated prefix, thresholded at delta - 2*T*epsilon) locates each
window onset, then the basis vector is read off the onset column minus the
running total. Works verbatim for noiseless and epsilon-bounded-noise inputs.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import UnderRankError
from .masks import CausalMask
from .structures import ConvBasis, exp_transform
from .validate import as_index, as_matrix, as_vector


@dataclass(frozen=True)
class RecoveryParams:
    """Recovery hyper-parameters: basis size k, detection window t_window (T),
    separation delta, noise level epsilon, constrained by
    epsilon <= delta / (5 * t_window)."""

    k: int
    t_window: int = 1
    delta: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.t_window < 1:
            raise ValueError(f"t_window must be >= 1, got {self.t_window}")
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.epsilon > self.delta / (5 * self.t_window):
            raise ValueError(
                f"epsilon={self.epsilon} exceeds delta/(5*t_window)="
                f"{self.delta / (5 * self.t_window)}"
            )

    @property
    def threshold(self):
        return self.delta - 2 * self.t_window * self.epsilon


class ColumnOracle:
    """Counts queries to a column function j -> column j of H (length n)."""

    def __init__(self, n, fn):
        self.n = int(n)
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        self._fn = fn
        self.query_count = 0

    def query(self, j):
        j = as_index(j, self.n)
        self.query_count += 1
        col = np.asarray(self._fn(j), dtype=np.float64)
        if col.shape != (self.n,):
            raise ValueError(f"oracle returned shape {col.shape}, expected ({self.n},)")
        return col


def masked_score_column(q, k, mask, j):
    """Column j of W o (Q K^T) in O(nd): mask column times Q (row j of K)."""
    q = as_matrix(q, "Q")
    k = as_matrix(k, "K")
    if q.shape[1] != k.shape[1] or k.shape[0] != mask.n or q.shape[0] != mask.n:
        raise ValueError(
            f"inconsistent shapes Q{q.shape} K{k.shape} mask n={mask.n}"
        )
    j = as_index(j, mask.n)
    return mask.column(j) * (q @ k[j])


def score_column_oracle(q, k, mask=None):
    """ColumnOracle over W o (Q K^T); causal mask by default."""
    q = as_matrix(q, "Q")
    k = as_matrix(k, "K")
    if mask is None:
        mask = CausalMask(q.shape[0])
    return ColumnOracle(mask.n, lambda j: masked_score_column(q, k, mask, j))


def search(oracle, params, v, s, t):
    """Smallest j in [s, t] whose column passes the onset predicate
    alpha(j) = ||col_j[j : j+T] - v||_1 >= delta - 2*T*epsilon, assuming the
    predicate is monotone on [s, t]. Midpoint recursion; ties go left;
    returns s when s >= t (t when the predicate is never true)."""
    if s >= t:
        return s
    j = (s + t) // 2
    col = oracle.query(j)
    alpha = float(np.sum(np.abs(col[j : j + params.t_window] - v)))
    if alpha >= params.threshold:
        return search(oracle, params, v, s, j)
    return search(oracle, params, v, j + 1, t)


@dataclass
class RecoveryResult:
    n: int
    windows: tuple
    basis_raw: list = field(repr=False)
    basis_exp: list = field(repr=False)
    column_queries: int = 0

    def __post_init__(self):
        prev = self.n + 1
        for m in self.windows:
            if not 1 <= m < prev:
                raise ValueError(f"windows must strictly decrease, got {self.windows}")
            prev = m

    @property
    def k(self):
        return len(self.windows)

    def raw_basis(self):
        return ConvBasis(self.n, self.basis_raw, self.windows)

    def exp_basis(self):
        return ConvBasis(self.n, self.basis_exp, self.windows)

    def to_json_dict(self):
        return {
            "n": self.n,
            "windows": list(self.windows),
            "column_queries": self.column_queries,
            "term_l1_norms": [float(np.sum(np.abs(b))) for b in self.basis_raw],
        }


def recover(oracle, params):
    """Recover the k-conv basis of the oracle's matrix.

    Loop i: advance s by one, binary-search the next onset in [s, n-T],
    set m_i = n - s, read column s, extract b_i = col[s:] minus the running
    column total, accumulate. The onset predicate is re-checked on the column
    just read (no extra query); failure means the matrix has fewer than k
    terms and raises UnderRankError. Query budget: k column reads plus at
    most ceil(log2 n) probes per search.
    """
    n = oracle.n
    t_hi = n - params.t_window
    if t_hi < 0:
        raise ValueError(f"t_window={params.t_window} exceeds n={n}")
    v = np.zeros(params.t_window)
    u = np.zeros(n)
    vectors = []
    windows = []
    s = -1
    for i in range(params.k):
        s += 1
        if s > t_hi:
            raise UnderRankError(i, windows)
        s = search(oracle, params, v, s, t_hi)
        col = oracle.query(s)
        alpha = float(np.sum(np.abs(col[s : s + params.t_window] - v)))
        if alpha < params.threshold:
            raise UnderRankError(i, windows)
        m = n - s
        b = np.zeros(n)
        b[:m] = col[s:] - u[:m]
        vectors.append(b)
        windows.append(m)
        v = v + b[: params.t_window]
        u = u + b
    return RecoveryResult(
        n=n,
        windows=tuple(windows),
        basis_raw=vectors,
        basis_exp=exp_transform(vectors, windows),
        column_queries=oracle.query_count,
    )


def recover_qk(q, k, params, mask=None):
    """Recovery straight from Q, K (causal mask by default)."""
    return recover(score_column_oracle(q, k, mask), params)
