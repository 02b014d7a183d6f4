"""Gradient of the causal-attention regression loss, dense and fast routes.

The model is f = diag(u 1)^{-1} u with u = M o exp(A1 X A2^T), prediction
f (A3 Y), loss L = 0.5 ||f (A3 Y) - E||_F^2. dL/dX = A1^T p A2 where
p = f o (q - r 1^T), q = c h^T, r_j = <f_j, q_j>, c the residual, h = A3 Y.

The fast route never forms q (n x n): column actions p w decompose as
p1 w = sum_t c[:, t] o f(h[:, t] o w) minus p2 w = r o f(w), and every f
matvec runs through the exponentiated conv basis recovered from column
queries. The dense route materializes everything and is the oracle.
"""

from dataclasses import dataclass

import numpy as np

from .dense import masked_attention_weights
from .errors import NormalizationError
from .masks import CausalMask
from .recovery import ColumnOracle, recover, score_column_oracle
from .validate import as_matrix, as_square


@dataclass(frozen=True)
class TrainingInstance:
    """Fixed matrices of one regression instance: A1, A2, A3 (n x d),
    weights X, Y (d x d), targets E (n x d)."""

    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    x: np.ndarray
    y: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a1", as_matrix(self.a1, "A1"))
        object.__setattr__(self, "a2", as_matrix(self.a2, "A2"))
        object.__setattr__(self, "a3", as_matrix(self.a3, "A3"))
        object.__setattr__(self, "x", as_square(self.x, "X"))
        object.__setattr__(self, "y", as_square(self.y, "Y"))
        object.__setattr__(self, "e", as_matrix(self.e, "E"))
        n, d = self.a1.shape
        for name, mat, shape in (
            ("A2", self.a2, (n, d)),
            ("A3", self.a3, (n, d)),
            ("X", self.x, (d, d)),
            ("Y", self.y, (d, d)),
            ("E", self.e, (n, d)),
        ):
            if mat.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {mat.shape}")

    @property
    def n(self):
        return self.a1.shape[0]

    @property
    def d(self):
        return self.a1.shape[1]

    def mask(self):
        return CausalMask(self.n)

    def with_x(self, x):
        return TrainingInstance(self.a1, self.a2, self.a3, x, self.y, self.e)


def exp_score_oracle(inst):
    """ColumnOracle over u = M o exp(A1 X A2^T); each query is O(nd)."""
    q = inst.a1 @ inst.x
    mask = inst.mask()

    def column(j):
        col = mask.column(j)
        scores = q @ inst.a2[j]
        return col * np.exp(np.where(col > 0, scores, 0.0))

    return ColumnOracle(inst.n, column)


def raw_score_oracle(inst):
    """ColumnOracle over M o (A1 X A2^T), the recovery input."""
    return score_column_oracle(inst.a1 @ inst.x, inst.a2)


def dense_softmax(inst):
    """Row-normalized u, materialized (oracle path)."""
    return masked_attention_weights(inst.a1 @ inst.x, inst.a2, inst.mask())


def loss(inst):
    """0.5 ||f (A3 Y) - E||_F^2 through the dense forward."""
    f = dense_softmax(inst)
    c = f @ (inst.a3 @ inst.y) - inst.e
    return 0.5 * float(np.sum(c * c))


def naive_gradient(inst):
    """dL/dX by materializing f, q = c h^T and p; O(n^2 d) memory and work."""
    f = dense_softmax(inst)
    h = inst.a3 @ inst.y
    c = f @ h - inst.e
    q = c @ h.T
    r = np.einsum("ij,ij->i", f, q)
    p = f * (q - r[:, None])
    return inst.a1.T @ p @ inst.a2


def finite_difference_gradient(inst, step_scale=1e-5):
    """Central-difference dL/dX, step 1e-5 * max(1, |x_ij|) per coordinate."""
    d = inst.d
    grad = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            h = step_scale * max(1.0, abs(inst.x[i, j]))
            xp = inst.x.copy()
            xp[i, j] += h
            xm = inst.x.copy()
            xm[i, j] -= h
            grad[i, j] = (loss(inst.with_x(xp)) - loss(inst.with_x(xm))) / (2 * h)
    return grad


def _p2_matvec(r, fw):
    """Rank-correction column action r o f(w); kept separate so the two terms
    of p stay independently testable."""
    return r * fw


def fast_gradient(inst, params):
    """dL/dX without materializing any n x n matrix.

    Recovers the conv basis of the masked scores, exponentiates, and applies
    p column by column against A2: p1 w needs d basis matvecs, p2 w one.
    Returns (gradient, recovery_result).
    """
    oracle = raw_score_oracle(inst)
    rec = recover(oracle, params)
    basis = rec.exp_basis()
    n, d = inst.n, inst.d
    alpha = basis.matvec(np.ones(n))
    bad = np.nonzero(alpha <= 0)[0]
    if bad.size:
        raise NormalizationError(
            f"row {bad[0]} has non-positive normalizer {alpha[bad[0]]:.6g}"
        )
    h = inst.a3 @ inst.y
    fh = basis.matmat(h) / alpha[:, None]
    c = fh - inst.e
    r = np.einsum("ij,ij->i", fh, c)
    pa2 = np.empty((n, d))
    for col in range(d):
        w = inst.a2[:, col]
        p1 = np.zeros(n)
        for t in range(d):
            p1 += c[:, t] * (basis.matvec(h[:, t] * w) / alpha)
        p2 = _p2_matvec(r, basis.matvec(w) / alpha)
        pa2[:, col] = p1 - p2
    return inst.a1.T @ pa2, rec


def training_forward(inst, params):
    """Fast forward pass: residual c = f (A3 Y) - E and its half squared
    Frobenius norm, with f applied through the recovered basis."""
    oracle = raw_score_oracle(inst)
    rec = recover(oracle, params)
    basis = rec.exp_basis()
    alpha = basis.matvec(np.ones(inst.n))
    bad = np.nonzero(alpha <= 0)[0]
    if bad.size:
        raise NormalizationError(
            f"row {bad[0]} has non-positive normalizer {alpha[bad[0]]:.6g}"
        )
    c = basis.matmat(inst.a3 @ inst.y) / alpha[:, None] - inst.e
    return c, 0.5 * float(np.sum(c * c))


@dataclass(frozen=True)
class KronReport:
    """Max absolute errors of the two vectorization identities."""

    max_err_product: float
    max_err_outer: float


def kron_vect_check(a1, x, a2, tol=1e-12):
    """Assert vect(A1 X A2^T) == (A1 kron A2) vect(X) with row-major vect,
    and vect(a b^T) == a kron b on the leading columns.

    Guarded to n^2 d^2 <= 1e6 entries; raises ValueError past the guard and
    AssertionError when either identity misses tol (scaled by max(1, |lhs|)).
    """
    a1 = as_matrix(a1, "A1")
    a2 = as_matrix(a2, "A2")
    x = as_square(x, "X")
    n, d = a1.shape
    if a2.shape != (n, d) or x.shape != (d, d):
        raise ValueError(
            f"shape mismatch: A1{a1.shape} A2{a2.shape} X{x.shape}"
        )
    if (n * d) ** 2 > 1e6:
        raise ValueError(f"kron check limited to n^2 d^2 <= 1e6, got {(n * d) ** 2}")
    lhs = (a1 @ x @ a2.T).reshape(-1)
    rhs = np.kron(a1, a2) @ x.reshape(-1)
    err_product = float(np.max(np.abs(lhs - rhs)))
    a = a1[:, 0]
    b = a2[:, 0]
    err_outer = float(np.max(np.abs(np.outer(a, b).reshape(-1) - np.kron(a, b))))
    scale = max(1.0, float(np.max(np.abs(lhs))))
    if err_product > tol * scale or err_outer > tol * scale:
        raise AssertionError(
            f"vectorization identity off: product {err_product:.3e}, "
            f"outer {err_outer:.3e}, tol {tol * scale:.3e}"
        )
    return KronReport(err_product, err_outer)
