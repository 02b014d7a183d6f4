"""Structured matrices: triangular convolution, sub-convolution, conv basis,
Toeplitz and circulant, all with FFT matvecs.

conv(a) is the n x n lower-triangular matrix with entry a[i-j] at (i, j) for
i >= j (0-based). conv(a, m) places conv(a[:m]) in the trailing m x m block
and is zero elsewhere. A conv basis is a sum of such terms with strictly
decreasing windows n >= m_1 > m_2 > ... > m_k >= 1.
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from .dense import MAX_SCORE
from .errors import ScoreOverflowError
from .fourier import next_pow2
from .validate import as_square, as_vector

DECOMPOSE_TOL = 1e-12


def conv_matvec(a, x):
    """conv(a) x in O(n log n): pad to the next power of two >= 2n, multiply
    spectra pointwise, inverse-transform, keep the first n (real) outputs."""
    a = as_vector(a, "a")
    x = as_vector(x, "x")
    n = a.size
    if x.size != n:
        raise ValueError(f"length mismatch: a has {n}, x has {x.size}")
    size = next_pow2(2 * n)
    fa = np.fft.rfft(a, size)
    fx = np.fft.rfft(x, size)
    return np.fft.irfft(fa * fx, size)[:n]


def conv_matvec_naive(a, x):
    """conv(a) x by direct O(n^2) summation (backend kernel; oracle path)."""
    a = as_vector(a, "a")
    x = as_vector(x, "x")
    if x.size != a.size:
        raise ValueError(f"length mismatch: a has {a.size}, x has {x.size}")
    return backend.kernels.conv_matvec_naive(a, x)


def subconv_matvec(b, m, x):
    """conv(b, m) x: zeros on the first n-m outputs, conv(b[:m]) on the tail.

    Computed on the trailing m-slice directly (length-m FFT), not by padding
    a full-length vector.
    """
    x = as_vector(x, "x")
    b = as_vector(b, "b")
    n = x.size
    m = int(m)
    if not 1 <= m <= n:
        raise ValueError(f"window m={m} out of [1, {n}]")
    if b.size < m:
        raise ValueError(f"b has {b.size} entries, window needs {m}")
    out = np.zeros(n)
    out[n - m :] = conv_matvec(b[:m], x[n - m :])
    return out


def conv_transpose_matvec(a, x):
    """conv(a)^T x via the flip identity: reverse(conv(a) reverse(x))."""
    return conv_matvec(a, x[::-1])[::-1]


def subconv_transpose_matvec(b, m, x):
    """conv(b, m)^T x: transposed block on the trailing m coordinates."""
    x = as_vector(x, "x")
    b = as_vector(b, "b")
    n = x.size
    m = int(m)
    if not 1 <= m <= n:
        raise ValueError(f"window m={m} out of [1, {n}]")
    if b.size < m:
        raise ValueError(f"b has {b.size} entries, window needs {m}")
    out = np.zeros(n)
    out[n - m :] = conv_transpose_matvec(b[:m], x[n - m :])
    return out


def toeplitz_matvec(diags, x):
    """Toep(a) x where diags has length 2n-1 and entry (i, j) is
    diags[n-1+i-j] (diags[n-1] is the main diagonal).

    Uses the circulant embedding [a_0..a_{n-1}, 0.., a_{-(n-1)}..a_{-1}]
    padded to a power of two.
    """
    diags = as_vector(diags, "diags")
    x = as_vector(x, "x")
    n = x.size
    if diags.size != 2 * n - 1:
        raise ValueError(f"diags must have length {2 * n - 1}, got {diags.size}")
    size = next_pow2(2 * n)
    c = np.zeros(size)
    c[:n] = diags[n - 1 :]
    if n > 1:
        c[size - (n - 1) :] = diags[: n - 1]
    return np.fft.irfft(np.fft.rfft(c) * np.fft.rfft(x, size), size)[:n]


def circulant_matvec(c, x):
    """Circ(c) x, entry (i, j) = c[(i-j) mod n]; exact circular convolution."""
    c = as_vector(c, "c")
    x = as_vector(x, "x")
    if c.size != x.size:
        raise ValueError(f"length mismatch: c has {c.size}, x has {x.size}")
    return np.real(np.fft.ifft(np.fft.fft(c) * np.fft.fft(x)))


@dataclass(frozen=True)
class SubConvTerm:
    """One conv(b, m) term; entries of b at or beyond position m are ignored."""

    b: np.ndarray
    m: int

    def __post_init__(self):
        object.__setattr__(self, "b", as_vector(self.b, "b"))
        object.__setattr__(self, "m", int(self.m))


class ConvBasis:
    """H = sum_i conv(b_i, m_i) with strictly decreasing windows."""

    def __init__(self, n, vectors, windows):
        n = int(n)
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        vectors = [as_vector(b, f"b[{i}]") for i, b in enumerate(vectors)]
        windows = tuple(int(m) for m in windows)
        if len(vectors) != len(windows):
            raise ValueError(
                f"{len(vectors)} vectors but {len(windows)} windows"
            )
        if not vectors:
            raise ValueError("basis needs at least one term")
        if len(vectors) > n:
            raise ValueError(f"k={len(vectors)} exceeds n={n}")
        for b in vectors:
            if b.size != n:
                raise ValueError(f"basis vectors must have length {n}, got {b.size}")
        prev = n + 1
        for m in windows:
            if not 1 <= m <= n:
                raise ValueError(f"window {m} out of [1, {n}]")
            if m >= prev:
                raise ValueError(f"windows must strictly decrease, got {windows}")
            prev = m
        self.n = n
        self.vectors = vectors
        self.windows = windows

    @property
    def k(self):
        return len(self.windows)

    @property
    def terms(self):
        return [SubConvTerm(b, m) for b, m in zip(self.vectors, self.windows)]

    def matvec(self, x):
        """H x as k sub-convolution FFT matvecs."""
        x = as_vector(x, "x")
        if x.size != self.n:
            raise ValueError(f"x must have length {self.n}, got {x.size}")
        out = np.zeros(self.n)
        for b, m in zip(self.vectors, self.windows):
            out += subconv_matvec(b, m, x)
        return out

    def matmat(self, v):
        """H V column by column."""
        v = np.ascontiguousarray(v, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != self.n:
            raise ValueError(f"V must be ({self.n}, d), got {v.shape}")
        out = np.empty_like(v)
        for c in range(v.shape[1]):
            out[:, c] = self.matvec(v[:, c])
        return out

    def rmatvec(self, x):
        """H^T x as k transposed sub-convolution matvecs."""
        x = as_vector(x, "x")
        if x.size != self.n:
            raise ValueError(f"x must have length {self.n}, got {x.size}")
        out = np.zeros(self.n)
        for b, m in zip(self.vectors, self.windows):
            out += subconv_transpose_matvec(b, m, x)
        return out

    def rmatmat(self, v):
        """H^T V column by column."""
        v = np.ascontiguousarray(v, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != self.n:
            raise ValueError(f"V must be ({self.n}, d), got {v.shape}")
        out = np.empty_like(v)
        for c in range(v.shape[1]):
            out[:, c] = self.rmatvec(v[:, c])
        return out

    def entry(self, i, j):
        """H[i, j] in O(k): sum of b_l[i-j] over windows with m_l >= n-j."""
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise IndexError(f"({i}, {j}) out of range for n={self.n}")
        if i < j:
            return 0.0
        val = 0.0
        for b, m in zip(self.vectors, self.windows):
            if m >= self.n - j:
                val += b[i - j]
        return float(val)

    def to_dense(self):
        n = self.n
        idx = np.arange(n)
        diff = idx[:, None] - idx[None, :]
        lower = diff >= 0
        clipped = np.where(lower, diff, 0)
        dense = np.zeros((n, n))
        for b, m in zip(self.vectors, self.windows):
            pat = np.where(lower, b[clipped], 0.0)
            pat[:, : n - m] = 0.0
            dense += pat
        return dense

    def exp(self):
        """Basis of M o exp(to_dense()) — valid when windows[0] == n."""
        return ConvBasis(self.n, exp_transform(self.vectors, self.windows), self.windows)


def basis_matvec(basis, x):
    return basis.matvec(x)


def basis_to_dense(basis):
    return basis.to_dense()


def exp_transform(vectors, windows):
    """Transform raw basis vectors so the masked entrywise exponential of the
    basis sum is again a conv basis with the same windows.

    out[0] = exp(b_0); out[r] = exp(S_r) - exp(S_{r-1}) with S_r the prefix
    sums, so every prefix telescopes: sum_{r<=i} out[r] = exp(S_i). The masked
    identity M o exp(dense) == dense-of-transformed needs windows[0] == n
    (every column covered); otherwise uncovered columns hold exp(0) = 1 on the
    causal support, which no conv term represents.
    """
    windows = [int(m) for m in windows]
    prev = None
    for m in windows:
        if prev is not None and m >= prev:
            raise ValueError(f"windows must strictly decrease, got {windows}")
        prev = m
    stacked = np.asarray([as_vector(b, "b") for b in vectors])
    if stacked.shape[0] != len(windows):
        raise ValueError(f"{stacked.shape[0]} vectors but {len(windows)} windows")
    for r, m in enumerate(windows):
        stacked[r, m:] = 0.0  # entries past the window carry no meaning
    prefix = np.cumsum(stacked, axis=0)
    top = float(np.max(prefix)) if prefix.size else 0.0
    if top > MAX_SCORE:
        raise ScoreOverflowError(
            f"max score {top:.6g} exceeds {MAX_SCORE}; exp would overflow"
        )
    out = [np.exp(stacked[0])]
    for r in range(1, stacked.shape[0]):
        out.append(np.exp(prefix[r]) - np.exp(prefix[r - 1]))
    return out


def decompose_lower_triangular(h, tol=DECOMPOSE_TOL):
    """Peel a lower-triangular matrix into a conv basis, left to right.

    Scanning columns, whenever the residual column (diagonal and below)
    differs from the running pattern by more than tol, emit a term from the
    difference. Reconstructs h exactly on emitted columns; k <= n. The peeled
    k is not certified minimal.
    """
    h = as_square(h, "H")
    n = h.shape[0]
    if np.any(np.triu(h, 1) != 0.0):
        raise ValueError("matrix has nonzero entries above the diagonal")
    if not np.any(h):
        raise ValueError("zero matrix has no conv basis")
    vectors, windows = [], []
    cum = np.zeros(n)
    for j in range(n):
        diff = h[j:, j] - cum[: n - j]
        if np.max(np.abs(diff)) > tol:
            b = np.zeros(n)
            b[: n - j] = diff
            vectors.append(b)
            windows.append(n - j)
            cum += b
    return ConvBasis(n, vectors, windows)
