"""Deterministic instance generators with known structure.

Every generator here self-certifies: a fixture that claims Toeplitz scores,
separated conv structure, or an exact residual re-checks the claim before
returning, so downstream tests never chase a broken input. All randomness
flows through numpy Generators seeded by the caller.
"""

from dataclasses import dataclass

import numpy as np

from .dense import masked_attention_weights
from .gradient import TrainingInstance
from .masks import CausalMask
from .recovery import RecoveryParams
from .structures import ConvBasis
from .validate import as_matrix, as_square

_CERT_TOL = 1e-12


def random_orthonormal(d, rng):
    """Haar-ish orthonormal d x d via QR with sign-fixed diagonal."""
    q, r = np.linalg.qr(rng.normal(size=(d, d)))
    return q * np.sign(np.diag(r))


def unit_angle_rows(n, d, thetas, amps, basis=None):
    """n unit rows whose Gram depends only on the index difference.

    Row i packs amps[t] * (cos(i * thetas[t]), sin(i * thetas[t])) into
    coordinate pairs; odd d appends one constant coordinate amps[-1]. The
    amplitudes must satisfy sum amps^2 == 1, which makes every row a unit
    vector and the Gram entry (i, j) equal to sum_t amps[t]^2 cos((i-j) *
    thetas[t]) (+ amps[-1]^2 for odd d): a symmetric Toeplitz matrix. An
    orthonormal `basis` rotates the rows without touching the Gram.
    """
    n = int(n)
    d = int(d)
    if n < 1 or d < 1:
        raise ValueError(f"need n, d >= 1, got {n}, {d}")
    pairs = d // 2
    l = (d + 1) // 2
    amps = np.asarray(amps, dtype=np.float64)
    thetas = np.asarray(thetas, dtype=np.float64)
    if amps.shape != (l,):
        raise ValueError(f"need {l} amplitudes for d={d}, got {amps.shape}")
    if thetas.shape != (pairs,):
        raise ValueError(f"need {pairs} angles for d={d}, got {thetas.shape}")
    if abs(float(np.sum(amps**2)) - 1.0) > 1e-10:
        raise ValueError(f"amplitudes must satisfy sum a^2 = 1, got {np.sum(amps**2)}")
    i = np.arange(n)[:, None]
    z = np.zeros((n, d))
    z[:, 0 : 2 * pairs : 2] = amps[:pairs] * np.cos(i * thetas)
    z[:, 1 : 2 * pairs + 1 : 2] = amps[:pairs] * np.sin(i * thetas)
    if d % 2:
        z[:, d - 1] = amps[l - 1]
    if basis is not None:
        basis = as_square(basis, "basis")
        if basis.shape != (d, d):
            raise ValueError(f"basis must be ({d}, {d}), got {basis.shape}")
        if np.max(np.abs(basis.T @ basis - np.eye(d))) > 1e-10:
            raise ValueError("basis must be orthonormal within 1e-10")
        z = z @ basis.T
    return z


def _certify_toeplitz(gram, tol=_CERT_TOL):
    n = gram.shape[0]
    for off in range(-(n - 1), n):
        diag = np.diagonal(gram, offset=off)
        if diag.size > 1 and np.max(np.abs(diag - diag[0])) > tol:
            raise AssertionError(f"Gram not Toeplitz on diagonal {off}")


def toeplitz_qk(n, d, seed=0):
    """Q = K with a Toeplitz Gram; masked scores form a 1-term conv basis."""
    rng = np.random.default_rng(seed)
    pairs = d // 2
    l = (d + 1) // 2
    amps = rng.uniform(0.3, 1.0, l)
    amps /= np.linalg.norm(amps)
    thetas = rng.uniform(0.1, np.pi - 0.1, pairs)
    z = unit_angle_rows(n, d, thetas, amps, basis=random_orthonormal(d, rng))
    _certify_toeplitz(z @ z.T)
    return z, z


def circulant_qk(n, d=2):
    """Q = K whose Gram is the circulant of cos(2 pi (i - j) / n)."""
    if d < 2:
        raise ValueError(f"need d >= 2, got {d}")
    l = (d + 1) // 2
    amps = np.zeros(l)
    amps[0] = 1.0
    thetas = np.zeros(d // 2)
    thetas[0] = 2 * np.pi / n
    z = unit_angle_rows(n, d, thetas, amps)
    gram = z @ z.T
    first = gram[:, 0]
    for j in range(n):
        if np.max(np.abs(gram[:, j] - np.roll(first, j))) > _CERT_TOL:
            raise AssertionError(f"Gram not circulant at column {j}")
    return z, z


def non_degeneracy_margin(vectors, windows, t_window):
    """min over j <= i of || sum_{l=j..i} b_l[:T] ||_1, the separation the
    recovery predicate relies on."""
    k = len(windows)
    t = int(t_window)
    margin = np.inf
    for i in range(k):
        acc = np.zeros(t)
        for j in range(i, -1, -1):
            acc = acc + np.asarray(vectors[j])[:t]
            margin = min(margin, float(np.sum(np.abs(acc))))
    return margin


@dataclass(frozen=True)
class SeparatedInstance:
    """Ground-truth basis plus a factored realization Q K^T of its dense form."""

    basis: ConvBasis
    q: np.ndarray
    k_mat: np.ndarray
    params: RecoveryParams
    noise: np.ndarray


def separated_conv_instance(n, k, t_window, delta, seed, noise_epsilon=0.0, max_tries=100):
    """Random conv basis meeting the separation hypothesis with margin.

    windows[0] = n (full coverage); each vector's first entry exceeds
    delta * 1.01 so every partial-sum l1 norm clears delta by construction;
    the margin is still re-checked. Q holds the dense masked scores (plus
    strictly-upper garbage the mask must kill, plus optional lower-triangular
    noise with max-abs exactly noise_epsilon), K is the identity, so
    recovery sees the intended columns at rank d = n.
    """
    n, k, t = int(n), int(k), int(t_window)
    if not 1 <= k <= n - t + 1:
        raise ValueError(f"need 1 <= k <= n - t_window + 1, got k={k}")
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    rng = np.random.default_rng(seed)
    params = RecoveryParams(k=k, t_window=t, delta=delta, epsilon=noise_epsilon)
    for _ in range(max_tries):
        if k == 1:
            windows = (n,)
        else:
            rest = rng.choice(np.arange(t, n), size=k - 1, replace=False)
            windows = (n, *sorted((int(m) for m in rest), reverse=True))
        vectors = []
        for m in windows:
            b = np.zeros(n)
            b[:m] = rng.normal(0.0, 0.3, m)
            b[0] = delta * 1.01 + abs(rng.normal(0.0, 0.5))
            vectors.append(b)
        if non_degeneracy_margin(vectors, windows, t) >= delta * 1.01:
            break
    else:
        raise RuntimeError(f"no separated instance found in {max_tries} tries")
    basis = ConvBasis(n, vectors, windows)
    noise = np.zeros((n, n))
    if noise_epsilon > 0:
        noise = np.tril(rng.uniform(-1.0, 1.0, (n, n)))
        noise *= noise_epsilon / np.max(np.abs(noise))
    q = basis.to_dense() + noise + np.triu(rng.normal(0.0, 1.0, (n, n)), 1)
    return SeparatedInstance(basis, q, np.eye(n), params, noise)


def stepped_ones_qk(n, windows, seed):
    """Factored realization of sum_i conv(gamma_i * 1, m_i) at rank k.

    Column i of Q is the constant gamma_i; column i of K is the indicator of
    the last m_i rows. The masked scores then equal the target basis exactly,
    with separation delta = min gamma at t_window = 1.
    """
    n = int(n)
    windows = tuple(int(m) for m in windows)
    if windows[0] != n:
        raise ValueError(f"windows[0] must equal n={n} for full coverage")
    rng = np.random.default_rng(seed)
    k = len(windows)
    gammas = rng.uniform(0.5, 1.5, k)
    q = np.tile(gammas, (n, 1))
    k_mat = np.zeros((n, k))
    vectors = []
    for i, m in enumerate(windows):
        k_mat[n - m :, i] = 1.0
        b = np.zeros(n)
        b[:m] = gammas[i]
        vectors.append(b)
    basis = ConvBasis(n, vectors, windows)
    dense = np.tril(q @ k_mat.T)
    if np.max(np.abs(dense - basis.to_dense())) > _CERT_TOL:
        raise AssertionError("stepped fixture does not realize its basis")
    return q, k_mat, basis, float(np.min(gammas))


def stepped_angle_qk(n, windows, seed):
    """Like stepped_ones_qk with cosine-wave basis vectors, at rank 2k.

    Block i of Q holds (cos(t * theta_i), sin(t * theta_i)); the same block
    of K is scaled by the last-m_i-rows indicator. Masked scores equal
    sum_i conv(cos(. * theta_i), m_i); every vector starts at 1, so the
    separation is delta = 1 at t_window = 1.
    """
    n = int(n)
    windows = tuple(int(m) for m in windows)
    if windows[0] != n:
        raise ValueError(f"windows[0] must equal n={n} for full coverage")
    rng = np.random.default_rng(seed)
    k = len(windows)
    thetas = rng.uniform(0.2, np.pi - 0.2, k)
    t = np.arange(n)[:, None]
    q = np.empty((n, 2 * k))
    q[:, 0::2] = np.cos(t * thetas)
    q[:, 1::2] = np.sin(t * thetas)
    k_mat = q.copy()
    vectors = []
    for i, m in enumerate(windows):
        k_mat[: n - m, 2 * i : 2 * i + 2] = 0.0
        b = np.zeros(n)
        b[:m] = np.cos(np.arange(m) * thetas[i])
        vectors.append(b)
    basis = ConvBasis(n, vectors, windows)
    dense = np.tril(q @ k_mat.T)
    if np.max(np.abs(dense - basis.to_dense())) > 1e-10:
        raise AssertionError("stepped angle fixture does not realize its basis")
    return q, k_mat, basis, 1.0


def _well_conditioned(d, rng):
    """Random d x d with singular values in [0.5, 2]."""
    return (
        random_orthonormal(d, rng)
        @ np.diag(rng.uniform(0.5, 2.0, d))
        @ random_orthonormal(d, rng)
    )


def training_instance_fixture(n, k, seed, zero_residual=False, flavor="ones"):
    """TrainingInstance whose masked scores form an exact k-term conv basis.

    A1 = Q X^{-1} makes A1 X A2^T reproduce the stepped fixture's scores for
    any invertible X. Returns (instance, params) with params matching the
    planted structure; zero_residual pins E to the exact prediction so the
    gradient vanishes.
    """
    rng = np.random.default_rng(seed)
    if flavor == "ones":
        windows = _spread_windows(n, k, rng)
        q, k_mat, basis, delta = stepped_ones_qk(n, windows, seed)
    elif flavor == "angles":
        windows = _spread_windows(n, k, rng)
        q, k_mat, basis, delta = stepped_angle_qk(n, windows, seed)
    else:
        raise ValueError(f"unknown flavor {flavor!r}")
    d = q.shape[1]
    x = _well_conditioned(d, rng)
    a1 = q @ np.linalg.inv(x)
    a3 = rng.normal(0.0, 0.5, (n, d))
    y = rng.normal(0.0, 0.5, (d, d))
    e = rng.normal(0.0, 0.5, (n, d))
    inst = TrainingInstance(a1, k_mat, a3, x, y, e)
    if zero_residual:
        f = masked_attention_weights(q, k_mat, CausalMask(n))
        inst = TrainingInstance(a1, k_mat, a3, x, y, f @ (a3 @ y))
    params = RecoveryParams(k=k, t_window=1, delta=0.9 * delta, epsilon=0.0)
    return inst, params


def _spread_windows(n, k, rng):
    """Strictly decreasing windows led by n."""
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if k == 1:
        return (n,)
    rest = rng.choice(np.arange(1, n), size=k - 1, replace=False)
    return (n, *sorted((int(m) for m in rest), reverse=True))


def lowrank_positive_qk(n, d, seed, score_scale=0.8):
    """(Q, K) whose scaled scores Q K^T / d form a rank-1 matrix with max
    absolute value score_scale.

    Hadamard powers of a rank-1 matrix are rank 1, so exp(Q K^T / d) is an
    exponential series of rank-1 terms with factorially shrinking weights:
    its best rank-r approximation reaches small entrywise relative error at
    modest r, which is what the (eps, k)-factor pipeline needs.
    """
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1.0, 1.0, n)
    c = rng.uniform(-1.0, 1.0, n)
    top = float(np.max(np.abs(np.outer(a, c))))
    scale = np.sqrt(score_scale / top)
    q = np.outer(a * scale, np.ones(d))
    k = np.outer(c * scale, np.ones(d))
    return q, k


def psd_weight_factor(wq, wk, tol=1e-10):
    """Factor A with A A^T = Wq Wk^T when the product is symmetric PSD.

    Symmetric eigendecomposition square root; eigenvalues below -tol (scaled)
    reject the input, small negatives are clamped to zero. diag(4, 9) maps to
    diag(2, 3).
    """
    wq = as_matrix(wq, "Wq")
    wk = as_matrix(wk, "Wk")
    if wq.shape != wk.shape:
        raise ValueError(f"Wq and Wk must share shape, got {wq.shape} vs {wk.shape}")
    s = wq @ wk.T
    scale = max(1.0, float(np.max(np.abs(s))))
    if np.max(np.abs(s - s.T)) > tol * scale:
        raise ValueError("Wq Wk^T is not symmetric within tolerance")
    w, vec = np.linalg.eigh(0.5 * (s + s.T))
    if w.min() < -tol * scale:
        raise ValueError(f"Wq Wk^T has negative eigenvalue {w.min():.3e}")
    return vec @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ vec.T
