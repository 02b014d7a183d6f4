"""Self-verification suite: every fast path against its dense oracle.

Each check runs at desk scale with fixed seeds, returns the measured
quantity next to the bound it must respect, and never mutates global state
(the gradient mutation smoke check patches a seam and restores it). The
error-lemma samplers take a sample count so callers can rerun them at higher
volume than the default suite.
"""

import traceback
from dataclasses import asdict, dataclass

import numpy as np

from . import backend, gradient
from .attention import (
    conv_error_bound,
    conv_forward,
    exact_forward_via_conv,
    full_self_attention_forward,
    forward_from_basis,
)
from .dense import linf_norm, naive_masked_attention, norm_product_bound
from .fixtures import (
    lowrank_positive_qk,
    separated_conv_instance,
    training_instance_fixture,
)
from .fourier import fft, ifft
from .gradient import (
    fast_gradient,
    finite_difference_gradient,
    kron_vect_check,
    naive_gradient,
    training_forward,
)
from .io_formats import (
    load_basis_cbb,
    load_matrix_cbm,
    load_matrix_csv,
    save_basis_cbb,
    save_matrix_cbm,
    save_matrix_csv,
)
from .lowrank import (
    LowRankFactors,
    best_rank_factors,
    dense_masked_product,
    entrywise_relative_error,
    lowrank_error_bound,
    masked_lowrank_attention,
    masked_matvec,
    scaled_exp_scores,
)
from .masks import (
    CausalMask,
    ContinuousRowMask,
    DistinctColumnsMask,
    DistinctRowsMask,
    RowChangeMask,
)
from .recovery import RecoveryParams, recover, score_column_oracle
from .segtree import SegmentTree
from .structures import (
    ConvBasis,
    circulant_matvec,
    conv_matvec,
    conv_matvec_naive,
    decompose_lower_triangular,
    subconv_matvec,
    toeplitz_matvec,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    bound: float
    note: str = ""


def _pass(name, measured, bound, note=""):
    return CheckResult(name, bool(measured <= bound), float(measured), float(bound), note)


def _pass_min(name, margin, slack, note=""):
    """For inequality margins that must stay above -slack."""
    return CheckResult(name, bool(margin >= -slack), float(margin), float(-slack), note)


# ---------------------------------------------------------------- structures


def check_fourier_roundtrip(seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in (1, 2, 8, 64, 256):
        x = rng.normal(size=n) + 1j * rng.normal(size=n)
        worst = max(worst, float(np.max(np.abs(ifft(fft(x)) - x))))
        worst = max(worst, float(np.max(np.abs(fft(x) - np.fft.fft(x)))))
    return _pass("fourier_roundtrip", worst, 1e-9, "fft/ifft vs numpy, pow2 sizes")


def check_conv_matvec(seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in (1, 2, 3, 17, 64, 129):
        a = rng.normal(size=n)
        x = rng.normal(size=n)
        dense = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1):
                dense[i, j] = a[i - j]
        ref = dense @ x
        scale = max(1.0, float(np.max(np.abs(ref))))
        worst = max(worst, float(np.max(np.abs(conv_matvec(a, x) - ref))) / scale)
        worst = max(worst, float(np.max(np.abs(conv_matvec_naive(a, x) - ref))) / scale)
        m = max(1, n // 2)
        sub = np.zeros((n, n))
        sub[n - m :, n - m :] = dense[: m, : m]
        refsub = sub @ x
        worst = max(
            worst,
            float(np.max(np.abs(subconv_matvec(a, m, x) - refsub)))
            / max(1.0, float(np.max(np.abs(refsub)))),
        )
    return _pass("conv_matvec_vs_dense", worst, 1e-9, "FFT and naive vs dense loops")


def check_toeplitz_circulant(seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in (1, 2, 5, 32, 100):
        diags = rng.normal(size=2 * n - 1)
        x = rng.normal(size=n)
        dense = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                dense[i, j] = diags[n - 1 + i - j]
        ref = dense @ x
        scale = max(1.0, float(np.max(np.abs(ref))))
        worst = max(worst, float(np.max(np.abs(toeplitz_matvec(diags, x) - ref))) / scale)
        c = rng.normal(size=n)
        circ = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                circ[i, j] = c[(i - j) % n]
        refc = circ @ x
        scale = max(1.0, float(np.max(np.abs(refc))))
        worst = max(worst, float(np.max(np.abs(circulant_matvec(c, x) - refc))) / scale)
    return _pass("toeplitz_circulant_vs_dense", worst, 1e-9)


def check_conv_additivity(seed=0):
    rng = np.random.default_rng(seed)
    n = 64
    a, b, x = rng.normal(size=(3, n))
    lhs = conv_matvec(a, x) + conv_matvec(b, x)
    rhs = conv_matvec(a + b, x)
    err = float(np.max(np.abs(lhs - rhs))) / max(1.0, float(np.max(np.abs(rhs))))
    return _pass("conv_additivity", err, 1e-9, "conv(a)x + conv(b)x = conv(a+b)x")


def check_basis_consistency(seed=0):
    rng = np.random.default_rng(seed)
    n = 48
    windows = (48, 30, 11, 3)
    vectors = [np.r_[rng.normal(size=m), np.zeros(n - m)] for m in windows]
    basis = ConvBasis(n, vectors, windows)
    dense = basis.to_dense()
    worst = 0.0
    for i, j in ((0, 0), (5, 2), (47, 0), (47, 47), (20, 19), (3, 10)):
        worst = max(worst, abs(basis.entry(i, j) - dense[i, j]))
    x = rng.normal(size=n)
    worst = max(worst, float(np.max(np.abs(basis.matvec(x) - dense @ x))))
    worst = max(worst, float(np.max(np.abs(basis.rmatvec(x) - dense.T @ x))))
    return _pass("basis_entry_matvec_dense", worst, 1e-9)


def check_exp_transform(seed=0):
    rng = np.random.default_rng(seed)
    n = 40
    windows = (40, 22, 7)
    vectors = [np.r_[rng.normal(0, 0.4, m), np.zeros(n - m)] for m in windows]
    basis = ConvBasis(n, vectors, windows)
    mask = np.tril(np.ones((n, n)))
    target = mask * np.exp(basis.to_dense() * mask)
    err = float(np.max(np.abs(basis.exp().to_dense() - target)))
    return _pass("exp_transform_masked_identity", err, 1e-10,
                 "M o exp(dense) equals dense of transformed basis (full coverage)")


def check_decompose_roundtrip(seed=0):
    rng = np.random.default_rng(seed)
    n = 32
    windows = (32, 17, 4)
    vectors = [np.r_[rng.normal(size=m), np.zeros(n - m)] for m in windows]
    dense = ConvBasis(n, vectors, windows).to_dense()
    rebuilt = decompose_lower_triangular(dense)
    err = float(np.max(np.abs(rebuilt.to_dense() - dense)))
    err_k = abs(rebuilt.k - 3)
    return _pass("decompose_roundtrip", err + err_k, 1e-10)


def check_segment_tree(seed=0):
    rng = np.random.default_rng(seed)
    n, k = 37, 3
    rows = rng.normal(size=(n, k))
    tree = SegmentTree(rows)
    worst = 0.0
    for lo, hi in ((0, 0), (0, n - 1), (5, 20), (36, 36), (17, 18)):
        worst = max(worst, float(np.max(np.abs(tree.range_sum(lo, hi) - rows[lo : hi + 1].sum(axis=0)))))
    return _pass("segment_tree_range_sum", worst, 1e-10)


def check_mask_columns(seed=0):
    rng = np.random.default_rng(seed)
    n = 24
    a, b = rng.integers(0, n, (2, n))
    masks = [
        CausalMask(n),
        RowChangeMask.causal(n),
        ContinuousRowMask(np.minimum(a, b), np.maximum(a, b)),
        DistinctColumnsMask(_group_ids(n, 3, rng), (rng.random((n, 3)) < 0.5).astype(float)),
        DistinctRowsMask(_group_ids(n, 3, rng), (rng.random((3, n)) < 0.5).astype(float)),
    ]
    worst = 0.0
    for mask in masks:
        w = mask.materialize()
        for j in range(n):
            worst = max(worst, float(np.max(np.abs(mask.column(j) - w[:, j]))))
    return _pass("mask_column_vs_materialize", worst, 0.0)


# ------------------------------------------------------------------ recovery


def check_recovery_exact(seed=0):
    inst = separated_conv_instance(64, 4, 2, 0.5, seed)
    oracle = score_column_oracle(inst.q, inst.k_mat)
    rec = recover(oracle, inst.params)
    if rec.windows != inst.basis.windows:
        return CheckResult("recovery_exact_windows", False, float("inf"), 1e-10,
                           f"windows {rec.windows} != truth {inst.basis.windows}")
    err = float(np.max(np.abs(rec.raw_basis().to_dense() - inst.basis.to_dense())))
    budget = inst.params.k * (int(np.ceil(np.log2(64))) + 2)
    note = f"queries {rec.column_queries} <= {budget}"
    if rec.column_queries > budget:
        return CheckResult("recovery_exact_windows", False, float(rec.column_queries),
                           float(budget), note)
    return _pass("recovery_exact_windows", err, 1e-10, note)


def check_recovery_noise(seed=0):
    delta, t = 0.8, 2
    eps = delta / (5 * t)
    inst = separated_conv_instance(64, 3, t, delta, seed, noise_epsilon=eps)
    rng = np.random.default_rng([seed, 7])
    v = rng.normal(size=(64, 3))
    out, rec = conv_forward(inst.q, inst.k_mat, v, inst.params)
    if rec.windows != inst.basis.windows:
        return CheckResult("recovery_noise_bound", False, float("inf"), 0.0,
                           f"windows {rec.windows} != truth {inst.basis.windows}")
    clean = forward_from_basis(inst.basis.exp(), v)
    err = linf_norm(out - clean)
    bound = conv_error_bound(eps, v)
    return _pass("recovery_noise_bound", err, bound,
                 f"eps={eps:.3g}, linf error vs 2(exp(2eps)-1)max|V|")


def check_exact_corollary(seed=0):
    rng = np.random.default_rng(seed)
    n, d = 32, 4
    q, k, v = rng.normal(0, 0.5, (3, n, d))
    fast = exact_forward_via_conv(q, k, v)
    ref = naive_masked_attention(q, k, v, CausalMask(n))
    return _pass("exact_forward_corollary", linf_norm(fast - ref), 1e-8)


def check_full_attention(seed=0):
    rng = np.random.default_rng(seed)
    n, d = 32, 3
    q, k = rng.normal(0, 0.4, (2, n, d))
    v = rng.normal(size=(n, d))
    params = RecoveryParams(k=n, t_window=1, delta=0.0, epsilon=0.0)
    fast = full_self_attention_forward(q, k, v, params)
    scores = np.exp(q @ k.T)
    ref = scores / scores.sum(axis=1, keepdims=True) @ v
    return _pass("full_self_attention_vs_dense", linf_norm(fast - ref), 1e-8,
                 "unmasked softmax from two causal triangles")


# ------------------------------------------------------------------ gradient


def check_gradient_fd(seed=0):
    inst, _ = training_instance_fixture(16, 2, seed)
    ref = finite_difference_gradient(inst)
    got = naive_gradient(inst)
    rel = linf_norm(got - ref) / max(1e-30, linf_norm(ref))
    return _pass("gradient_naive_vs_fd", rel, 1e-4)


def check_gradient_fast(seed=0):
    inst, params = training_instance_fixture(24, 3, seed)
    ref = naive_gradient(inst)
    got, _ = fast_gradient(inst, params)
    rel = linf_norm(got - ref) / max(1e-30, linf_norm(ref))
    return _pass("gradient_fast_vs_naive", rel, 1e-6)


def check_gradient_zero_residual(seed=0):
    inst, params = training_instance_fixture(16, 2, seed, zero_residual=True)
    got, _ = fast_gradient(inst, params)
    c, val = training_forward(inst, params)
    return _pass("gradient_zero_residual", max(linf_norm(got), abs(val)), 1e-10,
                 "exact-fit instance: loss and gradient vanish")


def check_gradient_mutation(seed=0):
    """A sign flip planted in the p2 term must be caught by the comparison;
    guards the gradient checks against vacuous passes."""
    inst, params = training_instance_fixture(16, 2, seed)
    ref = naive_gradient(inst)
    orig = gradient._p2_matvec
    gradient._p2_matvec = lambda r, fw: -orig(r, fw)
    try:
        mutated, _ = fast_gradient(inst, params)
    finally:
        gradient._p2_matvec = orig
    rel = linf_norm(mutated - ref) / max(1e-30, linf_norm(ref))
    return CheckResult("gradient_mutation_smoke", bool(rel > 1e-3), float(rel), 1e-3,
                       "flipped p2 sign must push fast:naive error above bound")


def check_kron_identity(seed=0):
    rng = np.random.default_rng(seed)
    report = kron_vect_check(rng.normal(size=(7, 4)), rng.normal(size=(4, 4)),
                             rng.normal(size=(7, 4)))
    return _pass("kron_vectorization_identity",
                 max(report.max_err_product, report.max_err_outer), 1e-12)


# ------------------------------------------------------------------- lowrank


def _group_ids(n, groups, rng):
    ids = rng.integers(0, groups, n)
    ids[:groups] = np.arange(groups)  # no group may come out empty
    return ids


def _random_masks(n, rng):
    a, b = rng.integers(0, n, (2, n))
    starts, ends = np.minimum(a, b), np.maximum(a, b)
    supports = [rng.choice(n, size=rng.integers(1, n), replace=False) for _ in range(n)]
    return [
        CausalMask(n),
        RowChangeMask.from_row_supports(supports),
        ContinuousRowMask(starts, ends),
        DistinctColumnsMask(_group_ids(n, 4, rng), (rng.random((n, 4)) < 0.6).astype(float)),
        DistinctRowsMask(_group_ids(n, 4, rng), (rng.random((4, n)) < 0.6).astype(float)),
    ]


def check_lowrank_matvecs(seed=0):
    rng = np.random.default_rng(seed)
    n, r = 40, 3
    factors = LowRankFactors(rng.normal(size=(n, r)), rng.normal(size=(n, r)))
    v = rng.normal(size=n)
    worst = 0.0
    for mask in _random_masks(n, rng):
        ref = dense_masked_product(factors, mask) @ v
        got = masked_matvec(factors, mask, v)
        worst = max(worst, float(np.max(np.abs(got - ref))))
    return _pass("lowrank_masked_matvecs", worst, 1e-10, "five mask families vs dense")


def check_lowrank_attention_bound(seed=0):
    rng = np.random.default_rng(seed)
    n, d = 32, 4
    q, k = lowrank_positive_qk(n, d, seed)
    h = scaled_exp_scores(q, k)
    factors = best_rank_factors(h, 4)
    eps = entrywise_relative_error(h, factors)
    if eps > 0.1:
        return CheckResult("lowrank_attention_bound", False, eps, 0.1,
                           "fixture factors missed the eps <= 0.1 regime")
    mask = CausalMask(n)
    v = rng.normal(size=(n, d))
    approx = masked_lowrank_attention(factors, mask, v)
    a = np.tril(h)
    ref = a / a.sum(axis=1, keepdims=True) @ v
    return _pass("lowrank_attention_bound", linf_norm(approx - ref),
                 lowrank_error_bound(eps, v), f"achieved eps={eps:.3g}")


def check_backend_parity(seed=0):
    rng = np.random.default_rng(seed)
    n, r = 33, 3
    factors = LowRankFactors(rng.normal(size=(n, r)), rng.normal(size=(n, r)))
    v = rng.normal(size=n)
    a = rng.normal(size=n)
    names = sorted(backend.available_backends())
    from .lowrank import causal_matvec, continuous_matvec, rowchange_matvec
    from .masks import ContinuousRowMask, RowChangeMask

    rc = RowChangeMask.causal(n)
    cont = ContinuousRowMask.causal(n)
    outs = {}
    for name in names:
        with backend.use_kernels(name):
            outs[name] = (
                causal_matvec(factors, v),
                rowchange_matvec(factors, rc, v),
                continuous_matvec(factors, cont, v),
                conv_matvec_naive(a, v),
            )
    worst = 0.0
    base = outs[names[0]]
    for name in names[1:]:
        for got, ref in zip(outs[name], base):
            worst = max(worst, float(np.max(np.abs(got - ref))) / max(1.0, float(np.max(np.abs(ref)))))
    return _pass("backend_parity", worst, 1e-9,
                 f"backends: {', '.join(names)}")


# --------------------------------------------------------------- error lemmas


def lemma_exp_perturb(samples, seed=0):
    """|e^x1 - e^x2| <= e^{min} (e^{|x1-x2|} - 1); returns worst margin."""
    rng = np.random.default_rng(seed)
    margin = np.inf
    for _ in range(samples):
        x1, x2 = rng.uniform(-5, 5, 2)
        lhs = abs(np.exp(x1) - np.exp(x2))
        rhs = np.exp(min(x1, x2)) * (np.exp(abs(x1 - x2)) - 1.0)
        margin = min(margin, (rhs - lhs) / max(1.0, rhs))
    return margin


def lemma_softmax_lip(samples, seed=0):
    """Attention outputs of eps-close score matrices stay within
    2 (exp(eps) - 1) max|V| in linf; scores compared on the causal support."""
    rng = np.random.default_rng(seed)
    margin = np.inf
    for _ in range(samples):
        n, d = int(rng.integers(2, 10)), int(rng.integers(1, 4))
        eps = float(rng.uniform(0.001, 0.3))
        mask = CausalMask(n)
        w = mask.materialize()
        s1 = rng.normal(0, 1.5, (n, n))
        s2 = s1 + rng.uniform(-eps, eps, (n, n))
        v = rng.normal(size=(n, d))
        a1 = w * np.exp(s1)
        a2 = w * np.exp(s2)
        y1 = a1 / a1.sum(axis=1, keepdims=True) @ v
        y2 = a2 / a2.sum(axis=1, keepdims=True) @ v
        rhs = 2.0 * (np.exp(eps) - 1.0) * linf_norm(v)
        margin = min(margin, (rhs - linf_norm(y1 - y2)) / max(1.0, rhs))
    return margin


def lemma_softmax_lip_v2(samples, seed=0):
    """Entrywise (1 +- eps)-relative perturbation of the positive attention
    matrix moves outputs by at most 4 eps max|V|, eps <= 0.1."""
    rng = np.random.default_rng(seed)
    margin = np.inf
    for _ in range(samples):
        n, d = int(rng.integers(2, 10)), int(rng.integers(1, 4))
        eps = float(rng.uniform(0.001, 0.1))
        mask = CausalMask(n).materialize()
        a1 = mask * np.exp(rng.normal(0, 1.0, (n, n)))
        a2 = a1 * (1.0 + rng.uniform(-eps, eps, (n, n)))
        v = rng.normal(size=(n, d))
        y1 = a1 / a1.sum(axis=1, keepdims=True) @ v
        y2 = a2 / a2.sum(axis=1, keepdims=True) @ v
        rhs = 4.0 * eps * linf_norm(v)
        margin = min(margin, (rhs - linf_norm(y1 - y2)) / max(1.0, rhs))
    return margin


def lemma_abs_eps(samples, seed=0):
    """|a - b| <= eps a with eps in (0, 0.1) implies |a - b| <= 2 eps min(a, b)."""
    rng = np.random.default_rng(seed)
    margin = np.inf
    for _ in range(samples):
        a = float(rng.uniform(0.01, 100.0))
        eps = float(rng.uniform(1e-4, 0.1))
        b = a + a * rng.uniform(-eps, eps)
        lhs = abs(a - b)
        rhs = 2.0 * eps * min(a, b)
        margin = min(margin, (rhs - lhs) / max(1e-12, rhs))
    return margin


def lemma_norm_bound(samples, seed=0):
    """||G v||_1 <= ||G||_1 ||v||_inf with the entrywise matrix l1 norm."""
    rng = np.random.default_rng(seed)
    margin = np.inf
    for _ in range(samples):
        n, m = int(rng.integers(1, 12)), int(rng.integers(1, 12))
        g = rng.normal(size=(n, m))
        v = rng.normal(size=m)
        lhs, rhs = norm_product_bound(g, v)
        margin = min(margin, (rhs - lhs) / max(1.0, rhs))
    return margin


ERROR_LEMMAS = {
    "exp_perturb": lemma_exp_perturb,
    "softmax_lip": lemma_softmax_lip,
    "softmax_lip_v2": lemma_softmax_lip_v2,
    "abs_eps": lemma_abs_eps,
    "norm_bound_1_infty": lemma_norm_bound,
}


def check_error_lemmas(seed=0, samples=200):
    worst = np.inf
    notes = []
    for name, fn in ERROR_LEMMAS.items():
        margin = fn(samples, seed)
        worst = min(worst, margin)
        notes.append(f"{name}: {margin:.3e}")
    return _pass_min("error_lemmas", worst, 1e-9, "; ".join(notes))


# --------------------------------------------------------------------- sweep


def check_sweep_monotone(seed=0):
    from .bench import BenchConfig, sweep_error_vs_k

    k_full = 5
    cfg = BenchConfig(k_values=tuple(range(1, k_full + 1)), n=48, d=3, delta=1.0,
                      seed=seed, reps=1)
    records = sweep_error_vs_k(cfg)
    rels = [r.rel_frob for r in sorted(records, key=lambda r: r.k)]
    if rels[-1] >= 1e-10:
        return CheckResult("sweep_error_vs_k", False, rels[-1], 1e-10,
                           "full-k relative difference not exact")
    worst = max((rels[i + 1] - rels[i] for i in range(len(rels) - 1)), default=0.0)
    return _pass("sweep_error_vs_k", worst, 1e-12,
                 "non-increasing error, exact at full k")


def check_io_roundtrip(seed=0, tmpdir=None):
    import tempfile
    from pathlib import Path

    rng = np.random.default_rng(seed)
    mat = rng.normal(size=(9, 4))
    n = 16
    windows = (16, 5)
    vectors = [np.r_[rng.normal(size=m), np.zeros(n - m)] for m in windows]
    basis = ConvBasis(n, vectors, windows)
    with tempfile.TemporaryDirectory(dir=tmpdir) as td:
        p = Path(td)
        save_matrix_cbm(p / "m.cbm", mat)
        save_matrix_csv(p / "m.csv", mat)
        save_basis_cbb(p / "b.cbb", basis)
        worst = float(np.max(np.abs(load_matrix_cbm(p / "m.cbm") - mat)))
        worst = max(worst, float(np.max(np.abs(load_matrix_csv(p / "m.csv") - mat))))
        again = load_basis_cbb(p / "b.cbb")
        worst = max(worst, float(np.max(np.abs(again.to_dense() - basis.to_dense()))))
        worst = max(worst, float(again.windows != basis.windows))
    return _pass("io_roundtrip", worst, 0.0, "CBM1/CSV/CBB1 byte-exact round trips")


CHECKS = [
    check_fourier_roundtrip,
    check_conv_matvec,
    check_toeplitz_circulant,
    check_conv_additivity,
    check_basis_consistency,
    check_exp_transform,
    check_decompose_roundtrip,
    check_segment_tree,
    check_mask_columns,
    check_recovery_exact,
    check_recovery_noise,
    check_exact_corollary,
    check_full_attention,
    check_gradient_fd,
    check_gradient_fast,
    check_gradient_zero_residual,
    check_gradient_mutation,
    check_kron_identity,
    check_lowrank_matvecs,
    check_lowrank_attention_bound,
    check_backend_parity,
    check_error_lemmas,
    check_sweep_monotone,
    check_io_roundtrip,
]


def run_verification_suite(seed=0):
    """Run every registered check; returns (exit_code, report dict)."""
    results = []
    for fn in CHECKS:
        try:
            results.append(fn(seed))
        except Exception:
            results.append(CheckResult(fn.__name__, False, float("nan"), 0.0,
                                       traceback.format_exc(limit=3)))
    failed = [r for r in results if not r.passed]
    report = {
        "backend": backend.active_backend(),
        "seed": seed,
        "total": len(results),
        "passed": len(results) - len(failed),
        "failed": len(failed),
        "checks": [asdict(r) for r in results],
    }
    return (1 if failed else 0), report
