import numpy as np
import pytest

from convbasis import (
    CausalMask,
    ConvBasis,
    NormalizationError,
    RecoveryParams,
    conv_error_bound,
    conv_forward,
    exact_forward_via_conv,
    forward_from_basis,
    full_self_attention_forward,
    linf_norm,
    naive_masked_attention,
)
from convbasis.fixtures import separated_conv_instance, toeplitz_qk

import oracles


def test_error_bound_values():
    v = np.array([[1.0, -0.5]])
    assert conv_error_bound(0.0, v) == 0.0
    assert conv_error_bound(0.01, v) == pytest.approx(2 * (np.exp(0.02) - 1),
                                                      rel=1e-12)
    with pytest.raises(ValueError, match=">= 0"):
        conv_error_bound(-0.1, v)


def test_forward_from_basis_validates_input():
    basis = ConvBasis(4, [np.ones(4)], (4,)).exp()
    with pytest.raises(TypeError, match="ConvBasis"):
        forward_from_basis(np.eye(4), np.ones((4, 1)))
    with pytest.raises(ValueError, match="rows"):
        forward_from_basis(basis, np.ones((3, 1)))


def test_partial_coverage_basis_has_zero_normalizer_rows():
    # windows[0] < n leaves leading columns uncovered: the exponentiated
    # basis zeroes those rows and normalization must fail loudly
    basis = ConvBasis(6, [np.ones(6)], (4,)).exp()
    with pytest.raises(NormalizationError, match="row 0"):
        forward_from_basis(basis, np.ones((6, 2)))


def test_conv_forward_is_exact_on_separated_fixtures():
    rng = np.random.default_rng(0)
    for seed in range(6):
        inst = separated_conv_instance(48, 3, 1, 0.8, seed)
        v = rng.normal(size=(48, 4))
        out, rec = conv_forward(inst.q, inst.k_mat, v, inst.params)
        assert rec.windows == inst.basis.windows
        ref = naive_masked_attention(inst.q, inst.k_mat, v, CausalMask(48))
        assert linf_norm(out - ref) < 1e-8


def test_conv_forward_rows_are_stochastic_on_ones():
    inst = separated_conv_instance(32, 2, 1, 0.6, seed=3)
    out, _ = conv_forward(inst.q, inst.k_mat, np.ones((32, 2)), inst.params)
    assert np.max(np.abs(out - 1.0)) < 1e-10


def test_noise_injected_forward_respects_theorem_bound():
    rng = np.random.default_rng(1)
    delta, t = 1.0, 1
    for trial in range(20):
        eps = float(rng.uniform(0.001, delta / (5 * t)))
        inst = separated_conv_instance(48, 3, t, delta, seed=trial,
                                       noise_epsilon=eps)
        v = rng.normal(size=(48, 3))
        out, rec = conv_forward(inst.q, inst.k_mat, v, inst.params)
        assert rec.windows == inst.basis.windows
        clean = forward_from_basis(inst.basis.exp(), v)
        assert linf_norm(out - clean) <= conv_error_bound(eps, v)


def test_exact_corollary_on_random_inputs():
    rng = np.random.default_rng(2)
    for _ in range(10):
        n = int(rng.integers(2, 33))
        d = int(rng.integers(1, 5))
        q, k, v = rng.normal(0, 0.6, (3, n, d))
        fast = exact_forward_via_conv(q, k, v)
        ref = naive_masked_attention(q, k, v, CausalMask(n))
        assert linf_norm(fast - ref) < 1e-8


def test_exact_corollary_degenerate_cases():
    v = np.array([[3.0, -1.0]])
    assert np.allclose(exact_forward_via_conv(np.ones((1, 2)), np.ones((1, 2)), v),
                       v, atol=1e-12)
    rng = np.random.default_rng(3)
    n = 7
    v = rng.normal(size=(n, 2))
    out = exact_forward_via_conv(np.zeros((n, 2)), rng.normal(size=(n, 2)), v)
    for i in range(n):
        assert np.allclose(out[i], v[: i + 1].mean(axis=0), atol=1e-10)


def test_softmax_outputs_are_lipschitz_in_score_perturbation():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n, d = int(rng.integers(2, 10)), int(rng.integers(1, 4))
        eps = float(rng.uniform(0.001, 0.5))
        w = np.tril(np.ones((n, n)))
        s = rng.normal(0, 1.2, (n, n))
        v = rng.normal(size=(n, d))
        a1 = w * np.exp(s)
        a2 = w * np.exp(s + rng.uniform(-eps, eps, (n, n)))
        y1 = a1 / a1.sum(axis=1, keepdims=True) @ v
        y2 = a2 / a2.sum(axis=1, keepdims=True) @ v
        assert linf_norm(y1 - y2) <= 2 * (np.exp(eps) - 1) * linf_norm(v) + 1e-12


def test_full_self_attention_matches_unmasked_softmax():
    n, d = 24, 4
    q, k = toeplitz_qk(n, d, seed=5)
    rng = np.random.default_rng(6)
    v = rng.normal(size=(n, d))
    params = RecoveryParams(k=1, t_window=1, delta=0.9)
    out = full_self_attention_forward(q, k, v, params)
    ref = oracles.softmax_attention_rows(q, k, np.ones((n, n)), v)
    assert linf_norm(out - ref) < 1e-8


def test_full_self_attention_single_token():
    v = np.array([[2.0, 5.0]])
    params = RecoveryParams(k=1, delta=0.0)
    out = full_self_attention_forward(np.ones((1, 2)), np.ones((1, 2)), v, params)
    assert np.allclose(out, v, atol=1e-12)


def test_full_self_attention_with_underflowed_upper_triangle():
    # exp of the strictly-upper scores underflows to exactly zero, so the
    # full result must coincide with the causal-only forward
    rng = np.random.default_rng(7)
    n = 12
    scores = np.tril(rng.normal(0, 0.5, (n, n))) + np.triu(np.full((n, n), -800.0), 1)
    q, k = scores, np.eye(n)
    v = rng.normal(size=(n, 3))
    exact = RecoveryParams(k=n, t_window=1, delta=0.0)
    full = full_self_attention_forward(q, k, v, exact)
    causal, _ = conv_forward(q, k, v, exact)
    assert linf_norm(full - causal) < 1e-12
    ref = naive_masked_attention(q, k, v, CausalMask(n))
    assert linf_norm(full - ref) < 1e-8
