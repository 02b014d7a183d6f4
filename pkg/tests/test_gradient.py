import numpy as np
import pytest

from convbasis import (
    RecoveryParams,
    TrainingInstance,
    fast_gradient,
    finite_difference_gradient,
    kron_vect_check,
    naive_gradient,
    training_forward,
)
from convbasis import gradient
from convbasis.fixtures import training_instance_fixture

import oracles


def _random_instance(rng, n, d, scale=0.5):
    a1, a2, a3 = rng.normal(0, scale, (3, n, d))
    x, y = rng.normal(0, scale, (2, d, d))
    e = rng.normal(size=(n, d))
    return TrainingInstance(a1, a2, a3, x, y, e)


def test_instance_shape_validation():
    rng = np.random.default_rng(0)
    inst = _random_instance(rng, 5, 2)
    with pytest.raises(ValueError, match="A2 must have shape"):
        TrainingInstance(inst.a1, np.ones((4, 2)), inst.a3, inst.x, inst.y, inst.e)
    with pytest.raises(ValueError, match="X must have shape"):
        TrainingInstance(inst.a1, inst.a2, inst.a3, np.ones((3, 3)), inst.y, inst.e)


def test_loss_matches_entrywise_reference():
    rng = np.random.default_rng(1)
    for _ in range(10):
        inst = _random_instance(rng, int(rng.integers(2, 12)), int(rng.integers(1, 4)))
        ours = gradient.loss(inst)
        ref = oracles.attention_loss_direct(
            inst.a1, inst.a2, inst.a3, inst.x, inst.y, inst.e
        )
        assert ours == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_target_perturbation_changes_loss_quadratically():
    # adding delta to one E entry moves the loss by 0.5 delta^2 - delta * c_old
    rng = np.random.default_rng(2)
    inst = _random_instance(rng, 8, 3)
    base = gradient.loss(inst)
    c_old = gradient.dense_softmax(inst) @ (inst.a3 @ inst.y) - inst.e
    for i, j, delta in ((0, 0, 0.5), (3, 1, -1.2), (7, 2, 0.037)):
        e2 = inst.e.copy()
        e2[i, j] += delta
        bumped = gradient.loss(TrainingInstance(
            inst.a1, inst.a2, inst.a3, inst.x, inst.y, e2))
        assert bumped - base == pytest.approx(
            0.5 * delta ** 2 - delta * c_old[i, j], rel=1e-9, abs=1e-12)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(3)
    inst = _random_instance(rng, 9, 2)
    f = gradient.dense_softmax(inst)
    assert np.allclose(f.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(np.triu(f, 1), 0.0)


def test_exp_score_oracle_columns():
    rng = np.random.default_rng(4)
    inst = _random_instance(rng, 7, 3)
    oracle = gradient.exp_score_oracle(inst)
    scores = inst.a1 @ inst.x @ inst.a2.T
    for j in range(7):
        expected = np.zeros(7)
        expected[j:] = np.exp(scores[j:, j])
        assert np.allclose(oracle.query(j), expected, atol=1e-12)
    # X = 0 zeroes the scores, so each column is the mask column itself
    flat = TrainingInstance(inst.a1, inst.a2, inst.a3,
                            np.zeros((3, 3)), inst.y, inst.e)
    oracle0 = gradient.exp_score_oracle(flat)
    for j in range(7):
        assert np.array_equal(oracle0.query(j), flat.mask().column(j))
    assert oracle0.query_count == 7


def test_naive_gradient_matches_independent_finite_differences():
    rng = np.random.default_rng(5)
    for _ in range(6):
        inst = _random_instance(rng, int(rng.integers(3, 16)), int(rng.integers(1, 4)))
        g = naive_gradient(inst)
        fd = oracles.fd_gradient_direct(
            inst.a1, inst.a2, inst.a3, inst.x, inst.y, inst.e)
        scale = max(1.0, float(np.max(np.abs(g))))
        assert np.max(np.abs(g - fd)) / scale < 1e-4


def test_library_finite_differences_agree_with_reference():
    rng = np.random.default_rng(6)
    inst = _random_instance(rng, 6, 2)
    ours = finite_difference_gradient(inst)
    ref = oracles.fd_gradient_direct(
        inst.a1, inst.a2, inst.a3, inst.x, inst.y, inst.e)
    assert np.allclose(ours, ref, atol=1e-12)


def test_fast_gradient_matches_naive_on_structured_instances():
    for flavor in ("ones", "angles"):
        for n, k, seed in ((16, 1, 0), (24, 2, 1), (40, 3, 2), (64, 3, 3)):
            inst, params = training_instance_fixture(n, k, seed, flavor=flavor)
            g_fast, rec = fast_gradient(inst, params)
            assert len(rec.windows) == k
            g_naive = naive_gradient(inst)
            scale = max(1.0, float(np.max(np.abs(g_naive))))
            assert np.max(np.abs(g_fast - g_naive)) / scale < 1e-6


def test_zero_residual_instance_has_zero_gradient():
    inst, params = training_instance_fixture(20, 2, seed=7, zero_residual=True)
    assert np.max(np.abs(naive_gradient(inst))) < 1e-10
    g_fast, _ = fast_gradient(inst, params)
    assert np.max(np.abs(g_fast)) < 1e-10
    c, loss_val = training_forward(inst, params)
    assert loss_val < 1e-20
    assert np.max(np.abs(c)) < 1e-10


def test_training_forward_matches_dense_loss():
    for seed in range(4):
        inst, params = training_instance_fixture(28, 2, seed=seed)
        c, loss_val = training_forward(inst, params)
        f = gradient.dense_softmax(inst)
        c_ref = f @ (inst.a3 @ inst.y) - inst.e
        assert np.max(np.abs(c - c_ref)) < 1e-10
        assert loss_val == pytest.approx(gradient.loss(inst), rel=1e-10)


def test_rank_one_hadamard_column_action():
    # (f o (a b^T)) w == diag(a) f diag(b) w, the identity behind the p1 term
    rng = np.random.default_rng(8)
    n = 10
    f = np.tril(rng.uniform(0.1, 1.0, (n, n)))
    a, b, w = rng.normal(size=(3, n))
    lhs = (f * np.outer(a, b)) @ w
    rhs = a * (f @ (b * w))
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_fast_gradient_detects_sign_mutation(monkeypatch):
    inst, params = training_instance_fixture(24, 2, seed=9)
    g_naive = naive_gradient(inst)
    monkeypatch.setattr(gradient, "_p2_matvec", lambda r, fw: -(r * fw))
    g_bad, _ = fast_gradient(inst, params)
    scale = max(1.0, float(np.max(np.abs(g_naive))))
    assert np.max(np.abs(g_bad - g_naive)) / scale > 1e-3


def test_kron_vect_identity():
    report = kron_vect_check(np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1)))
    assert report.max_err_product == 0.0
    rng = np.random.default_rng(10)
    report = kron_vect_check(rng.normal(size=(3, 2)), rng.normal(size=(2, 2)),
                             rng.normal(size=(3, 2)))
    assert report.max_err_product < 1e-12
    assert report.max_err_outer < 1e-12


def test_vect_of_outer_product_is_kron():
    a = np.array([1.0, 2.0])
    b = np.array([3.0, 4.0])
    assert np.array_equal(np.outer(a, b).reshape(-1), np.array([3.0, 4.0, 6.0, 8.0]))
    assert np.array_equal(np.kron(a, b), np.array([3.0, 4.0, 6.0, 8.0]))


def test_kron_check_guards():
    big = np.ones((101, 10))
    with pytest.raises(ValueError, match="1e6"):
        kron_vect_check(big, np.ones((10, 10)), big)
    with pytest.raises(ValueError, match="shape mismatch"):
        kron_vect_check(np.ones((3, 2)), np.ones((2, 2)), np.ones((4, 2)))
    rng = np.random.default_rng(11)
    with pytest.raises(AssertionError, match="identity off"):
        kron_vect_check(rng.normal(size=(4, 3)), rng.normal(size=(3, 3)),
                        rng.normal(size=(4, 3)), tol=0.0)


def test_fast_gradient_respects_query_budget():
    inst, params = training_instance_fixture(64, 3, seed=12)
    _, rec = fast_gradient(inst, params)
    budget = params.k * (int(np.ceil(np.log2(inst.n))) + 2)
    assert rec.column_queries <= budget
