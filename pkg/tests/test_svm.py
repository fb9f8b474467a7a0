"""Tests for src.svm."""

import itertools
import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.errors import DegenerateInputError, DimensionError
from src.svm import (
    SvmModel,
    accuracy,
    decision,
    gaussian_kernel,
    kkt_violation,
    linear_kernel,
    predict,
    smo_train,
)


def _brute_force_dual(K: np.ndarray, y: np.ndarray, C: float) -> float:
    """Best dual objective over every active set (each alpha at 0, at C, or free)."""
    m = y.shape[0]
    Q = np.outer(y, y) * K
    best = -np.inf
    for states in itertools.product((0, 1, 2), repeat=m):
        free = [i for i in range(m) if states[i] == 2]
        alpha = np.array([C if s == 1 else 0.0 for s in states])
        bound = [i for i in range(m) if states[i] != 2]
        if free:
            k = len(free)
            system = np.zeros((k + 1, k + 1))
            system[:k, :k] = Q[np.ix_(free, free)]
            system[:k, k] = y[free]
            system[k, :k] = y[free]
            rhs = np.concatenate(
                [1.0 - Q[np.ix_(free, bound)] @ alpha[bound], [-(y[bound] @ alpha[bound])]]
            )
            try:
                solution = np.linalg.solve(system, rhs)
            except np.linalg.LinAlgError:
                continue
            alpha[free] = solution[:k]
        if abs(y @ alpha) > 1e-9 or np.any(alpha < -1e-12) or np.any(alpha > C + 1e-12):
            continue
        best = max(best, float(alpha.sum() - 0.5 * alpha @ Q @ alpha))
    return best


def _sample_problem(seed: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((m, 2))
    y = np.where(np.arange(m) % 2 == 0, 1.0, -1.0)
    X[y > 0] += 0.5
    return X, y


# ── Kernels ──────────────────────────────────────────────────────────


def test_gaussian_kernel_has_unit_diagonal() -> None:
    X, _ = _sample_problem(0, 5)
    assert_allclose(np.diag(gaussian_kernel(X, 0.7)), 1.0)


def test_gaussian_kernel_rejects_nonpositive_gamma() -> None:
    with pytest.raises(ValueError):
        gaussian_kernel(np.zeros((2, 2)), 0.0)


def test_linear_kernel_cross_shape() -> None:
    assert linear_kernel(np.ones((3, 2)), np.ones((4, 2))).shape == (3, 4)


# ── SMO ──────────────────────────────────────────────────────────────


def test_two_point_instance_has_unit_alphas() -> None:
    s = 1 / np.sqrt(2)
    X = np.array([[s], [-s]])
    y = np.array([1.0, -1.0])
    model = smo_train(linear_kernel(X), y, C=10.0)
    assert_allclose(model.alphas, [1.0, 1.0], atol=1e-6)
    assert abs(model.bias) < 1e-6
    assert model.dual_objective(linear_kernel(X)) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize(("C", "expected"), [(1.0, 1.0), (0.5, 0.5)])
def test_identity_kernel_two_points(C: float, expected: float) -> None:
    model = smo_train(np.eye(2), np.array([1.0, -1.0]), C=C)
    assert_allclose(model.alphas, [expected, expected], atol=1e-6)
    assert abs(model.bias) < 1e-6


@pytest.mark.parametrize("m", [2, 3, 4, 5, 6])
@pytest.mark.parametrize("C", [0.5, 10.0])
def test_smo_matches_brute_force_dual(m: int, C: float) -> None:
    X, y = _sample_problem(m, m)
    K = gaussian_kernel(X, 0.5)
    model = smo_train(K, y, C=C)
    assert model.dual_objective(K) == pytest.approx(_brute_force_dual(K, y, C), abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_trained_models_satisfy_kkt(seed: int) -> None:
    X, y = _sample_problem(seed, 30)
    K = gaussian_kernel(X, 1.0)
    model = smo_train(K, y, C=1.0, tol=1e-3)
    assert model.converged
    assert kkt_violation(model, K) <= 1e-3
    assert abs(model.alphas @ y) < 1e-9
    assert np.all((model.alphas >= 0) & (model.alphas <= 1.0))


def test_single_class_gives_trivial_model() -> None:
    K = np.eye(3)
    model = smo_train(K, np.ones(3))
    assert np.all(model.alphas == 0)
    assert predict(model, K).tolist() == [1, 1, 1]


def test_indefinite_kernel_warns(caplog: pytest.LogCaptureFixture) -> None:
    K = np.array([[1.0, 2.0], [2.0, 1.0]])
    with caplog.at_level(logging.WARNING, logger="src.svm"):
        smo_train(K, np.array([1.0, -1.0]), max_iter=1000)
    assert "indefinite" in caplog.text


def test_shape_mismatch_is_rejected() -> None:
    with pytest.raises(DimensionError):
        smo_train(np.eye(3), np.array([1.0, -1.0]))


def test_labels_must_be_signs() -> None:
    with pytest.raises(DimensionError):
        smo_train(np.eye(2), np.array([1.0, 0.0]))


# ── Prediction ───────────────────────────────────────────────────────


def test_zero_score_predicts_positive() -> None:
    model = SvmModel(np.zeros(2), 0.0, np.array([1.0, -1.0]), 1.0)
    assert predict(model, np.ones((1, 2))).tolist() == [1]


def test_decision_checks_columns() -> None:
    model = SvmModel(np.zeros(2), 0.0, np.array([1.0, -1.0]), 1.0)
    with pytest.raises(DimensionError):
        decision(model, np.ones((1, 3)))


def test_separable_data_is_fit_exactly() -> None:
    X, y = _sample_problem(9, 20)
    X[y > 0] += 5.0
    K = linear_kernel(X)
    model = smo_train(K, y, C=10.0)
    assert accuracy(predict(model, K), y) == 1.0


def test_accuracy_of_empty_set_is_rejected() -> None:
    with pytest.raises(DegenerateInputError):
        accuracy(np.array([]), np.array([]))
