"""SVM module – dual SMO on precomputed kernels, plus the classical baseline kernels."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from src.errors import DegenerateInputError, DimensionError

logger = logging.getLogger(__name__)

PSD_TOLERANCE = 1e-9
_TAU = 1e-12


@dataclass
class SvmModel:
    """Dual coefficients of a trained binary SVM.

    The decision function is ``f(x) = sum_j alphas[j] * labels[j] * K(x, x_j) + bias``.
    """

    alphas: np.ndarray
    bias: float
    labels: np.ndarray
    C: float
    iterations: int = 0
    converged: bool = True

    @property
    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.alphas > 0.0)

    def dual_objective(self, K: np.ndarray) -> float:
        """``sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij``."""
        ay = self.alphas * self.labels
        return float(np.sum(self.alphas) - 0.5 * ay @ K @ ay)


# ── Classical kernels ────────────────────────────────────────────────


def linear_kernel(X: np.ndarray, Y: np.ndarray | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    Y = X if Y is None else np.asarray(Y, dtype=float)
    return X @ Y.T


def gaussian_kernel(X: np.ndarray, gamma: float, Y: np.ndarray | None = None) -> np.ndarray:
    """``exp(-gamma * |x_i - y_j|^2)``; rows of ``Y`` default to ``X``."""
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    X = np.asarray(X, dtype=float)
    Y = X if Y is None else np.asarray(Y, dtype=float)
    return np.exp(-gamma * cdist(X, Y, "sqeuclidean"))


# ── Training ─────────────────────────────────────────────────────────


def _check_problem(K: np.ndarray, y: np.ndarray, C: float) -> None:
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise DimensionError(f"kernel must be square, got shape {K.shape}")
    if K.shape[0] != y.shape[0]:
        raise DimensionError(f"kernel is {K.shape[0]}x{K.shape[0]} but got {y.shape[0]} labels")
    if y.shape[0] == 0:
        raise DegenerateInputError("cannot train on zero points")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DimensionError("labels must be -1 or +1")
    if C <= 0:
        raise ValueError(f"C must be > 0, got {C}")


def _bias(alphas: np.ndarray, y: np.ndarray, K: np.ndarray, C: float) -> float:
    # r_i is the bias that puts point i exactly on its margin.
    r = y - K @ (alphas * y)
    free = (alphas > 0.0) & (alphas < C)
    if np.any(free):
        return float(np.mean(r[free]))
    at_zero, at_c = alphas <= 0.0, alphas >= C
    lower_mask = ((y > 0) & at_zero) | ((y < 0) & at_c)
    upper_mask = ((y > 0) & at_c) | ((y < 0) & at_zero)
    lower = float(np.max(r[lower_mask])) if np.any(lower_mask) else None
    upper = float(np.min(r[upper_mask])) if np.any(upper_mask) else None
    if lower is not None and upper is not None:
        return 0.5 * (lower + upper)
    if lower is not None:
        return lower
    return upper if upper is not None else 0.0


def smo_train(
    K: np.ndarray,
    y: np.ndarray,
    C: float = 1.0,
    tol: float = 1e-3,
    max_passes: int = 200,
    eps: float = 1e-8,
    max_iter: int = 200_000,
) -> SvmModel:
    """Solve the soft-margin SVM dual with maximal-violating-pair SMO.

    Iterates until the optimality gap drops below ``eps`` (well inside the KKT
    tolerance ``tol``), ``max_passes`` consecutive updates make no progress, or
    ``max_iter`` updates have run.
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    _check_problem(K, y, C)
    m = y.shape[0]

    if np.all(y == y[0]):
        return SvmModel(np.zeros(m), float(y[0]), y, C, iterations=0, converged=True)

    min_eig = float(np.linalg.eigvalsh(0.5 * (K + K.T))[0])
    if min_eig < -PSD_TOLERANCE:
        logger.warning("kernel is indefinite (min eigenvalue %.3e); training anyway", min_eig)

    Q = (y[:, None] * y[None, :]) * K
    diag = np.diag(K).copy()
    alphas = np.zeros(m)
    grad = -np.ones(m)
    stalled = 0
    iterations = 0
    converged = False

    while iterations < max_iter:
        score = -y * grad
        up = ((y > 0) & (alphas < C)) | ((y < 0) & (alphas > 0))
        low = ((y > 0) & (alphas > 0)) | ((y < 0) & (alphas < C))
        if not np.any(up) or not np.any(low):
            converged = True
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        if score[i] - score[j] < eps:
            converged = True
            break

        old_i, old_j = alphas[i], alphas[j]
        if y[i] != y[j]:
            quad = max(diag[i] + diag[j] - 2.0 * K[i, j], _TAU)
            delta = (-grad[i] - grad[j]) / quad
            diff = old_i - old_j
            new_i, new_j = old_i + delta, old_j + delta
            if diff > 0:
                if new_j < 0:
                    new_j, new_i = 0.0, diff
            elif new_i < 0:
                new_i, new_j = 0.0, -diff
            if diff > 0:
                if new_i > C:
                    new_i, new_j = C, C - diff
            elif new_j > C:
                new_j, new_i = C, C + diff
        else:
            quad = max(diag[i] + diag[j] - 2.0 * K[i, j], _TAU)
            delta = (grad[i] - grad[j]) / quad
            total = old_i + old_j
            new_i, new_j = old_i - delta, old_j + delta
            if total > C:
                if new_i > C:
                    new_i, new_j = C, total - C
            elif new_j < 0:
                new_j, new_i = 0.0, total
            if total > C:
                if new_j > C:
                    new_j, new_i = C, total - C
            elif new_i < 0:
                new_i, new_j = 0.0, total

        alphas[i], alphas[j] = new_i, new_j
        d_i, d_j = new_i - old_i, new_j - old_j
        grad += Q[:, i] * d_i + Q[:, j] * d_j
        iterations += 1
        if max(abs(d_i), abs(d_j)) < 1e-14:
            stalled += 1
            if stalled >= max_passes:
                break
        else:
            stalled = 0

    model = SvmModel(alphas, _bias(alphas, y, K, C), y, C, iterations, converged)
    violation = kkt_violation(model, K)
    if violation > tol:
        logger.warning(
            "SMO stopped after %d updates with KKT violation %.3e > tol %.1e",
            iterations, violation, tol,
        )
    return model


def kkt_violation(model: SvmModel, K: np.ndarray) -> float:
    """Largest violation of the soft-margin KKT conditions on the training points."""
    margins = model.labels * decision(model, K)
    a, C = model.alphas, model.C
    at_zero = a <= 0.0
    at_c = a >= C
    free = ~at_zero & ~at_c
    violation = np.zeros_like(margins)
    violation[at_zero] = np.maximum(0.0, 1.0 - margins[at_zero])
    violation[at_c] = np.maximum(0.0, margins[at_c] - 1.0)
    violation[free] = np.abs(margins[free] - 1.0)
    return float(np.max(violation)) if violation.size else 0.0


# ── Prediction ───────────────────────────────────────────────────────


def decision(model: SvmModel, K_cross: np.ndarray) -> np.ndarray:
    """Scores for evaluation points; ``K_cross`` rows are points, columns training points."""
    K_cross = np.atleast_2d(np.asarray(K_cross, dtype=float))
    if K_cross.shape[1] != model.alphas.shape[0]:
        raise DimensionError(
            f"kernel has {K_cross.shape[1]} columns but the model has "
            f"{model.alphas.shape[0]} training points"
        )
    return K_cross @ (model.alphas * model.labels) + model.bias


def predict(model: SvmModel, K_cross: np.ndarray) -> np.ndarray:
    """Labels in {-1, +1}; a zero score counts as +1."""
    return np.where(decision(model, K_cross) >= 0.0, 1, -1)


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    predictions = np.asarray(predictions).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if predictions.shape != labels.shape:
        raise DimensionError(f"{predictions.shape[0]} predictions for {labels.shape[0]} labels")
    if labels.size == 0:
        raise DegenerateInputError("accuracy of an empty set is undefined")
    return float(np.mean(predictions == labels))
