"""Qkernel module – trainable fidelity kernel, target alignment and its gradients.

Each feature-map layer applies, in order: H on every qubit; RZ(x_j) on qubit
``j mod n`` for every feature; RZZ((pi - xbar_a)(pi - xbar_b)) on every
entangling pair, where ``xbar_q`` sums the features assigned to qubit ``q``;
RY(theta[layer, q]) on every qubit; a CNOT chain 0->1->...->n-1.

Two evaluation paths exist. ``feature_map_circuit``/``encode`` build the gate
list and run it gate by gate; ``encode_batch`` runs all points of a dataset at
once as one ``(M, 2**n)`` array, folding the data block into a diagonal phase.
Kernels, losses and gradients use the batched path.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from src.errors import (
    CapacityError,
    DataError,
    DegenerateInputError,
    DimensionError,
    GateError,
)
from src.statevec import (
    MAX_QUBITS,
    Gate,
    StateVector,
    apply_circuit,
    apply_matrix,
    cnot,
    h,
    inner_product,
    prob_zero,
    ry,
    rz,
    rzz,
    z_signs,
    zero_state,
)

logger = logging.getLogger(__name__)

DEFAULT_FD_STEP = 1e-5
_SHIFT = math.pi / 2


@dataclass(frozen=True)
class AnsatzSpec:
    """Layout of the feature map and its trainable RY block."""

    n_qubits: int
    n_layers: int = 2
    feature_dim: int = 1
    entangle_pairs: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self) -> None:
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise CapacityError(f"n_qubits must be in [1, {MAX_QUBITS}], got {self.n_qubits}")
        if self.n_layers < 1:
            raise GateError(f"n_layers must be >= 1, got {self.n_layers}")
        if self.feature_dim < 1:
            raise GateError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if self.entangle_pairs is None:
            pairs = tuple((q, q + 1) for q in range(self.n_qubits - 1))
        else:
            pairs = tuple((int(a), int(b)) for a, b in self.entangle_pairs)
        for a, b in pairs:
            if a == b or not (0 <= a < self.n_qubits and 0 <= b < self.n_qubits):
                raise GateError(f"invalid entangling pair ({a}, {b}) for {self.n_qubits} qubits")
        object.__setattr__(self, "entangle_pairs", pairs)

    @property
    def n_params(self) -> int:
        return self.n_layers * self.n_qubits

    def qubit_of(self, feature: int) -> int:
        return feature % self.n_qubits

    def check_theta(self, theta: np.ndarray | Sequence[float]) -> np.ndarray:
        values = np.asarray(theta, dtype=float).reshape(-1)
        if values.shape[0] != self.n_params:
            raise DimensionError(
                f"theta needs {self.n_params} values ({self.n_layers} layers x "
                f"{self.n_qubits} qubits), got {values.shape[0]}"
            )
        if not np.all(np.isfinite(values)):
            raise DimensionError("theta contains non-finite values")
        return values

    def check_features(self, X: np.ndarray | Sequence[Sequence[float]]) -> np.ndarray:
        features = np.atleast_2d(np.asarray(X, dtype=float))
        if features.shape[1] != self.feature_dim:
            raise DimensionError(
                f"expected {self.feature_dim} feature(s) per point, got {features.shape[1]}"
            )
        return features


@dataclass
class LabeledDataset:
    """Angle-scaled features with labels in {-1, +1}."""

    features: np.ndarray
    labels: np.ndarray
    names: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim == 1:
            self.features = self.features.reshape(1, -1)
        self.labels = np.asarray(self.labels, dtype=int).reshape(-1)
        if self.features.shape[0] != self.labels.shape[0]:
            raise DimensionError(
                f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels"
            )
        if not np.all(np.isin(self.labels, (-1, 1))):
            raise DataError(f"labels must be -1 or +1, got {sorted(set(self.labels.tolist()))}")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices: Sequence[int] | np.ndarray) -> LabeledDataset:
        idx = np.asarray(indices, dtype=int)
        names = [self.names[i] for i in idx] if self.names else []
        return LabeledDataset(self.features[idx], self.labels[idx], names)

    @classmethod
    def concat(cls, parts: Sequence[LabeledDataset]) -> LabeledDataset:
        if not parts:
            raise DegenerateInputError("cannot concatenate zero datasets")
        names: list[str] = []
        if all(p.names for p in parts):
            for p in parts:
                names.extend(p.names)
        return cls(
            np.vstack([p.features for p in parts]),
            np.concatenate([p.labels for p in parts]),
            names,
        )


# ── Feature map ──────────────────────────────────────────────────────


def qubit_sums(spec: AnsatzSpec, x: np.ndarray) -> np.ndarray:
    """Sum of the features assigned to each qubit, for one point or a batch."""
    x = np.asarray(x, dtype=float)
    sums = np.zeros(x.shape[:-1] + (spec.n_qubits,))
    for j in range(spec.feature_dim):
        sums[..., spec.qubit_of(j)] += x[..., j]
    return sums


def pair_angle(xbar_a: np.ndarray | float, xbar_b: np.ndarray | float) -> np.ndarray | float:
    return (math.pi - xbar_a) * (math.pi - xbar_b)


def feature_map_circuit(spec: AnsatzSpec, x: Sequence[float], theta: Sequence[float]) -> list[Gate]:
    """Gate list of ``U(x; theta)``, applied left to right."""
    point = spec.check_features(x)[0]
    params = spec.check_theta(theta).reshape(spec.n_layers, spec.n_qubits)
    xbar = qubit_sums(spec, point)
    n = spec.n_qubits
    gates: list[Gate] = []
    for layer in range(spec.n_layers):
        gates.extend(h(q) for q in range(n))
        gates.extend(rz(spec.qubit_of(j), float(point[j])) for j in range(spec.feature_dim))
        gates.extend(
            rzz(a, b, float(pair_angle(xbar[a], xbar[b]))) for a, b in spec.entangle_pairs or ()
        )
        gates.extend(ry(q, float(params[layer, q])) for q in range(n))
        gates.extend(cnot(q, q + 1) for q in range(n - 1))
    return gates


def inverse_circuit(gates: Sequence[Gate]) -> list[Gate]:
    return [g.inverse() for g in reversed(gates)]


def encode(spec: AnsatzSpec, x: Sequence[float], theta: Sequence[float]) -> StateVector:
    """Return ``U(x; theta)|0...0>`` by running the circuit gate by gate."""
    return apply_circuit(zero_state(spec.n_qubits), feature_map_circuit(spec, x, theta))


@dataclass(frozen=True)
class _Operators:
    """Data-independent pieces of the batched feature map for one ``AnsatzSpec``."""

    signs: np.ndarray
    pair_signs: np.ndarray
    cnot_perm: np.ndarray


_OPERATOR_CACHE: dict[AnsatzSpec, _Operators] = {}


def _operators(spec: AnsatzSpec) -> _Operators:
    ops = _OPERATOR_CACHE.get(spec)
    if ops is None:
        n = spec.n_qubits
        signs = z_signs(n)
        pairs = spec.entangle_pairs or ()
        if pairs:
            pair_signs = np.stack([signs[:, a] * signs[:, b] for a, b in pairs], axis=1)
        else:
            pair_signs = np.zeros((2 ** n, 0))
        # A CNOT chain permutes basis states; perm[b] is the source index of b.
        index = np.arange(2 ** n)
        perm = index.copy()
        for q in range(n - 1):
            control, target = 1 << (n - 1 - q), 1 << (n - 2 - q)
            perm = perm[np.where(index & control, index ^ target, index)]
        ops = _Operators(signs, pair_signs, perm)
        _OPERATOR_CACHE[spec] = ops
    return ops


def data_phases(spec: AnsatzSpec, X: np.ndarray) -> np.ndarray:
    """Diagonal of the per-layer RZ/RZZ block for every point, shape ``(M, 2**n)``."""
    ops = _operators(spec)
    xbar = qubit_sums(spec, X)
    exponent = xbar @ ops.signs.T
    pairs = spec.entangle_pairs or ()
    if pairs:
        angles = np.stack([pair_angle(xbar[:, a], xbar[:, b]) for a, b in pairs], axis=1)
        exponent = exponent + angles @ ops.pair_signs.T
    return np.exp(-0.5j * exponent)


def encode_batch(
    spec: AnsatzSpec, X: np.ndarray, theta: np.ndarray, phases: np.ndarray | None = None
) -> np.ndarray:
    """Encode every row of ``X``; row ``i`` equals ``encode(spec, X[i], theta)``."""
    features = spec.check_features(X)
    params = spec.check_theta(theta).reshape(spec.n_layers, spec.n_qubits)
    if phases is None:
        phases = data_phases(spec, features)
    ops = _operators(spec)
    n = spec.n_qubits
    hadamard = h(0).matrix()
    states = np.zeros((features.shape[0], 2 ** n), dtype=np.complex128)
    states[:, 0] = 1.0
    for layer in range(spec.n_layers):
        for q in range(n):
            states = apply_matrix(states, hadamard, (q,), n)
        states = states * phases
        for q in range(n):
            states = apply_matrix(states, ry(q, float(params[layer, q])).matrix(), (q,), n)
        states = states[:, ops.cnot_perm]
    return states


# ── Kernels ──────────────────────────────────────────────────────────


def kernel_entry(
    spec: AnsatzSpec, x_i: Sequence[float], x_j: Sequence[float], theta: Sequence[float]
) -> float:
    """Fidelity ``|<psi(x_i)|psi(x_j)>|^2`` from the overlap of two encoded states."""
    overlap = inner_product(encode(spec, x_i, theta), encode(spec, x_j, theta))
    return float(min(1.0, abs(overlap) ** 2))


def kernel_entry_inverted(
    spec: AnsatzSpec, x_i: Sequence[float], x_j: Sequence[float], theta: Sequence[float]
) -> float:
    """Same fidelity as ``|<0|U^dagger(x_i) U(x_j)|0>|^2`` on a single register."""
    gates = feature_map_circuit(spec, x_j, theta)
    gates += inverse_circuit(feature_map_circuit(spec, x_i, theta))
    return prob_zero(apply_circuit(zero_state(spec.n_qubits), gates))


def _fidelities(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """``|<left_i|right_j>|^2`` for every row pair."""
    return np.abs(left.conj() @ right.T) ** 2


def gram_from_states(states: np.ndarray) -> np.ndarray:
    """Symmetric Gram matrix of normalized states: upper triangle mirrored, unit diagonal."""
    gram = np.clip(_fidelities(states, states), 0.0, 1.0)
    upper = np.triu(gram, k=1)
    gram = upper + upper.T
    np.fill_diagonal(gram, 1.0)
    return gram


def kernel_matrix(spec: AnsatzSpec, X: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Fidelity Gram matrix of the rows of ``X``."""
    return gram_from_states(encode_batch(spec, X, theta))


def cross_kernel(
    spec: AnsatzSpec, X_train: np.ndarray, X_test: np.ndarray, theta: np.ndarray
) -> np.ndarray:
    """Kernel rows for test points against training points, shape ``(M_test, M_train)``."""
    train_states = encode_batch(spec, X_train, theta)
    test_states = encode_batch(spec, X_test, theta)
    return np.clip(_fidelities(test_states, train_states), 0.0, 1.0)


def min_eigenvalue(K: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (K + K.T))[0])


# ── Alignment and loss ───────────────────────────────────────────────


def target_kernel(labels: Sequence[int] | np.ndarray) -> np.ndarray:
    """Ideal label kernel ``y y^T``."""
    y = np.asarray(labels).reshape(-1)
    if not np.all(np.isin(y, (-1, 1))):
        raise DataError(f"labels must be -1 or +1, got {sorted(set(y.tolist()))}")
    y = y.astype(float)
    return np.outer(y, y)


def alignment(K: np.ndarray, K_star: np.ndarray) -> float:
    """Uncentered kernel-target alignment ``<K, K*>_F / (|K|_F |K*|_F)``."""
    K = np.asarray(K, dtype=float)
    K_star = np.asarray(K_star, dtype=float)
    if K.shape != K_star.shape:
        raise DimensionError(f"kernel shapes differ: {K.shape} vs {K_star.shape}")
    norm = np.linalg.norm(K) * np.linalg.norm(K_star)
    if norm == 0.0:
        raise DegenerateInputError("alignment of a zero-norm matrix is undefined")
    return float(np.sum(K * K_star) / norm)


def _check_shard(shard: LabeledDataset) -> None:
    if len(shard) == 0:
        raise DegenerateInputError("loss needs a nonempty shard")


def local_loss(spec: AnsatzSpec, shard: LabeledDataset, theta: np.ndarray) -> float:
    """Negative alignment of the shard's kernel with its label kernel."""
    _check_shard(shard)
    return -alignment(kernel_matrix(spec, shard.features, theta), target_kernel(shard.labels))


# ── Gradients ────────────────────────────────────────────────────────


def grad_fd(
    spec: AnsatzSpec, shard: LabeledDataset, theta: np.ndarray, step: float = DEFAULT_FD_STEP
) -> np.ndarray:
    """Central finite-difference gradient of ``local_loss``."""
    if step <= 0:
        raise ValueError(f"finite-difference step must be > 0, got {step}")
    base = spec.check_theta(theta)
    grad = np.zeros_like(base)
    for p in range(base.shape[0]):
        shifted = base.copy()
        shifted[p] = base[p] + step
        plus = local_loss(spec, shard, shifted)
        shifted[p] = base[p] - step
        minus = local_loss(spec, shard, shifted)
        grad[p] = (plus - minus) / (2.0 * step)
    return grad


def kernel_derivatives(spec: AnsatzSpec, X: np.ndarray, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Kernel matrix and its exact derivative with respect to every parameter.

    Returns ``(K, dK)`` with ``dK[p] = dK/dtheta_p``. Each theta_p occurs once in
    ``U(x_j)`` and once in ``U^dagger(x_i)``; the shift rule is applied to each
    occurrence separately, which needs ``psi(x; theta +/- pi/2 e_p)`` for every
    point.
    """
    features = spec.check_features(X)
    params = spec.check_theta(theta)
    phases = data_phases(spec, features)
    states = encode_batch(spec, features, params, phases)
    K = gram_from_states(states)
    dK = np.zeros((params.shape[0],) + K.shape)
    for p in range(params.shape[0]):
        shifted = params.copy()
        shifted[p] = params[p] + _SHIFT
        plus = _fidelities(states, encode_batch(spec, features, shifted, phases))
        shifted[p] = params[p] - _SHIFT
        minus = _fidelities(states, encode_batch(spec, features, shifted, phases))
        half = 0.5 * (plus - minus)
        dK[p] = half + half.T
    return K, dK


def _loss_gradient(K: np.ndarray, dK: np.ndarray, K_star: np.ndarray) -> np.ndarray:
    """Gradient of ``-alignment(K, K*)`` given the parameter derivatives of ``K``."""
    k_norm = np.linalg.norm(K)
    t_norm = np.linalg.norm(K_star)
    if k_norm == 0.0 or t_norm == 0.0:
        raise DegenerateInputError("alignment of a zero-norm matrix is undefined")
    value = np.sum(K * K_star) / (k_norm * t_norm)
    d_inner = np.einsum("pij,ij->p", dK, K_star)
    d_norm_sq = np.einsum("pij,ij->p", dK, K)
    d_align = d_inner / (k_norm * t_norm) - value * d_norm_sq / k_norm**2
    return -d_align


def grad_param_shift(spec: AnsatzSpec, shard: LabeledDataset, theta: np.ndarray) -> np.ndarray:
    """Exact gradient of ``local_loss`` via the parameter-shift rule."""
    _check_shard(shard)
    K, dK = kernel_derivatives(spec, shard.features, theta)
    return _loss_gradient(K, dK, target_kernel(shard.labels))


def sample_subset(n_points: int, q: int, seed: int | np.random.SeedSequence) -> np.ndarray:
    """Sorted indices of ``q`` points drawn uniformly without replacement."""
    if not 1 <= q <= n_points:
        raise ValueError(f"batch size q must be in [1, {n_points}], got {q}")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n_points, size=q, replace=False))


def grad_stochastic(
    spec: AnsatzSpec,
    shard: LabeledDataset,
    theta: np.ndarray,
    q: int,
    rng_seed: int | np.random.SeedSequence,
) -> np.ndarray:
    """Parameter-shift gradient over a seeded random subset of ``q`` shard points."""
    _check_shard(shard)
    return grad_param_shift(spec, shard.subset(sample_subset(len(shard), q, rng_seed)), theta)


def kernel_matrix_parallel(
    spec: AnsatzSpec, X: np.ndarray, theta: np.ndarray, workers: int = 1, chunk: int = 64
) -> np.ndarray:
    """``kernel_matrix`` with encoding split over a thread pool.

    Agrees with the single-threaded result to floating-point round-off.
    """
    features = spec.check_features(X)
    if workers <= 1 or features.shape[0] <= chunk:
        return kernel_matrix(spec, features, theta)
    blocks = [features[i : i + chunk] for i in range(0, features.shape[0], chunk)]
    logger.debug(
        "encoding %d point(s) in %d block(s) on %d worker(s)", features.shape[0], len(blocks), workers
    )
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda block: encode_batch(spec, block, theta), blocks))
    return gram_from_states(np.vstack(parts))
