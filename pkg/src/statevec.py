"""Statevec module – dense n-qubit statevector simulator.

Qubit 0 is the most significant bit of the basis index, so the amplitude of
``|q0 q1 ... q(n-1)>`` sits at index ``q0*2**(n-1) + ... + q(n-1)``.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from src.errors import CapacityError, DimensionError, GateError

MAX_QUBITS = 20

_ONE_QUBIT = {"H", "RX", "RY", "RZ"}
_TWO_QUBIT = {"RZZ", "CNOT"}
_ROTATIONS = {"RX", "RY", "RZ", "RZZ"}

_H = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / math.sqrt(2.0)
_CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]],
    dtype=np.complex128,
)


@dataclass(frozen=True)
class Gate:
    """One gate of the fixed set {H, RX, RY, RZ, RZZ, CNOT}.

    For CNOT ``targets[0]`` is the control. ``angle`` is in radians and must be
    ``None`` for H and CNOT.
    """

    kind: str
    targets: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if self.kind not in _ONE_QUBIT | _TWO_QUBIT:
            raise GateError(f"unknown gate kind {self.kind!r}")
        arity = 1 if self.kind in _ONE_QUBIT else 2
        if len(self.targets) != arity:
            raise GateError(f"{self.kind} acts on {arity} qubit(s), got targets {self.targets}")
        if any(t < 0 for t in self.targets):
            raise GateError(f"negative qubit index in {self.targets}")
        if arity == 2 and self.targets[0] == self.targets[1]:
            raise GateError(f"{self.kind} needs two distinct qubits, got {self.targets}")
        if self.kind in _ROTATIONS:
            if self.angle is None or not math.isfinite(self.angle):
                raise GateError(f"{self.kind} needs a finite angle, got {self.angle}")
        elif self.angle is not None:
            raise GateError(f"{self.kind} takes no angle")

    def matrix(self) -> np.ndarray:
        """Return the unitary in the computational basis of ``targets`` (in order)."""
        if self.kind == "H":
            return _H
        if self.kind == "CNOT":
            return _CNOT
        half = 0.5 * float(self.angle)  # type: ignore[arg-type]
        c, s = math.cos(half), math.sin(half)
        if self.kind == "RX":
            return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)
        if self.kind == "RY":
            return np.array([[c, -s], [s, c]], dtype=np.complex128)
        minus, plus = np.exp(-1j * half), np.exp(1j * half)
        if self.kind == "RZ":
            return np.diag([minus, plus])
        return np.diag([minus, plus, plus, minus])

    def inverse(self) -> Gate:
        if self.angle is None:
            return self
        return Gate(self.kind, self.targets, -self.angle)


def h(q: int) -> Gate:
    return Gate("H", (q,))


def rx(q: int, angle: float) -> Gate:
    return Gate("RX", (q,), angle)


def ry(q: int, angle: float) -> Gate:
    return Gate("RY", (q,), angle)


def rz(q: int, angle: float) -> Gate:
    return Gate("RZ", (q,), angle)


def rzz(a: int, b: int, angle: float) -> Gate:
    return Gate("RZZ", (a, b), angle)


def cnot(control: int, target: int) -> Gate:
    return Gate("CNOT", (control, target))


@dataclass(frozen=True, eq=False)
class StateVector:
    """Amplitudes of an n-qubit register; read-only once constructed."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        _check_capacity(self.n_qubits)
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.shape[0] != 2 ** self.n_qubits:
            raise DimensionError(
                f"{self.n_qubits} qubit(s) need {2 ** self.n_qubits} amplitudes, "
                f"got {amps.shape[0]}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def _check_capacity(n_qubits: int) -> None:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise CapacityError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")


def zero_state(n_qubits: int) -> StateVector:
    """Return ``|0...0>`` on ``n_qubits`` qubits."""
    _check_capacity(n_qubits)
    amps = np.zeros(2 ** n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def apply_matrix(
    amplitudes: np.ndarray, matrix: np.ndarray, targets: Sequence[int], n_qubits: int
) -> np.ndarray:
    """Apply a ``2**k x 2**k`` matrix to ``targets`` of one or many states.

    ``amplitudes`` has shape ``(..., 2**n_qubits)``; any leading axes are treated
    as a batch. Never builds the full ``2**n x 2**n`` operator.
    """
    batch_shape = amplitudes.shape[:-1]
    nb = len(batch_shape)
    k = len(targets)
    tensor = amplitudes.reshape(batch_shape + (2,) * n_qubits)
    gate = matrix.reshape((2,) * (2 * k))
    state_axes = [nb + q for q in targets]
    out = np.tensordot(gate, tensor, axes=(list(range(k, 2 * k)), state_axes))
    out = np.moveaxis(out, list(range(k)), state_axes)
    return out.reshape(batch_shape + (2 ** n_qubits,))


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    """Return ``gate`` applied to ``state``; the input is left untouched."""
    for t in gate.targets:
        if t >= state.n_qubits:
            raise GateError(
                f"qubit index {t} out of range for a {state.n_qubits}-qubit state"
            )
    amps = apply_matrix(state.amplitudes, gate.matrix(), gate.targets, state.n_qubits)
    return StateVector(state.n_qubits, amps)


def apply_circuit(state: StateVector, gates: Iterable[Gate]) -> StateVector:
    for gate in gates:
        state = apply_gate(state, gate)
    return state


def inner_product(a: StateVector, b: StateVector) -> complex:
    """Return ``<a|b>`` (``a`` is conjugated)."""
    if a.n_qubits != b.n_qubits:
        raise DimensionError(f"cannot overlap {a.n_qubits}- and {b.n_qubits}-qubit states")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def prob_zero(state: StateVector) -> float:
    """Probability of reading ``|0...0>``."""
    return float(abs(state.amplitudes[0]) ** 2)


def z_signs(n_qubits: int) -> np.ndarray:
    """Eigenvalues of ``Z_q`` on every basis state, shape ``(2**n, n)``.

    Entry ``[b, q]`` is ``+1`` when qubit ``q`` is 0 in basis state ``b``.
    """
    _check_capacity(n_qubits)
    index = np.arange(2 ** n_qubits)[:, None]
    shifts = (n_qubits - 1 - np.arange(n_qubits))[None, :]
    bits = (index >> shifts) & 1
    return 1.0 - 2.0 * bits
