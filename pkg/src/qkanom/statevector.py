"""Minimal dense statevector simulator for the encoding circuits.

Supports exactly the gate set the dense-angle feature map needs (Rx, Rz, U3,
CNOT) plus state preparation, inner products and seeded outcome sampling.

Conventions:
  * qubit 0 is the least-significant bit of the basis index, so the basis
    state ``|q_{n-1} ... q_1 q_0>`` sits at index ``sum_k q_k * 2**k``;
  * gates keep their global phase (``Rx(t) = exp(-i t X/2)``,
    ``Rz(p) = exp(-i p Z/2)``), so simulated states match an explicit
    matrix product exactly, not just up to phase;
  * sampling uses numpy's PCG64 generator (``numpy.random.default_rng``);
    the same seed yields the same histogram on every platform.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

#: Hard cap on register width; 2**20 amplitudes is the largest allocation
#: this library will ever attempt by default.
MAX_QUBITS = 20


class GateKind(str, Enum):
    RX = "rx"
    RZ = "rz"
    U3 = "u3"
    CNOT = "cnot"


_ANGLE_COUNTS = {GateKind.RX: 1, GateKind.RZ: 1, GateKind.U3: 3, GateKind.CNOT: 0}


@dataclass(frozen=True)
class GateOp:
    """A single gate application: kind, target qubit, optional control, radians."""

    kind: GateKind
    target: int
    control: int | None = None
    angles: tuple[float, ...] = ()

    def __post_init__(self):
        expected = _ANGLE_COUNTS[self.kind]
        if len(self.angles) != expected:
            raise ValueError(
                f"{self.kind.value} takes {expected} angle(s), got {len(self.angles)}"
            )
        if self.kind is GateKind.CNOT:
            if self.control is None:
                raise ValueError("cnot requires a control qubit")
            if self.control == self.target:
                raise ValueError("cnot control and target must differ")
        elif self.control is not None:
            raise ValueError(f"{self.kind.value} takes no control qubit")


def rx(target: int, theta: float) -> GateOp:
    return GateOp(GateKind.RX, target, angles=(float(theta),))


def rz(target: int, phi: float) -> GateOp:
    return GateOp(GateKind.RZ, target, angles=(float(phi),))


def u3(target: int, theta: float, phi: float, lam: float) -> GateOp:
    return GateOp(GateKind.U3, target, angles=(float(theta), float(phi), float(lam)))


def cnot(control: int, target: int) -> GateOp:
    return GateOp(GateKind.CNOT, target, control=control)


def inverse_gate(gate: GateOp) -> GateOp:
    """The gate whose unitary is the inverse of ``gate``'s.

    CNOT is self-inverse; rotations negate their angle; U3(t, p, l) inverts
    to U3(-t, -l, -p).
    """
    if gate.kind is GateKind.CNOT:
        return gate
    if gate.kind is GateKind.U3:
        theta, phi, lam = gate.angles
        return GateOp(GateKind.U3, gate.target, angles=(-theta, -lam, -phi))
    return GateOp(gate.kind, gate.target, angles=(-gate.angles[0],))


@dataclass(frozen=True)
class StateVector:
    """An n-qubit pure state as 2**n complex amplitudes.

    Values are treated as immutable: every operation returns a new state.
    """

    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.amplitudes.shape != (2**self.num_qubits,):
            raise ValueError(
                f"expected {2**self.num_qubits} amplitudes for {self.num_qubits} "
                f"qubit(s), got shape {self.amplitudes.shape}"
            )


def zero_state(num_qubits: int, max_qubits: int = MAX_QUBITS) -> StateVector:
    """|00...0>: amplitude 1 at basis index 0."""
    if not 1 <= num_qubits <= max_qubits:
        raise ValueError(
            f"num_qubits must be in [1, {max_qubits}], got {num_qubits}"
        )
    amplitudes = np.zeros(2**num_qubits, dtype=np.complex128)
    amplitudes[0] = 1.0
    return StateVector(num_qubits, amplitudes)


def gate_matrix(gate: GateOp) -> np.ndarray:
    """The 2x2 unitary of a single-qubit gate (CNOT has no 2x2 form)."""
    if gate.kind is GateKind.RX:
        (theta,) = gate.angles
        c, s = np.cos(theta / 2), np.sin(theta / 2)
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)
    if gate.kind is GateKind.RZ:
        (phi,) = gate.angles
        return np.array(
            [[np.exp(-0.5j * phi), 0.0], [0.0, np.exp(0.5j * phi)]],
            dtype=np.complex128,
        )
    if gate.kind is GateKind.U3:
        theta, phi, lam = gate.angles
        c, s = np.cos(theta / 2), np.sin(theta / 2)
        return np.array(
            [
                [c, -np.exp(1j * lam) * s],
                [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c],
            ],
            dtype=np.complex128,
        )
    raise ValueError(f"{gate.kind.value} has no single-qubit matrix")


def _check_qubit(index: int, num_qubits: int, role: str) -> None:
    if not 0 <= index < num_qubits:
        raise IndexError(f"{role} qubit {index} out of range for {num_qubits} qubit(s)")


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    """Apply one gate, returning the transformed state.

    Works on the (2, 2, ..., 2) tensor view of the amplitudes, so cost is
    O(2**n) rather than O(4**n); axis k of the tensor is qubit n-1-k.
    """
    n = state.num_qubits
    _check_qubit(gate.target, n, "target")

    if gate.kind is GateKind.CNOT:
        _check_qubit(gate.control, n, "control")
        tensor = state.amplitudes.reshape([2] * n)
        c_axis, t_axis = n - 1 - gate.control, n - 1 - gate.target
        tensor = np.moveaxis(tensor, (c_axis, t_axis), (0, 1)).copy()
        tensor[1] = tensor[1, ::-1]
        tensor = np.moveaxis(tensor, (0, 1), (c_axis, t_axis))
        return StateVector(n, tensor.reshape(-1))

    matrix = gate_matrix(gate)
    axis = n - 1 - gate.target
    tensor = np.moveaxis(state.amplitudes.reshape([2] * n), axis, 0)
    out = (matrix @ tensor.reshape(2, -1)).reshape(tensor.shape)
    out = np.moveaxis(out, 0, axis)
    return StateVector(n, np.ascontiguousarray(out).reshape(-1))


def apply_circuit(state: StateVector, gates) -> StateVector:
    for gate in gates:
        state = apply_gate(state, gate)
    return state


def inner_product(a: StateVector, b: StateVector) -> complex:
    """<a|b> = sum_i conj(a_i) * b_i."""
    if a.num_qubits != b.num_qubits:
        raise ValueError(
            f"qubit counts differ: {a.num_qubits} vs {b.num_qubits}"
        )
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def outcome_probabilities(state: StateVector) -> np.ndarray:
    """Born-rule probabilities |amplitude_i|**2 for every basis index."""
    return np.abs(state.amplitudes) ** 2


def sample_outcomes(state: StateVector, shots: int, seed) -> dict[int, int]:
    """Measure ``shots`` times; returns {basis index: count} for nonzero counts.

    Deterministic in ``seed`` (PCG64); the full histogram is drawn in one
    multinomial so identical seeds give identical counts regardless of the
    surrounding call pattern.
    """
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    probs = np.clip(outcome_probabilities(state), 0.0, None)
    probs /= probs.sum()
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(shots, probs)
    return {int(i): int(c) for i, c in enumerate(counts) if c}
