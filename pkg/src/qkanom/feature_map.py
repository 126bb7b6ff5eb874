"""Dense-angle encoding circuits and fidelity between encoded states.

Each qubit carries two features: an Rx rotation by the first and an Rz
rotation by the second, so ``ceil(num_features / 2)`` qubits encode the
whole vector. An optional linear CNOT chain entangles the register after
all rotations. Fidelity ``|<psi(x)|psi(y)>|**2`` is available exactly from
the statevectors or as a finite-shot estimate from the compute-uncompute
circuit ``U(y)^dag U(x) |0>``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .statevector import (
    GateOp,
    StateVector,
    apply_circuit,
    cnot,
    inner_product,
    inverse_gate,
    outcome_probabilities,
    rx,
    rz,
    sample_outcomes,
    zero_state,
)

ENTANGLEMENTS = ("linear", "none")


@dataclass(frozen=True)
class EncodedPoint:
    """A feature vector together with the state its encoding circuit prepares."""

    raw: np.ndarray
    state: StateVector


@dataclass(frozen=True)
class DenseAngleFeatureMap:
    """Two-features-per-qubit angle encoding.

    Parameters
    ----------
    num_features : int
        Length of the input vectors; inputs are expected pre-scaled to
        [0, pi] (see data_io.AngleScaler).
    entanglement : {"linear", "none"}
        "linear" applies CNOT(control=q, target=q+1) for ascending q after
        all rotations; "none" leaves the product state.
    pad_value : float
        Angle substituted for the missing final feature when num_features
        is odd (0.0 = identity rotation).
    """

    num_features: int
    entanglement: str = "linear"
    pad_value: float = 0.0

    def __post_init__(self):
        if self.num_features < 1:
            raise ValueError(f"num_features must be >= 1, got {self.num_features}")
        if self.entanglement not in ENTANGLEMENTS:
            raise ValueError(
                f"entanglement must be one of {ENTANGLEMENTS}, got {self.entanglement!r}"
            )

    @property
    def num_qubits(self) -> int:
        return math.ceil(self.num_features / 2)

    def _validate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.num_features,):
            raise ValueError(
                f"expected {self.num_features} feature(s), got shape {x.shape}"
            )
        if not np.isfinite(x).all():
            raise ValueError("feature vector contains non-finite values")
        return x

    def encoding_gates(self, x) -> list[GateOp]:
        """The gate sequence of U(x): per-qubit Rx then Rz, then the CNOT chain."""
        x = self._validate(x)
        angles = x
        if self.num_features % 2:
            angles = np.append(x, self.pad_value)
        gates = []
        for q in range(self.num_qubits):
            gates.append(rx(q, angles[2 * q]))
            gates.append(rz(q, angles[2 * q + 1]))
        if self.entanglement == "linear":
            for q in range(self.num_qubits - 1):
                gates.append(cnot(q, q + 1))
        return gates

    def encode(self, x) -> EncodedPoint:
        """U(x)|0...0> for a single feature vector."""
        x = self._validate(x)
        state = apply_circuit(zero_state(self.num_qubits), self.encoding_gates(x))
        return EncodedPoint(raw=x, state=state)

    def fidelity_exact(self, x, y) -> float:
        """|<psi(x)|psi(y)>|**2, clamped into [0, 1] against rounding."""
        overlap = inner_product(self.encode(x).state, self.encode(y).state)
        return min(abs(overlap) ** 2, 1.0)

    def uncompute_circuit(self, x, y) -> list[GateOp]:
        """Gates of U(y)^dag U(x): encode x, then y's gates reversed and inverted."""
        forward = self.encoding_gates(x)
        backward = [inverse_gate(g) for g in reversed(self.encoding_gates(y))]
        return forward + backward

    def zero_outcome_probability(self, x, y) -> float:
        """Exact all-zeros probability of U(y)^dag U(x)|0>; equals the fidelity."""
        state = apply_circuit(zero_state(self.num_qubits), self.uncompute_circuit(x, y))
        return float(outcome_probabilities(state)[0])

    def fidelity_sampled(self, x, y, shots: int, seed) -> float:
        """Finite-shot fidelity estimate from the compute-uncompute circuit.

        Runs U(y)^dag U(x)|0>, samples ``shots`` outcomes with the given
        seed and returns the all-zeros frequency. Unbiased: its expectation
        is fidelity_exact(x, y). Each call owns a fresh generator, so
        concurrent estimates never share RNG state.
        """
        if shots < 1:
            raise ValueError(f"shots must be >= 1, got {shots}")
        state = apply_circuit(zero_state(self.num_qubits), self.uncompute_circuit(x, y))
        counts = sample_outcomes(state, shots, seed)
        return counts.get(0, 0) / shots
