"""Simulator unit tests against closed forms and a Kronecker-product oracle."""

import numpy as np
import pytest

from qkanom.statevector import (
    GateKind,
    GateOp,
    apply_circuit,
    apply_gate,
    cnot,
    gate_matrix,
    inner_product,
    inverse_gate,
    outcome_probabilities,
    rx,
    rz,
    sample_outcomes,
    u3,
    zero_state,
)


def kron_oracle(gate: GateOp, num_qubits: int) -> np.ndarray:
    """Full 2^n x 2^n unitary built independently of apply_gate.

    Qubit 0 is the least-significant bit, so the Kronecker product runs
    from qubit n-1 down to qubit 0.
    """
    if gate.kind is GateKind.CNOT:
        dim = 2**num_qubits
        matrix = np.zeros((dim, dim), dtype=complex)
        for col in range(dim):
            row = col
            if (col >> gate.control) & 1:
                row = col ^ (1 << gate.target)
            matrix[row, col] = 1.0
        return matrix
    single = gate_matrix(gate)
    matrix = np.array([[1.0]], dtype=complex)
    for q in range(num_qubits - 1, -1, -1):
        matrix = np.kron(matrix, single if q == gate.target else np.eye(2))
    return matrix


def random_gate(rng, num_qubits: int) -> GateOp:
    kind = rng.choice(["rx", "rz", "u3", "cnot"]) if num_qubits > 1 else (
        rng.choice(["rx", "rz", "u3"])
    )
    target = int(rng.integers(num_qubits))
    if kind == "cnot":
        control = int(rng.integers(num_qubits - 1))
        if control >= target:
            control += 1
        return cnot(control, target)
    angles = rng.uniform(-2 * np.pi, 2 * np.pi, size=3)
    if kind == "rx":
        return rx(target, angles[0])
    if kind == "rz":
        return rz(target, angles[0])
    return u3(target, *angles)


def random_state(rng, num_qubits: int):
    state = zero_state(num_qubits)
    for _ in range(3 * num_qubits):
        state = apply_gate(state, random_gate(rng, num_qubits))
    return state


class TestZeroState:
    def test_one_qubit(self):
        np.testing.assert_array_equal(zero_state(1).amplitudes, [1.0 + 0j, 0.0])

    def test_two_qubits(self):
        np.testing.assert_array_equal(zero_state(2).amplitudes, [1, 0, 0, 0])

    def test_norm_six_qubits(self):
        assert np.linalg.norm(zero_state(6).amplitudes) == 1.0

    @pytest.mark.parametrize("bad", [0, -1, 21])
    def test_capacity_errors(self, bad):
        with pytest.raises(ValueError):
            zero_state(bad)

    def test_configurable_cap(self):
        assert zero_state(21, max_qubits=21).num_qubits == 21


class TestApplyGate:
    def test_rx_pi_flips(self):
        state = apply_gate(zero_state(1), rx(0, np.pi))
        np.testing.assert_allclose(state.amplitudes, [0.0, -1.0j], atol=1e-15)

    def test_rz_phase_on_zero(self):
        phi = 0.7
        state = apply_gate(zero_state(1), rz(0, phi))
        np.testing.assert_allclose(
            state.amplitudes, [np.exp(-0.5j * phi), 0.0], atol=1e-15
        )

    def test_cnot_truth_table(self):
        # |01> (basis index 1, qubit 0 set) -> |11> (index 3)
        state = apply_gate(zero_state(2), rx(0, np.pi))  # puts qubit 0 to |1>
        state = apply_gate(state, cnot(0, 1))
        probs = outcome_probabilities(state)
        np.testing.assert_allclose(probs, [0, 0, 0, 1], atol=1e-15)

    def test_u3_matches_matrix(self):
        gate = u3(0, 0.3, -1.1, 2.2)
        state = apply_gate(zero_state(1), gate)
        expected = gate_matrix(gate) @ np.array([1.0, 0.0])
        np.testing.assert_allclose(state.amplitudes, expected, atol=1e-15)

    def test_index_errors(self):
        with pytest.raises(IndexError):
            apply_gate(zero_state(2), rx(2, 0.1))
        with pytest.raises(IndexError):
            apply_gate(zero_state(2), cnot(5, 0))

    def test_input_state_not_mutated(self):
        state = zero_state(2)
        before = state.amplitudes.copy()
        apply_gate(state, cnot(0, 1))
        apply_gate(state, rx(1, 1.0))
        np.testing.assert_array_equal(state.amplitudes, before)

    def test_matches_kronecker_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            n = int(rng.integers(1, 5))
            state = random_state(rng, n)
            gate = random_gate(rng, n)
            expected = kron_oracle(gate, n) @ state.amplitudes
            result = apply_gate(state, gate).amplitudes
            np.testing.assert_allclose(result, expected, atol=1e-10)


class TestGateOpValidation:
    def test_angle_counts(self):
        with pytest.raises(ValueError):
            GateOp(GateKind.RX, 0, angles=(0.1, 0.2))
        with pytest.raises(ValueError):
            GateOp(GateKind.U3, 0, angles=(0.1,))
        with pytest.raises(ValueError):
            GateOp(GateKind.CNOT, 0, control=1, angles=(0.1,))

    def test_cnot_control_rules(self):
        with pytest.raises(ValueError):
            GateOp(GateKind.CNOT, 0)
        with pytest.raises(ValueError):
            cnot(1, 1)
        with pytest.raises(ValueError):
            GateOp(GateKind.RX, 0, control=1, angles=(0.1,))


class TestInnerProduct:
    def test_self_overlap_is_one(self):
        rng = np.random.default_rng(0)
        state = random_state(rng, 3)
        assert abs(inner_product(state, state) - 1.0) < 1e-12

    def test_orthogonal_basis_states(self):
        from qkanom.statevector import StateVector

        zero = zero_state(2)
        ones = StateVector(2, np.array([0, 0, 0, 1], dtype=np.complex128))
        assert inner_product(zero, ones) == 0.0
        via_gates = apply_circuit(zero, [rx(0, np.pi), rx(1, np.pi)])
        assert abs(inner_product(zero, via_gates)) < 1e-12

    def test_rx_half_overlap(self):
        a = apply_gate(zero_state(1), rx(0, np.pi / 2))
        b = zero_state(1)
        # <a|0> = conj(cos(pi/4)) = cos(pi/4)
        assert abs(inner_product(a, b) - np.cos(np.pi / 4)) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            inner_product(zero_state(1), zero_state(2))


class TestOutcomeProbabilities:
    def test_zero_state(self):
        np.testing.assert_array_equal(outcome_probabilities(zero_state(1)), [1.0, 0.0])

    def test_equal_superposition(self):
        state = apply_gate(zero_state(1), rx(0, np.pi / 2))
        np.testing.assert_allclose(outcome_probabilities(state), [0.5, 0.5], atol=1e-15)

    def test_six_qubit_normalization(self):
        rng = np.random.default_rng(5)
        probs = outcome_probabilities(random_state(rng, 6))
        assert probs.shape == (64,)
        assert (probs >= 0).all()
        assert abs(probs.sum() - 1.0) < 1e-10


class TestSampleOutcomes:
    def test_deterministic_state(self):
        assert sample_outcomes(zero_state(3), 100, seed=1) == {0: 100}

    def test_binomial_concentration(self):
        state = apply_gate(zero_state(1), rx(0, np.pi / 2))
        counts = sample_outcomes(state, 10**6, seed=123)
        assert 0.497 <= counts[0] / 10**6 <= 0.503

    def test_same_seed_same_histogram(self):
        rng = np.random.default_rng(9)
        state = random_state(rng, 4)
        assert sample_outcomes(state, 5000, seed=7) == sample_outcomes(state, 5000, seed=7)

    def test_zero_shots_rejected(self):
        with pytest.raises(ValueError):
            sample_outcomes(zero_state(1), 0, seed=0)

    @pytest.mark.parametrize("shots", [10**3, 10**4, 10**5])
    def test_empirical_convergence(self, shots):
        rng = np.random.default_rng(1000 + shots)
        bound = 5.0 * np.sqrt(1.0 / (4.0 * shots))
        for trial in range(5):
            state = random_state(rng, 4)
            probs = outcome_probabilities(state)
            counts = sample_outcomes(state, shots, seed=trial)
            freqs = np.zeros(16)
            for idx, c in counts.items():
                freqs[idx] = c / shots
            assert np.max(np.abs(freqs - probs)) <= bound


class TestInvariants:
    def test_norm_preserved_over_random_sequences(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(1, 7))
            state = zero_state(n)
            for _ in range(int(rng.integers(1, 51))):
                state = apply_gate(state, random_gate(rng, n))
            norm_sq = float(np.vdot(state.amplitudes, state.amplitudes).real)
            assert abs(norm_sq - 1.0) < 1e-9

    def test_gate_inverses_recover_state(self):
        rng = np.random.default_rng(77)
        for _ in range(50):
            n = int(rng.integers(1, 5))
            state = random_state(rng, n)
            gate = random_gate(rng, n)
            back = apply_gate(apply_gate(state, gate), inverse_gate(gate))
            np.testing.assert_allclose(back.amplitudes, state.amplitudes, atol=1e-10)

    def test_rx_angle_additivity(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            theta, phi = rng.uniform(-np.pi, np.pi, 2)
            state = random_state(rng, 2)
            target = int(rng.integers(2))
            two_steps = apply_gate(apply_gate(state, rx(target, theta)), rx(target, phi))
            one_step = apply_gate(state, rx(target, theta + phi))
            np.testing.assert_allclose(
                two_steps.amplitudes, one_step.amplitudes, atol=1e-10
            )
