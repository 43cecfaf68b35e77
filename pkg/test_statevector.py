#!/usr/bin/env python3
"""
Tests for the dense statevector simulator.
"""
import sys
from math import pi, sqrt

import numpy as np
from numpy.testing import assert_allclose

from simulation.statevector import (
    Gate, StateVector, apply_gate, expectation_weighted_z, init_zero_state, rotation_matrices,
    simulate, simulate_batch, z_expectations, zz_expectations
)
from utils.exceptions import SimulationError


def test_zero_state():
    state = init_zero_state(3)
    assert state.amplitudes.shape == (8,), "3 qubits should give 8 amplitudes"
    assert state.amplitudes[0] == 1.0, "zero state should start in index 0"
    assert abs(state.norm() - 1.0) < 1e-15


def test_qubit_zero_is_least_significant():
    state = simulate(2, [Gate('H', (0,))])
    assert_allclose(state.amplitudes, [1 / sqrt(2), 1 / sqrt(2), 0, 0], atol=1e-15)

    state = simulate(2, [Gate('H', (1,))])
    assert_allclose(state.amplitudes, [1 / sqrt(2), 0, 1 / sqrt(2), 0], atol=1e-15)


def test_cnot_flips_target_when_control_set():
    state = simulate(2, [Gate('RX', (0,), pi), Gate('CNOT', (0, 1))])
    assert_allclose(state.probabilities(), [0, 0, 0, 1], atol=1e-15)

    untouched = simulate(2, [Gate('CNOT', (0, 1))])
    assert_allclose(untouched.probabilities(), [1, 0, 0, 0], atol=1e-15)


def test_rotation_expectations():
    for theta in np.linspace(-pi, pi, 7):
        for kind in ('RX', 'RY'):
            state = simulate(1, [Gate(kind, (0,), float(theta))])
            z = z_expectations(state.amplitudes.reshape(1, -1), 1)[0, 0]
            assert abs(z - np.cos(theta)) < 1e-12, f"{kind}({theta}) should give <Z> = cos(theta)"


def test_rotation_matrices_are_unitary():
    angles = np.array([0.3, -1.2, 2.5])
    for kind in ('RX', 'RY', 'RZ'):
        matrices = rotation_matrices(kind, angles)
        assert matrices.shape == (3, 2, 2)
        for matrix in matrices:
            assert_allclose(matrix @ matrix.conj().T, np.eye(2), atol=1e-14)
    try:
        rotation_matrices('H', angles)
        assert False, "H is not a rotation gate"
    except SimulationError:
        pass


def test_inverse_gate_restores_state():
    gates = [Gate('H', (0,)), Gate('RY', (1,), 0.7), Gate('CNOT', (0, 2)), Gate('RX', (2,), -1.1)]
    inverse = [gate.inverse() for gate in reversed(gates)]
    state = simulate(3, gates + inverse)
    assert_allclose(state.amplitudes, init_zero_state(3).amplitudes, atol=1e-14)


def test_apply_gate_leaves_input_untouched():
    state = init_zero_state(2)
    after = apply_gate(state, Gate('H', (1,)))
    assert state.amplitudes[0] == 1.0, "input state must not change"
    assert abs(after.amplitudes[2] - 1 / sqrt(2)) < 1e-15
    assert not state.amplitudes.flags.writeable, "amplitudes are read-only"


def test_weighted_z_and_zz():
    state = simulate(2, [Gate('RY', (0,), 0.4), Gate('RY', (1,), 1.3)])
    value = expectation_weighted_z(state, {0: 2.0, 1: -0.5})
    assert abs(value - (2.0 * np.cos(0.4) - 0.5 * np.cos(1.3))) < 1e-12

    zz = zz_expectations(state.amplitudes.reshape(1, -1), 2, ancilla=1)[0]
    assert abs(zz[0] - np.cos(0.4) * np.cos(1.3)) < 1e-12, "product state factorizes"
    assert abs(zz[1] - 1.0) < 1e-12, "Z_a Z_a is the identity"


def test_batch_matches_gate_by_gate():
    rng = np.random.default_rng(7)
    structure = [('H', (0,)), ('RY', (1,)), ('CNOT', (0, 1)), ('RX', (2,)), ('CNOT', (1, 2)), ('RZ', (0,))]
    table = rng.uniform(-pi, pi, (5, len(structure)))
    batch = simulate_batch(3, structure, table)
    for row, angles in zip(batch, table):
        gates = [Gate(kind, targets, float(a) if kind in ('RX', 'RY', 'RZ') else None)
                 for (kind, targets), a in zip(structure, angles)]
        assert_allclose(row, simulate(3, gates).amplitudes, atol=1e-13)

    reduced = simulate_batch(3, structure, table, reducer=lambda amps: z_expectations(amps, 3))
    assert reduced.shape == (5, 3), "reducer output should be concatenated per row"


def test_shared_prefix_matches_full_batch():
    rng = np.random.default_rng(8)
    structure = [('H', (0,)), ('RY', (1,)), ('CNOT', (0, 1)), ('RX', (2,)), ('CNOT', (1, 2)), ('RZ', (0,))]
    prefixes = rng.uniform(-pi, pi, (2, 3))
    table = np.hstack([np.repeat(prefixes, 3, axis=0), rng.uniform(-pi, pi, (6, 3))])
    full = simulate_batch(3, structure, table)
    for split in (1, 3, len(structure)):
        assert_allclose(simulate_batch(3, structure, table, shared_prefix=split), full, atol=1e-13)
    try:
        simulate_batch(3, structure, table, shared_prefix=7)
        assert False, "a prefix longer than the circuit is invalid"
    except SimulationError:
        pass


def test_invalid_inputs_raise():
    bad = [
        lambda: Gate('CNOT', (1, 1)),
        lambda: Gate('RX', (0,)),
        lambda: Gate('H', (0,), 0.5),
        lambda: Gate('SWAP', (0, 1)),
        lambda: apply_gate(init_zero_state(2), Gate('H', (2,))),
        lambda: init_zero_state(0),
        lambda: StateVector(2, np.zeros(3)),
        lambda: simulate_batch(2, [('RX', (0,))], np.zeros((1, 2))),
    ]
    for make in bad:
        try:
            make()
            assert False, "expected SimulationError"
        except SimulationError:
            pass


if __name__ == "__main__":
    failures = 0
    for name, test in list(globals().items()):
        if name.startswith('test_') and callable(test):
            try:
                test()
                print(f"✓ {name}")
            except AssertionError as e:
                failures += 1
                print(f"✗ {name}: {e}")
    sys.exit(1 if failures else 0)
