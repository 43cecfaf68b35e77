"""
Dense statevector simulation: state preparation, gate application and exact Z expectations.

Qubit 0 is the least-significant bit of the basis-state index. Rotations follow
R(theta) = exp(-i theta P / 2). Expectations are computed exactly from the amplitudes.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from math import sqrt
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np

from config import SIMULATOR_CONFIG
from utils.exceptions import SimulationError

logger = logging.getLogger(__name__)

ROTATION_GATES = ('RX', 'RY', 'RZ')
FIXED_GATES = ('H', 'CNOT')
GATE_KINDS = ROTATION_GATES + FIXED_GATES

_HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / sqrt(2)


@dataclass(frozen=True)
class Gate:
    """A concrete gate: kind, qubit targets and (for rotations) an angle in radians."""
    kind: str
    targets: Tuple[int, ...]
    parameter: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'targets', tuple(int(q) for q in self.targets))
        if self.kind not in GATE_KINDS:
            raise SimulationError(f"unknown gate kind '{self.kind}'")
        arity = 2 if self.kind == 'CNOT' else 1
        if len(self.targets) != arity:
            raise SimulationError(f"{self.kind} takes {arity} qubit index(es), got {self.targets}")
        if self.kind == 'CNOT' and self.targets[0] == self.targets[1]:
            raise SimulationError(f"CNOT control and target must differ, got {self.targets}")
        if any(q < 0 for q in self.targets):
            raise SimulationError(f"negative qubit index in {self.targets}")
        if self.kind in ROTATION_GATES and self.parameter is None:
            raise SimulationError(f"{self.kind} requires an angle")
        if self.kind in FIXED_GATES and self.parameter is not None:
            raise SimulationError(f"{self.kind} takes no angle")

    def inverse(self) -> 'Gate':
        """Inverse gate (negated angle; H and CNOT are self-inverse)."""
        if self.kind in ROTATION_GATES:
            return Gate(self.kind, self.targets, -self.parameter)
        return self


@dataclass(frozen=True, eq=False)
class StateVector:
    """Dense amplitude vector over ``n_qubits`` qubits. The amplitude array is read-only."""
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amplitudes = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amplitudes.shape[0] != 2 ** self.n_qubits:
            raise SimulationError(
                f"expected {2 ** self.n_qubits} amplitudes for {self.n_qubits} qubits, "
                f"got {amplitudes.shape[0]}"
            )
        amplitudes.setflags(write=False)
        object.__setattr__(self, 'amplitudes', amplitudes)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def __repr__(self):
        return f"<StateVector(n_qubits={self.n_qubits})>"


def _check_qubit_count(n_qubits: int):
    if n_qubits < 1:
        raise SimulationError(f"n_qubits must be >= 1, got {n_qubits}")
    if n_qubits > SIMULATOR_CONFIG['max_qubits']:
        raise SimulationError(
            f"n_qubits={n_qubits} exceeds the dense simulator limit of {SIMULATOR_CONFIG['max_qubits']}"
        )


def _check_targets(n_qubits: int, targets: Sequence[int]):
    for qubit in targets:
        if not 0 <= qubit < n_qubits:
            raise SimulationError(f"qubit index {qubit} out of range for {n_qubits} qubits")


def rotation_matrices(kind: str, angles) -> np.ndarray:
    """2x2 rotation matrices for an array of angles; result shape is angles.shape + (2, 2)."""
    angles = np.asarray(angles, dtype=float)
    c = np.cos(angles / 2)
    s = np.sin(angles / 2)
    matrices = np.zeros(angles.shape + (2, 2), dtype=complex)
    if kind == 'RX':
        matrices[..., 0, 0] = c
        matrices[..., 0, 1] = -1j * s
        matrices[..., 1, 0] = -1j * s
        matrices[..., 1, 1] = c
    elif kind == 'RY':
        matrices[..., 0, 0] = c
        matrices[..., 0, 1] = -s
        matrices[..., 1, 0] = s
        matrices[..., 1, 1] = c
    elif kind == 'RZ':
        matrices[..., 0, 0] = np.exp(-0.5j * angles)
        matrices[..., 1, 1] = np.exp(0.5j * angles)
    else:
        raise SimulationError(f"'{kind}' is not a rotation gate")
    return matrices


@lru_cache(maxsize=None)
def _cnot_permutation(n_qubits: int, control: int, target: int) -> np.ndarray:
    index = np.arange(2 ** n_qubits)
    permutation = index.copy()
    controlled = ((index >> control) & 1).astype(bool)
    permutation[controlled] ^= 1 << target
    permutation.setflags(write=False)
    return permutation


def _apply_single_qubit(amplitudes: np.ndarray, n_qubits: int, qubit: int,
                        matrices: np.ndarray) -> np.ndarray:
    rows = amplitudes.shape[0]
    view = amplitudes.reshape(rows, 2 ** (n_qubits - qubit - 1), 2, 2 ** qubit)
    low, high = view[:, :, 0, :], view[:, :, 1, :]
    # one matrix for every row, or one per row
    entries = matrices.reshape(-1, 2, 2)[:, :, :, None, None]
    result = np.empty_like(view)
    result[:, :, 0, :] = entries[:, 0, 0] * low + entries[:, 0, 1] * high
    result[:, :, 1, :] = entries[:, 1, 0] * low + entries[:, 1, 1] * high
    return result.reshape(rows, -1)


def _apply_to_rows(amplitudes: np.ndarray, n_qubits: int, kind: str, targets: Tuple[int, ...],
                   angles: Optional[np.ndarray]) -> np.ndarray:
    if kind == 'CNOT':
        return amplitudes[:, _cnot_permutation(n_qubits, targets[0], targets[1])]
    if kind == 'H':
        return _apply_single_qubit(amplitudes, n_qubits, targets[0], _HADAMARD)
    return _apply_single_qubit(amplitudes, n_qubits, targets[0], rotation_matrices(kind, angles))


def init_zero_state(n_qubits: int) -> StateVector:
    """|0...0> on ``n_qubits`` qubits."""
    _check_qubit_count(n_qubits)
    amplitudes = np.zeros(2 ** n_qubits, dtype=complex)
    amplitudes[0] = 1.0
    return StateVector(n_qubits, amplitudes)


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    """Return the state after ``gate``; the input state is left untouched."""
    _check_targets(state.n_qubits, gate.targets)
    angles = None if gate.parameter is None else np.array([gate.parameter])
    rows = _apply_to_rows(state.amplitudes.reshape(1, -1), state.n_qubits, gate.kind,
                          gate.targets, angles)
    return StateVector(state.n_qubits, rows[0])


def simulate(n_qubits: int, gates: Sequence[Gate]) -> StateVector:
    """Apply ``gates`` in order to the zero state."""
    state = init_zero_state(n_qubits)
    for gate in gates:
        state = apply_gate(state, gate)
    return state


def expectation_weighted_z(state: StateVector, weights: Mapping[int, float]) -> float:
    """Sum_j w_j <Z_j> over the weighted qubits."""
    _check_targets(state.n_qubits, list(weights))
    z_values = z_expectations(state.amplitudes.reshape(1, -1), state.n_qubits)[0]
    total = 0.0
    for qubit in sorted(weights):
        total += weights[qubit] * z_values[qubit]
    return float(total)


@lru_cache(maxsize=None)
def _z_signs(n_qubits: int) -> np.ndarray:
    index = np.arange(2 ** n_qubits)
    bits = (index[:, None] >> np.arange(n_qubits)[None, :]) & 1
    signs = (1 - 2 * bits).astype(float)
    signs.setflags(write=False)
    return signs


def z_expectations(amplitudes: np.ndarray, n_qubits: int) -> np.ndarray:
    """Per-qubit <Z_j> for every row of a (rows, 2**n) amplitude table."""
    probabilities = np.abs(amplitudes) ** 2
    return probabilities @ _z_signs(n_qubits)


def zz_expectations(amplitudes: np.ndarray, n_qubits: int, ancilla: int) -> np.ndarray:
    """Per-qubit <Z_ancilla Z_j> for every row of a (rows, 2**n) amplitude table."""
    signs = _z_signs(n_qubits)
    probabilities = np.abs(amplitudes) ** 2
    return probabilities @ (signs * signs[:, ancilla:ancilla + 1])


def _run_gates(amplitudes: np.ndarray, n_qubits: int, structure, angles: np.ndarray,
               first: int = 0) -> np.ndarray:
    for column in range(first, len(structure)):
        kind, targets = structure[column]
        amplitudes = _apply_to_rows(amplitudes, n_qubits, kind, tuple(targets), angles[:, column])
    return amplitudes


def simulate_batch(n_qubits: int, structure: Sequence[Tuple[str, Tuple[int, ...]]],
                   angle_table: np.ndarray, reducer=None, shared_prefix: int = 0) -> np.ndarray:
    """
    Run one gate structure for many angle rows.

    ``structure`` lists (kind, targets) per gate and ``angle_table`` has one row per circuit and
    one column per gate (ignored for H and CNOT). Each row starts from the zero state. When
    ``reducer`` is given it is applied to every chunk of final amplitudes and the reduced chunks
    are concatenated, so large batches never hold all amplitudes at once.

    The first ``shared_prefix`` gates run once per distinct prefix of angles; rows that agree on
    those columns continue from the same intermediate state.
    """
    _check_qubit_count(n_qubits)
    angle_table = np.atleast_2d(np.asarray(angle_table, dtype=float))
    if angle_table.shape[1] != len(structure):
        raise SimulationError(
            f"angle table has {angle_table.shape[1]} columns for {len(structure)} gates"
        )
    if not 0 <= shared_prefix <= len(structure):
        raise SimulationError(f"shared prefix of {shared_prefix} gates in a {len(structure)}-gate circuit")
    for kind, targets in structure:
        if kind not in GATE_KINDS:
            raise SimulationError(f"unknown gate kind '{kind}'")
        _check_targets(n_qubits, targets)

    dimension = 2 ** n_qubits
    chunk_rows = max(1, SIMULATOR_CONFIG['chunk_amplitudes'] // dimension)
    prefix_states, prefix_index = None, None
    if shared_prefix and angle_table.shape[0] > 1:
        prefixes, prefix_index = np.unique(angle_table[:, :shared_prefix], axis=0, return_inverse=True)
        prefix_index = prefix_index.reshape(-1)
        prefix_states = simulate_batch(n_qubits, structure[:shared_prefix], prefixes)

    results = []
    for start in range(0, angle_table.shape[0], chunk_rows):
        angles = angle_table[start:start + chunk_rows]
        if prefix_states is None:
            amplitudes = np.zeros((angles.shape[0], dimension), dtype=complex)
            amplitudes[:, 0] = 1.0
            amplitudes = _run_gates(amplitudes, n_qubits, structure, angles)
        else:
            amplitudes = prefix_states[prefix_index[start:start + chunk_rows]]
            amplitudes = _run_gates(amplitudes, n_qubits, structure, angles, shared_prefix)
        results.append(amplitudes if reducer is None else reducer(amplitudes))
    if not results:
        return np.zeros((0, dimension), dtype=complex)
    return np.concatenate(results, axis=0)
