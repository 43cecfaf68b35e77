"""
Circuit construction: gate lists with symbolic parameter slots, the Chebyshev and Lagrange
feature maps, the variational ansatz, and binding of (x, theta) to concrete angles.

Register qubits 0..n-1 carry the readout. The Lagrange maps place their encoding qubits
above the register (second register for the extended map, one ancilla for the simplified map).
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from simulation.statevector import (
    FIXED_GATES, GATE_KINDS, ROTATION_GATES, Gate, StateVector, simulate_batch
)
from utils.exceptions import CircuitError, EncodingDomainError

logger = logging.getLogger(__name__)

FEATURE_MAPS = ('chebyshev', 'lagrange_extended', 'lagrange_simplified')


@dataclass(frozen=True)
class VariableSlot:
    """Angle phi_i(x) of encoding function ``index``."""
    index: int


@dataclass(frozen=True)
class ThetaSlot:
    """Trainable angle theta_k."""
    index: int


@dataclass(frozen=True)
class Fixed:
    """Constant angle."""
    angle: float


Slot = Union[VariableSlot, ThetaSlot, Fixed]


@dataclass(frozen=True)
class CircuitGate:
    kind: str
    targets: Tuple[int, ...]
    slot: Optional[Slot] = None

    def __post_init__(self):
        object.__setattr__(self, 'targets', tuple(int(q) for q in self.targets))
        if self.kind not in GATE_KINDS:
            raise CircuitError(f"unknown gate kind '{self.kind}'")
        if self.kind in ROTATION_GATES and self.slot is None:
            raise CircuitError(f"{self.kind} gate needs a slot")
        if self.kind in FIXED_GATES and self.slot is not None:
            raise CircuitError(f"{self.kind} gate cannot carry a slot")


@dataclass(frozen=True, eq=False)
class NodeSet:
    """Interpolation nodes in [0, 1) with their normalizers rho_j = prod_{i!=j}(x_j - x_i) / 2^(n-1)."""
    nodes: Tuple[float, ...]
    rho: Tuple[float, ...] = field(init=False)

    def __post_init__(self):
        nodes = tuple(float(x) for x in self.nodes)
        if not nodes:
            raise CircuitError("node set is empty")
        for x in nodes:
            if not 0.0 <= x < 1.0:
                raise CircuitError(f"node {x} outside [0, 1)")
        for left, right in zip(nodes, nodes[1:]):
            if not left < right:
                raise CircuitError(f"nodes must be strictly increasing, got {left} then {right}")
        n = len(nodes)
        rho = []
        for j, xj in enumerate(nodes):
            product = 1.0
            for i, xi in enumerate(nodes):
                if i != j:
                    product *= xj - xi
            rho.append(product / 2 ** (n - 1))
        object.__setattr__(self, 'nodes', nodes)
        object.__setattr__(self, 'rho', tuple(rho))

    def __len__(self):
        return len(self.nodes)

    def subset(self, count: int) -> 'NodeSet':
        """The ``count`` leftmost nodes."""
        return NodeSet(self.nodes[:count])

    def basis_numerators(self, x: float) -> np.ndarray:
        """prod_{i!=j}(x - x_i) / 2^(n-1) for every j."""
        nodes = np.asarray(self.nodes)
        n = len(nodes)
        values = np.empty(n)
        for j in range(n):
            values[j] = np.prod(np.delete(x - nodes, j)) / 2 ** (n - 1)
        return values

    def __repr__(self):
        return f"<NodeSet(n={len(self.nodes)})>"


@dataclass(frozen=True)
class FeatureMapKind:
    """Which feature map a circuit uses; Lagrange kinds carry their node set."""
    name: str
    n_qubits: int
    nodes: Optional[NodeSet] = None

    def __post_init__(self):
        if self.name not in FEATURE_MAPS:
            raise CircuitError(f"unknown feature map '{self.name}'")
        if self.is_lagrange:
            if self.nodes is None:
                raise CircuitError(f"{self.name} requires a node set")
            if len(self.nodes) != self.n_qubits:
                raise CircuitError(
                    f"{self.name} register has {self.n_qubits} qubits for {len(self.nodes)} nodes"
                )
        elif self.nodes is not None:
            raise CircuitError("the Chebyshev map carries no node set")

    @classmethod
    def chebyshev(cls, n_qubits: int) -> 'FeatureMapKind':
        return cls('chebyshev', n_qubits)

    @classmethod
    def lagrange(cls, nodes: NodeSet, structure: str) -> 'FeatureMapKind':
        return cls(f'lagrange_{structure}', len(nodes), nodes)

    @property
    def is_lagrange(self) -> bool:
        return self.name != 'chebyshev'

    @property
    def structure(self) -> Optional[str]:
        return self.name.split('_', 1)[1] if self.is_lagrange else None

    def arguments(self, x: float) -> np.ndarray:
        """arccos arguments of every encoding function at ``x``."""
        if self.is_lagrange:
            return (x - np.asarray(self.nodes.nodes)) / 2.0
        return np.full(self.n_qubits, float(x))

    def angles(self, x: float) -> np.ndarray:
        """phi_i(x): 2j arccos(x) for Chebyshev (j = 1..n), arccos((x - x_i)/2) for Lagrange."""
        arguments = self.arguments(x)
        if np.any(np.abs(arguments) > 1.0) or not np.all(np.isfinite(arguments)):
            raise EncodingDomainError(f"arccos argument outside [-1, 1] at x={x}")
        if self.is_lagrange:
            return np.arccos(arguments)
        degrees = 2.0 * np.arange(1, self.n_qubits + 1)
        return degrees * np.arccos(arguments)


@dataclass(frozen=True, eq=False)
class Circuit:
    """Ordered gate list with slots; the slot table records every occurrence of every slot."""
    n_qubits: int
    gates: Tuple[CircuitGate, ...]
    map_kind: Optional[FeatureMapKind] = None
    n_theta: int = 0
    n_variables: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'gates', tuple(self.gates))
        if self.n_qubits < 1:
            raise CircuitError(f"n_qubits must be >= 1, got {self.n_qubits}")
        table: Dict[Slot, List[int]] = {}
        for position, gate in enumerate(self.gates):
            for qubit in gate.targets:
                if not 0 <= qubit < self.n_qubits:
                    raise CircuitError(f"gate {position} targets qubit {qubit} of {self.n_qubits}")
            if gate.kind == 'CNOT' and gate.targets[0] == gate.targets[1]:
                raise CircuitError(f"gate {position}: CNOT control equals target")
            slot = gate.slot
            if isinstance(slot, ThetaSlot) and not 0 <= slot.index < self.n_theta:
                raise CircuitError(f"ThetaSlot {slot.index} out of range for {self.n_theta} parameters")
            if isinstance(slot, VariableSlot) and not 0 <= slot.index < self.n_variables:
                raise CircuitError(
                    f"VariableSlot {slot.index} out of range for {self.n_variables} encoding functions"
                )
            if isinstance(slot, (ThetaSlot, VariableSlot)):
                table.setdefault(slot, []).append(position)
        object.__setattr__(self, '_slot_table', {slot: tuple(p) for slot, p in table.items()})

        kinds = [gate.kind for gate in self.gates]
        theta_pos = [p for p, g in enumerate(self.gates) if isinstance(g.slot, ThetaSlot)]
        var_pos = [p for p, g in enumerate(self.gates) if isinstance(g.slot, VariableSlot)]
        fixed_pos = [p for p, g in enumerate(self.gates) if isinstance(g.slot, Fixed)]
        object.__setattr__(self, '_theta_positions', np.array(theta_pos, dtype=int))
        object.__setattr__(self, '_theta_indices',
                           np.array([self.gates[p].slot.index for p in theta_pos], dtype=int))
        object.__setattr__(self, '_variable_positions', np.array(var_pos, dtype=int))
        object.__setattr__(self, '_variable_indices',
                           np.array([self.gates[p].slot.index for p in var_pos], dtype=int))
        object.__setattr__(self, '_fixed_positions', np.array(fixed_pos, dtype=int))
        object.__setattr__(self, '_fixed_angles',
                           np.array([self.gates[p].slot.angle for p in fixed_pos], dtype=float))
        object.__setattr__(self, '_kinds', tuple(kinds))

    @property
    def n_register(self) -> int:
        return self.map_kind.n_qubits if self.map_kind is not None else self.n_qubits

    @property
    def structure(self) -> Tuple[Tuple[str, Tuple[int, ...]], ...]:
        return tuple((gate.kind, gate.targets) for gate in self.gates)

    @property
    def theta_start(self) -> int:
        """Position of the first trainable gate; every earlier gate is independent of theta."""
        return int(self._theta_positions.min()) if self._theta_positions.size else len(self.gates)

    @property
    def slots(self) -> Tuple[Slot, ...]:
        return tuple(self._slot_table)

    def occurrences(self, slot: Slot) -> Tuple[int, ...]:
        """Gate positions carrying ``slot``."""
        if slot not in self._slot_table:
            raise CircuitError(f"{slot} does not occur in the circuit")
        positions = self._slot_table[slot]
        for position in positions:
            if self.gates[position].kind not in ROTATION_GATES:
                raise CircuitError(f"{slot} is bound to non-rotation gate {self.gates[position].kind}")
        return positions

    def gate_angles(self, x: Optional[float], theta: Sequence[float]) -> np.ndarray:
        """One angle per gate (0 for H and CNOT) with every slot resolved."""
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.shape[0] != self.n_theta:
            raise CircuitError(f"theta has {theta.shape[0]} entries, circuit expects {self.n_theta}")
        angles = np.zeros(len(self.gates))
        angles[self._theta_positions] = theta[self._theta_indices]
        angles[self._fixed_positions] = self._fixed_angles
        if self.n_variables:
            if x is None:
                raise CircuitError("circuit has encoding slots but no x was given")
            if self.map_kind is None:
                raise CircuitError("encoding slots without a feature map")
            phi = self.map_kind.angles(x)
            angles[self._variable_positions] = phi[self._variable_indices]
        return angles

    def concrete_gates(self, angles: np.ndarray) -> List[Gate]:
        """Gate objects for one resolved angle row."""
        return [
            Gate(gate.kind, gate.targets, float(angles[p]) if gate.kind in ROTATION_GATES else None)
            for p, gate in enumerate(self.gates)
        ]

    def __repr__(self):
        return (f"<Circuit(n_qubits={self.n_qubits}, gates={len(self.gates)}, "
                f"theta={self.n_theta}, variables={self.n_variables})>")


def compose(*circuits: Circuit) -> Circuit:
    """Concatenate circuits; the widest register wins, theta slots are shared by index."""
    n_qubits = max(c.n_qubits for c in circuits)
    gates = tuple(g for c in circuits for g in c.gates)
    map_kind = next((c.map_kind for c in circuits if c.map_kind is not None), None)
    return Circuit(
        n_qubits=n_qubits,
        gates=gates,
        map_kind=map_kind,
        n_theta=max(c.n_theta for c in circuits),
        n_variables=max(c.n_variables for c in circuits),
    )


def build_chebyshev_map(n_qubits: int) -> Circuit:
    """RY(2j arccos x) on qubit j-1 for j = 1..n."""
    if n_qubits < 1:
        raise CircuitError(f"n_qubits must be >= 1, got {n_qubits}")
    gates = [CircuitGate('RY', (j,), VariableSlot(j)) for j in range(n_qubits)]
    return Circuit(n_qubits, tuple(gates), FeatureMapKind.chebyshev(n_qubits), 0, n_qubits)


def _hadamard_layer(n: int) -> List[CircuitGate]:
    return [CircuitGate('H', (q,)) for q in range(n)]


def _extended_network(n: int) -> List[CircuitGate]:
    # leaves second-register qubit j holding the parity of every register bit except bit j
    network = [CircuitGate('CNOT', (k, n)) for k in range(n)]
    network += [CircuitGate('CNOT', (n, n + i)) for i in range(1, n)]
    network += [CircuitGate('CNOT', (i, n + i)) for i in range(n)]
    return network


def build_lagrange_extended(nodes: NodeSet) -> Circuit:
    """Extended Lagrange map on 2n qubits: RY(phi_j) on the second register between two CNOT networks."""
    n = len(nodes)
    if n < 2:
        raise CircuitError(f"the Lagrange map needs at least 2 nodes, got {n}")
    network = _extended_network(n)
    gates = _hadamard_layer(n) + network
    gates += [CircuitGate('RY', (n + j,), VariableSlot(j)) for j in range(n)]
    gates += list(reversed(network)) + _hadamard_layer(n)
    return Circuit(2 * n, tuple(gates), FeatureMapKind.lagrange(nodes, 'extended'), 0, n)


def build_lagrange_simplified(nodes: NodeSet) -> Circuit:
    """
    Simplified Lagrange map on n + 1 qubits with a single encoding ancilla.

    Two passes of RY/CNOT on the ancilla: phi_1 and phi_n occur once, interior phi_i twice.
    """
    n = len(nodes)
    if n < 2:
        raise CircuitError(f"the Lagrange map needs at least 2 nodes, got {n}")
    ancilla = n
    gates = _hadamard_layer(n)
    gates.append(CircuitGate('CNOT', (n - 1, ancilla)))
    for i in range(n - 1, 0, -1):
        gates.append(CircuitGate('RY', (ancilla,), VariableSlot(i - 1)))
        gates.append(CircuitGate('CNOT', (i - 1, ancilla)))
    gates.append(CircuitGate('CNOT', (n - 1, ancilla)))
    for i in range(n - 1, 0, -1):
        gates.append(CircuitGate('RY', (ancilla,), VariableSlot(i)))
        gates.append(CircuitGate('CNOT', (i - 1, ancilla)))
    gates += _hadamard_layer(n)
    return Circuit(n + 1, tuple(gates), FeatureMapKind.lagrange(nodes, 'simplified'), 0, n)


def build_lagrange_map(nodes: NodeSet, structure: str) -> Circuit:
    if structure == 'extended':
        return build_lagrange_extended(nodes)
    if structure == 'simplified':
        return build_lagrange_simplified(nodes)
    raise CircuitError(f"unknown Lagrange structure '{structure}'")


def build_ansatz(n_qubits: int, n_layers: int, entangle: bool = True) -> Circuit:
    """``n_layers`` repetitions of RX(theta) on every qubit, then the CNOT chain k -> k+1 when ``entangle``."""
    if n_qubits < 1:
        raise CircuitError(f"n_qubits must be >= 1, got {n_qubits}")
    if n_layers < 1:
        raise CircuitError(f"n_layers must be >= 1, got {n_layers}")
    gates = []
    for layer in range(n_layers):
        gates += [CircuitGate('RX', (q,), ThetaSlot(layer * n_qubits + q)) for q in range(n_qubits)]
        if entangle:
            gates += [CircuitGate('CNOT', (q, q + 1)) for q in range(n_qubits - 1)]
    return Circuit(n_qubits, tuple(gates), None, n_qubits * n_layers, 0)


def build_vqc(map_circuit: Circuit, n_layers: int) -> Circuit:
    """
    Feature map followed by the ansatz on the readout register.

    Lagrange VQCs take exactly one unentangled RX layer, so register qubit j reads
    cos(theta_j) times its own Lagrange channel.
    """
    map_kind = map_circuit.map_kind
    if map_kind is None:
        raise CircuitError("build_vqc needs a feature-map circuit")
    if map_kind.is_lagrange and n_layers != 1:
        raise CircuitError(f"Lagrange VQCs use a single ansatz layer, got {n_layers}")
    ansatz = build_ansatz(map_kind.n_qubits, n_layers, entangle=not map_kind.is_lagrange)
    return compose(map_circuit, ansatz)


def bind(circuit: Circuit, x: Optional[float], theta: Sequence[float]) -> StateVector:
    """Resolve every slot and run the circuit from the zero state."""
    angles = circuit.gate_angles(x, theta)
    amplitudes = simulate_batch(circuit.n_qubits, circuit.structure, angles[None, :])
    return StateVector(circuit.n_qubits, amplitudes[0])


def register_weights(circuit: Circuit) -> np.ndarray:
    """Cost weights on the readout register: 1/rho_j for Lagrange maps, 1 for Chebyshev."""
    map_kind = circuit.map_kind
    if map_kind is not None and map_kind.is_lagrange:
        return 1.0 / np.asarray(map_kind.nodes.rho)
    return np.ones(circuit.n_register)
