"""
Circuit and basic-gate accounting for the Chebyshev (KI), Hadamard-Lagrange (HL) and Sato
algorithm families, plus the live counter attached to training runs.

Basic gates are Pauli and Clifford gates. A controlled RY counts 4 basic gates and a
multi-controlled phase (two controls) counts 18.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from simulation.circuits import Circuit, FeatureMapKind
from utils.exceptions import SolverError

logger = logging.getLogger(__name__)

CIRCUIT_CLASSES = ('f', 'df', 'd2f')
SATO_OBSERVABLES = {'periodic': 3, 'dirichlet': 4, 'neumann': 5}
CRY_GATES = 4
MCP_GATES = 18


@dataclass(frozen=True)
class GateBudget:
    """Per-iteration circuit and gate counts by circuit class, with run totals."""
    circuits_by_class: Dict[str, int]
    basic_gates_per_circuit: Dict[str, int]
    total_circuits: int = 0
    total_basic_gates: int = 0

    def __post_init__(self):
        for name, count in list(self.circuits_by_class.items()) + list(self.basic_gates_per_circuit.items()):
            if count < 0:
                raise SolverError(f"negative count for '{name}'")

    @property
    def circuits_per_iteration(self) -> int:
        return sum(self.circuits_by_class.values())

    @property
    def gates_per_iteration(self) -> int:
        return sum(count * self.basic_gates_per_circuit[name]
                   for name, count in self.circuits_by_class.items())

    def accumulated(self, iterations: int) -> 'GateBudget':
        """Totals after ``iterations`` identical iterations."""
        return replace(self, total_circuits=self.circuits_per_iteration * iterations,
                       total_basic_gates=self.gates_per_iteration * iterations)

    def to_dict(self) -> dict:
        return {
            'circuits_per_iteration': self.circuits_per_iteration,
            'gates_per_iteration': self.gates_per_iteration,
            'circuits_by_class': dict(self.circuits_by_class),
            'basic_gates_per_circuit': dict(self.basic_gates_per_circuit),
            'total_circuits': self.total_circuits,
            'total_basic_gates': self.total_basic_gates,
        }


def _check_sizes(**sizes: int):
    for name, value in sizes.items():
        if value < 1:
            raise SolverError(f"{name} must be positive, got {value}")


def _check_terms(de_terms: Iterable[str]) -> Tuple[str, ...]:
    de_terms = tuple(de_terms)
    for term in de_terms:
        if term not in CIRCUIT_CLASSES:
            raise SolverError(f"unknown DE term '{term}', expected one of {CIRCUIT_CLASSES}")
    return de_terms


def ki_gates_per_circuit(n_qubits: int, n_layers: int) -> Dict[str, int]:
    gates = n_qubits + 2 * n_qubits * n_layers
    return {name: gates for name in CIRCUIT_CLASSES}


def ki_budget(n_qubits: int, n_layers: int, n_controlled_points: int,
              de_terms: Sequence[str] = CIRCUIT_CLASSES) -> GateBudget:
    """Shift-rule accounting: 1, 2N and 4N^2 circuits for f, df/dx and d2f/dx2 per theta-configuration."""
    _check_sizes(n_qubits=n_qubits, n_layers=n_layers, n_controlled_points=n_controlled_points)
    de_terms = _check_terms(de_terms)
    n_points = n_controlled_points + 1
    n_parameters = n_qubits * n_layers
    per_configuration = {'f': 1, 'df': 2 * n_qubits, 'd2f': 4 * n_qubits ** 2}
    circuits = {name: n_points * (1 + 2 * n_parameters) * (per_configuration[name] if name in de_terms else 0)
                for name in CIRCUIT_CLASSES}
    return GateBudget(circuits, ki_gates_per_circuit(n_qubits, n_layers))


def hl_gates_per_circuit(n_interp: int, structure: str) -> Dict[str, int]:
    """5N + 2P gates (+floor(N/2) for the simplified map); derivative circuits add one gate per order."""
    if structure not in ('extended', 'simplified'):
        raise SolverError(f"unknown structure '{structure}'")
    n_parameters = n_interp
    gates = 5 * n_interp + 2 * n_parameters
    if structure == 'simplified':
        gates += n_interp // 2
    return {'f': gates, 'df': gates + 1, 'd2f': gates + 2}


def hl_budget(n_interp: int, n_points: int, structure: str,
              de_terms: Sequence[str] = CIRCUIT_CLASSES) -> GateBudget:
    """Single-circuit derivatives: N and N^2 circuits for df/dx and d2f/dx2 per theta-configuration."""
    _check_sizes(n_interp=n_interp, n_points=n_points)
    de_terms = _check_terms(de_terms)
    n_parameters = n_interp
    per_configuration = {'f': 1, 'df': n_interp, 'd2f': n_interp ** 2}
    circuits = {name: n_points * (1 + 2 * n_parameters) * (per_configuration[name] if name in de_terms else 0)
                for name in CIRCUIT_CLASSES}
    return GateBudget(circuits, hl_gates_per_circuit(n_interp, structure))


@dataclass(frozen=True)
class SatoGateModel:
    """Per-circuit gate components of the Sato circuits."""
    n_observables: int
    n_parameters: int
    encoding_gates: int
    ansatz_gates: int
    shift_gates: int
    gates_per_circuit: int


def sato_gate_model(bc_kind: str, n_encoding_qubits: int = 5, n_layers: int = 5,
                    params_per_layer: int = 8, n_shift_circuits: int = 1) -> SatoGateModel:
    if bc_kind not in SATO_OBSERVABLES:
        raise SolverError(f"unknown boundary condition '{bc_kind}'")
    _check_sizes(n_encoding_qubits=n_encoding_qubits, n_layers=n_layers, params_per_layer=params_per_layer)
    if n_shift_circuits < 0:
        raise SolverError(f"n_shift_circuits must be non-negative, got {n_shift_circuits}")
    n_parameters = n_layers * params_per_layer + n_encoding_qubits
    encoding = n_encoding_qubits + 1
    ansatz = n_parameters * CRY_GATES + n_layers * MCP_GATES
    shift = 1 + n_encoding_qubits * MCP_GATES
    gates = 3 + encoding + ansatz + n_shift_circuits * shift
    return SatoGateModel(SATO_OBSERVABLES[bc_kind], n_parameters, encoding, ansatz, shift, gates)


def sato_budget(bc_kind: str, n_encoding_qubits: int = 5, n_layers: int = 5, params_per_layer: int = 8,
                n_shift_circuits: int = 1) -> GateBudget:
    """N_obs (1 + N_params) circuits per iteration, one Hadamard-test circuit per parameter."""
    model = sato_gate_model(bc_kind, n_encoding_qubits, n_layers, params_per_layer, n_shift_circuits)
    circuits = {'circuit': model.n_observables * (1 + model.n_parameters)}
    return GateBudget(circuits, {'circuit': model.gates_per_circuit})


def gate_ratio(numerator: GateBudget, denominator: GateBudget) -> float:
    """Gates-per-iteration ratio of two budgets."""
    if denominator.gates_per_iteration == 0:
        raise SolverError("denominator budget has no gates")
    return numerator.gates_per_iteration / denominator.gates_per_iteration


def circuit_gate_model(map_kind: FeatureMapKind, n_theta: int) -> Dict[str, int]:
    """Closed-form gates per circuit class for the circuit family of ``map_kind``."""
    if map_kind.is_lagrange:
        return hl_gates_per_circuit(map_kind.n_qubits, map_kind.structure)
    return ki_gates_per_circuit(map_kind.n_qubits, max(1, n_theta // map_kind.n_qubits))


def built_gates_per_circuit(circuit: Circuit) -> Dict[str, int]:
    """Gates per circuit class as simulated; derivative circuits are angle-shifted copies of the f circuit."""
    return {name: len(circuit.gates) for name in CIRCUIT_CLASSES}


@dataclass
class CircuitCounter:
    """
    Live circuit and gate counts; one ``close_iteration`` per optimizer iteration.

    ``total_gates`` follows the closed-form gate model, ``total_built_gates`` the circuits
    actually simulated.
    """
    iteration_circuits: int = 0
    iteration_gates: int = 0
    iteration_built_gates: int = 0
    total_circuits: int = 0
    total_gates: int = 0
    total_built_gates: int = 0
    history: List[Tuple[int, int]] = field(default_factory=list)

    def charge(self, circuits_by_class: Dict[str, int], gates_per_circuit: Dict[str, int],
               built_gates: Optional[Dict[str, int]] = None):
        for name, count in circuits_by_class.items():
            self.iteration_circuits += count
            self.iteration_gates += count * gates_per_circuit[name]
            if built_gates is not None:
                self.iteration_built_gates += count * built_gates[name]

    def close_iteration(self) -> Tuple[int, int]:
        closed = (self.iteration_circuits, self.iteration_gates)
        self.total_circuits += self.iteration_circuits
        self.total_gates += self.iteration_gates
        self.total_built_gates += self.iteration_built_gates
        self.history.append(closed)
        self.iteration_circuits = 0
        self.iteration_gates = 0
        self.iteration_built_gates = 0
        return closed
