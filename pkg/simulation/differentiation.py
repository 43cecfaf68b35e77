"""
Exact derivatives of circuit expectations.

Three engines share one contract (the exact partial derivative of the weighted-Z readout):
  - shift: parameter-shift rule, +-pi/2 per gate occurrence
  - hadamard: one ancilla-controlled derivative circuit per gate occurrence, two overlap
    circuits per occurrence pair at second order
  - lagrange: one quarter-turned circuit per encoding slot (Lagrange feature maps only)

df/dx and d2f/dx2 follow by the chain rule through the encoding functions.
"""
import logging
from dataclasses import dataclass
from math import pi
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from simulation.circuits import Circuit, FeatureMapKind, Slot, VariableSlot
from simulation.statevector import (
    Gate, simulate, simulate_batch, z_expectations, zz_expectations
)
from utils.exceptions import CircuitError, EncodingDomainError

logger = logging.getLogger(__name__)

ENGINES = ('shift', 'hadamard', 'lagrange')

Weights = Union[Mapping[int, float], Sequence[float], np.ndarray]


@dataclass(frozen=True)
class EncodingDerivatives:
    """dphi_i/dx and d2phi_i/dx2 for every encoding function at one x."""
    dphi_dx: np.ndarray
    d2phi_dx2: np.ndarray


def encoding_derivatives(map_kind: FeatureMapKind, x: float) -> EncodingDerivatives:
    arguments = map_kind.arguments(x)
    if np.any(np.abs(arguments) >= 1.0):
        raise EncodingDomainError(f"encoding derivative diverges at x={x} (|argument| >= 1)")
    one_minus = 1.0 - arguments ** 2
    if map_kind.is_lagrange:
        dphi = -1.0 / (2.0 * np.sqrt(one_minus))
        d2phi = -arguments / (4.0 * one_minus ** 1.5)
    else:
        degrees = 2.0 * np.arange(1, map_kind.n_qubits + 1)
        dphi = -degrees / np.sqrt(one_minus)
        d2phi = -degrees * arguments / one_minus ** 1.5
    return EncodingDerivatives(dphi, d2phi)


def weight_vector(circuit: Circuit, weights: Weights) -> np.ndarray:
    """Cost weights as a dense vector over all circuit qubits."""
    vector = np.zeros(circuit.n_qubits)
    if isinstance(weights, Mapping):
        for qubit, weight in weights.items():
            if not 0 <= qubit < circuit.n_qubits:
                raise CircuitError(f"weight on qubit {qubit} outside the {circuit.n_qubits}-qubit circuit")
            vector[qubit] = weight
        return vector
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if weights.shape[0] > circuit.n_qubits:
        raise CircuitError(f"{weights.shape[0]} weights for a {circuit.n_qubits}-qubit circuit")
    vector[:weights.shape[0]] = weights
    return vector


def weighted_expectations(circuit: Circuit, angle_rows: np.ndarray,
                          weight_rows: np.ndarray) -> np.ndarray:
    """Sum_j w_j <Z_j> for every angle row; ``weight_rows`` broadcasts against (rows, n_qubits)."""
    n = circuit.n_qubits
    z_values = simulate_batch(n, circuit.structure, angle_rows,
                              reducer=lambda amplitudes: z_expectations(amplitudes, n))
    return np.einsum('rn,rn->r', z_values, np.broadcast_to(weight_rows, z_values.shape))


def shift_rule_partial(circuit: Circuit, x: Optional[float], theta, slot: Slot,
                       weights: Weights) -> float:
    """1/2 sum over occurrences of [C(+pi/2) - C(-pi/2)]."""
    base = circuit.gate_angles(x, theta)
    rows = []
    for position in circuit.occurrences(slot):
        for delta in (pi / 2, -pi / 2):
            row = base.copy()
            row[position] += delta
            rows.append(row)
    values = weighted_expectations(circuit, np.array(rows), weight_vector(circuit, weights))
    return float(0.5 * np.sum(values[0::2] - values[1::2]))


def _controlled_generator(kind: str, ancilla: int, target: int):
    if kind == 'RX':
        return [Gate('CNOT', (ancilla, target))]
    if kind == 'RY':
        return [Gate('RZ', (target,), -pi / 2), Gate('CNOT', (ancilla, target)),
                Gate('RZ', (target,), pi / 2)]
    return [Gate('H', (target,)), Gate('CNOT', (ancilla, target)), Gate('H', (target,))]


def hadamard_test_partial(circuit: Circuit, x: Optional[float], theta, slot: Slot,
                          weights: Weights) -> float:
    """
    Partial derivative from one derivative circuit per gate occurrence.

    An ancilla in |+> controls the rotation generator right after the occurrence; a final
    RX(pi/2) on the ancilla turns <Z_anc C> into Im<psi|C|psi_P>, the derivative of <C>.
    """
    base = circuit.gate_angles(x, theta)
    gates = circuit.concrete_gates(base)
    ancilla = circuit.n_qubits
    vector = weight_vector(circuit, weights)
    total = 0.0
    for position in circuit.occurrences(slot):
        gate = gates[position]
        sequence = [Gate('H', (ancilla,))] + gates[:position + 1]
        sequence += _controlled_generator(gate.kind, ancilla, gate.targets[0])
        sequence += gates[position + 1:] + [Gate('RX', (ancilla,), pi / 2)]
        state = simulate(ancilla + 1, sequence)
        correlations = zz_expectations(state.amplitudes.reshape(1, -1), ancilla + 1, ancilla)[0]
        total += float(np.dot(correlations[:ancilla], vector))
    return total


def _hadamard_overlap(circuit: Circuit, gates: List[Gate], vector: np.ndarray,
                      branch0: Sequence[int], branch1: Sequence[int]) -> float:
    """
    Re<psi_0|C|psi_1>, where branch k inserts the generator of every occurrence listed in
    ``branch<k>`` right after that gate. The ancilla starts in |+> and is closed by H.
    """
    ancilla = circuit.n_qubits
    # RX(pi) on the ancilla is X up to a global phase
    flip = Gate('RX', (ancilla,), pi)
    sequence = [Gate('H', (ancilla,))]
    for position, gate in enumerate(gates):
        sequence.append(gate)
        for _ in range(list(branch0).count(position)):
            sequence += [flip] + _controlled_generator(gate.kind, ancilla, gate.targets[0]) + [flip]
        for _ in range(list(branch1).count(position)):
            sequence += _controlled_generator(gate.kind, ancilla, gate.targets[0])
    sequence.append(Gate('H', (ancilla,)))
    state = simulate(ancilla + 1, sequence)
    correlations = zz_expectations(state.amplitudes.reshape(1, -1), ancilla + 1, ancilla)[0]
    return float(np.dot(correlations[:ancilla], vector))


def hadamard_second_partial(circuit: Circuit, x: Optional[float], theta, slot_a: Slot, slot_b: Slot,
                            weights: Weights) -> float:
    """
    Mixed second partial from two Hadamard-test overlaps per occurrence pair (p, q):
    1/2 Re[<psi_p|C|psi_q> - <psi_pq|C|psi>], with psi_p carrying the generator of p and
    psi_pq both generators.
    """
    gates = circuit.concrete_gates(circuit.gate_angles(x, theta))
    vector = weight_vector(circuit, weights)
    total = 0.0
    for pa in circuit.occurrences(slot_a):
        for pb in circuit.occurrences(slot_b):
            cross = _hadamard_overlap(circuit, gates, vector, [pa], [pb])
            both = _hadamard_overlap(circuit, gates, vector, [pa, pb], [])
            total += 0.5 * (cross - both)
    return total


def second_partial(circuit: Circuit, x: Optional[float], theta, slot_a: Slot, slot_b: Slot,
                   weights: Weights) -> float:
    """Mixed second partial by the double shift over every occurrence pair."""
    base = circuit.gate_angles(x, theta)
    rows, coefficients = [], []
    for pa in circuit.occurrences(slot_a):
        for pb in circuit.occurrences(slot_b):
            for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                row = base.copy()
                row[pa] += sa * pi / 2
                row[pb] += sb * pi / 2
                rows.append(row)
                coefficients.append(0.25 * sa * sb)
    values = weighted_expectations(circuit, np.array(rows), weight_vector(circuit, weights))
    return float(np.dot(coefficients, values))


def _lagrange_row(circuit: Circuit, slots: Sequence[VariableSlot]) -> Tuple[np.ndarray, np.ndarray]:
    shifts = np.zeros(len(circuit.gates))
    mask = np.ones(circuit.n_qubits)
    for slot in slots:
        for position in circuit.occurrences(slot):
            shifts[position] += pi / 2
        mask[slot.index] = 0.0
    return shifts, mask


def _require_lagrange(circuit: Circuit):
    if circuit.map_kind is None or not circuit.map_kind.is_lagrange:
        raise CircuitError("the lagrange engine needs a Lagrange feature map")


def lagrange_partial(circuit: Circuit, x: float, theta, slots: Sequence[VariableSlot],
                     weights: Weights) -> float:
    """
    First (one slot) or second (two slots) partial with respect to encoding angles.

    Register qubit j reads a product of cosines of every encoding angle except phi_j, so a
    quarter turn on every occurrence of phi_a differentiates all channels j != a and channel a
    is dropped. A slot listed twice gets a half turn.
    """
    _require_lagrange(circuit)
    if not 1 <= len(slots) <= 2 or not all(isinstance(s, VariableSlot) for s in slots):
        raise CircuitError("lagrange_partial takes one or two encoding slots")
    shifts, mask = _lagrange_row(circuit, slots)
    row = circuit.gate_angles(x, theta) + shifts
    return float(weighted_expectations(circuit, row[None, :],
                                       weight_vector(circuit, weights) * mask)[0])


@dataclass(frozen=True, eq=False)
class DerivativeRecipe:
    """
    Circuits producing f, every first and every second encoding partial.

    Row r runs the circuit with ``shift_table[r]`` added to the resolved angles and the cost
    weights multiplied by ``weight_mask[r]``. Quantities are linear in the row values:
    f = value_coef . v, partial_i = first_coef[i] . v, partial_ab = second_coef[a, b] . v.
    """
    engine: str
    order: int
    shift_table: np.ndarray
    weight_mask: np.ndarray
    value_coef: np.ndarray
    first_coef: np.ndarray
    second_coef: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.shift_table.shape[0]


def derivative_recipe(circuit: Circuit, engine: str, order: int) -> DerivativeRecipe:
    if engine not in ('shift', 'lagrange'):
        raise CircuitError(f"engine '{engine}' cannot be batched")
    if order not in (0, 1, 2):
        raise CircuitError(f"derivative order must be 0, 1 or 2, got {order}")
    if engine == 'lagrange':
        _require_lagrange(circuit)
    n_gates = len(circuit.gates)
    n_var = circuit.n_variables
    shifts, masks, roles = [np.zeros(n_gates)], [np.ones(circuit.n_qubits)], [('f', None, 1.0)]
    variables = [VariableSlot(i) for i in range(n_var)]

    if order >= 1:
        for i, slot in enumerate(variables):
            if engine == 'lagrange':
                row, mask = _lagrange_row(circuit, [slot])
                shifts.append(row)
                masks.append(mask)
                roles.append(('d1', (i,), 1.0))
                continue
            for position in circuit.occurrences(slot):
                for sign in (1, -1):
                    row = np.zeros(n_gates)
                    row[position] = sign * pi / 2
                    shifts.append(row)
                    masks.append(np.ones(circuit.n_qubits))
                    roles.append(('d1', (i,), 0.5 * sign))

    if order >= 2:
        for a, slot_a in enumerate(variables):
            for b, slot_b in enumerate(variables):
                if engine == 'lagrange':
                    # the quarter-turn row is symmetric in (a, b)
                    if b >= a:
                        row, mask = _lagrange_row(circuit, [slot_a, slot_b])
                        shifts.append(row)
                        masks.append(mask)
                        roles.append(('d2', (a, b), 1.0))
                    continue
                for pa in circuit.occurrences(slot_a):
                    for pb in circuit.occurrences(slot_b):
                        for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                            row = np.zeros(n_gates)
                            row[pa] += sa * pi / 2
                            row[pb] += sb * pi / 2
                            shifts.append(row)
                            masks.append(np.ones(circuit.n_qubits))
                            roles.append(('d2', (a, b), 0.25 * sa * sb))

    n_rows = len(roles)
    value_coef = np.zeros(n_rows)
    first_coef = np.zeros((n_var, n_rows))
    second_coef = np.zeros((n_var, n_var, n_rows))
    for r, (role, index, coefficient) in enumerate(roles):
        if role == 'f':
            value_coef[r] = coefficient
        elif role == 'd1':
            first_coef[index[0], r] = coefficient
        else:
            second_coef[index[0], index[1], r] = coefficient
            if engine == 'lagrange':
                second_coef[index[1], index[0], r] = coefficient
    return DerivativeRecipe(engine, order, np.array(shifts), np.array(masks),
                            value_coef, first_coef, second_coef)


def recipe_values(circuit: Circuit, recipe: DerivativeRecipe, base_angles: np.ndarray,
                  weights: np.ndarray) -> np.ndarray:
    """Row values for every base angle row: result shape (n_bases, recipe.n_rows)."""
    base_angles = np.atleast_2d(base_angles)
    n_bases, n_gates = base_angles.shape
    table = (base_angles[:, None, :] + recipe.shift_table[None, :, :]).reshape(-1, n_gates)
    n = circuit.n_qubits
    z_values = simulate_batch(n, circuit.structure, table,
                              reducer=lambda amplitudes: z_expectations(amplitudes, n),
                              shared_prefix=circuit.theta_start)
    weight_rows = weights[None, :] * recipe.weight_mask
    return np.einsum('brn,rn->br', z_values.reshape(n_bases, recipe.n_rows, n), weight_rows)


def default_engine(circuit: Circuit) -> str:
    map_kind = circuit.map_kind
    return 'lagrange' if map_kind is not None and map_kind.is_lagrange else 'shift'


def _encoding_partials(circuit, x, theta, weights, engine, order):
    variables = [VariableSlot(i) for i in range(circuit.n_variables)]
    if engine == 'hadamard':
        first = np.array([hadamard_test_partial(circuit, x, theta, s, weights) for s in variables])
        second = None
        if order == 2:
            second = np.array([[hadamard_second_partial(circuit, x, theta, sa, sb, weights)
                                for sb in variables] for sa in variables])
        return first, second
    recipe = derivative_recipe(circuit, engine, order)
    values = recipe_values(circuit, recipe, circuit.gate_angles(x, theta)[None, :],
                           weight_vector(circuit, weights))[0]
    first = recipe.first_coef @ values
    second = recipe.second_coef @ values if order == 2 else None
    return first, second


def df_dx(circuit: Circuit, x: float, theta, weights: Weights,
          map_kind: Optional[FeatureMapKind] = None, engine: Optional[str] = None) -> float:
    """sum_i dC/dphi_i * dphi_i/dx."""
    map_kind = map_kind or circuit.map_kind
    engine = engine or default_engine(circuit)
    derivatives = encoding_derivatives(map_kind, x)
    first, _ = _encoding_partials(circuit, x, theta, weights, engine, 1)
    return float(np.dot(first, derivatives.dphi_dx))


def d2f_dx2(circuit: Circuit, x: float, theta, weights: Weights,
            map_kind: Optional[FeatureMapKind] = None, engine: Optional[str] = None) -> float:
    """sum_i dC/dphi_i * phi_i'' + sum_ij d2C/dphi_i dphi_j * phi_i' phi_j'."""
    map_kind = map_kind or circuit.map_kind
    engine = engine or default_engine(circuit)
    derivatives = encoding_derivatives(map_kind, x)
    first, second = _encoding_partials(circuit, x, theta, weights, engine, 2)
    dphi = derivatives.dphi_dx
    return float(np.dot(first, derivatives.d2phi_dx2) + dphi @ second @ dphi)
