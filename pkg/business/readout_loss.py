"""
Readout of function values from circuits and assembly of the weighted loss.

f(x) = amplitude * <C>(x) + shift, with C = sum_j w_j Z_j on the readout register.
Derivatives are converted to physical coordinates through the coordinate map before the
residual is formed. The loss is eta_DE * L_DE + eta_CS * L_CS + eta_R * L_R.
"""
import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from math import pi
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from business.problems import CoordinateMap, ProblemSpec, coordinate_map
from config import SOLVER_CONFIG
from simulation.circuits import Circuit, FeatureMapKind, ThetaSlot, register_weights
from simulation.differentiation import (
    default_engine, derivative_recipe, encoding_derivatives, recipe_values, weight_vector,
    weighted_expectations
)
from utils.exceptions import LossError

logger = logging.getLogger(__name__)

DISTANCES = ('mse', 'mae')


@dataclass(frozen=True, eq=False)
class ReadoutSpec:
    """Circuit plus cost weights (1/rho_j for Lagrange maps, 1 per qubit for Chebyshev)."""
    circuit: Circuit
    map_kind: FeatureMapKind
    weights: np.ndarray
    shift: Optional[float] = None
    amplitude: float = 1.0
    engine: str = 'shift'

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        expected = register_weights(self.circuit)
        if weights.shape != expected.shape or not np.array_equal(weights, expected):
            raise LossError(f"cost weights do not match the {self.map_kind.name} feature map")
        if self.amplitude <= 0:
            raise LossError(f"amplitude must be positive, got {self.amplitude}")
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def for_circuit(cls, circuit: Circuit, amplitude: float = 1.0, shift: Optional[float] = None,
                    engine: Optional[str] = None) -> 'ReadoutSpec':
        return cls(circuit, circuit.map_kind, register_weights(circuit), shift, amplitude,
                   engine or default_engine(circuit))

    def with_shift(self, shift: Optional[float]) -> 'ReadoutSpec':
        return replace(self, shift=shift)

    @property
    def dense_weights(self) -> np.ndarray:
        return weight_vector(self.circuit, self.weights)

    @property
    def n_theta(self) -> int:
        return self.circuit.n_theta


@dataclass(frozen=True)
class LossBreakdown:
    de: float
    cs: float
    reg: float
    eta: Tuple[float, float, float]
    total: float


def total_loss(de: float, cs: float, reg: float, eta: Sequence[float]) -> LossBreakdown:
    eta = tuple(float(e) for e in eta)
    if len(eta) != 3:
        raise LossError(f"eta needs three weights, got {len(eta)}")
    if any(e < 0 for e in eta):
        raise LossError(f"eta weights must be non-negative, got {eta}")
    return LossBreakdown(de, cs, reg, eta, eta[0] * de + eta[1] * cs + eta[2] * reg)


def distance_values(residuals: np.ndarray, kind: str) -> np.ndarray:
    if kind == 'mse':
        return residuals ** 2
    if kind == 'mae':
        return np.abs(residuals)
    raise LossError(f"unknown distance '{kind}'")


def _distance_slope(residuals: np.ndarray, kind: str) -> np.ndarray:
    if kind == 'mse':
        return 2.0 * residuals
    return np.sign(residuals)


def raw_readout(spec: ReadoutSpec, x: float, theta) -> float:
    """amplitude * <C>(x), without the shift."""
    angles = spec.circuit.gate_angles(x, theta)
    value = weighted_expectations(spec.circuit, angles[None, :], spec.dense_weights)[0]
    return float(spec.amplitude * value)


def readout(spec: ReadoutSpec, x: float, theta) -> float:
    return raw_readout(spec, x, theta) + (spec.shift or 0.0)


def floating_shift(spec: ReadoutSpec, x0: float, u0: float, theta) -> float:
    """Constant making readout(x0) equal u0."""
    return u0 - raw_readout(spec, x0, theta)


@lru_cache(maxsize=64)
def _cached_recipe(circuit: Circuit, engine: str, order: int):
    return derivative_recipe(circuit, engine, order)


@dataclass
class PointValues:
    """f, f', f'' in physical coordinates (amplitude applied, shift excluded) at a batch of points."""
    x: np.ndarray
    f: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    grad_f: Optional[np.ndarray] = None
    grad_f1: Optional[np.ndarray] = None
    grad_f2: Optional[np.ndarray] = None
    circuits: Dict[str, int] = field(default_factory=dict)


def _theta_shift_rows(circuit: Circuit) -> Tuple[np.ndarray, List[Tuple[int, float]]]:
    rows = [np.zeros(len(circuit.gates))]
    roles = [(-1, 0.0)]
    for k in range(circuit.n_theta):
        for position in circuit.occurrences(ThetaSlot(k)):
            for sign in (1.0, -1.0):
                row = np.zeros(len(circuit.gates))
                row[position] = sign * pi / 2
                rows.append(row)
                roles.append((k, 0.5 * sign))
    return np.array(rows), roles


def evaluate_points(spec: ReadoutSpec, theta, xs: Sequence[float], order: int,
                    dx_dt: float = 1.0, with_gradient: bool = False) -> PointValues:
    """
    Batched readout values and x-derivatives up to ``order`` at every encoded point in ``xs``.

    With ``with_gradient`` every point is evaluated at the base theta and at theta_k +- pi/2 for
    every parameter occurrence, giving exact theta-gradients of f, f' and f''.
    """
    circuit = spec.circuit
    xs = np.asarray(xs, dtype=float).reshape(-1)
    theta = np.asarray(theta, dtype=float)
    recipe = _cached_recipe(circuit, spec.engine, order)
    if with_gradient:
        config_rows, config_roles = _theta_shift_rows(circuit)
    else:
        config_rows, config_roles = np.zeros((1, len(circuit.gates))), [(-1, 0.0)]
    n_points, n_configs = xs.shape[0], config_rows.shape[0]

    base = np.empty((n_points, n_configs, len(circuit.gates)))
    for p, x in enumerate(xs):
        base[p] = circuit.gate_angles(x, theta)[None, :] + config_rows
    values = recipe_values(circuit, recipe, base.reshape(-1, len(circuit.gates)), spec.dense_weights)
    values = values.reshape(n_points, n_configs, recipe.n_rows)

    f = values @ recipe.value_coef
    f1 = np.zeros_like(f)
    f2 = np.zeros_like(f)
    if order >= 1:
        first = values @ recipe.first_coef.T
        for p, x in enumerate(xs):
            derivatives = encoding_derivatives(spec.map_kind, x)
            f1[p] = first[p] @ derivatives.dphi_dx
            if order >= 2:
                second = np.einsum('cr,abr->cab', values[p], recipe.second_coef)
                f2[p] = (first[p] @ derivatives.d2phi_dx2
                         + np.einsum('a,cab,b->c', derivatives.dphi_dx, second, derivatives.dphi_dx))
    scale = spec.amplitude
    f, f1, f2 = scale * f, scale * dx_dt * f1, scale * dx_dt ** 2 * f2

    n_f = int(recipe.value_coef.astype(bool).sum())
    n_d1 = int(recipe.first_coef.any(axis=0).sum())
    # one logical circuit per ordered pair, even where a symmetric row serves both
    n_d2 = int(np.count_nonzero(recipe.second_coef))
    circuits = {'f': n_points * n_configs * n_f, 'df': n_points * n_configs * n_d1,
                'd2f': n_points * n_configs * n_d2}

    result = PointValues(xs, f[:, 0], f1[:, 0], f2[:, 0], circuits=circuits)
    if with_gradient:
        coefficients = np.zeros((spec.n_theta, n_configs))
        for c, (k, coefficient) in enumerate(config_roles):
            if k >= 0:
                coefficients[k, c] = coefficient
        result.grad_f = f @ coefficients.T
        result.grad_f1 = f1 @ coefficients.T
        result.grad_f2 = f2 @ coefficients.T
    return result


def _resolve_map(problem: ProblemSpec, coords: Optional[CoordinateMap]) -> CoordinateMap:
    return coords if coords is not None else coordinate_map(problem)


def de_loss(problem: ProblemSpec, spec: ReadoutSpec, theta, points: Sequence[float],
            coords: Optional[CoordinateMap] = None, distance: str = 'mse') -> float:
    """Mean distance of the DE residual from zero over encoded ``points``."""
    if len(points) == 0:
        raise LossError("de_loss needs at least one point")
    coords = _resolve_map(problem, coords)
    values = evaluate_points(spec, theta, points, problem.de_order, coords.dx_dt)
    shift = spec.shift or 0.0
    residuals = np.array([
        problem.residual(coords.to_physical(x), f + shift, f1, f2)
        for x, f, f1, f2 in zip(values.x, values.f, values.f1, values.f2)
    ])
    return float(np.mean(distance_values(residuals, distance)))


def cs_loss(problem: ProblemSpec, spec: ReadoutSpec, theta, coords: Optional[CoordinateMap] = None,
            distance: str = 'mse') -> float:
    """Sum of boundary-constraint distances; a floating constraint met by the shift contributes 0."""
    coords = _resolve_map(problem, coords)
    shift = spec.shift or 0.0
    total = 0.0
    for constraint in problem.constraints:
        if constraint.floating and spec.shift is not None:
            continue
        x = coords.to_encoded(constraint.t)
        order = 1 if constraint.kind == 'derivative' else 0
        values = evaluate_points(spec, theta, [x], order, coords.dx_dt)
        actual = values.f1[0] if order else values.f[0] + shift
        total += float(distance_values(np.array([actual - constraint.target]), distance)[0])
    return total


def reg_loss(spec: ReadoutSpec, theta, reg_points: Sequence[Tuple[float, float]],
             distance: str = 'mse') -> float:
    """Mean distance between the readout and known values at regularization points."""
    if len(reg_points) == 0:
        return 0.0
    xs = [x for x, _ in reg_points]
    targets = np.array([u for _, u in reg_points])
    values = evaluate_points(spec, theta, xs, 0)
    residuals = values.f + (spec.shift or 0.0) - targets
    return float(np.mean(distance_values(residuals, distance)))


@dataclass
class LossEvaluation:
    breakdown: LossBreakdown
    gradient: Optional[np.ndarray]
    shift: float
    circuits: Dict[str, int]


def _merge_counts(*counts: Dict[str, int]) -> Dict[str, int]:
    merged = {'f': 0, 'df': 0, 'd2f': 0}
    for count in counts:
        for key, value in count.items():
            merged[key] += value
    return merged


def assemble_loss(problem: ProblemSpec, spec: ReadoutSpec, theta, de_points: Sequence[float],
                  reg_points: Sequence[Tuple[float, float]], eta: Sequence[float],
                  coords: Optional[CoordinateMap] = None, distance: str = 'mse',
                  with_gradient: bool = True) -> LossEvaluation:
    """
    Total loss and its theta-gradient from one batched evaluation.

    The floating constraint point, every non-floating constraint point and the DE points get
    the full derivative bundle; regularization points get values only. The floating shift is
    recomputed from the current theta and its gradient flows into every shifted value.
    """
    if len(de_points) == 0:
        raise LossError("the DE loss needs at least one point")
    if distance not in DISTANCES:
        raise LossError(f"unknown distance '{distance}'")
    coords = _resolve_map(problem, coords)
    theta = np.asarray(theta, dtype=float)
    anchor = problem.floating_constraint()

    locations: List[float] = []
    index: Dict[float, int] = {}
    candidates = list(de_points)
    if anchor is not None:
        candidates.append(coords.to_encoded(anchor.t))
    candidates += [coords.to_encoded(c.t) for c in problem.constraints if not c.floating]
    for x in candidates:
        if x not in index:
            index[x] = len(locations)
            locations.append(x)
    values = evaluate_points(spec, theta, locations, problem.de_order, coords.dx_dt, with_gradient)
    n_theta = spec.n_theta
    zeros = np.zeros(n_theta)

    if anchor is not None:
        p0 = index[coords.to_encoded(anchor.t)]
        shift = anchor.target - values.f[p0]
        grad_shift = -values.grad_f[p0] if with_gradient else zeros
    else:
        shift, grad_shift = spec.shift or 0.0, zeros

    c_f, c_f1, c_f2 = problem.residual_coefficients()
    residuals, residual_grads = [], []
    for x in de_points:
        p = index[x]
        t = coords.to_physical(x)
        residuals.append(c_f * (values.f[p] + shift) + c_f1 * values.f1[p] + c_f2 * values.f2[p]
                         + problem.source(t))
        if with_gradient:
            residual_grads.append(c_f * (values.grad_f[p] + grad_shift) + c_f1 * values.grad_f1[p]
                                  + c_f2 * values.grad_f2[p])
    residuals = np.array(residuals)
    de = float(np.mean(distance_values(residuals, distance)))
    grad_de = (np.mean(_distance_slope(residuals, distance)[:, None] * np.array(residual_grads), axis=0)
               if with_gradient else zeros)

    cs, grad_cs = 0.0, zeros.copy()
    for constraint in problem.constraints:
        if constraint.floating:
            continue
        p = index[coords.to_encoded(constraint.t)]
        if constraint.kind == 'derivative':
            residual = values.f1[p] - constraint.target
            grad = values.grad_f1[p] if with_gradient else zeros
        else:
            residual = values.f[p] + shift - constraint.target
            grad = values.grad_f[p] + grad_shift if with_gradient else zeros
        cs += float(distance_values(np.array([residual]), distance)[0])
        grad_cs = grad_cs + float(_distance_slope(np.array([residual]), distance)[0]) * grad

    reg, grad_reg, reg_counts = 0.0, zeros, {}
    if len(reg_points):
        reg_values = evaluate_points(spec, theta, [x for x, _ in reg_points], 0, coords.dx_dt,
                                     with_gradient)
        reg_counts = reg_values.circuits
        reg_residuals = reg_values.f + shift - np.array([u for _, u in reg_points])
        reg = float(np.mean(distance_values(reg_residuals, distance)))
        if with_gradient:
            grads = reg_values.grad_f + grad_shift[None, :]
            grad_reg = np.mean(_distance_slope(reg_residuals, distance)[:, None] * grads, axis=0)

    breakdown = total_loss(de, cs, reg, eta)
    gradient = None
    if with_gradient:
        gradient = breakdown.eta[0] * grad_de + breakdown.eta[1] * grad_cs + breakdown.eta[2] * grad_reg
    return LossEvaluation(breakdown, gradient, float(shift), _merge_counts(values.circuits, reg_counts))
