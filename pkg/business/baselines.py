"""
Chebyshev-feature-map (KI) solver for the damped mass-spring system, the comparison arm
of the Hadamard-Lagrange solver.
"""
import logging
from typing import Optional, Sequence, Tuple

from business.problems import ProblemSpec, chebyshev_nodes
from business.readout_loss import ReadoutSpec
from business.training import Schedule, TrainingSettings, TrainingTrace, run_training
from config import DMSS_CONFIG, SOLVER_CONFIG
from simulation.circuits import build_chebyshev_map, build_vqc
from utils.exceptions import TrainingError

logger = logging.getLogger(__name__)

KI_QUBITS = (3, 5)
KI_LAYERS = (2, 7)
KI_POINTS = (7, 9, 12)


def ki_problem(training_interval: Sequence[float] = DMSS_CONFIG['ki_training_interval'],
               evaluation_interval: Sequence[float] = DMSS_CONFIG['physical_interval'],
               **overrides) -> ProblemSpec:
    """DMSS trained past the evaluation interval; floating f(0) = u0, f'(0) = du0 as a loss term."""
    return ProblemSpec.dmss(tuple(training_interval), evaluation_interval=tuple(evaluation_interval),
                            **overrides)


def ki_readout(n_qubits: int, n_layers: int, amplitude: float = 1.0) -> ReadoutSpec:
    """Chebyshev map and hardware-efficient ansatz read out by total magnetization."""
    circuit = build_vqc(build_chebyshev_map(n_qubits), n_layers)
    return ReadoutSpec.for_circuit(circuit, amplitude, engine='shift')


def _check_ranges(n_qubits: int, n_layers: int, n_nodes: int):
    if not KI_QUBITS[0] <= n_qubits <= KI_QUBITS[1]:
        raise TrainingError(f"n_qubits {n_qubits} outside the studied range {KI_QUBITS}")
    if not KI_LAYERS[0] <= n_layers <= KI_LAYERS[1]:
        raise TrainingError(f"n_layers {n_layers} outside the studied range {KI_LAYERS}")
    if n_nodes not in KI_POINTS:
        raise TrainingError(f"n_nodes {n_nodes} is not one of the studied counts {KI_POINTS}")


def run_ki_dmss(n_qubits: int, n_layers: int, node_kind: int, n_nodes: int, seed: int,
                max_iters: int = 2000, eta: Tuple[float, float, float] = (1.0, 1.0, 0.0),
                learning_rate: float = SOLVER_CONFIG['learning_rate'],
                training_interval: Optional[Sequence[float]] = None,
                problem: Optional[ProblemSpec] = None, override_ranges: bool = False,
                settings: Optional[TrainingSettings] = None) -> TrainingTrace:
    """
    Train the KI circuit on ``n_nodes`` Chebyshev points of kind ``node_kind``.

    Sizes outside the studied ranges raise unless ``override_ranges`` is set.
    """
    if not override_ranges:
        _check_ranges(n_qubits, n_layers, n_nodes)
    if problem is None:
        problem = ki_problem(training_interval or DMSS_CONFIG['ki_training_interval'])
    a, b = problem.encoded_interval
    points = chebyshev_nodes(node_kind, a, b, n_nodes)
    if settings is None:
        settings = TrainingSettings(eta=tuple(eta), training_points=points)
    else:
        settings = TrainingSettings(tuple(eta), settings.eps_loss, settings.eps_grad, settings.distance,
                                    settings.divergence_limit, points)
    logger.info(f"KI baseline N{n_qubits}L{n_layers}, kind-{node_kind} nodes, {n_nodes} points, seed {seed}")
    spec = ki_readout(n_qubits, n_layers, problem.amplitude_scale)
    return run_training(problem, spec, Schedule.fixed(learning_rate), seed, max_iters, settings)
