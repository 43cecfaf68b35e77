"""
Adam optimization loop with the fixed-point and two-part evolving-node schedules.

One iteration evaluates the loss and its theta-gradient in a single batch, records the
iteration, checks convergence and either advances the schedule or takes an Adam step.
"""
import logging
from dataclasses import dataclass, field, replace
from math import pi
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from business.complexity import CircuitCounter, built_gates_per_circuit, circuit_gate_model
from business.problems import ProblemSpec, coordinate_map
from business.readout_loss import (
    DISTANCES, ReadoutSpec, assemble_loss, distance_values, evaluate_points
)
from config import EVALUATION_CONFIG, SCHEDULE_CONFIG, SOLVER_CONFIG
from simulation.circuits import NodeSet, build_lagrange_map, build_vqc
from utils.exceptions import DivergenceError, TrainingError

logger = logging.getLogger(__name__)

SCHEDULE_KINDS = ('fixed', 'two_part')
TRACE_STATUSES = ('running', 'converged', 'max_iters', 'diverged')


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AdamState:
    theta: np.ndarray
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    learning_rate: float = SOLVER_CONFIG['learning_rate']

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        m = np.array(self.m, dtype=float)
        v = np.array(self.v, dtype=float)
        if not theta.shape == m.shape == v.shape or theta.ndim != 1:
            raise TrainingError(f"theta, m and v must be vectors of one length, got "
                                f"{theta.shape}, {m.shape}, {v.shape}")
        if np.any(v < 0):
            raise TrainingError("second-moment estimates must be non-negative")
        if not self.learning_rate > 0:
            raise TrainingError(f"learning rate must be positive, got {self.learning_rate}")
        object.__setattr__(self, 'theta', theta)
        object.__setattr__(self, 'm', m)
        object.__setattr__(self, 'v', v)

    @classmethod
    def initial(cls, theta, learning_rate: float = SOLVER_CONFIG['learning_rate']) -> 'AdamState':
        theta = np.asarray(theta, dtype=float)
        return cls(theta, np.zeros_like(theta), np.zeros_like(theta), 0, learning_rate)

    def grown(self, new_theta: Sequence[float]) -> 'AdamState':
        """Append parameters; their moments start at zero."""
        new_theta = np.asarray(new_theta, dtype=float).reshape(-1)
        zeros = np.zeros_like(new_theta)
        return replace(self, theta=np.concatenate([self.theta, new_theta]),
                       m=np.concatenate([self.m, zeros]), v=np.concatenate([self.v, zeros]))


def adam_step(state: AdamState, gradient, learning_rate: Optional[float] = None,
              beta1: float = SOLVER_CONFIG['beta1'], beta2: float = SOLVER_CONFIG['beta2'],
              epsilon: float = SOLVER_CONFIG['epsilon']) -> AdamState:
    """One bias-corrected Adam update; returns a new state."""
    g = np.asarray(gradient, dtype=float)
    if g.shape != state.theta.shape:
        raise TrainingError(f"gradient has shape {g.shape}, theta has {state.theta.shape}")
    if not np.all(np.isfinite(g)):
        raise TrainingError("gradient has non-finite entries")
    lr = state.learning_rate if learning_rate is None else learning_rate
    t = state.step_count + 1

    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    m = beta1 * state.m + (1.0 - beta1) * g
    v = beta2 * state.v + (1.0 - beta2) * (g * g)
    denom = np.sqrt(v / bc2) + epsilon
    theta = state.theta - (lr / bc1) * m / denom
    return AdamState(theta, m, v, t, lr)


# ---------------------------------------------------------------------------
# Schedule and settings
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    """Which points train when, and at which learning rate."""
    kind: str = 'fixed'
    learning_rate: float = SOLVER_CONFIG['learning_rate']
    initial_active: int = SCHEDULE_CONFIG['initial_active']
    window: int = SCHEDULE_CONFIG['window']
    lr_thresholds: Tuple[Tuple[float, float], ...] = SCHEDULE_CONFIG['lr_thresholds']
    final_lr: float = SCHEDULE_CONFIG['final_lr']
    part2_lr: float = SCHEDULE_CONFIG['part2_lr']
    part2_sweeps: int = SCHEDULE_CONFIG['part2_sweeps']
    stage_iters: int = SCHEDULE_CONFIG['stage_iters']
    window_iters: int = SCHEDULE_CONFIG['window_iters']
    reset_moments: bool = SCHEDULE_CONFIG['reset_moments']

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise TrainingError(f"unknown schedule '{self.kind}', expected one of {SCHEDULE_KINDS}")
        rates = [self.learning_rate, self.final_lr, self.part2_lr] + [lr for _, lr in self.lr_thresholds]
        if any(not lr > 0 for lr in rates):
            raise TrainingError(f"learning rates must be positive, got {rates}")
        if self.initial_active < 3:
            raise TrainingError(f"initial_active must be >= 3, got {self.initial_active}")
        if self.window < 1:
            raise TrainingError(f"window must be >= 1, got {self.window}")
        if self.part2_sweeps < 0:
            raise TrainingError(f"part2_sweeps must be >= 0, got {self.part2_sweeps}")
        if self.stage_iters < 0 or self.window_iters < 0:
            raise TrainingError(f"iteration caps must be >= 0, got {self.stage_iters}, {self.window_iters}")
        object.__setattr__(self, 'lr_thresholds',
                           tuple((float(loss), float(lr)) for loss, lr in self.lr_thresholds))

    @classmethod
    def fixed(cls, learning_rate: float = SOLVER_CONFIG['learning_rate']) -> 'Schedule':
        return cls('fixed', learning_rate)

    @classmethod
    def two_part(cls, **overrides) -> 'Schedule':
        return cls('two_part', **overrides)

    def part1_learning_rate(self, loss: float) -> float:
        for threshold, lr in self.lr_thresholds:
            if loss > threshold:
                return lr
        return self.final_lr


@dataclass(frozen=True)
class TrainingSettings:
    eta: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    eps_loss: float = SOLVER_CONFIG['eps_loss']
    eps_grad: float = SOLVER_CONFIG['eps_grad']
    distance: str = SOLVER_CONFIG['distance']
    divergence_limit: float = SOLVER_CONFIG['divergence_limit']
    # encoded DE points of a fixed schedule; the circuit's nodes when None
    training_points: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.distance not in DISTANCES:
            raise TrainingError(f"unknown distance '{self.distance}'")
        if self.eps_loss < 0 or self.eps_grad < 0:
            raise TrainingError("convergence thresholds must be non-negative")
        if self.training_points is not None:
            object.__setattr__(self, 'training_points', tuple(float(x) for x in self.training_points))


# ---------------------------------------------------------------------------
# Trace
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    loss_total: float
    loss_de: float
    loss_cs: float
    loss_reg: float
    grad_maxnorm: float
    learning_rate: float
    active_nodes: Tuple[int, ...]
    regularization_nodes: Tuple[int, ...]
    circuits_cum: int
    gates_cum: int
    stage: str = 'fixed'
    built_gates_cum: int = 0

    def __post_init__(self):
        overlap = set(self.active_nodes) & set(self.regularization_nodes)
        if overlap:
            raise TrainingError(f"nodes {sorted(overlap)} are both DE and regularization points")


@dataclass(frozen=True)
class StageEvent:
    iteration: int
    kind: str
    detail: str


@dataclass
class TrainingTrace:
    records: List[IterationRecord] = field(default_factory=list)
    events: List[StageEvent] = field(default_factory=list)
    status: str = 'running'
    theta: Optional[np.ndarray] = None
    shift: float = 0.0
    spec: Optional[ReadoutSpec] = None
    part1_iterations: Optional[int] = None
    part1_loss: Optional[float] = None
    reg_points: Tuple[Tuple[float, float], ...] = ()

    def append(self, record: IterationRecord):
        if self.records and record.iteration <= self.records[-1].iteration:
            raise TrainingError(f"iteration {record.iteration} does not follow {self.records[-1].iteration}")
        self.records.append(record)

    @property
    def latest(self) -> IterationRecord:
        if not self.records:
            raise TrainingError("trace is empty")
        return self.records[-1]

    @property
    def iterations(self) -> int:
        return len(self.records)

    def losses(self) -> np.ndarray:
        return np.array([r.loss_total for r in self.records])

    def __repr__(self):
        return f"<TrainingTrace(status='{self.status}', iterations={self.iterations})>"


def converged(trace: TrainingTrace, eps_loss: float = SOLVER_CONFIG['eps_loss'],
              eps_grad: float = SOLVER_CONFIG['eps_grad']) -> bool:
    """Latest loss at or below eps_loss, or every gradient component at or below eps_grad."""
    latest = trace.latest
    return latest.loss_total <= eps_loss or latest.grad_maxnorm <= eps_grad


# ---------------------------------------------------------------------------
# Schedule plans
# ---------------------------------------------------------------------------

def _charge(counter: CircuitCounter, spec: ReadoutSpec, circuits: Dict[str, int]):
    counter.charge(circuits, circuit_gate_model(spec.map_kind, spec.n_theta), built_gates_per_circuit(spec.circuit))


def _lagrange_spec(template: ReadoutSpec, nodes: NodeSet) -> ReadoutSpec:
    circuit = build_vqc(build_lagrange_map(nodes, template.map_kind.structure), 1)
    return ReadoutSpec.for_circuit(circuit, template.amplitude, template.shift, template.engine)


class _FixedPlan:
    """One stage over a fixed point set."""
    stage = 'fixed'

    def __init__(self, spec: ReadoutSpec, schedule: Schedule, points: Sequence[float]):
        self.spec = spec
        self.schedule = schedule
        self.points = tuple(points)
        self.reg: Dict[int, Tuple[float, float]] = {}

    @property
    def active_nodes(self) -> Tuple[int, ...]:
        return tuple(range(len(self.points)))

    @property
    def de_points(self) -> Tuple[float, ...]:
        return self.points

    @property
    def reg_points(self) -> Tuple[Tuple[float, float], ...]:
        return ()

    def learning_rate(self, loss: float) -> float:
        return self.schedule.learning_rate

    def exhausted(self, iteration: int) -> bool:
        return False

    def advance(self, state: AdamState, shift: float, iteration: int, trace: TrainingTrace,
                counter: CircuitCounter) -> Tuple[AdamState, bool]:
        return state, True


class _TwoPartPlan:
    """
    Part 1 grows the register one node at a time with the two newest nodes as DE points;
    part 2 slides a window of DE nodes across the full register.
    """

    def __init__(self, spec: ReadoutSpec, schedule: Schedule):
        if not spec.map_kind.is_lagrange:
            raise TrainingError("the two-part schedule needs a Lagrange feature map")
        self.full = spec.map_kind.nodes
        if len(self.full) < schedule.initial_active:
            raise TrainingError(f"{len(self.full)} nodes cannot start a schedule with "
                                f"{schedule.initial_active} active nodes")
        if len(self.full) < schedule.window:
            raise TrainingError(f"window of {schedule.window} exceeds {len(self.full)} nodes")
        self.template = spec
        self.schedule = schedule
        self.size = schedule.initial_active
        self.stage = 'part1'
        self.window_start = 0
        self.sweeps_done = 0
        self.stage_started = 1
        self.reg: Dict[int, Tuple[float, float]] = {}
        self.spec = self._spec_for(self.size)

    def _spec_for(self, size: int) -> ReadoutSpec:
        if size == len(self.full):
            return self.template
        return _lagrange_spec(self.template, self.full.subset(size))

    @property
    def active_nodes(self) -> Tuple[int, ...]:
        if self.stage == 'part1':
            return (self.size - 2, self.size - 1)
        return tuple(range(self.window_start, self.window_start + self.schedule.window))

    @property
    def de_points(self) -> Tuple[float, ...]:
        return tuple(self.full.nodes[i] for i in self.active_nodes)

    def learning_rate(self, loss: float) -> float:
        if self.stage == 'part1':
            return self.schedule.part1_learning_rate(loss)
        return self.schedule.part2_lr

    def _snapshot(self, indices: Sequence[int], state: AdamState, shift: float, counter: CircuitCounter):
        if not indices:
            return
        xs = [self.full.nodes[i] for i in indices]
        values = evaluate_points(self.spec, state.theta, xs, 0)
        _charge(counter, self.spec, values.circuits)
        for i, x, f in zip(indices, xs, values.f):
            self.reg[i] = (x, float(f + shift))

    def _grow(self, state: AdamState, shift: float, iteration: int, trace: TrainingTrace,
              counter: CircuitCounter) -> AdamState:
        promoted = self.size - 2
        self._snapshot([promoted], state, shift, counter)
        x_new = self.full.nodes[self.size]
        values = evaluate_points(self.spec, state.theta, [x_new], 0)
        _charge(counter, self.spec, values.circuits)
        channel = values.f[0] / self.spec.amplitude
        if abs(channel) > 1.0:
            logger.warning(f"Warm start at node {self.size} clipped from {channel:.6g}")
        theta_new = float(np.arccos(np.clip(channel, -1.0, 1.0)))
        self.size += 1
        self.spec = self._spec_for(self.size)
        trace.events.append(StageEvent(iteration, 'node_added',
                                       f"node {self.size - 1} joined; node {promoted} regularizes"))
        logger.info(f"Iteration {iteration}: register grown to {self.size} nodes")
        return state.grown([theta_new])

    def _move_window(self, start: int, state: AdamState, shift: float, counter: CircuitCounter):
        window = set(range(start, start + self.schedule.window))
        leaving = [i for i in self.active_nodes if i not in window]
        unknown = [i for i in range(len(self.full)) if i not in window and i not in self.reg]
        self._snapshot(sorted(set(leaving) | set(unknown)), state, shift, counter)
        for i in window:
            self.reg.pop(i, None)
        self.window_start = start

    def exhausted(self, iteration: int) -> bool:
        """The current stage or window has used up its iteration cap."""
        cap = self.schedule.stage_iters if self.stage == 'part1' else self.schedule.window_iters
        return cap > 0 and iteration - self.stage_started + 1 >= cap

    def _restart(self, state: AdamState, iteration: int) -> AdamState:
        self.stage_started = iteration + 1
        if not self.schedule.reset_moments:
            return state
        return AdamState.initial(state.theta, state.learning_rate)

    def advance(self, state: AdamState, shift: float, iteration: int, trace: TrainingTrace,
                counter: CircuitCounter) -> Tuple[AdamState, bool]:
        if self.stage == 'part1':
            if self.size < len(self.full):
                state = self._grow(state, shift, iteration, trace, counter)
                return self._restart(state, iteration), False
            trace.part1_iterations = iteration
            trace.part1_loss = trace.latest.loss_total
            trace.events.append(StageEvent(iteration, 'part1_finished',
                                           f"loss {trace.latest.loss_total:.6e}"))
            logger.info(f"Part 1 finished at iteration {iteration}, loss {trace.latest.loss_total:.6e}")
            if self.schedule.part2_sweeps == 0:
                return state, True
            self._move_window(0, state, shift, counter)
            self.stage = 'part2'
            trace.events.append(StageEvent(iteration, 'window_moved', 'window at node 0'))
            return self._restart(state, iteration), False

        last_start = len(self.full) - self.schedule.window
        if self.window_start < last_start:
            start = self.window_start + 1
        else:
            self.sweeps_done += 1
            trace.events.append(StageEvent(iteration, 'sweep_finished', f"sweep {self.sweeps_done}"))
            if self.sweeps_done >= self.schedule.part2_sweeps:
                return state, True
            start = 0
        self._move_window(start, state, shift, counter)
        trace.events.append(StageEvent(iteration, 'window_moved', f"window at node {start}"))
        logger.info(f"Iteration {iteration}: DE window moved to node {start}")
        return self._restart(state, iteration), False

    @property
    def reg_points(self) -> Tuple[Tuple[float, float], ...]:
        return tuple(self.reg[i] for i in sorted(self.reg))


def _default_points(spec: ReadoutSpec) -> Tuple[float, ...]:
    if not spec.map_kind.is_lagrange:
        raise TrainingError("a Chebyshev circuit needs explicit training points")
    return spec.map_kind.nodes.nodes


def initial_theta(n_theta: int, seed: int) -> np.ndarray:
    """Uniform draw in [-pi, pi) from a generator seeded with ``seed``."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-pi, pi, size=n_theta)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def run_training(problem: ProblemSpec, spec: ReadoutSpec, schedule: Schedule, seed: int,
                 max_iters: int, settings: Optional[TrainingSettings] = None) -> TrainingTrace:
    """
    Train ``spec`` on ``problem``.

    Raises DivergenceError, carrying the trace so far, when the loss exceeds the divergence
    limit or any loss, gradient or theta value stops being finite.
    """
    if max_iters < 1:
        raise TrainingError(f"max_iters must be >= 1, got {max_iters}")
    settings = settings or TrainingSettings()
    coords = coordinate_map(problem)

    if schedule.kind == 'two_part':
        plan = _TwoPartPlan(spec, schedule)
    else:
        plan = _FixedPlan(spec, schedule, settings.training_points or _default_points(spec))

    state = AdamState.initial(initial_theta(plan.spec.n_theta, seed), plan.learning_rate(np.inf))
    trace = TrainingTrace(spec=plan.spec)
    counter = CircuitCounter()
    logger.info(f"Training {problem.kind} with {plan.spec.map_kind.name} "
                f"({plan.spec.n_theta} parameters), schedule '{schedule.kind}', seed {seed}")

    shift = spec.shift or 0.0
    for iteration in range(1, max_iters + 1):
        evaluation = assemble_loss(problem, plan.spec, state.theta, plan.de_points, plan.reg_points,
                                   settings.eta, coords, settings.distance)
        _charge(counter, plan.spec, evaluation.circuits)
        counter.close_iteration()
        shift = evaluation.shift
        breakdown = evaluation.breakdown
        gradient = evaluation.gradient
        grad_maxnorm = float(np.max(np.abs(gradient))) if gradient.size else 0.0
        lr = plan.learning_rate(breakdown.total)

        trace.append(IterationRecord(
            iteration, breakdown.total, breakdown.de, breakdown.cs, breakdown.reg, grad_maxnorm, lr,
            plan.active_nodes, tuple(sorted(plan.reg)), counter.total_circuits, counter.total_gates,
            plan.stage, counter.total_built_gates,
        ))
        logger.debug(f"iter {iteration}: loss {breakdown.total:.6e} grad {grad_maxnorm:.3e} lr {lr}")

        if (not np.isfinite(breakdown.total) or breakdown.total > settings.divergence_limit
                or not np.all(np.isfinite(gradient)) or not np.isfinite(shift)):
            trace.status = 'diverged'
            trace.theta, trace.shift, trace.spec = state.theta, shift, plan.spec
            logger.error(f"Training diverged at iteration {iteration} (loss {breakdown.total})")
            raise DivergenceError(f"training diverged at iteration {iteration}", trace, breakdown.total)

        at_threshold = converged(trace, settings.eps_loss, settings.eps_grad)
        if at_threshold or plan.exhausted(iteration):
            if not at_threshold:
                trace.events.append(StageEvent(iteration, 'stage_capped', f"{plan.stage} cap reached"))
                logger.info(f"Iteration {iteration}: {plan.stage} stage capped at loss {breakdown.total:.6e}")
            state, finished = plan.advance(state, shift, iteration, trace, counter)
            if finished:
                trace.status = 'converged'
                break
            continue

        state = adam_step(state, gradient, lr)
        if not np.all(np.isfinite(state.theta)):
            trace.status = 'diverged'
            trace.theta, trace.shift, trace.spec = state.theta, shift, plan.spec
            raise DivergenceError(f"theta became non-finite at iteration {iteration}", trace,
                                  breakdown.total)
    else:
        trace.status = 'max_iters'
        logger.warning(f"Training stopped after {max_iters} iterations without converging")

    trace.theta = state.theta
    trace.spec = plan.spec
    trace.reg_points = plan.reg_points
    anchor = problem.floating_constraint()
    if anchor is not None:
        final = assemble_loss(problem, plan.spec, state.theta, plan.de_points, trace.reg_points,
                              settings.eta, coords, settings.distance, with_gradient=False)
        shift = final.shift
    trace.shift = float(shift)
    logger.info(f"Training finished: status '{trace.status}' after {trace.iterations} iterations, "
                f"loss {trace.latest.loss_total:.6e}")
    return trace


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvaluationTable:
    """Solution, oracle and per-point DE loss at equispaced physical points."""
    t: np.ndarray
    f: np.ndarray
    f_ref: np.ndarray
    f1: np.ndarray
    f1_ref: np.ndarray
    f2: np.ndarray
    f2_ref: np.ndarray
    de_loss: np.ndarray
    bc_loss: float

    @property
    def de_loss_total(self) -> float:
        return float(np.mean(self.de_loss))

    def __len__(self):
        return len(self.t)

    def rows(self):
        return zip(self.t, self.f, self.f_ref, self.f1, self.f1_ref, self.f2, self.f2_ref, self.de_loss)


def evaluate_solution(problem: ProblemSpec, spec: ReadoutSpec, theta,
                      n_points: int = EVALUATION_CONFIG['n_points'], ts: Optional[Sequence[float]] = None,
                      distance: str = 'mse') -> EvaluationTable:
    """f, f', f'' of the trained readout (shift included) next to the oracle over the evaluation interval."""
    if ts is None:
        if n_points < 2:
            raise TrainingError(f"at least 2 evaluation points are required, got {n_points}")
        ts = np.linspace(*problem.evaluation_interval, n_points)
    ts = np.asarray(ts, dtype=float)
    coords = coordinate_map(problem)
    shift = spec.shift or 0.0
    values = evaluate_points(spec, theta, coords.to_encoded(ts), problem.de_order, coords.dx_dt)
    f = values.f + shift
    reference = np.array([problem.analytical(t) for t in ts])
    residuals = np.array([problem.residual(t, *row) for t, row in zip(ts, zip(f, values.f1, values.f2))])
    de_loss = distance_values(residuals, distance)

    bc_loss = 0.0
    for constraint in problem.constraints:
        x = coords.to_encoded(constraint.t)
        at = evaluate_points(spec, theta, [x], 1, coords.dx_dt)
        actual = at.f1[0] if constraint.kind == 'derivative' else at.f[0] + shift
        bc_loss += float(distance_values(np.array([actual - constraint.target]), distance)[0])

    return EvaluationTable(ts, f, reference[:, 0], values.f1, reference[:, 1], values.f2, reference[:, 2],
                           de_loss, bc_loss)
