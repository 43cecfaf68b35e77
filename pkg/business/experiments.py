"""
Experiment orchestration: RunConfig -> problem, circuit, schedule -> per-seed training,
evaluation, budgets, report files and run-registry entries.
"""
import logging
import os
import time
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from business.baselines import run_ki_dmss, ki_readout
from business.complexity import (
    GateBudget, gate_ratio, hl_budget, ki_budget, sato_budget, sato_gate_model
)
from business.import_export import RunConfig, RunReport, SeedResult, emit_report
from business.problems import ProblemSpec, chebyshev_nodes, training_nodes
from business.readout_loss import ReadoutSpec, distance_values
from business.training import (
    EvaluationTable, Schedule, TrainingSettings, TrainingTrace, evaluate_solution, run_training
)
from config import DMSS_CONFIG, OUTPUT_DIR_ENV, POISSON_CONFIG
from database.db_manager import DatabaseManager
from simulation.circuits import NodeSet, build_lagrange_map, build_vqc
from utils.exceptions import DivergenceError

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def build_problem(config: RunConfig) -> ProblemSpec:
    common = {'encoded_interval': config.encoded_interval, 'bc_mode': config.bc_mode}
    if config.amplitude_scale is not None:
        common['amplitude_scale'] = config.amplitude_scale
    if config.problem == 'poisson':
        domain = config.physical_interval or POISSON_CONFIG['interval']
        return ProblemSpec.poisson(config.bc_kind, config.half, config.n_src, tuple(domain), **common)

    if config.is_lagrange:
        interval = config.physical_interval or DMSS_CONFIG['physical_interval']
        evaluation = config.evaluation_interval or interval
    else:
        interval = config.physical_interval or DMSS_CONFIG['ki_training_interval']
        evaluation = config.evaluation_interval or DMSS_CONFIG['physical_interval']
    return ProblemSpec.dmss(tuple(interval), evaluation_interval=tuple(evaluation), mass=config.mass,
                            damping=config.damping, stiffness=config.stiffness, u0=config.u0,
                            du0=config.du0, **common)


def build_readout(config: RunConfig, problem: ProblemSpec) -> ReadoutSpec:
    if not config.is_lagrange:
        return ki_readout(config.n_qubits, config.n_layers, problem.amplitude_scale)
    nodes = NodeSet(training_nodes(problem, config.node_kind, config.resolved_n_nodes))
    circuit = build_vqc(build_lagrange_map(nodes, config.structure), 1)
    return ReadoutSpec.for_circuit(circuit, problem.amplitude_scale)


def build_schedule(config: RunConfig) -> Schedule:
    if config.resolved_schedule == 'fixed':
        return Schedule.fixed(config.learning_rate)
    return Schedule.two_part(lr_thresholds=config.lr_thresholds, part2_sweeps=config.part2_sweeps,
                             stage_iters=config.stage_iters, window_iters=config.window_iters,
                             reset_moments=config.reset_moments)


def build_settings(config: RunConfig, problem: ProblemSpec) -> TrainingSettings:
    points = None
    if not config.is_lagrange:
        a, b = problem.encoded_interval
        points = chebyshev_nodes(config.node_kind, a, b, config.resolved_n_nodes)
    return TrainingSettings(config.resolved_eta, config.eps_loss, config.eps_grad, config.distance,
                            training_points=points)


# ---------------------------------------------------------------------------
# Budgets
# ---------------------------------------------------------------------------

def algorithm_budget(config: RunConfig, de_terms=('f', 'df', 'd2f')) -> GateBudget:
    """Closed-form per-iteration budget of the configured solver on its full point set."""
    n_nodes = config.resolved_n_nodes
    if config.is_lagrange:
        return hl_budget(n_nodes, n_nodes + 1, config.structure, de_terms)
    return ki_budget(config.n_qubits, config.n_layers, n_nodes, de_terms)


def config_budget(config: RunConfig) -> Dict[str, Any]:
    """Per-iteration and cumulative budgets of the solver and the Sato reference, with gate ratios."""
    full = algorithm_budget(config)
    loss_only = algorithm_budget(config, de_terms=('f',))
    sato = sato_budget(config.bc_kind, n_shift_circuits=config.n_shift_circuits)
    model = sato_gate_model(config.bc_kind, n_shift_circuits=config.n_shift_circuits)
    return {
        'algorithm': config.algorithm,
        'assumed_iterations': config.max_iters,
        'solver': full.accumulated(config.max_iters).to_dict(),
        'solver_loss_evaluation': loss_only.accumulated(config.max_iters).to_dict(),
        'sato': dict(sato.accumulated(config.max_iters).to_dict(), n_parameters=model.n_parameters,
                     n_observables=model.n_observables),
        'sato_gate_ratio_full': gate_ratio(sato, full),
        'sato_gate_ratio_loss_evaluation': gate_ratio(sato, loss_only),
    }


# ---------------------------------------------------------------------------
# Poisson halves
# ---------------------------------------------------------------------------

def _join_tables(first: EvaluationTable, second: EvaluationTable) -> EvaluationTable:
    order = np.argsort(np.concatenate([first.t, second.t]), kind='stable')

    def joined(name):
        return np.concatenate([getattr(first, name), getattr(second, name)])[order]

    return EvaluationTable(joined('t'), joined('f'), joined('f_ref'), joined('f1'), joined('f1_ref'),
                           joined('f2'), joined('f2_ref'), joined('de_loss'), first.bc_loss + second.bc_loss)


def mirror_table(trained: ProblemSpec, spec: ReadoutSpec, theta, ts, distance: str = 'mse') -> EvaluationTable:
    """Other half from the antisymmetry f(x) = -f(2 x_m - x)."""
    other = trained.mirrored()
    ts = np.asarray(ts, dtype=float)
    reflected = evaluate_solution(trained, spec, theta, ts=2 * trained.midpoint - ts, distance=distance)
    reference = np.array([other.analytical(t) for t in ts]).reshape(-1, 3)
    f, f1, f2 = -reflected.f, reflected.f1, -reflected.f2
    residuals = np.array([other.residual(t, *row) for t, row in zip(ts, zip(f, f1, f2))])
    return EvaluationTable(ts, f, reference[:, 0], f1, reference[:, 1], f2, reference[:, 2],
                           distance_values(residuals, distance), reflected.bc_loss)


def _poisson_table(config: RunConfig, problem: ProblemSpec, trace: TrainingTrace,
                   other_trace: Optional[TrainingTrace]) -> EvaluationTable:
    spec = trace.spec.with_shift(trace.shift)
    if config.right_half == 'none':
        return evaluate_solution(problem, spec, trace.theta, config.evaluation_points, distance=config.distance)
    a, b = problem.domain
    ts = np.linspace(a, b, config.evaluation_points)
    on_trained = ts <= problem.midpoint if problem.half == 'left' else ts >= problem.midpoint
    trained_table = evaluate_solution(problem, spec, trace.theta, ts=ts[on_trained], distance=config.distance)
    if config.right_half == 'mirror':
        other_table = mirror_table(problem, spec, trace.theta, ts[~on_trained], config.distance)
    else:
        other_spec = other_trace.spec.with_shift(other_trace.shift)
        other_table = evaluate_solution(problem.mirrored(), other_spec, other_trace.theta,
                                        ts=ts[~on_trained], distance=config.distance)
    return _join_tables(trained_table, other_table)


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

def _train(config: RunConfig, problem: ProblemSpec, seed: int) -> TrainingTrace:
    settings = build_settings(config, problem)
    if not config.is_lagrange:
        return run_ki_dmss(config.n_qubits, config.n_layers, config.node_kind, config.resolved_n_nodes, seed,
                           config.max_iters, config.resolved_eta, config.learning_rate, problem=problem,
                           override_ranges=True, settings=settings)
    return run_training(problem, build_readout(config, problem), build_schedule(config), seed,
                        config.max_iters, settings)


def run_seed(config: RunConfig, seed: int) -> SeedResult:
    """Train and evaluate one seed; a diverged run keeps its partial trace and has no table."""
    problem = build_problem(config)
    try:
        trace = _train(config, problem, seed)
        other_trace = None
        if config.problem == 'poisson' and config.right_half == 'solve':
            other_trace = _train(config, problem.mirrored(), seed)
    except DivergenceError as e:
        logger.error(f"Seed {seed} diverged: {e}")
        return SeedResult(seed, 'diverged', e.trace)

    if config.problem == 'poisson':
        table = _poisson_table(config, problem, trace, other_trace)
    else:
        table = evaluate_solution(problem, trace.spec.with_shift(trace.shift), trace.theta,
                                  config.evaluation_points, distance=config.distance)
    status = trace.status
    if other_trace is not None and other_trace.status != 'converged':
        status = other_trace.status
    logger.info(f"Seed {seed}: {status}, DE loss {table.de_loss_total:.6e}, BC loss {table.bc_loss:.6e}")
    return SeedResult(seed, status, trace, table, other_trace)


def resolve_output_dir(config: RunConfig) -> str:
    return os.environ.get(OUTPUT_DIR_ENV) or config.output_dir


def run_experiment(config: RunConfig, output_dir: Optional[str] = None,
                   use_registry: bool = True) -> Tuple[RunReport, List[str]]:
    """
    Run every seed, write the reports and register the runs.

    Raises DivergenceError after the reports are written when any seed diverged.
    """
    output_dir = output_dir or resolve_output_dir(config)
    db_manager = DatabaseManager.for_output_dir(output_dir) if use_registry else None
    session = db_manager.get_session() if db_manager else None

    report = RunReport(config, budget=config_budget(config))
    try:
        if session is not None:
            db_manager.log_action(session, 'RUN_STARTED', f"{config.name}: seeds {list(config.seeds)}")
        for seed in config.seeds:
            started = time.perf_counter()
            result = run_seed(config, seed)
            report.results.append(result)
            if session is not None:
                latest = result.trace.records[-1] if result.trace.records else None
                db_manager.record_run(
                    session, config_name=config.name, algorithm=config.algorithm, problem=config.problem,
                    seed=seed, status=result.status, iterations=result.trace.iterations,
                    loss_total=latest.loss_total if latest else None,
                    de_loss=result.table.de_loss_total if result.table is not None else None,
                    bc_loss=result.table.bc_loss if result.table is not None else None,
                    circuits_cum=latest.circuits_cum if latest else 0,
                    gates_cum=latest.gates_cum if latest else 0,
                    wall_clock=time.perf_counter() - started, report_dir=os.path.abspath(output_dir),
                )

        paths = emit_report(report, output_dir)
        if session is not None:
            db_manager.log_action(session, 'REPORT_WRITTEN', f"{len(paths)} files in {output_dir}")
    finally:
        if session is not None:
            session.close()

    diverged = [r for r in report.results if r.status == 'diverged']
    if diverged:
        raise DivergenceError(f"{len(diverged)} of {len(report.results)} seeds diverged",
                              diverged[0].trace)
    return report, paths
