#!/usr/bin/env python3
"""
Tests for the optimizer, the training schedules and solution evaluation.
"""
import sys

import numpy as np
from numpy.testing import assert_allclose

from business.complexity import CircuitCounter
from business.problems import ProblemSpec, chebyshev_nodes
from business.readout_loss import ReadoutSpec
from business.training import (
    AdamState, IterationRecord, Schedule, TrainingSettings, TrainingTrace, _TwoPartPlan, adam_step,
    converged, evaluate_solution, initial_theta, run_training
)
from simulation.circuits import NodeSet, build_lagrange_map, build_vqc
from utils.exceptions import DivergenceError, TrainingError


def _spec(n):
    nodes = NodeSet(chebyshev_nodes(1, 0.0, 0.9, n))
    return ReadoutSpec.for_circuit(build_vqc(build_lagrange_map(nodes, 'simplified'), 1))


def _record(iteration, loss=1.0, grad=1.0):
    return IterationRecord(iteration, loss, loss, 0.0, 0.0, grad, 0.01, (0, 1), (), iteration, 10 * iteration)


def test_adam_zero_gradient():
    state = AdamState.initial([0.5, -1.0])
    after = adam_step(state, [0.0, 0.0])
    assert_allclose(after.theta, state.theta)
    assert after.step_count == 1, "a step is counted even without movement"


def test_adam_first_step():
    state = AdamState.initial(np.zeros(3), learning_rate=0.01)
    after = adam_step(state, np.ones(3))
    # bias correction makes the first step lr * g / (|g| + eps)
    assert_allclose(after.theta, -0.01 * np.ones(3) / (1.0 + 1e-8), rtol=1e-12)
    assert_allclose(after.m, 0.1 * np.ones(3))
    assert_allclose(after.v, 0.001 * np.ones(3))
    assert state.step_count == 0, "the input state is not modified"


def test_adam_learning_rate_override():
    state = AdamState.initial(np.zeros(1), learning_rate=0.01)
    after = adam_step(state, [2.0], learning_rate=0.04)
    assert abs(after.theta[0] + 0.04) < 1e-9
    assert after.learning_rate == 0.04


def test_adam_grown_state():
    state = adam_step(AdamState.initial([0.1, 0.2]), [1.0, -1.0])
    grown = state.grown([0.7])
    assert_allclose(grown.theta, np.concatenate([state.theta, [0.7]]))
    assert grown.m[-1] == 0.0 and grown.v[-1] == 0.0
    assert grown.step_count == state.step_count


def test_adam_rejects_bad_input():
    state = AdamState.initial(np.zeros(2))
    for gradient in ([1.0], [np.nan, 0.0]):
        try:
            adam_step(state, gradient)
            assert False, f"gradient {gradient} should be rejected"
        except TrainingError:
            pass
    try:
        AdamState(np.zeros(2), np.zeros(2), -np.ones(2))
        assert False, "negative second moments are invalid"
    except TrainingError:
        pass


def test_converged():
    trace = TrainingTrace()
    trace.append(_record(1, loss=0.5, grad=0.5))
    assert not converged(trace, 1e-4, 1e-4)
    trace.append(_record(2, loss=5e-5, grad=0.5))
    assert converged(trace, 1e-4, 1e-4), "loss below eps_loss"
    trace.append(_record(3, loss=0.5, grad=1e-5))
    assert converged(trace, 1e-4, 1e-4), "every gradient component below eps_grad"


def test_trace_iterations_increase():
    trace = TrainingTrace()
    trace.append(_record(1))
    trace.append(_record(2))
    try:
        trace.append(_record(2))
        assert False, "iterations must increase"
    except TrainingError:
        pass
    assert trace.iterations == 2
    assert_allclose(trace.losses(), [1.0, 1.0])


def test_record_rejects_shared_nodes():
    try:
        IterationRecord(1, 1.0, 1.0, 0.0, 0.0, 1.0, 0.01, (1, 2), (2,), 0, 0)
        assert False, "a node cannot be a DE and a regularization point at once"
    except TrainingError:
        pass


def test_schedule_learning_rates():
    schedule = Schedule.two_part()
    assert schedule.part1_learning_rate(1.0) == 0.04
    assert schedule.part1_learning_rate(0.05) == 0.02
    assert schedule.part1_learning_rate(0.001) == 0.01
    try:
        Schedule('cosine')
        assert False, "unknown schedule kind"
    except TrainingError:
        pass


def test_initial_theta_is_seeded():
    assert_allclose(initial_theta(5, 3), initial_theta(5, 3))
    assert not np.allclose(initial_theta(5, 3), initial_theta(5, 4))
    theta = initial_theta(1000, 0)
    assert np.all(theta >= -np.pi) and np.all(theta < np.pi)


def test_fixed_schedule_run():
    problem = ProblemSpec.dmss()
    settings = TrainingSettings(eps_loss=0.0, eps_grad=0.0)
    trace = run_training(problem, _spec(3), Schedule.fixed(0.05), seed=1, max_iters=4, settings=settings)
    assert trace.status == 'max_iters'
    assert trace.iterations == 4
    assert [r.iteration for r in trace.records] == [1, 2, 3, 4]
    circuits = [r.circuits_cum for r in trace.records]
    assert all(b > a for a, b in zip(circuits, circuits[1:])), "circuit counts accumulate"
    assert all(r.active_nodes == (0, 1, 2) for r in trace.records)
    gates = len(_spec(3).circuit.gates)
    assert all(r.built_gates_cum == r.circuits_cum * gates for r in trace.records), "built gates follow the circuit"
    assert trace.theta.shape == (3,)

    again = run_training(problem, _spec(3), Schedule.fixed(0.05), seed=1, max_iters=4, settings=settings)
    assert_allclose(again.losses(), trace.losses(), rtol=0, atol=0)
    assert_allclose(again.theta, trace.theta, rtol=0, atol=0)


def test_two_part_schedule_run():
    problem = ProblemSpec.dmss()
    # a loose threshold converges every iteration, so each stage transition happens once
    settings = TrainingSettings(eps_loss=1e3)
    trace = run_training(problem, _spec(4), Schedule.two_part(), seed=0, max_iters=20, settings=settings)
    assert trace.status == 'converged'
    assert trace.iterations == 4
    assert trace.part1_iterations == 2
    assert [r.active_nodes for r in trace.records] == [(1, 2), (2, 3), (0, 1, 2), (1, 2, 3)]
    assert [r.regularization_nodes for r in trace.records] == [(), (1,), (3,), (0,)]
    assert [r.stage for r in trace.records] == ['part1', 'part1', 'part2', 'part2']
    kinds = [e.kind for e in trace.events]
    assert kinds == ['node_added', 'part1_finished', 'window_moved', 'window_moved', 'sweep_finished']
    assert trace.theta.shape == (4,), "the register grew to every node"
    assert len(trace.reg_points) == 1


def test_stage_caps_advance_schedule():
    problem = ProblemSpec.dmss()
    settings = TrainingSettings(eps_loss=0.0, eps_grad=0.0)
    schedule = Schedule.two_part(stage_iters=2, window_iters=1)
    trace = run_training(problem, _spec(4), schedule, seed=0, max_iters=50, settings=settings)
    assert trace.status == 'converged', "a capped schedule still runs to its end"
    assert trace.iterations == 6
    assert trace.part1_iterations == 4
    kinds = [e.kind for e in trace.events]
    assert kinds == ['stage_capped', 'node_added', 'stage_capped', 'part1_finished', 'window_moved',
                     'stage_capped', 'window_moved', 'stage_capped', 'sweep_finished']
    assert [e.iteration for e in trace.events if e.kind == 'stage_capped'] == [2, 4, 5, 6]
    try:
        Schedule.two_part(stage_iters=-1)
        assert False, "negative caps are invalid"
    except TrainingError:
        pass


def test_stage_change_restarts_moments():
    theta = initial_theta(3, 0)
    state = adam_step(AdamState.initial(theta), np.ones(3))
    for reset in (True, False):
        plan = _TwoPartPlan(_spec(4), Schedule.two_part(reset_moments=reset))
        grown, finished = plan.advance(state, 0.0, 7, TrainingTrace(), CircuitCounter())
        assert not finished and grown.theta.shape == (4,)
        assert_allclose(grown.theta[:3], state.theta)
        assert plan.stage_started == 8
        if reset:
            assert grown.step_count == 0 and not grown.m.any() and not grown.v.any()
        else:
            assert grown.step_count == 1
            assert_allclose(grown.m[:3], state.m)


def test_two_part_needs_lagrange_nodes():
    try:
        run_training(ProblemSpec.dmss(), _spec(2), Schedule.two_part(), seed=0, max_iters=2)
        assert False, "two nodes cannot start the schedule"
    except TrainingError:
        pass


def test_divergence_keeps_trace():
    settings = TrainingSettings(divergence_limit=1e-12, eps_loss=0.0, eps_grad=0.0)
    try:
        run_training(ProblemSpec.dmss(), _spec(3), Schedule.fixed(), seed=2, max_iters=5, settings=settings)
        assert False, "a loss above the limit diverges"
    except DivergenceError as e:
        assert e.trace.status == 'diverged'
        assert e.trace.iterations == 1
        assert e.loss > 1e-12


def test_evaluate_solution():
    problem = ProblemSpec.dmss()
    spec = _spec(3)
    theta = np.zeros(3)
    table = evaluate_solution(problem, spec.with_shift(0.0), theta, n_points=6)
    assert len(table) == 6
    assert_allclose(table.t, np.linspace(0.0, 10.0, 6))
    # theta = 0 reads the constant 1, so f' = f'' = 0 and the residual is k f = 1
    assert_allclose(table.f, np.ones(6), atol=1e-10)
    assert_allclose(table.de_loss, np.ones(6), atol=1e-9)
    assert abs(table.f_ref[0] - 1.0) < 1e-12
    assert len(list(table.rows())) == 6


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
