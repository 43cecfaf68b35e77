#!/usr/bin/env python3
"""
Tests for circuit and gate accounting.
"""
import sys

from business.complexity import (
    CircuitCounter, GateBudget, built_gates_per_circuit, circuit_gate_model, gate_ratio, hl_budget,
    hl_gates_per_circuit, ki_budget, ki_gates_per_circuit, sato_budget, sato_gate_model
)
from business.problems import chebyshev_nodes
from business.verification import check_complexity_goldens
from simulation.circuits import FeatureMapKind, NodeSet, build_lagrange_map, build_vqc
from utils.exceptions import SolverError


def test_ki_goldens():
    budget = ki_budget(5, 2, 12)
    assert budget.circuits_per_iteration == 30303, "13 points x 21 configurations x (1 + 10 + 100)"
    assert ki_gates_per_circuit(5, 2)['f'] == 25
    assert budget.gates_per_iteration == 30303 * 25


def test_hl_goldens():
    gates = hl_gates_per_circuit(7, 'simplified')
    assert gates == {'f': 52, 'df': 53, 'd2f': 54}
    assert hl_gates_per_circuit(7, 'extended')['f'] == 49

    budget = hl_budget(3, 4, 'simplified')
    assert budget.circuits_by_class == {'f': 28, 'df': 84, 'd2f': 252}
    loss_only = hl_budget(3, 4, 'simplified', de_terms=('f',))
    assert loss_only.circuits_by_class == {'f': 28, 'df': 0, 'd2f': 0}


def test_sato_goldens():
    model = sato_gate_model('neumann')
    assert model.n_parameters == 45 and model.n_observables == 5
    assert sato_budget('neumann').circuits_per_iteration == 230
    assert sato_budget('periodic').circuits_per_iteration == 3 * 46
    assert sato_gate_model('neumann', n_shift_circuits=0).gates_per_circuit < model.gates_per_circuit


def test_gate_ratio():
    sato = sato_budget('neumann')
    loss_only = hl_budget(3, 3, 'simplified', de_terms=('f',))
    assert gate_ratio(sato, loss_only) >= 50
    assert gate_ratio(sato, hl_budget(3, 3, 'simplified')) < gate_ratio(sato, loss_only)
    empty = GateBudget({'f': 0}, {'f': 10})
    try:
        gate_ratio(sato, empty)
        assert False, "a budget without gates cannot divide"
    except SolverError:
        pass


def test_accumulated_budget():
    budget = hl_budget(3, 4, 'simplified').accumulated(10)
    data = budget.to_dict()
    assert data['total_circuits'] == 10 * data['circuits_per_iteration']
    assert data['total_basic_gates'] == 10 * data['gates_per_iteration']


def test_circuit_gate_model():
    lagrange = FeatureMapKind.lagrange(NodeSet((0.1, 0.5, 0.8)), 'simplified')
    assert circuit_gate_model(lagrange, 3) == hl_gates_per_circuit(3, 'simplified')
    assert circuit_gate_model(FeatureMapKind.chebyshev(5), 10) == ki_gates_per_circuit(5, 2)


def test_counter():
    counter = CircuitCounter()
    counter.charge({'f': 3, 'df': 2}, {'f': 10, 'df': 11})
    counter.charge({'f': 1}, {'f': 10})
    assert counter.close_iteration() == (6, 62)
    counter.charge({'d2f': 1}, {'d2f': 12})
    assert counter.close_iteration() == (1, 12)
    assert (counter.total_circuits, counter.total_gates) == (7, 74)
    assert counter.history == [(6, 62), (1, 12)]


def test_gate_model_and_built_circuit_relations():
    for n in (3, 4, 7):
        nodes = NodeSet(chebyshev_nodes(1, 0.0, 0.9, n))
        model_simplified = hl_gates_per_circuit(n, 'simplified')['f']
        model_extended = hl_gates_per_circuit(n, 'extended')['f']
        assert model_simplified - model_extended == n // 2, "the gate model charges the simplified map more"
        simplified = build_vqc(build_lagrange_map(nodes, 'simplified'), 1)
        extended = build_vqc(build_lagrange_map(nodes, 'extended'), 1)
        built_simplified = built_gates_per_circuit(simplified)
        built_extended = built_gates_per_circuit(extended)
        assert built_simplified == {'f': 7 * n - 2, 'df': 7 * n - 2, 'd2f': 7 * n - 2}
        assert built_extended['f'] - built_simplified['f'] == 3 * n, "the built parity network is longer"


def test_counter_tracks_built_gates():
    counter = CircuitCounter()
    counter.charge({'f': 2, 'df': 3}, {'f': 10, 'df': 11}, {'f': 8, 'df': 8})
    counter.charge({'f': 1}, {'f': 10})
    assert counter.close_iteration() == (6, 63)
    assert counter.total_built_gates == 40
    counter.charge({'d2f': 1}, {'d2f': 12}, {'d2f': 8})
    counter.close_iteration()
    assert (counter.total_gates, counter.total_built_gates) == (75, 48)
    assert counter.iteration_built_gates == 0


def test_invalid_budgets():
    bad = [
        lambda: ki_budget(0, 2, 12),
        lambda: hl_budget(3, 3, 'simplified', de_terms=('d3f',)),
        lambda: hl_gates_per_circuit(3, 'diagonal'),
        lambda: sato_gate_model('robin'),
        lambda: GateBudget({'f': -1}, {'f': 1}),
    ]
    for make in bad:
        try:
            make()
            assert False, "expected SolverError"
        except SolverError:
            pass


def test_golden_checks():
    for result in check_complexity_goldens():
        assert result.passed, f"{result.name}: {result.detail}"


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
