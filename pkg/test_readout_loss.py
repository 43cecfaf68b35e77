#!/usr/bin/env python3
"""
Tests for the readout, the floating shift and loss assembly.
"""
import sys
from math import pi

import numpy as np
from numpy.testing import assert_allclose

from business.problems import ProblemSpec, chebyshev_nodes, coordinate_map
from business.readout_loss import (
    ReadoutSpec, assemble_loss, cs_loss, de_loss, distance_values, evaluate_points, floating_shift,
    raw_readout, readout, reg_loss, total_loss
)
from simulation.circuits import NodeSet, build_chebyshev_map, build_lagrange_map, build_vqc
from utils.exceptions import LossError


def _spec(n=3, amplitude=1.0):
    nodes = NodeSet(chebyshev_nodes(1, 0.0, 0.9, n))
    return ReadoutSpec.for_circuit(build_vqc(build_lagrange_map(nodes, 'simplified'), 1), amplitude), nodes


def test_floating_shift_meets_constraint():
    spec, _ = _spec()
    theta = np.array([0.3, -1.2, 2.0])
    shift = floating_shift(spec, 0.0, 1.0, theta)
    assert abs(readout(spec.with_shift(shift), 0.0, theta) - 1.0) < 1e-12


def test_amplitude_scales_readout():
    spec, nodes = _spec(amplitude=25.0)
    theta = np.array([0.1, 0.2, 0.3])
    assert abs(raw_readout(spec, nodes.nodes[1], theta) - 25.0 * np.cos(0.2)) < 1e-9


def test_evaluate_points_chain_rule():
    spec, _ = _spec()
    theta = np.array([0.5, -0.7, 1.1])
    xs = [0.2, 0.5]
    plain = evaluate_points(spec, theta, xs, 2)
    scaled = evaluate_points(spec, theta, xs, 2, dx_dt=0.09)
    assert_allclose(scaled.f, plain.f)
    assert_allclose(scaled.f1, 0.09 * plain.f1)
    assert_allclose(scaled.f2, 0.09 ** 2 * plain.f2)
    assert plain.grad_f is None, "gradients only on request"


def test_evaluate_points_theta_gradient():
    spec, _ = _spec()
    theta = np.array([0.5, -0.7, 1.1])
    values = evaluate_points(spec, theta, [0.3], 2, with_gradient=True)
    h = 1e-6
    for k in range(3):
        step = np.zeros(3)
        step[k] = h
        plus = evaluate_points(spec, theta + step, [0.3], 2)
        minus = evaluate_points(spec, theta - step, [0.3], 2)
        assert abs(values.grad_f[0, k] - (plus.f[0] - minus.f[0]) / (2 * h)) < 1e-6
        assert abs(values.grad_f1[0, k] - (plus.f1[0] - minus.f1[0]) / (2 * h)) < 1e-5
    assert values.circuits['f'] == 1 + 2 * 3, "base configuration plus two shifts per parameter"


def test_assemble_loss_gradient():
    problem = ProblemSpec.dmss()
    spec, nodes = _spec(4)
    rng = np.random.default_rng(2)
    theta = rng.uniform(-pi, pi, 4)
    reg = [(nodes.nodes[0], 0.9)]
    eta = (1.0, 1.0, 1.0)
    evaluation = assemble_loss(problem, spec, theta, nodes.nodes[2:], reg, eta)
    assert evaluation.gradient.shape == (4,)
    h = 1e-6
    for k in range(4):
        step = np.zeros(4)
        step[k] = h
        plus = assemble_loss(problem, spec, theta + step, nodes.nodes[2:], reg, eta, with_gradient=False)
        minus = assemble_loss(problem, spec, theta - step, nodes.nodes[2:], reg, eta, with_gradient=False)
        fd = (plus.breakdown.total - minus.breakdown.total) / (2 * h)
        assert abs(evaluation.gradient[k] - fd) < 1e-5 * max(1.0, abs(fd)), f"gradient component {k}"


def test_assemble_loss_matches_term_functions():
    problem = ProblemSpec.dmss()
    spec, nodes = _spec(4)
    theta = np.array([0.4, 1.3, -0.6, 2.2])
    reg = [(nodes.nodes[1], 0.5)]
    evaluation = assemble_loss(problem, spec, theta, nodes.nodes[2:], reg, (1.0, 2.0, 0.5))
    shifted = spec.with_shift(evaluation.shift)
    coords = coordinate_map(problem)
    assert abs(evaluation.shift - floating_shift(spec, coords.to_encoded(0.0), 1.0, theta)) < 1e-12
    assert abs(evaluation.breakdown.de - de_loss(problem, shifted, theta, nodes.nodes[2:])) < 1e-10
    assert abs(evaluation.breakdown.cs - cs_loss(problem, shifted, theta)) < 1e-10
    assert abs(evaluation.breakdown.reg - reg_loss(shifted, theta, reg)) < 1e-10
    expected = evaluation.breakdown.de + 2.0 * evaluation.breakdown.cs + 0.5 * evaluation.breakdown.reg
    assert abs(evaluation.breakdown.total - expected) < 1e-12


def test_loss_mode_constraints():
    problem = ProblemSpec.dmss(bc_mode='loss')
    spec, nodes = _spec(3)
    theta = np.zeros(3)
    evaluation = assemble_loss(problem, spec, theta, nodes.nodes, [], (1.0, 1.0, 0.0))
    assert evaluation.shift == 0.0, "no floating constraint, no shift"
    # theta = 0 reads 1 everywhere: u(0) = 1 holds and u'(0) = 0 holds
    assert evaluation.breakdown.cs < 1e-20


def test_distances():
    residuals = np.array([-2.0, 0.5])
    assert_allclose(distance_values(residuals, 'mse'), [4.0, 0.25])
    assert_allclose(distance_values(residuals, 'mae'), [2.0, 0.5])


def test_chebyshev_readout_weights():
    spec = ReadoutSpec.for_circuit(build_vqc(build_chebyshev_map(3), 1))
    assert spec.engine == 'shift'
    assert_allclose(spec.weights, np.ones(3))
    value = raw_readout(spec, 0.0, np.zeros(3))
    assert abs(value - sum(np.cos(2 * j * np.arccos(0.0)) for j in (1, 2, 3))) < 1e-12


def test_invalid_losses():
    spec, nodes = _spec()
    problem = ProblemSpec.dmss()
    bad = [
        lambda: total_loss(1.0, 1.0, 1.0, (1.0, -1.0, 0.0)),
        lambda: total_loss(1.0, 1.0, 1.0, (1.0, 1.0)),
        lambda: distance_values(np.zeros(2), 'huber'),
        lambda: de_loss(problem, spec, np.zeros(3), []),
        lambda: assemble_loss(problem, spec, np.zeros(3), [], [], (1.0, 1.0, 1.0)),
        lambda: ReadoutSpec(spec.circuit, spec.map_kind, np.ones(3)),
        lambda: ReadoutSpec.for_circuit(spec.circuit, amplitude=0.0),
    ]
    for make in bad:
        try:
            make()
            assert False, "expected LossError"
        except LossError:
            pass
    assert reg_loss(spec, np.zeros(3), []) == 0.0


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
