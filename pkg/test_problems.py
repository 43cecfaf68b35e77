#!/usr/bin/env python3
"""
Tests for problem definitions, Chebyshev nodes, coordinate maps and oracles.
"""
import sys
from math import cos, pi

import numpy as np
from numpy.testing import assert_allclose

from business.problems import (
    ProblemSpec, chebyshev_nodes, coordinate_map, dmss_analytical, dmss_reference, poisson_analytical,
    poisson_source, training_nodes
)
from business.verification import check_oracles
from utils.exceptions import ProblemError


def test_chebyshev_nodes_kind1():
    nodes = chebyshev_nodes(1, 0.0, 0.9, 3)
    assert_allclose(nodes, [0.45 - 0.45 * cos(pi / 6), 0.45, 0.45 + 0.45 * cos(pi / 6)], atol=1e-15)
    assert list(nodes) == sorted(nodes), "nodes are ascending"


def test_chebyshev_nodes_kind2():
    nodes = chebyshev_nodes(2, 0.0, 0.9, 3)
    assert_allclose(nodes, [0.9 * cos(3 * pi / 8), 0.9 * cos(pi / 8), 0.9], atol=1e-15)
    assert len(set(chebyshev_nodes(2, 0.0, 0.9, 12))) == 12, "kind-2 nodes are distinct"


def test_node_errors():
    for make in (lambda: chebyshev_nodes(3, 0.0, 0.9, 4), lambda: chebyshev_nodes(1, 0.0, 0.9, 1)):
        try:
            make()
            assert False, "expected ProblemError"
        except ProblemError:
            pass


def test_dmss_analytical():
    f, f1, f2 = dmss_analytical(0.0)
    assert abs(f - 1.0) < 1e-15 and abs(f1) < 1e-15, "initial conditions u(0) = 1, u'(0) = 0"
    assert abs(f2 + 1.0) < 1e-15, "f'' = -(b f' + k f) / m at t = 0"
    problem = ProblemSpec.dmss()
    for t in np.linspace(0.0, 10.0, 21):
        assert abs(problem.residual(t, *problem.analytical(t))) < 1e-12


def test_dmss_reference_matches_closed_form():
    problem = ProblemSpec.dmss()
    ts = np.linspace(0.0, 10.0, 11)
    closed = np.array([dmss_analytical(t)[0] for t in ts])
    assert_allclose(dmss_reference(problem, ts), closed, atol=1e-6)


def test_dmss_must_be_underdamped():
    try:
        ProblemSpec.dmss(damping=3.0)
        assert False, "b^2 >= 4mk should be rejected"
    except ProblemError:
        pass


def test_dmss_constraints():
    problem = ProblemSpec.dmss()
    anchor = problem.floating_constraint()
    assert anchor is not None and anchor.kind == 'value' and anchor.target == 1.0
    assert any(c.kind == 'derivative' and not c.floating for c in problem.constraints)
    assert ProblemSpec.dmss(bc_mode='loss').floating_constraint() is None


def test_coordinate_map():
    problem = ProblemSpec.dmss()
    coords = coordinate_map(problem)
    assert abs(coords.dx_dt - 0.09) < 1e-15
    assert abs(coords.to_physical(0.45) - 5.0) < 1e-12
    assert abs(coords.to_encoded(10.0) - 0.9) < 1e-12
    assert_allclose(training_nodes(problem, 1, 5), chebyshev_nodes(1, 0.0, 0.9, 5))


def test_poisson_half_problem():
    problem = ProblemSpec.poisson('dirichlet', 'left')
    assert problem.physical_interval == (-1.0, 15.5)
    assert problem.evaluation_interval == (0.0, 15.5)
    anchor = problem.floating_constraint()
    assert anchor.t == 15.5 and anchor.target == 0.0
    magnitude = 0.5 ** 2.5
    assert problem.source(15.5) == magnitude, "the left half keeps its sign at the midpoint"

    right = problem.mirrored()
    assert right.half == 'right' and right.physical_interval == (15.5, 32.0)
    assert right.source(15.5) == -magnitude
    assert right.amplitude_scale == problem.amplitude_scale


def test_poisson_oracle():
    a, b = 0.0, 31.0
    for bc_kind in ('periodic', 'dirichlet', 'neumann'):
        for x in np.linspace(-1.0, 32.0, 40):
            if x == 15.5:
                continue
            _, _, f2 = poisson_analytical(x, bc_kind)
            assert abs(f2 + poisson_source(x)) < 1e-12, f"{bc_kind} residual at {x}"
        left, right = (poisson_analytical(15.5, bc_kind, side=side) for side in ('left', 'right'))
        assert left[0] == 0.0 and right[0] == 0.0, "f vanishes at the midpoint"
        assert abs(left[2] + right[2]) < 1e-15, "halves are antisymmetric"
    assert poisson_analytical(a - 1.0, 'dirichlet')[0] == 0.0
    assert poisson_analytical(b + 0.5, 'periodic')[0] == 0.0
    assert poisson_analytical(a, 'neumann')[1] == 0.0


def test_poisson_source_discontinuity():
    try:
        poisson_source(15.5)
        assert False, "the two-sided source is undefined at the midpoint"
    except ProblemError:
        pass


def test_oracle_checks():
    for result in check_oracles(np.random.default_rng(1)):
        assert result.passed, f"{result.name}: {result.detail}"


def test_invalid_problems():
    bad = [
        lambda: ProblemSpec.poisson('robin'),
        lambda: ProblemSpec.poisson('dirichlet', 'middle'),
        lambda: ProblemSpec.dmss(encoded_interval=(0.0, 1.0)),
        lambda: ProblemSpec.dmss((5.0, 5.0)),
        lambda: ProblemSpec.dmss().mirrored(),
        lambda: dmss_reference(ProblemSpec.poisson('dirichlet'), [1.0]),
    ]
    for make in bad:
        try:
            make()
            assert False, "expected ProblemError"
        except ProblemError:
            pass


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
