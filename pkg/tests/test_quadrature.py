"""Quadrature rules: exactness, positivity, determinism."""

from math import factorial

import numpy as np
import pytest

from equistress.quadrature import (MAX_DEGREE, edge_rule, make_quadrature,
                                   physical_points)


def reference_integral(a, b):
    """Exact integral of x^a y^b over the reference triangle."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("degree", range(1, MAX_DEGREE + 1))
def test_monomial_exactness(degree):
    rule = make_quadrature(degree)
    # weights exclude the reference measure 1/2
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            approx = 0.5 * np.dot(rule.weights,
                                  rule.points[:, 0] ** a
                                  * rule.points[:, 1] ** b)
            exact = reference_integral(a, b)
            assert abs(approx - exact) <= 1e-14 * max(abs(exact), 1.0)


@pytest.mark.parametrize("degree", range(1, MAX_DEGREE + 1))
def test_weights_positive_points_interior(degree):
    rule = make_quadrature(degree)
    assert np.all(rule.weights > 0.0)
    assert abs(rule.weights.sum() - 1.0) <= 1e-14
    x, y = rule.points[:, 0], rule.points[:, 1]
    assert np.all(x > 0.0) and np.all(y > 0.0)
    assert np.all(x + y < 1.0)


def test_deterministic_and_cached():
    a = make_quadrature(7)
    b = make_quadrature(7)
    assert a is b
    np.testing.assert_array_equal(a.points, b.points)


def test_degree_validation():
    with pytest.raises(ValueError):
        make_quadrature(0)
    with pytest.raises(ValueError):
        make_quadrature(MAX_DEGREE + 1)
    with pytest.raises(ValueError):
        make_quadrature(3.5)


def test_edge_rule_exactness():
    for degree in range(1, 12):
        t, w = edge_rule(degree)
        assert abs(w.sum() - 1.0) <= 1e-14
        for k in range(degree + 1):
            approx = np.dot(w, t ** k)
            assert abs(approx - 1.0 / (k + 1)) <= 1e-14


def test_physical_points_affine_map():
    rule = make_quadrature(2)
    vertices = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 3.0], [2.0, 3.0]])
    cells = np.array([[0, 1, 2], [1, 3, 2]])
    pts = physical_points(rule, vertices, cells)
    assert pts.shape == (2, len(rule.weights), 2)
    x, y = rule.points[:, 0], rule.points[:, 1]
    expected = np.stack([2.0 * x, 3.0 * y], axis=1)
    np.testing.assert_allclose(pts[0], expected, atol=1e-15)
