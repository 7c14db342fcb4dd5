"""Quadrature rules on the reference triangle and the unit interval.

Triangle rules are generated collapsed Gauss-Legendre (Duffy) rules: a
tensor Gauss grid on the unit square mapped by (x, y) = (u, v(1-u)) with
the Jacobian (1-u) folded into the weights.  This yields, for every
degree 1..20, a rule with strictly positive weights and strictly interior
points that integrates all monomials of total degree <= degree to
machine precision.  Weights are normalized to sum to one, i.e. the
reference-triangle measure 1/2 is *not* included: the integral of f over
a physical triangle T is area(T) * sum_i w_i f(x_i).
"""

from functools import lru_cache
from math import fsum

import numpy as np

MAX_DEGREE = 20


class QuadratureRule:
    """Container for a quadrature rule on the reference triangle.

    Attributes
    ----------
    degree : int
        Every polynomial of total degree <= degree is integrated exactly.
    points : ndarray (n, 2)
        Points in reference coordinates (x >= 0, y >= 0, x + y <= 1).
    weights : ndarray (n,)
        Positive weights summing to one.
    """

    def __init__(self, degree, points, weights):
        self.degree = degree
        self.points = points
        self.weights = weights
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    def __len__(self):
        return len(self.weights)

    def __repr__(self):
        return f"QuadratureRule(degree={self.degree}, npoints={len(self)})"


@lru_cache(maxsize=None)
def make_quadrature(degree):
    """Return the cached triangle rule exact to the given degree.

    Parameters
    ----------
    degree : int
        Requested exactness degree, 1 <= degree <= 20.  Degree 1 is the
        one-point centroid rule.
    """
    if not isinstance(degree, (int, np.integer)):
        raise ValueError(f"quadrature degree must be an integer, got {degree!r}")
    if degree < 1 or degree > MAX_DEGREE:
        raise ValueError(
            f"quadrature degree must be in [1, {MAX_DEGREE}], got {degree}"
        )
    if degree == 1:
        points = np.array([[1.0 / 3.0, 1.0 / 3.0]])
        weights = np.array([1.0])
        return QuadratureRule(1, points, weights)

    # Gauss count: the u-direction integrand carries the extra (1-u) Jacobian.
    nx = (degree + 3) // 2
    ny = (degree + 2) // 2
    tx, wx = np.polynomial.legendre.leggauss(nx)
    ty, wy = np.polynomial.legendre.leggauss(ny)
    u = (tx + 1.0) / 2.0
    v = (ty + 1.0) / 2.0
    wu = wx / 2.0
    wv = wy / 2.0
    U, V = np.meshgrid(u, v, indexing="ij")
    WU, WV = np.meshgrid(wu, wv, indexing="ij")
    points = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    weights = (WU * WV * (1.0 - U)).ravel()
    weights = weights / fsum(weights)
    return QuadratureRule(degree, points, weights)


@lru_cache(maxsize=None)
def edge_rule(degree):
    """Gauss-Legendre rule on [0, 1], weights summing to one.

    Exact for polynomials of degree <= degree; the integral of f over a
    physical edge e is |e| * sum_i w_i f(x(t_i)).
    """
    if degree < 1 or degree > 2 * MAX_DEGREE:
        raise ValueError(f"edge rule degree must be in [1, {2 * MAX_DEGREE}]")
    n = (degree + 2) // 2
    t, w = np.polynomial.legendre.leggauss(n)
    t = (t + 1.0) / 2.0
    w = w / 2.0
    order = np.argsort(t)
    t = t[order]
    w = w[order]
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def physical_points(rule, vertices, cells):
    """Map reference rule points to all cells of a mesh.

    Parameters
    ----------
    rule : QuadratureRule
    vertices : ndarray (nv, 2)
    cells : ndarray (nc, 3)

    Returns
    -------
    ndarray (nc, nq, 2) of physical quadrature points.
    """
    v0 = vertices[cells[:, 0]]
    v1 = vertices[cells[:, 1]]
    v2 = vertices[cells[:, 2]]
    x = rule.points[:, 0]
    y = rule.points[:, 1]
    lam0 = 1.0 - x - y
    return (
        lam0[None, :, None] * v0[:, None, :]
        + x[None, :, None] * v1[:, None, :]
        + y[None, :, None] * v2[:, None, :]
    )
