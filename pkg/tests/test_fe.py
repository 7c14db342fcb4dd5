"""Finite element spaces: P2 displacements, stress dual basis, projections."""

import numpy as np
import pytest

from equistress.fe import (MONO_EXP, CellPolynomial, P2Space, StressBasis,
                           StressSpace, monomial_gradients, monomial_values,
                           p2_gradients, p2_values, project_cellwise,
                           rigid_modes, shifted_legendre)
from equistress.mesh import l_shape, unit_square
from equistress.quadrature import edge_rule, make_quadrature, physical_points

REF_NODES = np.array([
    [0.0, 0.0], [1.0, 0.0], [0.0, 1.0],
    [0.5, 0.5], [0.0, 0.5], [0.5, 0.0],
])


def test_p2_nodal_basis():
    np.testing.assert_allclose(p2_values(REF_NODES), np.eye(6), atol=1e-14)


def test_p2_gradients_match_fd():
    rng = np.random.default_rng(0)
    pts = rng.random((5, 2)) * 0.4 + 0.1
    grads = p2_gradients(pts)
    h = 1e-6
    for a in range(2):
        d = np.zeros(2)
        d[a] = h
        fd = (p2_values(pts + d) - p2_values(pts - d)) / (2 * h)
        np.testing.assert_allclose(grads[:, :, a], fd, atol=1e-9)


def test_space_dimension_and_dof_layout():
    mesh = unit_square(0.5)
    space = P2Space(mesh)
    assert space.ndof == 2 * (mesh.nv + mesh.nf)
    assert space.cell_dofs.shape == (mesh.nc, 12)
    # interleaved components of shared nodes coincide across cells
    assert len(np.unique(space.cell_dofs)) == len(
        np.unique(space.cell_nodes)) * 2


def quadratic_field(pts):
    return np.stack([pts[..., 0] ** 2, pts[..., 0] * pts[..., 1]], axis=-1)


def quadratic_strain(pts):
    e11 = 2.0 * pts[..., 0]
    e22 = pts[..., 0]
    e12 = 0.5 * pts[..., 1]
    return np.stack([e11, e22, e12], axis=-1)


def interpolate(space, field):
    u = np.empty(space.ndof)
    vals = field(space.node_coords)
    u[0::2] = vals[:, 0]
    u[1::2] = vals[:, 1]
    return u


def test_strains_reproduce_quadratics():
    mesh = l_shape(0.5)
    space = P2Space(mesh)
    u = interpolate(space, quadratic_field)
    rule = make_quadrature(4)
    pts = physical_points(rule, mesh.vertices, mesh.cells)
    np.testing.assert_allclose(space.strains_at(u, rule),
                               quadratic_strain(pts), atol=1e-12)
    np.testing.assert_allclose(space.values_at(u, rule),
                               quadratic_field(pts), atol=1e-12)


def test_strains_at_points_consistent():
    mesh = l_shape(0.5)
    space = P2Space(mesh)
    rng = np.random.default_rng(1)
    u = rng.standard_normal(space.ndof)
    rule = make_quadrature(3)
    pts = physical_points(rule, mesh.vertices, mesh.cells)
    ref = space.strains_at(u, rule)
    sub = np.array([0, 3, 7])
    got = space.strains_at_points(u, pts[sub], sub)
    np.testing.assert_allclose(got, ref[sub], atol=1e-13)


def test_strain_gradients():
    mesh = l_shape(0.5)
    space = P2Space(mesh)
    u = interpolate(space, quadratic_field)
    sg = space.strain_gradients(u)
    expected = np.array([[2.0, 0.0], [1.0, 0.0], [0.0, 0.5]])
    np.testing.assert_allclose(sg, np.broadcast_to(expected, sg.shape),
                               atol=1e-12)


def test_boundary_nodes():
    mesh = unit_square(0.5)
    space = P2Space(mesh)
    coords = space.node_coords[space.boundary_nodes]
    on_edge = (np.isclose(coords, 0.0) | np.isclose(coords, 1.0)).any(axis=1)
    assert on_edge.all()
    interior = np.setdiff1d(np.arange(space.nnodes), space.boundary_nodes)
    coords_in = space.node_coords[interior]
    assert np.all((coords_in > 0.0) & (coords_in < 1.0))


def test_shifted_legendre_orthogonality():
    t, w = edge_rule(8)
    leg = shifted_legendre(t)
    gram = (leg * w) @ leg.T
    np.testing.assert_allclose(gram, np.diag([1.0, 1.0 / 3.0, 1.0 / 5.0]),
                               atol=1e-14)


def test_project_cellwise_reproduces_polynomials():
    mesh = l_shape(0.5)
    rng = np.random.default_rng(2)
    rule = make_quadrature(4)
    pts = physical_points(rule, mesh.vertices, mesh.cells)
    coef = rng.standard_normal((mesh.nc, 2, 6))
    mono = monomial_values(mesh, pts, 6)
    values = np.einsum("cmk,cqk->cqm", coef, mono)
    got = project_cellwise(values, mesh, rule, 6)
    np.testing.assert_allclose(got, coef, atol=1e-11)
    poly = CellPolynomial(mesh, got)
    np.testing.assert_allclose(poly.values(rule), values, atol=1e-11)


def test_monomial_gradients_match_fd():
    mesh = l_shape(0.5)
    rule = make_quadrature(2)
    pts = physical_points(rule, mesh.vertices, mesh.cells)
    grads = monomial_gradients(mesh, pts, 6)
    h = 1e-6
    for a in range(2):
        d = np.zeros(2)
        d[a] = h
        fd = (monomial_values(mesh, pts + d, 6)
              - monomial_values(mesh, pts - d, 6)) / (2 * h)
        np.testing.assert_allclose(grads[..., a], fd, atol=1e-8)


def test_rigid_modes_have_zero_strain():
    pts = np.random.default_rng(3).random((10, 2))
    center = np.array([0.3, 0.7])
    h = 1e-6
    for mode in range(3):
        def disp(p, mode=mode):
            return rigid_modes(p, center)[..., mode, :]
        gx = (disp(pts + [h, 0.0]) - disp(pts - [h, 0.0])) / (2 * h)
        gy = (disp(pts + [0.0, h]) - disp(pts - [0.0, h])) / (2 * h)
        e11, e22 = gx[:, 0], gy[:, 1]
        e12 = 0.5 * (gx[:, 1] + gy[:, 0])
        assert np.abs(np.stack([e11, e22, e12])).max() <= 1e-9


def test_stress_basis_dual_property():
    """Recompute the twelve dof functionals of every basis function."""
    mesh = unit_square(0.5)
    basis = StressBasis(mesh)
    tq, wq = edge_rule(6)
    leg = shifted_legendre(tq)
    vrule = make_quadrature(6)
    from equistress.fe import barycentric_values

    vpts = physical_points(vrule, mesh.vertices, mesh.cells)
    lam = barycentric_values(mesh, vpts)
    grads = mesh.hat_gradients
    for c in [0, 3]:
        vals = np.zeros((12, 12))
        for j in range(3):
            face = mesh.cell_faces[c, j]
            lo = mesh.vertices[mesh.faces[face, 0]]
            hi = mesh.vertices[mesh.faces[face, 1]]
            epts = lo[None, :] + tq[:, None] * (hi - lo)[None, :]
            n = mesh.face_normals[face]
            bv = basis.values_at(epts[None], np.array([c]))[0]  # (12, nq, 2)
            normal_trace = bv @ n
            for m in range(3):
                vals[3 * j + m] = normal_trace @ (wq * leg[m])
        bvol = basis.values_at(vpts[c][None], np.array([c]))[0]
        vals[9] = bvol[:, :, 0] @ vrule.weights
        vals[10] = bvol[:, :, 1] @ vrule.weights
        db = sum(np.outer(lam[c, :, (i + 1) % 3] * lam[c, :, (i + 2) % 3],
                          grads[c, i]) for i in range(3))
        curl = np.stack([db[:, 1], -db[:, 0]], axis=1) * mesh.h[c]
        vals[11] = np.einsum("iqa,q,qa->i", bvol, vrule.weights, curl)
        np.testing.assert_allclose(vals, np.eye(12), atol=1e-10)


def test_stress_basis_divergence_in_p1():
    mesh = unit_square(0.5)
    basis = StressBasis(mesh)
    rule = make_quadrature(4)
    pts = physical_points(rule, mesh.vertices, mesh.cells)
    div = basis.divergences_at(pts)  # (nc, 12, nq)
    # fit P1 and check the defect vanishes: div of vector P2 is P1
    mono = monomial_values(mesh, pts, 3)
    w = rule.weights
    mass = np.einsum("q,cqk,cqj->ckj", w, mono, mono)
    rhs = np.einsum("q,cqk,ciq->cki", w, mono, div)
    coef = np.linalg.solve(mass, rhs)
    fitted = np.einsum("cki,cqk->ciq", coef, mono)
    np.testing.assert_allclose(div, fitted, atol=1e-10)
    # and the divergences of the 12 basis functions span all of P1
    for c in range(mesh.nc):
        assert np.linalg.matrix_rank(coef[c].T, tol=1e-8) == 3


def test_stress_basis_normal_trace_spans_edge_p2():
    mesh = unit_square(0.5)
    basis = StressBasis(mesh)
    tq = np.array([0.2, 0.5, 0.9])
    for j in range(3):
        face = mesh.cell_faces[0, j]
        lo = mesh.vertices[mesh.faces[face, 0]]
        hi = mesh.vertices[mesh.faces[face, 1]]
        epts = lo[None, :] + tq[:, None] * (hi - lo)[None, :]
        n = mesh.face_normals[face]
        bv = basis.values_at(epts[None], np.array([0]))[0]
        rows = bv[3 * j:3 * j + 3] @ n  # (3, 3)
        assert np.linalg.matrix_rank(rows, tol=1e-8) == 3


def test_stress_space_dof_layout():
    mesh = unit_square(0.5)
    space = StressSpace(mesh)
    assert space.ndof == 6 * (mesh.nf + mesh.nc)
    g = space.cell_gdofs
    assert g.shape == (mesh.nc, 2, 12)
    # shared faces reference identical global dofs from both sides
    for face in range(mesh.nf):
        left, right = mesh.face_cells[face]
        if right < 0:
            continue
        jl = int(np.flatnonzero(mesh.cell_faces[left] == face)[0])
        jr = int(np.flatnonzero(mesh.cell_faces[right] == face)[0])
        np.testing.assert_array_equal(
            g[left, :, 3 * jl:3 * jl + 3], g[right, :, 3 * jr:3 * jr + 3])


def test_mono_exp_p1_prefix():
    np.testing.assert_array_equal(MONO_EXP[:3], [(0, 0), (1, 0), (0, 1)])
