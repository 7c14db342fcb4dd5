"""Tests for the equilibrated weakly symmetric stress reconstruction."""

import numpy as np
import pytest

from equistress.constitutive import HenckyMises, LinearElasticity
from equistress.errors import ReconstructionError
from equistress.fe import CellPolynomial, P2Space
from equistress.mesh import l_shape, unit_square
from equistress.quadrature import make_quadrature
from equistress.reconstruction import Reconstructor, bound_metric
from equistress.solver import DirichletBC, NewtonSolver, newton_solve

from oracles import equilibrium_defect, normal_jumps, weak_symmetry_defect

MU, LAM = 1.0, 5.0
NU = 4
TOL = 1e-10


def displacement(pts):
    return np.stack([pts[..., 0] ** 2, pts[..., 0] * pts[..., 1]], axis=-1)


def body_force(pts):
    fx = np.full(pts.shape[:-1], -(3.0 * LAM + 5.0 * MU))
    return np.stack([fx, np.zeros(pts.shape[:-1])], axis=-1)


def full_clamp(space, field):
    nodes = space.boundary_nodes
    vals = field(space.node_coords[nodes])
    dofs = np.concatenate([2 * nodes, 2 * nodes + 1])
    values = np.concatenate([vals[:, 0], vals[:, 1]])
    return DirichletBC(dofs, values)


def solved_linear(mesh):
    space = P2Space(mesh)
    law = LinearElasticity(lam=LAM, mu=MU)
    bc = full_clamp(space, displacement)
    solver = NewtonSolver(space, law, body_force, bc)
    u, _ = newton_solve(solver, nu=NU)
    return space, law, u


def solved_hencky(mesh, amp=0.3):
    space = P2Space(mesh)
    law = HenckyMises(a=0.05, b=0.5, kappa=17.0 / 3.0)
    bc = full_clamp(space, lambda pts: amp * displacement(pts))
    solver = NewtonSolver(space, law, None, bc)
    u, _ = newton_solve(solver, nu=NU)
    return space, law, u


def reconstruct_direct(space, law, u, f):
    rule = make_quadrature(NU)
    sv = law.stress(space.strains_at(u, rule))
    recon = Reconstructor(space.mesh, objective=bound_metric(law))
    return recon.reconstruct(sv, f, NU)


@pytest.mark.parametrize("mesh_factory", [
    lambda: unit_square(0.5),
    lambda: l_shape(0.5),
])
def test_linear_reconstruction_invariants(mesh_factory):
    mesh = mesh_factory()
    space, law, u = solved_linear(mesh)
    sigma = reconstruct_direct(space, law, u, body_force)
    assert normal_jumps(sigma, mesh) < TOL
    assert equilibrium_defect(sigma, body_force, mesh) < TOL
    assert weak_symmetry_defect(sigma, mesh) < TOL


def test_nonlinear_reconstruction_invariants():
    mesh = unit_square(0.5)
    space, law, u = solved_hencky(mesh)
    sigma = reconstruct_direct(space, law, u, None)
    assert normal_jumps(sigma, mesh) < TOL
    assert equilibrium_defect(sigma, None, mesh) < TOL
    assert weak_symmetry_defect(sigma, mesh) < TOL


def split_inputs(space, law, u):
    """Reconstruction sources for a converged iterate (u_prev = u)."""
    rule = make_quadrature(NU)
    sv = law.stress(space.strains_at(u, rule))
    sigma_bar = CellPolynomial.project(sv, space.mesh, rule, 3)
    return sv, sigma_bar.values(rule)


def test_split_sums_to_direct_reconstruction():
    mesh = unit_square(0.5)
    space, law, u = solved_linear(mesh)
    sv, bar_values = split_inputs(space, law, u)
    recon = Reconstructor(mesh, objective=bound_metric(law))
    direct = recon.reconstruct(sv, body_force, NU)
    disc, lin = recon.reconstruct_split(bar_values, sv, body_force, NU)
    total = disc + lin
    scale = np.max(np.abs(direct.local_coeffs()))
    assert np.max(np.abs(total.local_coeffs() - direct.local_coeffs())) \
        < 1e-10 * scale


def test_split_invariants():
    mesh = l_shape(0.5)
    space, law, u = solved_hencky(mesh, amp=0.2)
    sv, bar_values = split_inputs(space, law, u)
    recon = Reconstructor(mesh, objective=bound_metric(law))
    disc, lin = recon.reconstruct_split(bar_values, sv, None, NU)
    total = disc + lin
    assert normal_jumps(total, mesh) < TOL
    assert equilibrium_defect(total, None, mesh) < TOL
    assert weak_symmetry_defect(total, mesh) < TOL
    # each summand is H(div)-conforming on its own
    assert normal_jumps(disc, mesh) < TOL


def test_linearization_part_vanishes_at_convergence():
    # with u_prev = u_full = u the projected linearization source is
    # exactly the projection of itself, so the lin field degenerates
    mesh = unit_square(0.5)
    space, law, u = solved_hencky(mesh)
    sv, bar_values = split_inputs(space, law, u)
    recon = Reconstructor(mesh, objective=bound_metric(law))
    disc, lin = recon.reconstruct_split(bar_values, sv, None, NU)
    scale = np.max(np.abs(disc.local_coeffs()))
    assert np.max(np.abs(lin.local_coeffs())) < 1e-12 * scale


def test_reconstruction_is_deterministic():
    mesh = unit_square(0.5)
    space, law, u = solved_linear(mesh)
    a = reconstruct_direct(space, law, u, body_force)
    b = reconstruct_direct(space, law, u, body_force)
    assert np.array_equal(a.coeffs, b.coeffs)


def test_incompatible_source_is_rejected():
    mesh = unit_square(0.5)
    space = P2Space(mesh)
    law = LinearElasticity(lam=LAM, mu=MU)
    rng = np.random.default_rng(5)
    u = rng.standard_normal(space.ndof)
    rule = make_quadrature(NU)
    sv = law.stress(space.strains_at(u, rule))
    recon = Reconstructor(mesh, objective=bound_metric(law))
    with pytest.raises(ReconstructionError):
        recon.reconstruct(sv, body_force, NU)


def test_values_shapes():
    mesh = unit_square(0.5)
    space, law, u = solved_linear(mesh)
    sigma = reconstruct_direct(space, law, u, body_force)
    rule = make_quadrature(NU)
    vals = sigma.values(rule)
    assert vals.shape == (mesh.nc, rule.points.shape[0], 2, 2)
    div = sigma.divergence(rule)
    assert div.shape == (mesh.nc, rule.points.shape[0], 2)
    loc = sigma.local_coeffs()
    assert loc.shape == (mesh.nc, 2, 12)
