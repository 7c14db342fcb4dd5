"""Tests for the Newton solver on the P2 displacement space."""

import numpy as np
import pytest

from equistress.constitutive import HenckyMises, LinearElasticity
from equistress.errors import SolverError
from equistress.fe import P2Space
from equistress.mesh import unit_square
from equistress.solver import DirichletBC, NewtonSolver, newton_solve

MU, LAM = 1.0, 5.0


def displacement(pts):
    return np.stack([pts[..., 0] ** 2, pts[..., 0] * pts[..., 1]], axis=-1)


def body_force(pts):
    # -div sigma(grad_s u) for the quadratic displacement above
    fx = np.full(pts.shape[:-1], -(3.0 * LAM + 5.0 * MU))
    return np.stack([fx, np.zeros(pts.shape[:-1])], axis=-1)


def interpolate(space, field):
    u = np.empty(space.ndof)
    vals = field(space.node_coords)
    u[0::2] = vals[:, 0]
    u[1::2] = vals[:, 1]
    return u


def full_clamp(space, field):
    nodes = space.boundary_nodes
    vals = field(space.node_coords[nodes])
    dofs = np.concatenate([2 * nodes, 2 * nodes + 1])
    values = np.concatenate([vals[:, 0], vals[:, 1]])
    return DirichletBC(dofs, values)


def linear_setup():
    mesh = unit_square(0.5)
    space = P2Space(mesh)
    law = LinearElasticity(lam=LAM, mu=MU)
    bc = full_clamp(space, displacement)
    return space, NewtonSolver(space, law, body_force, bc), bc


def test_linear_tangent_guess_is_exact():
    space, solver, bc = linear_setup()
    u, history = newton_solve(solver, nu=4)
    # the zero-strain linearization already solves a linear problem
    assert len(history) == 1
    exact = interpolate(space, displacement)
    assert np.linalg.norm(u - exact) < 1e-10 * np.linalg.norm(exact)
    np.testing.assert_array_equal(u[bc.dofs], bc.values)


def test_linear_single_step_from_zero():
    space, solver, bc = linear_setup()
    u0 = np.zeros(space.ndof)
    u, history = newton_solve(solver, nu=4, u0=u0)
    assert len(history) == 2
    assert history[1] < 1e-12 * history[0]
    exact = interpolate(space, displacement)
    assert np.linalg.norm(u - exact) < 1e-10 * np.linalg.norm(exact)


def test_dirichlet_values_imposed_exactly():
    space, solver, bc = linear_setup()
    u = solver.step(np.zeros(space.ndof), nu=4)
    np.testing.assert_array_equal(u[bc.dofs], bc.values)
    free = bc.free_mask(space.ndof)
    assert free.sum() == space.ndof - bc.dofs.size


def test_residual_vanishes_at_solution_only():
    space, solver, _ = linear_setup()
    u, _ = newton_solve(solver, nu=4)
    scale = solver.internal_force_norm(u, nu=4)
    assert np.linalg.norm(solver.residual(u, nu=4)) < 1e-12 * scale
    off = u.copy()
    off[np.argmax(solver.bc.free_mask(space.ndof))] += 0.1
    assert np.linalg.norm(solver.residual(off, nu=4)) > 1e-3 * scale


def test_internal_force_norm_linear_scaling():
    space, solver, _ = linear_setup()
    u, _ = newton_solve(solver, nu=4)
    n1 = solver.internal_force_norm(u, nu=4)
    n2 = solver.internal_force_norm(2.0 * u, nu=4)
    assert n1 > 0.0
    assert n2 == pytest.approx(2.0 * n1, rel=1e-12)


def nonlinear_setup(amp=0.3):
    mesh = unit_square(0.5)
    space = P2Space(mesh)
    law = HenckyMises(a=0.05, b=0.5, kappa=17.0 / 3.0)

    def boundary(pts):
        return amp * displacement(pts)

    bc = full_clamp(space, boundary)
    return space, NewtonSolver(space, law, None, bc)


def test_damped_step_full_on_mild_problem():
    space, solver = nonlinear_setup(amp=0.05)
    u0 = solver.initial_guess(nu=4)
    r0 = np.linalg.norm(solver.residual(u0, nu=4))
    # near the solution the Armijo test accepts the undamped update
    u, u_full, t = solver.damped_step(u0, nu=4)
    assert t == 1.0
    np.testing.assert_array_equal(u, u_full)
    assert np.linalg.norm(solver.residual(u, nu=4)) < 1e-3 * r0


def test_newton_converges_on_nonlinear_problem():
    space, solver = nonlinear_setup(amp=0.3)
    seen = []
    u, history = newton_solve(
        solver, nu=4, callback=lambda k, u, r: seen.append(k))
    assert seen == list(range(1, len(history)))
    assert history[-1] < 1e-10 * history[0] + 1e-10
    # quadratic-type decay: each late step gains at least a factor 10
    assert all(b < 0.5 * a for a, b in zip(history, history[1:]))


def test_solver_error_carries_history():
    space, solver = nonlinear_setup(amp=3.0)
    u0 = 0.5 * solver.initial_guess(nu=4)
    with pytest.raises(SolverError) as err:
        newton_solve(solver, nu=4, u0=u0, rtol=1e-15, max_iter=1)
    assert len(err.value.history) == 2


def test_duplicate_dirichlet_dof_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        DirichletBC([3, 3], [0.0, 1.0])
