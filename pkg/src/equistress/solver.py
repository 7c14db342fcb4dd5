"""Nonlinear displacement solver.

Continuous vector P2 Galerkin discretization with Newton linearization.
The Newton system at iterate w is

    (dsigma(grad_s w) . grad_s u, grad_s v)
        = (f, v) + (dsigma(grad_s w) . grad_s w - sigma(grad_s w), grad_s v)

for all test functions v vanishing on the Dirichlet boundary, so each
step yields the new iterate directly rather than an increment.  The
tangent need not be symmetric; systems are factorized with a general
sparse LU.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix, csc_matrix
from scipy.sparse.linalg import splu

from .constitutive import VOIGT_WEIGHT
from .errors import SolverError
from .quadrature import make_quadrature

DEFAULT_MAX_ITER = 50


class DirichletBC:
    """Essential boundary data as (dof, value) pairs.

    Attributes
    ----------
    dofs : ndarray
        Sorted unique constrained dof indices.
    values : ndarray
        Prescribed values, aligned with dofs.
    """

    def __init__(self, dofs, values):
        dofs = np.asarray(dofs, dtype=np.int64)
        values = np.asarray(values, dtype=float)
        order = np.argsort(dofs)
        dofs = dofs[order]
        values = values[order]
        if dofs.size and np.any(np.diff(dofs) == 0):
            raise ValueError("duplicate constrained dof")
        self.dofs = dofs
        self.values = values

    def free_mask(self, ndof):
        mask = np.ones(ndof, dtype=bool)
        mask[self.dofs] = False
        return mask

    def lift(self, ndof):
        """Full-length vector holding the boundary values, zero elsewhere."""
        g = np.zeros(ndof)
        g[self.dofs] = self.values
        return g


def _strain_matrices(space, rule, q):
    """Strain-displacement matrix B at one quadrature point.

    Returns
    -------
    ndarray, shape (nc, 3, 12)
        Rows are Voigt strain components of the local displacement dofs.
    """
    grads = space.grads_at(rule)[:, q]
    nc = grads.shape[0]
    b = np.zeros((nc, 3, 12))
    b[:, 0, 0::2] = grads[..., 0]
    b[:, 1, 1::2] = grads[..., 1]
    b[:, 2, 0::2] = 0.5 * grads[..., 1]
    b[:, 2, 1::2] = 0.5 * grads[..., 0]
    return b


def assemble_operator(space, tangents, rule):
    """Assemble the tangent bilinear form as a sparse CSR matrix.

    Parameters
    ----------
    space : P2Space
    tangents : ndarray, shape (nc, nq, 3, 3)
        Law tangents at the quadrature points of ``rule``.
    rule : QuadratureRule
    """
    mesh = space.mesh
    nc = mesh.nc
    kloc = np.zeros((nc, 12, 12))
    w = VOIGT_WEIGHT
    for q in range(rule.points.shape[0]):
        b = _strain_matrices(space, rule, q)
        wd = w[None, :, None] * tangents[:, q]
        scale = rule.weights[q] * mesh.areas
        kloc += scale[:, None, None] * np.einsum(
            "cji,cjk,ckl->cil", b, wd, b)
    rows = np.repeat(space.cell_dofs, 12, axis=1).ravel()
    cols = np.tile(space.cell_dofs, (1, 12)).ravel()
    mat = coo_matrix((kloc.ravel(), (rows, cols)),
                     shape=(space.ndof, space.ndof))
    return mat.tocsr()


def assemble_strain_moment(space, fields, rule):
    """Assemble (t, grad_s v) for a Voigt tensor field t at rule points.

    Parameters
    ----------
    fields : ndarray, shape (nc, nq, 3)

    Returns
    -------
    ndarray, shape (ndof,)
    """
    mesh = space.mesh
    out = np.zeros(space.ndof)
    loc = np.zeros((mesh.nc, 12))
    for q in range(rule.points.shape[0]):
        b = _strain_matrices(space, rule, q)
        scale = rule.weights[q] * mesh.areas
        loc += scale[:, None] * np.einsum(
            "cji,j,cj->ci", b, VOIGT_WEIGHT, fields[:, q])
    np.add.at(out, space.cell_dofs.ravel(), loc.ravel())
    return out


def assemble_load(space, f, rule):
    """Assemble (f, v) for a body force callable f(x) -> (n, 2).

    A None body force yields the zero vector.
    """
    if f is None:
        return np.zeros(space.ndof)
    from .quadrature import physical_points
    from .fe import p2_values

    mesh = space.mesh
    pts = physical_points(rule, mesh.vertices, mesh.cells)
    fv = np.asarray(f(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape)
    shapes = p2_values(rule.points)
    loc = np.einsum("q,qj,cqa->cja", rule.weights, shapes, fv)
    loc *= mesh.areas[:, None, None]
    out = np.zeros(space.ndof)
    np.add.at(out, space.cell_dofs.ravel(), loc.reshape(-1))
    return out


class LinearizedSolve:
    """One factorized Newton system on the free dofs."""

    def __init__(self, matrix, bc, ndof):
        self.bc = bc
        self.free = bc.free_mask(ndof)
        sub = matrix[self.free][:, self.free]
        self.coupling = matrix[self.free][:, ~self.free]
        self.lu = splu(csc_matrix(sub))

    def solve(self, rhs):
        """Solve for the full dof vector given a full-length load."""
        reduced = rhs[self.free] - self.coupling @ self.bc.values
        x = np.empty(self.free.size)
        x[self.free] = self.lu.solve(reduced)
        x[~self.free] = self.bc.values
        return x


class NewtonSolver:
    """Newton iteration for the discrete nonlinear elasticity problem.

    Parameters
    ----------
    space : P2Space
    law : constitutive law
    f : callable or None
        Body force f(x) mapping (n, 2) points to (n, 2) values.
    bc : DirichletBC
    """

    def __init__(self, space, law, f, bc):
        self.space = space
        self.law = law
        self.f = f
        self.bc = bc
        self._load_cache = {}

    def load_vector(self, rule):
        key = rule.degree
        if key not in self._load_cache:
            self._load_cache[key] = assemble_load(self.space, self.f, rule)
        return self._load_cache[key]

    def initial_guess(self, nu):
        """Solve the linearization around zero strain."""
        rule = make_quadrature(nu)
        nq = rule.points.shape[0]
        zero = np.zeros((self.space.mesh.nc, nq, 3))
        tangents = self.law.tangent(zero)
        mat = assemble_operator(self.space, tangents, rule)
        system = LinearizedSolve(mat, self.bc, self.space.ndof)
        return system.solve(self.load_vector(rule))

    def step(self, u_prev, nu):
        """One Newton update: solve the system linearized at u_prev."""
        rule = make_quadrature(nu)
        strains = self.space.strains_at(u_prev, rule)
        tangents = self.law.tangent(strains)
        mat = assemble_operator(self.space, tangents, rule)
        system = LinearizedSolve(mat, self.bc, self.space.ndof)
        correction = np.einsum("cqij,cqj->cqi", tangents, strains)
        correction -= self.law.stress(strains)
        rhs = self.load_vector(rule) + assemble_strain_moment(
            self.space, correction, rule)
        return system.solve(rhs)

    def residual(self, u, nu):
        """Nonlinear residual (f, v) - (sigma(grad_s u), grad_s v), free dofs."""
        rule = make_quadrature(nu)
        strains = self.space.strains_at(u, rule)
        internal = assemble_strain_moment(
            self.space, self.law.stress(strains), rule)
        r = self.load_vector(rule) - internal
        return r[self.bc.free_mask(self.space.ndof)]

    def damped_step(self, u_prev, nu, max_backtracks=8, slope=1e-4):
        """Newton update with residual backtracking.

        Solves the full Newton step and accepts the largest damping
        factor t in {1, 1/2, 1/4, ...} whose iterate satisfies the
        Armijo-type decrease ||r(u_t)|| <= (1 - slope * t) ||r(u_prev)||
        on the free dofs.  If no factor qualifies, the trial with the
        smallest residual is accepted so the iteration keeps moving.
        Near the solution the full step always qualifies, so damping
        leaves the terminal quadratic convergence untouched.  A zero
        residual at u_prev (a state loaded only through the Dirichlet
        data, e.g. the zero vector) accepts the full step directly.

        Returns
        -------
        u : ndarray
            Accepted iterate (1 - t) u_prev + t u_full.
        u_full : ndarray
            The undamped Newton iterate; its linearized stress
            satisfies the discrete equilibrium regardless of t.
        t : float
            Accepted damping factor.
        """
        u_full = self.step(u_prev, nu)
        r_prev = np.linalg.norm(self.residual(u_prev, nu))
        if r_prev == 0.0:
            return u_full, u_full, 1.0
        t = 1.0
        best = None
        for _ in range(max_backtracks + 1):
            u = u_prev + t * (u_full - u_prev)
            rnorm = np.linalg.norm(self.residual(u, nu))
            if rnorm <= (1.0 - slope * t) * r_prev:
                return u, u_full, t
            if best is None or rnorm < best[1]:
                best = ((u, t), rnorm)
            t *= 0.5
        (u, t), _ = best
        return u, u_full, t

    def internal_force_norm(self, u, nu):
        """Norm of the internal force moments at u, used as a residual scale.

        Includes the constrained dofs: at equilibrium the free-dof
        moments vanish, but the reactions carried by the Dirichlet dofs
        retain the magnitude of the forces in the problem.
        """
        rule = make_quadrature(nu)
        strains = self.space.strains_at(u, rule)
        internal = assemble_strain_moment(
            self.space, self.law.stress(strains), rule)
        return np.linalg.norm(internal)


def newton_solve(solver, nu, rtol=1e-12, max_iter=DEFAULT_MAX_ITER,
                 callback=None, u0=None):
    """Run damped Newton iterations with a residual stopping criterion.

    Steps are globalized by the backtracking of ``damped_step``.
    Stops once ||r_k|| <= rtol * ||r_0|| + 1e-12 * S where S is the
    internal-force norm at the initial guess, an absolute floor for
    problems whose initial residual is already at the assembly
    round-off scale (the tangent-based guess is exact for linear
    laws).

    Parameters
    ----------
    solver : NewtonSolver
    nu : int
        Quadrature degree for all assemblies.
    callback : callable or None
        Called as callback(k, u, residual_norm) after each accepted
        iterate.
    u0 : ndarray or None
        Initial guess; the zero-strain linearization if None.

    Returns
    -------
    u : ndarray
    history : list of float
        Residual norms ||r_k|| for k = 0, 1, ....

    Raises
    ------
    SolverError
        If the residual criterion is not met within max_iter updates.
    """
    u = solver.initial_guess(nu) if u0 is None else u0
    r0 = np.linalg.norm(solver.residual(u, nu))
    scale = solver.internal_force_norm(u, nu)
    tol = rtol * r0 + 1e-12 * scale
    history = [r0]
    if r0 <= tol:
        return u, history
    for k in range(1, max_iter + 1):
        u, _, _ = solver.damped_step(u, nu)
        rnorm = np.linalg.norm(solver.residual(u, nu))
        history.append(rnorm)
        if callback is not None:
            callback(k, u, rnorm)
        if rnorm <= tol:
            return u, history
    raise SolverError(
        f"Newton did not reach the residual tolerance in {max_iter} "
        f"iterations (last residual {history[-1]:.3e}, tolerance {tol:.3e})",
        history=history)
