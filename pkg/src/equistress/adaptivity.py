"""Adaptive solve loop balancing the four error sources.

Implements the nested adaptation algorithm: an outer mesh loop, a
linearization (Newton) loop per mesh, and a quadrature loop strictly
inside each Newton step.  A Newton update is recomputed with an
escalated quadrature degree until the quadrature estimator is dominated,
the Newton loop stops once the linearization estimator is dominated by
the discretization and oscillation estimators, and cells are marked for
bisection by a bulk criterion on the local discretization estimators.

Every (mesh loop, Newton index, quadrature degree) attempt appends one
record to a run log; the accepted record per mesh carries the bound and,
when the case has an analytical solution, the energy error and the
effectivity index.  The same per-mesh pipeline drives the uniform
refinement study and the stopping-criterion comparison so that logged
quantities are directly comparable across modes.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, SolverError
from .estimators import (basic_bound, bound_prefactor, energy_error,
                         local_estimators, total_bound)
from .fe import CellPolynomial, P2Space
from .quadrature import MAX_DEGREE, make_quadrature
from .reconstruction import Reconstructor, bound_metric
from .solver import DEFAULT_MAX_ITER, NewtonSolver

P_DEGREE = 2
QUAD_MARGIN = 3


class AdaptiveConfig:
    """Parameters of the adaptive algorithm.

    Parameters
    ----------
    gamma_lin, gamma_quad : float
        Dominance weights in (0, 1) for the linearization and quadrature
        stopping criteria.
    target : float or None
        Outer-loop threshold: stop once eta_disc + eta_osc <= target.
        None disables the threshold so the loop count is governed by
        max_loops alone.
    mode : str
        'global' compares global estimators in the stopping criteria;
        'local' requires the cellwise inequalities on every cell.
    theta : float
        Bulk marking fraction in (0, 1].
    max_loops : int
        Number of meshes in the outer loop.
    nu_max : int
        Quadrature degree cap; reaching it logs a warning and accepts
        the iterate with the criterion unmet.
    """

    def __init__(self, gamma_lin=0.1, gamma_quad=0.1, target=None,
                 mode="global", theta=0.3, max_loops=12, nu_max=12):
        if not 0.0 < gamma_lin < 1.0 or not 0.0 < gamma_quad < 1.0:
            raise ConfigurationError(
                "gamma_lin and gamma_quad must lie in (0, 1)")
        if target is not None and not target > 0.0:
            raise ConfigurationError("target must be positive or None")
        if mode not in ("global", "local"):
            raise ConfigurationError("mode must be 'global' or 'local'")
        if not 0.0 < theta <= 1.0:
            raise ConfigurationError("theta must lie in (0, 1]")
        if max_loops < 1:
            raise ConfigurationError("max_loops must be at least 1")
        if not P_DEGREE * 2 <= nu_max <= MAX_DEGREE - QUAD_MARGIN:
            raise ConfigurationError(
                f"nu_max must lie in [{2 * P_DEGREE}, "
                f"{MAX_DEGREE - QUAD_MARGIN}]")
        self.gamma_lin = float(gamma_lin)
        self.gamma_quad = float(gamma_quad)
        self.target = None if target is None else float(target)
        self.mode = mode
        self.theta = float(theta)
        self.max_loops = int(max_loops)
        self.nu_max = int(nu_max)


@dataclass
class RunRecord:
    """One logged solver state: a (loop, k, nu) attempt.

    energy_error and ieff are None except on accepted records of cases
    with an analytical solution.
    """

    loop: int
    k: int
    nu: int
    ncells: int
    eta_disc: float
    eta_lin: float
    eta_quad: float
    eta_osc: float
    total_bound: float
    energy_error: float | None
    ieff: float | None
    newton_residual: float
    wall_ms: float
    accepted: bool = False


class RunLog:
    """Append-only record list of an adaptive (or uniform) run."""

    def __init__(self):
        self.records = []

    def append(self, record):
        self.records.append(record)

    def accepted(self):
        """Final accepted record of each mesh, in loop order."""
        return [r for r in self.records if r.accepted]

    def newton_counts(self):
        """Accepted Newton updates per mesh loop, in loop order."""
        counts = {}
        for r in self.records:
            counts[r.loop] = max(counts.get(r.loop, 0), r.k)
        return [counts[loop] for loop in sorted(counts)]


def check_criteria(local, glob, config):
    """Evaluate the quadrature, linearization and outer stopping tests.

    Parameters
    ----------
    local : LocalEstimators
    glob : GlobalEstimate
    config : AdaptiveConfig

    Returns
    -------
    dict
        Keys quad_ok, lin_ok, done (outer threshold reached).
    """
    if config.mode == "global":
        quad_ok = glob.eta_quad <= config.gamma_quad * (
            glob.eta_disc + glob.eta_lin + glob.eta_osc)
        lin_ok = glob.eta_lin <= config.gamma_lin * (
            glob.eta_disc + glob.eta_osc)
    else:
        quad_ok = bool(np.all(local.quad <= config.gamma_quad * (
            local.disc + local.lin + local.osc)))
        lin_ok = bool(np.all(local.lin <= config.gamma_lin * (
            local.disc + local.osc)))
    done = (config.target is not None
            and glob.eta_disc + glob.eta_osc <= config.target)
    return {"quad_ok": quad_ok, "lin_ok": lin_ok, "done": done}


def mark_cells(local, theta):
    """Bulk marking on the squared local discretization estimators.

    Returns the smallest cell set whose squared estimators sum to at
    least theta times the total, ties broken toward lower cell index.

    Parameters
    ----------
    local : LocalEstimators
    theta : float

    Returns
    -------
    ndarray
        Marked cell indices.
    """
    eta_sq = local.disc ** 2
    total = float(eta_sq.sum())
    if total == 0.0:
        return np.empty(0, dtype=np.int64)
    order = np.argsort(-eta_sq, kind="stable")
    csum = np.cumsum(eta_sq[order])
    goal = theta * total * (1.0 - 1e-12)
    nmark = int(np.searchsorted(csum, goal, side="left")) + 1
    return order[:nmark]


class _MeshSolve:
    """Linearization/quadrature loops and estimators on one mesh."""

    def __init__(self, case, law, config, mesh):
        self.case = case
        self.law = law
        self.config = config
        self.mesh = mesh
        self.space = P2Space(mesh)
        self.bc = case.dirichlet(self.space)
        self.solver = NewtonSolver(self.space, law, case.f, self.bc)
        self.recon = Reconstructor(mesh, objective=bound_metric(law))
        self.prefactor = bound_prefactor(law)
        self.exact = case.has_exact(law)

    def estimate(self, u, u_prev, u_full, nu):
        """Reconstructions and estimators for the iterate u at degree nu.

        The linearized stress is built from the undamped Newton iterate
        u_full, the one whose weak divergence matches the load, so the
        equilibration data stay consistent when backtracking shortens
        the accepted update.  The patch sources are integrated with the
        current degree-nu rule and the estimators with a rule
        QUAD_MARGIN degrees finer, so the quadrature estimator sees the
        projection defect.
        """
        rule = make_quadrature(nu)
        rule_high = make_quadrature(nu + QUAD_MARGIN)
        strains = self.space.strains_at(u, rule)
        sv = self.law.stress(strains)
        sigma_bar = CellPolynomial.project(sv, self.mesh, rule, 3)
        strains_prev = self.space.strains_at(u_prev, rule)
        strains_full = self.space.strains_at(u_full, rule)
        tangents = self.law.tangent(strains_prev)
        lin = self.law.stress(strains_prev) + np.einsum(
            "cqij,cqj->cqi", tangents, strains_full - strains_prev)
        sigma_disc, sigma_lin = self.recon.reconstruct_split(
            sigma_bar.values(rule), lin, self.case.f, nu)
        strains_high = self.space.strains_at(u, rule_high)
        sv_high = self.law.stress(strains_high)
        local = local_estimators(
            sigma_disc, sigma_lin, sigma_bar.values(rule_high), sv_high,
            self.case.f, self.mesh, rule_high)
        glob = total_bound(local, self.prefactor)
        bound = basic_bound(sigma_disc + sigma_lin, sv_high, self.case.f,
                            self.mesh, rule_high, self.law)
        sigma_tot = (sigma_disc + sigma_lin).values(rule_high)
        avg = np.einsum("cqra,q->cra", sigma_tot, rule_high.weights)
        fields = {
            "tr_strain": strains_high[:, :, :2].sum(axis=2)
            @ rule_high.weights,
            "stress": np.stack([avg[:, 0, 0], avg[:, 1, 1],
                                0.5 * (avg[:, 0, 1] + avg[:, 1, 0])],
                               axis=1),
        }
        return local, glob, bound, fields

    def run(self, log, loop, stopping="estimator",
            max_newton=DEFAULT_MAX_ITER):
        """Drive Newton with nested quadrature escalation on this mesh.

        Parameters
        ----------
        log : RunLog
        loop : int
            Outer-loop index for the log records.
        stopping : str
            'estimator' stops on the linearization criterion,
            'residual' on the solver's residual tolerance; the
            residual tolerance is a fallback in both modes.
        max_newton : int

        Returns
        -------
        dict
            Final accepted state: u, local, glob, bound, nu, k, flags.
        """
        config = self.config
        nu = 2 * P_DEGREE
        u_prev = np.zeros(self.space.ndof)
        rtol_floor = None
        state = None
        for k in range(1, max_newton + 1):
            while True:
                t0 = time.perf_counter()
                if k == 1:
                    # zero-strain tangent solve; the full step imposes the
                    # Dirichlet data exactly, so it is never damped
                    u_full = self.solver.step(u_prev, nu)
                    u = u_full
                else:
                    u, u_full, _ = self.solver.damped_step(u_prev, nu)
                local, glob, bound, fields = self.estimate(
                    u, u_prev, u_full, nu)
                checks = check_criteria(local, glob, config)
                rnorm = float(np.linalg.norm(self.solver.residual(u, nu)))
                wall_ms = 1e3 * (time.perf_counter() - t0)
                log.append(RunRecord(
                    loop=loop, k=k, nu=nu, ncells=self.mesh.nc,
                    eta_disc=glob.eta_disc, eta_lin=glob.eta_lin,
                    eta_quad=glob.eta_quad, eta_osc=glob.eta_osc,
                    total_bound=bound, energy_error=None, ieff=None,
                    newton_residual=rnorm, wall_ms=wall_ms))
                if checks["quad_ok"]:
                    break
                if nu >= config.nu_max:
                    warnings.warn(
                        f"quadrature criterion unmet at nu_max="
                        f"{config.nu_max} (loop {loop}, k={k})",
                        RuntimeWarning, stacklevel=2)
                    break
                nu += 1
            u_prev = u
            if rtol_floor is None:
                scale = self.solver.internal_force_norm(u, nu)
                rtol_floor = 1e-12 * rnorm + 1e-12 * scale
            state = {"u": u, "local": local, "glob": glob, "bound": bound,
                     "nu": nu, "k": k, "checks": checks,
                     "residual": rnorm, "fields": fields}
            if stopping == "estimator" and checks["lin_ok"]:
                break
            if rnorm <= rtol_floor:
                break
        else:
            raise SolverError(
                f"Newton did not satisfy the {stopping} stopping "
                f"criterion in {max_newton} iterations on loop {loop}",
                history=log.records)
        record = log.records[-1]
        record.accepted = True
        if self.exact:
            err = energy_error(self.space, state["u"],
                               self.case.displacement_gradient, self.law,
                               corner=self.case.corner)
            record.energy_error = err
            record.ieff = record.total_bound / err
        return state


def run_adaptive(case, law, config, mesh, callback=None):
    """Adaptive algorithm: nested mesh/Newton/quadrature loops.

    Parameters
    ----------
    case : case object
        Provides f, dirichlet, has_exact and the analytical fields.
    law : constitutive law
    config : AdaptiveConfig
    mesh : Mesh
        Initial mesh.
    callback : callable or None
        Called as callback(loop, solve, state) after each accepted mesh.

    Returns
    -------
    (RunLog, dict)
        The run log and the final per-mesh state (u, estimators, mesh).
    """
    log = RunLog()
    state = None
    for loop in range(config.max_loops):
        solve = _MeshSolve(case, law, config, mesh)
        state = solve.run(log, loop)
        state["mesh"] = mesh
        if callback is not None:
            callback(loop, solve, state)
        if state["checks"]["done"] or loop == config.max_loops - 1:
            break
        marked = mark_cells(state["local"], config.theta)
        mesh, _ = mesh.refine(marked)
    return log, state


def uniform_study(case, law, config, mesh, callback=None):
    """Same per-mesh pipeline on a uniformly bisected mesh ladder."""
    log = RunLog()
    state = None
    for loop in range(config.max_loops):
        solve = _MeshSolve(case, law, config, mesh)
        state = solve.run(log, loop)
        state["mesh"] = mesh
        if callback is not None:
            callback(loop, solve, state)
        if state["checks"]["done"] or loop == config.max_loops - 1:
            break
        mesh, _ = mesh.refine(np.arange(mesh.nc))
    return log, state


def compare_stopping(case, law, config, mesh, callback=None):
    """Estimator-based vs residual-based Newton stopping, shared meshes.

    Both variants solve the same mesh ladder; the ladder is produced by
    the estimator-stopping run's marking so that per-mesh quantities are
    directly comparable.  The callback sees the estimator-stopping state.

    Returns
    -------
    (RunLog, RunLog)
        Logs of the residual-stopping and estimator-stopping variants.
    """
    log_adap = RunLog()
    log_norm = RunLog()
    for loop in range(config.max_loops):
        solve = _MeshSolve(case, law, config, mesh)
        state = solve.run(log_adap, loop)
        state["mesh"] = mesh
        solve_norm = _MeshSolve(case, law, config, mesh)
        solve_norm.run(log_norm, loop, stopping="residual")
        if callback is not None:
            callback(loop, solve, state)
        if state["checks"]["done"] or loop == config.max_loops - 1:
            break
        marked = mark_cells(state["local"], config.theta)
        mesh, _ = mesh.refine(marked)
    return log_norm, log_adap
