"""Equilibrated stress reconstruction on vertex patches.

Solves, for every mesh vertex a, a saddle-point problem on the patch of
cells around a: minimize the distance of a piecewise [P2]^{2x2} tensor
with continuous normal components to a hat-weighted source tensor,
subject to a prescribed divergence against per-cell [P1]^2 test
functions and weak symmetry against per-cell skew P1 multipliers.  On
interior patches the normal component is constrained to zero on the
patch boundary and the per-cell test space is constrained orthogonal to
rigid-body motions via three Lagrange multiplier rows; the divergence
data must then satisfy the matching Neumann compatibility condition.

The patch matrix depends only on the mesh, so it is factorized once per
patch and reused by every construction and Newton iterate; only the
right-hand sides change.  Summing the per-patch solutions over all
vertices yields a global H(div)-conforming tensor field.

Two entry points are provided: ``reconstruct`` rebuilds a converged
discrete stress, and ``reconstruct_split`` builds the pair of
discretization / linearization fields of a Newton iterate whose sources
are made compatible by a shared rigid-mode correction, added with
opposite signs so that the sum of the two fields restores cellwise
equilibrium exactly.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import ConfigurationError, InternalError, ReconstructionError
from .fe import CellPolynomial, StressBasis, StressSpace, monomial_values
from .quadrature import make_quadrature, physical_points

_MATRIX_DEGREE = 4


def bound_metric(law, skew_factor=1.0):
    """Objective weights matching the guaranteed bound's stress metric.

    The energy-error bound measures the reconstruction misfit cellwise
    in the complementary-energy metric of the law: deviatoric-symmetric
    and skew parts weighted by the inverse monotonicity constant, the
    trace part by the inverse growth constant.  Passing these weights as
    the patch objective makes the minimization target the bound itself.
    ``skew_factor`` rescales the skew weight relative to the bound
    metric, trading symmetric misfit against the skew residue.

    Parameters
    ----------
    law : constitutive law
    skew_factor : float

    Returns
    -------
    tuple of float
        ``(c_dev, c_tr, c_skw)`` for :class:`Reconstructor`.
    """
    c = law.constants()
    dev = 1.0 / c.monotonicity ** 2
    return (dev, 1.0 / c.growth, skew_factor * dev)


def voigt_to_matrix(v):
    """Expand Voigt fields (..., 3) to full tensors (..., 2, 2)."""
    out = np.empty(v.shape[:-1] + (2, 2))
    out[..., 0, 0] = v[..., 0]
    out[..., 1, 1] = v[..., 1]
    out[..., 0, 1] = v[..., 2]
    out[..., 1, 0] = v[..., 2]
    return out


class EquilibratedStress:
    """Piecewise [P2]^{2x2} tensor field with continuous normal trace.

    Attributes
    ----------
    coeffs : ndarray, shape (6 * (nf + nc),)
        Coefficients in the global stress dof layout: normal moments on
        faces first, cell-interior moments after.
    """

    def __init__(self, coeffs, basis, space):
        self.coeffs = coeffs
        self.basis = basis
        self.space = space
        self.mesh = basis.mesh

    def __add__(self, other):
        if other.basis is not self.basis:
            raise ValueError("stress fields live on different meshes")
        return EquilibratedStress(
            self.coeffs + other.coeffs, self.basis, self.space)

    def local_coeffs(self, cells=None):
        """Per-cell dof values, shape (nc, 2, 12)."""
        g = self.space.cell_gdofs if cells is None \
            else self.space.cell_gdofs[cells]
        return self.coeffs[g]

    def values(self, rule):
        """Tensor values at a volume rule, shape (nc, nq, 2, 2)."""
        bas = self.basis.values(rule)
        return np.einsum("cri,ciqa->cqra", self.local_coeffs(), bas)

    def values_at(self, pts, cells):
        """Tensor values at per-cell points pts (m, nq, 2) on given cells."""
        bas = self.basis.values_at(pts, cells)
        return np.einsum("cri,ciqa->cqra", self.local_coeffs(cells), bas)

    def divergence(self, rule):
        """Row-wise divergence at a volume rule, shape (nc, nq, 2)."""
        div = self.basis.divergences(rule)
        return np.einsum("cri,ciq->cqr", self.local_coeffs(), div)


class _PatchLayout:
    """Index bookkeeping for one vertex patch.

    Local unknown layout: stress dofs of the free faces (6 per face),
    stress dofs of the cell interiors (6 per cell), per-cell [P1]^2
    test multipliers (6 per cell), per-cell skew P1 multipliers
    (3 per cell), and, on interior patches, 3 rigid-mode rows.
    """

    __slots__ = ("vertex", "cells", "lv", "free_faces", "nsig", "ndof",
                 "interior", "voff", "loff", "rmoff", "center",
                 "sig_src", "sig_dst", "gids")

    def __init__(self, mesh, patch):
        self.vertex = patch.vertex
        self.cells = patch.cells
        self.interior = not patch.is_boundary
        cells = patch.cells
        self.lv = np.argmax(mesh.cells[cells] == patch.vertex, axis=1)
        inset = np.zeros(mesh.nc, dtype=bool)
        inset[cells] = True
        faces = np.unique(mesh.cell_faces[cells])
        nbr = mesh.face_cells[faces]
        both_in = (nbr[:, 1] >= 0) & inset[nbr[:, 0]] \
            & inset[np.clip(nbr[:, 1], 0, None)]
        # Interior patches constrain the normal trace on the whole patch
        # boundary, including any mesh-boundary faces of patch cells.
        # Boundary patches leave mesh-boundary faces unconstrained.
        if self.interior:
            self.free_faces = faces[both_in]
        else:
            on_bdry = nbr[:, 1] < 0
            self.free_faces = faces[both_in | on_bdry]
        fpos = {f: i for i, f in enumerate(self.free_faces)}
        nfp = len(self.free_faces)
        ncp = len(cells)
        self.nsig = 6 * nfp + 6 * ncp
        self.voff = self.nsig
        self.loff = self.nsig + 6 * ncp
        self.rmoff = self.loff + 3 * ncp
        self.ndof = self.rmoff + (3 if self.interior else 0)
        self.center = mesh.vertices[patch.vertex]
        # Column of each local stress dof in the patch system; -1 marks
        # dofs of constrained faces.  Flattened gather maps mirror the
        # (ncp, 2, 12) layout of the per-cell source blocks.
        cols = np.full((ncp, 2, 12), -1, dtype=np.int64)
        for ci, c in enumerate(cells):
            for j in range(3):
                base = fpos.get(mesh.cell_faces[c, j])
                if base is None:
                    continue
                for r in range(2):
                    cols[ci, r, 3 * j:3 * j + 3] = \
                        6 * base + 3 * r + np.arange(3)
            for r in range(2):
                cols[ci, r, 9:12] = 6 * nfp + 6 * ci + 3 * r + np.arange(3)
        flat = cols.ravel()
        self.sig_src = np.flatnonzero(flat >= 0)
        self.sig_dst = flat[self.sig_src]
        # Global stress dofs of the local sigma unknowns, for scattering.
        gids = np.empty(self.nsig, dtype=np.int64)
        for i, f in enumerate(self.free_faces):
            gids[6 * i:6 * i + 6] = 6 * f + np.arange(6)
        base = 6 * mesh.nf
        for ci, c in enumerate(cells):
            gids[6 * nfp + 6 * ci:6 * nfp + 6 * ci + 6] = \
                base + 6 * c + np.arange(6)
        self.gids = gids

    def sigma_columns(self, ci):
        """Patch columns of cell ci's stress dofs, shape (2, 12)."""
        out = np.full((2, 12), -1, dtype=np.int64)
        flat = out.ravel()
        local = self.sig_src[(self.sig_src >= ci * 24)
                             & (self.sig_src < (ci + 1) * 24)]
        flat[local - ci * 24] = self.sig_dst[
            (self.sig_src >= ci * 24) & (self.sig_src < (ci + 1) * 24)]
        return out


class Reconstructor:
    """Patch-local equilibrated stress reconstructions on one mesh.

    Building the object assembles and factorizes every patch matrix;
    the construction methods only assemble right-hand sides and solve.

    Parameters
    ----------
    mesh : Mesh
    objective : tuple of float or None
        Weights ``(c_dev, c_tr, c_skw)`` of the quadratic objective
        ``c_dev ||dev sym tau||^2 + c_tr (tr tau)^2 / 2
        + c_skw ||skw tau||^2`` minimized by each patch problem,
        measured against the same decomposition of the target.  None
        selects the plain L2 distance ``(1, 1, 1)``.  The constraints
        are unchanged, so conformity, equilibrium and weak symmetry
        hold for any positive weights; :func:`bound_metric` supplies
        the weights under which the minimization tracks the guaranteed
        error bound.
    """

    def __init__(self, mesh, objective=None):
        if objective is None:
            objective = (1.0, 1.0, 1.0)
        if len(objective) != 3 or min(objective) <= 0.0:
            raise ConfigurationError(
                "objective must be three positive weights")
        self.mesh = mesh
        self.objective = tuple(float(c) for c in objective)
        self.basis = StressBasis(mesh)
        self.space = StressSpace(mesh)
        self._build_cell_blocks()
        self._build_patches()

    # -- mesh-fixed data --------------------------------------------------

    def _build_cell_blocks(self):
        mesh = self.mesh
        rule = make_quadrature(_MATRIX_DEGREE)
        pts = physical_points(rule, mesh.vertices, mesh.cells)
        w = rule.weights
        area = mesh.areas
        bas = self.basis.values(rule)          # (nc, 12, nq, 2)
        div = self.basis.divergences(rule)     # (nc, 12, nq)
        mono = monomial_values(mesh, pts, 3)   # (nc, nq, 3)
        # Component products of the row vector functions.  A tensor
        # basis function is one vector function placed in row r; its
        # deviatoric, trace and skew parts reduce to combinations of
        # the xx, yy and yx component products, with the yx product
        # coupling the two rows.
        pxx = np.einsum("q,ciq,cjq->cij", w, bas[..., 0],
                        bas[..., 0]) * area[:, None, None]
        pyy = np.einsum("q,ciq,cjq->cij", w, bas[..., 1],
                        bas[..., 1]) * area[:, None, None]
        pyx = np.einsum("q,ciq,cjq->cij", w, bas[..., 1],
                        bas[..., 0]) * area[:, None, None]
        cdev, ctr, cskw = self.objective
        pxy = pyx.transpose(0, 2, 1)
        self._m00 = 0.5 * (cdev * (pxx + pyy) + ctr * pxx + cskw * pyy)
        self._m11 = 0.5 * (cdev * (pxx + pyy) + ctr * pyy + cskw * pxx)
        self._m01 = 0.5 * (cdev * (pyx - pxy) + ctr * pxy - cskw * pyx)
        self._divv = np.einsum("q,cjq,cqk->ckj", w, div, mono) \
            * area[:, None, None]
        # Skew pairing (sigma, m_k J): row 0 couples with the second
        # component of the row function, row 1 with minus the first.
        skw = np.einsum("q,ciqa,cqk->cika", w, bas, mono) \
            * area[:, None, None, None]
        self._skw_x = skw[..., 0]              # (nc, 12, 3)
        self._skw_y = skw[..., 1]
        # Monomial moments against 1, x, y: rigid-mode pairings with the
        # local V basis are affine combinations of these.
        self._mom = np.stack([
            np.einsum("q,cqk->ck", w, mono),
            np.einsum("q,cq,cqk->ck", w, pts[..., 0], mono),
            np.einsum("q,cq,cqk->ck", w, pts[..., 1], mono),
        ], axis=1) * area[:, None, None]       # (nc, 3, 3)
        # Raw coordinate moments for rigid-mode Gram matrices.
        one = np.ones(pts.shape[:2])
        self._cmom = np.stack([
            np.einsum("q,cq->c", w, one),
            np.einsum("q,cq->c", w, pts[..., 0]),
            np.einsum("q,cq->c", w, pts[..., 1]),
            np.einsum("q,cq->c", w, pts[..., 0] ** 2),
            np.einsum("q,cq->c", w, pts[..., 0] * pts[..., 1]),
            np.einsum("q,cq->c", w, pts[..., 1] ** 2),
        ], axis=1) * area[:, None]             # (nc, 6): 1,x,y,xx,xy,yy

    def _rm_block(self, cells, center):
        """Pairing of the rigid modes with the local V basis.

        Returns
        -------
        ndarray, shape (len(cells), 3, 6)
            Entry (t, z, 2 * k + c): integral over cell t of the c-th
            component of rigid mode z times monomial m_k.
        """
        mom = self._mom[cells]
        out = np.zeros((len(cells), 3, 6))
        out[:, 0, 0::2] = mom[:, 0]
        out[:, 1, 1::2] = mom[:, 0]
        out[:, 2, 0::2] = mom[:, 2] - center[1] * mom[:, 0]
        out[:, 2, 1::2] = -(mom[:, 1] - center[0] * mom[:, 0])
        return out

    def _rm_gram(self, cells, center):
        """Gram matrix of the rigid-mode basis over a patch."""
        c = self._cmom[cells].sum(axis=0)
        one, mx, my, mxx, mxy, myy = c
        xa, ya = center
        g = np.zeros((3, 3))
        g[0, 0] = g[1, 1] = one
        g[0, 2] = g[2, 0] = my - ya * one
        g[1, 2] = g[2, 1] = -(mx - xa * one)
        g[2, 2] = (myy - 2 * ya * my + ya * ya * one
                   + mxx - 2 * xa * mx + xa * xa * one)
        return g

    # Above this vertex count, patch factorizations are rebuilt per
    # construction pass instead of cached (~130 KB per interior vertex).
    _LU_CACHE_LIMIT = 2500

    def _build_patches(self):
        mesh = self.mesh
        self._layouts = [_PatchLayout(mesh, mesh.vertex_patch(a))
                         for a in range(mesh.nv)]
        self._lus = [None] * mesh.nv
        self._cache_lus = mesh.nv <= self._LU_CACHE_LIMIT
        if self._cache_lus:
            for a, layout in enumerate(self._layouts):
                self._lus[a] = self._factor_patch(a, layout)

    def _assemble_patch_matrix(self, layout):
        mat = np.zeros((layout.ndof, layout.ndof))
        rmb = self._rm_block(layout.cells, layout.center) \
            if layout.interior else None
        for ci, c in enumerate(layout.cells):
            cols = layout.sigma_columns(ci)
            keep0 = cols[0] >= 0
            keep1 = cols[1] >= 0
            i0, i1 = cols[0][keep0], cols[1][keep1]
            mat[np.ix_(i0, i0)] += self._m00[c][np.ix_(keep0, keep0)]
            mat[np.ix_(i1, i1)] += self._m11[c][np.ix_(keep1, keep1)]
            blk = self._m01[c][np.ix_(keep0, keep1)]
            mat[np.ix_(i0, i1)] += blk
            mat[np.ix_(i1, i0)] += blk.T
            for r in range(2):
                idx = cols[r]
                keep = idx >= 0
                ik = idx[keep]
                # Divergence rows pair row-r stress dofs with the
                # component-r V functions (local V index 2 * k + r).
                vrows = layout.voff + 6 * ci + 2 * np.arange(3) + r
                blk = self._divv[c][:, keep]
                mat[np.ix_(vrows, ik)] += blk
                mat[np.ix_(ik, vrows)] += blk.T
                lrows = layout.loff + 3 * ci + np.arange(3)
                sblk = self._skw_y[c].T if r == 0 else -self._skw_x[c].T
                sblk = sblk[:, keep]
                mat[np.ix_(lrows, ik)] += sblk
                mat[np.ix_(ik, lrows)] += sblk.T
            if layout.interior:
                vcols = layout.voff + 6 * ci + np.arange(6)
                rrows = layout.rmoff + np.arange(3)
                mat[np.ix_(rrows, vcols)] += rmb[ci]
                mat[np.ix_(vcols, rrows)] += rmb[ci].T
        return mat

    def _factor_patch(self, a, layout):
        try:
            return lu_factor(self._assemble_patch_matrix(layout))
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise InternalError(
                f"singular patch matrix at vertex {a}") from exc

    def _patch_lu(self, a):
        lu = self._lus[a]
        if lu is None:
            lu = self._factor_patch(a, self._layouts[a])
            if self._cache_lus:
                self._lus[a] = lu
        return lu

    # -- right-hand-side assembly ------------------------------------------

    def _lam(self, nu):
        rule = make_quadrature(nu)
        return np.stack([1.0 - rule.points[:, 0] - rule.points[:, 1],
                         rule.points[:, 0], rule.points[:, 1]], axis=1)

    def _f_values(self, f, nu):
        if f is None:
            return None
        rule = make_quadrature(nu)
        pts = physical_points(rule, self.mesh.vertices, self.mesh.cells)
        return np.asarray(f(pts.reshape(-1, 2)), dtype=float).reshape(
            pts.shape)

    def _hat_sources(self, theta_g, f_vals, lam):
        """Divergence sources -psi_a f + theta grad(psi_a), per hat vertex.

        Returns
        -------
        ndarray, shape (nc, nq, 3, 2)
            Axis 2 enumerates the cell's three hat functions.
        """
        mesh = self.mesh
        nq = lam.shape[0]
        out = np.zeros((mesh.nc, nq, 3, 2))
        if theta_g is not None:
            tm = voigt_to_matrix(theta_g)
            out += np.einsum("cqra,cva->cqvr", tm, mesh.hat_gradients)
        if f_vals is not None:
            out -= lam[None, :, :, None] * f_vals[:, :, None, :]
        return out

    def _rhs_blocks(self, theta, gsource, nu):
        """Cellwise source integrals for all hat functions.

        Parameters
        ----------
        theta : ndarray, shape (nc, nq, 3)
            Voigt tensor paired with the stress test functions.
        gsource : ndarray, shape (nc, nq, 3, 2)
            Divergence source per local hat vertex.
        nu : int
            Quadrature degree of the point data.

        Returns
        -------
        rsig : ndarray, shape (nc, 3, 2, 12)
        rv : ndarray, shape (nc, 3, 6)
            V moments, local index 2 * k + component.
        """
        mesh = self.mesh
        rule = make_quadrature(nu)
        pts = physical_points(rule, mesh.vertices, mesh.cells)
        lam = self._lam(nu)
        bas = self.basis.values(rule)
        mono = monomial_values(mesh, pts, 3)
        if self.objective != (1.0, 1.0, 1.0):
            # The weighted objective (tau, tau')_W pairs a symmetric target
            # with W(theta) = c_dev dev(theta) + c_tr (tr theta / 2) I, so
            # the linear term stays the W-product against the target.
            cdev, ctr, _ = self.objective
            tr = theta[..., 0] + theta[..., 1]
            theta = np.stack([cdev * (theta[..., 0] - 0.5 * tr)
                              + 0.5 * ctr * tr,
                              cdev * (theta[..., 1] - 0.5 * tr)
                              + 0.5 * ctr * tr,
                              cdev * theta[..., 2]], axis=-1)
        tm = voigt_to_matrix(theta)
        rsig = np.einsum("q,qv,cqra,ciqa->cvri", rule.weights, lam, tm, bas)
        rsig *= mesh.areas[:, None, None, None]
        rv = np.einsum("q,cqva,cqk->cvka", rule.weights, gsource, mono)
        rv = rv.reshape(mesh.nc, 3, 6) * mesh.areas[:, None, None]
        return rsig, rv

    def _field_moments(self, gsource, nu, absolute=False):
        """Moments of the divergence source against e1, e2, and (y, -x).

        Returns
        -------
        ndarray, shape (nc, 3, 3)
            Last axis: the two translations, then the uncentered rotation.
            With absolute=True, integrands are replaced by their absolute
            values, yielding upper bounds used for audit scales.
        """
        mesh = self.mesh
        rule = make_quadrature(nu)
        pts = physical_points(rule, mesh.vertices, mesh.cells)
        g = np.abs(gsource) if absolute else gsource
        x = np.abs(pts[..., 0]) if absolute else pts[..., 0]
        y = np.abs(pts[..., 1]) if absolute else pts[..., 1]
        out = np.empty((mesh.nc, 3, 3))
        out[:, :, 0] = np.einsum("q,cqv->cv", rule.weights, g[..., 0])
        out[:, :, 1] = np.einsum("q,cqv->cv", rule.weights, g[..., 1])
        rot = g[..., 0] * y[:, :, None] + (g[..., 1] * x[:, :, None]
                                           if absolute else
                                           -g[..., 1] * x[:, :, None])
        out[:, :, 2] = np.einsum("q,cqv->cv", rule.weights, rot)
        return out * mesh.areas[:, None, None]

    def _patch_rm_moments(self, layout, fm, absolute=False):
        """Combine cellwise field moments into patch rigid-mode moments."""
        m = fm[layout.cells, layout.lv]        # (ncp, 3)
        xa, ya = layout.center
        d = np.empty(3)
        d[0] = m[:, 0].sum()
        d[1] = m[:, 1].sum()
        if absolute:
            d[2] = (m[:, 2] + abs(ya) * m[:, 0] + abs(xa) * m[:, 1]).sum()
        else:
            d[2] = (m[:, 2] - ya * m[:, 0] + xa * m[:, 1]).sum()
        return d

    # -- patch solves -------------------------------------------------------

    def _solve_patches(self, rsig, rv, ycorr=None, sign=1.0):
        """Assemble, solve, and scatter all patch problems.

        Parameters
        ----------
        rsig : ndarray, shape (nc, 3, 2, 12)
        rv : ndarray, shape (nc, 3, 6)
        ycorr : ndarray or None
            Per-vertex rigid-mode coefficients subtracted from (sign -1)
            or added to (sign +1) the divergence source.

        Returns
        -------
        ndarray
            Global stress coefficients.
        """
        gdofs = []
        gvals = []
        order = []
        for a, layout in enumerate(self._layouts):
            cells = layout.cells
            lv = layout.lv
            rs = rsig[cells, lv]
            rvv = rv[cells, lv]
            if ycorr is not None and np.any(ycorr[a]):
                rmb = self._rm_block(cells, layout.center)
                rvv = rvv + sign * np.einsum("z,czj->cj", ycorr[a], rmb)
            rhs = np.bincount(layout.sig_dst,
                              weights=rs.ravel()[layout.sig_src],
                              minlength=layout.ndof)
            rhs[layout.voff:layout.loff] += rvv.ravel()
            x = lu_solve(self._patch_lu(a), rhs)
            gdofs.append(layout.gids)
            gvals.append(x[:layout.nsig])
            order.append(np.full(layout.nsig, a))
        return self._accumulate(gdofs, gvals, order)

    def _accumulate(self, gdofs, gvals, order):
        """Patch-order-independent deterministic accumulation."""
        idx = np.concatenate(gdofs)
        val = np.concatenate(gvals)
        pat = np.concatenate(order)
        perm = np.lexsort((pat, idx))
        idx = idx[perm]
        val = val[perm]
        out = np.zeros(self.space.ndof)
        starts = np.flatnonzero(np.r_[True, np.diff(idx) > 0])
        out[idx[starts]] = np.add.reduceat(val, starts)
        return out

    def _audit_compatibility(self, gsource, nu, label):
        """Check Neumann compatibility of interior patch sources."""
        fm = self._field_moments(gsource, nu)
        fm_abs = self._field_moments(gsource, nu, absolute=True)
        for a, layout in enumerate(self._layouts):
            if not layout.interior:
                continue
            res = self._patch_rm_moments(layout, fm)
            scale = self._patch_rm_moments(layout, fm_abs, absolute=True)
            bound = 1e-8 * max(scale.max(), 1e-300)
            if np.abs(res).max() > bound:
                raise ReconstructionError(
                    f"{label} source on the patch of vertex {a} violates "
                    f"Neumann compatibility (residual {np.abs(res).max():.3e}"
                    f", audit scale {scale.max():.3e}); the input stress "
                    "must come from a converged discrete solve")

    # -- constructions -------------------------------------------------------

    def reconstruct(self, stress_values, f, nu):
        """Equilibrated reconstruction of a converged discrete stress.

        Parameters
        ----------
        stress_values : ndarray, shape (nc, nq, 3)
            Voigt stress at the points of the degree-nu rule.
        f : callable or None
            Body force f(x) mapping (n, 2) points to (n, 2) values.
        nu : int
            Quadrature degree for all source integrals.

        Returns
        -------
        EquilibratedStress

        Raises
        ------
        ReconstructionError
            If an interior patch source violates Neumann compatibility,
            which happens when the stress does not come from a converged
            discrete solution.
        """
        lam = self._lam(nu)
        f_vals = self._f_values(f, nu)
        gsource = self._hat_sources(stress_values, f_vals, lam)
        self._audit_compatibility(gsource, nu, "reconstruction")
        rsig, rv = self._rhs_blocks(stress_values, gsource, nu)
        coeffs = self._solve_patches(rsig, rv)
        return EquilibratedStress(coeffs, self.basis, self.space)

    def reconstruct_split(self, sigma_bar_values, sigma_lin_values, f, nu):
        """Discretization and linearization stress reconstructions.

        Parameters
        ----------
        sigma_bar_values : ndarray, shape (nc, nq, 3)
            Values of the cellwise P1 projection of the iterate's stress
            at the degree-nu rule points.
        sigma_lin_values : ndarray, shape (nc, nq, 3)
            Linearized stress of the Newton iterate at the same points.
        f : callable or None
        nu : int

        Returns
        -------
        (EquilibratedStress, EquilibratedStress)
            The discretization part and the linearization part.  Their
            sum satisfies the cellwise equilibrium (f + div ., v)_T = 0
            for all v in [P1(T)]^2 up to solver precision.

        Notes
        -----
        The linearization source is the cellwise P1 projection of the
        linearized stress minus the projected iterate stress, i.e. the
        projection of their difference.  Projecting first changes
        nothing in the constraint data: the divergence and rigid-mode
        moments pair the source with gradients of hat functions, which
        are constant per cell, against P1 test fields, and the
        projection is computed with the same rule, so those moments are
        reproduced exactly.  It does change the field itself: the
        source, and with it the linearization reconstruction, vanishes
        when the Newton iterate converges, instead of leveling off at
        the P1 projection defect of the converged stress.  That defect
        is the quadrature estimator's business and is accounted there.
        """
        lam = self._lam(nu)
        rule = make_quadrature(nu)
        f_vals = self._f_values(f, nu)
        g_disc = self._hat_sources(sigma_bar_values, f_vals, lam)
        lin_bar = CellPolynomial.project(
            sigma_lin_values, self.mesh, rule, 3).values(rule)
        diff = lin_bar - sigma_bar_values
        g_lin = self._hat_sources(diff, None, lam)
        ycorr = self._y_corrections(g_disc, nu)
        rsig_d, rv_d = self._rhs_blocks(sigma_bar_values, g_disc, nu)
        rsig_l, rv_l = self._rhs_blocks(diff, g_lin, nu)
        coeffs_d = self._solve_patches(rsig_d, rv_d, ycorr, sign=-1.0)
        coeffs_l = self._solve_patches(rsig_l, rv_l, ycorr, sign=+1.0)
        disc = EquilibratedStress(coeffs_d, self.basis, self.space)
        lin = EquilibratedStress(coeffs_l, self.basis, self.space)
        return disc, lin

    def _y_corrections(self, g_disc, nu):
        """Rigid-mode coefficients restoring Neumann compatibility.

        For every interior patch, solves the rigid-mode Gram system
        whose right side holds the moments of the discretization source
        against the patch's rigid modes.  Subtracting the resulting
        field from the discretization source (and adding it to the
        linearization source) makes both sources compatible.  Boundary
        patches need no compatibility and keep a zero correction: the
        rigid-mode moments there equal the boundary reaction functional,
        which does not vanish even for an exactly converged iterate.
        """
        fm = self._field_moments(g_disc, nu)
        ys = np.zeros((self.mesh.nv, 3))
        for a, layout in enumerate(self._layouts):
            if not layout.interior:
                continue
            d = self._patch_rm_moments(layout, fm)
            gram = self._rm_gram(layout.cells, layout.center)
            ys[a] = np.linalg.solve(gram, d)
        return ys
