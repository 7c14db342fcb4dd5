"""Finite element spaces and per-cell bases.

Provides the continuous vector P2 space used for the displacement, a
per-cell dual basis for one row of the H(div) stress space (BDM2-type:
vector P2 with three normal moments per edge and three interior moments),
and local L2 projections onto per-cell polynomial spaces.

All per-cell quantities are built in batch over the whole mesh.  Local
polynomials are expressed in monomials centered at the cell centroid and
scaled by the cell diameter, which keeps the dual-basis systems well
conditioned independently of the mesh size.
"""

from __future__ import annotations

import numpy as np

from .errors import InternalError
from .quadrature import edge_rule, make_quadrature, physical_points

# Monomial exponents spanning P2 in two variables.  The first three span P1.
MONO_EXP = np.array([(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)])

# Per-degree basis tables grow with the mesh, so keep only the few degrees
# in active use (assembly, estimation, and one escalated quadrature level).
_CACHE_LIMIT = 3


def _cache_put(cache, key, value):
    """Insert into a per-degree cache, evicting the oldest entry."""
    cache[key] = value
    while len(cache) > _CACHE_LIMIT:
        del cache[next(iter(cache))]
    return value

# Shifted Legendre polynomials on [0, 1], orthogonal weight 1.
_LEG_COEF = np.array([
    [1.0, 0.0, 0.0],
    [-1.0, 2.0, 0.0],
    [1.0, -6.0, 6.0],
])


def shifted_legendre(t):
    """Evaluate the first three shifted Legendre polynomials on [0, 1].

    Parameters
    ----------
    t : ndarray, shape (n,)
        Evaluation points in [0, 1].

    Returns
    -------
    ndarray, shape (3, n)
    """
    t = np.asarray(t, dtype=float)
    powers = np.stack([np.ones_like(t), t, t * t])
    return _LEG_COEF @ powers


def p2_values(points):
    """Values of the six P2 Lagrange shape functions on the reference cell.

    Node order: the three vertices, then the midpoints of the edges
    opposite each vertex (midpoint of (v1, v2) first).

    Parameters
    ----------
    points : ndarray, shape (n, 2)

    Returns
    -------
    ndarray, shape (n, 6)
    """
    pts = np.asarray(points, dtype=float)
    lam = np.stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]], axis=1)
    vals = np.empty((pts.shape[0], 6))
    for i in range(3):
        vals[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
        j, k = (i + 1) % 3, (i + 2) % 3
        vals[:, 3 + i] = 4.0 * lam[:, j] * lam[:, k]
    return vals


def p2_gradients(points):
    """Reference gradients of the six P2 shape functions.

    Parameters
    ----------
    points : ndarray, shape (n, 2)

    Returns
    -------
    ndarray, shape (n, 6, 2)
    """
    pts = np.asarray(points, dtype=float)
    lam = np.stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]], axis=1)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    grads = np.empty((pts.shape[0], 6, 2))
    for i in range(3):
        grads[:, i, :] = (4.0 * lam[:, i] - 1.0)[:, None] * dlam[i]
        j, k = (i + 1) % 3, (i + 2) % 3
        grads[:, 3 + i, :] = 4.0 * (lam[:, j][:, None] * dlam[k]
                                    + lam[:, k][:, None] * dlam[j])
    return grads


def p2_hessians():
    """Constant reference Hessians of the six P2 shape functions.

    Returns
    -------
    ndarray, shape (6, 2, 2)
    """
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    hess = np.empty((6, 2, 2))
    for i in range(3):
        hess[i] = 4.0 * np.outer(dlam[i], dlam[i])
        j, k = (i + 1) % 3, (i + 2) % 3
        hess[3 + i] = 4.0 * (np.outer(dlam[j], dlam[k])
                             + np.outer(dlam[k], dlam[j]))
    return hess


class P2Space:
    """Continuous vector-valued P2 Lagrange space on a mesh.

    Scalar nodes are the mesh vertices followed by the face midpoints;
    the dof of node ``n`` and component ``c`` is ``2 * n + c``.

    Attributes
    ----------
    ndof : int
        Number of displacement degrees of freedom.
    cell_dofs : ndarray, shape (nc, 12)
        Global dofs per cell, node-major with interleaved components.
    node_coords : ndarray, shape (nv + nf, 2)
        Coordinates of all scalar nodes.
    boundary_nodes : ndarray
        Sorted indices of scalar nodes on the domain boundary.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        nv, nf, nc = mesh.nv, mesh.nf, mesh.nc
        self.nnodes = nv + nf
        self.ndof = 2 * self.nnodes
        cell_nodes = np.column_stack([mesh.cells, nv + mesh.cell_faces])
        self.cell_nodes = cell_nodes
        dofs = np.empty((nc, 12), dtype=np.int64)
        dofs[:, 0::2] = 2 * cell_nodes
        dofs[:, 1::2] = 2 * cell_nodes + 1
        self.cell_dofs = dofs
        midpoints = 0.5 * (mesh.vertices[mesh.faces[:, 0]]
                           + mesh.vertices[mesh.faces[:, 1]])
        self.node_coords = np.vstack([mesh.vertices, midpoints])
        bnodes = np.concatenate([
            np.flatnonzero(mesh.is_boundary_vertex),
            nv + mesh.boundary_faces,
        ])
        self.boundary_nodes = np.sort(bnodes)
        # Jacobian of the affine map from the reference cell, per cell.
        v0 = mesh.vertices[mesh.cells[:, 0]]
        v1 = mesh.vertices[mesh.cells[:, 1]]
        v2 = mesh.vertices[mesh.cells[:, 2]]
        jac = np.empty((nc, 2, 2))
        jac[:, :, 0] = v1 - v0
        jac[:, :, 1] = v2 - v0
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1]
        inv[:, 1, 1] = jac[:, 0, 0]
        inv[:, 0, 1] = -jac[:, 0, 1]
        inv[:, 1, 0] = -jac[:, 1, 0]
        inv /= det[:, None, None]
        self.jac_inv_t = np.ascontiguousarray(inv.transpose(0, 2, 1))
        self._grad_cache = {}

    def grads_at(self, rule):
        """Physical gradients of the scalar shape functions.

        Parameters
        ----------
        rule : QuadratureRule

        Returns
        -------
        ndarray, shape (nc, nq, 6, 2)
        """
        key = rule.degree
        if key not in self._grad_cache:
            ref = p2_gradients(rule.points)
            _cache_put(self._grad_cache, key, np.einsum(
                "cab,qjb->cqja", self.jac_inv_t, ref))
        return self._grad_cache[key]

    def strains_at(self, u, rule):
        """Symmetric gradient of a displacement field at quadrature points.

        Parameters
        ----------
        u : ndarray, shape (ndof,)
        rule : QuadratureRule

        Returns
        -------
        ndarray, shape (nc, nq, 3)
            Strain in Voigt order (e11, e22, e12); e12 is the tensor
            off-diagonal entry, not the engineering shear.
        """
        grads = self.grads_at(rule)
        loc = u[self.cell_dofs]
        gx = np.einsum("cqja,cj->cqa", grads, loc[:, 0::2])
        gy = np.einsum("cqja,cj->cqa", grads, loc[:, 1::2])
        strain = np.empty(gx.shape[:2] + (3,))
        strain[..., 0] = gx[..., 0]
        strain[..., 1] = gy[..., 1]
        strain[..., 2] = 0.5 * (gx[..., 1] + gy[..., 0])
        return strain

    def values_at(self, u, rule):
        """Displacement values at quadrature points, shape (nc, nq, 2)."""
        shapes = p2_values(rule.points)
        loc = u[self.cell_dofs]
        out = np.empty((loc.shape[0], shapes.shape[0], 2))
        out[..., 0] = loc[:, 0::2] @ shapes.T
        out[..., 1] = loc[:, 1::2] @ shapes.T
        return out

    def strains_at_points(self, u, pts, cells):
        """Strain at arbitrary physical points on a subset of cells.

        Parameters
        ----------
        u : ndarray, shape (ndof,)
        pts : ndarray, shape (m, nq, 2)
            Physical points lying in the listed cells.
        cells : ndarray, shape (m,)

        Returns
        -------
        ndarray, shape (m, nq, 3)
            Voigt strain (e11, e22, e12).
        """
        mesh = self.mesh
        v0 = mesh.vertices[mesh.cells[cells, 0]]
        jit = self.jac_inv_t[cells]
        d = pts - v0[:, None, :]
        ref = np.einsum("mba,mqb->mqa", jit, d)
        shape = ref.shape
        rg = p2_gradients(ref.reshape(-1, 2)).reshape(shape[0], shape[1], 6, 2)
        grads = np.einsum("mab,mqjb->mqja", jit, rg)
        loc = u[self.cell_dofs[cells]]
        gx = np.einsum("mqja,mj->mqa", grads, loc[:, 0::2])
        gy = np.einsum("mqja,mj->mqa", grads, loc[:, 1::2])
        strain = np.empty(gx.shape[:2] + (3,))
        strain[..., 0] = gx[..., 0]
        strain[..., 1] = gy[..., 1]
        strain[..., 2] = 0.5 * (gx[..., 1] + gy[..., 0])
        return strain

    def strain_gradients(self, u):
        """Per-cell constant gradient of the Voigt strain of u.

        The strain of a P2 displacement is linear per cell, so its
        gradient is a cellwise constant.

        Returns
        -------
        ndarray, shape (nc, 3, 2)
            Entry (c, m, b): the derivative of strain component m in
            direction b on cell c.
        """
        jit = self.jac_inv_t
        hess = np.einsum("cax,jxy,cby->cjab", jit, p2_hessians(), jit)
        loc = u[self.cell_dofs]
        hx = np.einsum("cjab,cj->cab", hess, loc[:, 0::2])
        hy = np.einsum("cjab,cj->cab", hess, loc[:, 1::2])
        out = np.empty((len(loc), 3, 2))
        out[:, 0] = hx[:, 0]
        out[:, 1] = hy[:, 1]
        out[:, 2] = 0.5 * (hx[:, 1] + hy[:, 0])
        return out

    def boundary_dofs(self, component):
        """Dofs of one displacement component on all boundary nodes."""
        return 2 * self.boundary_nodes + component


def monomial_values(mesh, pts, nmono=6, cells=None):
    """Scaled centered monomials evaluated at physical points.

    The monomial with exponents (a, b) on cell T is
    ``((x - cx) / h)**a * ((y - cy) / h)**b`` with (cx, cy) the centroid
    and h the cell diameter.

    Parameters
    ----------
    mesh : Mesh
    pts : ndarray, shape (m, nq, 2)
        Physical points, one block of nq points per cell.
    nmono : int
        Number of monomials (3 for P1, 6 for P2).
    cells : ndarray or None
        Cell index per point block; all cells in order when omitted.

    Returns
    -------
    ndarray, shape (m, nq, nmono)
    """
    cen = mesh.centroids if cells is None else mesh.centroids[cells]
    h = mesh.h if cells is None else mesh.h[cells]
    xi = (pts - cen[:, None, :]) / h[:, None, None]
    out = np.empty(pts.shape[:2] + (nmono,))
    for m in range(nmono):
        a, b = MONO_EXP[m]
        out[..., m] = xi[..., 0] ** a * xi[..., 1] ** b
    return out


def monomial_gradients(mesh, pts, nmono=6, cells=None):
    """Physical gradients of the scaled centered monomials.

    Returns
    -------
    ndarray, shape (m, nq, nmono, 2)
    """
    cen = mesh.centroids if cells is None else mesh.centroids[cells]
    h = mesh.h if cells is None else mesh.h[cells]
    xi = (pts - cen[:, None, :]) / h[:, None, None]
    hinv = 1.0 / h
    out = np.zeros(pts.shape[:2] + (nmono, 2))
    for m in range(nmono):
        a, b = MONO_EXP[m]
        if a > 0:
            out[..., m, 0] = a * xi[..., 0] ** (a - 1) * xi[..., 1] ** b
        if b > 0:
            out[..., m, 1] = xi[..., 0] ** a * b * xi[..., 1] ** (b - 1)
    out *= hinv[:, None, None, None]
    return out


def barycentric_values(mesh, pts):
    """Barycentric coordinates (hat function values) at physical points.

    Parameters
    ----------
    pts : ndarray, shape (nc, nq, 2)

    Returns
    -------
    ndarray, shape (nc, nq, 3)
    """
    verts = mesh.vertices[mesh.cells]
    grads = mesh.hat_gradients
    offs = 1.0 - np.einsum("cia,cia->ci", grads, verts)
    return np.einsum("cia,cqa->cqi", grads, pts) + offs[:, None, :]


def rigid_modes(pts, center):
    """Rigid-body motion basis evaluated at points.

    The basis is the two translations followed by the rotation centered
    at ``center``.

    Parameters
    ----------
    pts : ndarray, shape (..., 2)
    center : ndarray, shape (2,)

    Returns
    -------
    ndarray, shape (..., 3, 2)
    """
    pts = np.asarray(pts, dtype=float)
    out = np.zeros(pts.shape[:-1] + (3, 2))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 2, 0] = pts[..., 1] - center[1]
    out[..., 2, 1] = -(pts[..., 0] - center[0])
    return out


class StressBasis:
    """Per-cell dual basis for one row of the stress space.

    The row space on each cell is vector-valued P2 with BDM2-type
    functionals: for each of the three edges the zeroth to second
    normal moments against shifted Legendre polynomials in the global
    lo-to-hi edge parametrization, and three interior moments against
    the two constant fields and the scaled curl of the cell bubble.
    Local dof order: edge j moment m -> 3 * j + m, interior i -> 9 + i.

    Two cells sharing a face see identical edge functionals, so
    matching the six face dofs of both incident cells yields a normal
    component that is continuous across the face.
    """

    NDOF = 12

    def __init__(self, mesh):
        self.mesh = mesh
        nc = mesh.nc
        dof = np.empty((nc, 12, 12))
        # Edge moment functionals, one block of three rows per local edge.
        tq, wq = edge_rule(5)
        leg = shifted_legendre(tq)
        for j in range(3):
            faces = mesh.cell_faces[:, j]
            lo = mesh.vertices[mesh.faces[faces, 0]]
            hi = mesh.vertices[mesh.faces[faces, 1]]
            pts = lo[:, None, :] + tq[None, :, None] * (hi - lo)[:, None, :]
            mono = monomial_values(mesh, pts)
            nrm = mesh.face_normals[faces]
            block = np.einsum("q,mq,cqk,ca->cmka", wq, leg, mono, nrm)
            dof[:, 3 * j:3 * j + 3, :] = block.reshape(nc, 3, 12)
        # Interior moment functionals.
        vrule = make_quadrature(5)
        vpts = physical_points(vrule, mesh.vertices, mesh.cells)
        vmono = monomial_values(mesh, vpts)
        lam = barycentric_values(mesh, vpts)
        grads = mesh.hat_gradients
        db = (np.einsum("cq,cq,ca->cqa", lam[..., 1], lam[..., 2], grads[:, 0])
              + np.einsum("cq,cq,ca->cqa", lam[..., 0], lam[..., 2], grads[:, 1])
              + np.einsum("cq,cq,ca->cqa", lam[..., 0], lam[..., 1], grads[:, 2]))
        curl = np.empty_like(db)
        curl[..., 0] = db[..., 1]
        curl[..., 1] = -db[..., 0]
        curl *= mesh.h[:, None, None]
        wv = vrule.weights
        for comp in range(2):
            row = np.einsum("q,cqk->ck", wv, vmono)
            blk = np.zeros((nc, 6, 2))
            blk[:, :, comp] = row
            dof[:, 9 + comp, :] = blk.reshape(nc, 12)
        dof[:, 11, :] = np.einsum(
            "q,cqk,cqa->cka", wv, vmono, curl).reshape(nc, 12)
        conds = np.linalg.cond(dof)
        if not np.all(np.isfinite(conds)):
            raise InternalError("singular stress dof matrix")
        # Rows of coef are dual functions: coef[c, i] are the monomial
        # coefficients (column layout 2 * k + comp) of basis function i.
        self.coef = np.ascontiguousarray(
            np.linalg.inv(dof).transpose(0, 2, 1))
        self._val_cache = {}
        self._div_cache = {}

    def values(self, rule):
        """Basis values at a volume rule, shape (nc, 12, nq, 2)."""
        key = rule.degree
        if key not in self._val_cache:
            pts = physical_points(rule, self.mesh.vertices, self.mesh.cells)
            _cache_put(self._val_cache, key, self.values_at(pts))
        return self._val_cache[key]

    def divergences(self, rule):
        """Basis divergences at a volume rule, shape (nc, 12, nq)."""
        key = rule.degree
        if key not in self._div_cache:
            pts = physical_points(rule, self.mesh.vertices, self.mesh.cells)
            _cache_put(self._div_cache, key, self.divergences_at(pts))
        return self._div_cache[key]

    def values_at(self, pts, cells=None):
        """Basis values at arbitrary per-cell physical points.

        Parameters
        ----------
        pts : ndarray, shape (m, nq, 2)
            Point block for each listed cell.
        cells : ndarray or None
            Cell indices matching the first axis of pts; all cells if
            None.

        Returns
        -------
        ndarray, shape (m, 12, nq, 2)
        """
        coef = self.coef if cells is None else self.coef[cells]
        mesh = self.mesh
        if cells is None:
            mono = monomial_values(mesh, pts)
        else:
            xi = ((pts - mesh.centroids[cells, None, :])
                  / mesh.h[cells, None, None])
            mono = np.empty(pts.shape[:2] + (6,))
            for m in range(6):
                a, b = MONO_EXP[m]
                mono[..., m] = xi[..., 0] ** a * xi[..., 1] ** b
        coefr = coef.reshape(coef.shape[0], 12, 6, 2)
        return np.einsum("cika,cqk->ciqa", coefr, mono)

    def divergences_at(self, pts, cells=None):
        """Basis divergences at arbitrary per-cell physical points."""
        coef = self.coef if cells is None else self.coef[cells]
        mesh = self.mesh
        if cells is None:
            mg = monomial_gradients(mesh, pts)
        else:
            sub = _SubMesh(mesh, cells)
            mg = monomial_gradients(sub, pts)
        coefr = coef.reshape(coef.shape[0], 12, 6, 2)
        return np.einsum("cika,cqka->ciq", coefr, mg)


class _SubMesh:
    """Centroid/diameter view on a cell subset, for monomial evaluation."""

    def __init__(self, mesh, cells):
        self.centroids = mesh.centroids[cells]
        self.h = mesh.h[cells]


class StressSpace:
    """Global dof layout of the H(div) stress space.

    Face dofs come first: face f, tensor row r, moment m maps to
    ``6 * f + 3 * r + m``.  Interior dofs follow: cell c, row r, moment
    i maps to ``6 * nf + 6 * c + 3 * r + i``.

    Attributes
    ----------
    ndof : int
    cell_gdofs : ndarray, shape (nc, 2, 12)
        Global dof of each local basis function per cell and tensor row.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        nf, nc = mesh.nf, mesh.nc
        self.ndof = 6 * (nf + nc)
        g = np.empty((nc, 2, 12), dtype=np.int64)
        m = np.arange(3)
        for r in range(2):
            for j in range(3):
                g[:, r, 3 * j:3 * j + 3] = (
                    6 * mesh.cell_faces[:, j:j + 1] + 3 * r + m)
            g[:, r, 9:12] = 6 * nf + 6 * np.arange(nc)[:, None] + 3 * r + m
        self.cell_gdofs = g


def project_cellwise(values, mesh, rule, nmono):
    """L2-project pointwise data onto per-cell monomial spans.

    Parameters
    ----------
    values : ndarray, shape (nc, nq, m)
        Data at the quadrature points of ``rule``, any component count m.
    mesh : Mesh
    rule : QuadratureRule
        Rule at whose points the data is given; also used for the local
        mass matrices, so it must integrate products of the monomial
        span exactly for an exact projection.
    nmono : int
        3 projects onto P1, 6 onto P2.

    Returns
    -------
    ndarray, shape (nc, m, nmono)
        Coefficients in the scaled centered monomial basis.
    """
    pts = physical_points(rule, mesh.vertices, mesh.cells)
    mono = monomial_values(mesh, pts, nmono)
    mass = np.einsum("q,cqk,cqj->ckj", rule.weights, mono, mono)
    rhs = np.einsum("q,cqk,cqm->ckm", rule.weights, mono, values)
    coef = np.linalg.solve(mass, rhs)
    return np.ascontiguousarray(coef.transpose(0, 2, 1))


class CellPolynomial:
    """Cellwise polynomial field in the scaled centered monomial basis.

    Attributes
    ----------
    coef : ndarray, shape (nc, m, nmono)
        Component-major monomial coefficients per cell.
    """

    def __init__(self, mesh, coef):
        self.mesh = mesh
        self.coef = coef
        self.nmono = coef.shape[2]

    @classmethod
    def project(cls, values, mesh, rule, nmono):
        """Build by local L2 projection of pointwise data."""
        return cls(mesh, project_cellwise(values, mesh, rule, nmono))

    def values(self, rule):
        """Field values at a volume rule, shape (nc, nq, m)."""
        pts = physical_points(rule, self.mesh.vertices, self.mesh.cells)
        return self.values_at(pts)

    def values_at(self, pts):
        """Field values at per-cell physical points (all cells)."""
        mono = monomial_values(self.mesh, pts, self.nmono)
        return np.einsum("cmk,cqk->cqm", self.coef, mono)

    def values_on(self, pts, cells):
        """Field values at physical points on a subset of cells.

        Parameters
        ----------
        pts : ndarray, shape (m, nq, 2)
        cells : ndarray, shape (m,)
        """
        mono = monomial_values(self.mesh, pts, self.nmono, cells)
        return np.einsum("cmk,cqk->cqm", self.coef[cells], mono)

    def gradients(self, rule):
        """Component gradients at a volume rule, shape (nc, nq, m, 2)."""
        pts = physical_points(rule, self.mesh.vertices, self.mesh.cells)
        mg = monomial_gradients(self.mesh, pts, self.nmono)
        return np.einsum("cmk,cqka->cqma", self.coef, mg)
