"""Conforming triangular meshes: connectivity, vertex patches, bisection.

Cells are stored as vertex triples with positive (counterclockwise)
orientation.  The newest-vertex-bisection convention is encoded in the
vertex order: the refinement edge of cell (a, b, c) is the edge (a, b).
Geometry builders order every initial cell so that its longest edge is
the refinement edge.

Face (edge) orientation is global and deterministic: every face stores
its vertices as (lo, hi) with lo < hi, is parametrized from lo to hi,
and carries a unit normal pointing out of its owner cell, the incident
cell with the lower index (for boundary faces the normal points out of
the domain).
"""

import numpy as np

from .errors import ConfigurationError, InternalError


class Patch:
    """Cells around a mesh vertex.

    Attributes
    ----------
    vertex : int
        The patch vertex.
    cells : ndarray
        Indices of the cells containing the vertex, ascending.
    is_boundary : bool
        True when the vertex lies on the domain boundary.
    """

    def __init__(self, vertex, cells, is_boundary):
        self.vertex = int(vertex)
        self.cells = np.asarray(cells, dtype=np.int64)
        self.is_boundary = bool(is_boundary)

    def __repr__(self):
        kind = "boundary" if self.is_boundary else "interior"
        return f"Patch(vertex={self.vertex}, ncells={len(self.cells)}, {kind})"


class Mesh:
    """Immutable conforming triangulation of a polygonal (or notched) domain.

    Parameters
    ----------
    vertices : array_like (nv, 2)
    cells : array_like (nc, 3)
        Positively oriented vertex triples; (cells[i,0], cells[i,1]) is
        the refinement edge of cell i.
    notch : tuple or None
        (cx, cy, r) of a circular notch arc on the boundary; newly
        created boundary vertices on the notch are snapped back onto the
        circle during refinement.
    """

    def __init__(self, vertices, cells, notch=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        self.notch = notch
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise InternalError("vertices must have shape (nv, 2)")
        if self.cells.ndim != 2 or self.cells.shape[1] != 3:
            raise InternalError("cells must have shape (nc, 3)")
        if self.cells.min(initial=0) < 0 or self.cells.max(initial=-1) >= len(self.vertices):
            raise InternalError("cell vertex index out of range")
        self._build_geometry_arrays()
        self._build_faces()
        self._build_patches()

    # -- construction ---------------------------------------------------

    def _build_geometry_arrays(self):
        v = self.vertices[self.cells]
        e0 = v[:, 2] - v[:, 1]
        e1 = v[:, 0] - v[:, 2]
        e2 = v[:, 1] - v[:, 0]
        two_area = e2[:, 0] * (-e1[:, 1]) - e2[:, 1] * (-e1[:, 0])
        if np.any(two_area <= 0.0):
            raise InternalError("negatively oriented or degenerate cell")
        self.areas = 0.5 * two_area
        lengths = np.stack(
            [np.hypot(e0[:, 0], e0[:, 1]),
             np.hypot(e1[:, 0], e1[:, 1]),
             np.hypot(e2[:, 0], e2[:, 1])], axis=1)
        self.edge_lengths = lengths
        self.h = lengths.max(axis=1)
        # gradient of the barycentric coordinate lambda_i: rotate the
        # opposite edge by +90 degrees and scale with 1/(2A)
        edges = np.stack([e0, e1, e2], axis=1)
        rot = np.empty_like(edges)
        rot[..., 0] = -edges[..., 1]
        rot[..., 1] = edges[..., 0]
        self.hat_gradients = rot / two_area[:, None, None]
        self.centroids = v.mean(axis=1)

    def _build_faces(self):
        nc = len(self.cells)
        # local edge j is opposite local vertex j
        pairs = self.cells[:, [[1, 2], [2, 0], [0, 1]]].reshape(-1, 2)
        pairs_sorted = np.sort(pairs, axis=1)
        faces, inverse = np.unique(pairs_sorted, axis=0, return_inverse=True)
        self.faces = faces
        self.cell_faces = inverse.reshape(nc, 3)
        nf = len(faces)
        counts = np.bincount(inverse, minlength=nf)
        if counts.max(initial=0) > 2:
            raise InternalError("face shared by more than two cells")
        face_cells = np.full((nf, 2), -1, dtype=np.int64)
        cell_ids = np.repeat(np.arange(nc, dtype=np.int64), 3)
        order = np.argsort(inverse, kind="stable")
        sorted_faces = inverse[order]
        sorted_cells = cell_ids[order]
        starts = np.searchsorted(sorted_faces, np.arange(nf))
        face_cells[:, 0] = sorted_cells[starts]
        second = counts == 2
        face_cells[second, 1] = sorted_cells[starts[second] + 1]
        lo = np.minimum(face_cells[:, 0], np.where(second, face_cells[:, 1], face_cells[:, 0]))
        hi = np.where(second, np.maximum(face_cells[:, 0], face_cells[:, 1]), -1)
        self.face_cells = np.column_stack([lo, hi])
        p_lo = self.vertices[faces[:, 0]]
        p_hi = self.vertices[faces[:, 1]]
        tang = p_hi - p_lo
        self.face_lengths = np.hypot(tang[:, 0], tang[:, 1])
        normals = np.column_stack([tang[:, 1], -tang[:, 0]]) / self.face_lengths[:, None]
        # orient out of the owner cell
        mid = 0.5 * (p_lo + p_hi)
        to_mid = mid - self.centroids[self.face_cells[:, 0]]
        flip = np.einsum("ij,ij->i", normals, to_mid) < 0.0
        normals[flip] *= -1.0
        self.face_normals = normals
        self.boundary_faces = np.flatnonzero(self.face_cells[:, 1] < 0)
        is_bv = np.zeros(len(self.vertices), dtype=bool)
        is_bv[faces[self.boundary_faces].ravel()] = True
        self.is_boundary_vertex = is_bv

    def _build_patches(self):
        flat = self.cells.ravel()
        order = np.argsort(flat, kind="stable")
        self._patch_cells = (np.repeat(np.arange(len(self.cells)), 3))[order]
        self._patch_offsets = np.searchsorted(
            flat[order], np.arange(len(self.vertices) + 1))

    # -- queries ---------------------------------------------------------

    @property
    def nv(self):
        return len(self.vertices)

    @property
    def nc(self):
        return len(self.cells)

    @property
    def nf(self):
        return len(self.faces)

    def vertex_patch(self, a):
        """Return the Patch around vertex a."""
        lo, hi = self._patch_offsets[a], self._patch_offsets[a + 1]
        cells = np.sort(self._patch_cells[lo:hi])
        if len(cells) == 0:
            raise InternalError(f"vertex {a} belongs to no cell")
        return Patch(a, cells, self.is_boundary_vertex[a])

    def min_angle(self):
        """Smallest interior angle over all cells, in degrees."""
        v = self.vertices[self.cells]
        angles = np.empty((len(self.cells), 3))
        for j in range(3):
            d1 = v[:, (j + 1) % 3] - v[:, j]
            d2 = v[:, (j + 2) % 3] - v[:, j]
            dot = np.einsum("ij,ij->i", d1, d2)
            den = np.hypot(d1[:, 0], d1[:, 1]) * np.hypot(d2[:, 0], d2[:, 1])
            angles[:, j] = np.degrees(np.arccos(np.clip(dot / den, -1.0, 1.0)))
        return float(angles.min())

    def audit(self):
        """Run conformity checks; raise InternalError on violation."""
        if np.any(self.areas <= 0.0):
            raise InternalError("audit: nonpositive cell area")
        uniq = np.unique(self.vertices, axis=0)
        if len(uniq) != len(self.vertices):
            raise InternalError("audit: duplicate vertices")
        counts = np.where(self.face_cells[:, 1] < 0, 1, 2)
        if not np.all((counts == 1) | (counts == 2)):
            raise InternalError("audit: dangling face")
        used = np.zeros(self.nv, dtype=bool)
        used[self.cells.ravel()] = True
        if not used.all():
            raise InternalError("audit: unused vertex")

    # -- refinement -------------------------------------------------------

    def refine(self, marked):
        """Bisect the marked cells (newest-vertex bisection with closure).

        Parameters
        ----------
        marked : array_like of cell indices (or boolean mask).

        Returns
        -------
        (Mesh, ndarray)
            The refined conforming mesh and the parent-cell index of
            every new cell (retained for transfer between meshes).
        """
        marked = np.asarray(marked)
        if marked.dtype == bool:
            marked = np.flatnonzero(marked)
        if len(marked) == 0:
            return self, np.arange(self.nc, dtype=np.int64)

        ref_face = self.cell_faces[:, 2]  # edge (v0, v1) is opposite v2
        edge_marked = np.zeros(self.nf, dtype=bool)
        edge_marked[ref_face[marked]] = True
        # closure: a cell with any marked edge must have its refinement
        # edge marked as well
        while True:
            cell_has = edge_marked[self.cell_faces].any(axis=1)
            need = cell_has & ~edge_marked[ref_face]
            if not need.any():
                break
            edge_marked[ref_face[need]] = True

        split = np.flatnonzero(edge_marked)
        new_id = np.full(self.nf, -1, dtype=np.int64)
        new_id[split] = self.nv + np.arange(len(split))
        mids = 0.5 * (self.vertices[self.faces[split, 0]]
                      + self.vertices[self.faces[split, 1]])
        if self.notch is not None:
            mids = self._snap_notch(split, mids)
        new_vertices = np.vstack([self.vertices, mids])

        new_cells = []
        parents = []
        fm = edge_marked[self.cell_faces]  # (nc, 3) marks per local edge
        for c in range(self.nc):
            a, b, cc = self.cells[c]
            m0, m1, m2 = fm[c]
            if not (m0 or m1 or m2):
                new_cells.append((a, b, cc))
                parents.append(c)
                continue
            if not m2:
                raise InternalError("closure failed: marked cell without "
                                    "marked refinement edge")
            mab = new_id[self.cell_faces[c, 2]]
            # children of (a,b,c): (c,a,m) and (b,c,m); their refinement
            # edges are the parent edges (c,a) and (b,c)
            if m1:
                mca = new_id[self.cell_faces[c, 1]]
                new_cells.append((mab, cc, mca))
                new_cells.append((a, mab, mca))
                parents += [c, c]
            else:
                new_cells.append((cc, a, mab))
                parents.append(c)
            if m0:
                mbc = new_id[self.cell_faces[c, 0]]
                new_cells.append((mab, b, mbc))
                new_cells.append((cc, mab, mbc))
                parents += [c, c]
            else:
                new_cells.append((b, cc, mab))
                parents.append(c)
        refined = Mesh(new_vertices, np.array(new_cells, dtype=np.int64),
                       notch=self.notch)
        return refined, np.array(parents, dtype=np.int64)

    def uniform_refine(self):
        """Bisect every cell once (cell count exactly doubles on
        compatible meshes)."""
        return self.refine(np.arange(self.nc))

    def _snap_notch(self, split_faces, mids):
        cx, cy, r = self.notch
        center = np.array([cx, cy])
        tol = 1e-9 * r
        on_boundary = self.face_cells[split_faces, 1] < 0
        d_lo = np.hypot(*(self.vertices[self.faces[split_faces, 0]] - center).T)
        d_hi = np.hypot(*(self.vertices[self.faces[split_faces, 1]] - center).T)
        snap = on_boundary & (np.abs(d_lo - r) <= tol) & (np.abs(d_hi - r) <= tol)
        if snap.any():
            vec = mids[snap] - center
            dist = np.hypot(vec[:, 0], vec[:, 1])[:, None]
            mids = mids.copy()
            mids[snap] = center + r * vec / dist
        return mids


def _normalize_cells(vertices, cells):
    """Orient cells positively and rotate so the longest edge comes first."""
    cells = np.asarray(cells, dtype=np.int64).copy()
    v = vertices[cells]
    cross = ((v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
             - (v[:, 1, 1] - v[:, 0, 1]) * (v[:, 2, 0] - v[:, 0, 0]))
    neg = cross < 0
    cells[neg] = cells[neg][:, [0, 2, 1]]
    v = vertices[cells]
    # edge k joins local vertices k and k+1
    lens = np.stack([
        np.hypot(*(v[:, 1] - v[:, 0]).T),
        np.hypot(*(v[:, 2] - v[:, 1]).T),
        np.hypot(*(v[:, 0] - v[:, 2]).T)], axis=1)
    longest = lens.argmax(axis=1)
    out = cells.copy()
    out[longest == 1] = cells[longest == 1][:, [1, 2, 0]]
    out[longest == 2] = cells[longest == 2][:, [2, 0, 1]]
    return out


def _grid_squares(nx, ny, x0, y0, hx, hy, skip=None):
    """Criss-cross square grid: alternating diagonals (union-jack)."""
    vid = lambda i, j: j * (nx + 1) + i
    xs = x0 + hx * np.arange(nx + 1)
    ys = y0 + hy * np.arange(ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    cells = []
    for j in range(ny):
        for i in range(nx):
            if skip is not None and skip(i, j):
                continue
            bl, br = vid(i, j), vid(i + 1, j)
            tr, tl = vid(i + 1, j + 1), vid(i, j + 1)
            if (i + j) % 2 == 0:
                cells.append((bl, br, tr))
                cells.append((bl, tr, tl))
            else:
                cells.append((br, tr, tl))
                cells.append((br, tl, bl))
    cells = np.array(cells, dtype=np.int64)
    used = np.zeros(len(vertices), dtype=bool)
    used[cells.ravel()] = True
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(used.sum())
    return vertices[used], remap[cells]


def unit_square(target_h):
    """Criss-cross mesh of (0,1)^2 with square size near target_h."""
    if target_h <= 0:
        raise ConfigurationError("target_h must be positive")
    n = max(1, int(round(1.0 / target_h)))
    vertices, cells = _grid_squares(n, n, 0.0, 0.0, 1.0 / n, 1.0 / n)
    return Mesh(vertices, _normalize_cells(vertices, cells))


def l_shape(target_h):
    """L-shaped domain (-1,1)^2 minus the quadrant [0,1]x[-1,0].

    The reentrant corner sits at the origin.
    """
    if target_h <= 0:
        raise ConfigurationError("target_h must be positive")
    n = max(1, int(round(1.0 / target_h)))
    h = 1.0 / n

    def skip(i, j):
        xc = -1.0 + (i + 0.5) * h
        yc = -1.0 + (j + 0.5) * h
        return xc > 0.0 and yc < 0.0

    vertices, cells = _grid_squares(2 * n, 2 * n, -1.0, -1.0, h, h, skip=skip)
    return Mesh(vertices, _normalize_cells(vertices, cells))


NOTCH_CENTER = (0.0, 11.0)
NOTCH_RADIUS = 2.0


def notched_plate(target_h, alpha_min=15.0):
    """Plate (0,10) x (-10,10) minus the disk of radius 2 around (0,11).

    The notch arc runs from (0,9) on the left edge to (sqrt(3),10) on the
    top edge.  Grid points close to the circle are projected radially
    onto it, so the arc is resolved at the grid spacing without a thin
    annular gap; the chords deviate from the circle by at most
    target_h^2 / 8.

    Raises ConfigurationError when the requested resolution produces a
    mesh below the minimum angle alpha_min (degrees).
    """
    from scipy.spatial import Delaunay

    if target_h <= 0:
        raise ConfigurationError("target_h must be positive")
    h = float(target_h)
    if h > 2.5:
        raise ConfigurationError("target_h too coarse for the notched plate")
    cx, cy = NOTCH_CENTER
    r = NOTCH_RADIUS
    nx = max(2, int(round(10.0 / h)))
    ny = max(4, int(round(20.0 / h)))
    hx, hy = 10.0 / nx, 20.0 / ny
    hmin = min(hx, hy)
    xs = hx * np.arange(nx + 1)
    ys = -10.0 + hy * np.arange(ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    dist = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
    inside = dist < r - 1e-12
    near = ~inside & (dist < r + 0.7 * hmin)

    # project the near band radially onto the circle; keep the two arc
    # endpoints fixed and drop projections that collide with them
    scale = r / dist[near][:, None]
    proj = np.column_stack([cx, cy]) + scale * (pts[near] - [cx, cy])
    ends = np.array([[0.0, cy - r], [np.sqrt(r * r - 1.0), 10.0]])
    keep = np.ones(len(proj), dtype=bool)
    for end in ends:
        keep &= np.hypot(proj[:, 0] - end[0], proj[:, 1] - end[1]) \
            > 0.35 * hmin
    points = np.vstack([pts[~inside & ~near], proj[keep], ends])

    tri = Delaunay(points)
    cells = tri.simplices.astype(np.int64)
    cent = points[cells].mean(axis=1)
    keep = np.hypot(cent[:, 0] - cx, cent[:, 1] - cy) >= r
    cells = cells[keep]
    v = points[cells]
    two_area = ((v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
                - (v[:, 1, 1] - v[:, 0, 1]) * (v[:, 2, 0] - v[:, 0, 0]))
    cells = cells[np.abs(two_area) > 1e-12 * h * h]
    used = np.zeros(len(points), dtype=bool)
    used[cells.ravel()] = True
    remap = -np.ones(len(points), dtype=np.int64)
    remap[used] = np.arange(used.sum())
    mesh = Mesh(points[used], _normalize_cells(points[used], remap[cells]),
                notch=(cx, cy, r))
    if mesh.min_angle() < alpha_min:
        raise ConfigurationError(
            f"notched plate at target_h={target_h} has minimum angle "
            f"{mesh.min_angle():.2f} deg < {alpha_min} deg; choose a finer "
            "or different resolution")
    return mesh


def build_geometry(domain, target_h, alpha_min=15.0):
    """Build an initial mesh for a named domain.

    domain is one of 'unit_square', 'l_shape', 'notched_plate'.
    """
    builders = {
        "unit_square": lambda: unit_square(target_h),
        "l_shape": lambda: l_shape(target_h),
        "notched_plate": lambda: notched_plate(target_h, alpha_min=alpha_min),
    }
    if domain not in builders:
        raise ConfigurationError(
            f"unknown domain {domain!r}; expected one of {sorted(builders)}")
    mesh = builders[domain]()
    if mesh.min_angle() < alpha_min:
        raise ConfigurationError(
            f"initial mesh for {domain} violates the minimum angle "
            f"{alpha_min} deg")
    return mesh
