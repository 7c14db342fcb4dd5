"""Independent brute-force reference implementations for the tests.

Everything here recomputes integrals with explicit Python loops over
cells, faces and quadrature points, deliberately avoiding the batched
einsum paths of the package, so agreement is a genuine cross-check of
the estimator and projection formulas.
"""

import numpy as np

from equistress.quadrature import edge_rule, make_quadrature


def map_points(mesh, c, rule):
    """Physical quadrature points of one cell."""
    v = mesh.vertices[mesh.cells[c]]
    pts = np.empty((len(rule.weights), 2))
    for q, (x, y) in enumerate(rule.points):
        pts[q] = (1.0 - x - y) * v[0] + x * v[1] + y * v[2]
    return pts


def cell_norm_sq(mesh, c, rule, values, weight=None):
    """Squared L2 norm over one cell of pointwise values (nq, m).

    weight gives the per-component quadratic weights (Voigt metric);
    all ones when omitted.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.ndim == 1:
        values = values[:, None]
    m = values.shape[1]
    w = np.ones(m) if weight is None else np.asarray(weight, dtype=float)
    total = 0.0
    for q in range(len(rule.weights)):
        sq = 0.0
        for j in range(m):
            sq += w[j] * values[q, j] ** 2
        total += rule.weights[q] * sq
    return float(mesh.areas[c]) * total


def brute_local_estimators(sigma_disc, sigma_lin, sigma_bar_values,
                           stress_values, f, mesh, rule):
    """Loop-based recomputation of the four per-cell estimators."""
    nc = mesh.nc
    disc = np.zeros(nc)
    lin = np.zeros(nc)
    quad = np.zeros(nc)
    osc = np.zeros(nc)
    vals_disc = sigma_disc.values(rule)
    vals_lin = sigma_lin.values(rule)
    for c in range(nc):
        bar = sigma_bar_values[c]
        full_bar = np.stack([bar[:, 0], bar[:, 2], bar[:, 2], bar[:, 1]],
                            axis=1)
        d = vals_disc[c].reshape(len(rule.weights), 4) - full_bar
        disc[c] = np.sqrt(cell_norm_sq(mesh, c, rule, d))
        lv = vals_lin[c].reshape(len(rule.weights), 4)
        lin[c] = np.sqrt(cell_norm_sq(mesh, c, rule, lv))
        quad[c] = np.sqrt(cell_norm_sq(
            mesh, c, rule, bar - stress_values[c], weight=(1.0, 1.0, 2.0)))
        if f is not None:
            pts = map_points(mesh, c, rule)
            fv = np.asarray(f(pts), dtype=float)
            coef = fit_p1(mesh, c, rule, fv)
            defect = fv - eval_p1(mesh, c, pts, coef)
            osc[c] = (mesh.h[c] / np.pi) * np.sqrt(
                cell_norm_sq(mesh, c, rule, defect))
    return disc, lin, quad, osc


def fit_p1(mesh, c, rule, values):
    """L2-fit of pointwise data (nq, m) by the cell's P1 monomials."""
    pts = map_points(mesh, c, rule)
    xi = (pts - mesh.centroids[c]) / mesh.h[c]
    basis = np.column_stack([np.ones(len(xi)), xi[:, 0], xi[:, 1]])
    w = rule.weights
    mass = (basis * w[:, None]).T @ basis
    rhs = (basis * w[:, None]).T @ values
    return np.linalg.solve(mass, rhs)


def eval_p1(mesh, c, pts, coef):
    """Evaluate a P1 monomial fit at physical points."""
    xi = (pts - mesh.centroids[c]) / mesh.h[c]
    basis = np.column_stack([np.ones(len(xi)), xi[:, 0], xi[:, 1]])
    return basis @ coef


def brute_global(local_values):
    """Global estimator from local values: 2 * l2 norm."""
    return 2.0 * float(np.sqrt(sum(v ** 2 for v in local_values)))


def brute_residual_diagnostics(space, u, law, sigma_bar, f, degree=8):
    """Loop-based recomputation of the residual diagnostics.

    Element terms use the gradient of the P1 stress fit (sharp) and the
    tangent chain rule for the stress of u (flat); face terms integrate
    the respective normal jumps edge by edge.
    """
    mesh = space.mesh
    rule = make_quadrature(degree)
    nq = len(rule.weights)
    sharp2 = np.zeros(mesh.nc)
    flat2 = np.zeros(mesh.nc)

    for c in range(mesh.nc):
        pts = map_points(mesh, c, rule)
        h = mesh.h[c]
        coef = sigma_bar.coef[c]          # (3 components, 3 monomials)
        # gradient of component m: (coef[m,1], coef[m,2]) / h
        div_bar = np.array([
            [coef[0, 1] / h + coef[2, 2] / h,
             coef[2, 1] / h + coef[1, 2] / h]
        ]).repeat(nq, axis=0)
        if f is None:
            proj = np.zeros((nq, 2))
        else:
            fv = np.asarray(f(pts), dtype=float)
            cf = fit_p2(mesh, c, rule, fv)
            proj = eval_p2(mesh, c, pts, cf)
        sharp2[c] = h ** 2 * cell_norm_sq(mesh, c, rule, div_bar + proj)

        strains = space.strains_at_points(u, pts[None], np.array([c]))[0]
        tang = law.tangent(strains[None])[0]
        sg = space.strain_gradients(u)[c]
        div_s = np.empty((nq, 2))
        for q in range(nq):
            div_s[q, 0] = tang[q, 0] @ sg[:, 0] + tang[q, 2] @ sg[:, 1]
            div_s[q, 1] = tang[q, 2] @ sg[:, 0] + tang[q, 1] @ sg[:, 1]
        flat2[c] = h ** 2 * cell_norm_sq(mesh, c, rule, div_s - div_bar)

    tq, wq = edge_rule(degree)
    for face in range(mesh.nf):
        left, right = mesh.face_cells[face]
        if right < 0:
            continue
        va = mesh.vertices[mesh.faces[face, 0]]
        vb = mesh.vertices[mesh.faces[face, 1]]
        epts = va[None, :] + tq[:, None] * (vb - va)[None, :]
        n = mesh.face_normals[face]
        hf = mesh.face_lengths[face]

        def voigt_dot_n(v):
            return np.stack([v[:, 0] * n[0] + v[:, 2] * n[1],
                             v[:, 2] * n[0] + v[:, 1] * n[1]], axis=1)

        js, jf = 0.0, 0.0
        bar_l = sigma_bar.values_on(epts[None], np.array([left]))[0]
        bar_r = sigma_bar.values_on(epts[None], np.array([right]))[0]
        sig_l = law.stress(space.strains_at_points(
            u, epts[None], np.array([left])))[0]
        sig_r = law.stress(space.strains_at_points(
            u, epts[None], np.array([right])))[0]
        jump_s = voigt_dot_n(bar_l - bar_r)
        jump_f = voigt_dot_n((sig_l - bar_l) - (sig_r - bar_r))
        for q in range(len(wq)):
            js += wq[q] * (jump_s[q] ** 2).sum()
            jf += wq[q] * (jump_f[q] ** 2).sum()
        sharp2[left] += hf ** 2 * js
        sharp2[right] += hf ** 2 * js
        flat2[left] += hf ** 2 * jf
        flat2[right] += hf ** 2 * jf
    return np.sqrt(sharp2), np.sqrt(flat2)


def fit_p2(mesh, c, rule, values):
    """L2-fit of pointwise data by the cell's six P2 monomials."""
    pts = map_points(mesh, c, rule)
    xi = (pts - mesh.centroids[c]) / mesh.h[c]
    basis = np.column_stack([
        np.ones(len(xi)), xi[:, 0], xi[:, 1],
        xi[:, 0] ** 2, xi[:, 0] * xi[:, 1], xi[:, 1] ** 2])
    w = rule.weights
    mass = (basis * w[:, None]).T @ basis
    rhs = (basis * w[:, None]).T @ values
    return np.linalg.solve(mass, rhs)


def eval_p2(mesh, c, pts, coef):
    """Evaluate a P2 monomial fit at physical points."""
    xi = (pts - mesh.centroids[c]) / mesh.h[c]
    basis = np.column_stack([
        np.ones(len(xi)), xi[:, 0], xi[:, 1],
        xi[:, 0] ** 2, xi[:, 0] * xi[:, 1], xi[:, 1] ** 2])
    return basis @ coef


def normal_jumps(field, mesh, degree=10):
    """Max interior-face normal-jump moment of a stress field.

    For every interior face integrates the jump of (tensor values) @ n
    against the three shifted Legendre moments; returns the largest
    jump moment relative to the largest one-sided moment across the
    whole mesh, a scale that cannot degenerate on individual faces.
    """
    from equistress.fe import shifted_legendre

    tq, wq = edge_rule(degree)
    leg = shifted_legendre(tq)
    worst = 0.0
    ref = 1e-300
    for face in range(mesh.nf):
        left, right = mesh.face_cells[face]
        if right < 0:
            continue
        va = mesh.vertices[mesh.faces[face, 0]]
        vb = mesh.vertices[mesh.faces[face, 1]]
        length = mesh.face_lengths[face]
        epts = va[None, :] + tq[:, None] * (vb - va)[None, :]
        n = mesh.face_normals[face]
        tl = field.values_at(epts[None], np.array([left]))[0] @ n
        tr = field.values_at(epts[None], np.array([right]))[0] @ n
        for m in range(3):
            for r in range(2):
                jump = length * np.dot(wq * leg[m], tl[:, r] - tr[:, r])
                worst = max(worst, abs(jump))
                ref = max(ref,
                          abs(length * np.dot(wq * leg[m], tl[:, r])),
                          abs(length * np.dot(wq * leg[m], tr[:, r])))
    return worst / ref


def equilibrium_defect(field, f, mesh, degree=10):
    """Max relative elementwise equilibrium defect of a reconstruction.

    Tests (f + div sigma, v)_T against the P1 monomial test fields of
    every cell.  The moments are measured relative to the natural
    divergence scale area * |sigma| / h of the field (plus the load
    moments), which stays meaningful when div sigma vanishes exactly.
    """
    rule = make_quadrature(degree)
    vmax = max(float(np.max(np.abs(field.values(rule)))), 1e-300)
    worst = 0.0
    for c in range(mesh.nc):
        pts = map_points(mesh, c, rule)
        bas_div = field.basis.divergences_at(pts[None], np.array([c]))[0]
        div = np.einsum("ri,iq->qr",
                        field.local_coeffs(np.array([c]))[0], bas_div)
        fv = np.zeros_like(div) if f is None else np.asarray(f(pts))
        xi = (pts - mesh.centroids[c]) / mesh.h[c]
        tests = np.column_stack([np.ones(len(xi)), xi[:, 0], xi[:, 1]])
        for k in range(3):
            for r in range(2):
                mom = mesh.areas[c] * np.dot(
                    rule.weights, (div[:, r] + fv[:, r]) * tests[:, k])
                scale = mesh.areas[c] * max(
                    vmax / mesh.h[c],
                    np.dot(rule.weights,
                           np.abs(fv[:, r]) * np.abs(tests[:, k])))
                worst = max(worst, abs(mom) / scale)
    return worst


def weak_symmetry_defect(field, mesh, degree=10):
    """Max relative skew moment of a reconstruction.

    Integrates the skew part of the tensor against the cellwise P1
    monomials (the skew multiplier space), relative to the moments of
    the symmetric part.
    """
    rule = make_quadrature(degree)
    vmax = max(float(np.max(np.abs(field.values(rule)))), 1e-300)
    worst = 0.0
    for c in range(mesh.nc):
        pts = map_points(mesh, c, rule)
        vals = field.values_at(pts[None], np.array([c]))[0]
        skew = 0.5 * (vals[:, 0, 1] - vals[:, 1, 0])
        xi = (pts - mesh.centroids[c]) / mesh.h[c]
        tests = np.column_stack([np.ones(len(xi)), xi[:, 0], xi[:, 1]])
        for k in range(3):
            mom = mesh.areas[c] * np.dot(rule.weights, skew * tests[:, k])
            worst = max(worst, abs(mom) / (mesh.areas[c] * vmax))
    return worst


def fd_tangent_error(law, strains, h=1e-6):
    """Max relative error of the tangent against central differences.

    Parameters
    ----------
    law : constitutive law
    strains : ndarray, shape (n, 3)
    h : float
        Step, scaled per strain by its magnitude.

    Returns
    -------
    float
    """
    strains = np.asarray(strains, dtype=float)
    tang = law.tangent(strains[None])[0]
    worst = 0.0
    for i, e in enumerate(strains):
        scale = max(np.linalg.norm(e), 1.0)
        step = h * scale
        for j in range(3):
            d = np.zeros(3)
            d[j] = step
            col = (law.stress((e + d)[None, None])[0, 0]
                   - law.stress((e - d)[None, None])[0, 0]) / (2.0 * step)
            ref = np.abs(tang[i]).max()
            worst = max(worst, np.abs(col - tang[i, :, j]).max()
                        / max(ref, 1e-300))
    return worst
