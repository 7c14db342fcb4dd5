"""Meshes: geometry builders, conformity, patches, bisection."""

import numpy as np
import pytest

from equistress.errors import ConfigurationError
from equistress.mesh import (NOTCH_CENTER, NOTCH_RADIUS, build_geometry,
                             l_shape, notched_plate, unit_square)
from equistress.quadrature import make_quadrature, physical_points


def test_unit_square_hand_count():
    mesh = unit_square(0.5)
    assert mesh.nc == 8
    assert mesh.nv == 9
    np.testing.assert_allclose(mesh.areas.sum(), 1.0, rtol=1e-14)


def test_unit_square_center_patch():
    mesh = unit_square(0.5)
    center = int(np.argmin(np.abs(mesh.vertices - 0.5).sum(axis=1)))
    patch = mesh.vertex_patch(center)
    assert len(patch.cells) == 8
    assert not patch.is_boundary


def test_unit_square_corner_patch():
    mesh = unit_square(0.5)
    corner = int(np.argmin(np.abs(mesh.vertices).sum(axis=1)))
    patch = mesh.vertex_patch(corner)
    assert len(patch.cells) in (1, 2)
    assert patch.is_boundary


def test_l_shape_containment():
    mesh = l_shape(0.25)
    v = mesh.vertices
    assert np.all(v >= -1.0 - 1e-12) and np.all(v <= 1.0 + 1e-12)
    inside_removed = (v[:, 0] > 1e-12) & (v[:, 1] < -1e-12)
    assert not inside_removed.any()
    # reentrant corner vertex present
    assert np.any(np.abs(v).sum(axis=1) < 1e-12)
    np.testing.assert_allclose(mesh.areas.sum(), 3.0, rtol=1e-14)


def test_l_shape_initial_study_size():
    # the adaptive study starts from a mesh of a few dozen cells
    mesh = l_shape(0.5)
    assert 20 <= mesh.nc <= 50


def test_partition_of_unity():
    from equistress.fe import barycentric_values

    mesh = l_shape(0.5)
    rng = np.random.default_rng(3)
    pts = physical_points(make_quadrature(4), mesh.vertices, mesh.cells)
    take = rng.choice(pts.shape[1], size=min(7, pts.shape[1]), replace=False)
    lam = barycentric_values(mesh, pts[:, take])
    np.testing.assert_allclose(lam.sum(axis=2), 1.0, atol=1e-13)
    assert np.all(lam >= -1e-13)


def test_face_orientation_consistency():
    mesh = l_shape(0.5)
    # the signed sum of n_F |F| over each cell boundary vanishes; signs
    # follow the owner convention (+ for the lower incident cell)
    acc = np.zeros((mesh.nc, 2))
    for j in range(3):
        faces = mesh.cell_faces[:, j]
        sign = np.where(mesh.face_cells[faces, 0] == np.arange(mesh.nc),
                        1.0, -1.0)
        acc += sign[:, None] * mesh.face_normals[faces] \
            * mesh.face_lengths[faces][:, None]
    assert np.abs(acc).max() <= 1e-12
    lengths = np.hypot(*(mesh.vertices[mesh.faces[:, 1]]
                         - mesh.vertices[mesh.faces[:, 0]]).T)
    np.testing.assert_allclose(
        np.hypot(*mesh.face_normals.T), 1.0, atol=1e-14)
    np.testing.assert_allclose(lengths, mesh.face_lengths, rtol=1e-14)


def test_boundary_normals_point_outward():
    mesh = unit_square(0.5)
    for face in mesh.boundary_faces:
        mid = 0.5 * (mesh.vertices[mesh.faces[face, 0]]
                     + mesh.vertices[mesh.faces[face, 1]])
        outward = mid + 1e-6 * mesh.face_normals[face]
        inside = (0.0 <= outward[0] <= 1.0) and (0.0 <= outward[1] <= 1.0)
        assert not inside


def test_refine_noop():
    mesh = l_shape(0.5)
    refined, parents = mesh.refine(np.array([], dtype=np.int64))
    assert refined is mesh
    np.testing.assert_array_equal(parents, np.arange(mesh.nc))


def test_refine_all_doubles():
    mesh = l_shape(0.5)
    refined, parents = mesh.refine(np.arange(mesh.nc))
    assert refined.nc >= 2 * mesh.nc
    assert len(parents) == refined.nc
    np.testing.assert_allclose(refined.areas.sum(), mesh.areas.sum(),
                               rtol=1e-13)
    # children partition their parents
    for c in range(mesh.nc):
        kids = parents == c
        np.testing.assert_allclose(refined.areas[kids].sum(),
                                   mesh.areas[c], rtol=1e-13)


def test_refine_single_cell_conforming():
    mesh = l_shape(0.5)
    refined, _ = mesh.refine(np.array([5]))
    refined.audit()
    # every interior face shared by exactly two cells is guaranteed by
    # construction; check no vertex landed inside another cell's edge
    # (a hanging node would duplicate a face midpoint as a vertex)
    counts = np.bincount(refined.cells.ravel(), minlength=refined.nv)
    assert counts.min() >= 1


def test_refine_preserves_min_angle():
    mesh = l_shape(0.5)
    base = mesh.min_angle()
    np.testing.assert_allclose(base, 45.0, atol=1e-10)
    rng = np.random.default_rng(11)
    for _ in range(4):
        marked = rng.choice(mesh.nc, size=max(1, mesh.nc // 5),
                            replace=False)
        mesh, _ = mesh.refine(marked)
        mesh.audit()
    # newest-vertex bisection of the criss-cross grid reproduces
    # similar right isosceles triangles
    np.testing.assert_allclose(mesh.min_angle(), 45.0, atol=1e-10)


def test_notched_plate_geometry():
    mesh = notched_plate(2.0)
    cx, cy = NOTCH_CENTER
    r = NOTCH_RADIUS
    v = mesh.vertices
    assert np.all(v[:, 0] >= -1e-9) and np.all(v[:, 0] <= 10.0 + 1e-9)
    assert np.all(v[:, 1] >= -10.0 - 1e-9) and np.all(v[:, 1] <= 10.0 + 1e-9)
    dist = np.hypot(v[:, 0] - cx, v[:, 1] - cy)
    assert dist.min() >= r - 1e-9
    assert mesh.min_angle() >= 15.0
    # arc endpoints are mesh vertices
    for end in ([0.0, cy - r], [np.sqrt(r * r - 1.0), 10.0]):
        assert np.min(np.abs(v - end).sum(axis=1)) <= 1e-9


def test_notched_plate_chord_deviation():
    target_h = 1.0
    mesh = notched_plate(target_h)
    cx, cy = NOTCH_CENTER
    r = NOTCH_RADIUS
    worst = 0.0
    for face in mesh.boundary_faces:
        pa = mesh.vertices[mesh.faces[face, 0]]
        pb = mesh.vertices[mesh.faces[face, 1]]
        on_arc = (abs(np.hypot(*(pa - (cx, cy))) - r) <= 1e-9
                  and abs(np.hypot(*(pb - (cx, cy))) - r) <= 1e-9)
        if not on_arc:
            continue
        mid = 0.5 * (pa + pb)
        worst = max(worst, r - np.hypot(mid[0] - cx, mid[1] - cy))
    assert worst > 0.0  # the arc is actually discretized
    assert worst <= target_h ** 2


@pytest.mark.parametrize("target_h", [2.0, 1.0, 0.5])
def test_notched_plate_resolutions(target_h):
    mesh = notched_plate(target_h)
    mesh.audit()
    assert mesh.min_angle() >= 15.0


def test_notched_plate_refinement_snaps_to_arc():
    mesh = notched_plate(2.0)
    cx, cy = NOTCH_CENTER
    r = NOTCH_RADIUS
    for _ in range(2):
        mesh, _ = mesh.refine(np.arange(mesh.nc))
    mesh.audit()
    assert mesh.min_angle() >= 15.0
    bverts = np.unique(mesh.faces[mesh.boundary_faces].ravel())
    v = mesh.vertices[bverts]
    dist = np.hypot(v[:, 0] - cx, v[:, 1] - cy)
    near = (dist > r - 0.25) & (dist < r + 0.25)
    # every boundary vertex near the notch lies on the circle
    assert np.abs(dist[near] - r).max() <= 1e-9 * r


def test_notched_plate_infeasible():
    with pytest.raises(ConfigurationError):
        notched_plate(3.0)
    with pytest.raises(ConfigurationError):
        notched_plate(-1.0)


def test_build_geometry_dispatch():
    mesh = build_geometry("unit_square", 0.5)
    assert mesh.nc == 8
    with pytest.raises(ConfigurationError):
        build_geometry("moebius_strip", 0.5)
    with pytest.raises(ConfigurationError):
        build_geometry("l_shape", 0.0)
