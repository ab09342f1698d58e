import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polymag.mesh import (
    MeshFormatError,
    PolyMesh,
    agglomerate_random,
    flip_face,
    generate_box_tet,
    generate_cavity_box,
    generate_punched_box,
    generate_reentrant_prism,
    precompute_geometry,
    read_mesh,
    write_mesh,
)


def euler_counts(mesh):
    edges = set()
    for loop in mesh.face_verts:
        for i in range(len(loop)):
            a, b = loop[i], loop[(i + 1) % len(loop)]
            edges.add((min(a, b), max(a, b)))
    return mesh.n_verts, len(edges), mesh.n_faces, mesh.n_cells


def test_unit_cube_counts():
    m = generate_box_tet(1, 1, 1)
    assert m.n_cells == 6
    assert m.n_verts == 8
    assert m.n_faces == 18
    assert len(m.boundary_faces()) == 12
    m2 = generate_box_tet(2, 2, 2)
    assert m2.n_cells == 48
    # 6n^2(2n+1) faces for the n x n x n six-tet split
    assert m2.n_faces == 120


def test_volume_partition():
    for m, vol in [
        (generate_box_tet(2, 3, 1, bounds=((0, 0, 0), (2, 1, 1))), 2.0),
        (generate_punched_box(1), 8.0),
        (generate_cavity_box(1), 26.0),
        (generate_reentrant_prism(1), 3.0),
    ]:
        assert np.all(m.cell_volume > 0)
        assert abs(m.cell_volume.sum() - vol) <= 1e-10 * vol
        for c in range(m.n_cells):
            assert abs(m.cell_tet_vols[c].sum() - m.cell_volume[c]) <= 1e-10 * m.cell_volume[c]


def test_euler_characteristic_by_genus():
    # chi = V - E + F - C; for a solid: chi = 1 - b1 + b2.
    assert sum([1, -1, 1, -1][i] * x for i, x in enumerate(euler_counts(generate_box_tet(2, 2, 2)))) == 1
    assert sum([1, -1, 1, -1][i] * x for i, x in enumerate(euler_counts(generate_punched_box(1)))) == 0
    assert sum([1, -1, 1, -1][i] * x for i, x in enumerate(euler_counts(generate_cavity_box(1)))) == 2
    assert sum([1, -1, 1, -1][i] * x for i, x in enumerate(euler_counts(generate_reentrant_prism(2)))) == 1


def test_boundary_normals_outward():
    m = generate_box_tet(2, 2, 2)
    for f in m.boundary_faces():
        c = m.face_cells[f, 0]
        assert m.face_cells[f, 1] == -1
        d = m.face_center[f] - m.cell_center[c]
        assert np.dot(d, m.face_normal[f]) > 0


def test_interior_face_eps_opposite():
    m = generate_box_tet(2, 2, 2)
    eps = {}
    for c in range(m.n_cells):
        for f, e in zip(m.cell_faces[c], m.cell_eps[c]):
            eps.setdefault(f, []).append((c, e))
    for f in m.interior_faces():
        (c0, e0), (c1, e1) = eps[f]
        assert e0 * e1 == -1
        plus = c0 if e0 > 0 else c1
        minus = c1 if e0 > 0 else c0
        assert m.face_cells[f, 0] == plus and m.face_cells[f, 1] == minus


def test_face_frames_right_handed():
    m = generate_punched_box(1)
    t1xt2 = np.cross(m.face_t1, m.face_t2)
    assert np.allclose(t1xt2, m.face_normal, atol=1e-13)
    assert np.allclose((m.face_t1 * m.face_t2).sum(1), 0.0, atol=1e-13)


def test_face_centers_inside():
    # x_F is an incenter of a subtriangle, hence strictly inside the face plane
    m = generate_box_tet(2, 2, 2)
    for f in range(m.n_faces):
        pts = m.face_points(f)
        d = np.abs((m.face_center[f] - pts[0]) @ m.face_normal[f])
        assert d < 1e-12 * m.face_h[f]


def test_single_tet_metrics():
    verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    faces = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]]
    mesh = PolyMesh(verts, faces, [[0, 1, 2, 3]], [[1, 1, 1, 1]])
    precompute_geometry(mesh)
    assert abs(mesh.cell_volume[0] - 1.0 / 6.0) < 1e-14
    assert abs(mesh.cell_h[0] - np.sqrt(2.0)) < 1e-14
    # incenter of this tet: r = 3V / sum(areas)
    areas = 3 * 0.5 + 0.5 * np.sqrt(3)
    r = 3 * (1 / 6) / areas
    assert np.allclose(mesh.cell_center[0], [r, r, r], atol=1e-13)


def test_nonconvex_cell_geometry():
    # L-shaped prism as a single cell: volume 3, integration must not
    # assume convexity or star-shape w.r.t. the vertex centroid.
    v = []
    poly = [(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)]
    for z in (0.0, 1.0):
        v += [(x, y, z) for x, y in poly]
    faces = [
        [5, 4, 3, 2, 1, 0],          # bottom, outward = -z
        [6, 7, 8, 9, 10, 11],        # top, outward = +z
    ]
    for i in range(6):
        j = (i + 1) % 6
        faces.append([i, j, j + 6, i + 6])
    mesh = PolyMesh(np.asarray(v, float), faces, [list(range(8))], [[1] * 8])
    precompute_geometry(mesh)
    assert abs(mesh.cell_volume[0] - 3.0) < 1e-12
    assert mesh.cell_tet_vols[0].sum() == pytest.approx(3.0, rel=1e-12)


def test_agglomerate_preserves_measures():
    m = generate_box_tet(3, 3, 3)
    a = agglomerate_random(m, seed=20260819, target_fraction=0.5)
    assert a.n_cells < m.n_cells
    assert a.n_verts == m.n_verts
    assert abs(a.cell_volume.sum() - m.cell_volume.sum()) < 1e-12
    assert len(a.boundary_faces()) == len(m.boundary_faces())
    assert abs(a.face_area[a.boundary_faces()].sum() - m.face_area[m.boundary_faces()].sum()) < 1e-10
    assert max(len(fs) for fs in a.cell_faces) > 4


def test_agglomerate_deterministic():
    m = generate_box_tet(2, 2, 2)
    a = agglomerate_random(m, seed=3, target_fraction=0.6)
    b = agglomerate_random(m, seed=3, target_fraction=0.6)
    assert a.n_cells == b.n_cells
    for fa, fb in zip(a.cell_faces, b.cell_faces):
        assert (fa == fb).all()
    assert (a.verts == b.verts).all()


def test_agglomerate_no_selection_is_identity():
    verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    faces = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]]
    mesh = precompute_geometry(PolyMesh(verts, faces, [[0, 1, 2, 3]], [[1, 1, 1, 1]],
                                        cell_subtets=[np.arange(4).reshape(1, 4)]))
    out = agglomerate_random(mesh, seed=0, target_fraction=1.0)
    assert out.n_cells == 1 and out.n_faces == 4


def test_agglomerate_rejects_polyhedral_input():
    m = generate_box_tet(2, 2, 2)
    a = agglomerate_random(m, seed=1, target_fraction=0.5)
    with pytest.raises(ValueError):
        agglomerate_random(a, seed=1, target_fraction=0.5)


def test_io_roundtrip(tmp_path):
    m = agglomerate_random(generate_box_tet(2, 2, 2), seed=5, target_fraction=0.4)
    p = tmp_path / "m.msh"
    write_mesh(m, p)
    r = read_mesh(p)
    assert r.n_verts == m.n_verts and r.n_faces == m.n_faces and r.n_cells == m.n_cells
    assert (r.verts == m.verts).all()
    for a, b in zip(r.face_verts, m.face_verts):
        assert (a == b).all()
    for a, b in zip(r.cell_faces, m.cell_faces):
        assert (a == b).all()
    for a, b in zip(r.cell_eps, m.cell_eps):
        assert (a == b).all()
    assert np.allclose(r.face_center, m.face_center, atol=1e-14)
    assert abs(r.cell_volume.sum() - m.cell_volume.sum()) < 1e-12
    # second write is byte-identical (deterministic serialization)
    p2 = tmp_path / "m2.msh"
    write_mesh(r, p2)
    assert p.read_bytes() == p2.read_bytes()


def test_io_empty_file(tmp_path):
    p = tmp_path / "empty.msh"
    p.write_text("")
    with pytest.raises(MeshFormatError, match="line 1"):
        read_mesh(p)


def test_io_dangling_face_reference(tmp_path):
    p = tmp_path / "bad.msh"
    p.write_text(
        "polymesh 1\n"
        "vertices 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n"
        "faces 4\n3 1 2 3\n3 0 3 2\n3 0 1 3\n3 0 2 1\n"
        "cells 1\n4 1 2 3 9\n"
    )
    with pytest.raises(MeshFormatError, match="dangling face reference 9"):
        read_mesh(p)


def test_io_bad_header(tmp_path):
    p = tmp_path / "hdr.msh"
    p.write_text("polymesh 2\nvertices 0\n")
    with pytest.raises(MeshFormatError, match="header"):
        read_mesh(p)


def test_io_comments_and_blanks(tmp_path):
    p = tmp_path / "c.msh"
    p.write_text(
        "# a comment\npolymesh 1\n\nvertices 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n"
        "faces 4\n3 1 2 3\n3 0 3 2\n3 0 1 3\n3 0 2 1\n"
        "# cells next\ncells 1\n4 1 2 3 4\n"
    )
    m = read_mesh(p)
    assert m.n_cells == 1
    assert abs(m.cell_volume[0] - 1 / 6) < 1e-14


def test_flip_face_involution():
    m = generate_box_tet(2, 2, 2)
    f = int(m.interior_faces()[0])
    n0 = m.face_normal[f].copy()
    fc0 = m.face_cells[f].copy()
    area0 = m.face_area[f]
    flip_face(m, f)
    assert np.allclose(m.face_normal[f], -n0)
    assert (m.face_cells[f] == fc0[::-1]).all()
    assert np.allclose(np.cross(m.face_t1[f], m.face_t2[f]), m.face_normal[f], atol=1e-13)
    flip_face(m, f)
    assert np.allclose(m.face_normal[f], n0)
    assert (m.face_cells[f] == fc0).all()
    assert m.face_area[f] == area0
    with pytest.raises(ValueError):
        flip_face(m, int(m.boundary_faces()[0]))


def test_set_mu_validation():
    m = generate_box_tet(1, 1, 1)
    m.set_mu(2.5)
    assert (m.mu == 2.5).all()
    with pytest.raises(ValueError):
        m.set_mu(-1.0)


@settings(max_examples=15, deadline=None)
@given(
    nx=st.integers(1, 3), ny=st.integers(1, 3), nz=st.integers(1, 3),
    seed=st.integers(0, 2**31 - 1),
)
def test_agglomerate_partition_property(nx, ny, nz, seed):
    m = generate_box_tet(nx, ny, nz)
    a = agglomerate_random(m, seed=seed, target_fraction=0.7)
    assert abs(a.cell_volume.sum() - 1.0) < 1e-10
    # every original boundary triangle survives with outward normal
    assert len(a.boundary_faces()) == len(m.boundary_faces())
    for f in a.boundary_faces():
        c = a.face_cells[f, 0]
        assert np.dot(a.face_center[f] - a.cell_center[c], a.face_normal[f]) > 0
