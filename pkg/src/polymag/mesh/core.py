"""Polyhedral mesh container and geometric precomputation.

Conventions used throughout the package:
  - Each face stores one fixed unit normal n_F; the orientation sign
    eps[T,F] = n_{T,F} . n_F is +1 when n_F points out of T.
  - face_cells[f] = (plus cell, minus cell): n_F points out of the plus
    cell.  Boundary faces have minus cell = -1 and eps = +1.
  - Tangential quantities on a face live in the orthonormal frame
    (t1, t2) with t1 x t2 = n_F.
  - All integration downstream goes through the stored subtessellation
    (tetrahedra for cells, vertex-index triangles for faces), so cells
    and faces are never assumed convex.
"""

import numpy as np

__all__ = ["PolyMesh", "precompute_geometry", "flip_face"]


def _newell_normal(pts):
    # Newell's formula: robust plane normal for (nearly) planar polygons.
    ctr = pts.mean(axis=0)
    d = pts - ctr
    n = np.cross(d, np.roll(d, -1, axis=0)).sum(axis=0)
    nrm = np.linalg.norm(n)
    if nrm == 0.0:
        raise ValueError("degenerate face: zero Newell normal")
    return n / nrm, 0.5 * nrm


def _tri_area2d(a, b, c):
    return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def _point_in_tri(p, a, b, c, tol):
    d1 = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    d2 = (c[0] - b[0]) * (p[1] - b[1]) - (c[1] - b[1]) * (p[0] - b[0])
    d3 = (a[0] - c[0]) * (p[1] - c[1]) - (a[1] - c[1]) * (p[0] - c[0])
    return d1 >= -tol and d2 >= -tol and d3 >= -tol


def _ear_clip(loop2d):
    """Triangulate a simple polygon (2D coords, CCW) into index triples."""
    n = len(loop2d)
    if n == 3:
        return [(0, 1, 2)]
    idx = list(range(n))
    scale = np.abs(loop2d).max() + 1.0
    tol = 1e-12 * scale * scale
    tris = []
    guard = 0
    while len(idx) > 3 and guard < 4 * n * n:
        guard += 1
        clipped = False
        m = len(idx)
        for j in range(m):
            i0, i1, i2 = idx[j - 1], idx[j], idx[(j + 1) % m]
            a, b, c = loop2d[i0], loop2d[i1], loop2d[i2]
            if _tri_area2d(a, b, c) <= tol:
                continue
            ok = True
            for q in idx:
                if q in (i0, i1, i2):
                    continue
                if _point_in_tri(loop2d[q], a, b, c, tol):
                    ok = False
                    break
            if ok:
                tris.append((i0, i1, i2))
                idx.pop(j)
                clipped = True
                break
        if not clipped:
            # Collinear leftovers: drop the flattest corner and continue.
            areas = [
                abs(_tri_area2d(loop2d[idx[j - 1]], loop2d[idx[j]],
                                loop2d[idx[(j + 1) % len(idx)]]))
                for j in range(len(idx))
            ]
            j = int(np.argmin(areas))
            if areas[j] > tol:
                raise ValueError("ear clipping failed on non-simple polygon")
            idx.pop(j)
    if len(idx) == 3:
        tris.append((idx[0], idx[1], idx[2]))
    return tris


def _tri_incenter2d(a, b, c):
    la = np.linalg.norm(np.asarray(c) - b)
    lb = np.linalg.norm(np.asarray(a) - c)
    lc = np.linalg.norm(np.asarray(b) - a)
    p = la + lb + lc
    ctr = (la * np.asarray(a) + lb * np.asarray(b) + lc * np.asarray(c)) / p
    r = 2.0 * abs(_tri_area2d(a, b, c)) / p
    return ctr, r


def _tet_incenter(p):
    # p: (4,3). Incenter weights are the areas of the opposite facets.
    areas = np.empty(4)
    for i in range(4):
        q = np.delete(p, i, axis=0)
        areas[i] = 0.5 * np.linalg.norm(np.cross(q[1] - q[0], q[2] - q[0]))
    vol = abs(np.linalg.det(p[1:] - p[0])) / 6.0
    s = areas.sum()
    return (areas[:, None] * p).sum(axis=0) / s, 3.0 * vol / s


class PolyMesh:
    """Polyhedral mesh: vertices, polygonal faces, cells as signed face sets.

    Construct with raw connectivity, then call precompute_geometry() (the
    generators and the reader do this) before using any geometric field.
    """

    def __init__(self, verts, face_verts, cell_faces, cell_eps, cell_subtets=None):
        self.verts = np.asarray(verts, dtype=float)
        self.face_verts = [np.asarray(f, dtype=np.int64) for f in face_verts]
        self.cell_faces = [np.asarray(c, dtype=np.int64) for c in cell_faces]
        self.cell_eps = [np.asarray(e, dtype=np.int64) for e in cell_eps]
        if cell_subtets is not None:
            cell_subtets = [np.asarray(t, dtype=np.int64) for t in cell_subtets]
        self.cell_subtets = cell_subtets
        self.mu = np.ones(len(self.cell_faces))
        self.has_geometry = False

    @property
    def n_verts(self):
        return self.verts.shape[0]

    @property
    def n_faces(self):
        return len(self.face_verts)

    @property
    def n_cells(self):
        return len(self.cell_faces)

    @property
    def h_max(self):
        return float(self.cell_h.max())

    def boundary_faces(self):
        return np.nonzero(self.face_cells[:, 1] < 0)[0]

    def interior_faces(self):
        return np.nonzero(self.face_cells[:, 1] >= 0)[0]

    def set_mu(self, mu):
        mu = np.broadcast_to(np.asarray(mu, dtype=float), (self.n_cells,)).copy()
        if not np.all(mu > 0.0):
            raise ValueError("permeability values must be positive")
        self.mu = mu

    def face_points(self, f):
        return self.verts[self.face_verts[f]]

    def cell_vertex_ids(self, c):
        ids = np.concatenate([self.face_verts[f] for f in self.cell_faces[c]])
        return np.unique(ids)


def _face_geometry(mesh, f):
    pts = mesh.face_points(f)
    n, area_newell = _newell_normal(pts)
    ctr = pts.mean(axis=0)
    h = 0.0
    for i in range(len(pts)):
        d = np.linalg.norm(pts[i + 1:] - pts[i], axis=1)
        if d.size:
            h = max(h, d.max())
    off = np.abs((pts - ctr) @ n).max()
    if off > 1e-9 * h:
        raise ValueError(f"face {f}: vertices non-planar ({off:.3e} > 1e-9*h_F)")
    # Frame with t1 x t2 = n.
    e0 = pts[1] - pts[0]
    t1 = e0 - (e0 @ n) * n
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    loop2d = (pts - ctr) @ np.column_stack([t1, t2])
    if _tri_area2d(loop2d[0], loop2d[1], loop2d[2]) < 0 and len(loop2d) == 3:
        raise AssertionError("triangle loop orientation inconsistent with normal")
    tris_local = _ear_clip([tuple(p) for p in loop2d])
    area = 0.0
    best = (None, -1.0)
    for (i, j, k) in tris_local:
        a2 = _tri_area2d(loop2d[i], loop2d[j], loop2d[k])
        area += a2
        ctr2d, r = _tri_incenter2d(loop2d[i], loop2d[j], loop2d[k])
        if r > best[1]:
            best = (ctr2d, r)
    if abs(area - area_newell) > 1e-10 * max(area, area_newell):
        raise ValueError(f"face {f}: triangulation area mismatch")
    x_f = ctr + best[0][0] * t1 + best[0][1] * t2
    tris = np.asarray(
        [[mesh.face_verts[f][i] for i in t] for t in tris_local], dtype=np.int64
    )
    return n, ctr, x_f, h, area, t1, t2, tris, best[1]


def _signed_fan_subtess(mesh, c, apex):
    tets = []
    vols = []
    for f, eps in zip(mesh.cell_faces[c], mesh.cell_eps[c]):
        for tri in mesh.face_tris[f]:
            a, b, d = mesh.verts[tri[0]], mesh.verts[tri[1]], mesh.verts[tri[2]]
            v = eps * np.dot(np.cross(b - a, d - a), a - apex) / 6.0
            tets.append(np.array([apex, a, b, d]))
            vols.append(v)
    return np.asarray(tets), np.asarray(vols)


def _cell_geometry(mesh, c):
    vids = mesh.cell_vertex_ids(c)
    pts = mesh.verts[vids]
    h = 0.0
    for i in range(len(pts)):
        d = np.linalg.norm(pts[i + 1:] - pts[i], axis=1)
        if d.size:
            h = max(h, d.max())
    # Volume by the divergence theorem (independent of the subtessellation).
    vol_div = 0.0
    for f, eps in zip(mesh.cell_faces[c], mesh.cell_eps[c]):
        for tri in mesh.face_tris[f]:
            a, b, d = mesh.verts[tri[0]], mesh.verts[tri[1]], mesh.verts[tri[2]]
            nvec = np.cross(b - a, d - a)  # |tri| * n_F * 2, oriented with n_F
            vol_div += eps * np.dot(nvec, (a + b + d) / 3.0) / 6.0
    if vol_div <= 0:
        raise ValueError(f"cell {c}: nonpositive volume {vol_div:.3e}")

    if mesh.cell_subtets is not None and mesh.cell_subtets[c] is not None:
        quads = mesh.cell_subtets[c]
        tets = mesh.verts[quads]
        vols = np.linalg.det(tets[:, 1:] - tets[:, :1]) / 6.0
        if np.any(vols < 0):  # normalize member-tet orientation
            quads = quads.copy()
            neg = vols < 0
            quads[neg, 2], quads[neg, 3] = quads[neg, 3], quads[neg, 2].copy()
            mesh.cell_subtets[c] = quads
            tets = mesh.verts[quads]
            vols = np.linalg.det(tets[:, 1:] - tets[:, :1]) / 6.0
        best_x, best_r = None, -1.0
        for t in range(len(tets)):
            x, r = _tet_incenter(tets[t])
            if r > best_r:
                best_x, best_r = x, r
        x_t = best_x
    elif len(vids) == 4 and len(mesh.cell_faces[c]) == 4:
        # The cell is a tet: use it directly, no fan needed.
        quad = vids.copy()
        p4 = mesh.verts[quad]
        if np.linalg.det(p4[1:] - p4[0]) < 0:
            quad[2], quad[3] = quad[3], quad[2]
        tets = mesh.verts[quad][None, :, :]
        vols = np.array([vol_div])
        x_t, best_r = _tet_incenter(tets[0])
    else:
        apex = pts.mean(axis=0)
        tets, vols = _signed_fan_subtess(mesh, c, apex)
        best_x, best_r = None, -1.0
        for t in range(len(tets)):
            if vols[t] <= 0:
                continue
            x, r = _tet_incenter(tets[t])
            if r > best_r:
                best_x, best_r = x, r
        if best_x is None:
            raise ValueError(f"cell {c}: no positive subtessellation tet")
        x_t = best_x
        tets, vols = _signed_fan_subtess(mesh, c, x_t)
    if abs(vols.sum() - vol_div) > 1e-10 * vol_div:
        raise ValueError(f"cell {c}: subtessellation volume mismatch")
    return x_t, h, vol_div, tets, vols, best_r


def precompute_geometry(mesh):
    """Fill all geometric fields in place, validate invariants, return mesh.

    Populates per face: n_F, x_F, h_F, area, frame (t1,t2), vertex-index
    subtriangles, (plus,minus) cell pair; per cell: x_T, h_T, volume, and a
    coordinate subtessellation with signed volumes.  Reports the inscribed
    radius comparability as mesh.regularity.
    """
    nf, nc = mesh.n_faces, mesh.n_cells
    # Cell adjacency first; boundary faces may need flipping before geometry.
    face_cells = np.full((nf, 2), -1, dtype=np.int64)
    for c in range(nc):
        for f, eps in zip(mesh.cell_faces[c], mesh.cell_eps[c]):
            col = 0 if eps > 0 else 1
            if face_cells[f, col] >= 0:
                raise ValueError(f"face {f}: duplicate eps={eps:+d} incidence")
            face_cells[f, col] = c
    for f in range(nf):
        if face_cells[f, 0] < 0 and face_cells[f, 1] < 0:
            raise ValueError(f"face {f}: not referenced by any cell")
        if face_cells[f, 0] < 0:
            # Boundary face oriented inward: canonicalize to eps = +1.
            c = face_cells[f, 1]
            mesh.face_verts[f] = mesh.face_verts[f][::-1].copy()
            k = list(mesh.cell_faces[c]).index(f)
            mesh.cell_eps[c][k] = 1
            face_cells[f, 0], face_cells[f, 1] = c, -1
    mesh.face_cells = face_cells

    mesh.face_normal = np.empty((nf, 3))
    mesh.face_center = np.empty((nf, 3))
    mesh.face_h = np.empty(nf)
    mesh.face_area = np.empty(nf)
    mesh.face_t1 = np.empty((nf, 3))
    mesh.face_t2 = np.empty((nf, 3))
    mesh.face_tris = [None] * nf
    face_reg = np.inf
    for f in range(nf):
        n, _ctr, x_f, h, area, t1, t2, tris, r_in = _face_geometry(mesh, f)
        mesh.face_normal[f] = n
        mesh.face_center[f] = x_f
        mesh.face_h[f] = h
        mesh.face_area[f] = area
        mesh.face_t1[f] = t1
        mesh.face_t2[f] = t2
        mesh.face_tris[f] = tris
        face_reg = min(face_reg, r_in / h)

    mesh.cell_center = np.empty((nc, 3))
    mesh.cell_h = np.empty(nc)
    mesh.cell_volume = np.empty(nc)
    mesh.cell_tets = [None] * nc
    mesh.cell_tet_vols = [None] * nc
    cell_reg = np.inf
    for c in range(nc):
        x_t, h, vol, tets, vols, r_in = _cell_geometry(mesh, c)
        mesh.cell_center[c] = x_t
        mesh.cell_h[c] = h
        mesh.cell_volume[c] = vol
        mesh.cell_tets[c] = tets
        mesh.cell_tet_vols[c] = vols
        cell_reg = min(cell_reg, r_in / h)
        # Closed-boundary identity on constants.
        s = np.zeros(3)
        tot = 0.0
        for f, eps in zip(mesh.cell_faces[c], mesh.cell_eps[c]):
            s += eps * mesh.face_area[f] * mesh.face_normal[f]
            tot += mesh.face_area[f]
        if np.linalg.norm(s) > 1e-12 * tot:
            raise ValueError(f"cell {c}: boundary normals do not close up")
    mesh.regularity = {"cell": float(cell_reg), "face": float(face_reg)}
    mesh.has_geometry = True
    return mesh


def flip_face(mesh, f):
    """Reverse the stored orientation of face f (n_F -> -n_F), updating the
    frame, the subtriangles, both adjacent eps entries, and the cell pair.
    Interior faces only: boundary normals must keep pointing outward."""
    if mesh.face_cells[f, 1] < 0:
        raise ValueError(f"face {f}: cannot flip a boundary face")
    mesh.face_verts[f] = mesh.face_verts[f][::-1].copy()
    mesh.face_normal[f] = -mesh.face_normal[f]
    # Swap frame axes: (t2, t1) keeps t1 x t2 = n after the normal flip.
    t1 = mesh.face_t1[f].copy()
    mesh.face_t1[f] = mesh.face_t2[f]
    mesh.face_t2[f] = t1
    mesh.face_tris[f] = mesh.face_tris[f][:, ::-1].copy()
    for c in mesh.face_cells[f]:
        if c < 0:
            continue
        k = list(mesh.cell_faces[c]).index(f)
        mesh.cell_eps[c][k] = -mesh.cell_eps[c][k]
    mesh.face_cells[f] = mesh.face_cells[f][::-1].copy()
