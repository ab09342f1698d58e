"""Domain topology: boundary pieces, Betti numbers, and cutting surfaces.

The first Betti number counts independent tunnels through the solid; for
each tunnel the scalar potential is made single valued by cutting along
an oriented surface made of interface faces.  Surfaces are computed in
three steps: a homology kernel in a dual spanning-tree gauge, smoothing
to the harmonic representative of each class, and extraction of an
integer level set of the resulting multivalued potential.  Every output
is verified combinatorially (the cut complex must have first Betti
number zero), so the linear algebra in the middle never has to be
trusted.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh.core import flip_face

__all__ = [
    "BoundaryComponent",
    "CuttingSurface",
    "TopologyInfo",
    "TopologyError",
    "boundary_components",
    "betti_numbers",
    "compute_cutting_surfaces",
    "cut_betti",
    "sigma_side_tags",
    "analyze_topology",
]

log = logging.getLogger(__name__)

# Level-set offsets tried in order until the extracted surface is manifold.
_OFFSETS = (0.5, 0.318310, 0.777001, 0.131313, 0.923187, 0.25, 0.660602,
            0.054321, 0.434343, 0.871111)


class TopologyError(RuntimeError):
    """Cutting-surface search failed; .partial holds what was found."""

    def __init__(self, msg, partial=()):
        super().__init__(msg)
        self.partial = list(partial)


@dataclass(frozen=True)
class BoundaryComponent:
    index: int            # 0 is the outer component
    faces: np.ndarray     # sorted boundary face ids
    area: float


@dataclass(frozen=True)
class CuttingSurface:
    index: int            # 1-based
    faces: np.ndarray     # sorted interface face ids, n_F = n_Sigma on each
    plus_cells: np.ndarray
    minus_cells: np.ndarray


@dataclass
class TopologyInfo:
    beta0: int
    beta1: int
    beta2: int
    boundary: list
    surfaces: list = None


def _face_edges(loop):
    # Edge keys (a<b) of one loop with +1 when traversed a->b.
    out = []
    n = len(loop)
    for i in range(n):
        a, b = int(loop[i]), int(loop[(i + 1) % n])
        out.append(((a, b), 1) if a < b else ((b, a), -1))
    return out


def _boundary_edges(mesh):
    keys = set()
    for f in mesh.boundary_faces():
        for key, _s in _face_edges(mesh.face_verts[f]):
            keys.add(key)
    return keys


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra

    def groups(self):
        out = {}
        for x in self.parent:
            out.setdefault(self.find(x), []).append(x)
        return list(out.values())


def boundary_components(mesh):
    """Split the boundary faces into edge-connected components.

    Component 0 is the outer one: its bounding box must contain the boxes
    of all other components.
    """
    bf = mesh.boundary_faces()
    if bf.size == 0:
        raise ValueError("mesh has no boundary faces; expected a bounded solid")
    edge_faces = {}
    for f in bf:
        for key, _s in _face_edges(mesh.face_verts[f]):
            edge_faces.setdefault(key, []).append(int(f))
    uf = _UnionFind(int(f) for f in bf)
    for fs in edge_faces.values():
        for g in fs[1:]:
            uf.union(fs[0], g)
    comps = sorted(uf.groups(), key=min)
    boxes = []
    for faces in comps:
        vids = np.unique(np.concatenate([mesh.face_verts[f] for f in faces]))
        pts = mesh.verts[vids]
        boxes.append((pts.min(axis=0), pts.max(axis=0)))
    outer = int(np.argmax([np.prod(hi - lo) for lo, hi in boxes]))
    tol = 1e-12 * max(np.max(hi - lo) for lo, hi in boxes)
    for i, (lo, hi) in enumerate(boxes):
        if i == outer:
            continue
        if np.any(lo < boxes[outer][0] - tol) or np.any(hi > boxes[outer][1] + tol):
            raise ValueError("boundary components are not nested; "
                             "cannot identify the outer component")
    order = [outer] + [i for i in range(len(comps)) if i != outer]
    out = []
    for j, i in enumerate(order):
        faces = np.asarray(sorted(comps[i]), dtype=np.int64)
        out.append(BoundaryComponent(j, faces, float(mesh.face_area[faces].sum())))
    return out


def _euler_characteristic(mesh):
    """chi = V - E + F - C, over the tetrahedral subtessellation when one is
    stored (generators, agglomerates), else over the polyhedral complex.
    Both count the same topology, so the values agree."""
    if mesh.cell_subtets is not None and all(t is not None for t in mesh.cell_subtets):
        quads = np.vstack(mesh.cell_subtets)
        pairs = quads[:, [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]].reshape(-1, 2)
        pairs = np.unique(np.sort(pairs, axis=1), axis=0)
        tris = quads[:, [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]].reshape(-1, 3)
        tris = np.unique(np.sort(tris, axis=1), axis=0)
        nv = np.unique(quads).size
        return int(nv - len(pairs) + len(tris) - len(quads))
    edges = set()
    vs = set()
    for loop in mesh.face_verts:
        vs.update(int(v) for v in loop)
        for key, _s in _face_edges(loop):
            edges.add(key)
    return int(len(vs) - len(edges) + mesh.n_faces - mesh.n_cells)


def _check_connected(mesh):
    seen = np.zeros(mesh.n_cells, dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        c = stack.pop()
        for f in mesh.cell_faces[c]:
            for nb in mesh.face_cells[f]:
                if nb >= 0 and not seen[nb]:
                    seen[nb] = True
                    stack.append(int(nb))
    if not seen.all():
        raise ValueError("mesh is disconnected; exactly one component is required")


def betti_numbers(mesh):
    """Betti numbers of the solid: beta0 = 1 enforced, beta2 = number of
    boundary components minus one, beta1 = 1 + beta2 - chi."""
    _check_connected(mesh)
    comps = boundary_components(mesh)
    beta2 = len(comps) - 1
    chi = _euler_characteristic(mesh)
    beta1 = 1 + beta2 - chi
    if beta1 < 0:
        raise ValueError(f"invalid complex: chi = {chi} exceeds 1 + beta2 = {1 + beta2}")
    return TopologyInfo(beta0=1, beta1=beta1, beta2=beta2, boundary=comps)


def _surface_face_checks(mesh, faces, boundary_edge_keys):
    """Manifold-with-boundary checks for one face set; boundary edges of
    the surface must lie on the domain boundary.  Returns True/False."""
    count = {}
    for f in faces:
        for key, _s in _face_edges(mesh.face_verts[f]):
            count[key] = count.get(key, 0) + 1
    for key, n in count.items():
        if n > 2:
            return False
        if n == 1 and key not in boundary_edge_keys:
            return False
    return True


def _edge_connected_components(mesh, faces):
    edge_faces = {}
    for f in faces:
        for key, _s in _face_edges(mesh.face_verts[f]):
            edge_faces.setdefault(key, []).append(int(f))
    uf = _UnionFind(int(f) for f in faces)
    for fs in edge_faces.values():
        for g in fs[1:]:
            uf.union(fs[0], g)
    return sorted(uf.groups(), key=len, reverse=True)


def _lift_to_int(vec):
    """Scale a float vector to the smallest integer vector along it."""
    for q in range(1, 65):
        w = vec * q
        r = np.round(w)
        if np.max(np.abs(w - r)) < 1e-6 * max(1.0, np.abs(r).max()) and np.any(r):
            z = r.astype(np.int64)
            break
    else:
        from fractions import Fraction
        from math import lcm
        fracs = [Fraction(float(x)).limit_denominator(10000) for x in vec]
        den = 1
        for fr in fracs:
            den = lcm(den, fr.denominator)
        if den > 10 ** 6:
            return None
        z = np.array([int(fr * den) for fr in fracs], dtype=np.int64)
        if not np.any(z) or np.max(np.abs(vec * den - z)) > 1e-4:
            return None
    g = np.gcd.reduce(np.abs(z[z != 0]))
    z //= g
    nz = z[z != 0]
    if nz[0] < 0:
        z = -z
    return z


def compute_cutting_surfaces(mesh, info=None):
    """Find beta1 disjoint oriented cutting surfaces made of interface faces.

    Face normals of member faces are re-oriented in place (with incidence
    sign updates) so that n_F agrees with the transversal direction of its
    surface.  The result is verified: cutting along all surfaces must make
    the first Betti number vanish, else TopologyError (partial result
    attached).
    """
    if info is None:
        info = betti_numbers(mesh)
    if info.beta1 == 0:
        return []
    ifaces = mesh.interior_faces()
    n_int = len(ifaces)
    n_cells = mesh.n_cells
    col_of = {int(f): i for i, f in enumerate(ifaces)}
    t_plus = mesh.face_cells[ifaces, 0].copy()
    t_minus = mesh.face_cells[ifaces, 1].copy()

    # Dual spanning tree, BFS from cell 0 in ascending (neighbor, face) order.
    adj = [[] for _ in range(n_cells)]
    for i in range(n_int):
        adj[t_plus[i]].append((int(t_minus[i]), i))
        adj[t_minus[i]].append((int(t_plus[i]), i))
    for a in adj:
        a.sort()
    parent_cell = -np.ones(n_cells, dtype=np.int64)
    parent_col = -np.ones(n_cells, dtype=np.int64)
    bfs_order = [0]
    seen = np.zeros(n_cells, dtype=bool)
    seen[0] = True
    head = 0
    while head < len(bfs_order):
        c = bfs_order[head]
        head += 1
        for nb, i in adj[c]:
            if not seen[nb]:
                seen[nb] = True
                parent_cell[nb] = c
                parent_col[nb] = i
                bfs_order.append(nb)
    tree_col = np.zeros(n_int, dtype=bool)
    tree_col[parent_col[parent_col >= 0]] = True
    cotree = np.nonzero(~tree_col)[0]

    # Relations: around each edge not on the boundary, the signed sum of
    # face values vanishes.  Columns are interior faces.
    boundary_edge_keys = _boundary_edges(mesh)
    edge_entries = {}
    for i, f in enumerate(ifaces):
        for key, s in _face_edges(mesh.face_verts[f]):
            if key not in boundary_edge_keys:
                edge_entries.setdefault(key, []).append((i, s))
    rows_ij, cols_ij, vals = [], [], []
    for r, (_key, ent) in enumerate(sorted(edge_entries.items())):
        for i, s in ent:
            rows_ij.append(r)
            cols_ij.append(i)
            vals.append(s)
    n_rows = len(edge_entries)
    d_int = sp.csr_matrix(
        (np.asarray(vals, dtype=np.int64), (rows_ij, cols_ij)), shape=(n_rows, n_int))
    d_flt = d_int.astype(np.float64)

    # Kernel of the cotree block: one vector per independent tunnel.  In
    # this gauge a kernel vector's entries are its periods, so an integer
    # representative of each class is an integer kernel vector.
    dc = d_flt[:, cotree]
    if len(cotree) <= 1200:
        null = sla.null_space(dc.toarray())
        if null.shape[1] != info.beta1:
            raise TopologyError(
                f"kernel dimension {null.shape[1]} != beta1 = {info.beta1}")
    else:
        kmat = (dc.T @ dc).tocsc()
        v0 = np.cos(0.7 * np.arange(len(cotree))) + 0.5
        vals_e, vecs = spla.eigsh(kmat, k=info.beta1, sigma=-1e-6, v0=v0)
        scale = np.max(np.abs(kmat.diagonal())) + 1.0
        if np.max(vals_e) > 1e-9 * scale:
            raise TopologyError(
                f"smallest eigenvalues {vals_e} not numerically zero")
        null = vecs

    # Reduced echelon form separates the classes; each row is then scaled
    # to the primitive integer vector along it and verified exactly.
    basis = null.T.copy()
    b1 = info.beta1
    done_cols = []
    for r in range(b1):
        sub = np.abs(basis[r:])
        ri, ci = np.unravel_index(np.argmax(sub), sub.shape)
        ri += r
        basis[[r, ri]] = basis[[ri, r]]
        basis[r] /= basis[r, ci]
        for rr in range(b1):
            if rr != r:
                basis[rr] -= basis[rr, ci] * basis[r]
        done_cols.append(ci)
    zs = []
    for r in range(b1):
        zc = _lift_to_int(basis[r])
        if zc is None:
            raise TopologyError("could not scale a kernel vector to integers",
                                partial=zs)
        z = np.zeros(n_int, dtype=np.int64)
        z[cotree] = zc
        if (d_int @ z != 0).any():
            raise TopologyError("integer kernel candidate fails the exact "
                                "cocycle check", partial=zs)
        zs.append(z)

    def class_coords(cvec):
        # Reduce by a 3-chain so tree entries vanish; cotree entries are
        # then the class coordinates (exact integer arithmetic).
        w = np.zeros(n_cells, dtype=np.int64)
        for c in bfs_order[1:]:
            i = parent_col[c]
            if c == t_plus[i]:
                w[c] = w[parent_cell[c]] + cvec[i]
            else:
                w[c] = w[parent_cell[c]] - cvec[i]
        red = cvec - (w[t_plus] - w[t_minus])
        return red[cotree]

    # Harmonic representative of each class: h = z - grad(psi) with
    # L psi = div(z) on the dual graph (gauge: psi = 0 on cell 0).
    a_inc = sp.csr_matrix(
        (np.concatenate([np.ones(n_int), -np.ones(n_int)]),
         (np.concatenate([t_plus, t_minus]), np.concatenate([np.arange(n_int)] * 2))),
        shape=(n_cells, n_int))
    lap = (a_inc @ a_inc.T).tocsc()
    lu = spla.splu(lap[1:, 1:]) if n_cells > 1 else None

    found = []       # (faces_global_sorted, signs)
    used_faces = set()
    for si, z in enumerate(zs):
        if lu is not None:
            rhs = a_inc @ z.astype(np.float64)
            psi = np.zeros(n_cells)
            psi[1:] = lu.solve(rhs[1:])
        else:
            psi = np.zeros(1)
        h = z - (psi[t_plus] - psi[t_minus])
        eta = np.zeros(n_cells)
        for c in bfs_order[1:]:
            i = parent_col[c]
            if c == t_plus[i]:
                eta[c] = eta[parent_cell[c]] + h[i]
            else:
                eta[c] = eta[parent_cell[c]] - h[i]

        accepted = None
        for c0 in _OFFSETS:
            x = eta[t_minus] - c0
            y = x + h
            dist = min(np.min(np.abs(x - np.round(x))), np.min(np.abs(y - np.round(y))))
            if dist < 1e-7:
                continue
            c = (np.floor(y) - np.floor(x)).astype(np.int64)
            if np.max(np.abs(c)) > 1 or (d_int @ c != 0).any():
                continue
            supp = np.nonzero(c)[0]
            if supp.size == 0:
                continue
            comps = _edge_connected_components(mesh, [int(ifaces[i]) for i in supp])
            for comp in comps:
                cols = np.asarray(sorted(col_of[f] for f in comp), dtype=np.int64)
                cc = np.zeros(n_int, dtype=np.int64)
                cc[cols] = c[cols]
                if (d_int @ cc != 0).any():
                    continue
                if (class_coords(cc) != z[cotree]).any():
                    continue
                faces = ifaces[cols]
                if not _surface_face_checks(mesh, faces, boundary_edge_keys):
                    continue
                if any(int(f) in used_faces for f in faces):
                    continue
                accepted = (faces, cc[cols])
                break
            if accepted:
                break
            log.info("surface %d: offset %.6f rejected, retrying", si + 1, c0)
        if accepted is None:
            raise TopologyError(
                f"no valid level set found for tunnel {si + 1}",
                partial=found)
        used_faces.update(int(f) for f in accepted[0])
        found.append(accepted)

    # Align stored normals with the transversal direction of each surface.
    surfaces = []
    for si, (faces, signs) in enumerate(found):
        for f, s in zip(faces, signs):
            if s < 0:
                flip_face(mesh, int(f))
        surfaces.append(CuttingSurface(
            index=si + 1,
            faces=np.asarray(faces, dtype=np.int64),
            plus_cells=mesh.face_cells[faces, 0].copy(),
            minus_cells=mesh.face_cells[faces, 1].copy()))

    residual = cut_betti(mesh, surfaces)
    if residual != 0:
        raise TopologyError(
            f"cut complex still has beta1 = {residual}", partial=surfaces)
    return surfaces


def _validate_surfaces(mesh, surfaces):
    boundary_edge_keys = _boundary_edges(mesh)
    seen = set()
    face_sets = []
    for s in surfaces:
        faces = np.asarray(getattr(s, "faces", s), dtype=np.int64)
        if faces.size == 0:
            raise ValueError("empty cutting surface")
        if np.any(mesh.face_cells[faces, 1] < 0):
            raise ValueError("cutting surface contains a boundary face")
        if not _surface_face_checks(mesh, faces, boundary_edge_keys):
            raise ValueError("cutting surface is not a manifold with boundary on the domain boundary")
        if len(_edge_connected_components(mesh, [int(f) for f in faces])) != 1:
            raise ValueError("cutting surface is not edge-connected")
        fs = set(int(f) for f in faces)
        if fs & seen:
            raise ValueError("cutting surfaces are not pairwise disjoint")
        seen |= fs
        face_sets.append(faces)
    return face_sets, seen


def _cut_counts(mesh, cut_faces):
    """Cell-complex counts (V, E, F, C) and number of boundary components
    after duplicating every face in cut_faces (a set of face ids)."""
    vert_faces = {}
    edge_faces = {}
    for f in range(mesh.n_faces):
        loop = mesh.face_verts[f]
        for v in loop:
            vert_faces.setdefault(int(v), []).append(f)
        for key, _s in _face_edges(loop):
            edge_faces.setdefault(key, []).append(f)

    def n_copies(faces):
        # Components of (cells incident to the feature) glued across its
        # uncut faces.
        cells = set()
        for f in faces:
            for c in mesh.face_cells[f]:
                if c >= 0:
                    cells.add(int(c))
        uf = _UnionFind(cells)
        for f in faces:
            if f in cut_faces:
                continue
            cp, cm = mesh.face_cells[f]
            if cm >= 0:
                uf.union(int(cp), int(cm))
        return len(uf.groups())

    v_hat = sum(n_copies(fs) for fs in vert_faces.values())
    e_hat = sum(n_copies(fs) for fs in edge_faces.values())
    f_hat = mesh.n_faces + len(cut_faces)
    c_hat = mesh.n_cells

    # Boundary components of the cut complex.  Nodes: original boundary
    # faces plus both sides of every cut face.  At each copy of each edge,
    # the two terminal boundary faces of the cell wedge become adjacent.
    uf = _UnionFind(
        [("b", int(f)) for f in mesh.boundary_faces()]
        + [("c", f, s) for f in sorted(cut_faces) for s in (1, -1)])
    for key, faces in edge_faces.items():
        cells = set()
        for f in faces:
            for c in mesh.face_cells[f]:
                if c >= 0:
                    cells.add(int(c))
        wuf = _UnionFind(cells)
        for f in faces:
            if f in cut_faces:
                continue
            cp, cm = mesh.face_cells[f]
            if cm >= 0:
                wuf.union(int(cp), int(cm))
        ends = {}
        for f in faces:
            cp, cm = mesh.face_cells[f]
            if f in cut_faces:
                ends.setdefault(wuf.find(int(cp)), []).append(("c", f, 1))
                ends.setdefault(wuf.find(int(cm)), []).append(("c", f, -1))
            elif cm < 0:
                ends.setdefault(wuf.find(int(cp)), []).append(("b", int(f)))
        for wedge, nodes in ends.items():
            if len(nodes) != 2:
                raise ValueError(
                    f"cut complex boundary is not a manifold at edge {key}")
            uf.union(nodes[0], nodes[1])
    n_bc = len(uf.groups())
    return v_hat, e_hat, f_hat, c_hat, n_bc


def cut_betti(mesh, surfaces):
    """First Betti number of the complex obtained by duplicating every
    face of every given surface (with the interior edges and vertices that
    open up).  Zero means the cuts make every loop contractible."""
    if surfaces:
        _face_sets, cut_faces = _validate_surfaces(mesh, surfaces)
        cut_faces = set(int(f) for f in cut_faces)
    else:
        cut_faces = set()
    v_hat, e_hat, f_hat, c_hat, n_bc = _cut_counts(mesh, cut_faces)
    chi = v_hat - e_hat + f_hat - c_hat
    # Summing beta1 = 1 + beta2 - chi over connected components gives
    # (number of boundary components) - chi in total.
    return int(n_bc - chi)


def sigma_side_tags(mesh, surface):
    """(T+, T-) per member face: T+ is the cell the stored normal points
    out of (the eps = +1 side), T- the other one."""
    faces = np.asarray(getattr(surface, "faces", surface), dtype=np.int64)
    if np.any(mesh.face_cells[faces, 1] < 0):
        raise ValueError("cutting surface contains a boundary face")
    return mesh.face_cells[faces, 0].copy(), mesh.face_cells[faces, 1].copy()


def analyze_topology(mesh):
    """Betti numbers, boundary components, and verified cutting surfaces."""
    info = betti_numbers(mesh)
    info.surfaces = compute_cutting_surfaces(mesh, info) if info.beta1 else []
    return info
