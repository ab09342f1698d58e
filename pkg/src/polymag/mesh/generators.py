"""Built-in mesh generators and random vertex-star agglomeration."""

import logging

import numpy as np

from .core import PolyMesh, precompute_geometry

__all__ = [
    "generate_box_tet",
    "generate_punched_box",
    "generate_cavity_box",
    "generate_reentrant_prism",
    "agglomerate_random",
]

log = logging.getLogger(__name__)

# The six permutations splitting a cube along its (0,0,0)-(1,1,1) diagonal.
# The same diagonal in every cube keeps the split conforming across boxes.
_KUHN_PERMS = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))


def _kuhn_mesh(origin, spacing, dims, keep):
    nx, ny, nz = dims
    origin = np.asarray(origin, dtype=float)
    spacing = np.asarray(spacing, dtype=float)

    def gid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    used = np.zeros((nx + 1) * (ny + 1) * (nz + 1), dtype=bool)
    tets = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if not keep[i, j, k]:
                    continue
                base = (i, j, k)
                for perm in _KUHN_PERMS:
                    cur = list(base)
                    quad = [gid(*cur)]
                    for ax in perm:
                        cur[ax] += 1
                        quad.append(gid(*cur))
                    tets.append(quad)
                    used[quad] = True
    if not tets:
        raise ValueError("empty mesh: no boxes kept")
    new_id = -np.ones(used.shape, dtype=np.int64)
    new_id[used] = np.arange(int(used.sum()))
    grid = np.argwhere(used.reshape(nx + 1, ny + 1, nz + 1))
    verts = origin + grid * spacing
    tets = new_id[np.asarray(tets, dtype=np.int64)]

    # Orient every tet positively, then collect unique triangular facets.
    p = verts[tets]
    neg = np.linalg.det(p[:, 1:] - p[:, :1]) < 0
    tets[neg, 2], tets[neg, 3] = tets[neg, 3], tets[neg, 2].copy()

    face_ids = {}
    face_verts = []
    cell_faces = []
    cell_eps = []
    for quad in tets:
        fs, es = [], []
        for loc in range(4):
            tri = np.delete(quad, loc)
            key = tuple(sorted(tri))
            fid = face_ids.get(key)
            if fid is None:
                fid = len(face_verts)
                face_ids[key] = fid
                face_verts.append(np.asarray(key, dtype=np.int64))
            a, b, c = verts[key[0]], verts[key[1]], verts[key[2]]
            n = np.cross(b - a, c - a)
            opp = verts[quad[loc]]
            es.append(1 if np.dot(n, a - opp) > 0 else -1)
            fs.append(fid)
        cell_faces.append(np.asarray(fs, dtype=np.int64))
        cell_eps.append(np.asarray(es, dtype=np.int64))
    mesh = PolyMesh(verts, face_verts, cell_faces, cell_eps,
                    cell_subtets=[q.reshape(1, 4) for q in tets])
    return precompute_geometry(mesh)


def generate_box_tet(nx, ny, nz, bounds=None):
    """Structured tetrahedral mesh: each of nx*ny*nz sub-boxes split into 6."""
    if min(nx, ny, nz) < 1:
        raise ValueError("subdivision counts must be >= 1")
    if bounds is None:
        bounds = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    lo = np.asarray(bounds[0], dtype=float)
    hi = np.asarray(bounds[1], dtype=float)
    if np.any(hi <= lo):
        raise ValueError("degenerate bounds")
    dims = (nx, ny, nz)
    keep = np.ones(dims, dtype=bool)
    return _kuhn_mesh(lo, (hi - lo) / np.asarray(dims), dims, keep)


def generate_punched_box(resolution):
    """Box with a rectangular through-hole along z (one tunnel, no voids)."""
    r = int(resolution)
    if r < 1:
        raise ValueError("resolution must be >= 1")
    dims = (3 * r, 3 * r, r)
    keep = np.ones(dims, dtype=bool)
    keep[r:2 * r, r:2 * r, :] = False
    return _kuhn_mesh((-1.5, -1.5, -0.5), (1.0 / r, 1.0 / r, 1.0 / r), dims, keep)


def generate_cavity_box(resolution):
    """Box with a closed cubical cavity (no tunnels, one void)."""
    r = int(resolution)
    if r < 1:
        raise ValueError("resolution must be >= 1")
    dims = (3 * r, 3 * r, 3 * r)
    keep = np.ones(dims, dtype=bool)
    keep[r:2 * r, r:2 * r, r:2 * r] = False
    return _kuhn_mesh((-1.5, -1.5, -1.5), (1.0 / r,) * 3, dims, keep)


def generate_reentrant_prism(resolution):
    """Three quarters of a box around the z-axis; the reentrant edge is the
    segment {x=0, y=0, 0<=z<=1} with interior angle 3*pi/2 (the retained
    sector is 0 <= atan2(y,x) <= 3*pi/2)."""
    r = int(resolution)
    if r < 1:
        raise ValueError("resolution must be >= 1")
    dims = (2 * r, 2 * r, r)
    keep = np.ones(dims, dtype=bool)
    keep[r:, :r, :] = False  # remove the quadrant x>0, y<0
    return _kuhn_mesh((-1.0, -1.0, 0.0), (1.0 / r, 1.0 / r, 1.0 / r), dims, keep)


def agglomerate_random(mesh, seed, target_fraction):
    """Merge the tet stars of randomly selected vertices into polyhedral cells.

    Vertices are drawn in seeded-permutation order; a star is accepted only
    if it is face-connected and disjoint from every star already accepted.
    Selection stops once the accepted stars cover target_fraction of the
    cells.  Merged cells keep their member tets as subtessellation; the
    retained faces (and the vertex set) are exactly the original ones.
    """
    if not 0.0 < target_fraction <= 1.0:
        raise ValueError("target_fraction must be in (0, 1]")
    for c in range(mesh.n_cells):
        if len(mesh.cell_faces[c]) != 4:
            raise ValueError("agglomeration requires a tetrahedral input mesh")

    vertex_cells = [[] for _ in range(mesh.n_verts)]
    for c in range(mesh.n_cells):
        for v in mesh.cell_vertex_ids(c):
            vertex_cells[v].append(c)

    def star_connected(star):
        star_set = set(star)
        seen = {star[0]}
        stack = [star[0]]
        while stack:
            c = stack.pop()
            for f in mesh.cell_faces[c]:
                for nb in mesh.face_cells[f]:
                    if nb >= 0 and nb in star_set and nb not in seen:
                        seen.add(nb)
                        stack.append(nb)
        return len(seen) == len(star)

    rng = np.random.default_rng(seed)
    quota = target_fraction * mesh.n_cells
    absorbed = np.zeros(mesh.n_cells, dtype=bool)
    group_of = -np.ones(mesh.n_cells, dtype=np.int64)
    groups = []
    n_absorbed = 0
    for v in rng.permutation(mesh.n_verts):
        if n_absorbed >= quota:
            break
        star = vertex_cells[v]
        if len(star) < 2 or any(absorbed[c] for c in star):
            continue
        if not star_connected(star):
            log.info("agglomeration: vertex %d rejected (disconnected star)", v)
            continue
        gid = len(groups)
        groups.append(sorted(star))
        for c in star:
            absorbed[c] = True
            group_of[c] = gid
        n_absorbed += len(star)

    # Emit cells in original-index order (a group appears at its first member).
    new_cells = []
    emitted = set()
    for c in range(mesh.n_cells):
        g = group_of[c]
        if g < 0:
            new_cells.append([c])
        elif g not in emitted:
            emitted.add(g)
            new_cells.append(groups[g])
    face_use = {}
    cell_faces, cell_eps, subtets, mu = [], [], [], []
    for members in new_cells:
        count = {}
        for c in members:
            for f, e in zip(mesh.cell_faces[c], mesh.cell_eps[c]):
                count[f] = count.get(f, (0, 0))
                count[f] = (count[f][0] + 1, e)
        fs = sorted(f for f, (n, _e) in count.items() if n == 1)
        cell_faces.append(np.asarray(fs, dtype=np.int64))
        cell_eps.append(np.asarray([count[f][1] for f in fs], dtype=np.int64))
        for f in fs:
            face_use.setdefault(f, len(face_use))
        subtets.append(np.vstack([mesh.cell_subtets[c] for c in members]))
        mus = {mesh.mu[c] for c in members}
        if len(mus) > 1:
            raise ValueError("cannot agglomerate across differing mu values")
        mu.append(mus.pop())

    keep_faces = sorted(face_use)
    remap = {f: i for i, f in enumerate(keep_faces)}
    face_verts = [mesh.face_verts[f] for f in keep_faces]
    cell_faces = [np.asarray([remap[f] for f in fs], dtype=np.int64)
                  for fs in cell_faces]
    out = PolyMesh(mesh.verts.copy(), face_verts, cell_faces, cell_eps,
                   cell_subtets=subtets)
    out = precompute_geometry(out)
    out.set_mu(np.asarray(mu))
    return out
