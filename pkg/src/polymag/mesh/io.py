"""Plain-text polyhedral mesh format.

    polymesh 1
    vertices <nv>
    <x> <y> <z>                 (nv lines)
    faces <nf>
    <m> <v_1> ... <v_m>         (nf lines, 0-based vertex ids, one planar loop)
    cells <nc>
    <m> <s_1> ... <s_m>         (nc lines, signed 1-based face refs)

A cell line lists its faces as +/-(face id + 1); the sign says whether the
stored face normal points out of (+) or into (-) the cell.  Blank lines and
lines starting with '#' are ignored.
"""

import numpy as np

from .core import PolyMesh, precompute_geometry

__all__ = ["read_mesh", "write_mesh"]


class MeshFormatError(ValueError):
    def __init__(self, lineno, msg):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def write_mesh(mesh, path):
    with open(path, "w") as fh:
        fh.write("polymesh 1\n")
        fh.write(f"vertices {mesh.n_verts}\n")
        for x, y, z in mesh.verts:
            fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
        fh.write(f"faces {mesh.n_faces}\n")
        for loop in mesh.face_verts:
            fh.write(" ".join([str(len(loop))] + [str(v) for v in loop]) + "\n")
        fh.write(f"cells {mesh.n_cells}\n")
        for fs, es in zip(mesh.cell_faces, mesh.cell_eps):
            refs = [str(int(e) * (int(f) + 1)) for f, e in zip(fs, es)]
            fh.write(" ".join([str(len(fs))] + refs) + "\n")


def read_mesh(path):
    with open(path) as fh:
        raw = fh.readlines()
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(raw)]
    lines = [(no, ln) for no, ln in lines if ln and not ln.startswith("#")]
    pos = 0

    def next_line(what):
        nonlocal pos
        if pos >= len(lines):
            last = lines[-1][0] if lines else 0
            raise MeshFormatError(last + 1, f"unexpected end of file, expected {what}")
        no, ln = lines[pos]
        pos += 1
        return no, ln.split()

    no, tok = next_line("header")
    if tok != ["polymesh", "1"]:
        raise MeshFormatError(no, f"expected 'polymesh 1' header, got {' '.join(tok)!r}")

    def section(name):
        no, tok = next_line(f"'{name} <count>'")
        if len(tok) != 2 or tok[0] != name:
            raise MeshFormatError(no, f"expected '{name} <count>', got {' '.join(tok)!r}")
        try:
            n = int(tok[1])
        except ValueError:
            raise MeshFormatError(no, f"bad {name} count {tok[1]!r}") from None
        if n < 0:
            raise MeshFormatError(no, f"negative {name} count")
        return n

    nv = section("vertices")
    verts = np.empty((nv, 3))
    for i in range(nv):
        no, tok = next_line("a vertex line")
        if len(tok) != 3:
            raise MeshFormatError(no, f"vertex {i}: expected 3 coordinates, got {len(tok)}")
        try:
            verts[i] = [float(t) for t in tok]
        except ValueError:
            raise MeshFormatError(no, f"vertex {i}: bad coordinate") from None

    nf = section("faces")
    face_verts = []
    for i in range(nf):
        no, tok = next_line("a face line")
        try:
            ids = [int(t) for t in tok]
        except ValueError:
            raise MeshFormatError(no, f"face {i}: bad vertex id") from None
        if not ids or len(ids) != ids[0] + 1:
            raise MeshFormatError(no, f"face {i}: count does not match entries")
        loop = ids[1:]
        if len(loop) < 3:
            raise MeshFormatError(no, f"face {i}: fewer than 3 vertices")
        bad = [v for v in loop if not 0 <= v < nv]
        if bad:
            raise MeshFormatError(no, f"face {i}: vertex id {bad[0]} out of range [0, {nv})")
        if len(set(loop)) != len(loop):
            raise MeshFormatError(no, f"face {i}: repeated vertex in loop")
        face_verts.append(np.asarray(loop, dtype=np.int64))

    nc = section("cells")
    cell_faces, cell_eps = [], []
    for i in range(nc):
        no, tok = next_line("a cell line")
        try:
            ids = [int(t) for t in tok]
        except ValueError:
            raise MeshFormatError(no, f"cell {i}: bad face reference") from None
        if not ids or len(ids) != ids[0] + 1:
            raise MeshFormatError(no, f"cell {i}: count does not match entries")
        refs = ids[1:]
        if len(refs) < 4:
            raise MeshFormatError(no, f"cell {i}: fewer than 4 faces")
        if any(r == 0 for r in refs):
            raise MeshFormatError(no, f"cell {i}: face reference 0 (refs are signed, 1-based)")
        fs = [abs(r) - 1 for r in refs]
        bad = [abs(r) for r in refs if abs(r) > nf]
        if bad:
            raise MeshFormatError(
                no, f"cell {i}: dangling face reference {bad[0]} (only {nf} faces defined)")
        if len(set(fs)) != len(fs):
            raise MeshFormatError(no, f"cell {i}: repeated face")
        cell_faces.append(np.asarray(fs, dtype=np.int64))
        cell_eps.append(np.asarray([1 if r > 0 else -1 for r in refs], dtype=np.int64))

    if pos != len(lines):
        raise MeshFormatError(lines[pos][0], "trailing content after cells section")
    if nv == 0 or nf == 0 or nc == 0:
        no = lines[-1][0] if lines else 1
        raise MeshFormatError(no, "mesh has an empty section")
    mesh = PolyMesh(verts, face_verts, cell_faces, cell_eps)
    return precompute_geometry(mesh)
