"""Hybrid dof layouts, reduction operators, and discrete seminorms.

A hybrid vector field carries P^k(T)^3 coefficients on cells and trimmed
tangential coefficients on faces; the face unknown is the rotated trace
v|_F x n_F in frame coordinates.  A hybrid pressure carries P^{k-1}(T)
cell and P^k(F) face coefficients, in one of three variants:

  - "plain": independent face polynomials everywhere;
  - "hat_sigma": single-valued faces plus one jump scalar sigma_i per
    cutting surface (the trace on the plus side of a cut face is the
    stored polynomial plus sigma_i), and one zero-mean multiplier slot;
  - "gamma_collapsed": faces on the outer boundary pinned to zero, faces
    on cavity boundary j replaced by one shared constant gamma_j.

Cell unknowns are condensable; face polynomials and the scalar slots
(sigma_i, gamma_j, mean multiplier) form the skeletal system.
"""

import inspect
from dataclasses import dataclass, field

import numpy as np

from .poly_basis import (
    dim_P,
    project_cell,
    project_face,
    project_face_scalar,
)
from .topology import analyze_topology

__all__ = [
    "HybridField",
    "HybridPressure",
    "DofMap",
    "build_dof_map",
    "face_space_dim",
    "reduce_curl",
    "reduce_grad",
    "rot_dim",
    "seminorm_curl",
    "seminorm_grad",
    "trimmed_dim",
]


def trimmed_dim(k):
    return k * k + 2 * k + 2


def rot_dim(k):
    return (k + 2) * (k + 3) // 2 - 1


def face_space_dim(k, space):
    if space == "Q":
        return trimmed_dim(k)
    if space == "R":
        return rot_dim(k)
    raise ValueError(f"unknown face space {space!r}")


@dataclass
class HybridField:
    mesh: object
    k: int
    cell: np.ndarray          # (n_cells, 3 * dim P^k_3)
    face: np.ndarray          # (n_faces, dim Q^k_F or dim R^k_F)
    pinned: np.ndarray = None  # boundary faces carrying essential data
    face_space: str = "Q"

    @classmethod
    def zeros(cls, mesh, k, pin_boundary=False, face_space="Q"):
        cell = np.zeros((mesh.n_cells, 3 * dim_P(k, 3)))
        face = np.zeros((mesh.n_faces, face_space_dim(k, face_space)))
        pinned = np.zeros(mesh.n_faces, dtype=bool)
        if pin_boundary:
            pinned[mesh.boundary_faces()] = True
        return cls(mesh, k, cell, face, pinned, face_space)


@dataclass
class HybridPressure:
    mesh: object
    k: int
    variant: str              # plain | hat_sigma | gamma_collapsed
    cell: np.ndarray          # (n_cells, dim P^{k-1}_3)
    face: np.ndarray          # (n_faces, dim P^k_2)
    sigma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    topo: object = None

    @classmethod
    def zeros(cls, mesh, k, variant="plain", topo=None):
        if variant not in ("plain", "hat_sigma", "gamma_collapsed"):
            raise ValueError(f"unknown pressure variant {variant!r}")
        if topo is None and variant != "plain":
            topo = analyze_topology(mesh)
        ns = len(topo.surfaces) if variant == "hat_sigma" else 0
        ng = len(topo.boundary) - 1 if variant == "gamma_collapsed" else 0
        return cls(mesh, k, variant,
                   np.zeros((mesh.n_cells, dim_P(k - 1, 3))),
                   np.zeros((mesh.n_faces, dim_P(k, 2))),
                   np.zeros(ns), np.zeros(ng), topo)

    def face_trace_seen_by(self, c, f):
        """Face polynomial coefficients as seen from cell c (side-aware)."""
        out = self.face[f].copy()
        if self.variant == "hat_sigma":
            for surf in self.topo.surfaces:
                pos = np.searchsorted(surf.faces, f)
                if pos < len(surf.faces) and surf.faces[pos] == f:
                    if c == self.mesh.face_cells[f, 0]:
                        out[0] += self.sigma[surf.index - 1]
                    break
        elif self.variant == "gamma_collapsed":
            for comp in self.topo.boundary:
                pos = np.searchsorted(comp.faces, f)
                if pos < len(comp.faces) and comp.faces[pos] == f:
                    out[:] = 0.0
                    if comp.index > 0:
                        out[0] = self.gamma[comp.index - 1]
                    break
        return out


@dataclass
class DofMap:
    """Gap-free skeletal/condensable numbering for one scheme and order."""

    scheme: str
    k: int
    face_space: str
    dim_uT: int
    dim_pT: int
    dim_uF: int
    dim_pF: int
    uface_off: np.ndarray     # -1 where pinned
    pface_off: np.ndarray     # -1 where pinned or collapsed
    sigma_of_face: np.ndarray  # cutting-surface index or -1
    gamma_of_face: np.ndarray  # boundary-component scalar index or -1
    sigma_off: int            # start of sigma slots, -1 if none
    gamma_off: int
    lambda_off: int           # zero-mean multiplier slot, -1 if none
    n_skel: int
    n_cond: int
    n_sigma: int
    n_gamma: int
    topo: object

    def ucell_off(self, c):
        return c * (self.dim_uT + self.dim_pT)

    def pcell_off(self, c):
        return c * (self.dim_uT + self.dim_pT) + self.dim_uT

    @property
    def n_total(self):
        return self.n_skel + self.n_cond


def build_dof_map(mesh, scheme, k, topo=None, face_space="Q"):
    if scheme not in ("field", "vecpot"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if k < 1:
        raise ValueError("polynomial order k must be at least 1")
    if topo is None:
        topo = analyze_topology(mesh)
    nf = mesh.n_faces
    dim_uT = 3 * dim_P(k, 3)
    dim_pT = dim_P(k - 1, 3)
    dim_uF = face_space_dim(k, face_space)
    dim_pF = dim_P(k, 2)

    pinned_u = np.zeros(nf, dtype=bool)
    pface_active = np.ones(nf, dtype=bool)
    gamma_of_face = -np.ones(nf, dtype=np.int64)
    sigma_of_face = -np.ones(nf, dtype=np.int64)
    n_sigma = n_gamma = 0
    if scheme == "vecpot":
        for comp in topo.boundary:
            pface_active[comp.faces] = False
            pinned_u[comp.faces] = True
            if comp.index > 0:
                gamma_of_face[comp.faces] = comp.index - 1
        n_gamma = len(topo.boundary) - 1
    else:
        # 0-based sigma slot of each cut face (surface numbering is 1-based)
        for surf in topo.surfaces:
            sigma_of_face[surf.faces] = surf.index - 1
        n_sigma = len(topo.surfaces)

    uface_off = -np.ones(nf, dtype=np.int64)
    pos = 0
    for f in range(nf):
        if not pinned_u[f]:
            uface_off[f] = pos
            pos += dim_uF
    pface_off = -np.ones(nf, dtype=np.int64)
    for f in range(nf):
        if pface_active[f]:
            pface_off[f] = pos
            pos += dim_pF
    sigma_off = gamma_off = lambda_off = -1
    if n_sigma:
        sigma_off = pos
        pos += n_sigma
    if n_gamma:
        gamma_off = pos
        pos += n_gamma
    if scheme == "field":
        lambda_off = pos
        pos += 1
    n_skel = pos
    n_cond = mesh.n_cells * (dim_uT + dim_pT)
    return DofMap(scheme, k, face_space, dim_uT, dim_pT, dim_uF, dim_pF,
                  uface_off, pface_off, sigma_of_face, gamma_of_face,
                  sigma_off, gamma_off, lambda_off, n_skel, n_cond,
                  n_sigma, n_gamma, topo)


def _arity(func):
    try:
        return len(inspect.signature(func).parameters)
    except (TypeError, ValueError):
        return 1


def reduce_curl(mesh, k, v, quad_degree=None, pin_boundary=False,
                face_space="Q"):
    """Reduction onto the hybrid space: cell L2 projections of v, face
    projections of the rotated trace v|_F x n_F onto the chosen space."""
    out = HybridField.zeros(mesh, k, pin_boundary=pin_boundary,
                            face_space=face_space)
    for c in range(mesh.n_cells):
        out.cell[c] = project_cell(mesh, c, k, v, quad_degree=quad_degree)
    for f in range(mesh.n_faces):
        n = mesh.face_normal[f]
        out.face[f] = project_face(
            mesh, f, k, lambda pts: np.cross(np.asarray(v(pts), dtype=float), n),
            space=face_space, quad_degree=quad_degree)
    return out


def reduce_grad(mesh, k, q, variant="plain", topo=None, quad_degree=None,
                jump_tol=1e-8):
    """Reduction onto the hybrid pressure space.  q maps points to values;
    a two-argument callable q(points, cell) may resolve branch cuts per
    cell, which is how multivalued potentials are reduced on cut meshes.
    """
    out = HybridPressure.zeros(mesh, k, variant=variant, topo=topo)
    sided = _arity(q) >= 2
    for c in range(mesh.n_cells):
        fc = (lambda pts, c=c: q(pts, c)) if sided else q
        out.cell[c] = project_cell(mesh, c, k - 1, fc, quad_degree=quad_degree)

    def face_proj(f, c):
        fc = (lambda pts, c=c: q(pts, c)) if sided else q
        return project_face_scalar(mesh, f, k, fc, quad_degree=quad_degree)

    on_sigma = {}
    if out.variant == "hat_sigma":
        for surf in out.topo.surfaces:
            for f in surf.faces:
                on_sigma[int(f)] = surf.index - 1
    for f in range(mesh.n_faces):
        minus = mesh.face_cells[f, 1]
        owner = mesh.face_cells[f, 0] if minus < 0 else minus
        out.face[f] = face_proj(f, owner)

    if out.variant == "hat_sigma" and sided:
        # a sided (possibly multivalued) input must be single-valued across
        # every interior face that is not part of a cutting surface
        for f in mesh.interior_faces():
            if int(f) in on_sigma:
                continue
            plus = face_proj(f, mesh.face_cells[f, 0])
            scale = 1.0 + np.abs(plus).max() + np.abs(out.face[f]).max()
            if np.abs(plus - out.face[f]).max() > jump_tol * scale:
                raise ValueError(
                    f"face {f}: field jumps across a face that is not on a "
                    "cutting surface; the field is outside the flat subspace")
    if out.variant == "hat_sigma":
        jumps = [[] for _ in out.topo.surfaces]
        for f, i in on_sigma.items():
            plus = face_proj(f, mesh.face_cells[f, 0])
            jump = plus - out.face[f]
            scale = 1.0 + np.abs(plus).max() + np.abs(out.face[f]).max()
            if np.abs(jump[1:]).max() > jump_tol * scale:
                raise ValueError(
                    f"face {f}: jump across cutting surface {i} is not "
                    "constant; the field is outside the flat subspace")
            jumps[i].append(jump[0])
        for i, vals in enumerate(jumps):
            if not vals:
                continue
            vals = np.asarray(vals)
            if np.abs(vals - vals.mean()).max() > jump_tol * (1 + np.abs(vals).max()):
                raise ValueError(
                    f"cutting surface {i}: jump varies between faces; the "
                    "field is outside the flat subspace")
            out.sigma[i] = vals.mean()
    elif out.variant == "gamma_collapsed":
        for comp in out.topo.boundary:
            traces = out.face[comp.faces]
            scale = 1.0 + np.abs(traces).max()
            if comp.index == 0:
                if np.abs(traces).max() > jump_tol * scale:
                    raise ValueError(
                        "trace on the outer boundary is not zero; the field "
                        "is outside the collapsed space")
                out.face[comp.faces] = 0.0
            else:
                consts = traces[:, 0]
                if (np.abs(traces[:, 1:]).max() > jump_tol * scale
                        or np.abs(consts - consts.mean()).max() > jump_tol * scale):
                    raise ValueError(
                        f"trace on cavity boundary {comp.index} is not a "
                        "single constant; the field is outside the collapsed "
                        "space")
                out.gamma[comp.index - 1] = consts.mean()
                out.face[comp.faces] = 0.0
                out.face[comp.faces, 0] = consts.mean()
    return out


def seminorm_curl(u, cell_weights=None):
    """sqrt of sum_T w_T ( ||curl v_T||^2
                           + sum_F h_F^{-1} ||pi_F(v_T x n_F) - v_F||^2 ),
    with pi_F projecting onto the field's face space.  cell_weights
    defaults to ones."""
    # geometry tables (curl map, trace projections, face Grams) are shared
    # between congruent cells; mismatches are formed in dof space first so
    # near-zero terms cancel at roundoff, not at sqrt(roundoff)
    from .local_ops import CellContext, cell_signature

    mesh, k = u.mesh, u.k
    total = 0.0
    reps = {}
    for c in range(mesh.n_cells):
        w_c = 1.0 if cell_weights is None else float(cell_weights[c])
        sig = cell_signature(mesh, c)
        ctx = reps.get(sig)
        if ctx is None:
            ctx = CellContext(mesh, c, k, face_space=u.face_space)
            ctx.broken_curl_matrix()
            ctx.trace_projections()
            reps[sig] = ctx
        bc = ctx.broken_curl_matrix()[:, :ctx.dim_uT]
        nm1 = ctx.cb_km1.nm
        cc = (bc @ u.cell[c]).reshape(3, nm1)
        local = float(np.einsum("ad,de,ae->", cc, ctx.cb_km1.mass, cc))
        projs = ctx.trace_projections()
        for i, f in enumerate(mesh.cell_faces[c]):
            d = projs[i] @ u.cell[c] - u.face[f]
            local += float(d @ ctx.f_mass[i] @ d) / mesh.face_h[f]
        total += w_c * local
    return np.sqrt(max(total, 0.0))


def seminorm_grad(p, cell_weights=None):
    """sqrt of sum_T w_T ( h_T^2 ||grad q_T||^2
                           + sum_F h_F ||q_T|_F - q_F||^2 ), side-aware."""
    from .local_ops import CellContext, cell_signature

    mesh, k = p.mesh, p.k
    total = 0.0
    reps = {}
    for c in range(mesh.n_cells):
        w_c = 1.0 if cell_weights is None else float(cell_weights[c])
        sig = cell_signature(mesh, c)
        ctx = reps.get(sig)
        if ctx is None:
            ctx = CellContext(mesh, c, k)
            reps[sig] = ctx
        g = np.einsum("qia,i->qa", ctx.grad_km1, p.cell[c])
        local = mesh.cell_h[c] ** 2 * float(
            np.sum(ctx.quad.weights * np.sum(g ** 2, axis=1)))
        for i, f in enumerate(mesh.cell_faces[c]):
            tr = ctx.f_trkm1[i] @ p.cell[c]
            qf = ctx.f_scal[i] @ p.face_trace_seen_by(c, f)
            local += mesh.face_h[f] * float(
                np.sum(ctx.fq[i].weights * (tr - qf) ** 2))
        total += w_c * local
    return np.sqrt(max(total, 0.0))
