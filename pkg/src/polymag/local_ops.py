"""Per-cell reconstruction operators, stabilizers, and local bilinear forms.

The two saddle-point schemes share their building blocks: a rotational
reconstruction C_T mapping the hybrid vector unknowns into P^{k-1}(T)^3,
a gradient reconstruction G_T mapping the hybrid pressure unknowns into
P^k(T)^3, and hybrid stabilizers penalizing the mismatch between cell
traces and face unknowns.  Local dof ordering is [cell block | face blocks
in mesh.cell_faces order]; vector cell coefficients are component-major.
Face vector unknowns live in the tangential space the context was built
with: "Q" (trimmed, the default) or "R" (rot space, required by and
reserved for the broken-curl variant of the field scheme).

Local forms, with s_curl and s_grad the stabilizer matrices below:

  field:   A = (C w, C v)_T + s_curl          B = mu_T (w_T, G q)_T
           S = mu_T^2 [h_T^2 (grad r, grad q)_T + s_grad]
  vecpot:  A = (1/mu_T) [(C w, C v)_T + s_curl]   B = (w_T, G q)_T
           S = mu_T [h_T^2 (grad r, grad q)_T + s_grad]

A smoothly varying permeability (vector potential scheme only) is given
as a callable for the inverse permeability; every mu-carrying product is
then integrated with the pointwise weight and the quadrature degree is
raised by two.  The mismatch projection inside the curl stabilizer stays
unweighted: the weight enters the norm, not the face space.

Stabilization modes: "full" keeps S as written, "no_volumetric" drops the
h_T^2 gradient term (enough on general polyhedral meshes), "none" drops S
entirely (admissible on tetrahedral meshes, where the gradient
reconstruction alone controls the pressure seminorm).
"""

import copy
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import LinAlgWarning, lapack, lu_factor, lu_solve

from .poly_basis import (
    CellBasis,
    FaceBasis,
    cell_quadrature,
    face_quadrature,
    solve_mass,
)

__all__ = [
    "CellContext",
    "CondensationError",
    "CondensedCell",
    "LocalOperators",
    "build_local_operators",
    "condense",
    "curl_reconstruction",
    "curl_stabilizer",
    "grad_reconstruction",
    "grad_stabilizer",
    "local_field_vector",
    "local_forms_field",
    "local_forms_vecpot",
    "local_pressure_vector",
]

STAB_MODES = ("full", "no_volumetric", "none")

# curl(m e_a) = grad(m) x e_a, as (component, derivative axis, sign) entries
_CURL = {
    0: ((1, 2, 1.0), (2, 1, -1.0)),
    1: ((0, 2, -1.0), (2, 0, 1.0)),
    2: ((0, 1, 1.0), (1, 0, -1.0)),
}


def _sym(m):
    return 0.5 * (m + m.T)


def _block_apply(mass, mat):
    """kron(I_3, mass) @ mat for component-major stacked rows."""
    nm = mass.shape[0]
    out = np.empty_like(mat)
    for a in range(3):
        out[a * nm:(a + 1) * nm] = mass @ mat[a * nm:(a + 1) * nm]
    return out


def _pair_mass(rows, scal_mass):
    """Gram of sub-basis rows under a (possibly weighted) scalar face mass."""
    nm = scal_mass.shape[0]
    a1, a2 = rows[:, :nm], rows[:, nm:]
    return _sym(a1 @ scal_mass @ a1.T + a2 @ scal_mass @ a2.T)


class CellContext:
    """Bases, quadrature rules, and evaluation tables for one cell.

    Bundles everything the operator constructors need: cell bases at
    orders k and k-1 with a shared volume rule and, per attached face,
    the face basis, rule, tangential-space tables, and cell-basis traces.
    Reconstruction and stabilizer matrices are cached after first use.
    """

    def __init__(self, mesh, c, k, face_space="Q", quad_degree=None):
        if k < 1:
            raise ValueError("polynomial order k must be at least 1")
        if face_space not in ("Q", "R"):
            raise ValueError(f"unknown face space {face_space!r}")
        self.mesh = mesh
        self.cell = c
        self.k = k
        self.face_space = face_space
        self.quad_degree = 2 * k + 2 if quad_degree is None else quad_degree
        self.h_t = float(mesh.cell_h[c])
        self.cb_k = CellBasis(mesh, c, k)
        self.cb_km1 = CellBasis(mesh, c, k - 1)
        self.quad = cell_quadrature(mesh, c, self.quad_degree)
        self.phi_k = self.cb_k.eval(self.quad.points)
        self.phi_km1 = self.cb_km1.eval(self.quad.points)
        self.grad_k = self.cb_k.eval_grad(self.quad.points)
        self.grad_km1 = self.cb_km1.eval_grad(self.quad.points)

        self.faces = tuple(int(f) for f in mesh.cell_faces[c])
        self.signs = tuple(float(e) for e in mesh.cell_eps[c])
        self.fb = []
        self.fq = []
        self.f_rows = []    # sub-basis of the face vector space
        self.f_mass = []    # its Gram matrix
        self.f_u1 = []      # frame components of the face dofs at quad pts
        self.f_u2 = []
        self.f_scal = []    # P^k(F) monomials at the face quad points
        self.f_trk = []     # cell bases traced on the face quad points
        self.f_trkm1 = []
        for f in self.faces:
            fb = FaceBasis(mesh, f, k)
            fq = face_quadrature(mesh, f, self.quad_degree)
            rows = fb.space_rows(face_space)
            ev = fb.eval(fq.points2d)
            self.fb.append(fb)
            self.fq.append(fq)
            self.f_rows.append(rows)
            self.f_mass.append(fb.space_mass(face_space))
            self.f_u1.append(ev @ rows[:, :fb.nm].T)
            self.f_u2.append(ev @ rows[:, fb.nm:].T)
            self.f_scal.append(ev)
            self.f_trk.append(self.cb_k.eval(fq.points))
            self.f_trkm1.append(self.cb_km1.eval(fq.points))

        self.dim_uT = 3 * self.cb_k.nm
        self.dim_pT = self.cb_km1.nm
        self.dims_uF = tuple(r.shape[0] for r in self.f_rows)
        self.dims_pF = tuple(fb.nm for fb in self.fb)
        self.n_u = self.dim_uT + sum(self.dims_uF)
        self.n_p = self.dim_pT + sum(self.dims_pF)
        self._curl = None
        self._broken = None
        self._grad = None
        self._trace_proj = None
        self._s_curl = None
        self._s_grad = None

    def uface_cols(self, i):
        off = self.dim_uT + sum(self.dims_uF[:i])
        return slice(off, off + self.dims_uF[i])

    def pface_cols(self, i):
        off = self.dim_pT + sum(self.dims_pF[:i])
        return slice(off, off + self.dims_pF[i])

    def curl_matrix(self):
        if self._curl is None:
            self._curl = _build_curl(self)
        return self._curl

    def broken_curl_matrix(self):
        if self._broken is None:
            self._broken = _build_broken_curl(self)
        return self._broken

    def grad_matrix(self):
        if self._grad is None:
            self._grad = _build_grad(self)
        return self._grad

    def trace_projections(self):
        """Per face: matrix of pi_F((.)|_F x n_F) on the cell vector basis."""
        if self._trace_proj is None:
            self._trace_proj = [_build_trace_proj(self, i)
                                for i in range(len(self.faces))]
        return self._trace_proj


def _build_curl(ctx):
    nmk, nm1 = ctx.cb_k.nm, ctx.cb_km1.nm
    w = ctx.quad.weights
    # volume term (u_T, curl z)_T for tests z = e_a m_b
    blk = [np.einsum("q,qb,qd->bd", w, ctx.grad_km1[:, :, ax], ctx.phi_k)
           for ax in range(3)]
    rhs = np.zeros((3, nm1, ctx.n_u))
    for a in range(3):
        for comp, axis, sign in _CURL[a]:
            rhs[a][:, comp * nmk:(comp + 1) * nmk] += sign * blk[axis]
    # face terms -eps (u_F, z_tau)_F with z_tau = m_b (t1[a], t2[a])
    for i, (eps, fb) in enumerate(zip(ctx.signs, ctx.fb)):
        fw = ctx.fq[i].weights
        t1b = np.einsum("q,qb,qj->bj", fw, ctx.f_trkm1[i], ctx.f_u1[i])
        t2b = np.einsum("q,qb,qj->bj", fw, ctx.f_trkm1[i], ctx.f_u2[i])
        cols = ctx.uface_cols(i)
        for a in range(3):
            rhs[a][:, cols] -= eps * (fb.t1[a] * t1b + fb.t2[a] * t2b)
    return np.vstack([solve_mass(ctx.cb_km1.mass, rhs[a]) for a in range(3)])


def _build_broken_curl(ctx):
    """Element-wise curl of the cell component, zero on face unknowns."""
    nmk, nm1 = ctx.cb_k.nm, ctx.cb_km1.nm
    w = ctx.quad.weights
    blk = [np.einsum("q,qb,qd->bd", w, ctx.phi_km1, ctx.grad_k[:, :, ax])
           for ax in range(3)]
    rhs = np.zeros((3, nm1, ctx.n_u))
    for c in range(3):
        for comp, axis, sign in _CURL[c]:
            rhs[comp][:, c * nmk:(c + 1) * nmk] += sign * blk[axis]
    return np.vstack([solve_mass(ctx.cb_km1.mass, rhs[a]) for a in range(3)])


def _build_grad(ctx):
    nmk = ctx.cb_k.nm
    w = ctx.quad.weights
    rhs = np.zeros((3, nmk, ctx.n_p))
    for a in range(3):
        rhs[a][:, :ctx.dim_pT] -= np.einsum(
            "q,qb,qd->bd", w, ctx.grad_k[:, :, a], ctx.phi_km1)
    for i, (eps, fb) in enumerate(zip(ctx.signs, ctx.fb)):
        blk = np.einsum("q,qb,qe->be", ctx.fq[i].weights,
                        ctx.f_trk[i], ctx.f_scal[i])
        cols = ctx.pface_cols(i)
        for a in range(3):
            rhs[a][:, cols] += eps * fb.normal[a] * blk
    return np.vstack([solve_mass(ctx.cb_k.mass, rhs[a]) for a in range(3)])


def _build_trace_proj(ctx, i):
    # rotated trace of e_c m_d has frame components m_d (t2[c], -t1[c])
    nmk = ctx.cb_k.nm
    fb, fw = ctx.fb[i], ctx.fq[i].weights
    b1 = np.einsum("q,qj,qd->jd", fw, ctx.f_u1[i], ctx.f_trk[i])
    b2 = np.einsum("q,qj,qd->jd", fw, ctx.f_u2[i], ctx.f_trk[i])
    rhs = np.empty((ctx.dims_uF[i], ctx.dim_uT))
    for c in range(3):
        rhs[:, c * nmk:(c + 1) * nmk] = fb.t2[c] * b1 - fb.t1[c] * b2
    return solve_mass(ctx.f_mass[i], rhs)


def curl_reconstruction(ctx):
    """Matrix of C_T: local hybrid vector dofs -> P^{k-1}(T)^3 coefficients,
    defined by (C_T u, z)_T = (u_T, curl z)_T - sum_F eps_TF (u_F, z_tau)_F
    for all z in P^{k-1}(T)^3."""
    return ctx.curl_matrix()


def grad_reconstruction(ctx):
    """Matrix of G_T: local hybrid pressure dofs -> P^k(T)^3 coefficients,
    defined by (G_T q, z)_T = -(q_T, div z)_T + sum_F (q_F, z . n_TF)_F
    for all z in P^k(T)^3."""
    return ctx.grad_matrix()


def curl_stabilizer(ctx, face_weights=None):
    """Matrix of sum_F h_F^{-1} || pi_F(v_T|_F x n_F) - v_F ||_F^2.

    pi_F projects onto the face space the context was built with and is
    always unweighted; face_weights (per-face arrays over the face quad
    points) weight the norm only, for the smooth-permeability mode.
    """
    if face_weights is None and ctx._s_curl is not None:
        return ctx._s_curl
    projs = ctx.trace_projections()
    s = np.zeros((ctx.n_u, ctx.n_u))
    for i, fb in enumerate(ctx.fb):
        d = np.zeros((ctx.dims_uF[i], ctx.n_u))
        d[:, :ctx.dim_uT] = projs[i]
        d[:, ctx.uface_cols(i)] = -np.eye(ctx.dims_uF[i])
        if face_weights is None:
            m_norm = ctx.f_mass[i]
        else:
            sw = ctx.fq[i].weights * face_weights[i]
            scal = ctx.f_scal[i]
            m_norm = _pair_mass(ctx.f_rows[i], (scal * sw[:, None]).T @ scal)
        s += (d.T @ m_norm @ d) / ctx.mesh.face_h[ctx.faces[i]]
    s = _sym(s)
    if face_weights is None:
        ctx._s_curl = s
    return s


def grad_stabilizer(ctx, face_weights=None):
    """Matrix of sum_F h_F || q_T|_F - q_F ||_F^2 (optionally weighted)."""
    if face_weights is None and ctx._s_grad is not None:
        return ctx._s_grad
    s = np.zeros((ctx.n_p, ctx.n_p))
    for i in range(len(ctx.faces)):
        fw = ctx.fq[i].weights
        if face_weights is not None:
            fw = fw * face_weights[i]
        x = np.zeros((len(fw), ctx.n_p))
        x[:, :ctx.dim_pT] = ctx.f_trkm1[i]
        x[:, ctx.pface_cols(i)] = -ctx.f_scal[i]
        s += ctx.mesh.face_h[ctx.faces[i]] * (x * fw[:, None]).T @ x
    s = _sym(s)
    if face_weights is None:
        ctx._s_grad = s
    return s


def _grad_volumetric(ctx, cell_weights=None):
    """h_T^2 (grad r_T, grad q_T)_T on the cell pressure block."""
    w = ctx.quad.weights if cell_weights is None else \
        ctx.quad.weights * cell_weights
    st = np.einsum("q,qdx,qex->de", w, ctx.grad_km1, ctx.grad_km1)
    out = np.zeros((ctx.n_p, ctx.n_p))
    out[:ctx.dim_pT, :ctx.dim_pT] = ctx.h_t ** 2 * _sym(st)
    return out


def _check_stab(stab):
    if stab not in STAB_MODES:
        raise ValueError(f"unknown stabilization mode {stab!r}; "
                         f"expected one of {STAB_MODES}")


def _stab_matrix(ctx, stab, face_weights=None, cell_weights=None):
    if stab == "none":
        return np.zeros((ctx.n_p, ctx.n_p))
    s = grad_stabilizer(ctx, face_weights)
    if stab == "full":
        s = s + _grad_volumetric(ctx, cell_weights)
    return s


def _b_matrix(ctx):
    b = np.zeros((ctx.n_p, ctx.n_u))
    b[:, :ctx.dim_uT] = _block_apply(ctx.cb_k.mass, ctx.grad_matrix()).T
    return b


def local_forms_field(ctx, mu_t, variant="reconstruction", stab="full"):
    """(A_T, B_T, S_T) of the first-order field scheme."""
    _check_stab(stab)
    if variant not in ("reconstruction", "broken-curl"):
        raise ValueError(f"unknown variant {variant!r}")
    if callable(mu_t):
        raise TypeError("the field scheme takes one constant permeability "
                        "per cell, not a callable")
    mu_t = float(mu_t)
    if mu_t <= 0:
        raise ValueError(f"permeability must be positive, got {mu_t}")
    want = "R" if variant == "broken-curl" else "Q"
    if ctx.face_space != want:
        raise ValueError(
            f"variant {variant!r} requires face space {want!r}; the context "
            f"was built with {ctx.face_space!r}")
    curl_mat = (ctx.broken_curl_matrix() if variant == "broken-curl"
                else ctx.curl_matrix())
    a = curl_mat.T @ _block_apply(ctx.cb_km1.mass, curl_mat) \
        + curl_stabilizer(ctx)
    s = mu_t ** 2 * _stab_matrix(ctx, stab)
    return _sym(a), mu_t * _b_matrix(ctx), s


def local_forms_vecpot(ctx, mu_t=1.0, mu_inv=None, stab="full"):
    """(A_T, B_T, S_T) of the second-order vector potential scheme.

    mu_inv, when given, is a callable returning the pointwise inverse
    permeability; it overrides mu_t and switches every mu-carrying product
    to weighted quadrature.
    """
    _check_stab(stab)
    if ctx.face_space != "Q":
        raise ValueError("the vector potential scheme uses the trimmed face "
                         "space; build the context with face_space='Q'")
    curl_mat = ctx.curl_matrix()
    b = _b_matrix(ctx)
    if mu_inv is None:
        mu_t = float(mu_t)
        if mu_t <= 0:
            raise ValueError(f"permeability must be positive, got {mu_t}")
        a = (curl_mat.T @ _block_apply(ctx.cb_km1.mass, curl_mat)
             + curl_stabilizer(ctx)) / mu_t
        return _sym(a), b, mu_t * _stab_matrix(ctx, stab)
    if ctx.quad_degree < 2 * ctx.k + 4:
        raise ValueError(
            "smooth permeability integrates weighted products and needs a "
            f"context with quad_degree >= {2 * ctx.k + 4}; got "
            f"{ctx.quad_degree}")
    w_cell = np.asarray(mu_inv(ctx.quad.points), dtype=float)
    w_faces = [np.asarray(mu_inv(fq.points), dtype=float) for fq in ctx.fq]
    if w_cell.min() <= 0 or any(wf.min() <= 0 for wf in w_faces):
        raise ValueError("inverse permeability must be positive at all "
                         "quadrature points")
    mw = _sym((ctx.phi_km1 * (ctx.quad.weights * w_cell)[:, None]).T
              @ ctx.phi_km1)
    a = curl_mat.T @ _block_apply(mw, curl_mat) \
        + curl_stabilizer(ctx, face_weights=w_faces)
    s = _stab_matrix(ctx, stab, face_weights=[1.0 / wf for wf in w_faces],
                     cell_weights=1.0 / w_cell)
    return _sym(a), b, _sym(s)


@dataclass
class LocalOperators:
    """Operator bundle for one cell: reconstructions, stabilizers, and the
    assembled local forms of the active scheme (module docstring has the
    local dof ordering).  ctx keeps the bases and rules for RHS work."""

    cell: int
    k: int
    scheme: str
    variant: str
    stab: str
    face_space: str
    faces: tuple
    signs: tuple
    dim_uT: int
    dim_pT: int
    dims_uF: tuple
    dims_pF: tuple
    curl_op: np.ndarray
    grad_op: np.ndarray
    s_curl: np.ndarray
    s_grad: np.ndarray
    a_mat: np.ndarray
    b_mat: np.ndarray
    s_mat: np.ndarray
    ctx: CellContext

    @property
    def n_u(self):
        return self.dim_uT + sum(self.dims_uF)

    @property
    def n_p(self):
        return self.dim_pT + sum(self.dims_pF)


def build_local_operators(mesh, c, scheme, k, mu=1.0, mu_inv=None,
                          variant="reconstruction", stab="full",
                          quad_degree=None):
    if scheme not in ("field", "vecpot"):
        raise ValueError(f"unknown scheme {scheme!r}")
    face_space = "R" if (scheme == "field" and variant == "broken-curl") \
        else "Q"
    if quad_degree is None and mu_inv is not None:
        quad_degree = 2 * k + 4
    ctx = CellContext(mesh, c, k, face_space=face_space,
                      quad_degree=quad_degree)
    if scheme == "field":
        if mu_inv is not None:
            raise ValueError("smooth permeability is only supported by the "
                             "vector potential scheme")
        a, b, s = local_forms_field(ctx, mu, variant=variant, stab=stab)
        curl_op = (ctx.broken_curl_matrix() if variant == "broken-curl"
                   else ctx.curl_matrix())
    else:
        if variant != "reconstruction":
            raise ValueError("the vector potential scheme has no "
                             "broken-curl variant")
        a, b, s = local_forms_vecpot(ctx, mu_t=mu, mu_inv=mu_inv, stab=stab)
        curl_op = ctx.curl_matrix()
    return LocalOperators(
        cell=c, k=k, scheme=scheme, variant=variant, stab=stab,
        face_space=face_space, faces=ctx.faces, signs=ctx.signs,
        dim_uT=ctx.dim_uT, dim_pT=ctx.dim_pT,
        dims_uF=ctx.dims_uF, dims_pF=ctx.dims_pF,
        curl_op=curl_op, grad_op=ctx.grad_matrix(),
        s_curl=curl_stabilizer(ctx), s_grad=grad_stabilizer(ctx),
        a_mat=a, b_mat=b, s_mat=s, ctx=ctx)


def cell_signature(mesh, c, decimals=12):
    """Byte key of the cell geometry relative to its own centroid.

    Cells with equal signatures are translated copies of one another, so
    every scaled-monomial construction (bases, rules, reconstructions,
    forms at mu = 1) coincides and can be reused.  The key covers all
    geometric inputs of a local build: the subtessellation, orientation
    signs, and per-face centers, frames, normals, and triangle coords.
    Rounding merges last-ulp differences between grid translates; genuinely
    different shapes differ far above that scale.
    """
    ctr = mesh.cell_center[c]
    parts = [
        (np.round(np.asarray([mesh.cell_h[c]]), decimals) + 0.0).tobytes(),
        (np.round(mesh.cell_tets[c] - ctr, decimals) + 0.0).tobytes(),
        np.asarray(mesh.cell_eps[c]).tobytes(),
    ]
    for f in mesh.cell_faces[c]:
        tris = mesh.verts[mesh.face_tris[f]] - ctr
        frame = np.concatenate([
            mesh.face_center[f] - ctr, mesh.face_t1[f], mesh.face_t2[f],
            mesh.face_normal[f], [mesh.face_h[f]]])
        parts.append((np.round(tris, decimals) + 0.0).tobytes())
        parts.append((np.round(frame, decimals) + 0.0).tobytes())
    return b"".join(parts)


def retarget_local_operators(rep, mesh, c, mu=1.0, mu_inv=None,
                             shift_points=False):
    """Rebind a cached mu = 1 build to a congruent (translated) cell.

    Geometry tables carry over unchanged; only the identities, the
    quadrature point locations, and the permeability scalings are per
    cell.  The caller must have matched cell signatures first.  With a
    smooth permeability the local forms are re-integrated on the carried
    tables using weights evaluated at the shifted points; otherwise the
    constant-mu scaling laws in the module docstring are applied.
    shift_points requests absolute quadrature points even without mu_inv
    (needed whenever a source term will be evaluated on them).
    """
    ctx = copy.copy(rep.ctx)
    ctx.cell = c
    ctx.faces = tuple(int(f) for f in mesh.cell_faces[c])
    if shift_points or mu_inv is not None:
        delta = mesh.cell_center[c] - rep.ctx.cb_k.x_t
        ctx.quad = replace(ctx.quad, points=ctx.quad.points + delta)
        ctx.fq = [replace(q, points=q.points + delta) for q in ctx.fq]
    if mu_inv is not None:
        a, b, s = local_forms_vecpot(ctx, mu_inv=mu_inv, stab=rep.stab)
    else:
        mu = float(mu)
        if mu <= 0:
            raise ValueError(f"permeability must be positive, got {mu}")
        if rep.scheme == "field":
            a, b, s = rep.a_mat, mu * rep.b_mat, mu * mu * rep.s_mat
        else:
            a, b, s = rep.a_mat / mu, rep.b_mat, mu * rep.s_mat
    return replace(rep, cell=c, faces=ctx.faces, a_mat=a, b_mat=b,
                   s_mat=s, ctx=ctx)


def local_field_vector(ctx, u):
    """Gather the local dof vector of a hybrid vector field on this cell."""
    if u.face_space != ctx.face_space:
        raise ValueError(f"face space mismatch: field has {u.face_space!r}, "
                         f"context has {ctx.face_space!r}")
    return np.concatenate([u.cell[ctx.cell]] + [u.face[f] for f in ctx.faces])


def local_pressure_vector(ctx, p):
    """Gather the local, side-aware dof vector of a hybrid pressure."""
    return np.concatenate(
        [p.cell[ctx.cell]]
        + [p.face_trace_seen_by(ctx.cell, f) for f in ctx.faces])


class CondensationError(RuntimeError):
    """Cell block numerically singular; the cell stays uncondensed."""


@dataclass
class CondensedCell:
    """Schur complement of one cell block and the cell-unknown recovery.

    For the symmetric local system [[K_tt, K_ts], [K_ts^T, K_ss]] with cell
    RHS b_t: schur = K_ss - K_ts^T K_tt^{-1} K_ts, rhs_corr (to subtract
    from the skeletal RHS) = K_ts^T K_tt^{-1} b_t, and the cell unknowns
    are recovered as K_tt^{-1} (b_t - K_ts x_skel).
    """

    schur: np.ndarray
    rhs_corr: np.ndarray
    inv_kts: np.ndarray
    inv_rhs: np.ndarray

    def recover(self, x_skel):
        return self.inv_rhs - self.inv_kts @ x_skel


def condense(k_tt, k_ts, k_ss, rhs_t=None, cond_limit=1e14):
    """Schur-complement elimination of the cell block of one local saddle
    system.  Raises CondensationError when the cell block is numerically
    singular, so the caller can fall back to assembling that cell in full.
    """
    k_tt = np.asarray(k_tt, dtype=float)
    k_ts = np.asarray(k_ts, dtype=float)
    if rhs_t is None:
        rhs_t = np.zeros(k_tt.shape[0])
    anorm = np.abs(k_tt).sum(axis=0).max()
    with warnings.catch_warnings():
        # exact singularity surfaces through the rcond check below
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(k_tt)
    rcond = lapack.dgecon(lu, anorm)[0]
    if not np.isfinite(rcond) or rcond * cond_limit < 1.0:
        raise CondensationError(
            f"cell block condition beyond {cond_limit:.1e}")
    sol = lu_solve((lu, piv), np.column_stack([k_ts, rhs_t]))
    inv_kts, inv_rhs = sol[:, :-1], sol[:, -1]
    schur = _sym(k_ss - k_ts.T @ inv_kts)
    return CondensedCell(schur, k_ts.T @ inv_rhs, inv_kts, inv_rhs)
