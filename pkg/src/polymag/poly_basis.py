"""Scaled polynomial bases, quadrature, and L2 projectors on cells and faces.

Conventions:
  - Cell monomials are ((x - x_T)/h_T)^alpha; face monomials are the same
    in the orthonormal face frame (t1, t2), scaled by h_F.  Tangential
    vector fields are stored as 2D frame coordinates.
  - A vector polynomial is a coefficient vector over the canonical vector
    monomials, component-major: [comp0 coeffs, comp1, ...].
  - Sub-basis matrices (gradient, Koszul, rot, trimmed) hold one spanning
    element per row, expressed in those canonical coefficients.
  - Quadrature is a composite simplex rule over the stored subtessellation;
    weights carry the signed subsimplex measures, so the rules stay exact
    on cells that are not star-shaped (where some fan weights are negative).
"""

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
from scipy.linalg.lapack import dpstrf
from scipy.special import roots_jacobi

__all__ = [
    "QuadratureRule",
    "CellBasis",
    "FaceBasis",
    "cell_quadrature",
    "face_quadrature",
    "build_cell_basis",
    "build_face_basis",
    "project_cell",
    "project_face",
    "project_face_scalar",
    "rotated_trace_check",
    "trimmed_containment_residual",
    "solve_mass",
    "dim_P",
]

_MAX_DEGREE = 40


def dim_P(l, dim):
    """Dimension of polynomials of total degree <= l in `dim` variables."""
    if l < 0:
        return 0
    if dim == 2:
        return (l + 1) * (l + 2) // 2
    return (l + 1) * (l + 2) * (l + 3) // 6


@lru_cache(maxsize=None)
def monomial_exponents(l, dim):
    exps = [e for e in itertools.product(range(l + 1), repeat=dim) if sum(e) <= l]
    exps.sort(key=lambda e: (sum(e), e))
    return np.asarray(exps, dtype=np.int64)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray        # (n, 3) physical coordinates
    weights: np.ndarray       # signed measures, sum = |region|
    degree: int
    points2d: np.ndarray = None   # faces: frame coordinates of x - x_F


@lru_cache(maxsize=None)
def _gauss01(n, alpha):
    # Gauss-Jacobi points/weights for int_0^1 (1-x)^alpha f(x) dx.
    x, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (x + 1.0), w * 0.5 ** (alpha + 1.0)


@lru_cache(maxsize=None)
def _tet_rule(n):
    # Conical product rule on the unit tet, exact to total degree 2n-1.
    xa, wa = _gauss01(n, 2.0)
    xb, wb = _gauss01(n, 1.0)
    xc, wc = _gauss01(n, 0.0)
    a, b, c = np.meshgrid(xa, xb, xc, indexing="ij")
    w = wa[:, None, None] * wb[None, :, None] * wc[None, None, :]
    x = a
    y = b * (1.0 - a)
    z = c * (1.0 - a) * (1.0 - b)
    pts = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    return pts, w.ravel()


@lru_cache(maxsize=None)
def _tri_rule(n):
    xa, wa = _gauss01(n, 1.0)
    xb, wb = _gauss01(n, 0.0)
    a, b = np.meshgrid(xa, xb, indexing="ij")
    w = wa[:, None] * wb[None, :]
    pts = np.column_stack([a.ravel(), (b * (1.0 - a)).ravel()])
    return pts, w.ravel()


def _rule_order(degree):
    if degree < 0 or degree > _MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree} (max {_MAX_DEGREE})")
    return max(1, (degree + 2) // 2)


def cell_quadrature(mesh, c, degree):
    """Composite rule over the cell subtessellation, exact to `degree`."""
    ref, ref_w = _tet_rule(_rule_order(degree))
    tets = mesh.cell_tets[c]                       # (m, 4, 3)
    vols = mesh.cell_tet_vols[c]                   # signed
    edges = tets[:, 1:, :] - tets[:, :1, :]        # (m, 3, 3)
    pts = tets[:, None, 0, :] + np.einsum("qj,mjd->mqd", ref, edges)
    w = ref_w[None, :] * (6.0 * vols)[:, None]
    return QuadratureRule(pts.reshape(-1, 3), w.ravel(), degree)


def face_quadrature(mesh, f, degree):
    """Composite rule over the face triangles, exact to `degree`."""
    ref, ref_w = _tri_rule(_rule_order(degree))
    x_f = mesh.face_center[f]
    t1, t2 = mesh.face_t1[f], mesh.face_t2[f]
    tri3d = mesh.verts[mesh.face_tris[f]]          # (m, 3, 3)
    rel = tri3d - x_f
    tri2d = np.stack([rel @ t1, rel @ t2], axis=-1)  # (m, 3, 2)
    edges = tri2d[:, 1:, :] - tri2d[:, :1, :]
    area2 = edges[:, 0, 0] * edges[:, 1, 1] - edges[:, 0, 1] * edges[:, 1, 0]
    p2 = tri2d[:, None, 0, :] + np.einsum("qj,mjd->mqd", ref, edges)
    w = ref_w[None, :] * area2[:, None]
    p2 = p2.reshape(-1, 2)
    p3 = x_f + p2[:, :1] * t1 + p2[:, 1:] * t2
    return QuadratureRule(p3, w.ravel(), degree, points2d=p2)


def _eval_monomials(exps, xhat):
    return np.prod(xhat[:, None, :] ** exps[None, :, :], axis=2)


def _grad_tables(exps):
    # index of alpha - e_d within exps, and the factor alpha_d; -1 if zero.
    lookup = {tuple(e): i for i, e in enumerate(exps)}
    dim = exps.shape[1]
    idx = -np.ones((len(exps), dim), dtype=np.int64)
    fac = np.zeros((len(exps), dim))
    for i, e in enumerate(exps):
        for d in range(dim):
            if e[d] > 0:
                lower = list(e)
                lower[d] -= 1
                idx[i, d] = lookup[tuple(lower)]
                fac[i, d] = e[d]
    return idx, fac


def solve_mass(mass, rhs, cond_limit=1e12):
    """Gram solve; falls back to eigenvalue whitening for bad conditioning."""
    try:
        cho = sla.cho_factor(mass, check_finite=False)
        d = np.abs(np.diag(cho[0]))
        if d.min() > 0 and (d.max() / d.min()) ** 2 < cond_limit:
            return sla.cho_solve(cho, rhs, check_finite=False)
    except sla.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(mass)
    cut = vals.max() * 1e-14
    inv = np.where(vals > cut, 1.0 / np.maximum(vals, cut), 0.0)
    tmp = vecs.T @ rhs
    scale = inv if tmp.ndim == 1 else inv[:, None]
    return vecs @ (scale * tmp)


class CellBasis:
    """Scaled monomial basis of P^l(T) and its vector-valued decomposition
    P^l(T)^3 = grad P^{l+1}(T) (+) P^{l-1}(T)^3 x (x - x_T)."""

    def __init__(self, mesh, c, l):
        self.l = l
        self.cell = c
        self.x_t = mesh.cell_center[c].copy()
        self.h_t = float(mesh.cell_h[c])
        self.exps = monomial_exponents(l, 3)
        self.nm = len(self.exps)
        self._gidx, self._gfac = _grad_tables(self.exps)
        quad = cell_quadrature(mesh, c, 2 * (l + 1))
        vals = self.eval(quad.points)
        self.mass = (vals * quad.weights[:, None]).T @ vals
        self.mass = 0.5 * (self.mass + self.mass.T)

        # Gradient sub-basis: grad of each non-constant monomial of degree
        # <= l+1, written over the degree-l vector monomials.
        hi = monomial_exponents(l + 1, 3)
        lookup = {tuple(e): i for i, e in enumerate(self.exps)}
        rows = []
        for e in hi:
            if sum(e) == 0:
                continue
            coef = np.zeros(3 * self.nm)
            for d in range(3):
                if e[d] > 0:
                    lower = list(e)
                    lower[d] -= 1
                    coef[d * self.nm + lookup[tuple(lower)]] = e[d]
            rows.append(coef)
        self.grad_coeffs = np.asarray(rows)

        # Koszul spanning set (e_d m_beta) x xhat, then a pivoted-Gram
        # selection of an independent subset of the right dimension.
        dim_gc = 3 * self.nm - (dim_P(l + 1, 3) - 1)
        if dim_gc > 0 and l >= 1:
            lower_exps = monomial_exponents(l - 1, 3)
            span = []
            # e_0 x xhat = (0, -x2, x1), e_1 x xhat = (x2, 0, -x0),
            # e_2 x xhat = (-x1, x0, 0)
            cross = {0: [(1, 2, -1.0), (2, 1, 1.0)],
                     1: [(0, 2, 1.0), (2, 0, -1.0)],
                     2: [(0, 1, -1.0), (1, 0, 1.0)]}
            for d in range(3):
                for b in lower_exps:
                    coef = np.zeros(3 * self.nm)
                    for comp, var, sgn in cross[d]:
                        e = list(b)
                        e[var] += 1
                        coef[comp * self.nm + lookup[tuple(e)]] = sgn
                    span.append(coef)
            span = np.asarray(span)
            vec_mass = np.kron(np.eye(3), self.mass)
            gram = span @ vec_mass @ span.T
            _cf, piv, rank, _info = dpstrf(gram, lower=1)
            if rank < dim_gc:
                raise ValueError(
                    f"cell {c}: Koszul spanning set rank {rank} < {dim_gc}; "
                    "degenerate geometry")
            keep = np.sort(piv[:dim_gc] - 1)
            self.koszul_coeffs = span[keep]
        else:
            self.koszul_coeffs = np.zeros((max(dim_gc, 0), 3 * self.nm))

        both = np.vstack([self.grad_coeffs, self.koszul_coeffs])
        vec_mass = np.kron(np.eye(3), self.mass)
        self.decomp_gram = both @ vec_mass @ both.T
        self.decomp_cond = float(np.linalg.cond(self.decomp_gram))
        self.cond = float(np.linalg.cond(self.mass))

    def eval(self, pts):
        xhat = (np.atleast_2d(pts) - self.x_t) / self.h_t
        return _eval_monomials(self.exps, xhat)

    def eval_grad(self, pts):
        vals = self.eval(pts)
        g = np.zeros((len(vals), self.nm, 3))
        for d in range(3):
            ok = self._gidx[:, d] >= 0
            g[:, ok, d] = vals[:, self._gidx[ok, d]] * self._gfac[ok, d] / self.h_t
        return g


class FaceBasis:
    """Scaled monomial basis of P^k(F) in frame coordinates, with the
    tangential decomposition P^k(F)^2 = rot P^{k+1}(F) (+) P^{k-1}(F) xi
    and the trimmed space Q^k_F = rot P^{k+1}(F) (+) P^{k-2}(F) xi."""

    def __init__(self, mesh, f, k):
        self.k = k
        self.face = f
        self.x_f = mesh.face_center[f].copy()
        self.h_f = float(mesh.face_h[f])
        self.t1 = mesh.face_t1[f].copy()
        self.t2 = mesh.face_t2[f].copy()
        self.normal = mesh.face_normal[f].copy()
        self.exps = monomial_exponents(k, 2)
        self.nm = len(self.exps)
        self._gidx, self._gfac = _grad_tables(self.exps)
        quad = face_quadrature(mesh, f, 2 * (k + 1))
        vals = self.eval(quad.points2d)
        self.mass = (vals * quad.weights[:, None]).T @ vals
        self.mass = 0.5 * (self.mass + self.mass.T)

        lookup = {tuple(e): i for i, e in enumerate(self.exps)}

        def rot_rows(l):
            # rot q = (d2 q, -d1 q) for q of degree 1..l+1
            rows = []
            for e in monomial_exponents(l + 1, 2):
                if sum(e) == 0:
                    continue
                coef = np.zeros(2 * self.nm)
                if e[1] > 0:
                    coef[lookup[(e[0], e[1] - 1)]] = e[1]
                if e[0] > 0:
                    coef[self.nm + lookup[(e[0] - 1, e[1])]] = -e[0]
                rows.append(coef)
            return np.asarray(rows) if rows else np.zeros((0, 2 * self.nm))

        def koszul_rows(l):
            # q * xi for q of degree <= l-1
            rows = []
            for b in monomial_exponents(l - 1, 2) if l >= 1 else []:
                coef = np.zeros(2 * self.nm)
                coef[lookup[(b[0] + 1, b[1])]] = 1.0
                coef[self.nm + lookup[(b[0], b[1] + 1)]] = 1.0
                rows.append(coef)
            return np.asarray(rows) if rows else np.zeros((0, 2 * self.nm))

        self.rot_coeffs = rot_rows(k)
        self.koszul_coeffs = koszul_rows(k)
        self.trimmed_coeffs = np.vstack([self.rot_coeffs, koszul_rows(k - 1)])
        vec_mass = np.kron(np.eye(2), self.mass)
        self.trimmed_mass = self.trimmed_coeffs @ vec_mass @ self.trimmed_coeffs.T
        self.trimmed_mass = 0.5 * (self.trimmed_mass + self.trimmed_mass.T)
        self.dim_trimmed = len(self.trimmed_coeffs)
        self.cond = float(np.linalg.cond(self.mass))

    def eval(self, pts2d):
        # pts2d: frame coordinates of x - x_F (unscaled), as from quadrature
        return _eval_monomials(self.exps, np.atleast_2d(pts2d) / self.h_f)

    def eval_grad(self, pts2d):
        vals = self.eval(pts2d)
        g = np.zeros((len(vals), self.nm, 2))
        for d in range(2):
            ok = self._gidx[:, d] >= 0
            g[:, ok, d] = vals[:, self._gidx[ok, d]] * self._gfac[ok, d] / self.h_f
        return g

    def frame_components(self, vecs3d):
        v = np.atleast_2d(vecs3d)
        return np.column_stack([v @ self.t1, v @ self.t2])

    def space_rows(self, space):
        """Sub-basis matrix of a tangential face space, one spanning element
        per row over the 2*nm frame-component monomials: "Q" is the trimmed
        space, "R" the rot space alone, "P" the full P^k(F)^2."""
        if space == "Q":
            return self.trimmed_coeffs
        if space == "R":
            return self.rot_coeffs
        if space == "P":
            return np.eye(2 * self.nm)
        raise ValueError(f"unknown face space {space!r}")

    def space_mass(self, space):
        if space == "Q":
            return self.trimmed_mass
        rows = self.space_rows(space)
        m = rows @ np.kron(np.eye(2), self.mass) @ rows.T
        return 0.5 * (m + m.T)

    def eval_tangential(self, pts2d, coeffs, space="Q"):
        """Evaluate a tangential polynomial given by sub-space ("Q"/"R") or
        raw vector-monomial ("P") coefficients; returns frame components."""
        c = self.space_rows(space).T @ coeffs
        v = self.eval(pts2d)
        return np.column_stack([v @ c[:self.nm], v @ c[self.nm:]])


def build_cell_basis(mesh, c, l):
    return CellBasis(mesh, c, l)


def build_face_basis(mesh, f, k):
    return FaceBasis(mesh, f, k)


def _check_proj_degree(quad_degree, l):
    if quad_degree < 2 * l:
        raise ValueError(
            f"quadrature degree {quad_degree} cannot integrate the Gram of "
            f"degree-{l} polynomials; need at least {2 * l}")


def project_cell(mesh, c, l, func, quad_degree=None, basis=None):
    """L2 projection onto P^l(T) (scalar func) or P^l(T)^3 (vector func).
    Returns coefficients over the (vector) monomials of `basis`."""
    if quad_degree is None:
        quad_degree = 2 * l + 2
    _check_proj_degree(quad_degree, l)
    if basis is None:
        basis = CellBasis(mesh, c, l)
    quad = cell_quadrature(mesh, c, quad_degree)
    vals = basis.eval(quad.points)
    fv = np.asarray(func(quad.points), dtype=float)
    wv = vals * quad.weights[:, None]
    if fv.ndim == 1:
        return solve_mass(basis.mass, wv.T @ fv)
    return np.concatenate([solve_mass(basis.mass, wv.T @ fv[:, d]) for d in range(3)])


def project_face(mesh, f, k, func, space="Q", quad_degree=None, basis=None):
    """L2 projection of a tangential field onto the full space P^k(F)^2
    (space="P"), the trimmed space Q^k_F (space="Q"), or the rot space
    R^k_F (space="R").

    func maps physical 3D points to 3D vectors; only the tangential part
    enters.  "P" returns frame-component monomial coefficients, "Q" and "R"
    return coefficients over the sub-basis rows.
    """
    if quad_degree is None:
        quad_degree = 2 * k + 2
    _check_proj_degree(quad_degree, k)
    if basis is None:
        basis = FaceBasis(mesh, f, k)
    quad = face_quadrature(mesh, f, quad_degree)
    vals = basis.eval(quad.points2d)
    g2 = basis.frame_components(np.asarray(func(quad.points), dtype=float))
    wv = vals * quad.weights[:, None]
    rhs = np.concatenate([wv.T @ g2[:, 0], wv.T @ g2[:, 1]])
    if space == "P":
        half = solve_mass(basis.mass, rhs.reshape(2, basis.nm).T)
        return half.T.ravel()
    return solve_mass(basis.space_mass(space), basis.space_rows(space) @ rhs)


def project_face_scalar(mesh, f, l, func, quad_degree=None, basis=None):
    """L2 projection of a scalar field onto P^l(F)."""
    if quad_degree is None:
        quad_degree = 2 * l + 2
    _check_proj_degree(quad_degree, l)
    if basis is None:
        basis = FaceBasis(mesh, f, l)
    quad = face_quadrature(mesh, f, quad_degree)
    vals = basis.eval(quad.points2d)
    fv = np.asarray(func(quad.points), dtype=float)
    return solve_mass(basis.mass, (vals * quad.weights[:, None]).T @ fv)


def trimmed_containment_residual(mesh, f, k):
    """Max relative L2 residual of projecting the P^{k-1}(F)^2 monomials
    onto Q^k_F; ~1e-14 confirms P^{k-1}(F)^2 is inside the trimmed space."""
    basis = FaceBasis(mesh, f, k)
    quad = face_quadrature(mesh, f, 2 * k + 2)
    vals = basis.eval(quad.points2d)
    nm_low = dim_P(k - 1, 2)
    worst = 0.0
    for d in range(2):
        for i in range(nm_low):
            target = np.zeros((len(vals), 2))
            target[:, d] = vals[:, i]
            rhs = np.concatenate([(vals * quad.weights[:, None]).T @ target[:, 0],
                                  (vals * quad.weights[:, None]).T @ target[:, 1]])
            coef = solve_mass(basis.trimmed_mass, basis.trimmed_coeffs @ rhs)
            back = basis.trimmed_coeffs.T @ coef
            tv = np.column_stack([vals @ back[:basis.nm], vals @ back[basis.nm:]])
            num = np.sum(quad.weights * np.sum((tv - target) ** 2, axis=1))
            den = np.sum(quad.weights * np.sum(target ** 2, axis=1))
            worst = max(worst, np.sqrt(max(num, 0.0) / den))
    return worst


def rotated_trace_check(mesh, c, k):
    """Verify on each face of cell c that the rotated tangential traces
    (grad p)|_F x n_F of p in P^{k+1}(T) span rot P^k(F).  Returns a per
    face report with the achieved rank and the containment residual."""
    cb = CellBasis(mesh, c, k + 1)
    dim_rk = dim_P(k + 1, 2) - 1
    report = {}
    for f in mesh.cell_faces[c]:
        fb = FaceBasis(mesh, f, k)
        quad = face_quadrature(mesh, f, 2 * k + 2)
        grads = cb.eval_grad(quad.points)          # (np, nm, 3)
        # frame coords of grad x n are (grad . t2, -grad . t1)
        w1 = grads @ fb.t2
        w2 = -(grads @ fb.t1)
        sq = np.sqrt(np.abs(quad.weights))
        mat = np.vstack([np.concatenate([w1[:, i] * sq, w2[:, i] * sq])
                         for i in range(cb.nm)])
        sv = np.linalg.svd(mat, compute_uv=False)
        rank = int(np.sum(sv > sv[0] * 1e-10))
        # residual of projecting the traces onto rot P^{k+1}(F)
        vals = fb.eval(quad.points2d)
        wv = vals * quad.weights[:, None]
        rot_mass = fb.rot_coeffs @ np.kron(np.eye(2), fb.mass) @ fb.rot_coeffs.T
        worst = 0.0
        for i in range(cb.nm):
            rhs = np.concatenate([wv.T @ w1[:, i], wv.T @ w2[:, i]])
            den = np.sum(quad.weights * (w1[:, i] ** 2 + w2[:, i] ** 2))
            if den < 1e-28:
                continue
            coef = solve_mass(rot_mass, fb.rot_coeffs @ rhs)
            back = fb.rot_coeffs.T @ coef
            tv1 = vals @ back[:fb.nm]
            tv2 = vals @ back[fb.nm:]
            num = np.sum(quad.weights * ((tv1 - w1[:, i]) ** 2 + (tv2 - w2[:, i]) ** 2))
            worst = max(worst, np.sqrt(max(num, 0.0) / den))
        report[int(f)] = {"rank": rank, "expected": dim_rk,
                          "containment_residual": float(worst)}
    return report
