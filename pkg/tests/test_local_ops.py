import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polymag import agglomerate_random, generate_box_tet
from polymag.hybrid_spaces import reduce_curl
from polymag.local_ops import (
    CellContext,
    CondensationError,
    _block_apply,
    _grad_volumetric,
    build_local_operators,
    condense,
    curl_reconstruction,
    curl_stabilizer,
    grad_reconstruction,
    grad_stabilizer,
    local_field_vector,
    local_forms_field,
    local_forms_vecpot,
)
from polymag.poly_basis import (
    CellBasis,
    FaceBasis,
    cell_quadrature,
    face_quadrature,
    monomial_exponents,
    project_cell,
    project_face,
    project_face_scalar,
)

_MESHES = {}


def tet_mesh():
    if "tet" not in _MESHES:
        _MESHES["tet"] = generate_box_tet(1, 1, 1)
    return _MESHES["tet"]


def agg_mesh():
    if "agg" not in _MESHES:
        _MESHES["agg"] = agglomerate_random(
            generate_box_tet(2, 2, 2), seed=3, target_fraction=0.5)
    return _MESHES["agg"]


def shape_cases():
    """One tetrahedron and one genuinely agglomerated polyhedron."""
    agg = agg_mesh()
    big = max(range(agg.n_cells), key=lambda c: len(agg.cell_faces[c]))
    return [("tet", tet_mesh(), 0), ("agg", agg, big)]


class Poly:
    """Sparse trivariate polynomial; the tests' own differentiation oracle."""

    def __init__(self, terms):
        self.terms = {tuple(e): float(c) for e, c in terms.items() if c}

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(len(pts))
        for (a, b, c), coef in self.terms.items():
            out += coef * pts[:, 0] ** a * pts[:, 1] ** b * pts[:, 2] ** c
        return out

    def diff(self, axis):
        out = {}
        for e, coef in self.terms.items():
            if e[axis] == 0:
                continue
            e2 = list(e)
            e2[axis] -= 1
            out[tuple(e2)] = out.get(tuple(e2), 0.0) + coef * e[axis]
        return Poly(out)

    def __sub__(self, other):
        out = dict(self.terms)
        for e, coef in other.terms.items():
            out[e] = out.get(e, 0.0) - coef
        return Poly(out)


def rand_poly(rng, deg):
    return Poly({tuple(e): rng.uniform(-1, 1)
                 for e in monomial_exponents(deg, 3)})


def vec_func(comps):
    return lambda pts: np.column_stack([p(pts) for p in comps])


def curl_comps(comps):
    p0, p1, p2 = comps
    return [p2.diff(1) - p1.diff(2),
            p0.diff(2) - p2.diff(0),
            p1.diff(0) - p0.diff(1)]


def grad_comps(q):
    return [q.diff(0), q.diff(1), q.diff(2)]


def local_reduce_field(ctx, v, space=None):
    space = ctx.face_space if space is None else space
    mesh = ctx.mesh
    parts = [project_cell(mesh, ctx.cell, ctx.k, v, basis=ctx.cb_k)]
    for i, f in enumerate(ctx.faces):
        n = mesh.face_normal[f]
        parts.append(project_face(
            mesh, f, ctx.k,
            lambda pts: np.cross(np.asarray(v(pts), dtype=float), n),
            space=space, basis=ctx.fb[i]))
    return np.concatenate(parts)


def local_reduce_pressure(ctx, q):
    mesh = ctx.mesh
    parts = [project_cell(mesh, ctx.cell, ctx.k - 1, q,
                          quad_degree=2 * ctx.k + 2, basis=ctx.cb_km1)]
    parts += [project_face_scalar(mesh, f, ctx.k, q, basis=ctx.fb[i])
              for i, f in enumerate(ctx.faces)]
    return np.concatenate(parts)


def vec_l2(cb, coeffs):
    nm = cb.nm
    sq = sum(coeffs[a * nm:(a + 1) * nm] @ cb.mass @ coeffs[a * nm:(a + 1) * nm]
             for a in range(3))
    return np.sqrt(max(sq, 0.0))


def eval_vec(phis, coeffs):
    nm = phis.shape[1]
    return np.column_stack([phis @ coeffs[a * nm:(a + 1) * nm]
                            for a in range(3)])


# ----------------------------------------------------------- reconstructions

def test_curl_of_constant_reduction_vanishes():
    for _, mesh, c in shape_cases():
        for k in (1, 2):
            ctx = CellContext(mesh, c, k)
            u = local_reduce_field(ctx, lambda pts: np.tile(
                [0.7, -0.3, 1.1], (len(np.atleast_2d(pts)), 1)))
            rec = curl_reconstruction(ctx) @ u
            assert vec_l2(ctx.cb_km1, rec) < 1e-12


def test_curl_of_linear_field_is_constant():
    for _, mesh, c in shape_cases():
        for k in (1, 2):
            ctx = CellContext(mesh, c, k)
            u = local_reduce_field(ctx, lambda pts: np.atleast_2d(pts)[:, [2, 0, 1]])
            rec = curl_reconstruction(ctx) @ u
            vals = eval_vec(ctx.phi_km1, rec)
            assert np.abs(vals - 1.0).max() < 1e-11


def test_commutation_curl():
    rng = np.random.default_rng(11)
    for _, mesh, c in shape_cases():
        for k in (1, 2, 3):
            ctx = CellContext(mesh, c, k)
            cmat = curl_reconstruction(ctx)
            for _ in range(20):
                comps = [rand_poly(rng, k + 2) for _ in range(3)]
                u = local_reduce_field(ctx, vec_func(comps))
                oracle = project_cell(mesh, c, k - 1, vec_func(curl_comps(comps)),
                                      quad_degree=2 * k + 2, basis=ctx.cb_km1)
                err = vec_l2(ctx.cb_km1, cmat @ u - oracle)
                assert err < 1e-10 * (1.0 + vec_l2(ctx.cb_km1, oracle))


def test_commutation_grad():
    rng = np.random.default_rng(12)
    for _, mesh, c in shape_cases():
        for k in (1, 2, 3):
            ctx = CellContext(mesh, c, k)
            gmat = grad_reconstruction(ctx)
            for _ in range(20):
                q = rand_poly(rng, k + 2)
                p = local_reduce_pressure(ctx, q)
                oracle = project_cell(mesh, c, k, vec_func(grad_comps(q)),
                                      basis=ctx.cb_k)
                err = vec_l2(ctx.cb_k, gmat @ p - oracle)
                assert err < 1e-10 * (1.0 + vec_l2(ctx.cb_k, oracle))


def test_grad_of_constant_and_coordinate():
    for _, mesh, c in shape_cases():
        ctx = CellContext(mesh, c, 1)
        p0 = local_reduce_pressure(ctx, lambda pts: np.full(len(np.atleast_2d(pts)), 2.5))
        assert vec_l2(ctx.cb_k, grad_reconstruction(ctx) @ p0) < 1e-12
        px = local_reduce_pressure(ctx, lambda pts: np.atleast_2d(pts)[:, 0])
        vals = eval_vec(ctx.phi_k, grad_reconstruction(ctx) @ px)
        assert np.abs(vals - [1.0, 0.0, 0.0]).max() < 1e-11


# --------------------------------------------------------------- stabilizers

def test_curl_stabilizer_vanishes_on_matching_degree_reduction():
    rng = np.random.default_rng(21)
    for _, mesh, c in shape_cases():
        for k in (1, 2, 3):
            ctx = CellContext(mesh, c, k)
            comps = [rand_poly(rng, k) for _ in range(3)]
            u = local_reduce_field(ctx, vec_func(comps))
            energy = u @ curl_stabilizer(ctx) @ u
            assert energy < 1e-12 * (1.0 + u @ u)


def test_grad_stabilizer_vanishes_on_matching_degree_reduction():
    rng = np.random.default_rng(22)
    for _, mesh, c in shape_cases():
        for k in (1, 2, 3):
            ctx = CellContext(mesh, c, k)
            p = local_reduce_pressure(ctx, rand_poly(rng, k - 1))
            energy = p @ grad_stabilizer(ctx) @ p
            assert energy < 1e-12 * (1.0 + p @ p)


def brute_curl_stab(mesh, c, k, space, uloc):
    """Direct recomputation with lstsq projections and a finer rule."""
    cb = CellBasis(mesh, c, k)
    cf = uloc[:3 * cb.nm].reshape(3, cb.nm)
    total = 0.0
    off = 3 * cb.nm
    for f in mesh.cell_faces[c]:
        fb = FaceBasis(mesh, f, k)
        dim = fb.space_rows(space).shape[0]
        fq = face_quadrature(mesh, f, 2 * k + 4)
        v3 = cb.eval(fq.points) @ cf.T
        w2 = fb.frame_components(np.cross(v3, fb.normal))
        sw = np.sqrt(fq.weights)
        cols = [fb.eval_tangential(fq.points2d, e, space=space)
                for e in np.eye(dim)]
        a = np.column_stack([np.concatenate([col[:, 0] * sw, col[:, 1] * sw])
                             for col in cols])
        b = np.concatenate([w2[:, 0] * sw, w2[:, 1] * sw])
        proj, *_ = np.linalg.lstsq(a, b, rcond=None)
        diff = fb.eval_tangential(fq.points2d, proj - uloc[off:off + dim],
                                  space=space)
        total += np.sum(fq.weights * np.sum(diff ** 2, axis=1)) / mesh.face_h[f]
        off += dim
    return total


def brute_grad_stab(mesh, c, k, ploc):
    cb = CellBasis(mesh, c, k - 1)
    total = 0.0
    off = cb.nm
    for f in mesh.cell_faces[c]:
        fb = FaceBasis(mesh, f, k)
        fq = face_quadrature(mesh, f, 2 * k + 4)
        tr = cb.eval(fq.points) @ ploc[:cb.nm]
        qf = fb.eval(fq.points2d) @ ploc[off:off + fb.nm]
        total += mesh.face_h[f] * np.sum(fq.weights * (tr - qf) ** 2)
        off += fb.nm
    return total


def test_stabilizers_match_direct_recomputation():
    rng = np.random.default_rng(23)
    for _, mesh, c in shape_cases():
        for k in (1, 2):
            ctx = CellContext(mesh, c, k)
            u = rng.standard_normal(ctx.n_u)
            lhs = u @ curl_stabilizer(ctx) @ u
            rhs = brute_curl_stab(mesh, c, k, "Q", u)
            assert abs(lhs - rhs) < 1e-10 * (1.0 + abs(rhs))
            p = rng.standard_normal(ctx.n_p)
            lhs = p @ grad_stabilizer(ctx) @ p
            rhs = brute_grad_stab(mesh, c, k, p)
            assert abs(lhs - rhs) < 1e-10 * (1.0 + abs(rhs))
            cbm = CellBasis(mesh, c, k - 1)
            q = cell_quadrature(mesh, c, 2 * k + 2)
            g = np.einsum("pmd,m->pd", cbm.eval_grad(q.points), p[:cbm.nm])
            vol = mesh.cell_h[c] ** 2 * np.sum(q.weights * np.sum(g ** 2, axis=1))
            lhs = p @ _grad_volumetric(ctx) @ p
            assert abs(lhs - vol) < 1e-10 * (1.0 + abs(vol))


# --------------------------------------------------------------- local forms

def test_field_energy_vanishes_on_gradient_reductions():
    rng = np.random.default_rng(31)
    for variant, space in (("reconstruction", "Q"), ("broken-curl", "R")):
        for _, mesh, c in shape_cases():
            for k in (1, 2):
                ctx = CellContext(mesh, c, k, face_space=space)
                psi = rand_poly(rng, k + 1)
                u = local_reduce_field(ctx, vec_func(grad_comps(psi)))
                a, _, _ = local_forms_field(ctx, 1.0, variant=variant)
                assert u @ a @ u < 1e-11 * (1.0 + u @ u)


# recorded generalized-eigenvalue windows of A against the broken curl
# seminorm, over the non-kernel subspace; regression guards, not theory
_EQUIV_LOW = {1: 0.03, 2: 0.017, 3: 0.010}
_EQUIV_HIGH = {1: 35.0, 2: 60.0, 3: 100.0}


def _spectral_interval(a_mat, n_mat):
    w, v = np.linalg.eigh(0.5 * (n_mat + n_mat.T))
    keep = w > 1e-10 * w.max()
    vr = v[:, keep] / np.sqrt(w[keep])
    ev = np.linalg.eigvalsh(vr.T @ (0.5 * (a_mat + a_mat.T)) @ vr)
    return ev.min(), ev.max()


def test_field_energy_equivalent_to_curl_seminorm():
    for _, mesh, c in shape_cases():
        for k in (1, 2, 3):
            ctx = CellContext(mesh, c, k)
            a, _, _ = local_forms_field(ctx, 1.0)
            bc = ctx.broken_curl_matrix()
            n = bc.T @ _block_apply(ctx.cb_km1.mass, bc) + curl_stabilizer(ctx)
            lo, hi = _spectral_interval(a, n)
            assert _EQUIV_LOW[k] <= lo <= hi <= _EQUIV_HIGH[k]


def test_b_form_is_weighted_projection_pairing():
    rng = np.random.default_rng(32)
    mu = 2.3
    for _, mesh, c in shape_cases():
        for k in (1, 2):
            ctx = CellContext(mesh, c, k)
            comps = [rand_poly(rng, k + 2) for _ in range(3)]
            q = rand_poly(rng, k + 2)
            u = local_reduce_field(ctx, vec_func(comps))
            p = local_reduce_pressure(ctx, q)
            _, b, _ = local_forms_field(ctx, mu)
            lhs = p @ b @ u
            gq = project_cell(mesh, c, k, vec_func(grad_comps(q)),
                              basis=ctx.cb_k)
            vv = eval_vec(ctx.phi_k, u[:ctx.dim_uT])
            gv = eval_vec(ctx.phi_k, gq)
            rhs = mu * np.sum(ctx.quad.weights * np.sum(vv * gv, axis=1))
            assert abs(lhs - rhs) < 1e-11 * (1.0 + abs(rhs))


# recorded coercivity floors of h_T^2 ||G_T q||^2 against the pressure
# seminorm on tetrahedra; on agglomerated cells the bound genuinely fails,
# which is why polyhedral runs keep the face stabilizer
_COER_FLOOR = {1: 0.5, 2: 0.35, 3: 0.3}


def _coercivity_min(mesh, c, k):
    ctx = CellContext(mesh, c, k)
    g = ctx.grad_matrix()
    a_g = ctx.h_t ** 2 * (g.T @ _block_apply(ctx.cb_k.mass, g))
    n_g = _grad_volumetric(ctx) + grad_stabilizer(ctx)
    return _spectral_interval(a_g, n_g)[0]


def test_tet_gradient_coercivity():
    for k in (1, 2, 3):
        for mesh in (tet_mesh(), generate_box_tet(2, 2, 2)):
            vals = [_coercivity_min(mesh, c, k)
                    for c in range(0, mesh.n_cells, 7)]
            assert min(vals) >= _COER_FLOOR[k]


def test_agglomerated_cell_lacks_gradient_coercivity():
    agg = agg_mesh()
    big = max(range(agg.n_cells), key=lambda c: len(agg.cell_faces[c]))
    assert _coercivity_min(agg, big, 1) < 1e-8


def test_vecpot_scaling_and_field_match():
    for _, mesh, c in shape_cases():
        ctx = CellContext(mesh, c, 1)
        a1, b1, s1 = local_forms_vecpot(ctx, 1.0)
        a4, b4, s4 = local_forms_vecpot(ctx, 4.0)
        af, _, _ = local_forms_field(ctx, 1.0)
        assert np.allclose(a4, a1 / 4.0, rtol=0, atol=1e-13 * np.abs(a1).max())
        assert np.allclose(s4, 4.0 * s1, rtol=0, atol=1e-13 * (1 + np.abs(s1).max()))
        assert np.array_equal(b4, b1)
        assert np.allclose(af, a1, rtol=0, atol=1e-14 * np.abs(a1).max())


def test_smooth_mu_constant_extraction():
    mesh = tet_mesh()
    for k in (1, 2):
        lop_c = build_local_operators(mesh, 0, "vecpot", k, mu=4.0)
        lop_s = build_local_operators(
            mesh, 0, "vecpot", k,
            mu_inv=lambda pts: np.full(len(np.atleast_2d(pts)), 0.25))
        for mc, ms in ((lop_c.a_mat, lop_s.a_mat), (lop_c.b_mat, lop_s.b_mat),
                       (lop_c.s_mat, lop_s.s_mat)):
            assert np.allclose(ms, mc, rtol=0, atol=1e-12 * (1 + np.abs(mc).max()))


def test_smooth_mu_matches_weighted_recomputation():
    mu_inv = lambda pts: 1.0 + np.atleast_2d(pts)[:, 0] ** 2 * np.atleast_2d(pts)[:, 1] ** 2
    rng = np.random.default_rng(41)
    for _, mesh, c in shape_cases():
        for k in (1, 2):
            lop = build_local_operators(mesh, c, "vecpot", k, mu_inv=mu_inv)
            ctx = lop.ctx
            u = rng.standard_normal(ctx.n_u)
            p = rng.standard_normal(ctx.n_p)
            # weighted curl part, recomputed on a finer rule
            quad = cell_quadrature(mesh, c, 2 * k + 6)
            phis = ctx.cb_km1.eval(quad.points)
            cu = eval_vec(phis, lop.curl_op @ u)
            a_curl = np.sum(quad.weights * mu_inv(quad.points)
                            * np.sum(cu ** 2, axis=1))
            # weighted face mismatch, via the unweighted projection
            stab = 0.0
            for i, f in enumerate(ctx.faces):
                fb, fq = ctx.fb[i], ctx.fq[i]
                proj = ctx.trace_projections()[i] @ u[:ctx.dim_uT]
                diff = fb.eval_tangential(fq.points2d, proj - u[ctx.uface_cols(i)])
                stab += np.sum(fq.weights * mu_inv(fq.points)
                               * np.sum(diff ** 2, axis=1)) / mesh.face_h[f]
            lhs = u @ lop.a_mat @ u
            assert abs(lhs - (a_curl + stab)) < 1e-10 * (1.0 + abs(lhs))
            # S: mu-weighted volumetric plus face terms; the weight is
            # rational, so reuse the context's rule and only recheck wiring
            g = np.einsum("pmd,m->pd", ctx.cb_km1.eval_grad(ctx.quad.points),
                          p[:ctx.dim_pT])
            vol = ctx.h_t ** 2 * np.sum(
                ctx.quad.weights / mu_inv(ctx.quad.points)
                * np.sum(g ** 2, axis=1))
            sfaces = 0.0
            for i, f in enumerate(ctx.faces):
                fb, fq = ctx.fb[i], ctx.fq[i]
                tr = ctx.f_trkm1[i] @ p[:ctx.dim_pT]
                qf = ctx.f_scal[i] @ p[ctx.pface_cols(i)]
                sfaces += mesh.face_h[f] * np.sum(
                    fq.weights / mu_inv(fq.points) * (tr - qf) ** 2)
            lhs = p @ lop.s_mat @ p
            assert abs(lhs - (vol + sfaces)) < 1e-10 * (1.0 + abs(lhs))


def test_symmetry_and_positive_semidefiniteness():
    for _, mesh, c in shape_cases():
        for scheme in ("field", "vecpot"):
            for k in (1, 2):
                lop = build_local_operators(mesh, c, scheme, k, mu=1.7)
                for m in (lop.a_mat, lop.s_mat):
                    scale = 1.0 + np.abs(m).max()
                    assert np.abs(m - m.T).max() < 1e-13 * scale
                    assert np.linalg.eigvalsh(m).min() > -1e-11 * scale


# ------------------------------------------------------- broken-curl variant

def test_broken_curl_matches_elementwise_curl():
    rng = np.random.default_rng(51)
    for _, mesh, c in shape_cases():
        for k in (1, 2):
            ctx = CellContext(mesh, c, k, face_space="R")
            comps = [rand_poly(rng, k) for _ in range(3)]
            u = local_reduce_field(ctx, vec_func(comps))
            oracle = project_cell(mesh, c, k - 1, vec_func(curl_comps(comps)),
                                  basis=ctx.cb_km1)
            err = vec_l2(ctx.cb_km1, ctx.broken_curl_matrix() @ u - oracle)
            assert err < 1e-11 * (1.0 + vec_l2(ctx.cb_km1, oracle))


def test_variant_and_parameter_validation():
    mesh = tet_mesh()
    ctx_q = CellContext(mesh, 0, 1, face_space="Q")
    ctx_r = CellContext(mesh, 0, 1, face_space="R")
    with pytest.raises(ValueError, match="requires face space 'R'"):
        local_forms_field(ctx_q, 1.0, variant="broken-curl")
    with pytest.raises(ValueError, match="requires face space 'Q'"):
        local_forms_field(ctx_r, 1.0, variant="reconstruction")
    with pytest.raises(ValueError, match="trimmed face space"):
        local_forms_vecpot(ctx_r, 1.0)
    with pytest.raises(TypeError, match="constant permeability"):
        local_forms_field(ctx_q, lambda pts: pts[:, 0])
    with pytest.raises(ValueError, match="must be positive"):
        local_forms_vecpot(ctx_q, -2.0)
    with pytest.raises(ValueError, match="must be positive"):
        local_forms_field(ctx_q, 0.0)
    with pytest.raises(ValueError, match="stabilization mode"):
        local_forms_vecpot(ctx_q, 1.0, stab="extra")
    with pytest.raises(ValueError, match="unknown variant"):
        local_forms_field(ctx_q, 1.0, variant="exotic")
    with pytest.raises(ValueError, match="quad_degree"):
        local_forms_vecpot(ctx_q, mu_inv=lambda pts: np.ones(len(pts)))
    with pytest.raises(ValueError, match="vector potential scheme"):
        build_local_operators(mesh, 0, "field", 1,
                              mu_inv=lambda pts: np.ones(len(pts)))
    with pytest.raises(ValueError, match="no[\\s\\S]*broken-curl"):
        build_local_operators(mesh, 0, "vecpot", 1, variant="broken-curl")
    with pytest.raises(ValueError, match="unknown scheme"):
        build_local_operators(mesh, 0, "mixed", 1)
    with pytest.raises(ValueError, match="inverse permeability"):
        build_local_operators(mesh, 0, "vecpot", 1,
                              mu_inv=lambda pts: -np.ones(len(np.atleast_2d(pts))))


def test_local_field_vector_gather_and_mismatch():
    mesh = tet_mesh()
    ctx = CellContext(mesh, 0, 1)
    u = reduce_curl(mesh, 1, lambda pts: np.atleast_2d(pts)[:, [2, 0, 1]])
    vec = local_field_vector(ctx, u)
    assert vec.shape == (ctx.n_u,)
    assert np.array_equal(vec[:ctx.dim_uT], u.cell[0])
    u_r = reduce_curl(mesh, 1, lambda pts: np.atleast_2d(pts)[:, [2, 0, 1]],
                      face_space="R")
    with pytest.raises(ValueError, match="face space mismatch"):
        local_field_vector(ctx, u_r)


# --------------------------------------------------------------- condensation

def _local_saddle(lop):
    n_u, n_p = lop.n_u, lop.n_p
    k = np.zeros((n_u + n_p, n_u + n_p))
    k[:n_u, :n_u] = lop.a_mat
    k[:n_u, n_u:] = lop.b_mat.T
    k[n_u:, :n_u] = lop.b_mat
    k[n_u:, n_u:] = -lop.s_mat
    cell_idx = np.r_[np.arange(lop.dim_uT), n_u + np.arange(lop.dim_pT)]
    skel_idx = np.setdiff1d(np.arange(n_u + n_p), cell_idx)
    return k, cell_idx, skel_idx


def test_condense_matches_manual_elimination():
    rng = np.random.default_rng(61)
    for stab in ("full", "none"):
        lop = build_local_operators(tet_mesh(), 0, "vecpot", 1, stab=stab)
        k, cell_idx, skel_idx = _local_saddle(lop)
        ktt = k[np.ix_(cell_idx, cell_idx)]
        kts = k[np.ix_(cell_idx, skel_idx)]
        kss = k[np.ix_(skel_idx, skel_idx)]
        rhs_t = rng.standard_normal(len(cell_idx))
        cc = condense(ktt, kts, kss, rhs_t)
        inv = np.linalg.solve(ktt, np.column_stack([kts, rhs_t]))
        assert np.abs(cc.schur - (kss - kts.T @ inv[:, :-1])).max() < 1e-12
        assert np.abs(cc.rhs_corr - kts.T @ inv[:, -1]).max() < 1e-12
        x_s = rng.standard_normal(len(skel_idx))
        x_t = cc.recover(x_s)
        assert np.abs(ktt @ x_t + kts @ x_s - rhs_t).max() < 1e-12
        zero = condense(ktt, kts, kss).recover(np.zeros(len(skel_idx)))
        assert np.abs(zero).max() == 0.0


def test_condense_rejects_singular_cell_block():
    with pytest.raises(CondensationError):
        condense(np.zeros((3, 3)), np.zeros((3, 2)), np.zeros((2, 2)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_condensed_solve_equals_full_solve(seed):
    rng = np.random.default_rng(seed)
    nt, ns = 6, 4
    m = rng.standard_normal((nt, nt))
    ktt = m @ m.T + np.eye(nt)
    kts = rng.standard_normal((nt, ns))
    ms = rng.standard_normal((ns, ns))
    kss = ms @ ms.T + (1.0 + np.linalg.norm(kts) ** 2) * np.eye(ns)
    k = np.block([[ktt, kts], [kts.T, kss]])
    rhs = rng.standard_normal(nt + ns)
    x = np.linalg.solve(k, rhs)
    cc = condense(ktt, kts, kss, rhs[:nt])
    x_s = np.linalg.solve(cc.schur, rhs[nt:] - cc.rhs_corr)
    x_t = cc.recover(x_s)
    assert np.abs(np.r_[x_t, x_s] - x).max() < 1e-8 * (1.0 + np.abs(x).max())
