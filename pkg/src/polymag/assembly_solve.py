"""Global saddle-point assembly, static condensation, and direct solve.

The assembled operator is the symmetric arrangement

    [ A   B^T ] [u]   [f]
    [ B  -S   ] [p] = [g],

with A the (stabilized) curl form, B the mixed form tested against
pressures, and S the pressure stabilizer.  Skeletal unknowns come first,
in the dof map's layout: magnetic face blocks, pressure face blocks,
sigma jumps, gamma constants, mean multiplier.  The uncondensed variant
appends per-cell blocks (magnetic then pressure) in cell order; the
condensed variant eliminates them cell by cell through a Schur
complement and keeps the recovery data.

The field scheme's zero-mean pressure condition over the cut domain is
enforced through the multiplier slot, coupled to the cell integrals of
the pressure unknowns.  Nonhomogeneous data enters as

  - field scheme: sum_{F on the boundary} (g, q_F)_F plus Phi_i sigma_i
    on the constraint row (g = mu h . n with outward normal, Phi_i the
    flux of mu h across cutting surface i along its stored normal);
  - vector potential scheme: boundary face unknowns pinned to the
    projection of a x n and lifted to the RHS, plus Phi_j gamma_j with
    Phi_j the flux of a over cavity boundary j (outward normal).

Assembly is deterministic: cells in index order, one fixed triplet
ordering, so identical inputs give identical matrices bit for bit.
"""

import inspect

import numpy as np
from dataclasses import dataclass
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import splu

from .hybrid_spaces import (
    HybridField,
    HybridPressure,
    build_dof_map,
    seminorm_curl,
)
from .local_ops import (
    CondensationError,
    build_local_operators,
    cell_signature,
    condense,
    retarget_local_operators,
)
from .poly_basis import CellBasis, FaceBasis, cell_quadrature, face_quadrature, project_face
from .topology import TopologyInfo, analyze_topology

__all__ = [
    "SaddleSystem",
    "Solution",
    "SolveError",
    "SourceData",
    "assemble_field",
    "assemble_vecpot",
    "cell_l2_norm",
    "compute_errors",
    "describe_dof",
    "gamma_fluxes",
    "pressure_l2_norm",
    "pressure_mean",
    "sigma_fluxes",
    "solve",
]


@dataclass
class SourceData:
    """Problem data callbacks and constraint values.

    j: current density, maps points (P, 3) to vectors (P, 3); None is zero.
    g_normal: field scheme boundary datum mu h . n (outward normal), scalar.
    a_tangential: vector potential scheme boundary field; the rotated trace
        a x n of this callable is pinned into the boundary face unknowns.
    flux_sigma: imposed fluxes of mu h across the cutting surfaces, in
        surface order (field scheme; required whenever surfaces exist).
    flux_gamma: imposed fluxes of a over the cavity boundary components
        (vector potential scheme; None means homogeneous, i.e. zeros).
    """

    j: object = None
    g_normal: object = None
    a_tangential: object = None
    flux_sigma: np.ndarray = None
    flux_gamma: np.ndarray = None


def _normal_datum(g, pts, normal):
    """Evaluate a boundary normal datum: a one-argument callable is a
    scalar field of the points; a two-argument one also receives the
    outward unit normal of the face being integrated."""
    try:
        two = len(inspect.signature(g).parameters) >= 2
    except (TypeError, ValueError):
        two = False
    vals = g(pts, normal) if two else g(pts)
    return np.asarray(vals, dtype=float)


def sigma_fluxes(mesh, topo, h, mu=1.0, quad_degree=8):
    """Fluxes of mu h across each cutting surface by face quadrature,
    along the stored face normals; mu is a constant or per-cell array,
    sampled on the plus side (mu h . n is continuous across the cut)."""
    mu_arr = _mu_by_cell(mesh, mu)
    out = []
    for surf in topo.surfaces:
        total = 0.0
        for f, cp in zip(surf.faces, surf.plus_cells):
            fq = face_quadrature(mesh, int(f), quad_degree)
            hv = np.asarray(h(fq.points), dtype=float)
            total += mu_arr[cp] * float(
                np.sum(fq.weights * (hv @ mesh.face_normal[f])))
        out.append(total)
    return np.asarray(out)


def gamma_fluxes(mesh, topo, a, quad_degree=8):
    """Fluxes of a over each cavity boundary component (outward normals)."""
    out = []
    for comp in topo.boundary:
        if comp.index == 0:
            continue
        total = 0.0
        for f in comp.faces:
            fq = face_quadrature(mesh, int(f), quad_degree)
            av = np.asarray(a(fq.points), dtype=float)
            total += float(np.sum(fq.weights * (av @ mesh.face_normal[f])))
        out.append(total)
    return np.asarray(out)


def describe_dof(dm, g):
    """Human-readable entity behind a global dof index."""
    uf = np.flatnonzero(dm.uface_off >= 0)
    pf = np.flatnonzero(dm.pface_off >= 0)
    n_uf = len(uf) * dm.dim_uF
    n_pf = len(pf) * dm.dim_pF
    if 0 <= g < n_uf:
        return f"magnetic face {uf[g // dm.dim_uF]} dof {g % dm.dim_uF}"
    if g < n_uf + n_pf:
        r = g - n_uf
        return f"pressure face {pf[r // dm.dim_pF]} dof {r % dm.dim_pF}"
    if dm.sigma_off >= 0 and dm.sigma_off <= g < dm.sigma_off + dm.n_sigma:
        return f"sigma jump of cutting surface {g - dm.sigma_off + 1}"
    if dm.gamma_off >= 0 and dm.gamma_off <= g < dm.gamma_off + dm.n_gamma:
        return f"gamma constant of cavity boundary {g - dm.gamma_off + 1}"
    if g == dm.lambda_off:
        return "pressure mean multiplier"
    if dm.n_skel <= g < dm.n_skel + dm.n_cond:
        c, r = divmod(g - dm.n_skel, dm.dim_uT + dm.dim_pT)
        if r < dm.dim_uT:
            return f"cell {c} magnetic dof {r}"
        return f"cell {c} pressure dof {r - dm.dim_uT}"
    return f"dof {g} (out of range)"


@dataclass
class SaddleSystem:
    """One assembled sparse system, condensed or full."""

    scheme: str
    k: int
    variant: str
    stab: str
    condensed: bool
    mesh: object
    dof_map: object
    matrix: object            # CSR, symmetric
    rhs: np.ndarray
    recovery: list            # per cell (skeletal dof ids, CondensedCell)
    pinned_values: np.ndarray  # (n_faces, dim_uF), rows valid where pinned
    pinned_mask: np.ndarray
    mu_cell: np.ndarray
    compatibility: dict

    @property
    def n_dof(self):
        return self.matrix.shape[0]


def _mu_by_cell(mesh, mu):
    arr = np.asarray(mu, dtype=float)
    if arr.ndim == 0:
        arr = np.full(mesh.n_cells, float(arr))
    if arr.shape != (mesh.n_cells,):
        raise ValueError(
            f"permeability must be a scalar or one value per cell; got "
            f"shape {arr.shape} for {mesh.n_cells} cells")
    if arr.min() <= 0:
        raise ValueError("permeability must be positive")
    return arr


def _strip_surfaces(topo):
    return TopologyInfo(topo.beta0, topo.beta1, topo.beta2,
                        topo.boundary, [])


class _Accumulator:
    """Deterministic triplet accumulation plus dense RHS."""

    def __init__(self, n):
        self.n = n
        self.rows = []
        self.cols = []
        self.vals = []
        self.rhs = np.zeros(n)

    def add_block(self, row_dofs, col_dofs, block):
        # int32 triplets: skeletal systems stay far below 2^31 dofs and the
        # index arrays are the dominant assembly allocation on fine meshes
        r = np.repeat(np.asarray(row_dofs, dtype=np.int32), len(col_dofs))
        c = np.tile(np.asarray(col_dofs, dtype=np.int32), len(row_dofs))
        self.rows.append(r)
        self.cols.append(c)
        self.vals.append(np.asarray(block, dtype=float).ravel())

    def matrix(self):
        if self.rows:
            rows = np.concatenate(self.rows)
            self.rows = None
            cols = np.concatenate(self.cols)
            self.cols = None
            vals = np.concatenate(self.vals)
            self.vals = None
        else:
            rows = cols = np.zeros(0, dtype=np.int32)
            vals = np.zeros(0)
        coo = coo_matrix((vals, (rows, cols)), shape=(self.n, self.n))
        return coo.tocsr()


def _cell_targets(dm, mesh, c, lop, pinned_values):
    """Local-to-global wiring of one cell's face columns.

    Returns (w, sdofs, v_loc): w is the (n_loc, n_s) weight matrix onto the
    unique skeletal dofs sdofs touched by this cell, and v_loc carries known
    (pinned) values so K v_loc can be lifted to the RHS.  Cell columns are
    the local prefix [0, dim_uT) + [n_u, n_u + dim_pT) and stay out of w.
    """
    n_loc = lop.n_u + lop.n_p
    entries = []                       # (local index, global dof, weight)
    v_loc = np.zeros(n_loc)
    off = lop.dim_uT
    for i, f in enumerate(lop.faces):
        base = dm.uface_off[f]
        if base >= 0:
            for d in range(dm.dim_uF):
                entries.append((off + d, base + d, 1.0))
        else:
            v_loc[off:off + dm.dim_uF] = pinned_values[f]
        off += dm.dim_uF
    off = lop.n_u + lop.dim_pT
    plus_cell = mesh.face_cells[:, 0]
    for i, f in enumerate(lop.faces):
        base = dm.pface_off[f]
        if base >= 0:
            for d in range(dm.dim_pF):
                entries.append((off + d, base + d, 1.0))
            s = dm.sigma_of_face[f]
            if s >= 0 and plus_cell[f] == c:
                # plus-side trace is the stored polynomial plus sigma
                entries.append((off, dm.sigma_off + s, 1.0))
        else:
            gj = dm.gamma_of_face[f]
            if gj >= 0:
                entries.append((off, dm.gamma_off + gj, 1.0))
            # remaining collapsed dofs are pinned to zero
        off += dm.dim_pF
    sdofs = sorted({g for _, g, _ in entries})
    pos = {g: i for i, g in enumerate(sdofs)}
    w = np.zeros((n_loc, len(sdofs)))
    for loc, g, wt in entries:
        w[loc, pos[g]] += wt
    return w, np.asarray(sdofs, dtype=np.int64), v_loc


def _local_saddle(lop):
    n_u, n_p = lop.n_u, lop.n_p
    k = np.zeros((n_u + n_p, n_u + n_p))
    k[:n_u, :n_u] = lop.a_mat
    k[:n_u, n_u:] = lop.b_mat.T
    k[n_u:, :n_u] = lop.b_mat
    k[n_u:, n_u:] = -lop.s_mat
    return k


def _gauge_row(acc, dm, mesh):
    """Couple the mean multiplier to the face-pressure constants.

    Any functional that is nonzero on the constant pressure mode fixes the
    gauge; this one touches only skeletal dofs, so the multiplier row stays
    sparse after condensation (a cell-integral constraint would fill in
    densely).  The recovered pressure is shifted to exact zero cell mean
    after the solve, which the equations permit because constants lie in
    the kernel of every other row.
    """
    active = np.flatnonzero(dm.pface_off >= 0)
    wts = mesh.face_area[active] / mesh.face_area[active].sum()
    cols = dm.pface_off[active].astype(np.int32)
    lam = np.full(len(active), dm.lambda_off, dtype=np.int32)
    acc.rows.append(np.r_[lam, cols])
    acc.cols.append(np.r_[cols, lam])
    acc.vals.append(np.r_[wts, wts])


def _assemble(mesh, dm, scheme, k, mu_cell, mu_inv, data, variant, stab,
              condense_cells, pinned_values, compat, data_deg, reuse):
    acc = _Accumulator(dm.n_skel if condense_cells else dm.n_skel + dm.n_cond)
    recovery = [] if condense_cells else None
    stride = dm.dim_uT + dm.dim_pT
    cache = {}
    shift_points = data.j is not None
    for c in range(mesh.n_cells):
        if reuse:
            # translated copies share every scaled-monomial construction;
            # build one representative per congruence class at mu = 1 and
            # rebind it (identities, point locations, mu scalings)
            sig = cell_signature(mesh, c)
            rep = cache.get(sig)
            if rep is None:
                rep = build_local_operators(
                    mesh, c, scheme, k, variant=variant, stab=stab,
                    quad_degree=(2 * k + 4 if mu_inv is not None else None))
                cache[sig] = rep
            lop = retarget_local_operators(
                rep, mesh, c, mu=mu_cell[c], mu_inv=mu_inv,
                shift_points=shift_points)
        else:
            lop = build_local_operators(
                mesh, c, scheme, k, mu=mu_cell[c], mu_inv=mu_inv,
                variant=variant, stab=stab)
        ctx = lop.ctx
        kloc = _local_saddle(lop)
        floc = np.zeros(kloc.shape[0])
        if data.j is not None:
            jv = np.asarray(data.j(ctx.quad.points), dtype=float)
            if scheme == "field":
                wphi = ctx.phi_km1 * ctx.quad.weights[:, None]
                jm = np.concatenate([wphi.T @ jv[:, a] for a in range(3)])
                floc[:lop.n_u] = lop.curl_op.T @ jm
            else:
                wphi = ctx.phi_k * ctx.quad.weights[:, None]
                floc[:lop.dim_uT] = np.concatenate(
                    [wphi.T @ jv[:, a] for a in range(3)])
        t_idx = np.r_[np.arange(lop.dim_uT),
                      lop.n_u + np.arange(lop.dim_pT)]
        w, sdofs, v_loc = _cell_targets(dm, mesh, c, lop, pinned_values)
        k_t_all = kloc[t_idx, :]
        ktt = k_t_all[:, t_idx]
        kts = k_t_all @ w
        kss = w.T @ (kloc @ w)
        rhs_t = floc[t_idx] - k_t_all @ v_loc
        rhs_s = w.T @ (floc - kloc @ v_loc)
        if condense_cells:
            try:
                cc = condense(ktt, kts, kss, rhs_t)
            except CondensationError as exc:
                raise CondensationError(f"cell {c}: {exc}") from None
            acc.add_block(sdofs, sdofs, cc.schur)
            acc.rhs[sdofs] += rhs_s - cc.rhs_corr
            recovery.append((sdofs, cc))
        else:
            tg = dm.n_skel + c * stride + np.arange(stride)
            acc.add_block(tg, tg, ktt)
            acc.add_block(tg, sdofs, kts)
            acc.add_block(sdofs, tg, kts.T)
            acc.add_block(sdofs, sdofs, kss)
            acc.rhs[tg] += rhs_t
            acc.rhs[sdofs] += rhs_s
    # boundary and flux data on the constraint rows
    if scheme == "field":
        if dm.lambda_off >= 0:
            _gauge_row(acc, dm, mesh)
        if data.g_normal is not None:
            for f in mesh.boundary_faces():
                base = dm.pface_off[f]
                fq = face_quadrature(mesh, int(f), data_deg)
                fb = FaceBasis(mesh, int(f), k)
                gv = _normal_datum(data.g_normal, fq.points,
                                   mesh.face_normal[f])
                acc.rhs[base:base + dm.dim_pF] += \
                    (fb.eval(fq.points2d) * fq.weights[:, None]).T @ gv
        if dm.n_sigma:
            acc.rhs[dm.sigma_off:dm.sigma_off + dm.n_sigma] += data.flux_sigma
    else:
        if dm.n_gamma and data.flux_gamma is not None:
            acc.rhs[dm.gamma_off:dm.gamma_off + dm.n_gamma] += data.flux_gamma
    return SaddleSystem(
        scheme=scheme, k=k, variant=variant, stab=stab,
        condensed=condense_cells, mesh=mesh, dof_map=dm,
        matrix=acc.matrix(), rhs=acc.rhs, recovery=recovery,
        pinned_values=pinned_values,
        pinned_mask=dm.uface_off < 0, mu_cell=mu_cell,
        compatibility=compat)


def _boundary_data_report(mesh, topo, scalar=None, vector=None):
    """Per-boundary-component quadrature of a normal datum: either a
    scalar callback (already mu h . n) or a vector one dotted with the
    outward face normals."""
    per_comp = []
    for comp in topo.boundary:
        total = 0.0
        for f in comp.faces:
            fq = face_quadrature(mesh, int(f), 8)
            if scalar is not None:
                vals = _normal_datum(scalar, fq.points, mesh.face_normal[f])
            else:
                vals = np.asarray(vector(fq.points), dtype=float) \
                    @ mesh.face_normal[f]
            total += float(np.sum(fq.weights * vals))
        per_comp.append(total)
    return per_comp


def assemble_field(mesh, topo, k, mu, data, variant="reconstruction",
                   stab="full", condense_cells=True, include_sigma=True,
                   data_quad_degree=None, reuse_congruent_cells=True):
    """Assemble the first-order (magnetic field) scheme.

    topo may be None (computed on demand).  mu is a constant or per-cell
    array.  data.flux_sigma is required whenever cutting surfaces exist
    and include_sigma is set; include_sigma=False drops the jump unknowns
    altogether, which on non-simply-connected domains leaves the harmonic
    component of the solution undetermined up to stabilization energy.
    data_quad_degree overrides the face rule used to integrate g_normal
    moments (default 2k+2); raise it when the datum is not polynomial.
    reuse_congruent_cells shares local builds between translated copies
    of a cell shape (an exact reuse; gridded meshes assemble much faster).
    """
    if topo is None:
        topo = analyze_topology(mesh)
    if data.a_tangential is not None or data.flux_gamma is not None:
        raise ValueError("tangential data and cavity fluxes belong to the "
                         "vector potential scheme")
    if not include_sigma:
        if data.flux_sigma is not None:
            raise ValueError("flux_sigma given but include_sigma is off")
        topo = _strip_surfaces(topo)
    n_sigma = len(topo.surfaces)
    flux = data.flux_sigma
    if n_sigma:
        if flux is None:
            raise ValueError(
                f"the domain has {n_sigma} cutting surface(s); "
                "data.flux_sigma must supply one flux per surface")
        flux = np.asarray(flux, dtype=float)
        if flux.shape != (n_sigma,):
            raise ValueError(
                f"flux_sigma has shape {flux.shape}, expected ({n_sigma},)")
        data = SourceData(data.j, data.g_normal, None, flux, None)
    mu_cell = _mu_by_cell(mesh, mu)
    face_space = "R" if variant == "broken-curl" else "Q"
    dm = build_dof_map(mesh, "field", k, topo=topo, face_space=face_space)
    pinned_values = np.zeros((mesh.n_faces, dm.dim_uF))
    compat = {}
    if data.g_normal is not None:
        per_comp = _boundary_data_report(mesh, topo, scalar=data.g_normal)
        compat["boundary_flux_per_component"] = per_comp
        compat["boundary_flux_total"] = float(np.sum(per_comp))
    data_deg = 2 * k + 2 if data_quad_degree is None else int(data_quad_degree)
    return _assemble(mesh, dm, "field", k, mu_cell, None, data, variant,
                     stab, condense_cells, pinned_values, compat, data_deg,
                     reuse_congruent_cells)


def assemble_vecpot(mesh, topo, k, mu, data, mu_inv=None, stab="full",
                    condense_cells=True, data_quad_degree=None,
                    reuse_congruent_cells=True):
    """Assemble the second-order (vector potential) scheme.

    Boundary face unknowns are pinned to the projection of a x n taken
    from data.a_tangential (zeros when absent) and lifted to the RHS.
    data.flux_gamma supplies the flux of a over each cavity boundary;
    None means the homogeneous case.  data_quad_degree overrides the face
    rule used to project the pinned traces (default 2k+2).
    reuse_congruent_cells shares local builds between translated copies
    of a cell shape (an exact reuse; gridded meshes assemble much faster).
    """
    if topo is None:
        topo = analyze_topology(mesh)
    if data.g_normal is not None or data.flux_sigma is not None:
        raise ValueError("normal data and cutting-surface fluxes belong to "
                         "the field scheme")
    mu_cell = _mu_by_cell(mesh, mu)
    if mu_inv is not None:
        centers = mesh.cell_center
        mu_cell = 1.0 / np.asarray(mu_inv(centers), dtype=float)
    dm = build_dof_map(mesh, "vecpot", k, topo=topo)
    n_gamma = dm.n_gamma
    flux = data.flux_gamma
    if flux is not None:
        flux = np.asarray(flux, dtype=float)
        if flux.shape != (n_gamma,):
            raise ValueError(
                f"flux_gamma has shape {flux.shape}, expected ({n_gamma},)")
        data = SourceData(data.j, None, data.a_tangential, None, flux)
    pinned_values = np.zeros((mesh.n_faces, dm.dim_uF))
    if data.a_tangential is not None:
        a = data.a_tangential
        for f in mesh.boundary_faces():
            n = mesh.face_normal[f]
            pinned_values[f] = project_face(
                mesh, int(f), k,
                lambda pts: np.cross(np.asarray(a(pts), dtype=float), n),
                quad_degree=data_quad_degree)
    compat = {}
    if data.a_tangential is not None:
        per_comp = _boundary_data_report(mesh, topo,
                                         vector=data.a_tangential)
        compat["boundary_flux_per_component"] = per_comp
    data_deg = 2 * k + 2 if data_quad_degree is None else int(data_quad_degree)
    return _assemble(mesh, dm, "vecpot", k, mu_cell, mu_inv, data,
                     "reconstruction", stab, condense_cells, pinned_values,
                     compat, data_deg, reuse_congruent_cells)


class SolveError(RuntimeError):
    """Direct factorization or residual verification failed."""


@dataclass
class Solution:
    """Solved unknowns: the skeletal vector plus recovered hybrid fields."""

    x: np.ndarray
    u: HybridField
    p: HybridPressure
    lam: float
    residual: float
    n_dof: int


def _singular_diagnostic(system, reason):
    msg = f"sparse direct solve failed ({reason}); the system is singular"
    n = system.matrix.shape[0]
    if n <= 4000:
        dense = system.matrix.toarray()
        _, s, vt = np.linalg.svd(dense)
        null = vt[-1]
        idx = int(np.argmax(np.abs(null)))
        msg += (f"; smallest singular value {s[-1]:.2e}, null vector peaks "
                f"at {describe_dof(system.dof_map, idx)}")
    return msg


def available_backends():
    """Usable direct solver backends, preferred first."""
    out = []
    try:
        import cvxopt.umfpack  # noqa: F401
        out.append("umfpack")
    except ImportError:
        pass
    out.append("splu")
    return out


def _solve_umfpack(mat, rhs):
    import cvxopt
    import cvxopt.umfpack
    coo = mat.tocoo()
    a = cvxopt.spmatrix(cvxopt.matrix(coo.data),
                        cvxopt.matrix(coo.row.astype(np.int32)),
                        cvxopt.matrix(coo.col.astype(np.int32)), coo.shape)
    x = cvxopt.matrix(rhs)
    cvxopt.umfpack.linsolve(a, x)
    return np.asarray(x).ravel()


def _solve_splu(mat, rhs):
    return splu(mat.tocsc()).solve(rhs)


def solve(system, backend="auto"):
    """Direct sparse solve with residual verification and cell recovery.

    backend picks the factorization: "umfpack" (SuiteSparse LU, needs
    cvxopt, roughly 4x faster than "splu" on skeletal systems), "splu"
    (scipy SuperLU, always available), or "auto" for the first usable one.
    """
    if backend == "auto":
        backend = available_backends()[0]
    if backend not in ("umfpack", "splu"):
        raise ValueError(f"unknown solver backend {backend!r}")
    mat = system.matrix
    try:
        if backend == "umfpack":
            x = _solve_umfpack(mat, system.rhs)
        else:
            x = _solve_splu(mat, system.rhs)
    except (RuntimeError, ArithmeticError) as exc:
        raise SolveError(_singular_diagnostic(system, str(exc))) from None
    if not np.all(np.isfinite(x)):
        raise SolveError(_singular_diagnostic(system, "non-finite solution"))
    rhs_norm = np.linalg.norm(system.rhs)
    residual = np.linalg.norm(mat @ x - system.rhs) / max(rhs_norm, 1.0)
    if residual > 1e-9:
        raise SolveError(_singular_diagnostic(
            system, f"residual {residual:.2e} exceeds 1e-9"))
    dm = system.dof_map
    mesh = system.mesh
    u = HybridField.zeros(mesh, system.k, face_space=dm.face_space)
    variant = "hat_sigma" if system.scheme == "field" else "gamma_collapsed"
    p = HybridPressure.zeros(mesh, system.k, variant=variant, topo=dm.topo)
    for f in range(mesh.n_faces):
        off = dm.uface_off[f]
        if off >= 0:
            u.face[f] = x[off:off + dm.dim_uF]
        else:
            u.face[f] = system.pinned_values[f]
            u.pinned[f] = True
        off = dm.pface_off[f]
        if off >= 0:
            p.face[f] = x[off:off + dm.dim_pF]
    if dm.n_sigma:
        p.sigma[:] = x[dm.sigma_off:dm.sigma_off + dm.n_sigma]
    if dm.n_gamma:
        p.gamma[:] = x[dm.gamma_off:dm.gamma_off + dm.n_gamma]
    lam = float(x[dm.lambda_off]) if dm.lambda_off >= 0 else 0.0
    stride = dm.dim_uT + dm.dim_pT
    if system.condensed:
        for c, (sdofs, cc) in enumerate(system.recovery):
            xt = cc.recover(x[sdofs])
            u.cell[c] = xt[:dm.dim_uT]
            p.cell[c] = xt[dm.dim_uT:]
    else:
        for c in range(mesh.n_cells):
            base = dm.n_skel + c * stride
            u.cell[c] = x[base:base + dm.dim_uT]
            p.cell[c] = x[base + dm.dim_uT:base + stride]
    if dm.lambda_off >= 0:
        # shift the gauged pressure to exact zero cell mean; constants are
        # in the kernel of every row except the gauge, so this is free
        shift = pressure_mean(p) / mesh.cell_volume.sum()
        p.cell[:, 0] -= shift
        p.face[dm.pface_off >= 0, 0] -= shift
    return Solution(x=x, u=u, p=p, lam=lam, residual=residual,
                    n_dof=system.matrix.shape[0])


def _cell_masses(mesh, order):
    """Cell mass matrices at the given order, shared between congruent
    cells (the scaled monomial Gram only depends on the shape)."""
    cache = {}
    out = []
    for c in range(mesh.n_cells):
        sig = cell_signature(mesh, c)
        m = cache.get(sig)
        if m is None:
            m = CellBasis(mesh, c, order).mass
            cache[sig] = m
        out.append(m)
    return out


def cell_l2_norm(u_like):
    """L2 norm over cells of a hybrid vector field's cell part."""
    mesh, k = u_like.mesh, u_like.k
    total = 0.0
    for c, mass in enumerate(_cell_masses(mesh, k)):
        cf = u_like.cell[c].reshape(3, -1)
        total += float(np.einsum("ad,de,ae->", cf, mass, cf))
    return np.sqrt(max(total, 0.0))


def pressure_l2_norm(p):
    """L2 norm over cells of a hybrid pressure's cell part."""
    mesh = p.mesh
    total = 0.0
    for c, mass in enumerate(_cell_masses(mesh, p.k - 1)):
        total += float(p.cell[c] @ mass @ p.cell[c])
    return np.sqrt(max(total, 0.0))


def pressure_mean(p):
    """Integral of the cell pressure over the (cut) domain."""
    mesh, k = p.mesh, p.k
    total = 0.0
    for c in range(mesh.n_cells):
        cb = CellBasis(mesh, c, k - 1)
        quad = cell_quadrature(mesh, c, k - 1)
        total += float(quad.weights @ (cb.eval(quad.points) @ p.cell[c]))
    return total


def compute_errors(u_d, u_ref, eta=None):
    """The relative energy- and L2-error quotients of a discrete field
    against a reference (normally the reduction of the exact solution).

    Each cell's local curl seminorm is weighted by 1/eta_T; eta defaults
    to ones (the first-order convention) and is set to the per-cell
    permeability in the second-order case.  The L2 quotient compares
    cell parts, unweighted.  Zero-reference quotients fall back to the
    absolute numerator.
    """
    if u_d.face_space != u_ref.face_space:
        raise ValueError("face space mismatch between discrete and reference")
    mesh = u_ref.mesh
    weights = None
    if eta is not None:
        weights = 1.0 / np.asarray(eta, dtype=float)
        if weights.shape != (mesh.n_cells,):
            raise ValueError("eta must supply one weight per cell")
    diff = HybridField(mesh, u_ref.k, u_d.cell - u_ref.cell,
                       u_d.face - u_ref.face, u_ref.pinned, u_ref.face_space)
    en_num = seminorm_curl(diff, cell_weights=weights)
    en_den = seminorm_curl(u_ref, cell_weights=weights)
    l2_num = cell_l2_norm(diff)
    l2_den = cell_l2_norm(u_ref)
    en = en_num / en_den if en_den > 0 else en_num
    l2 = l2_num / l2_den if l2_den > 0 else l2_num
    return en, l2
