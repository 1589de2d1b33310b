"""Solvers and checkers for the linearized stress equations.

The 2D route solves a generalized biharmonic equation for the Airy potential
and recovers the stress through the div-div operator; the direct route
assembles the fourth-order system with its full set of boundary rows and
solves in the least-squares minimum-norm sense (experimental, small grids).

Scalar reduction used by the 2D solver: with the conventions of this package
the potential equation reads

    (Delta_g + kappa)(Delta_g + 2 kappa) chi = starstar(source),

verified against the composed operator pipeline at second order (the flat
case is the classical biharmonic).  The recovered stress is
sigma = h_star_op(starstar(chi)); on flat charts its components satisfy the
classical relations sigma_11 = d22 chi, sigma_22 = d11 chi,
sigma_12 = -d12 chi.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import calculus as calc
from . import multiindex as mi
from .charts import Chart, Face, Grid
from .errors import (
    BasisMismatch,
    NotSymmetric,
    SolverDiverged,
    TooLarge,
    ValidationError,
    WrongDimension,
)
from .fields import (
    BoundaryField,
    DoubleFormField,
    geometry_of,
    metric_field,
    riemann_field,
)
from .saintvenant import (
    KillingBasis,
    _stack_symmetric,
    _sym_pairs,
    _unstack_symmetric,
    check_symmetric,
)

AIRY_LINEAR_COEFF = 3.0   # (Delta + kappa)(Delta + 2 kappa)
AIRY_CONSTANT_COEFF = 2.0
DIRECT_SOLVE_MAX_UNKNOWNS = 50000


# ---------------------------------------------------------------------------
# data carriers

@dataclass
class CurvatureSource:
    """An algebraic-curvature (2,2) source field.

    is_image_verified is True only for sources constructed as the image of
    the curl-curl operator (the default source is); user sources are loaded
    as 'unverified' and reports say so.
    """

    field: DoubleFormField
    is_image_verified: bool = False

    def __post_init__(self):
        if self.field.degrees != (2, 2):
            raise ValidationError("curvature source must be a (2,2) field")
        vals = self.field.values
        sym = np.abs(vals - np.swapaxes(vals, -1, -2)).max()
        scale = max(np.abs(vals).max(), 1.0)
        if sym > 1e-10 * scale:
            raise ValidationError("curvature source is not symmetric")
        bia = calc.l2_norm(_bianchi_or_zero_field(self.field))
        if bia > 1e-10 * max(calc.l2_norm(self.field), 1.0):
            raise ValidationError("curvature source violates the Bianchi sum")


def _bianchi_or_zero_field(f: DoubleFormField) -> DoubleFormField:
    k, m = f.degrees
    if m < 1 or k + 1 > f.chart.dim:
        return 0.0 * f
    return calc.bianchi_field(f)


def default_source(chart: Chart, grid: Grid) -> CurvatureSource:
    """The canonical incompatibility source: -2 times the chart curvature.

    Lies in the image of the curl-curl operator (it is h_op applied to the
    negated metric field), and its double Hodge dual is the constant
    -2 kappa.
    """
    return CurvatureSource(-2.0 * riemann_field(chart, grid), is_image_verified=True)


@dataclass
class TractionData:
    """Boundary traction: normal-normal scalar rho and tangential-normal
    1-form tau, per face."""

    rho: dict[Face, BoundaryField]
    tau: dict[Face, BoundaryField]

    @staticmethod
    def zero(chart: Chart, grid: Grid) -> "TractionData":
        rho, tau = {}, {}
        d0 = chart.dim - 1
        for face in grid.faces():
            shape = grid.face_shape(face)
            rho[face] = BoundaryField(chart, grid, face, (0, 0),
                                      np.zeros(shape + (1, 1)))
            tau[face] = BoundaryField(chart, grid, face, (1, 0),
                                      np.zeros(shape + (d0, 1)))
        return TractionData(rho, tau)

    @staticmethod
    def constant_rho(chart: Chart, grid: Grid, value: float) -> "TractionData":
        out = TractionData.zero(chart, grid)
        for face in grid.faces():
            out.rho[face].values[...] = value
        return out

    @staticmethod
    def from_stress(sigma: DoubleFormField) -> "TractionData":
        rho = calc.project_boundary(sigma, "nn")
        tau = calc.project_boundary(sigma, "tn")
        return TractionData(rho, tau)


# ---------------------------------------------------------------------------
# 2D Airy route

def airy_rhs(chart: Chart, grid: Grid, source: CurvatureSource | None = None) -> DoubleFormField:
    """Double Hodge dual of the curvature source as a scalar field.

    With the default source this is the constant -2 kappa."""
    if chart.dim != 2:
        raise WrongDimension("the Airy route needs dim 2")
    if source is None:
        source = default_source(chart, grid)
    return calc.hodge_star_v_field(calc.hodge_star_field(source.field))


@dataclass
class AiryBC:
    """Dirichlet and outward-normal-derivative data per face."""

    dirichlet: dict[Face, np.ndarray]
    neumann: dict[Face, np.ndarray]

    @staticmethod
    def zero(chart: Chart, grid: Grid) -> "AiryBC":
        dir_, neu = {}, {}
        for face in grid.faces():
            shape = grid.face_shape(face)
            dir_[face] = np.zeros(shape)
            neu[face] = np.zeros(shape)
        return AiryBC(dir_, neu)

    @staticmethod
    def from_functions(chart: Chart, grid: Grid, chi_fn, grad_fn) -> "AiryBC":
        """Sample chi and its g-unit outward normal derivative on each face."""
        dir_, neu = {}, {}
        for face in grid.faces():
            X = grid.face_coords(face)
            geo = geometry_of(chart, grid, face)
            dir_[face] = chi_fn(X)
            g = grad_fn(X)
            neu[face] = face.sign * g[..., face.axis] / geo.lam
        return AiryBC(dir_, neu)


def _second_difference(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, -2.0)
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h ** 2


def airy_solve(
    chart: Chart,
    grid: Grid,
    rhs,
    bc: AiryBC | None = None,
    rel_tol: float = 1e-10,
) -> tuple[DoubleFormField, dict]:
    """Solve the generalized biharmonic potential problem in 2D.

    Clamped-plate scheme: one ghost layer per face carries the normal
    derivative data; the composed 13-point operator uses central second
    differences throughout, giving second-order convergence.  Direct sparse
    solve; unique solution under Dirichlet data.
    """
    if chart.dim != 2:
        raise WrongDimension("the Airy solver needs dim 2")
    if bc is None:
        bc = AiryBC.zero(chart, grid)
    if isinstance(rhs, DoubleFormField):
        rhs_arr = rhs.values[..., 0, 0]
    else:
        rhs_arr = np.asarray(rhs, dtype=float)
        if rhs_arr.shape != grid.shape:
            raise ValidationError("rhs shape mismatch")
    if not np.all(np.isfinite(rhs_arr)):
        raise ValidationError("rhs not finite")
    n0, n1 = grid.shape
    h0, h1 = grid.spacings
    N = n0 * n1
    geo = geometry_of(chart, grid)
    kappa = chart.kappa

    def flat(i, j):
        return i * n1 + j

    # ghost unknowns: one per non-corner boundary node
    ghosts = {}
    for face in grid.faces():
        t_n = n1 if face.axis == 0 else n0
        for t in range(1, t_n - 1):
            ghosts[(face, t)] = N + len(ghosts)
    G = len(ghosts)

    def node_of_face(face: Face, t: int):
        b = 0 if face.side == 0 else (n0 - 1 if face.axis == 0 else n1 - 1)
        return (b, t) if face.axis == 0 else (t, b)

    # inner Laplace-Beltrami rows on main nodes (ghost closure at faces)
    rows, cols, vals = [], [], []
    lam2_inv = geo.inv_lam2

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    for i in range(n0):
        for j in range(n1):
            r = flat(i, j)
            w = lam2_inv[i, j]
            boundary_axes = [(0, i), (1, j)]
            n_faces = len(grid.node_faces((i, j)))
            if n_faces >= 2:
                continue  # corner: row never read by the outer operator
            # axis 0
            if 0 < i < n0 - 1:
                add(r, flat(i - 1, j), w / h0 ** 2)
                add(r, flat(i, j), -2.0 * w / h0 ** 2)
                add(r, flat(i + 1, j), w / h0 ** 2)
            else:
                face = Face(0, 0 if i == 0 else 1)
                gidx = ghosts[(face, j)]
                inner = flat(1, j) if i == 0 else flat(n0 - 2, j)
                add(r, gidx, w / h0 ** 2)
                add(r, flat(i, j), -2.0 * w / h0 ** 2)
                add(r, inner, w / h0 ** 2)
            # axis 1
            if 0 < j < n1 - 1:
                add(r, flat(i, j - 1), w / h1 ** 2)
                add(r, flat(i, j), -2.0 * w / h1 ** 2)
                add(r, flat(i, j + 1), w / h1 ** 2)
            else:
                face = Face(1, 0 if j == 0 else 1)
                gidx = ghosts[(face, i)]
                inner = flat(i, 1) if j == 0 else flat(i, n1 - 2)
                add(r, gidx, w / h1 ** 2)
                add(r, flat(i, j), -2.0 * w / h1 ** 2)
                add(r, inner, w / h1 ** 2)
    lap_inner = sp.coo_matrix((vals, (rows, cols)), shape=(N, N + G)).tocsr()

    ident_main = sp.hstack([sp.identity(N, format="csr"),
                            sp.csr_matrix((N, G))], format="csr")
    A1 = lap_inner + (2.0 * kappa) * ident_main  # inner factor (Delta + 2k)

    # outer factor rows at interior nodes only
    interior = [flat(i, j) for i in range(1, n0 - 1) for j in range(1, n1 - 1)]
    rows2, cols2, vals2 = [], [], []
    for r_out, rc in enumerate(interior):
        i, j = divmod(rc, n1)
        w = lam2_inv[i, j]
        stencil = [((i - 1, j), w / h0 ** 2), ((i + 1, j), w / h0 ** 2),
                   ((i, j - 1), w / h1 ** 2), ((i, j + 1), w / h1 ** 2),
                   ((i, j), -2.0 * w / h0 ** 2 - 2.0 * w / h1 ** 2)]
        for (ii, jj), v in stencil:
            rows2.append(r_out)
            cols2.append(flat(ii, jj))
            vals2.append(v)
        rows2.append(r_out)
        cols2.append(rc)
        vals2.append(kappa)  # + kappa at the same node
    outer = sp.coo_matrix((vals2, (rows2, cols2)), shape=(len(interior), N)).tocsr()
    L_int = outer @ A1  # (Delta + kappa)(Delta + 2 kappa) at interior nodes

    # boundary rows
    brow, bcol, bval, brhs = [], [], [], []
    row_id = 0
    dirichlet_nodes = sorted({
        (i, j) for i in range(n0) for j in range(n1)
        if grid.node_faces((i, j))
    })
    for (i, j) in dirichlet_nodes:
        faces = grid.node_faces((i, j))
        face = faces[0]
        t = j if face.axis == 0 else i
        brow.append(row_id)
        bcol.append(flat(i, j))
        bval.append(1.0)
        brhs.append(float(bc.dirichlet[face][t]))
        row_id += 1
    for (face, t), gidx in ghosts.items():
        (i, j) = node_of_face(face, t)
        h = h0 if face.axis == 0 else h1
        lam = geo.lam[i, j]
        inner = (flat(i - face.sign, j) if face.axis == 0
                 else flat(i, j - face.sign))
        coef = face.sign / (2.0 * h * lam)
        brow.append(row_id)
        bcol.append(gidx)
        bval.append(coef)
        brow.append(row_id)
        bcol.append(inner)
        bval.append(-coef)
        brhs.append(float(bc.neumann[face][t]))
        row_id += 1
    B = sp.coo_matrix((bval, (brow, bcol)), shape=(row_id, N + G)).tocsr()

    M = sp.vstack([L_int, B], format="csc")
    b = np.concatenate([rhs_arr.ravel()[interior], np.array(brhs)])
    if M.shape[0] != M.shape[1]:
        raise SolverDiverged(
            f"assembly produced a {M.shape[0]}x{M.shape[1]} system"
        )
    try:
        lu = spla.splu(M)
        x = lu.solve(b)
    except RuntimeError as exc:
        raise SolverDiverged(f"sparse factorization failed: {exc}") from exc
    resid = np.linalg.norm(M @ x - b) / max(np.linalg.norm(b), 1e-300)
    if not np.all(np.isfinite(x)) or resid > rel_tol:
        raise SolverDiverged(f"relative residual {resid:.3e} above {rel_tol:.1e}")
    chi = DoubleFormField(chart, grid, (0, 0),
                          x[:N].reshape(grid.shape)[..., None, None])
    report = {
        "unknowns": int(N + G),
        "relative_residual": float(resid),
        "solver": "sparse-lu",
    }
    return chi, report


def stress_from_airy(chi: DoubleFormField) -> DoubleFormField:
    """Stress recovery from an Airy potential: div-div of the double dual."""
    if chi.chart.dim != 2:
        raise WrongDimension("Airy stress recovery needs dim 2")
    psi = calc.hodge_star_v_field(calc.hodge_star_field(chi))
    return calc.h_star_op(psi)


# ---------------------------------------------------------------------------
# residual reports

def stress_residuals(
    sigma: DoubleFormField,
    source: CurvatureSource | None = None,
    traction: TractionData | None = None,
    margin_layers: int = calc.DEFAULT_MARGIN_LAYERS,
) -> dict:
    """Interior and boundary residuals of the first-order stress system."""
    check_symmetric(sigma)
    chart, grid = sigma.chart, sigma.grid
    if source is None:
        source = default_source(chart, grid)
    if traction is None:
        traction = TractionData.zero(chart, grid)
    div = calc.delta_nabla(sigma)
    incompat = calc.h_op(sigma) - source.field
    out = {
        "divergence_l2": calc.l2_norm(div, margin_layers),
        "incompatibility_l2": calc.l2_norm(incompat, margin_layers),
        "source_image_verified": source.is_image_verified,
    }
    rho_res, tau_res, tstar_res, f_res = [], [], [], []
    for face in grid.faces():
        rho = traction.rho[face]
        tau = traction.tau[face]
        rho_res.append(calc.boundary_norm(
            calc.project_boundary(sigma, "nn", face) - rho))
        tau_res.append(calc.boundary_norm(
            calc.project_boundary(sigma, "tn", face) - tau))
        # derived boundary identities for divergence-free symmetric fields
        want_ts = -1.0 * calc.delta_boundary(tau)
        ts = calc.boundary_t_star(sigma, face)
        tstar_res.append(calc.boundary_norm(ts - want_ts))
        ff = calc.boundary_f(sigma, face)
        want_f = -1.0 * calc.d_boundary(rho)
        if chart.dim >= 3:
            h0 = calc.second_fundamental_field(chart, grid, face)
            want_f = want_f - 0.5 * calc.trace_boundary(calc.wedge_boundary(h0, tau))
        f_res.append(calc.boundary_norm(ff - want_f))
    out["traction_rho_max"] = max(rho_res)
    out["traction_tau_max"] = max(tau_res)
    out["derived_tstar_max"] = max(tstar_res)
    out["derived_f_max"] = max(f_res)
    return out


def traction_compatibility(
    traction: TractionData, killing: KillingBasis
) -> list[float]:
    """Boundary pairings of the traction data against each Killing field.

    All small means the traction passes the solvability obstruction."""
    chart, grid = killing.chart, killing.grid
    some_face = next(iter(traction.rho))
    if traction.rho[some_face].grid != grid:
        raise BasisMismatch("traction and Killing basis on different grids")
    out = []
    for omega in killing.fields:
        total = 0.0
        for face in grid.faces():
            nt = calc.project_boundary(omega, "nt", face)
            tt = calc.project_boundary(omega, "tt", face)
            total += calc.boundary_l2_inner(traction.rho[face], nt)
            total += calc.boundary_l2_inner(traction.tau[face], tt)
        out.append(float(total))
    return out


# ---------------------------------------------------------------------------
# direct fourth-order solve (experimental)

def _direct_row_fields(sigma: DoubleFormField, source_field: DoubleFormField | None):
    """All equation blocks of the fourth-order system for one stress field."""
    chart, grid = sigma.chart, sigma.grid
    blocks = [("interior", _stack_symmetric(calc.b_op(sigma)))]
    h_sig = calc.h_op(sigma)
    for face in grid.faces():
        blocks.append((f"pnn{face.axis}{face.side}",
                       calc.project_boundary(sigma, "nn", face).values.ravel()))
        blocks.append((f"ptn{face.axis}{face.side}",
                       calc.project_boundary(sigma, "tn", face).values.ravel()))
        blocks.append((f"tstar{face.axis}{face.side}",
                       calc.boundary_t_star(sigma, face).values.ravel()))
        blocks.append((f"f{face.axis}{face.side}",
                       calc.boundary_f(sigma, face).values.ravel()))
        blocks.append((f"pnnH{face.axis}{face.side}",
                       calc.project_boundary(h_sig, "nn", face).values.ravel()))
        blocks.append((f"tstarH{face.axis}{face.side}",
                       calc.boundary_t_star(h_sig, face).values.ravel()))
    return blocks


def _interior_rows_mask(grid: Grid, nsym: int) -> np.ndarray:
    mask = grid.interior_mask().ravel()
    return np.concatenate([mask for _ in range(nsym)])


def assemble_stress_system(chart: Chart, grid: Grid) -> tuple[sp.csr_matrix, dict]:
    """Probe the fourth-order stress system into a sparse matrix.

    Columns are stacked symmetric components; rows are the interior
    fourth-order equations followed by six boundary blocks per face.
    """
    d = chart.dim
    nsym = len(_sym_pairs(d))
    N = int(np.prod(grid.shape))
    n_unknowns = nsym * N
    if n_unknowns > DIRECT_SOLVE_MAX_UNKNOWNS:
        raise TooLarge(f"{n_unknowns} unknowns exceed the direct-solve cap")
    imask = _interior_rows_mask(grid, nsym)

    rows_idx, cols_idx, vals = [], [], []
    layout = None
    for idx in range(n_unknowns):
        e = np.zeros(n_unknowns)
        e[idx] = 1.0
        sig = _unstack_symmetric(chart, grid, e)
        blocks = _direct_row_fields(sig, None)
        pieces = []
        lay = []
        for name, arr in blocks:
            flatv = arr.ravel()
            if name == "interior":
                flatv = flatv[imask]
            pieces.append(flatv)
            lay.append((name, len(flatv)))
        col = np.concatenate(pieces)
        nz = np.nonzero(col)[0]
        rows_idx.append(nz)
        cols_idx.append(np.full(len(nz), idx))
        vals.append(col[nz])
        layout = lay
    n_rows = sum(ln for _, ln in layout)
    M = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows_idx), np.concatenate(cols_idx))),
        shape=(n_rows, n_unknowns),
    ).tocsr()
    return M, {"blocks": layout}


def _direct_rhs(
    chart: Chart, grid: Grid, source: CurvatureSource, traction: TractionData,
    layout: dict,
) -> np.ndarray:
    nsym = len(_sym_pairs(chart.dim))
    imask = _interior_rows_mask(grid, nsym)
    hstar_r = calc.h_star_op(source.field)
    pieces = {"interior": _stack_symmetric(hstar_r)[imask]}
    for face in grid.faces():
        rho = traction.rho[face]
        tau = traction.tau[face]
        key = f"{face.axis}{face.side}"
        pieces["pnn" + key] = rho.values.ravel()
        pieces["ptn" + key] = tau.values.ravel()
        pieces["tstar" + key] = (-1.0 * calc.delta_boundary(tau)).values.ravel()
        want_f = -1.0 * calc.d_boundary(rho)
        if chart.dim >= 3:
            h0 = calc.second_fundamental_field(chart, grid, face)
            want_f = want_f - 0.5 * calc.trace_boundary(calc.wedge_boundary(h0, tau))
        pieces["f" + key] = want_f.values.ravel()
        pieces["pnnH" + key] = calc.project_boundary(source.field, "nn", face).values.ravel()
        pieces["tstarH" + key] = calc.boundary_t_star(source.field, face).values.ravel()
    return np.concatenate([pieces[name] for name, _ in layout["blocks"]])


def solve_stress_direct(
    chart: Chart,
    grid: Grid,
    source: CurvatureSource | None = None,
    traction: TractionData | None = None,
    manufactured: DoubleFormField | None = None,
    rel_tol: float = 1e-10,
) -> tuple[DoubleFormField, dict]:
    """Least-squares minimum-norm solve of the fourth-order stress system.

    With `manufactured` given, the right-hand side is the system applied to
    that field (a consistent manufactured-equilibrium run); otherwise the
    right-hand side is assembled from the curvature source and traction data.
    Residuals of the original first-order system are reported through
    stress_residuals.
    """
    if source is None:
        source = default_source(chart, grid)
    if traction is None:
        traction = TractionData.zero(chart, grid)
    M, layout = assemble_stress_system(chart, grid)
    if manufactured is not None:
        check_symmetric(manufactured)
        b = M @ _stack_symmetric(manufactured)
    else:
        b = _direct_rhs(chart, grid, source, traction, layout)
    x = np.zeros(M.shape[1])
    itn = 0
    for _ in range(3):
        r = b - M @ x
        res = spla.lsmr(M, r, atol=rel_tol, btol=rel_tol, maxiter=20 * M.shape[1])
        x = x + res[0]
        itn += res[2]
        if np.linalg.norm(M.T @ (b - M @ x)) <= rel_tol * max(np.linalg.norm(b), 1e-300):
            break
    resid = float(np.linalg.norm(M @ x - b) / max(np.linalg.norm(b), 1e-300))
    sigma = _unstack_symmetric(chart, grid, x)
    report = {
        "unknowns": int(M.shape[1]),
        "rows": int(M.shape[0]),
        "iterations": int(itn),
        "relative_residual": resid,
        "residual_table": stress_residuals(sigma, source, traction),
    }
    return sigma, report


def potential_3d(
    sigma: DoubleFormField,
    manufactured_dual: DoubleFormField | None = None,
    rel_tol: float = 1e-10,
) -> tuple[DoubleFormField, dict]:
    """Stress potential in 3D through the dual stress problem (experimental).

    The double Hodge dual of the stress becomes the source of a dual
    fourth-order problem with zero traction; the potential is the double dual
    of that solution, reported with its defect norms and the exterior-derivative
    gauge residual.
    """
    chart, grid = sigma.chart, sigma.grid
    if chart.dim != 3:
        raise WrongDimension("the potential route needs dim 3")
    if max(grid.shape) > 17:
        raise TooLarge("potential route is capped at 17^3 grids")
    check_symmetric(sigma)
    Sigma = calc.hodge_star_v_field(calc.hodge_star_field(sigma))
    source = CurvatureSource(Sigma, is_image_verified=manufactured_dual is not None)
    if manufactured_dual is not None:
        chi, rep = solve_stress_direct(chart, grid, source=source,
                                       manufactured=manufactured_dual,
                                       rel_tol=rel_tol)
    else:
        chi, rep = solve_stress_direct(chart, grid, source=source,
                                       rel_tol=rel_tol)
    psi = calc.hodge_star_v_field(calc.hodge_star_field(chi))
    defect = calc.h_star_op(psi) - sigma
    report = {
        "solver": rep,
        "potential_defect_l2": calc.l2_norm(defect, calc.DEFAULT_MARGIN_LAYERS),
        "gauge_d_psi_l2": calc.l2_norm(calc.d_nabla(psi), calc.DEFAULT_MARGIN_LAYERS),
    }
    return psi, report
