"""Discrete covariant differential operators on double-form fields.

The covariant derivative is implemented once, on generic antisymmetric index
blocks (partial-derivative stencils plus analytic Christoffel corrections on
every slot); the exterior derivative, the codifferential and their
vector-block twins all derive from it.  Tensorial operators (curvature term,
trace, metric wedge, Hodge stars) are pointwise fiber-matrix applications
with conformal scalings.

Interior stencils are central second order; faces use one-sided 3-point
second-order stencils.  Compositions therefore lose smoothness of the
truncation error in a few node layers next to the boundary; refinement
studies measure norms over nodes at least `margin_layers` index steps away
from every face (default 4, covering fourth-order compositions), with rates
between successive nested grids evaluated on the coarser grid's retained
node set.
"""

from __future__ import annotations

import numpy as np

from . import algebra as alg
from . import multiindex as mi
from .charts import Chart, Face, Grid
from .errors import (
    DegreeMismatch,
    DegreeOverflow,
    DegreeUnderflow,
    DimensionMismatch,
)
from .fields import (
    BoundaryField,
    ConformalGeometry,
    DoubleFormField,
    apply_fiber,
    fiber_matrix,
    geometry_of,
)

DEFAULT_MARGIN_LAYERS = 4


# ---------------------------------------------------------------------------
# covariant derivative core (geometry-generic: full chart or face)

def _covariant_gradient(geo: ConformalGeometry, values: np.ndarray, k: int, m: int) -> np.ndarray:
    """All first covariant derivatives: shape (*shape, d0, CK, CM)."""
    d0 = geo.d0
    grads = np.stack([geo.partial(values, a) for a in range(d0)], axis=-3)
    form_entries = mi.replace_table(d0, k)
    vec_entries = mi.replace_table(d0, m)
    for a in range(d0):
        corr = np.zeros_like(values)
        for out_i, ip, c, in_i, sgn in form_entries:
            corr[..., out_i, :] += sgn * geo.gamma[..., c, a, ip][..., None] * values[..., in_i, :]
        for out_j, jp, c, in_j, sgn in vec_entries:
            corr[..., :, out_j] += sgn * geo.gamma[..., c, a, jp][..., None] * values[..., :, in_j]
        grads[..., a, :, :] -= corr
    return grads


def _d_raw(geo: ConformalGeometry, values: np.ndarray, k: int, m: int) -> np.ndarray:
    """Antisymmetrize the covariant gradient into the form block."""
    d0 = geo.d0
    grads = _covariant_gradient(geo, values, k, m)
    out = np.zeros(values.shape[:-2] + (mi.count(d0, k + 1), values.shape[-1]))
    for Ko, entries in enumerate(mi.alternation_table(d0, k)):
        for axis, sub, sgn in entries:
            out[..., Ko, :] += sgn * grads[..., axis, sub, :]
    return out


def _delta_raw(geo: ConformalGeometry, values: np.ndarray, k: int, m: int) -> np.ndarray:
    """Contract the covariant gradient into the leading form slot."""
    d0 = geo.d0
    grads = _covariant_gradient(geo, values, k, m)
    out = np.zeros(values.shape[:-2] + (mi.count(d0, k - 1), values.shape[-1]))
    prep = mi.prepend_table(d0, k - 1)
    for a in range(d0):
        for in_i, out_i, sgn in prep[a]:
            out[..., in_i, :] -= sgn * grads[..., a, out_i, :]
    return out * geo.inv_lam2[..., None, None]


def _transpose_raw(values: np.ndarray) -> np.ndarray:
    return np.swapaxes(values, -1, -2).copy()


# ---------------------------------------------------------------------------
# field-level first-order operators

def transpose_field(f: DoubleFormField) -> DoubleFormField:
    k, m = f.degrees
    return DoubleFormField(f.chart, f.grid, (m, k), _transpose_raw(f.values))


def symmetrize(f: DoubleFormField) -> DoubleFormField:
    return 0.5 * (f + transpose_field(f))


def d_nabla(f: DoubleFormField) -> DoubleFormField:
    k, m = f.degrees
    if k + 1 > f.chart.dim:
        raise DegreeOverflow("exterior derivative output exceeds dim")
    geo = geometry_of(f.chart, f.grid)
    return DoubleFormField(f.chart, f.grid, (k + 1, m), _d_raw(geo, f.values, k, m))


def d_nabla_v(f: DoubleFormField) -> DoubleFormField:
    k, m = f.degrees
    if m + 1 > f.chart.dim:
        raise DegreeOverflow("vector exterior derivative output exceeds dim")
    return transpose_field(d_nabla(transpose_field(f)))


def delta_nabla(f: DoubleFormField) -> DoubleFormField:
    k, m = f.degrees
    if k < 1:
        raise DegreeUnderflow("codifferential needs form degree >= 1")
    geo = geometry_of(f.chart, f.grid)
    return DoubleFormField(f.chart, f.grid, (k - 1, m), _delta_raw(geo, f.values, k, m))


def delta_nabla_v(f: DoubleFormField) -> DoubleFormField:
    k, m = f.degrees
    if m < 1:
        raise DegreeUnderflow("vector codifferential needs vector degree >= 1")
    return transpose_field(delta_nabla(transpose_field(f)))


# ---------------------------------------------------------------------------
# tensorial operators

def d_g(f: DoubleFormField) -> DoubleFormField:
    """Curvature correction term of the curl-curl operator.

    The orthonormal-frame contraction formula applied to the operative
    curvature value (see fields.operative_curvature_field): with that value
    equal to -kappa lambda^4 E2 and the inverse metric lambda^-2 delta, the
    formula reduces to a node-independent fiber matrix scaled by
    -kappa lambda^2.  On symmetric (1,1) fields this is +kappa g^(.), the
    sign that makes h_op annihilate metric Lie derivatives; on the metric
    field it gives -2 times the operative curvature.
    """
    k, m = f.degrees
    d = f.chart.dim
    if k + 1 > d or m + 1 > d:
        raise DegreeOverflow("curvature term output exceeds dim")
    geo = geometry_of(f.chart, f.grid)
    M = fiber_matrix("curvature", d, k, m)
    vals = apply_fiber(f.values, M, (mi.count(d, k + 1), mi.count(d, m + 1)))
    vals *= (-f.chart.kappa * geo.lam ** 2)[..., None, None]
    return DoubleFormField(f.chart, f.grid, (k + 1, m + 1), vals)


def d_g_star(f: DoubleFormField) -> DoubleFormField:
    """Pointwise metric adjoint of the curvature term.

    On (2,2) fields over the conformal chart this is +kappa trace."""
    k, m = f.degrees
    d = f.chart.dim
    if k < 1 or m < 1:
        raise DegreeUnderflow("adjoint curvature term needs degrees >= 1")
    geo = geometry_of(f.chart, f.grid)
    M = fiber_matrix("curvature", d, k - 1, m - 1)
    vals = apply_fiber(f.values, M.T, (mi.count(d, k - 1), mi.count(d, m - 1)))
    vals *= (-f.chart.kappa * geo.inv_lam2)[..., None, None]
    return DoubleFormField(f.chart, f.grid, (k - 1, m - 1), vals)


def trace_field(f: DoubleFormField) -> DoubleFormField:
    k, m = f.degrees
    if k < 1 or m < 1:
        raise DegreeUnderflow("trace needs both degrees >= 1")
    d = f.chart.dim
    geo = geometry_of(f.chart, f.grid)
    M = fiber_matrix("trace", d, k, m)
    vals = apply_fiber(f.values, M, (mi.count(d, k - 1), mi.count(d, m - 1)))
    vals *= geo.inv_lam2[..., None, None]
    return DoubleFormField(f.chart, f.grid, (k - 1, m - 1), vals)


def g_wedge_field(f: DoubleFormField) -> DoubleFormField:
    k, m = f.degrees
    d = f.chart.dim
    if k + 1 > d or m + 1 > d:
        raise DegreeOverflow("metric wedge output exceeds dim")
    geo = geometry_of(f.chart, f.grid)
    M = fiber_matrix("gwedge", d, k, m)
    vals = apply_fiber(f.values, M, (mi.count(d, k + 1), mi.count(d, m + 1)))
    vals *= (geo.lam ** 2)[..., None, None]
    return DoubleFormField(f.chart, f.grid, (k + 1, m + 1), vals)


def bianchi_field(f: DoubleFormField) -> DoubleFormField:
    k, m = f.degrees
    d = f.chart.dim
    if m < 1 or k + 1 > d:
        raise DegreeMismatch("Bianchi sum degrees out of range")
    cols = []
    n_in = mi.count(d, k) * mi.count(d, m)
    for idx in range(n_in):
        comps = np.zeros(n_in)
        comps[idx] = 1.0
        v = alg.DoubleFormValue(d, (k, m), comps.reshape(mi.count(d, k), mi.count(d, m)))
        cols.append(alg.bianchi(v).comps.ravel())
    M = np.array(cols).T
    vals = apply_fiber(f.values, M, (mi.count(d, k + 1), mi.count(d, m - 1)))
    return DoubleFormField(f.chart, f.grid, (k + 1, m - 1), vals)


def _star_scale(geo: ConformalGeometry, k: int) -> np.ndarray:
    return geo.orientation * geo.lam ** (geo.d0 - 2 * k)


def hodge_star_field(f):
    """Hodge dual on the form block of a field or boundary field."""
    k, m = f.degrees
    if isinstance(f, BoundaryField):
        geo = geometry_of(f.chart, f.grid, f.face)
    else:
        geo = geometry_of(f.chart, f.grid)
    d0 = geo.d0
    M = fiber_matrix("star", d0, k, m)
    vals = apply_fiber(f.values, M, (mi.count(d0, d0 - k), mi.count(d0, m)))
    vals = vals * _star_scale(geo, k)[..., None, None]
    if isinstance(f, BoundaryField):
        return BoundaryField(f.chart, f.grid, f.face, (d0 - k, m), vals)
    return DoubleFormField(f.chart, f.grid, (d0 - k, m), vals)


def hodge_star_v_field(f):
    k, m = f.degrees
    if isinstance(f, BoundaryField):
        geo = geometry_of(f.chart, f.grid, f.face)
    else:
        geo = geometry_of(f.chart, f.grid)
    d0 = geo.d0
    M = fiber_matrix("star_v", d0, k, m)
    vals = apply_fiber(f.values, M, (mi.count(d0, k), mi.count(d0, d0 - m)))
    vals = vals * _star_scale(geo, m)[..., None, None]
    if isinstance(f, BoundaryField):
        return BoundaryField(f.chart, f.grid, f.face, (k, d0 - m), vals)
    return DoubleFormField(f.chart, f.grid, (k, d0 - m), vals)


# ---------------------------------------------------------------------------
# second-order operators

def h_op(f: DoubleFormField) -> DoubleFormField:
    """Curl-curl type operator: the symmetrized double exterior derivative
    plus the curvature correction; annihilates metric Lie derivatives on
    constant-curvature charts."""
    out = 0.5 * (d_nabla_v(d_nabla(f)) + d_nabla(d_nabla_v(f)))
    return out + d_g(f)


def h_star_op(f: DoubleFormField) -> DoubleFormField:
    """Div-div type adjoint of h_op."""
    k, m = f.degrees
    if k < 1 or m < 1:
        raise DegreeUnderflow("adjoint needs both degrees >= 1")
    out = 0.5 * (delta_nabla(delta_nabla_v(f)) + delta_nabla_v(delta_nabla(f)))
    return out + d_g_star(f)


def f_op(f: DoubleFormField) -> DoubleFormField:
    """Mixed curl-div operator (exterior derivative after vector codifferential)."""
    return d_nabla(delta_nabla_v(f))


def f_star_op(f: DoubleFormField) -> DoubleFormField:
    """Mixed div-curl operator, the L2 dual of f_op."""
    return d_nabla_v(delta_nabla(f))


def f_sym_star_op(f: DoubleFormField) -> DoubleFormField:
    """Symmetrized f_star_op; dual to f_op restricted to symmetric fields."""
    return symmetrize(f_star_op(f))


def b_op(f: DoubleFormField) -> DoubleFormField:
    """Double bilaplacian; compositions leaving the degree range contribute zero."""
    k, m = f.degrees
    d = f.chart.dim
    out = None

    def acc(term):
        nonlocal out
        out = term if out is None else out + term

    if k + 1 <= d and m + 1 <= d:
        acc(h_star_op(h_op(f)))
    if k >= 1 and m >= 1:
        acc(h_op(h_star_op(f)))
    if m >= 1 and k + 1 <= d:
        acc(f_star_op(f_op(f)))
    if k >= 1 and m + 1 <= d:
        acc(f_op(f_star_op(f)))
    if out is None:
        raise DegreeMismatch("no admissible composition at these degrees")
    return out


# ---------------------------------------------------------------------------
# boundary projections

from functools import lru_cache


@lru_cache(maxsize=None)
def _pullback_pairs(d: int, k: int, axis: int) -> tuple[tuple[int, int], ...]:
    """(full_idx, intrinsic_idx) for k-subsets avoiding `axis`."""
    tangent = tuple(a for a in range(d) if a != axis)
    renum = {a: i for i, a in enumerate(tangent)}
    intr_index = mi.index_of(d - 1, k)
    pairs = []
    for i, I in enumerate(mi.subsets(d, k)):
        if axis in I:
            continue
        pairs.append((i, intr_index[tuple(renum[a] for a in I)]))
    return tuple(pairs)


def _face_slice(grid: Grid, face: Face):
    sl = [slice(None)] * grid.dim
    sl[face.axis] = 0 if face.side == 0 else grid.shape[face.axis] - 1
    return tuple(sl)


def _pullback_blocks(values: np.ndarray, d: int, k: int, m: int, axis: int) -> np.ndarray:
    rows = _pullback_pairs(d, k, axis)
    cols = _pullback_pairs(d, m, axis)
    out = np.zeros(values.shape[:-2] + (mi.count(d - 1, k), mi.count(d - 1, m)))
    for fi, ti in rows:
        for fj, tj in cols:
            out[..., ti, tj] = values[..., fi, fj]
    return out


def _contract_normal(values: np.ndarray, geo_face: ConformalGeometry,
                     d: int, k: int, face: Face, vector_block: bool) -> np.ndarray:
    """Contract the outward unit normal into one block (full-dim components)."""
    table = mi.interior_table(d, k)[face.axis]
    if vector_block:
        values = np.swapaxes(values, -1, -2)
    out = np.zeros(values.shape[:-2] + (mi.count(d, k - 1), values.shape[-1]))
    for in_i, out_i, sgn in table:
        out[..., out_i, :] += sgn * values[..., in_i, :]
    out *= (face.sign / geo_face.lam)[..., None, None]
    if vector_block:
        out = np.swapaxes(out, -1, -2)
    return out


def project_boundary(f: DoubleFormField, which: str, face: Face | None = None):
    """Mixed tangential/normal boundary projections: tt, nt, tn, nn.

    The first letter refers to the form block, the second to the vector
    block; n contracts the outward unit normal before pulling back.  With no
    face given, returns a dict over all faces.
    """
    if face is None:
        return {fc: project_boundary(f, which, fc) for fc in f.grid.faces()}
    if which not in ("tt", "nt", "tn", "nn"):
        raise ValueError(f"unknown projection {which!r}")
    d = f.chart.dim
    k, m = f.degrees
    kk = k - (1 if which[0] == "n" else 0)
    mm = m - (1 if which[1] == "n" else 0)
    if kk < 0 or mm < 0:
        raise DegreeUnderflow(f"projection {which} needs enough degree to contract")
    if kk > d - 1 or mm > d - 1:
        raise DegreeOverflow(f"projection {which} exceeds the face dimension")
    geo_face = geometry_of(f.chart, f.grid, face)
    vals = f.values[_face_slice(f.grid, face)]
    if which[0] == "n":
        vals = _contract_normal(vals, geo_face, d, k, face, vector_block=False)
    if which[1] == "n":
        vals = _contract_normal(vals, geo_face, d, m, face, vector_block=True)
    vals = _pullback_blocks(vals, d, kk, mm, face.axis)
    return BoundaryField(f.chart, f.grid, face, (kk, mm), vals)


def _project_or_none(f: DoubleFormField, which: str, face: Face):
    d = f.chart.dim
    k, m = f.degrees
    kk = k - (1 if which[0] == "n" else 0)
    mm = m - (1 if which[1] == "n" else 0)
    if kk < 0 or mm < 0 or kk > d - 1 or mm > d - 1:
        return None
    return project_boundary(f, which, face)


# boundary-intrinsic derivatives ------------------------------------------

def d_boundary(bf: BoundaryField) -> BoundaryField:
    k, m = bf.degrees
    d0 = bf.chart.dim - 1
    if k + 1 > d0:
        raise DegreeOverflow("face exterior derivative output exceeds face dim")
    geo = geometry_of(bf.chart, bf.grid, bf.face)
    return BoundaryField(bf.chart, bf.grid, bf.face, (k + 1, m),
                         _d_raw(geo, bf.values, k, m))


def d_boundary_v(bf: BoundaryField) -> BoundaryField:
    k, m = bf.degrees
    d0 = bf.chart.dim - 1
    if m + 1 > d0:
        raise DegreeOverflow("face vector exterior derivative exceeds face dim")
    t = BoundaryField(bf.chart, bf.grid, bf.face, (m, k), _transpose_raw(bf.values))
    return BoundaryField(bf.chart, bf.grid, bf.face, (k, m + 1),
                         _transpose_raw(d_boundary(t).values))


def delta_boundary(bf: BoundaryField) -> BoundaryField:
    k, m = bf.degrees
    if k < 1:
        raise DegreeUnderflow("face codifferential needs form degree >= 1")
    geo = geometry_of(bf.chart, bf.grid, bf.face)
    return BoundaryField(bf.chart, bf.grid, bf.face, (k - 1, m),
                         _delta_raw(geo, bf.values, k, m))


def delta_boundary_v(bf: BoundaryField) -> BoundaryField:
    k, m = bf.degrees
    if m < 1:
        raise DegreeUnderflow("face vector codifferential needs vector degree >= 1")
    t = BoundaryField(bf.chart, bf.grid, bf.face, (m, k), _transpose_raw(bf.values))
    return BoundaryField(bf.chart, bf.grid, bf.face, (k, m - 1),
                         _transpose_raw(delta_boundary(t).values))


def _d_boundary_or_none(bf):
    if bf is None or bf.degrees[0] + 1 > bf.chart.dim - 1:
        return None
    return d_boundary(bf)


def trace_boundary(bf: BoundaryField) -> BoundaryField:
    k, m = bf.degrees
    if k < 1 or m < 1:
        raise DegreeUnderflow("face trace needs both degrees >= 1")
    d0 = bf.chart.dim - 1
    geo = geometry_of(bf.chart, bf.grid, bf.face)
    M = fiber_matrix("trace", d0, k, m)
    vals = apply_fiber(bf.values, M, (mi.count(d0, k - 1), mi.count(d0, m - 1)))
    vals *= geo.inv_lam2[..., None, None]
    return BoundaryField(bf.chart, bf.grid, bf.face, (k - 1, m - 1), vals)


def g_wedge_boundary(bf: BoundaryField) -> BoundaryField:
    k, m = bf.degrees
    d0 = bf.chart.dim - 1
    if k + 1 > d0 or m + 1 > d0:
        raise DegreeOverflow("face metric wedge exceeds face dim")
    geo = geometry_of(bf.chart, bf.grid, bf.face)
    M = fiber_matrix("gwedge", d0, k, m)
    vals = apply_fiber(bf.values, M, (mi.count(d0, k + 1), mi.count(d0, m + 1)))
    vals *= (geo.lam ** 2)[..., None, None]
    return BoundaryField(bf.chart, bf.grid, bf.face, (k + 1, m + 1), vals)


def wedge_boundary(a: BoundaryField, b: BoundaryField) -> BoundaryField:
    if a.face != b.face:
        raise DimensionMismatch("boundary wedge needs a common face")
    d0 = a.chart.dim - 1
    k, m = a.degrees
    n, l = b.degrees
    if k + n > d0 or m + l > d0:
        raise DegreeOverflow("boundary wedge exceeds face dim")
    out = np.zeros(a.values.shape[:-2] + (mi.count(d0, k + n), mi.count(d0, m + l)))
    for fi, fj, fo, fs in mi.merge_table(d0, k, n):
        for vi, vj, vo, vs in mi.merge_table(d0, m, l):
            out[..., fo, vo] += fs * vs * a.values[..., fi, vi] * b.values[..., fj, vj]
    return BoundaryField(a.chart, a.grid, a.face, (k + n, m + l), out)


def face_curvature_scalar(chart: Chart, grid: Grid, face: Face) -> float:
    """Umbilic factor c with h0 = c g0 on a box face: -sign kappa x_face / 2."""
    lo, hi = grid.box[face.axis]
    x_face = hi if face.side == 1 else lo
    return -face.sign * chart.kappa * x_face / 2.0


def second_fundamental_field(chart: Chart, grid: Grid, face: Face) -> BoundaryField:
    """Scalar second fundamental form of a face as an intrinsic (1,1) field."""
    geo = geometry_of(chart, grid, face)
    c = face_curvature_scalar(chart, grid, face)
    d0 = chart.dim - 1
    vals = np.einsum("...,ij->...ij", c * geo.lam ** 2, np.eye(d0))
    return BoundaryField(chart, grid, face, (1, 1), vals)


# first-order boundary operators -------------------------------------------

def _half_diff(a: BoundaryField | None, b: BoundaryField | None, sign: int):
    """0.5 * (a + sign*b) with None meaning a degree-pruned zero term."""
    if a is None and b is None:
        return None
    if a is None:
        return 0.5 * sign * b
    if b is None:
        return 0.5 * a
    return 0.5 * (a + sign * b)


def _add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def boundary_t(f: DoubleFormField, face: Face) -> BoundaryField:
    """Mixed normal-derivative boundary operator paired with tt data."""
    k, m = f.degrees
    d = f.chart.dim
    t1 = _project_or_none(d_nabla(f), "nt", face) if k + 1 <= d else None
    p_nt = _project_or_none(f, "nt", face)
    t2 = _d_boundary_or_none(p_nt)
    first = _half_diff(t1, t2, -1)
    t3 = _project_or_none(d_nabla_v(f), "tn", face) if m + 1 <= d else None
    p_tn = _project_or_none(f, "tn", face)
    t4 = None
    if p_tn is not None and p_tn.degrees[1] + 1 <= d - 1:
        t4 = d_boundary_v(p_tn)
    second = _half_diff(t3, t4, -1)
    out = _add(first, second)
    if out is None:
        raise DegreeMismatch("boundary operator vanishes identically at these degrees")
    return out


def boundary_t_star(f: DoubleFormField, face: Face) -> BoundaryField:
    k, m = f.degrees
    t1 = _project_or_none(delta_nabla(f), "tn", face) if k >= 1 else None
    p_tn = _project_or_none(f, "tn", face)
    t2 = delta_boundary(p_tn) if p_tn is not None and p_tn.degrees[0] >= 1 else None
    first = _half_diff(t1, t2, +1)
    t3 = _project_or_none(delta_nabla_v(f), "nt", face) if m >= 1 else None
    p_nt = _project_or_none(f, "nt", face)
    t4 = delta_boundary_v(p_nt) if p_nt is not None and p_nt.degrees[1] >= 1 else None
    second = _half_diff(t3, t4, +1)
    out = _add(first, second)
    if out is None:
        raise DegreeMismatch("boundary operator vanishes identically at these degrees")
    return -1.0 * out


def boundary_f_star(f: DoubleFormField, face: Face) -> BoundaryField:
    k, m = f.degrees
    d = f.chart.dim
    t1 = _project_or_none(d_nabla_v(f), "nn", face) if m + 1 <= d else None
    p_nn = _project_or_none(f, "nn", face)
    t2 = None
    if p_nn is not None and p_nn.degrees[1] + 1 <= d - 1:
        t2 = d_boundary_v(p_nn)
    first = _half_diff(t1, t2, -1)
    t3 = _project_or_none(delta_nabla(f), "tt", face) if k >= 1 else None
    p_tt = _project_or_none(f, "tt", face)
    t4 = delta_boundary(p_tt) if p_tt is not None and p_tt.degrees[0] >= 1 else None
    second = _half_diff(t3, t4, +1)
    if second is not None:
        second = -1.0 * second
    out = _add(first, second)
    if out is None:
        raise DegreeMismatch("boundary operator vanishes identically at these degrees")
    return out


def boundary_f(f: DoubleFormField, face: Face) -> BoundaryField:
    k, m = f.degrees
    d = f.chart.dim
    t1 = _project_or_none(d_nabla(f), "nn", face) if k + 1 <= d else None
    p_nn = _project_or_none(f, "nn", face)
    t2 = _d_boundary_or_none(p_nn)
    first = _half_diff(t1, t2, -1)
    t3 = _project_or_none(delta_nabla_v(f), "tt", face) if m >= 1 else None
    p_tt = _project_or_none(f, "tt", face)
    t4 = None
    if p_tt is not None and p_tt.degrees[1] >= 1:
        t4 = delta_boundary_v(p_tt)
    second = _half_diff(t3, t4, +1)
    if second is not None:
        second = -1.0 * second
    out = _add(first, second)
    if out is None:
        raise DegreeMismatch("boundary operator vanishes identically at these degrees")
    return out


# ---------------------------------------------------------------------------
# inner products, norms, integration by parts

def l2_inner(f: DoubleFormField, g: DoubleFormField) -> float:
    """Volume L2 pairing: trapezoid quadrature with metric density and
    the conformal fiber Gram factor."""
    from .fields import _same_layout

    _same_layout(f, g)
    geo = geometry_of(f.chart, f.grid)
    k, m = f.degrees
    w = geo.quad * geo.gram_scale(k, m)
    point = np.einsum("...ij,...ij->...", f.values, g.values)
    return float(np.sum(point * w))


def boundary_l2_inner(bf: BoundaryField, bg: BoundaryField) -> float:
    if bf.face != bg.face or bf.degrees != bg.degrees:
        raise DegreeMismatch("boundary inner product mismatch")
    geo = geometry_of(bf.chart, bf.grid, bf.face)
    k, m = bf.degrees
    w = geo.quad * geo.gram_scale(k, m)
    point = np.einsum("...ij,...ij->...", bf.values, bg.values)
    return float(np.sum(point * w))


def l2_norm(f: DoubleFormField, margin_layers: int = 0) -> float:
    geo = geometry_of(f.chart, f.grid)
    k, m = f.degrees
    w = geo.quad * geo.gram_scale(k, m)
    if margin_layers:
        w = w * f.grid.margin_mask(margin_layers)
    point = np.einsum("...ij,...ij->...", f.values, f.values)
    return float(np.sqrt(max(float(np.sum(point * w)), 0.0)))


def max_norm(f: DoubleFormField, margin_layers: int = 0) -> float:
    geo = geometry_of(f.chart, f.grid)
    k, m = f.degrees
    point = np.sqrt(np.einsum("...ij,...ij->...", f.values, f.values))
    point = point * geo.lam ** (-(k + m))
    if margin_layers:
        mask = f.grid.margin_mask(margin_layers)
        if not mask.any():
            return 0.0
        return float(point[mask].max())
    return float(point.max())


def boundary_norm(bf: BoundaryField, margin_layers: int = 1) -> float:
    """Face L2 norm; edge/corner nodes excluded by default."""
    geo = geometry_of(bf.chart, bf.grid, bf.face)
    k, m = bf.degrees
    w = geo.quad * geo.gram_scale(k, m)
    if margin_layers:
        mask = np.zeros(geo.shape, dtype=bool)
        sl = tuple(slice(margin_layers, n - margin_layers) for n in geo.shape)
        if all(s.start < s.stop for s in sl):
            mask[sl] = True
        w = w * mask
    point = np.einsum("...ij,...ij->...", bf.values, bf.values)
    return float(np.sqrt(max(float(np.sum(point * w)), 0.0)))


def _flux_pair(a: DoubleFormField, b: DoubleFormField, wa: str, wb: str) -> float:
    total = 0.0
    for face in a.grid.faces():
        pa = _project_or_none(a, wa, face)
        pb = _project_or_none(b, wb, face)
        if pa is not None and pb is not None and pa.degrees == pb.degrees:
            total += boundary_l2_inner(pa, pb)
    return total


def _flux_d(a: DoubleFormField, b: DoubleFormField) -> float:
    """Boundary flux of the form-block derivative pair:
    <d a, b> - <a, delta b> = sum of (tt,nt) and (tn,nn) face pairings."""
    return _flux_pair(a, b, "tt", "nt") + _flux_pair(a, b, "tn", "nn")


def _flux_dv(a: DoubleFormField, b: DoubleFormField) -> float:
    """Boundary flux of the vector-block derivative pair."""
    return _flux_pair(a, b, "tt", "tn") + _flux_pair(a, b, "nt", "nn")


def boundary_integral_pairing(f: DoubleFormField, g: DoubleFormField, operator: str) -> float:
    """Boundary flux of the second-order integration-by-parts formula.

    Assembled from the first-order fluxes of each factor (the unpacked form
    of the boundary term); O(h^2) accurate, pruning degree-invalid pieces.
    """
    k, m = f.degrees
    d = f.chart.dim
    if operator == "H":
        total = 0.0
        if k + 1 <= d:
            total += _flux_dv(d_nabla(f), g)
        if m >= 0 and g.degrees[1] >= 1:
            total += _flux_d(f, delta_nabla_v(g))
        if m + 1 <= d:
            total += _flux_d(d_nabla_v(f), g)
        if g.degrees[0] >= 1:
            total += _flux_dv(f, delta_nabla(g))
        return 0.5 * total
    if operator == "F":
        total = 0.0
        if m >= 1:
            total += _flux_d(delta_nabla_v(f), g)
        if g.degrees[0] >= 1:
            total -= _flux_dv(delta_nabla(g), f)
        return total
    raise ValueError("operator must be 'H' or 'F'")


def ibp_residual(f: DoubleFormField, g: DoubleFormField, operator: str = "H") -> float:
    """Defect of the integration-by-parts formula; O(h) for general smooth
    fields, O(h^2) for fields supported away from the boundary."""
    if operator == "H":
        lhs = l2_inner(h_op(f), g)
        rhs = l2_inner(f, h_star_op(g))
    elif operator == "F":
        lhs = l2_inner(f_op(f), g)
        rhs = l2_inner(f, f_star_op(g))
    else:
        raise ValueError("operator must be 'H' or 'F'")
    return abs(lhs - rhs - boundary_integral_pairing(f, g, operator))
