"""Pointwise multilinear algebra of double forms.

A double form of bidegree (k, m) over a d-dimensional inner-product space is
antisymmetric separately in a k-index "form" block and an m-index "vector"
block.  Components are stored as a C(d,k) x C(d,m) matrix over pairs of
strictly increasing multi-indices, lexicographic, form block major.

Fiber inner products use the determinant-of-Gram convention on both blocks:
the increasing-index basis is orthonormal for the Euclidean metric, and for a
general metric the Gram matrix of a block is the matrix of minors of the
inverse metric.  This convention is applied consistently everywhere (Hodge
stars, traces, adjoints), so identity checks are insensitive to the overall
normalization.

Everything here is exact pointwise arithmetic: no grids, no derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import multiindex as mi
from .errors import (
    DegreeMismatch,
    DegreeOverflow,
    DegreeUnderflow,
    DimensionMismatch,
)


@dataclass
class DoubleFormValue:
    """Fiber value of a (k, m) double form in dimension d.

    comps has shape (C(d,k), C(d,m)); flattening row-major gives the
    form-block-major component sequence used by the field file format.
    """

    dim: int
    degrees: tuple[int, int]
    comps: np.ndarray

    def __post_init__(self):
        k, m = self.degrees
        if not (0 <= k <= self.dim and 0 <= m <= self.dim):
            raise DegreeOverflow(
                f"degrees {self.degrees} out of range for dim {self.dim}"
            )
        self.comps = np.asarray(self.comps, dtype=float)
        expected = (mi.count(self.dim, k), mi.count(self.dim, m))
        if self.comps.shape != expected:
            raise DimensionMismatch(
                f"component shape {self.comps.shape}, expected {expected}"
            )
        if not np.all(np.isfinite(self.comps)):
            raise ValueError("non-finite components")

    def __add__(self, other: "DoubleFormValue") -> "DoubleFormValue":
        _check_same(self, other)
        return DoubleFormValue(self.dim, self.degrees, self.comps + other.comps)

    def __sub__(self, other: "DoubleFormValue") -> "DoubleFormValue":
        _check_same(self, other)
        return DoubleFormValue(self.dim, self.degrees, self.comps - other.comps)

    def __mul__(self, c: float) -> "DoubleFormValue":
        return DoubleFormValue(self.dim, self.degrees, self.comps * c)

    __rmul__ = __mul__

    def __neg__(self) -> "DoubleFormValue":
        return DoubleFormValue(self.dim, self.degrees, -self.comps)

    def norm(self) -> float:
        """Euclidean norm of the raw components."""
        return float(np.linalg.norm(self.comps))


def zero_value(dim: int, k: int, m: int) -> DoubleFormValue:
    return DoubleFormValue(dim, (k, m), np.zeros((mi.count(dim, k), mi.count(dim, m))))


def basis_value(dim: int, I: tuple[int, ...], J: tuple[int, ...]) -> DoubleFormValue:
    """The basis element dx^I (x) dx^J."""
    k, m = len(I), len(J)
    v = zero_value(dim, k, m)
    v.comps[mi.index_of(dim, k)[tuple(I)], mi.index_of(dim, m)[tuple(J)]] = 1.0
    return v


@dataclass
class MetricValue:
    """Inner product data at a point: g, its inverse and volume density."""

    dim: int
    g: np.ndarray
    g_inv: np.ndarray = field(default=None)  # type: ignore[assignment]
    det_sqrt: float = 0.0

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float)
        if self.g.shape != (self.dim, self.dim):
            raise DimensionMismatch("metric shape mismatch")
        if np.linalg.norm(self.g - self.g.T) > 1e-14 * max(np.linalg.norm(self.g), 1.0):
            raise ValueError("metric not symmetric")
        eigs = np.linalg.eigvalsh(self.g)
        if eigs.min() <= 0:
            raise ValueError("metric not positive definite")
        if self.g_inv is None:
            self.g_inv = np.linalg.inv(self.g)
        else:
            self.g_inv = np.asarray(self.g_inv, dtype=float)
        if np.linalg.norm(self.g @ self.g_inv - np.eye(self.dim)) > 1e-12:
            raise ValueError("g_inv is not the inverse of g")
        if not self.det_sqrt:
            self.det_sqrt = float(np.sqrt(np.linalg.det(self.g)))


def euclidean_metric(dim: int) -> MetricValue:
    return MetricValue(dim, np.eye(dim))


def _check_same(a: DoubleFormValue, b: DoubleFormValue):
    if a.dim != b.dim:
        raise DimensionMismatch(f"dims {a.dim} != {b.dim}")
    if a.degrees != b.degrees:
        raise DegreeMismatch(f"degrees {a.degrees} != {b.degrees}")


def _check_dim(a: DoubleFormValue, metric: MetricValue):
    if a.dim != metric.dim:
        raise DimensionMismatch("value and metric dimensions differ")


# ---------------------------------------------------------------------------
# graded algebra

def wedge(a: DoubleFormValue, b: DoubleFormValue) -> DoubleFormValue:
    """Graded wedge product, acting blockwise on form and vector parts.

    Satisfies a^b = (-1)^(k n + m l) b^a for bidegrees (k,m) and (n,l).
    """
    if a.dim != b.dim:
        raise DimensionMismatch(f"dims {a.dim} != {b.dim}")
    d = a.dim
    k, m = a.degrees
    n, l = b.degrees
    if k + n > d or m + l > d:
        raise DegreeOverflow(
            f"wedge degrees ({k + n},{m + l}) exceed dim {d}"
        )
    out = zero_value(d, k + n, m + l)
    form_entries = mi.merge_table(d, k, n)
    vec_entries = mi.merge_table(d, m, l)
    for fi, fj, fo, fs in form_entries:
        for vi, vj, vo, vs in vec_entries:
            out.comps[fo, vo] += fs * vs * a.comps[fi, vi] * b.comps[fj, vj]
    return out


def wedge_or_zero(a: DoubleFormValue, b: DoubleFormValue) -> DoubleFormValue:
    """Wedge with the zero-space convention for overflowing degrees."""
    d = a.dim
    k, m = a.degrees
    n, l = b.degrees
    if k + n > d or m + l > d:
        return zero_value(d, min(k + n, d), min(m + l, d))
    return wedge(a, b)


def transpose(a: DoubleFormValue) -> DoubleFormValue:
    """Swap the form and vector blocks; an involution."""
    k, m = a.degrees
    return DoubleFormValue(a.dim, (m, k), a.comps.T.copy())


def bianchi(a: DoubleFormValue) -> DoubleFormValue:
    """Bianchi sum: cycle one vector-block slot into the form block.

    Maps (k, m) to (k+1, m-1).  Its kernel on (1,1) forms is the symmetric
    forms; on (2,2) forms it is the algebraic curvatures.
    """
    d = a.dim
    k, m = a.degrees
    if m < 1:
        raise DegreeUnderflow("bianchi sum needs vector degree >= 1")
    if k + 1 > d:
        raise DegreeOverflow("bianchi sum output exceeds dim")
    out = zero_value(d, k + 1, m - 1)
    alt = mi.alternation_table(d, k)
    prep = mi.prepend_table(d, m - 1)
    # out[K; L] = sum_p (-1)^p a(K minus K_p ; K_p, L)
    for Ko, entries in enumerate(alt):
        for axis, sub, s_alt in entries:
            for Li, Jo, s_pre in prep[axis]:
                out.comps[Ko, Li] += s_alt * s_pre * a.comps[sub, Jo]
    return out


def bianchi_v(a: DoubleFormValue) -> DoubleFormValue:
    """Vector-block Bianchi sum, defined through transposition."""
    return transpose(bianchi(transpose(a)))


def bianchi_or_zero(a: DoubleFormValue) -> DoubleFormValue:
    """Bianchi sum with the zero-space convention for overflowing output."""
    k, m = a.degrees
    if m < 1 or k + 1 > a.dim:
        return zero_value(a.dim, min(k + 1, a.dim), max(m - 1, 0))
    return bianchi(a)


def gram(metric: MetricValue, k: int) -> np.ndarray:
    """Gram matrix of the k-block fiber inner product (minors of g_inv)."""
    subs = mi.subsets(metric.dim, k)
    G = np.empty((len(subs), len(subs)))
    for i, I in enumerate(subs):
        for j, J in enumerate(subs):
            G[i, j] = np.linalg.det(metric.g_inv[np.ix_(I, J)]) if k else 1.0
    return G


def inner(a: DoubleFormValue, b: DoubleFormValue, metric: MetricValue) -> float:
    """Fiber inner product induced by the metric on both blocks."""
    _check_same(a, b)
    _check_dim(a, metric)
    k, m = a.degrees
    Gk = gram(metric, k)
    Gm = gram(metric, m)
    return float(np.einsum("ij,ik,kl,jl->", a.comps, Gk, b.comps, Gm))


def norm_g(a: DoubleFormValue, metric: MetricValue) -> float:
    return float(np.sqrt(max(inner(a, a, metric), 0.0)))


def hodge_star(a: DoubleFormValue, metric: MetricValue, orientation: int = 1) -> DoubleFormValue:
    """Hodge dual on the form block only; the vector block is untouched.

    star(star(a)) = (-1)^(k (d-k)) a for any Riemannian metric.
    """
    _check_dim(a, metric)
    if orientation not in (1, -1):
        raise ValueError("orientation must be +1 or -1")
    d = a.dim
    k, m = a.degrees
    raised = gram(metric, k) @ a.comps
    out = zero_value(d, d - k, m)
    for i, (comp_idx, s) in enumerate(mi.complement_table(d, k)):
        out.comps[comp_idx] += s * raised[i]
    out.comps *= orientation * metric.det_sqrt
    return out


def hodge_star_v(a: DoubleFormValue, metric: MetricValue, orientation: int = 1) -> DoubleFormValue:
    """Hodge dual on the vector block, via transposition."""
    return transpose(hodge_star(transpose(a), metric, orientation))


def interior(v: np.ndarray, a: DoubleFormValue) -> DoubleFormValue:
    """Interior product of a tangent vector with the form block."""
    d = a.dim
    k, m = a.degrees
    if k < 1:
        raise DegreeUnderflow("interior product needs form degree >= 1")
    v = np.asarray(v, dtype=float)
    if v.shape != (d,):
        raise DimensionMismatch("vector length != dim")
    out = zero_value(d, k - 1, m)
    table = mi.interior_table(d, k)
    for axis in range(d):
        c = v[axis]
        if c == 0.0:
            continue
        for in_i, out_i, s in table[axis]:
            out.comps[out_i] += c * s * a.comps[in_i]
    return out


def interior_v(v: np.ndarray, a: DoubleFormValue) -> DoubleFormValue:
    """Interior product with the vector block, via transposition."""
    if a.degrees[1] < 1:
        raise DegreeUnderflow("vector interior product needs vector degree >= 1")
    return transpose(interior(v, transpose(a)))


def trace_g(a: DoubleFormValue, metric: MetricValue) -> DoubleFormValue:
    """Metric contraction of one form slot against one vector slot.

    Equals the orthonormal-frame sum of paired interior products, computed
    frame-independently through the inverse metric.
    """
    _check_dim(a, metric)
    k, m = a.degrees
    if k < 1 or m < 1:
        raise DegreeUnderflow("trace needs both degrees >= 1")
    d = a.dim
    out = zero_value(d, k - 1, m - 1)
    basis = np.eye(d)
    for p in range(d):
        for q in range(d):
            w = metric.g_inv[p, q]
            if w == 0.0:
                continue
            out = out + w * interior_v(basis[q], interior(basis[p], a))
    return out


def g_wedge(a: DoubleFormValue, metric: MetricValue) -> DoubleFormValue:
    """Wedge with the metric viewed as a (1,1) form; metric dual of trace_g."""
    _check_dim(a, metric)
    k, m = a.degrees
    if k + 1 > a.dim or m + 1 > a.dim:
        raise DegreeOverflow("metric wedge output exceeds dim")
    return wedge(metric_as_form(metric), a)


def metric_as_form(metric: MetricValue) -> DoubleFormValue:
    """The metric as a symmetric (1,1) double form."""
    return DoubleFormValue(metric.dim, (1, 1), metric.g.copy())


def curvature_action(
    a: DoubleFormValue, rm: DoubleFormValue, metric: MetricValue
) -> DoubleFormValue:
    """Degree-raising curvature term built from a (2,2) curvature value.

    Frame sum (1/2) sum_i ((i_{E_i} rm)^(i^V_{E_i} a) + (i^V_{E_i} rm)^(i_{E_i} a))
    over any orthonormal frame, evaluated through g_inv contractions.  On
    symmetric (1,1) inputs over a constant-curvature metric this reduces to
    -kappa g^a; on the metric itself it gives -2 rm.
    """
    _check_dim(a, metric)
    if rm.degrees != (2, 2):
        raise DegreeMismatch("curvature value must have degrees (2,2)")
    d = a.dim
    k, m = a.degrees
    if k + 1 > d or m + 1 > d:
        raise DegreeOverflow("curvature action output exceeds dim")
    out = zero_value(d, k + 1, m + 1)
    basis = np.eye(d)
    for p in range(d):
        for q in range(d):
            w = metric.g_inv[p, q]
            if w == 0.0:
                continue
            # terms whose contraction underflows a degree vanish identically
            if m >= 1:
                out = out + (0.5 * w) * wedge(interior(basis[p], rm), interior_v(basis[q], a))
            if k >= 1:
                out = out + (0.5 * w) * wedge(interior_v(basis[p], rm), interior(basis[q], a))
    return out


def weighted_trace(a: DoubleFormValue, weight: np.ndarray) -> DoubleFormValue:
    """Contraction of one form slot against one vector slot by a given
    contravariant symmetric weight matrix (trace_g with g_inv replaced)."""
    k, m = a.degrees
    if k < 1 or m < 1:
        raise DegreeUnderflow("trace needs both degrees >= 1")
    d = a.dim
    out = zero_value(d, k - 1, m - 1)
    basis = np.eye(d)
    for p in range(d):
        for q in range(d):
            w = weight[p, q]
            if w == 0.0:
                continue
            out = out + w * interior_v(basis[q], interior(basis[p], a))
    return out


def is_algebraic_curvature(a: DoubleFormValue, tol: float) -> bool:
    """True iff a (2,2) value has vanishing Bianchi sum and is symmetric."""
    if a.degrees != (2, 2):
        raise DegreeMismatch("algebraic-curvature test needs degrees (2,2)")
    scale = max(a.norm(), 1.0)
    if bianchi_or_zero(a).norm() > tol * scale:
        return False
    return (a - transpose(a)).norm() <= tol * scale


def flat_unit_curvature(d: int) -> DoubleFormValue:
    """Sum over i<j of dx^{ij} (x) dx^{ij}; half the Euclidean g wedge g.

    The curvature value of the conformal chart is kappa lambda^4 times this.
    """
    n2 = mi.count(d, 2)
    return DoubleFormValue(d, (2, 2), np.eye(n2))
