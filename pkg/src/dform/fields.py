"""Field containers and discrete conformal geometry.

A DoubleFormField stores one DoubleFormValue per grid node as a single array
of shape (*grid.shape, C(d,k), C(d,m)).  A BoundaryField lives on one box
face and stores intrinsic components over the face-tangent axes.

ConformalGeometry is the shared discrete-geometry carrier for both the full
chart and each face: conformal factor, log-derivatives, Christoffel symbols
(all analytic), per-axis derivative stencils (central second order inside,
one-sided 3-point second order at the ends) and trapezoid quadrature.  A box
face of the conformal metric is again a conformal-flat chart in the tangent
coordinates, so one code path serves both.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import algebra as alg
from . import multiindex as mi
from .charts import Chart, Face, Grid
from .errors import DegreeMismatch, DimensionMismatch, NotBoundaryFace


@dataclass
class DoubleFormField:
    chart: Chart
    grid: Grid
    degrees: tuple[int, int]
    values: np.ndarray

    def __post_init__(self):
        k, m = self.degrees
        d = self.chart.dim
        expected = self.grid.shape + (mi.count(d, k), mi.count(d, m))
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != expected:
            raise DimensionMismatch(
                f"field values shape {self.values.shape}, expected {expected}"
            )

    def check_finite(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field has non-finite values")

    def value_at(self, node: tuple[int, ...]) -> alg.DoubleFormValue:
        return alg.DoubleFormValue(self.chart.dim, self.degrees, self.values[node])

    def copy(self) -> "DoubleFormField":
        return DoubleFormField(self.chart, self.grid, self.degrees, self.values.copy())

    def __add__(self, other):
        _same_layout(self, other)
        return DoubleFormField(self.chart, self.grid, self.degrees,
                               self.values + other.values)

    def __sub__(self, other):
        _same_layout(self, other)
        return DoubleFormField(self.chart, self.grid, self.degrees,
                               self.values - other.values)

    def __mul__(self, c: float):
        return DoubleFormField(self.chart, self.grid, self.degrees, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)


@dataclass
class BoundaryField:
    """Intrinsic (k, m) double-form data on one box face."""

    chart: Chart
    grid: Grid
    face: Face
    degrees: tuple[int, int]
    values: np.ndarray

    def __post_init__(self):
        k, m = self.degrees
        d0 = self.chart.dim - 1
        if not (0 <= k <= d0 and 0 <= m <= d0):
            raise DegreeMismatch(
                f"intrinsic degrees {self.degrees} out of range for face dim {d0}"
            )
        expected = self.grid.face_shape(self.face) + (mi.count(d0, k), mi.count(d0, m))
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != expected:
            raise DimensionMismatch(
                f"boundary values shape {self.values.shape}, expected {expected}"
            )

    def __add__(self, other):
        if self.face != other.face or self.degrees != other.degrees:
            raise DegreeMismatch("boundary field mismatch")
        return BoundaryField(self.chart, self.grid, self.face, self.degrees,
                             self.values + other.values)

    def __sub__(self, other):
        return self + (other * -1.0)

    def __mul__(self, c: float):
        return BoundaryField(self.chart, self.grid, self.face, self.degrees,
                             self.values * c)

    __rmul__ = __mul__


def _same_layout(a: DoubleFormField, b: DoubleFormField):
    if a.chart != b.chart or a.grid != b.grid:
        raise DimensionMismatch("fields live on different charts or grids")
    if a.degrees != b.degrees:
        raise DegreeMismatch(f"degrees {a.degrees} != {b.degrees}")


def zero_field(chart: Chart, grid: Grid, k: int, m: int) -> DoubleFormField:
    d = chart.dim
    return DoubleFormField(
        chart, grid, (k, m),
        np.zeros(grid.shape + (mi.count(d, k), mi.count(d, m))),
    )


def field_from_function(chart: Chart, grid: Grid, degrees, fn) -> DoubleFormField:
    """Sample fn(coords)->(*shape, CK, CM) on the grid nodes."""
    vals = fn(grid.coords())
    return DoubleFormField(chart, grid, tuple(degrees), np.asarray(vals, dtype=float))


def metric_field(chart: Chart, grid: Grid) -> DoubleFormField:
    """The chart metric as a symmetric (1,1) field."""
    geo = geometry_of(chart, grid)
    d = chart.dim
    vals = np.einsum("...,ij->...ij", geo.lam ** 2, np.eye(d))
    return DoubleFormField(chart, grid, (1, 1), vals)


def riemann_field(chart: Chart, grid: Grid) -> DoubleFormField:
    """The chart curvature in the coordinate-index convention: kappa/2 g^g.

    Components over increasing pairs are kappa (g_ik g_jl - g_jk g_il); this
    matches charts.riemann_at nodewise.
    """
    geo = geometry_of(chart, grid)
    d = chart.dim
    e2 = np.eye(mi.count(d, 2))
    vals = np.einsum("...,ij->...ij", chart.kappa * geo.lam ** 4, e2)
    return DoubleFormField(chart, grid, (2, 2), vals)


def operative_curvature_field(chart: Chart, grid: Grid) -> DoubleFormField:
    """The curvature value as paired by the derivative commutators.

    With the component conventions of this package (increasing multi-indices
    on both blocks, the blockwise wedge, the alternating-sum exterior
    derivative), the double covariant derivative of fields on the conformal
    chart realizes the curvature with the vector-block pairing reversed
    relative to the coordinate-index formula, i.e. with the value
    -kappa/2 g^g.  This is the value for which the curvature-corrected
    curl-curl operator annihilates metric Lie derivatives and maps the metric
    to -2 times the curvature; every solver-facing source uses it.
    """
    return riemann_field(chart, grid) * (-1.0)


# ---------------------------------------------------------------------------
# derivative stencils

@lru_cache(maxsize=None)
def deriv_matrix(n: int, h: float) -> np.ndarray:
    """First-derivative matrix: central inside, 3-point one-sided at ends."""
    D = np.zeros((n, n))
    for i in range(1, n - 1):
        D[i, i - 1] = -0.5 / h
        D[i, i + 1] = 0.5 / h
    D[0, 0], D[0, 1], D[0, 2] = -1.5 / h, 2.0 / h, -0.5 / h
    D[-1, -1], D[-1, -2], D[-1, -3] = 1.5 / h, -2.0 / h, 0.5 / h
    return D


def apply_deriv(values: np.ndarray, axis: int, D: np.ndarray) -> np.ndarray:
    """Apply a per-axis stencil matrix along one node axis."""
    moved = np.moveaxis(values, axis, 0)
    out = np.tensordot(D, moved, axes=([1], [0]))
    return np.moveaxis(out, 0, axis)


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


# ---------------------------------------------------------------------------
# geometry carrier

class ConformalGeometry:
    """Discrete geometry of the chart or of one of its faces.

    Exposes the ambient dimension of the block indexing (d0), conformal
    factor and its log-gradient along the active axes, Christoffel symbols of
    the induced metric, derivative stencils and quadrature.  Degrees of
    double forms on this geometry are bounded by d0.
    """

    def __init__(self, chart: Chart, grid: Grid, face: Face | None = None):
        self.chart = chart
        self.grid = grid
        self.face = face
        d = chart.dim
        if face is None:
            self.axes = tuple(range(d))
            coords = grid.coords()
            self.shape = grid.shape
            self.orientation = 1
        else:
            if face not in grid.faces():
                raise NotBoundaryFace(str(face))
            self.axes = grid.face_axes(face)
            coords = grid.face_coords(face)
            self.shape = grid.face_shape(face)
            # face volume form chosen so the ambient volume form equals
            # (face volume) wedge (outward conormal); fixes the signs of the
            # projection duality relations
            self.orientation = face.sign * (-1) ** face.axis * (-1) ** (d - 1)
        self.d0 = len(self.axes)
        self.spacings = tuple(grid.spacings[a] for a in self.axes)
        r2 = np.sum(coords ** 2, axis=-1)
        denom = 1.0 + chart.kappa * r2 / 4.0
        self.lam = 1.0 / denom
        # d_b log(lambda) over active axes
        self.dlog = np.stack(
            [-0.5 * chart.kappa * coords[..., a] * self.lam for a in self.axes],
            axis=-1,
        )
        eye = np.eye(self.d0)
        self.gamma = (
            np.einsum("ca,...b->...cab", eye, self.dlog)
            + np.einsum("cb,...a->...cab", eye, self.dlog)
            - np.einsum("ab,...c->...cab", eye, self.dlog)
        )
        self.inv_lam2 = self.lam ** -2
        w = np.ones(self.shape)
        for ax, (n, h) in enumerate(zip(self.shape, self.spacings)):
            shape1 = [1] * len(self.shape)
            shape1[ax] = n
            w = w * trapezoid_weights(n, h).reshape(shape1)
        self.quad = w * self.lam ** self.d0
        self._derivs = tuple(
            deriv_matrix(n, h) for n, h in zip(self.shape, self.spacings)
        )

    def partial(self, values: np.ndarray, axis: int) -> np.ndarray:
        return apply_deriv(values, axis, self._derivs[axis])

    def gram_scale(self, k: int, m: int) -> np.ndarray:
        """Pointwise fiber Gram factor lambda^(-2(k+m)) of this geometry."""
        return self.lam ** (-2 * (k + m))


_geometry_cache: dict = {}


def geometry_of(chart: Chart, grid: Grid, face: Face | None = None) -> ConformalGeometry:
    key = (chart, grid, face)
    geo = _geometry_cache.get(key)
    if geo is None:
        geo = ConformalGeometry(chart, grid, face)
        _geometry_cache[key] = geo
    return geo


# ---------------------------------------------------------------------------
# cached fiber matrices (flat-component linear maps, built from the algebra)

def _fiber_dim(d: int, k: int, m: int) -> int:
    return mi.count(d, k) * mi.count(d, m)


@lru_cache(maxsize=None)
def fiber_matrix(name: str, d: int, k: int, m: int) -> np.ndarray:
    """Matrix of a tensorial fiber operator in flat components.

    Probed column by column through the algebra layer, so field-level
    tensorial operators and the pointwise algebra share one source of truth.
    """
    delta = alg.euclidean_metric(d)

    def op(v: alg.DoubleFormValue) -> alg.DoubleFormValue:
        if name == "curvature":
            return alg.curvature_action(v, alg.flat_unit_curvature(d), delta)
        if name == "trace":
            return alg.trace_g(v, delta)
        if name == "gwedge":
            return alg.g_wedge(v, delta)
        if name == "star":
            return alg.hodge_star(v, delta)
        if name == "star_v":
            return alg.hodge_star_v(v, delta)
        raise ValueError(name)

    n_in = _fiber_dim(d, k, m)
    cols = []
    for idx in range(n_in):
        comps = np.zeros(n_in)
        comps[idx] = 1.0
        v = alg.DoubleFormValue(d, (k, m), comps.reshape(mi.count(d, k), mi.count(d, m)))
        cols.append(op(v).comps.ravel())
    return np.array(cols).T


def apply_fiber(values: np.ndarray, M: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    flat = values.reshape(values.shape[:-2] + (-1,))
    out = flat @ M.T
    return out.reshape(values.shape[:-2] + out_shape)
