"""Constant-curvature conformal charts on box domains, and their grids.

The single chart family is the conformal model: on a box in R^d the metric is
lambda(x)^2 * delta with lambda(x) = 1 / (1 + kappa |x|^2 / 4), which has
constant sectional curvature kappa for every sign of kappa and every d.  This
keeps one analytic code path for metric, Christoffel symbols, curvature and
boundary geometry.  For kappa < 0 the conformal factor has a pole at
|x| = 2/sqrt(-kappa); construction validates a positive margin on the closed
box.

Grids are structured node lattices over the box with per-axis trapezoid
quadrature.  The boundary is always the set of box faces; a face is labeled
by (axis, side) with side 0 at the minimum and 1 at the maximum.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from . import algebra as alg
from .errors import NotBoundaryNode, OutOfDomain, ValidationError

DOMAIN_MARGIN = 1e-6


@dataclass(frozen=True)
class Chart:
    """Conformal constant-curvature model on a box."""

    dim: int
    kappa: float
    box: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError("dim must be >= 1")
        if len(self.box) != self.dim:
            raise ValidationError("box must give one (min, max) pair per axis")
        for lo, hi in self.box:
            if not hi > lo:
                raise ValidationError("box intervals must be nonempty")
        # the conformal factor must stay bounded on the closed box; the
        # denominator is extremal at a corner
        if self.kappa < 0:
            r2 = sum(max(lo * lo, hi * hi) for lo, hi in self.box)
            if 1.0 + self.kappa * r2 / 4.0 < DOMAIN_MARGIN:
                raise OutOfDomain(
                    "box reaches the conformal-factor pole for kappa < 0"
                )

    def contains(self, x: np.ndarray) -> bool:
        return all(
            lo - 1e-12 <= xi <= hi + 1e-12 for xi, (lo, hi) in zip(x, self.box)
        )

    def conformal_factor(self, x: np.ndarray) -> float:
        denom = 1.0 + self.kappa * float(np.dot(x, x)) / 4.0
        if denom < DOMAIN_MARGIN:
            raise OutOfDomain(f"point {x} past the conformal-factor pole")
        return 1.0 / denom

    def dlog_factor(self, x: np.ndarray) -> np.ndarray:
        """Gradient of log(lambda): -(kappa x_i / 2) lambda."""
        lam = self.conformal_factor(x)
        return -0.5 * self.kappa * np.asarray(x, dtype=float) * lam


def default_box(dim: int, half_width: float = 0.7) -> tuple[tuple[float, float], ...]:
    return tuple((-half_width, half_width) for _ in range(dim))


@dataclass(frozen=True)
class Face:
    """A box face: outward along `axis`, side 0 = min, 1 = max."""

    axis: int
    side: int

    @property
    def sign(self) -> int:
        return 1 if self.side == 1 else -1


@dataclass(frozen=True)
class Grid:
    """Structured node lattice over a chart's box; n >= 5 nodes per axis."""

    shape: tuple[int, ...]
    box: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.shape) != len(self.box):
            raise ValidationError("grid shape and box rank differ")
        if any(n < 5 for n in self.shape):
            raise ValidationError("need at least 5 nodes per axis")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(
            (hi - lo) / (n - 1) for (lo, hi), n in zip(self.box, self.shape)
        )

    def axis_coords(self, axis: int) -> np.ndarray:
        lo, hi = self.box[axis]
        return np.linspace(lo, hi, self.shape[axis])

    def coords(self) -> np.ndarray:
        """Node coordinates, shape (*shape, dim)."""
        axes = [self.axis_coords(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def node_coord(self, node: tuple[int, ...]) -> np.ndarray:
        return np.array(
            [self.axis_coords(a)[node[a]] for a in range(self.dim)]
        )

    def faces(self) -> list[Face]:
        return [Face(a, s) for a in range(self.dim) for s in (0, 1)]

    def node_faces(self, node: tuple[int, ...]) -> list[Face]:
        """Faces incident to a node; empty list for interior nodes."""
        out = []
        for a, i in enumerate(node):
            if i == 0:
                out.append(Face(a, 0))
            elif i == self.shape[a] - 1:
                out.append(Face(a, 1))
        return out

    def is_interior(self, node: tuple[int, ...]) -> bool:
        return not self.node_faces(node)

    def interior_mask(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        for a in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[a] = 0
            mask[tuple(sl)] = False
            sl[a] = -1
            mask[tuple(sl)] = False
        return mask

    def margin_mask(self, layers: int) -> np.ndarray:
        """Nodes at least `layers` index steps away from every face."""
        mask = np.zeros(self.shape, dtype=bool)
        sl = tuple(slice(layers, n - layers) for n in self.shape)
        if all(s.start < s.stop for s in sl):
            mask[sl] = True
        return mask

    def face_shape(self, face: Face) -> tuple[int, ...]:
        return tuple(n for a, n in enumerate(self.shape) if a != face.axis)

    def face_axes(self, face: Face) -> tuple[int, ...]:
        return tuple(a for a in range(self.dim) if a != face.axis)

    def face_coords(self, face: Face) -> np.ndarray:
        """Coordinates of the face nodes in the ambient space."""
        full = self.coords()
        sl = [slice(None)] * self.dim
        sl[face.axis] = 0 if face.side == 0 else self.shape[face.axis] - 1
        return full[tuple(sl)]


def grid_for(chart: Chart, n: int | tuple[int, ...]) -> Grid:
    shape = (n,) * chart.dim if isinstance(n, int) else tuple(n)
    return Grid(shape, chart.box)


def refinement_shapes(dim: int, levels: int) -> list[tuple[int, ...]]:
    """Nested grid family: 17/33/65... in 2D, 9/17/33... in 3D."""
    base = 17 if dim == 2 else 9
    return [((base - 1) * 2 ** j + 1,) * dim for j in range(levels)]


# ---------------------------------------------------------------------------
# pointwise geometry

def metric_at(chart: Chart, x: np.ndarray) -> alg.MetricValue:
    """Sample the chart metric lambda^2 delta at a point of the box."""
    x = np.asarray(x, dtype=float)
    if not chart.contains(x):
        raise OutOfDomain(f"point {x} outside the box")
    lam = chart.conformal_factor(x)
    d = chart.dim
    return alg.MetricValue(
        d,
        lam ** 2 * np.eye(d),
        g_inv=lam ** -2 * np.eye(d),
        det_sqrt=lam ** d,
    )


def christoffel_at(chart: Chart, x: np.ndarray) -> np.ndarray:
    """Christoffel symbols Gamma[c, a, b] of the conformal metric.

    Gamma^c_ab = delta_ca phi_b + delta_cb phi_a - delta_ab phi_c with
    phi = grad log(lambda); symmetric in (a, b).
    """
    x = np.asarray(x, dtype=float)
    if not chart.contains(x):
        raise OutOfDomain(f"point {x} outside the box")
    d = chart.dim
    phi = chart.dlog_factor(x)
    eye = np.eye(d)
    return (
        np.einsum("ca,b->cab", eye, phi)
        + np.einsum("cb,a->cab", eye, phi)
        - np.einsum("ab,c->cab", eye, phi)
    )


def riemann_at(chart: Chart, x: np.ndarray) -> alg.DoubleFormValue:
    """Curvature of the chart as a (2,2) double form: kappa/2 g-wedge-g.

    Components over increasing pairs equal
    kappa (g_ik g_jl - g_jk g_il) evaluated at the diagonal metric.
    """
    g = metric_at(chart, x)
    gf = alg.metric_as_form(g)
    return (0.5 * chart.kappa) * alg.wedge(gf, gf)


def boundary_normal(
    chart: Chart, grid: Grid, node: tuple[int, ...]
) -> dict[Face, np.ndarray]:
    """Outward unit normals at a boundary node, one per incident face."""
    faces = grid.node_faces(node)
    if not faces:
        raise NotBoundaryNode(f"node {node} is interior")
    x = grid.node_coord(node)
    lam = chart.conformal_factor(x)
    out = {}
    for f in faces:
        n = np.zeros(chart.dim)
        n[f.axis] = f.sign / lam
        out[f] = n
    return out


def second_fundamental_form(
    chart: Chart, grid: Grid, node: tuple[int, ...], face: Face | None = None
) -> alg.DoubleFormValue:
    """Scalar second fundamental form of a box face at a boundary node.

    h0(X, Y) = g(nabla_X n, Y) for face-tangent X, Y with n the outward unit
    normal.  Box faces of the conformal metric are umbilic:
    h0 = sign * lambda * d_a log(lambda) * delta on the tangent axes,
    returned as an intrinsic (1,1) value on the (d-1)-dimensional face.
    """
    faces = grid.node_faces(node)
    if not faces:
        raise NotBoundaryNode(f"node {node} is interior")
    if face is None:
        if len(faces) > 1:
            raise NotBoundaryNode(
                f"node {node} lies on several faces; pass one explicitly"
            )
        face = faces[0]
    elif face not in faces:
        raise NotBoundaryNode(f"node {node} is not on face {face}")
    x = grid.node_coord(node)
    lam = chart.conformal_factor(x)
    phi_a = chart.dlog_factor(x)[face.axis]
    d0 = chart.dim - 1
    return alg.DoubleFormValue(
        d0, (1, 1), face.sign * lam * phi_a * np.eye(d0)
    )


def fd_riemann(chart: Chart, x: np.ndarray, h: float) -> alg.DoubleFormValue:
    """Finite-difference curvature oracle assembled from christoffel_at.

    The endomorphism sign is the one under which lowering reproduces the
    coordinate identity Rm_ijkl = kappa (g_ik g_jl - g_jk g_il):
    R^l_{kij} = d_j Gamma^l_ik - d_i Gamma^l_jk + Gamma^l_js Gamma^s_ik
    - Gamma^l_is Gamma^s_jk, O(h^2) accurate.
    """
    d = chart.dim
    x = np.asarray(x, dtype=float)

    def gamma(y):
        return christoffel_at(chart, y)

    dgamma = np.zeros((d, d, d, d))  # [i, c, a, b] = d_i Gamma^c_ab
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        dgamma[i] = (gamma(x + e) - gamma(x - e)) / (2 * h)
    G = gamma(x)
    # R[l, k, i, j] = <R(e_i, e_j) e_k, dx^l>
    R = np.zeros((d, d, d, d))
    for l, k, i, j in product(range(d), repeat=4):
        R[l, k, i, j] = (
            dgamma[j, l, i, k]
            - dgamma[i, l, j, k]
            + np.dot(G[l, j, :], G[:, i, k])
            - np.dot(G[l, i, :], G[:, j, k])
        )
    g = metric_at(chart, x).g
    # Rm(e_i, e_j; e_k, e_w) = g_{wl} R[l, k, i, j]
    Rm = np.einsum("wl,lkij->ijkw", g, R)
    from . import multiindex as mi

    pairs = mi.subsets(d, 2)
    comps = np.zeros((len(pairs), len(pairs)))
    for a, (i, j) in enumerate(pairs):
        for b, (k, w) in enumerate(pairs):
            comps[a, b] = Rm[i, j, k, w]
    return alg.DoubleFormValue(d, (2, 2), comps)
