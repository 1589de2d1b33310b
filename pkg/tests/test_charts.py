import numpy as np
import pytest

from dform import algebra as alg
from dform import charts
from dform.errors import NotBoundaryNode, OutOfDomain, ValidationError


def test_chart_validation():
    charts.Chart(2, -1.0, charts.default_box(2))  # fine: corner radius < 2
    with pytest.raises(OutOfDomain):
        charts.Chart(2, -1.0, ((-1.5, 1.5), (-1.5, 1.5)))
    with pytest.raises(ValidationError):
        charts.Chart(2, 0.0, ((0.0, 0.0), (0.0, 1.0)))


def test_grid_validation_and_spacings():
    with pytest.raises(ValidationError):
        charts.Grid((4, 5), charts.default_box(2))
    g = charts.Grid((5, 9), ((0.0, 1.0), (0.0, 2.0)))
    assert g.spacings == (0.25, 0.25)


def test_node_classification():
    g = charts.Grid((5, 5), charts.default_box(2))
    assert g.is_interior((2, 2))
    assert g.node_faces((0, 2)) == [charts.Face(0, 0)]
    assert set(g.node_faces((4, 0))) == {charts.Face(0, 1), charts.Face(1, 0)}
    # every node classified exactly once
    n_int = int(g.interior_mask().sum())
    n_bnd = sum(1 for i in range(5) for j in range(5) if g.node_faces((i, j)))
    assert n_int + n_bnd == 25


def test_metric_at_flat_and_origin():
    c = charts.Chart(2, 0.0, charts.default_box(2))
    m = charts.metric_at(c, np.array([0.3, -0.1]))
    assert np.allclose(m.g, np.eye(2))
    c1 = charts.Chart(2, 1.0, ((-2.0, 2.0), (-2.0, 2.0)))
    m1 = charts.metric_at(c1, np.zeros(2))
    assert np.allclose(m1.g, np.eye(2))


def test_metric_at_hyperbolic_point():
    # kappa=-1 at (1,0): lambda = (1 - 1/4)^(-1) = 4/3, g = (16/9) delta
    c = charts.Chart(2, -1.0, ((-1.2, 1.2), (-1.2, 1.2)))
    m = charts.metric_at(c, np.array([1.0, 0.0]))
    assert np.allclose(m.g, (16.0 / 9.0) * np.eye(2), atol=1e-14)
    assert m.det_sqrt == pytest.approx((4.0 / 3.0) ** 2, rel=1e-14)


def test_metric_out_of_domain():
    c = charts.Chart(2, 0.0, charts.default_box(2))
    with pytest.raises(OutOfDomain):
        charts.metric_at(c, np.array([2.0, 0.0]))


def test_christoffel_flat_and_origin():
    c = charts.Chart(3, 0.0, charts.default_box(3))
    assert np.allclose(charts.christoffel_at(c, np.array([0.1, 0.2, -0.3])), 0.0)
    c1 = charts.Chart(3, 1.0, charts.default_box(3))
    assert np.allclose(charts.christoffel_at(c1, np.zeros(3)), 0.0)


def test_christoffel_closed_form_point():
    # kappa=1, d=2, x=(1,0): d1 log lambda = -2/5
    c = charts.Chart(2, 1.0, ((-1.5, 1.5), (-1.5, 1.5)))
    G = charts.christoffel_at(c, np.array([1.0, 0.0]))
    assert G[0, 0, 0] == pytest.approx(-0.4, abs=1e-14)
    assert G[0, 1, 1] == pytest.approx(0.4, abs=1e-14)
    assert G[1, 0, 1] == pytest.approx(-0.4, abs=1e-14)
    assert np.allclose(G, np.swapaxes(G, 1, 2))  # symmetric in (a, b)


def test_riemann_flat_zero_and_unit():
    c = charts.Chart(2, 0.0, charts.default_box(2))
    assert charts.riemann_at(c, np.array([0.2, 0.1])).norm() == 0.0
    c1 = charts.Chart(2, 1.0, charts.default_box(2))
    rm = charts.riemann_at(c1, np.zeros(2))
    # single component kappa (g11 g22 - g12 g21) = 1 at the identity metric
    assert rm.comps[0, 0] == pytest.approx(1.0, abs=1e-14)


def test_riemann_equals_half_kappa_g_wedge_g():
    rng = np.random.default_rng(5)
    for d, kappa in ((2, 1.0), (3, -1.0), (3, 0.5)):
        c = charts.Chart(d, kappa, charts.default_box(d, 0.6))
        x = rng.uniform(-0.5, 0.5, size=d)
        rm = charts.riemann_at(c, x)
        g = charts.metric_at(c, x)
        gf = alg.metric_as_form(g)
        want = (0.5 * kappa) * alg.wedge(gf, gf)
        assert (rm - want).norm() < 1e-12 * max(want.norm(), 1.0)
        assert alg.is_algebraic_curvature(rm, 1e-12)


def test_fd_curvature_converges_to_riemann():
    rng = np.random.default_rng(9)
    for d, kappa in ((2, 1.0), (2, -1.0), (3, 1.0)):
        c = charts.Chart(d, kappa, charts.default_box(d))
        x = rng.uniform(-0.3, 0.3, size=d)
        exact = charts.riemann_at(c, x)
        errs = []
        for h in (0.02, 0.01):
            approx = charts.fd_riemann(c, x, h)
            errs.append((approx - exact).norm())
        rate = np.log2(errs[0] / errs[1])
        assert rate > 1.9


def test_boundary_normal_flat():
    c = charts.Chart(2, 0.0, charts.default_box(2))
    g = charts.grid_for(c, 5)
    normals = charts.boundary_normal(c, g, (4, 2))
    assert np.allclose(normals[charts.Face(0, 1)], [1.0, 0.0])
    with pytest.raises(NotBoundaryNode):
        charts.boundary_normal(c, g, (2, 2))


def test_boundary_normal_unit_and_orthogonal():
    c = charts.Chart(2, 1.0, charts.default_box(2))
    g = charts.grid_for(c, 5)
    node = (4, 1)
    n = charts.boundary_normal(c, g, node)[charts.Face(0, 1)]
    x = g.node_coord(node)
    m = charts.metric_at(c, x)
    assert float(n @ m.g @ n) == pytest.approx(1.0, abs=1e-12)
    t = np.array([0.0, 1.0])
    assert abs(float(n @ m.g @ t)) < 1e-12
    lam = c.conformal_factor(x)
    assert n[0] == pytest.approx(1.0 / lam, rel=1e-14)


def test_boundary_normal_corner_exposes_both_faces():
    c = charts.Chart(2, 0.0, charts.default_box(2))
    g = charts.grid_for(c, 5)
    normals = charts.boundary_normal(c, g, (0, 0))
    assert len(normals) == 2


def test_second_fundamental_form_flat_zero():
    c = charts.Chart(2, 0.0, charts.default_box(2))
    g = charts.grid_for(c, 5)
    h0 = charts.second_fundamental_form(c, g, (4, 2))
    assert h0.norm() == 0.0


def test_second_fundamental_form_fd_oracle():
    # compare with a tangential finite difference of the unit normal field
    c = charts.Chart(2, 1.0, charts.default_box(2))
    g = charts.grid_for(c, 9)
    node = (8, 4)
    face = charts.Face(0, 1)
    x = g.node_coord(node)
    h0 = charts.second_fundamental_form(c, g, node, face)

    def normal_field(y):
        return np.array([1.0 / c.conformal_factor(y), 0.0]) / (
            1.0 / c.conformal_factor(y) ** 2
        )  # sign * lambda^{-1} e_axis written through lambda

    def normal(y):
        lam = c.conformal_factor(y)
        return np.array([1.0 / lam, 0.0])

    h = 1e-5
    e_t = np.array([0.0, h])
    dn = (normal(x + e_t) - normal(x - e_t)) / (2 * h)
    G = charts.christoffel_at(c, x)
    n = normal(x)
    cov = dn + np.einsum("cb,b->c", G[:, 1, :], n)  # nabla_{e_2} n
    m = charts.metric_at(c, x)
    want = float(m.g[1] @ cov)
    assert h0.comps[0, 0] == pytest.approx(want, rel=1e-6, abs=1e-9)


def test_second_fundamental_form_smooth_along_face():
    c = charts.Chart(3, -1.0, charts.default_box(3, 0.6))
    g = charts.grid_for(c, 5)
    face = charts.Face(2, 0)
    vals = []
    for i in range(1, 4):
        for j in range(1, 4):
            h0 = charts.second_fundamental_form(c, g, (i, j, 0), face)
            tr = np.trace(h0.comps)
            assert np.isfinite(tr)
            vals.append(tr)
    assert np.ptp(vals) < 1.0  # smooth, no blowups


def test_refinement_shapes():
    assert charts.refinement_shapes(2, 3) == [(17, 17), (33, 33), (65, 65)]
    assert charts.refinement_shapes(3, 3) == [(9, 9, 9), (17, 17, 17), (33, 33, 33)]
