import numpy as np
import pytest

from dform import algebra as alg
from dform import multiindex as mi
from dform.errors import DegreeMismatch, DegreeOverflow, DegreeUnderflow, DimensionMismatch

from oracles import (
    dense_bianchi,
    dense_double_wedge,
    dense_inner,
    dense_interior,
    dense_transpose,
    from_dense,
    random_spd,
    random_value,
    to_dense,
)

TOL = 1e-12


def test_component_count_validation():
    with pytest.raises(DimensionMismatch):
        alg.DoubleFormValue(2, (1, 1), np.zeros((2, 1)))
    with pytest.raises(DegreeOverflow):
        alg.DoubleFormValue(2, (3, 0), np.zeros((0, 1)))


def test_metric_validation():
    with pytest.raises(ValueError):
        alg.MetricValue(2, np.array([[1.0, 2.0], [2.0, 1.0]]))  # indefinite
    with pytest.raises(ValueError):
        alg.MetricValue(2, np.array([[1.0, 0.5], [0.0, 1.0]]))  # asymmetric


# --- wedge ---------------------------------------------------------------

def test_wedge_decomposable():
    a = alg.basis_value(2, (0,), ())
    b = alg.basis_value(2, (1,), ())
    w = alg.wedge(a, b)
    assert w.degrees == (2, 0)
    assert w.comps[0, 0] == pytest.approx(1.0, abs=TOL)


def test_wedge_flat_metric_squared():
    # expanding g = sum_i dx^i (x) dx^i by hand: single component 2 in d=2
    g = alg.metric_as_form(alg.euclidean_metric(2))
    w = alg.wedge(g, g)
    assert w.comps.shape == (1, 1)
    assert w.comps[0, 0] == pytest.approx(2.0, abs=TOL)


def test_wedge_graded_commutativity():
    rng = np.random.default_rng(7)
    for d in (2, 3, 4):
        for (k, m) in ((1, 1), (1, 0), (0, 1), (2, 1)):
            for (n, l) in ((1, 1), (1, 0), (0, 2)):
                if k + n > d or m + l > d:
                    continue
                a = random_value(d, k, m, rng)
                b = random_value(d, n, l, rng)
                lhs = alg.wedge(a, b)
                rhs = (-1) ** (k * n + m * l) * alg.wedge(b, a)
                assert (lhs - rhs).norm() < TOL * max(lhs.norm(), 1.0)


def test_wedge_against_dense_oracle():
    rng = np.random.default_rng(11)
    for d in (2, 3):
        for (k, m, n, l) in ((1, 1, 1, 1), (1, 0, 1, 2), (0, 1, 2, 1), (2, 0, 1, 1)):
            if k + n > d or m + l > d:
                continue
            a = random_value(d, k, m, rng)
            b = random_value(d, n, l, rng)
            got = alg.wedge(a, b)
            want = from_dense(
                dense_double_wedge(to_dense(a), k, m, to_dense(b), n, l, d),
                d, k + n, m + l,
            )
            assert (got - want).norm() < 1e-11 * max(want.norm(), 1.0)


def test_wedge_associativity():
    rng = np.random.default_rng(13)
    for d in (3, 4):
        for degs in (((1, 0), (1, 0), (1, 0)), ((1, 1), (1, 0), (0, 1)),
                     ((1, 1), (1, 1), (1, 1)), ((2, 0), (1, 1), (0, 1))):
            ktot = sum(k for k, _ in degs)
            mtot = sum(m for _, m in degs)
            if ktot > d or mtot > d:
                continue
            a, b, c = (random_value(d, k, m, rng) for k, m in degs)
            lhs = alg.wedge(alg.wedge(a, b), c)
            rhs = alg.wedge(a, alg.wedge(b, c))
            assert (lhs - rhs).norm() < 1e-12 * max(lhs.norm(), 1.0)


def test_wedge_degree_overflow_and_helper():
    a = alg.basis_value(2, (0, 1), ())
    with pytest.raises(DegreeOverflow):
        alg.wedge(a, alg.basis_value(2, (0,), ()))
    z = alg.wedge_or_zero(a, alg.basis_value(2, (0,), ()))
    assert z.norm() == 0.0


# --- transpose -----------------------------------------------------------

def test_transpose_metric_fixed_point():
    g = alg.metric_as_form(alg.MetricValue(3, random_spd(3, np.random.default_rng(3))))
    assert (alg.transpose(g) - g).norm() == 0.0


def test_transpose_moves_component():
    a = alg.basis_value(2, (0,), (1,))  # dx^1 (x) dx^2
    t = alg.transpose(a)
    assert t.comps[1, 0] == 1.0 and t.comps[0, 1] == 0.0


def test_transpose_involution_and_oracle():
    rng = np.random.default_rng(17)
    a = random_value(3, 2, 1, rng)
    assert (alg.transpose(alg.transpose(a)) - a).norm() == 0.0
    want = from_dense(dense_transpose(to_dense(a), 2, 1), 3, 1, 2)
    assert (alg.transpose(a) - want).norm() < TOL


def test_transpose_distributes_over_wedge():
    rng = np.random.default_rng(19)
    a = random_value(3, 1, 1, rng)
    b = random_value(3, 1, 1, rng)
    lhs = alg.transpose(alg.wedge(a, b))
    rhs = alg.wedge(alg.transpose(a), alg.transpose(b))
    assert (lhs - rhs).norm() < TOL * max(lhs.norm(), 1.0)


# --- Bianchi sum ---------------------------------------------------------

def test_bianchi_kills_symmetric():
    rng = np.random.default_rng(23)
    M = rng.normal(size=(3, 3))
    sigma = alg.DoubleFormValue(3, (1, 1), M + M.T)
    assert alg.bianchi(sigma).norm() < TOL


def test_bianchi_basis_value():
    # direct evaluation of the defining alternating sum on dx^1 (x) dx^2
    a = alg.basis_value(2, (0,), (1,))
    out = alg.bianchi(a)
    assert out.degrees == (2, 0)
    assert out.comps[0, 0] == pytest.approx(-1.0, abs=TOL)


def test_bianchi_kills_constant_curvature_value():
    rng = np.random.default_rng(29)
    for d in (3, 4):
        g = alg.MetricValue(d, random_spd(d, rng))
        rm = 0.5 * alg.wedge(alg.metric_as_form(g), alg.metric_as_form(g))
        assert alg.bianchi(rm).norm() < TOL * max(rm.norm(), 1.0)
    # d=2 lands in the zero fiber; the zero-space helper covers it
    g2 = alg.MetricValue(2, random_spd(2, rng))
    rm2 = 0.5 * alg.wedge(alg.metric_as_form(g2), alg.metric_as_form(g2))
    assert alg.bianchi_or_zero(rm2).norm() == 0.0


def test_bianchi_against_dense_oracle():
    rng = np.random.default_rng(31)
    for d, k, m in ((2, 0, 1), (3, 1, 1), (3, 1, 2), (3, 2, 2), (4, 2, 2)):
        a = random_value(d, k, m, rng)
        got = alg.bianchi(a)
        want = dense_bianchi(a)
        assert (got - want).norm() < 1e-11 * max(want.norm(), 1.0)


def test_bianchi_v_matches_transposed_definition():
    rng = np.random.default_rng(37)
    a = random_value(3, 1, 1, rng)
    lhs = alg.bianchi_v(a)
    rhs = alg.transpose(alg.bianchi(alg.transpose(a)))
    assert (lhs - rhs).norm() == 0.0


def test_bianchi_degree_errors():
    with pytest.raises(DegreeUnderflow):
        alg.bianchi(alg.basis_value(2, (0,), ()))
    with pytest.raises(DegreeOverflow):
        alg.bianchi(alg.basis_value(2, (0, 1), (0,)))


# --- Hodge stars ---------------------------------------------------------

def test_hodge_flat_2d():
    a = alg.basis_value(2, (0,), ())
    s = alg.hodge_star(a, alg.euclidean_metric(2))
    assert s.comps[1, 0] == pytest.approx(1.0, abs=TOL)
    s2 = alg.hodge_star(alg.basis_value(2, (1,), ()), alg.euclidean_metric(2))
    assert s2.comps[0, 0] == pytest.approx(-1.0, abs=TOL)


def test_hodge_double_star_sign():
    rng = np.random.default_rng(41)
    for d in (2, 3, 4):
        for k in range(d + 1):
            a = random_value(d, k, 1 if d > 1 else 0, rng)
            g = alg.MetricValue(d, random_spd(d, rng))
            ss = alg.hodge_star(alg.hodge_star(a, g), g)
            want = (-1) ** (k * (d - k)) * a
            assert (ss - want).norm() < 1e-11 * max(a.norm(), 1.0)


def test_hodge_defining_property_vs_dense():
    # omega ^ star(eta) = (omega, eta)_g vol, both sides via the dense oracle
    rng = np.random.default_rng(43)
    for d in (2, 3):
        g = alg.MetricValue(d, random_spd(d, rng))
        for k in range(d + 1):
            om = random_value(d, k, 0, rng)
            et = random_value(d, k, 0, rng)
            star_et = alg.hodge_star(et, g)
            w = alg.wedge(om, star_et)
            ip = dense_inner(to_dense(om), to_dense(et), k, 0, g.g_inv)
            assert w.comps[0, 0] == pytest.approx(ip * g.det_sqrt, rel=1e-10, abs=1e-12)


def test_double_hodge_isometry_on_symmetric():
    rng = np.random.default_rng(47)
    for d in (2, 3):
        g = alg.MetricValue(d, random_spd(d, rng))
        M = rng.normal(size=(d, d))
        a = alg.DoubleFormValue(d, (1, 1), M + M.T)
        b = alg.hodge_star_v(alg.hodge_star(a, g), g)
        assert alg.norm_g(b, g) == pytest.approx(alg.norm_g(a, g), rel=1e-11)


# --- interior products ---------------------------------------------------

def test_interior_basis():
    a = alg.basis_value(3, (0, 1), ())
    out = alg.interior(np.array([1.0, 0, 0]), a)
    assert out.comps[1, 0] == pytest.approx(1.0, abs=TOL)  # dx^2 remains
    b = alg.basis_value(3, (0,), (2,))
    assert alg.interior(np.array([0, 1.0, 0]), b).norm() == 0.0


def test_interior_squares_to_zero():
    rng = np.random.default_rng(53)
    a = random_value(4, 3, 1, rng)
    v = rng.normal(size=4)
    out = alg.interior(v, alg.interior(v, a))
    assert out.norm() < TOL * a.norm()


def test_interior_vs_dense():
    rng = np.random.default_rng(59)
    a = random_value(3, 2, 1, rng)
    v = rng.normal(size=3)
    got = alg.interior(v, a)
    want = from_dense(dense_interior(v, to_dense(a)), 3, 1, 1)
    assert (got - want).norm() < 1e-11


def test_interior_antiderivation_on_form_block():
    rng = np.random.default_rng(61)
    d = 3
    a = random_value(d, 1, 1, rng)
    b = random_value(d, 1, 0, rng)
    v = rng.normal(size=d)
    lhs = alg.interior(v, alg.wedge(a, b))
    rhs = alg.wedge(alg.interior(v, a), b) + (-1) ** a.degrees[0] * alg.wedge(a, alg.interior(v, b))
    assert (lhs - rhs).norm() < 1e-11 * max(lhs.norm(), 1.0)


# --- trace and metric wedge ----------------------------------------------

def test_trace_of_metric_is_dimension():
    rng = np.random.default_rng(67)
    for d in (2, 3, 4):
        g = alg.MetricValue(d, random_spd(d, rng))
        t = alg.trace_g(alg.metric_as_form(g), g)
        assert t.comps[0, 0] == pytest.approx(float(d), rel=1e-12)


def test_trace_flat_offdiagonal():
    a = alg.basis_value(2, (0,), (1,))
    t = alg.trace_g(a, alg.euclidean_metric(2))
    assert abs(t.comps[0, 0]) < TOL


def test_trace_gwedge_adjointness():
    rng = np.random.default_rng(71)
    for trial in range(5):
        g = alg.MetricValue(3, random_spd(3, rng))
        psi = random_value(3, 2, 2, rng)
        phi = random_value(3, 1, 1, rng)
        lhs = alg.inner(alg.trace_g(psi, g), phi, g)
        rhs = alg.inner(psi, alg.g_wedge(phi, g), g)
        assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-12)


# --- inner product --------------------------------------------------------

def test_inner_unit_basis():
    a = alg.basis_value(3, (0, 2), (1,))
    assert alg.inner(a, a, alg.euclidean_metric(3)) == pytest.approx(1.0, abs=TOL)


def test_inner_metric_with_itself():
    rng = np.random.default_rng(73)
    for d in (2, 3):
        g = alg.MetricValue(d, random_spd(d, rng))
        val = alg.inner(alg.metric_as_form(g), alg.metric_as_form(g), g)
        assert val == pytest.approx(float(d), rel=1e-11)


def test_inner_symmetric_and_matches_dense():
    rng = np.random.default_rng(79)
    g = alg.MetricValue(3, random_spd(3, rng))
    a = random_value(3, 2, 1, rng)
    b = random_value(3, 2, 1, rng)
    ab = alg.inner(a, b, g)
    ba = alg.inner(b, a, g)
    assert ab == pytest.approx(ba, rel=1e-12)
    want = dense_inner(to_dense(a), to_dense(b), 2, 1, g.g_inv)
    assert ab == pytest.approx(want, rel=1e-10)


def test_inner_positive_definite():
    rng = np.random.default_rng(83)
    g = alg.MetricValue(3, random_spd(3, rng))
    for _ in range(10):
        a = random_value(3, 1, 1, rng)
        assert alg.inner(a, a, g) > 0.0


# --- algebraic curvature test ---------------------------------------------

def test_algebraic_curvature_constant_curvature_value():
    rng = np.random.default_rng(89)
    g = alg.MetricValue(3, random_spd(3, rng))
    rm = 0.5 * alg.wedge(alg.metric_as_form(g), alg.metric_as_form(g))
    assert alg.is_algebraic_curvature(rm, 1e-11)


def test_algebraic_curvature_counterexample():
    a = alg.basis_value(3, (0, 1), (0, 2))
    assert not alg.is_algebraic_curvature(a, 1e-11)


def test_algebraic_curvature_zero():
    assert alg.is_algebraic_curvature(alg.zero_value(3, 2, 2), 1e-11)


def test_bianchi_kernel_implies_symmetric():
    # numerical check that a vanishing Bianchi sum forces symmetry on (2,2)
    from scipy.linalg import null_space

    d = 3
    n22 = mi.count(d, 2) ** 2
    rows = []
    for idx in range(n22):
        comps = np.zeros(n22)
        comps[idx] = 1.0
        v = alg.DoubleFormValue(d, (2, 2), comps.reshape(mi.count(d, 2), mi.count(d, 2)))
        rows.append(alg.bianchi(v).comps.ravel())
    B = np.array(rows).T  # maps (2,2) comps to (3,1) comps
    for vec in null_space(B).T:
        v = alg.DoubleFormValue(d, (2, 2), vec.reshape(mi.count(d, 2), mi.count(d, 2)))
        assert (v - alg.transpose(v)).norm() < 1e-10


def test_curvature_action_constant_curvature_identity():
    # on symmetric (1,1) inputs the curvature action is -kappa g-wedge
    rng = np.random.default_rng(97)
    for d, kappa in ((2, 1.0), (3, 1.0), (3, -0.7)):
        lam = 1.3
        g = alg.MetricValue(d, lam ** 2 * np.eye(d))
        gf = alg.metric_as_form(g)
        rm = (0.5 * kappa) * alg.wedge(gf, gf)
        M = rng.normal(size=(d, d))
        f = alg.DoubleFormValue(d, (1, 1), M + M.T)
        got = alg.curvature_action(f, rm, g)
        want = -kappa * alg.g_wedge(f, g)
        assert (got - want).norm() < 1e-11 * max(want.norm(), 1.0)


def test_curvature_action_on_metric():
    rng = np.random.default_rng(101)
    for d in (2, 3):
        g = alg.MetricValue(d, random_spd(d, rng))
        gf = alg.metric_as_form(g)
        rm = 0.7 * 0.5 * alg.wedge(gf, gf)
        got = alg.curvature_action(gf, rm, g)
        assert (got - (-2.0) * rm).norm() < 1e-10 * max(rm.norm(), 1.0)


def test_curvature_action_on_one_forms():
    # (D om)(X,Y;Z) = -1/2 om(R(X,Y)Z), R recovered from the (2,2) value
    rng = np.random.default_rng(103)
    d = 3
    g = alg.MetricValue(d, random_spd(d, rng))
    gf = alg.metric_as_form(g)
    rm = 0.5 * alg.wedge(gf, gf)  # kappa = 1
    om = random_value(d, 1, 0, rng)
    got = alg.curvature_action(om, rm, g)
    RmT = to_dense(rm)  # Rm[a b; c e]
    want = np.zeros((mi.count(d, 2), d))
    for i, (a, b) in enumerate(mi.subsets(d, 2)):
        for c in range(d):
            # (R(e_a,e_b)e_c)^e = g^{ef} Rm(e_a,e_b; e_c, e_f)
            Rvec = g.g_inv @ RmT[a, b, c, :]
            want[i, c] = -0.5 * float(om.comps[:, 0] @ Rvec)
    assert np.allclose(got.comps, want, atol=1e-10)


def test_fiber_suite_bulk_randomized():
    # broad randomized sweep across dimensions and degrees (cheap, seeded)
    rng = np.random.default_rng(107)
    checks = 0
    for d in (2, 3, 4):
        g = alg.MetricValue(d, random_spd(d, rng))
        for k in range(d + 1):
            for m in range(d + 1):
                a = random_value(d, k, m, rng)
                scale = max(a.norm(), 1.0)
                assert (alg.transpose(alg.transpose(a)) - a).norm() < TOL * scale
                ss = alg.hodge_star(alg.hodge_star(a, g), g)
                assert (ss - (-1) ** (k * (d - k)) * a).norm() < 1e-11 * scale
                checks += 2
    assert checks > 40
