import numpy as np
import pytest

from planefield.errors import NotInPlane, SingularXi
from planefield.expr import FieldSpec
from planefield.geometry import (
    AllDirections,
    Chart,
    PartiallyUmbilic,
    asymptotic_directions,
    chart_coefficients,
    chart_frame,
    curvature_invariant,
    direction_data,
    integrability_defect,
    jet_at,
    normal_section_curvature,
    principal_data,
)


def _parallel(u, v, tol=1e-9):
    u, v = np.asarray(u, float), np.asarray(v, float)
    return np.linalg.norm(np.cross(u / np.linalg.norm(u), v / np.linalg.norm(v))) < tol


def test_cusp_jet_at_origin(fields):
    jet = jet_at(fields["cusp"], [0, 0, 0], 1)
    assert np.array_equal(jet.xi, [0, 0, 1])
    assert np.array_equal(jet.jac, [[0, -1, 0], [1, 1, 0], [0, 0, 0]])


def test_saddle_xi_value(fields):
    assert np.array_equal(jet_at(fields["saddle"], [0, -1, 0], 0).xi, [1, -1, 1])


def test_zero_field_is_singular():
    with pytest.raises(SingularXi):
        jet_at(FieldSpec("0", "0", "0"), [0.1, 0.2, 0.3], 1)


def test_defects():
    _, d = integrability_defect(FieldSpec("2*x", "2*y", "2*z"), [0.3, -0.2, 0.9])
    assert d == 0
    curl, d = integrability_defect(FieldSpec("-y", "0", "1"), [0.4, 0.7, -1.0])
    assert np.array_equal(curl, [0, 0, 1]) and d == 1


def test_cusp_defect(fields):
    curl, d = integrability_defect(fields["cusp"], [0, 0, 0])
    assert np.array_equal(curl, [0, 0, 2]) and d == 2


@pytest.mark.parametrize("p", [(0.3, -0.4, 0.2), (-0.7, 0.1, 0.9)])
def test_cusp_chart_frame(fields, p):
    fr = chart_frame(fields["cusp"], p, Chart(2))
    assert (fr.e, fr.f, fr.g) == pytest.approx((2 * p[0], 0, 1), abs=1e-14)
    assert fr.K == pytest.approx(2 * p[0], abs=1e-14)


@pytest.mark.parametrize("p", [(0.3, -0.4, 0.2), (-0.7, 0.1, 0.9)])
def test_saddle_chart_frame(fields, p):
    fr = chart_frame(fields["saddle"], p, Chart(2))
    assert (fr.e, fr.f, fr.g) == pytest.approx((p[1], p[0] / 2, 1), abs=1e-14)
    assert fr.K == pytest.approx(p[1] - p[0] ** 2 / 4, abs=1e-14)
    assert fr.H == -(fr.e + fr.g) / 2


def test_focus_origin_is_parabolic(fields):
    fr = chart_frame(fields["focus"], [0, 0, 0])
    assert abs(fr.K) <= fr.eps_k
    h = 1e-6
    grad = [(chart_frame(fields["focus"], e * h).K - chart_frame(fields["focus"], -e * h).K) / (2 * h) for e in np.eye(3)]
    assert np.linalg.norm(grad) > 0.1


def test_chart_defaults_to_largest_component(fields):
    fr = chart_frame(fields["cusp"], [1, 3, 0])
    assert fr.chart.axis == 1


def test_direction_data_saddle_asymptotic(fields):
    dd = direction_data(fields["saddle"], [0, -1, 0], [1, 1, 0])
    assert dd.kn == pytest.approx(0, abs=1e-15)
    assert np.linalg.norm(dd.dir) == pytest.approx(1)


def test_direction_data_straight_field():
    dd = direction_data(FieldSpec("-y", "0", "1"), [0, 0, 0], [0, 1, 0])
    assert dd.kn == 0


def test_direction_not_in_plane(fields):
    with pytest.raises(NotInPlane):
        direction_data(fields["saddle"], [0, -1, 0], [1, 0, 0])


def test_saddle_asymptotic_pair(fields):
    dirs = asymptotic_directions(fields["saddle"], [0, -1, 0])
    assert len(dirs) == 2
    expected = [np.array([1, 1, 0]), np.array([1, -1, -2])]
    for e in expected:
        assert any(_parallel(d, e) for d in dirs)


def test_cusp_single_direction(fields):
    dirs = asymptotic_directions(fields["cusp"], [0, 0, 0])
    assert len(dirs) == 1 and _parallel(dirs[0], [1, 0, 0])


def test_sphere_elliptic_no_directions(sphere):
    assert asymptotic_directions(sphere, [0, 0, 1]) == []


def test_all_directions():
    # e = f = g = 0 at the origin: a, b linear in z only
    res = asymptotic_directions(FieldSpec("z", "z^2", "1"), [0, 0, 0])
    assert isinstance(res, AllDirections)


def test_sphere_partially_umbilic(sphere):
    res = principal_data(sphere, [0.6, 0, 0.8])
    assert isinstance(res, PartiallyUmbilic)
    assert res.k == pytest.approx(-2)


def test_saddle_principal_contains_asymptotic(fields):
    pd = principal_data(fields["saddle"], [0, 0, 0])
    assert any(_parallel(P, [1, 0, 0]) for P in (pd.P1, pd.P2))
    assert (pd.k1, pd.k2) == pytest.approx((-1, 0), abs=1e-14)


def test_principal_data_properties(generic, rng):
    for p in rng.uniform(-1, 1, size=(20, 3)):
        pd = principal_data(generic, p)
        assert pd.k1 <= pd.k2
        assert abs(np.dot(pd.P1, pd.P2)) < 1e-12
        assert direction_data(generic, p, pd.P1).kn == pytest.approx(pd.k1, abs=1e-12)
        assert direction_data(generic, p, pd.P2).kn == pytest.approx(pd.k2, abs=1e-12)


def test_hyperbolic_point_principal_sign(fields):
    pd = principal_data(fields["saddle"], [0.3, -1.0, 0.2])
    assert pd.k1 * pd.k2 < 0
    assert np.sign(pd.k1 * pd.k2) == np.sign(chart_frame(fields["saddle"], [0.3, -1.0, 0.2]).K)


def test_normal_section_saddle(fields):
    assert abs(normal_section_curvature(fields["saddle"], [0, -1, 0], [1, 1, 0], h=1e-3)) < 1e-5


def test_normal_section_sphere(sphere):
    # the oracle is not divided by |xi|; dividing gives the geometric curvature 1
    for d in ([1, 0, 0], [0, 1, 0], [1, 1, 0]):
        val = normal_section_curvature(sphere, [0, 0, 1], d, h=1e-3)
        assert abs(val) / 2.0 == pytest.approx(1, abs=1e-5)


def test_curvature_invariant_matches_chart_scale(generic, rng):
    pts = rng.uniform(-1, 1, size=(50, 3))
    inv = curvature_invariant(generic, pts)
    for axis in range(3):
        co = chart_coefficients(generic, pts, axis=axis)
        c = co["xi"][:, axis]
        assert np.allclose(co["K"] * c**2, inv, rtol=1e-9, atol=1e-12)


def test_curvature_invariant_is_principal_product(generic, rng):
    for p in rng.uniform(-1, 1, size=(20, 3)):
        pd = principal_data(generic, p)
        xi = generic.values(p)
        assert curvature_invariant(generic, p) == pytest.approx(pd.k1 * pd.k2 * (xi @ xi), rel=1e-8)
