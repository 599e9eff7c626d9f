import time

import numpy as np
import pytest

from planefield.errors import ConfigError, EmptySurface, NotCuspidal, NotParabolic
from planefield.expr import Domain, FieldSpec
from planefield.geometry import chart_frame
from planefield.liecartan import (
    LieCartanState,
    lie_cartan_field,
    lift_parabolic,
    project_to_hypersurface,
    spectral_pair,
)
from planefield.integrate import integrate_lie_cartan
from planefield.parabolic import (
    Tag,
    classify_parabolic_point,
    cusp_model,
    detect_transitions,
    drift_coefficient,
    eps_phi,
    extract_parabolic_surface,
    hopf_delta,
    project_to_parabolic,
    special_defect,
    special_system,
    trace_special_curve,
)


def _K(spec, r):
    return chart_frame(spec, r).K


# ------------------------------------------------------------ projection


def test_project_cusp_one_step(fields):
    r = project_to_parabolic(fields["cusp"], [0.1, 3, -2])
    assert np.allclose(r, [0, 3, -2], atol=1e-12)


def test_project_saddle_lands_on_reference_surface(fields):
    r = project_to_parabolic(fields["saddle"], [2, 1.1, 0])
    assert abs(4 * r[1] - r[0] ** 2) < 1e-10
    assert np.linalg.norm(r - [2, 1, 0]) < 0.1


def test_project_fixed_point(fields):
    r0 = np.array([2.0, 1.0, 0.3])
    assert np.allclose(project_to_parabolic(fields["saddle"], r0), r0, atol=1e-12)


# ------------------------------------------------------------ special defect


def test_defect_cusp(fields):
    for y, z in [(0, 0), (1, -3), (-0.5, 0.7)]:
        phi, A = special_defect(fields["cusp"], [0, y, z])
        assert phi == pytest.approx(2.0, abs=1e-12)
        xi = fields["cusp"].jets(np.array([0.0, y, z]), 0)[0]
        assert A[0] == pytest.approx(1.0) and abs(xi @ A) < 1e-12
    assert np.allclose(special_defect(fields["cusp"], [0, 0, 0])[1], [1, 0, 0], atol=1e-12)


def test_defect_saddle_axis(fields):
    for z in (-1.0, 0.0, 0.5):
        phi, A = special_defect(fields["saddle"], [0, 0, z])
        assert abs(phi) < 1e-12
        assert np.allclose(A / A[0], [1, 0, 0], atol=1e-12)


def test_defect_saddle_off_axis(fields):
    phi, _ = special_defect(fields["saddle"], [2, 1, 0])
    assert abs(phi) > 1e-3


def test_defect_rejects_nonparabolic(fields):
    with pytest.raises(NotParabolic):
        special_defect(fields["saddle"], [0, 1, 0])


def test_special_points_are_lie_cartan_singular(fields):
    # samples along special curves lift to zeros of the lifted field
    for name in ("saddle", "focus", "saddle-node"):
        curve = trace_special_curve(fields[name], [0, 0, 0], max_samples=20)
        for s in curve.samples:
            X = lie_cartan_field(fields[name], LieCartanState(*s.point, s.p_lift, s.chart))
            assert np.linalg.norm(X) < 1e-6


def test_non_special_vertices_bounded_below(fields):
    spec = fields["saddle"]
    mesh = extract_parabolic_surface(spec, resolution=12, classify=False)
    ratios = []
    for r, phi in zip(mesh.vertices, mesh.phi):
        sy = special_system(spec, r)
        if abs(phi) <= 10 * eps_phi(np.linalg.norm(sy["grad_K"]), np.linalg.norm(sy["A"])):
            continue
        X = lie_cartan_field(spec, lift_parabolic(spec, r))
        ratios.append(np.linalg.norm(X) / abs(phi))
    print(f"min |X| / |phi| over {len(ratios)} vertices: {min(ratios):.3g}")
    assert len(ratios) > 50
    assert min(ratios) > 1e-3


# ------------------------------------------------------------ classification


def test_classify_examples(fields):
    assert classify_parabolic_point(fields["cusp"], [0, 1, -3]).tag == Tag.CUSPIDAL
    c = classify_parabolic_point(fields["saddle"], [0, 0, 0.5])
    assert c.tag == Tag.SADDLE
    assert c.evidence["sigma2"] == pytest.approx(-2.0, abs=1e-10)
    assert classify_parabolic_point(fields["saddle-node"], [0, 0, 0]).tag == Tag.SADDLE_NODE


def test_classify_off_surface(fields):
    spec = fields["saddle"]
    assert classify_parabolic_point(spec, [0, 1, 0]).tag == (Tag.ELLIPTIC if _K(spec, [0, 1, 0]) > 0 else Tag.HYPERBOLIC)
    assert classify_parabolic_point(spec, [0, -1, 0]).tag == Tag.HYPERBOLIC


def test_classify_singular_xi():
    spec = FieldSpec("x", "y", "z", Domain((-1, -1, -1), (1, 1, 1)))
    assert classify_parabolic_point(spec, [0, 0, 0]).tag == Tag.SINGULAR_XI


def test_classify_deterministic(fields):
    for name, pt in [("node", [0.1, -0.03, -0.0136]), ("focus", [0, 0.5, 0.4375])]:
        a = classify_parabolic_point(fields[name], pt)
        b = classify_parabolic_point(fields[name], pt)
        assert a.tag == b.tag and a.evidence == b.evidence


# ------------------------------------------------------------ tracing


def test_trace_saddle_axis(fields):
    curve = trace_special_curve(fields["saddle"], [0, 0, 0], max_samples=60)
    pts = np.array([s.point for s in curve.samples])
    assert np.abs(pts[:, :2]).max() < 1e-10
    assert {s.tag for s in curve.samples} == {Tag.SADDLE}
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    assert steps.max() <= curve.step * (1 + 1e-9)


def test_trace_node_reference_curve(fields):
    curve = trace_special_curve(fields["node"], [0.2, -0.12, -0.024], max_samples=120)
    for s in curve.samples:
        x = s.point[0]
        ref = [x, -x * x - 0.4 * x, x**3 / 5 - 4 * x * x / 25 - 12 * x / 125]
        assert np.linalg.norm(s.point - ref) < 1e-6
    inner = [s.tag for s in curve.samples if abs(s.point[0]) <= 0.15]
    assert inner and set(inner) == {Tag.NODE}


def test_trace_focus_reference_curve(fields):
    curve = trace_special_curve(fields["focus"], [0, 0.5, 0.4], max_samples=120)
    for s in curve.samples:
        y = s.point[1]
        assert np.linalg.norm(s.point - [0, y, y - y * y / 4]) < 1e-6
    assert {s.tag for s in curve.samples} == {Tag.FOCUS}


def test_sample_residuals(fields):
    curve = trace_special_curve(fields["node-focus"], [0, 0, 0], max_samples=40)
    for s in curve.samples:
        assert abs(s.K_residual) < 1e-9
        assert abs(s.phi_residual) < 1e-8


# ------------------------------------------------------------ transitions


def _transitions(spec, seed=(0, 0, 0), n=60):
    return detect_transitions(spec, trace_special_curve(spec, seed, max_samples=n))


def _near_origin(curve, radius=0.2):
    return [t for t in curve.transitions if np.linalg.norm(t.point) < radius]


def test_saddle_node_transition(fields):
    curve = _transitions(fields["saddle-node"])
    (t,) = _near_origin(curve)
    assert t.kind == "SaddleNode"
    assert np.linalg.norm(t.point) < 1e-8
    i, j = t.interval
    assert np.sign(curve.samples[i].sigma2) != np.sign(curve.samples[j].sigma2)
    near = [s for s in curve.samples if 1e-3 < abs(s.point[0]) < 0.1]
    assert {s.tag for s in near if s.point[0] < 0} == {Tag.SADDLE}
    assert {s.tag for s in near if s.point[0] > 0} == {Tag.NODE}


def test_saddle_node_curve_never_reaches_positive_y(fields):
    # the golden sides are given along y, but the traced curve is y = -x^2
    curve = trace_special_curve(fields["saddle-node"], [0, 0, 0], max_samples=60)
    pts = np.array([s.point for s in curve.samples])
    assert np.allclose(pts[:, 1], -pts[:, 0] ** 2, atol=1e-9)
    assert pts[:, 1].max() < 1e-12


def test_node_focus_transition(fields):
    curve = _transitions(fields["node-focus"])
    (t,) = _near_origin(curve)
    assert t.kind == "NodeFocus"
    assert np.linalg.norm(t.point) < 1e-8
    near = [s for s in curve.samples if 1e-3 < abs(s.point[0]) < 0.1]
    assert {s.tag for s in near if s.point[0] < 0} == {Tag.NODE}
    assert {s.tag for s in near if s.point[0] > 0} == {Tag.FOCUS}


def test_hopf_transition_location(fields):
    curve = _transitions(fields["hopf-hyperbolic"], n=40)
    (t,) = curve.transitions
    assert t.kind == "Hopf"
    assert np.linalg.norm(t.point) < 1e-8
    i, j = t.interval
    assert curve.samples[i].disc < 0 and curve.samples[j].disc < 0
    assert abs(t.delta) == pytest.approx(abs(t.dsigma1_half_ds))


def test_hopf_curve_sign(fields):
    # traced curve is (x, 4x, -x^2 (x + 2)); the golden (x, -4x, ...) lies on K = 0 but is not special
    spec = fields["hopf-hyperbolic"]
    curve = trace_special_curve(spec, [0, 0, 0], max_samples=40)
    for s in curve.samples:
        x = s.point[0]
        assert np.linalg.norm(s.point - [x, 4 * x, -x * x * (x + 2)]) < 1e-8
    golden = [0.1, -0.4, -0.001 - 0.02]
    assert abs(_K(spec, golden)) < 1e-12
    assert abs(special_defect(spec, golden)[0]) > 0.1


def _signed_permutation(perm, signs):
    comps = ["x^3-x*y-y+z", "x+y", "1"]
    names = "xyz"
    inv = {names[j]: ("-" if signs[i] < 0 else "") + names[i] for i, j in enumerate(perm)}
    import re

    def sub(t):
        return re.sub(r"[xyz]", lambda m: "(" + inv[m.group()] + ")", t)

    new = [("-" if signs[i] < 0 else "") + "(" + sub(comps[j]) + ")" for i, j in enumerate(perm)]
    return FieldSpec(*new, Domain((-2, -2, -2), (2, 2, 2)))


@pytest.mark.parametrize("perm,signs", [
    ((0, 1, 2), (1, 1, 1)), ((0, 1, 2), (1, -1, -1)), ((1, 0, 2), (-1, 1, 1)),
    ((2, 0, 1), (1, 1, 1)), ((0, 2, 1), (-1, -1, -1)), ((1, 2, 0), (1, -1, 1)),
])
def test_hopf_class_invariant_under_coordinate_changes(perm, signs, fields):
    ref = _transitions(fields["hopf-hyperbolic"], n=40).transitions[0]
    moved = _transitions(_signed_permutation(perm, signs), n=40).transitions
    assert len(moved) == 1
    assert moved[0].tag == ref.tag
    assert moved[0].delta == pytest.approx(ref.delta, rel=1e-4)


def test_drift_coefficient_normal_form():
    # dx = eta (u^2 + v^2), du = alpha x u - omega v, dv = omega u + alpha x v
    for eta, alpha in [(0.7, 1.0), (-1.3, 0.4)]:
        def field(s):
            x, u, v = s
            return np.array([eta * (u * u + v * v), alpha * x * u - 2.0 * v, 2.0 * u + alpha * x * v])

        assert drift_coefficient(field, np.zeros(3), np.array([1.0, 0, 0])) == pytest.approx(eta, rel=1e-6)
        assert drift_coefficient(field, np.zeros(3), np.array([-2.0, 0, 0])) == pytest.approx(-eta / 2, rel=1e-6)


def test_hopf_tag_matches_orbit_behaviour(fields):
    """Heteroclinic orbits (elliptic) decay in both time directions; hyperbolic ones escape."""
    spec = fields["hopf-hyperbolic"]
    t = _transitions(spec, n=40).transitions[0]
    sy = special_system(spec, t.point)
    state = LieCartanState(*t.point, sy["p"], sy["chart"])
    J = spectral_pair(spec, state, check=False).jacobian
    lam, vecs = np.linalg.eig(J)
    a = vecs[:, int(np.argmax(lam.imag))].real
    start = np.array([*t.point, sy["p"]]) + 0.03 * a / np.linalg.norm(a)
    g = project_to_hypersurface(spec, LieCartanState(*start, sy["chart"]))
    decays = []
    for reverse in (False, True):
        c = integrate_lie_cartan(spec, g, t_max=150.0, reverse=reverse, max_step=0.2, tol=1e-8)
        T = np.asarray(c.t)
        size = np.array([np.linalg.norm(lie_cartan_field(spec, LieCartanState(*x, sy["chart"])))
                         for x in np.asarray(c.states)])
        decays.append(size[T > T[-1] - 10].max() / size[T < 10].max())
    assert all(d < 0.5 or d > 2.0 for d in decays), decays
    heteroclinic = all(d < 0.5 for d in decays)
    assert heteroclinic == (t.tag == Tag.HOPF_ELLIPTIC)


def test_hopf_delta_standalone_matches_transition(fields):
    spec = fields["hopf-hyperbolic"]
    t = _transitions(spec, n=40).transitions[0]
    delta, _ = hopf_delta(spec, t.point)
    assert delta == pytest.approx(t.delta, rel=1e-3)


# ------------------------------------------------------------ tangency at transitions


def test_saddle_node_tangent(fields):
    spec = fields["saddle-node"]
    curve = trace_special_curve(spec, [0, 0, 0], max_samples=4, step=1e-4)
    pts = np.array([s.point for s in curve.samples])
    k = int(np.argmin(np.linalg.norm(pts, axis=1)))
    tan = pts[k + 1] - pts[k - 1]
    xi = spec.jets(pts[k], 0)[0]
    assert abs(xi @ tan) / np.linalg.norm(tan) < 1e-5
    _, A = special_defect(spec, pts[k])
    cos = abs(A @ tan) / (np.linalg.norm(A) * np.linalg.norm(tan))
    assert np.arccos(min(cos, 1.0)) < 1e-4


def test_hopf_tangent(fields):
    spec = fields["hopf-hyperbolic"]
    curve = trace_special_curve(spec, [0, 0, 0], max_samples=4, step=1e-4)
    pts = np.array([s.point for s in curve.samples])
    k = int(np.argmin(np.linalg.norm(pts, axis=1)))
    tan = pts[k + 1] - pts[k - 1]
    xi = spec.jets(pts[k], 0)[0]
    assert abs(xi @ tan) / np.linalg.norm(tan) < 1e-5
    _, A = special_defect(spec, pts[k])
    assert np.linalg.matrix_rank(np.stack([A / np.linalg.norm(A), tan / np.linalg.norm(tan)]), tol=1e-3) == 2


# ------------------------------------------------------------ cusp model


def test_cusp_model_origin(fields):
    I, R = cusp_model(fields["cusp"], [0, 0, 0])
    assert I == pytest.approx(2.0) and R == pytest.approx(2.0)


def test_cusp_model_translated(fields):
    # same values as at the origin once the solved coordinate is pinned to z
    assert cusp_model(fields["cusp"], [0, 5, 1], axis=2) == pytest.approx(cusp_model(fields["cusp"], [0, 0, 0], axis=2))


def test_cusp_model_rejects_special_point(fields):
    with pytest.raises(NotCuspidal):
        cusp_model(fields["saddle"], [0, 0, 0])


# ------------------------------------------------------------ mesh


def test_mesh_cusp_plane(fields):
    mesh = extract_parabolic_surface(fields["cusp"], resolution=16, classify=False)
    assert np.abs(mesh.vertices[:, 0]).max() < 1e-9
    assert mesh.is_manifold()


def test_mesh_saddle_surface(fields):
    mesh = extract_parabolic_surface(fields["saddle"], resolution=20)
    v = mesh.vertices
    assert np.abs(4 * v[:, 1] - v[:, 0] ** 2).max() < 1e-8
    assert mesh.converged.all()
    assert mesh.is_manifold()


def test_mesh_classes_match_standalone(fields):
    spec = fields["saddle"]
    mesh = extract_parabolic_surface(spec, resolution=10)
    for k in range(0, len(mesh.vertices), max(1, len(mesh.vertices) // 25)):
        assert mesh.classes[k] == classify_parabolic_point(spec, mesh.vertices[k]).tag.value


def test_mesh_deterministic(fields):
    a = extract_parabolic_surface(fields["saddle"], resolution=12, classify=False)
    b = extract_parabolic_surface(fields["saddle"], resolution=12, classify=False)
    assert np.array_equal(a.vertices, b.vertices) and np.array_equal(a.triangles, b.triangles)


def test_mesh_empty(sphere):
    with pytest.raises(EmptySurface):
        extract_parabolic_surface(sphere, resolution=8)


def test_mesh_resolution_guard(fields):
    with pytest.raises(ConfigError):
        extract_parabolic_surface(fields["saddle"], resolution=4)


def test_mesh_timing(fields):
    t0 = time.perf_counter()
    extract_parabolic_surface(fields["cusp"], resolution=16)
    assert time.perf_counter() - t0 < 30
