import numpy as np
import pytest

from planefield.errors import NotOnCriminant
from planefield.geometry import Chart, chart_frame
from planefield.liecartan import (
    F_value,
    LieCartanState,
    jacobian_on_criminant,
    lie_cartan_field,
    lift_parabolic,
    project_to_criminant,
    project_to_hypersurface,
    spectral_pair,
)
from planefield.parabolic import special_defect

ORIGIN = LieCartanState(0.0, 0.0, 0.0, 0.0)
SPECIAL_FIELDS = ["saddle", "node", "focus", "saddle-node", "node-focus", "hopf-hyperbolic", "hopf-elliptic"]


def _numeric_jacobian(spec, state, h=1e-6):
    base = state.vector
    cols = []
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        plus = lie_cartan_field(spec, LieCartanState.from_vector(base + e, state.chart))
        minus = lie_cartan_field(spec, LieCartanState.from_vector(base - e, state.chart))
        cols.append((plus - minus) / (2 * h))
    return np.stack(cols, axis=1)


def test_F_values(fields):
    assert F_value(fields["saddle"], ORIGIN)[:2] == (0.0, 0.0)
    assert F_value(fields["cusp"], ORIGIN)[:2] == (0.0, 0.0)
    F, Fp, _ = F_value(fields["saddle"], LieCartanState(0.0, -1.0, 0.0, 1.0))
    assert (F, Fp) == (0.0, 2.0)


def test_F_is_the_chart_quadratic(fields, rng):
    for x, y, z, p in rng.uniform(-1, 1, size=(10, 4)):
        F, Fp, q = F_value(fields["saddle"], LieCartanState(x, y, z, p))
        assert F == pytest.approx(y + x * p + p * p, abs=1e-14)
        assert Fp == pytest.approx(x + 2 * p, abs=1e-14)
        F, _, _ = F_value(fields["cusp"], LieCartanState(x, y, z, p))
        assert F == pytest.approx(2 * x + p * p, abs=1e-14)


def test_field_values(fields):
    assert np.array_equal(lie_cartan_field(fields["saddle"], ORIGIN), [0, 0, 0, 0])
    assert np.array_equal(lie_cartan_field(fields["cusp"], ORIGIN), [0, 0, 0, -2])


def test_saddle_jacobian(fields):
    J = jacobian_on_criminant(fields["saddle"], ORIGIN)
    assert np.allclose(J[0], [1, 0, 0, 2])
    assert np.trace(J) == pytest.approx(-1)


def test_off_criminant_rejected(fields):
    with pytest.raises(NotOnCriminant):
        jacobian_on_criminant(fields["saddle"], LieCartanState(0.0, -1.0, 0.0, 1.0))


def test_saddle_spectrum(fields):
    sd = spectral_pair(fields["saddle"], ORIGIN)
    assert (sd.sigma1, sd.sigma2, sd.disc) == pytest.approx((-1, -2, 9))
    assert sorted(l.real for l in sd.lambdas) == pytest.approx([-2, 1], abs=1e-12)
    assert sd.sigma1_closed == pytest.approx(-1)
    assert sd.omega_closed == pytest.approx(9)


@pytest.mark.parametrize(
    "name, sigma1, sigma2, disc",
    [
        ("node", -6, 8, 4),
        ("focus", -1, 12, -47),
        ("saddle-node", -2, 0, 4),
        ("node-focus", -2, 1, 0),
        ("hopf-hyperbolic", 0, 8, -32),
        ("hopf-elliptic", 0, -24, 96),
    ],
)
def test_origin_spectra(fields, name, sigma1, sigma2, disc):
    sd = spectral_pair(fields[name], lift_parabolic(fields[name], [0, 0, 0]))
    assert (sd.sigma1, sd.sigma2, sd.disc) == pytest.approx((sigma1, sigma2, disc), abs=1e-10)


def test_focus_and_node_signs(fields):
    assert spectral_pair(fields["focus"], ORIGIN).disc < 0
    sd = spectral_pair(fields["node"], ORIGIN)
    assert sd.sigma2 > 0 and sd.disc > 0


@pytest.mark.parametrize("name", SPECIAL_FIELDS)
def test_jacobian_matches_numerical_oracle(fields, name):
    state = lift_parabolic(fields[name], [0, 0, 0])
    J = jacobian_on_criminant(fields[name], state)
    assert np.allclose(J, _numeric_jacobian(fields[name], state), atol=1e-8)


@pytest.mark.parametrize("name", SPECIAL_FIELDS)
def test_two_structural_zero_eigenvalues(fields, name):
    state = lift_parabolic(fields[name], [0, 0, 0])
    sd = spectral_pair(fields[name], state)
    ev = np.linalg.eigvals(sd.jacobian)
    lam = np.array(sd.lambdas)
    # remove the nontrivial pair, the rest must vanish
    rest = list(ev)
    for l in lam:
        rest.pop(int(np.argmin(np.abs(np.array(rest) - l))))
    assert np.max(np.abs(rest)) < 1e-8
    if abs(sd.sigma2) > 1e-9:
        assert np.linalg.matrix_rank(sd.jacobian, tol=1e-8) <= 2


@pytest.mark.parametrize("name", SPECIAL_FIELDS)
def test_closed_form_trace(fields, name):
    sd = spectral_pair(fields[name], lift_parabolic(fields[name], [0, 0, 0]))
    assert sd.sigma1 == pytest.approx(sd.sigma1_closed, abs=1e-8)
    assert sd.disc == pytest.approx(sd.omega_closed, abs=1e-8)


def test_eigenvectors_verified(fields):
    sd = spectral_pair(fields["saddle"], ORIGIN)
    for lam, v in zip(sd.lambdas, sd.eigvecs):
        assert np.linalg.norm(sd.jacobian @ v - lam.real * v) < 1e-7


def test_saddle_node_eigenvector_tangency(fields):
    spec = fields["saddle-node"]
    state = lift_parabolic(spec, [0, 0, 0])
    sd = spectral_pair(spec, state)
    # tangent space of {F = 0, F_p = 0} from the numerical gradients of F and F_p
    h = 1e-6
    grads = np.zeros((2, 4))
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        fp = F_value(spec, LieCartanState.from_vector(state.vector + e, state.chart))
        fm = F_value(spec, LieCartanState.from_vector(state.vector - e, state.chart))
        grads[0, k] = (fp[0] - fm[0]) / (2 * h)
        grads[1, k] = (fp[1] - fm[1]) / (2 * h)
    res = [np.linalg.norm(grads @ (v / np.linalg.norm(v))) for v in sd.eigvecs]
    zero = int(np.argmin(np.abs(np.real(sd.lambdas))))
    assert abs(sd.lambdas[zero]) < 1e-9
    assert res[zero] < 1e-7
    assert res[1 - zero] > 1e-3


def test_singularity_criterion(fields):
    # field vanishes at a lifted parabolic point exactly when phi = 0
    for name, pts in [("cusp", [(0, 0.3, -0.2), (0, -1, 0.5)]), ("saddle", [(0, 0, 0.7)]), ("focus", [(0, 0.5, 0.4375)])]:
        spec = fields[name]
        for p in pts:
            phi, _ = special_defect(spec, p)
            X = lie_cartan_field(spec, lift_parabolic(spec, p))
            assert (np.linalg.norm(X) < 1e-8) == (abs(phi) < 1e-8), (name, p)


def test_project_to_criminant(fields):
    spec = fields["saddle"]
    st = project_to_criminant(spec, LieCartanState(0.1, 0.05, 0.3, -0.02))
    F, Fp, _ = F_value(spec, st)
    assert abs(F) < 1e-12 and abs(Fp) < 1e-12
    fr = chart_frame(spec, st.point, Chart(2))
    assert abs(fr.K) < 1e-10


def test_project_to_hypersurface(fields):
    spec = fields["node"]
    st = project_to_hypersurface(spec, LieCartanState(0.1, 0.05, 0.3, 0.4))
    assert abs(F_value(spec, st)[0]) < 1e-12
