"""Lie-Cartan lift of the asymptotic-line equation.

In a chart (u, v, w) with slope p = dv/du the asymptotic directions satisfy
F(u, v, w, p) = e + 2 f p + g p^2 = 0, and the plane gives dw = q du with
q = -(a + b p) / c. The lifted field

    X = (F_p, p F_p, q F_p, -(F_u + p F_v + q F_w))

is tangent to {F = 0}. It vanishes on the criminant {F = F_p = 0} exactly
where the unique asymptotic direction is tangent to the parabolic surface.
All vectors returned here are in world order (x, y, z, p).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import ChartMismatch, NoConvergence, NotOnCriminant, SingularXi
from .expr import FieldSpec
from .geometry import EPS_XI, Chart, coefficient_jets, select_chart
from .jets import Jet, variable

__all__ = [
    "LieCartanState",
    "SpectralData",
    "lift_chart",
    "lift_parabolic",
    "project_to_hypersurface",
    "F_value",
    "lie_cartan_field",
    "jacobian_on_criminant",
    "spectral_pair",
    "project_to_criminant",
    "eps_f",
]


@dataclass(frozen=True)
class LieCartanState:
    x: float
    y: float
    z: float
    p: float
    chart: Chart = Chart(2)

    @property
    def point(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.p])

    @classmethod
    def from_vector(cls, vec: Sequence[float], chart: Chart) -> "LieCartanState":
        x, y, z, p = (float(t) for t in vec)
        return cls(x, y, z, p, chart)

    def to_dict(self) -> dict[str, Any]:
        return {"x": self.x, "y": self.y, "z": self.z, "p": self.p, "chart": self.chart.to_dict()}


@dataclass(frozen=True)
class SpectralData:
    sigma1: float
    sigma2: float
    disc: float
    lambdas: tuple[complex, complex]
    eigvecs: tuple[np.ndarray, np.ndarray] | None
    jacobian: np.ndarray
    chart: Chart
    orientation: int
    sigma1_closed: float
    omega_closed: float
    eigvec_residual: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
            "disc": self.disc,
            "lambda": [[z.real, z.imag] for z in self.lambdas],
            "chart": self.chart.to_dict(),
        }


def eps_f(e: float, f: float, g: float, p: float) -> float:
    """Tolerance on |F| and |F_p|, scaled like the coefficients and the slope."""
    return 1e-9 * (1.0 + abs(e) + abs(f) + abs(g)) * (1.0 + p * p)


def lift_chart(xi: np.ndarray, e: float, g: float, axis: int | None = None) -> Chart:
    """Chart for lifting: largest |xi_i| axis, swapped when |g| < |e|.

    In the swapped chart the slope dv/du stays finite for directions that
    are vertical in the unswapped one.
    """
    axis = int(np.argmax(np.abs(xi))) if axis is None else axis
    return Chart(axis, abs(g) < abs(e))


def _chart_tensors(spec: FieldSpec, state: LieCartanState, order: int) -> list[np.ndarray]:
    tensors = spec.jets(state.point, order + 1)
    xi = tensors[0]
    if np.linalg.norm(xi) < EPS_XI:
        raise SingularXi("xi vanishes at the lifted point", point=state.point.tolist())
    if abs(xi[state.chart.axis]) < EPS_XI:
        raise ChartMismatch(
            "stored chart is degenerate at this point",
            chart=state.chart.to_dict(),
            best=int(np.argmax(np.abs(xi))),
        )
    return tensors


def _lifted(spec: FieldSpec, state: LieCartanState, order: int) -> dict[str, Any]:
    """Jets in (u, v, w, p) of F and q, of the given order."""
    tensors = _chart_tensors(spec, state, order)
    co = coefficient_jets(tensors, state.chart, order)
    p = variable(np.asarray(state.p, dtype=float), 3, 4, order)
    e, f, g = (co[k].pad(4) for k in ("e", "f", "g"))
    a, b, c = (co[k].pad(4) for k in ("a", "b", "c"))
    F = e + f * p * 2.0 + g * p * p
    q = -(a + b * p) / c
    return {"F": F, "q": q, "p": p, "co": co, "xi": tensors[0]}


def F_value(spec: FieldSpec, state: LieCartanState) -> tuple[float, float, float]:
    """(F, F_p, q) at the state, in the state's chart."""
    L = _lifted(spec, state, 0)
    co = L["co"]
    e, f, g = (float(co[k].val) for k in ("e", "f", "g"))
    p = state.p
    return e + 2 * f * p + g * p * p, 2 * f + 2 * g * p, float(L["q"].val)


def _field_jets(L: dict[str, Any]) -> list[Jet]:
    F, q, p = L["F"], L["q"], L["p"]
    Fp = F.partial(3)
    D = F.partial(0) + p * F.partial(1) + q * F.partial(2)
    return [Fp, p * Fp, q * Fp, -D]


def _to_world4(chart: Chart, vec: np.ndarray) -> np.ndarray:
    out = np.empty(4)
    out[list(chart.perm) + [3]] = vec
    return out


def _perm4(chart: Chart) -> list[int]:
    return list(chart.perm) + [3]


def lie_cartan_field(spec: FieldSpec, state: LieCartanState) -> np.ndarray:
    """The lifted field at ``state`` as (dx, dy, dz, dp)."""
    L = _lifted(spec, state, 1)
    X = np.array([float(j.val) for j in _field_jets(L)])
    return _to_world4(state.chart, X)


def _check_criminant(L: dict[str, Any], state: LieCartanState) -> None:
    co = L["co"]
    e, f, g = (float(co[k].val) for k in ("e", "f", "g"))
    F = float(L["F"].val)
    Fp = float(L["F"].grad[3])
    tol = eps_f(e, f, g, state.p)
    if abs(F) > tol or abs(Fp) > tol:
        raise NotOnCriminant(
            "state is not on the criminant", F=F, F_p=Fp, tolerance=tol, state=state.to_dict()
        )


def _jacobian_chart(L: dict[str, Any]) -> np.ndarray:
    return np.stack([j.grad for j in _field_jets(L)])


def jacobian_on_criminant(spec: FieldSpec, state: LieCartanState, check: bool = True) -> np.ndarray:
    """Exact Jacobian of the lifted field, world ordered, at a criminant state."""
    L = _lifted(spec, state, 2)
    if check:
        _check_criminant(L, state)
    Dc = _jacobian_chart(L)
    P = _perm4(state.chart)
    out = np.empty((4, 4))
    out[np.ix_(P, P)] = Dc
    return out


def _principal_minor_sum(M: np.ndarray) -> float:
    total = 0.0
    n = M.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            total += M[i, i] * M[j, j] - M[i, j] * M[j, i]
    return float(total)


def spectral_pair(spec: FieldSpec, state: LieCartanState, check: bool = True) -> SpectralData:
    """Nontrivial eigenvalue pair of the lifted Jacobian at a criminant state.

    The characteristic polynomial is lambda^2 (lambda^2 - sigma1 lambda + sigma2)
    with sigma1 the trace and sigma2 the sum of principal 2x2 minors. The
    closed forms sigma1 = -(F_v + q_p F_w) and the discriminant
    (F_v + q_p F_w + 2S)^2 - 4 F_pp (D_u + p D_v + q D_w), where
    S = F_pu + p F_pv + q F_pw and D = F_u + p F_v + q F_w, are kept for
    cross-checking.
    """
    L = _lifted(spec, state, 2)
    if check:
        _check_criminant(L, state)
    Dc = _jacobian_chart(L)
    sigma1 = float(np.trace(Dc))
    sigma2 = _principal_minor_sum(Dc)
    disc = sigma1 * sigma1 - 4.0 * sigma2

    F, q, p = L["F"], L["q"], L["p"]
    Fv, Fw = float(F.grad[1]), float(F.grad[2])
    qp = float(q.grad[3])
    hessF = F.hess
    S = float(hessF[3, 0] + state.p * hessF[3, 1] + float(q.val) * hessF[3, 2])
    Fpp = float(hessF[3, 3])
    D = F.partial(0) + p * F.partial(1) + q * F.partial(2)
    Dgrad = D.grad
    transport = float(Dgrad[0] + state.p * Dgrad[1] + float(q.val) * Dgrad[2])
    sigma1_closed = -(Fv + qp * Fw)
    omega_closed = (Fv + qp * Fw + 2.0 * S) ** 2 - 4.0 * Fpp * transport

    root = complex(disc) ** 0.5
    lambdas = ((sigma1 + root) / 2.0, (sigma1 - root) / 2.0)
    eigvecs = None
    residual = 0.0
    P = _perm4(state.chart)
    if disc >= 0:
        vecs = []
        for lam in lambdas:
            lam = lam.real
            vec = np.array([1.0, state.p, float(q.val), (lam - S) / Fpp]) if Fpp != 0 else None
            if vec is None or not np.all(np.isfinite(vec)):
                vec = _null_vector(Dc - lam * np.eye(4))
            res = np.linalg.norm(Dc @ vec - lam * vec) / (1.0 + np.linalg.norm(vec))
            if res > 1e-7 * (1.0 + abs(lam)):
                vec = _null_vector(Dc - lam * np.eye(4))
                res = np.linalg.norm(Dc @ vec - lam * vec)
            residual = max(residual, float(res))
            world = np.empty(4)
            world[P] = vec
            vecs.append(world)
        eigvecs = (vecs[0], vecs[1])
    jac = np.empty((4, 4))
    jac[np.ix_(P, P)] = Dc
    xi = L["xi"]
    orientation = int(np.sign(xi[state.chart.axis])) * state.chart.orientation
    return SpectralData(
        sigma1, sigma2, disc, lambdas, eigvecs, jac, state.chart, orientation,
        sigma1_closed, omega_closed, residual,
    )


def _null_vector(M: np.ndarray) -> np.ndarray:
    _, _, vt = np.linalg.svd(M)
    return vt[-1]


def lift_parabolic(spec: FieldSpec, point: Sequence[float], axis: int | None = None) -> LieCartanState:
    """Lift a parabolic point to the criminant state p = -f/g in a lifting chart."""
    pt = np.asarray(point, dtype=float)
    xi, jac = spec.jets(pt, 1)
    if np.linalg.norm(xi) < EPS_XI:
        raise SingularXi("xi vanishes", point=pt.tolist())
    base = Chart(int(np.argmax(np.abs(xi))) if axis is None else axis)
    co = coefficient_jets([xi, jac], base, 0)
    chart = lift_chart(xi, float(co["e"].val), float(co["g"].val), base.axis)
    co = coefficient_jets([xi, jac], chart, 0)
    f, g = float(co["f"].val), float(co["g"].val)
    p = -f / g if g != 0 else 0.0
    return LieCartanState(float(pt[0]), float(pt[1]), float(pt[2]), float(p), chart)


def project_to_criminant(
    spec: FieldSpec, guess: LieCartanState, max_iter: int = 25, tol: float = 1e-12
) -> LieCartanState:
    """Newton projection onto {F = 0, F_p = 0} with minimum-norm steps.

    Steps are taken in all four chart coordinates; restricting to a fixed
    pair such as (w, p) fails whenever e, f, g do not depend on w.
    """
    state = guess
    P = _perm4(state.chart)
    for _ in range(max_iter):
        L = _lifted(spec, state, 2)
        F = L["F"]
        r = np.array([float(F.val), float(F.grad[3])])
        Jm = np.stack([F.grad, F.hess[3]])
        step_chart = -np.linalg.pinv(Jm) @ r
        step = np.empty(4)
        step[P] = step_chart
        state = LieCartanState.from_vector(state.vector + step, state.chart)
        if np.linalg.norm(step) < tol:
            return state
    co = _lifted(spec, state, 0)["co"]
    e, f, g = (float(co[k].val) for k in ("e", "f", "g"))
    Fv, Fp, _ = F_value(spec, state)
    if max(abs(Fv), abs(Fp)) <= eps_f(e, f, g, state.p):
        return state
    raise NoConvergence("criminant projection did not converge", state=state.to_dict())


def project_to_hypersurface(
    spec: FieldSpec, guess: LieCartanState, max_iter: int = 25, tol: float = 1e-13
) -> LieCartanState:
    """Minimum-norm Newton projection onto {F = 0} in the guess's chart."""
    state = guess
    P = _perm4(state.chart)
    for _ in range(max_iter):
        F = _lifted(spec, state, 1)["F"]
        grad = np.asarray(F.grad, dtype=float)
        gg = float(grad @ grad)
        if gg == 0.0:
            break
        step = np.empty(4)
        step[P] = -float(F.val) * grad / gg
        state = LieCartanState.from_vector(state.vector + step, state.chart)
        if np.linalg.norm(step) < tol:
            return state
    Fv, _, _ = F_value(spec, state)
    co = _lifted(spec, state, 0)["co"]
    e, f, g = (float(co[k].val) for k in ("e", "f", "g"))
    if abs(Fv) <= eps_f(e, f, g, state.p):
        return state
    raise NoConvergence("projection onto F = 0 did not converge", state=state.to_dict())
