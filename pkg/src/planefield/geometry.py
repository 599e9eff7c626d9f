"""Pointwise invariants of the plane field orthogonal to xi = (a, b, c).

Chart conventions. A chart solves the plane equation for one coordinate w,
writing the plane as ``dw = -(a du + b dv) / c`` with (a, b, c) the components
of xi along (u, v, w). Non-swapped charts use cyclic orderings
(x, y, z), (y, z, x), (z, x, y); a swapped chart exchanges u and v, which
exchanges the roles of e and g. In a chart the asymptotic directions solve
``e du^2 + 2 f du dv + g dv^2 = 0`` where the quadratic form is the
restriction of the Jacobian of xi to the plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import IntegrationFailure, NotInPlane, SingularXi
from .expr import FieldSpec
from .jets import Jet

__all__ = [
    "EPS_XI",
    "EPS_TAN",
    "Chart",
    "JetFrame",
    "ChartFrame",
    "DirectionData",
    "PrincipalData",
    "AllDirections",
    "ALL_DIRECTIONS",
    "PartiallyUmbilic",
    "PARTIALLY_UMBILIC",
    "eps_k",
    "jet_at",
    "integrability_defect",
    "select_chart",
    "coefficient_jets",
    "chart_frame",
    "chart_coefficients",
    "curvature_invariant",
    "direction_data",
    "asymptotic_directions",
    "plane_basis",
    "principal_data",
    "normal_section_curvature",
]

EPS_XI = 1e-12
EPS_TAN = 1e-9
AXIS_NAMES = ("x", "y", "z")


def eps_k(e: Any, f: Any, g: Any) -> Any:
    """Parabolic membership tolerance, scaled by the local coefficient size."""
    return 1e-9 * (1.0 + np.abs(e) + np.abs(f) + np.abs(g))


@dataclass(frozen=True)
class Chart:
    axis: int
    swap: bool = False

    @property
    def perm(self) -> tuple[int, int, int]:
        u, v = (self.axis + 1) % 3, (self.axis + 2) % 3
        return (v, u, self.axis) if self.swap else (u, v, self.axis)

    @property
    def orientation(self) -> int:
        return -1 if self.swap else 1

    @property
    def label(self) -> str:
        return AXIS_NAMES[self.axis] + ("'" if self.swap else "")

    def to_chart(self, vec: np.ndarray) -> np.ndarray:
        return np.asarray(vec)[..., list(self.perm)]

    def to_world(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec, dtype=float)
        out = np.empty_like(vec)
        out[..., list(self.perm)] = vec
        return out

    def to_dict(self) -> dict[str, Any]:
        return {"axis": AXIS_NAMES[self.axis], "swap": self.swap}


@dataclass(frozen=True)
class JetFrame:
    point: np.ndarray
    xi: np.ndarray
    jac: np.ndarray
    hess: np.ndarray | None = None
    third: np.ndarray | None = None

    @property
    def tensors(self) -> list[np.ndarray]:
        return [t for t in (self.xi, self.jac, self.hess, self.third) if t is not None]


@dataclass(frozen=True)
class ChartFrame:
    point: np.ndarray
    chart: Chart
    e: float
    f: float
    g: float
    K: float
    H: float
    valid: bool

    @property
    def eps_k(self) -> float:
        return float(eps_k(self.e, self.f, self.g))

    def to_dict(self) -> dict[str, Any]:
        return {
            "chart": self.chart.to_dict(),
            "e": self.e,
            "f": self.f,
            "g": self.g,
            "K": self.K,
            "H": self.H,
            "valid": self.valid,
        }


@dataclass(frozen=True)
class DirectionData:
    dir: np.ndarray
    kn: float
    tg: float


@dataclass(frozen=True)
class PrincipalData:
    k1: float
    k2: float
    P1: np.ndarray
    P2: np.ndarray


class AllDirections:
    """Every in-plane direction is asymptotic (e = f = g = 0)."""

    def __repr__(self) -> str:
        return "AllDirections"


class PartiallyUmbilic:
    """Every in-plane direction is principal (k1 = k2)."""

    def __init__(self, k: float = math.nan) -> None:
        self.k = k

    def __repr__(self) -> str:
        return f"PartiallyUmbilic(k={self.k!r})"


ALL_DIRECTIONS = AllDirections()
PARTIALLY_UMBILIC = PartiallyUmbilic


def _as_point(point: Sequence[float]) -> np.ndarray:
    p = np.asarray(point, dtype=float).reshape(3)
    if not np.all(np.isfinite(p)):
        raise ValueError("point must be finite")
    return p


def jet_at(spec: FieldSpec, point: Sequence[float], order: int = 2) -> JetFrame:
    """Value and derivatives of xi at a point. Raises SingularXi where xi vanishes."""
    p = _as_point(point)
    tensors = spec.jets(p, order)
    if np.linalg.norm(tensors[0]) < EPS_XI:
        raise SingularXi("xi vanishes; the plane is not defined", point=p.tolist())
    tensors += [None] * (4 - len(tensors))
    return JetFrame(p, *tensors)


def curl_of(jac: np.ndarray) -> np.ndarray:
    return np.stack(
        [
            jac[..., 2, 1] - jac[..., 1, 2],
            jac[..., 0, 2] - jac[..., 2, 0],
            jac[..., 1, 0] - jac[..., 0, 1],
        ],
        axis=-1,
    )


def integrability_defect(spec: FieldSpec, point: Sequence[float]) -> tuple[np.ndarray, float]:
    """Return (curl xi, <xi, curl xi>); the defect vanishes for integrable fields."""
    jet = jet_at(spec, point, 1)
    curl = curl_of(jet.jac)
    return curl, float(np.dot(jet.xi, curl))


def select_chart(xi: np.ndarray) -> Chart:
    return Chart(int(np.argmax(np.abs(xi))))


def _component_jet(tensors: list[np.ndarray], comp: int, perm: list[int], order: int,
                   deriv: int | None = None) -> Jet:
    if deriv is None:
        val = tensors[0][..., comp]
        if order == 0:
            return Jet(val)
        grad = tensors[1][..., comp, :][..., perm]
        if order == 1:
            return Jet(val, grad)
        hess = tensors[2][..., comp, :, :][..., perm, :][..., :, perm]
        return Jet(val, grad, hess)
    val = tensors[1][..., comp, deriv]
    if order == 0:
        return Jet(val)
    grad = tensors[2][..., comp, deriv, :][..., perm]
    if order == 1:
        return Jet(val, grad)
    hess = tensors[3][..., comp, deriv, :, :][..., perm, :][..., :, perm]
    return Jet(val, grad, hess)


def coefficient_jets(tensors: list[np.ndarray], chart: Chart, order: int = 0) -> dict[str, Jet]:
    """Jets in chart coordinates (u, v, w) of a, b, c, e, f, g and K.

    ``tensors`` must hold derivatives of xi up to ``order + 1``.
    """
    perm = list(chart.perm)
    u, v, w = perm

    def comp(i: int, d: int | None = None) -> Jet:
        return _component_jet(tensors, i, perm, order, d)

    a, b, c = comp(u), comp(v), comp(w)
    a_u, a_v, a_w = comp(u, u), comp(u, v), comp(u, w)
    b_u, b_v, b_w = comp(v, u), comp(v, v), comp(v, w)
    c_u, c_v, c_w = comp(w, u), comp(w, v), comp(w, w)
    ic = c.reciprocal()
    ic2 = ic * ic
    e = a_u - (a_w + c_u) * a * ic + a * a * c_w * ic2
    g = b_v - (b_w + c_v) * b * ic + b * b * c_w * ic2
    f = (
        (a_v + b_u) * 0.5
        - (a_w + c_u) * b * ic * 0.5
        - (b_w + c_v) * a * ic * 0.5
        + a * b * c_w * ic2
    )
    return {"a": a, "b": b, "c": c, "e": e, "f": f, "g": g, "K": e * g - f * f}


def chart_frame(spec: FieldSpec, point: Sequence[float], chart: Chart | None = None) -> ChartFrame:
    """e, f, g, K = eg - f^2 and H = -(e + g)/2 in the largest-|xi_i| chart."""
    jet = jet_at(spec, point, 1)
    return _frame_from_jet(jet, chart)


def _frame_from_jet(jet: JetFrame, chart: Chart | None = None) -> ChartFrame:
    chart = chart or select_chart(jet.xi)
    c = jet.xi[chart.axis]
    valid = abs(c) >= EPS_XI
    if not valid:
        nan = math.nan
        return ChartFrame(jet.point, chart, nan, nan, nan, nan, nan, False)
    co = coefficient_jets([jet.xi, jet.jac], chart, 0)
    e, f, g = float(co["e"].val), float(co["f"].val), float(co["g"].val)
    return ChartFrame(jet.point, chart, e, f, g, e * g - f * f, -(e + g) / 2.0, True)


def chart_coefficients(spec: FieldSpec, points: Any, axis: int | None = None) -> dict[str, np.ndarray]:
    """Vectorized e, f, g, K over points of shape (..., 3).

    Each point uses its own largest-component chart unless ``axis`` is given.
    The returned ``axis`` array records the chart used.
    """
    pts = np.asarray(points, dtype=float)
    xi, jac = spec.jets(pts, 1)
    axes = np.argmax(np.abs(xi), axis=-1) if axis is None else np.full(pts.shape[:-1], axis)
    out = {k: np.full(pts.shape[:-1], np.nan) for k in ("e", "f", "g", "K")}
    for ax in range(3):
        mask = axes == ax
        if not np.any(mask):
            continue
        co = coefficient_jets([xi[mask], jac[mask]], Chart(ax), 0)
        with np.errstate(all="ignore"):
            for k in ("e", "f", "g", "K"):
                out[k][mask] = co[k].val
    out["axis"] = axes
    out["xi"] = xi
    return out


def curvature_invariant(spec: FieldSpec, points: Any) -> np.ndarray:
    """Chart-free smooth function with the sign and zero set of K.

    Equals k1 * k2 * |xi|^2 and is computed as minus the determinant of the
    symmetric Jacobian bordered by xi. In any chart it also equals K * c^2.
    """
    xi, jac = spec.jets(points, 1)
    sym = 0.5 * (jac + np.swapaxes(jac, -1, -2))
    lead = xi.shape[:-1]
    border = np.zeros(lead + (4, 4))
    border[..., :3, :3] = sym
    border[..., :3, 3] = xi
    border[..., 3, :3] = xi
    return -np.linalg.det(border)


def direction_data(
    spec: FieldSpec, point: Sequence[float], direction: Sequence[float], tol: float = EPS_TAN
) -> DirectionData:
    """Normal curvature and geodesic torsion of the plane field along ``direction``."""
    jet = jet_at(spec, point, 1)
    d = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(d)
    if norm == 0:
        raise NotInPlane("direction is zero")
    d = d / norm
    if abs(np.dot(jet.xi, d)) > tol * np.linalg.norm(jet.xi):
        raise NotInPlane(
            "direction is not tangent to the plane", residual=float(np.dot(jet.xi, d))
        )
    jd = jet.jac @ d
    kn = -float(np.dot(jd, d))
    tg = float(np.linalg.det(np.stack([d, jet.xi, jd])))
    return DirectionData(d, kn, tg)


def lift_direction(chart: Chart, xi: np.ndarray, du: float, dv: float) -> np.ndarray:
    """World vector of the in-plane direction with chart components (du, dv)."""
    a, b, c = (xi[i] for i in chart.perm)
    return chart.to_world(np.array([du, dv, -(a * du + b * dv) / c]))


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def asymptotic_directions(
    spec: FieldSpec, point: Sequence[float]
) -> list[np.ndarray] | AllDirections:
    """Unit asymptotic directions: two if K < 0, one if K = 0, none if K > 0."""
    jet = jet_at(spec, point, 1)
    frame = _frame_from_jet(jet)
    return _asymptotic_from_frame(frame, jet.xi)


def _asymptotic_from_frame(frame: ChartFrame, xi: np.ndarray) -> list[np.ndarray] | AllDirections:
    e, f, g, K = frame.e, frame.f, frame.g, frame.K
    tol = frame.eps_k
    if max(abs(e), abs(f), abs(g)) <= tol:
        return ALL_DIRECTIONS
    if K > tol:
        return []
    if K >= -tol:
        du, dv = (g, -f) if abs(g) >= abs(e) else (-f, e)
        return [_unit(lift_direction(frame.chart, xi, du, dv))]
    out = []
    for sign in (1.0, -1.0):
        du, dv = branch_vector(e, f, g, K, sign)
        out.append(_unit(lift_direction(frame.chart, xi, du, dv)))
    return out


def branch_vector(e: float, f: float, g: float, K: float, sign: float) -> tuple[float, float]:
    """Root (du, dv) of e du^2 + 2f du dv + g dv^2 for the branch ``sign``.

    The two algebraically equivalent forms (g, -f + s) and (-f - s, e), with
    s = sqrt(-K), are parallel; the one with larger norm is returned, which
    also covers e = g = 0 where one of them vanishes.
    """
    s = math.sqrt(max(-K, 0.0))
    first = (g, -f + sign * s)
    second = (-f - sign * s, e)
    if math.hypot(*first) >= math.hypot(*second):
        return first
    return second


def plane_basis(xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal in-plane (U, V) with U x V = xi / |xi|."""
    n = _unit(np.asarray(xi, dtype=float))
    k = int(np.argmin(np.abs(n)))
    axis = np.zeros(3)
    axis[k] = 1.0
    U = _unit(np.cross(axis, n))
    V = np.cross(n, U)
    return U, V


def principal_data(spec: FieldSpec, point: Sequence[float]) -> PrincipalData | PartiallyUmbilic:
    """Principal curvatures k1 <= k2 and directions from the principal-line quadratic.

    The quadratic is 2 [J dr, dr, xi] + <curl xi, xi> |dr|^2 restricted to the
    plane; on an orthonormal in-plane basis it is trace free, so its null
    directions are two orthogonal lines.
    """
    jet = jet_at(spec, point, 1)
    return _principal_from_jet(jet)


def _principal_from_jet(jet: JetFrame) -> PrincipalData | PartiallyUmbilic:
    xi, J = jet.xi, jet.jac
    U, V = plane_basis(xi)
    R = float(np.dot(curl_of(J), xi))

    def triple(p: np.ndarray, q: np.ndarray) -> float:
        return float(np.linalg.det(np.stack([J @ p, q, xi])))

    A = 2.0 * triple(U, U) + R
    C = 2.0 * triple(V, V) + R
    B = triple(U, V) + triple(V, U)
    half = 0.5 * (A - C)
    scale = 1.0 + np.linalg.norm(xi) * np.linalg.norm(J)
    if math.hypot(half, B) <= 1e-9 * scale:
        return PartiallyUmbilic(-float(U @ J @ U))
    theta = 0.5 * math.atan2(-half, B)
    P = [math.cos(theta) * U + math.sin(theta) * V, -math.sin(theta) * U + math.cos(theta) * V]
    k = [-float(p @ J @ p) for p in P]
    if k[0] > k[1]:
        k.reverse()
        P.reverse()
    return PrincipalData(k[0], k[1], P[0], P[1])


def normal_section_curvature(
    spec: FieldSpec,
    point: Sequence[float],
    direction: Sequence[float],
    h: float = 1e-3,
    substeps: int = 8,
) -> float:
    """Curvature oracle from the plane curve cut out by the normal plane.

    The normal plane N at P contains xi(P) and ``direction``. Inside N the
    projection of xi defines a line field whose orthogonal complement, again
    inside N, is tangent to the plane field. Its integral curve gamma through
    P is traced for arclength +/- h and the second difference of gamma, dotted
    with xi(P), is returned. With xi of unit length this is the signed
    curvature of gamma; in general it equals the normal curvature.
    """
    P = _as_point(point)
    xi_p = jet_at(spec, P, 0).xi
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    if abs(np.dot(xi_p, d)) > 1e-6 * np.linalg.norm(xi_p):
        raise NotInPlane("direction is not tangent to the plane")
    m = np.cross(xi_p, d)
    m /= np.linalg.norm(m)

    def zeta(r: np.ndarray, ref: np.ndarray) -> np.ndarray:
        xi = spec.values(r)
        zperp = xi - np.dot(xi, m) * m
        z = np.cross(m, zperp)
        norm = np.linalg.norm(z)
        if norm < EPS_XI:
            raise IntegrationFailure("normal-section line field degenerates", point=r.tolist())
        z /= norm
        return z if np.dot(z, ref) >= 0 else -z

    def trace(sign: float) -> np.ndarray:
        r = P.copy()
        ref = sign * d
        dt = h / substeps
        for _ in range(substeps):
            k1 = zeta(r, ref)
            k2 = zeta(r + 0.5 * dt * k1, k1)
            k3 = zeta(r + 0.5 * dt * k2, k1)
            k4 = zeta(r + dt * k3, k1)
            step = (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
            r = r + dt * step
            ref = step
        return r

    second = trace(1.0) - 2.0 * P + trace(-1.0)
    return float(np.dot(second, xi_p)) / (h * h)
