"""Parabolic surface, special parabolic curves and their classification.

A parabolic point is special when its unique asymptotic direction A is
tangent to the parabolic surface, i.e. phi = <grad K, A> vanishes. With
A = (1, p, q) in a lifting chart and p = -f/g, special points are exactly the
projections of singular points of the lifted field. Special points form
curves, traced here by pseudo-arclength continuation of (K, phi) = 0, and the
nontrivial eigenvalue pair of the lifted Jacobian sorts them into saddle,
node and focus types with codimension-one transitions in between.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateDirections,
    DegenerateGradient,
    EmptySurface,
    NoConvergence,
    NotCuspidal,
    NotParabolic,
    PlaneFieldError,
    RankDeficient,
    SeedNotConverged,
    SingularXi,
)
from .expr import FieldSpec
from .geometry import (
    EPS_XI,
    Chart,
    coefficient_jets,
    curvature_invariant,
    eps_k,
    integrability_defect,
)
from .liecartan import LieCartanState, SpectralData, lie_cartan_field, lift_chart, spectral_pair

__all__ = [
    "Tag",
    "Classification",
    "CurveSample",
    "Transition",
    "SpecialCurve",
    "ParabolicMesh",
    "EPS_GRAD",
    "eps_lambda",
    "eps_phi",
    "project_to_parabolic",
    "special_defect",
    "special_system",
    "classify_parabolic_point",
    "classify_spectrum",
    "hopf_delta",
    "hopf_drift",
    "drift_coefficient",
    "trace_special_curve",
    "detect_transitions",
    "cusp_model",
    "extract_parabolic_surface",
    "mesh_edges",
    "mesh_components",
    "euler_characteristic",
    "compact_components",
]

EPS_GRAD = 1e-8


class Tag(str, enum.Enum):
    ELLIPTIC = "Elliptic"
    HYPERBOLIC = "Hyperbolic"
    CUSPIDAL = "ParabolicCuspidal"
    SADDLE = "ParabolicSaddle"
    NODE = "ParabolicNode"
    FOCUS = "ParabolicFocus"
    SADDLE_NODE = "ParabolicSaddleNode"
    NODE_FOCUS = "ParabolicNodeFocus"
    HOPF_HYPERBOLIC = "ParabolicHopfHyperbolic"
    HOPF_ELLIPTIC = "ParabolicHopfElliptic"
    DEGENERATE = "ParabolicDegenerate"
    SINGULAR_XI = "SingularXi"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Classification:
    tag: Tag
    evidence: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {"class": self.tag.value, "evidence": self.evidence}


@dataclass(frozen=True)
class CurveSample:
    point: np.ndarray
    p_lift: float
    sigma1: float
    sigma2: float
    disc: float
    phi_residual: float
    K_residual: float
    tag: Tag
    s: float
    chart: Chart

    def to_dict(self) -> dict[str, Any]:
        return {
            "x": float(self.point[0]),
            "y": float(self.point[1]),
            "z": float(self.point[2]),
            "p": self.p_lift,
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
            "disc": self.disc,
            "phi": self.phi_residual,
            "K": self.K_residual,
            "class": self.tag.value,
            "s": self.s,
            "chart": self.chart.label,
        }


@dataclass(frozen=True)
class Transition:
    kind: str  # "SaddleNode", "NodeFocus" or "Hopf"
    interval: tuple[int, int]
    point: np.ndarray
    s: float
    sides: tuple[Tag, Tag]
    delta: float | None = None
    dsigma1_half_ds: float | None = None
    tag: Tag | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "kind": self.kind,
            "interval": list(self.interval),
            "point": [float(t) for t in self.point],
            "s": self.s,
            "sides": [t.value for t in self.sides],
        }
        if self.delta is not None:
            out["delta"] = self.delta
            out["dsigma1_half_ds"] = self.dsigma1_half_ds
            out["class"] = self.tag.value if self.tag else None
        return out


@dataclass
class SpecialCurve:
    samples: list[CurveSample]
    transitions: list[Transition] = field(default_factory=list)
    step: float = 0.02
    stop_reasons: tuple[str, str] = ("", "")

    def to_dict(self) -> dict[str, Any]:
        return {
            "samples": [s.to_dict() for s in self.samples],
            "transitions": [t.to_dict() for t in self.transitions],
            "step": self.step,
            "stop_reasons": list(self.stop_reasons),
        }


@dataclass
class ParabolicMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    K_residual: np.ndarray
    grad_norm: np.ndarray
    phi: np.ndarray
    classes: list[str] | None
    converged: np.ndarray
    warnings: list[dict[str, Any]] = field(default_factory=list)

    def is_manifold(self) -> bool:
        _, counts = mesh_edges(self.triangles)
        return bool(np.all(counts <= 2))


# ------------------------------------------------------------- thresholds


def eps_lambda(sigma1: float, sigma2: float) -> float:
    return 1e-6 * (1.0 + abs(sigma1) + math.sqrt(abs(sigma2)))


def eps_phi(grad_norm: float, a_norm: float) -> float:
    return 1e-8 * (1.0 + grad_norm * a_norm)


# ------------------------------------------------------------- local data


def _tensors(spec: FieldSpec, point: np.ndarray, order: int) -> list[np.ndarray]:
    tensors = spec.jets(point, order)
    if np.linalg.norm(tensors[0]) < EPS_XI:
        raise SingularXi("xi vanishes", point=[float(t) for t in point])
    return tensors


def _default_chart(tensors: list[np.ndarray], axis: int | None = None) -> Chart:
    xi = tensors[0]
    base = Chart(int(np.argmax(np.abs(xi))) if axis is None else axis)
    co = coefficient_jets(tensors[:2], base, 0)
    return lift_chart(xi, float(co["e"].val), float(co["g"].val), base.axis)


def _K_and_grad(tensors: list[np.ndarray], chart: Chart) -> tuple[float, np.ndarray, float, dict]:
    """Chart K plus value and world gradient of the chart-free K c^2."""
    co = coefficient_jets(tensors[:3], chart, 1)
    M = co["K"] * co["c"] * co["c"]
    return float(co["K"].val), chart.to_world(M.grad), float(M.val), co


def project_to_parabolic(
    spec: FieldSpec, guess: Sequence[float], max_iter: int = 25, chart: Chart | None = None
) -> np.ndarray:
    """Newton iteration onto K = 0.

    The iteration runs on K c^2, which does not depend on the chart and so
    moves along the same gradient direction wherever the guess lies.
    """
    r = np.asarray(guess, dtype=float).copy()
    tensors = _tensors(spec, r, 2)
    chart = chart or Chart(int(np.argmax(np.abs(tensors[0]))))
    for _ in range(max_iter):
        K, grad, M, co = _K_and_grad(tensors, chart)
        tol = float(eps_k(co["e"].val, co["f"].val, co["g"].val))
        gn = float(np.dot(grad, grad))
        if abs(K) < tol * 1e-3 or K == 0.0:
            return r
        if math.sqrt(gn) < EPS_GRAD:
            raise DegenerateGradient("grad K vanishes", point=r.tolist())
        step = M / gn * grad
        r = r - step
        tensors = _tensors(spec, r, 2)
        if np.linalg.norm(step) < 1e-15 * (1.0 + np.linalg.norm(r)):
            break
    K, grad, M, co = _K_and_grad(tensors, chart)
    if abs(K) < float(eps_k(co["e"].val, co["f"].val, co["g"].val)):
        return r
    raise NoConvergence("projection onto the parabolic surface failed", point=r.tolist(), K=K)


def _special_jets(tensors: list[np.ndarray], chart: Chart) -> dict[str, Any]:
    """K (order 2) and phi (order 1) jets plus the direction A in chart coordinates."""
    co = coefficient_jets(tensors, chart, 2)
    K = co["K"]
    p = -co["f"] / co["g"]
    q = -(co["a"] + co["b"] * p) / co["c"]
    phi = K.partial(0) + p * K.partial(1) + q * K.partial(2)
    pv, qv = np.asarray(p.val, dtype=float), np.asarray(q.val, dtype=float)
    if pv.ndim == 0:
        return {"K": K, "phi": phi, "A": np.array([1.0, float(pv), float(qv)]), "p": float(pv), "co": co}
    A = np.stack([np.ones_like(pv), pv, qv], axis=-1)
    return {"K": K, "phi": phi, "A": A, "p": pv, "co": co}


def special_system(
    spec: FieldSpec, point: Sequence[float], chart: Chart | None = None
) -> dict[str, Any]:
    """K, phi and their world gradients at a point, in a lifting chart."""
    r = np.asarray(point, dtype=float)
    tensors = _tensors(spec, r, 3)
    chart = chart or _default_chart(tensors)
    if abs(tensors[0][chart.axis]) < EPS_XI:
        raise SingularXi("chart component of xi vanishes", point=r.tolist())
    sj = _special_jets(tensors, chart)
    co = sj["co"]
    return {
        "K": float(sj["K"].val),
        "grad_K": chart.to_world(sj["K"].grad),
        "phi": float(sj["phi"].val),
        "grad_phi": chart.to_world(sj["phi"].grad),
        "A": chart.to_world(sj["A"]),
        "p": sj["p"],
        "chart": chart,
        "e": float(co["e"].val),
        "f": float(co["f"].val),
        "g": float(co["g"].val),
        "xi": tensors[0],
    }


def special_defect(
    spec: FieldSpec, point: Sequence[float], tol: float | None = None, axis: int | None = None
) -> tuple[float, np.ndarray]:
    """phi = <grad K, A> with A = (1, p, q) the asymptotic direction in chart form.

    The value depends on the chart through the scale of K and of A; ``axis``
    picks the solved coordinate, otherwise the largest component of xi.
    Only its sign pattern and zero set are chart independent.
    """
    chart = None
    if axis is not None:
        chart = _default_chart(_tensors(spec, np.asarray(point, dtype=float), 1), axis)
    sy = special_system(spec, point, chart)
    e, f, g = sy["e"], sy["f"], sy["g"]
    limit = float(eps_k(e, f, g)) if tol is None else tol
    if max(abs(e), abs(f), abs(g)) <= float(eps_k(e, f, g)):
        raise DegenerateDirections("e = f = g = 0: every direction is asymptotic")
    if abs(sy["K"]) > limit:
        raise NotParabolic("point is not parabolic", K=sy["K"], tolerance=limit)
    return sy["phi"], sy["A"]


# ---------------------------------------------------------- classification


def classify_spectrum(sd: SpectralData) -> Tag | None:
    """Tag from the eigenvalue pair; None stands for an unresolved Hopf point."""
    s1, s2, disc = sd.sigma1, sd.sigma2, sd.disc
    eps = eps_lambda(s1, s2)
    if s2 < -eps:
        return Tag.SADDLE
    if s2 > eps and disc > eps:
        return Tag.NODE
    if disc < -eps and abs(s1) > eps:
        return Tag.FOCUS
    if abs(s2) <= eps and abs(s1) > eps:
        return Tag.SADDLE_NODE
    if abs(disc) <= eps and abs(s1) > eps:
        return Tag.NODE_FOCUS
    if abs(s1) <= eps and disc < -eps:
        return None
    return Tag.DEGENERATE


def classify_parabolic_point(
    spec: FieldSpec, point: Sequence[float], hopf_step: float = 1e-3
) -> Classification:
    """Decision tree from the sign of K through phi down to the spectrum.

    Hopf points are split into hyperbolic and elliptic by the sign of delta,
    estimated from a short piece of the special curve through the point.
    """
    r = np.asarray(point, dtype=float)
    tensors = spec.jets(r, 1)
    evidence: dict[str, Any] = {"point": [float(t) for t in r]}
    if np.linalg.norm(tensors[0]) < EPS_XI:
        return Classification(Tag.SINGULAR_XI, evidence)
    chart = Chart(int(np.argmax(np.abs(tensors[0]))))
    co = coefficient_jets(tensors, chart, 0)
    e, f, g = (float(co[k].val) for k in ("e", "f", "g"))
    K = e * g - f * f
    tol = float(eps_k(e, f, g))
    evidence.update({"K": K, "eps_K": tol})
    if K > tol:
        return Classification(Tag.ELLIPTIC, evidence)
    if K < -tol:
        return Classification(Tag.HYPERBOLIC, evidence)
    if max(abs(e), abs(f), abs(g)) <= tol:
        return Classification(Tag.DEGENERATE, evidence)
    try:
        r = project_to_parabolic(spec, r, chart=chart)
    except DegenerateGradient:
        return Classification(Tag.DEGENERATE, evidence)
    sy = special_system(spec, r)
    gn, an = float(np.linalg.norm(sy["grad_K"])), float(np.linalg.norm(sy["A"]))
    ephi = eps_phi(gn, an)
    evidence.update({"phi": sy["phi"], "eps_phi": ephi, "projected": [float(t) for t in r]})
    if abs(sy["phi"]) > ephi:
        return Classification(Tag.CUSPIDAL, evidence)
    state = LieCartanState(r[0], r[1], r[2], sy["p"], sy["chart"])
    sd = spectral_pair(spec, state, check=False)
    evidence.update({"sigma1": sd.sigma1, "sigma2": sd.sigma2, "disc": sd.disc,
                     "eps_lambda": eps_lambda(sd.sigma1, sd.sigma2)})
    tag = classify_spectrum(sd)
    if tag is None:
        try:
            delta, _ = hopf_delta(spec, r, sy["chart"], hopf_step)
        except PlaneFieldError:
            return Classification(Tag.DEGENERATE, evidence)
        evidence["delta"] = delta
        tag = Tag.HOPF_HYPERBOLIC if delta > 0 else Tag.HOPF_ELLIPTIC
    return Classification(tag, evidence)


# ------------------------------------------------------------ continuation


def _tangent(sy: dict[str, Any]) -> np.ndarray:
    return np.cross(sy["grad_K"], sy["grad_phi"])


def _correct(
    spec: FieldSpec,
    pred: np.ndarray,
    normal: np.ndarray,
    chart: Chart,
    max_iter: int = 25,
    tol: float = 1e-12,
) -> np.ndarray:
    """Newton on K = phi = 0 within the hyperplane through ``pred`` normal to ``normal``."""
    r = pred.copy()
    for _ in range(max_iter):
        sy = special_system(spec, r, chart)
        M = np.stack([sy["grad_K"], sy["grad_phi"], normal])
        rhs = -np.array([sy["K"], sy["phi"], float(np.dot(normal, r - pred))])
        try:
            step = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            raise NoConvergence("singular corrector system", point=r.tolist()) from None
        r = r + step
        if np.linalg.norm(step) < tol * (1.0 + np.linalg.norm(r)):
            return r
    sy = special_system(spec, r, chart)
    scale_k = float(eps_k(sy["e"], sy["f"], sy["g"]))
    if abs(sy["K"]) < scale_k and abs(sy["phi"]) < eps_phi(
        float(np.linalg.norm(sy["grad_K"])), float(np.linalg.norm(sy["A"]))
    ):
        return r
    raise NoConvergence("corrector did not converge", point=r.tolist())


def _correct_seed(spec: FieldSpec, seed: np.ndarray, chart: Chart, max_iter: int = 40) -> np.ndarray:
    r = seed.copy()
    for _ in range(max_iter):
        sy = special_system(spec, r, chart)
        M = np.stack([sy["grad_K"], sy["grad_phi"]])
        step = -np.linalg.pinv(M) @ np.array([sy["K"], sy["phi"]])
        r = r + step
        if np.linalg.norm(step) < 1e-13 * (1.0 + np.linalg.norm(r)):
            return r
    sy = special_system(spec, r, chart)
    if abs(sy["K"]) < float(eps_k(sy["e"], sy["f"], sy["g"])) and abs(sy["phi"]) < eps_phi(
        float(np.linalg.norm(sy["grad_K"])), float(np.linalg.norm(sy["A"]))
    ):
        return r
    raise SeedNotConverged("seed did not converge onto K = phi = 0", point=r.tolist())


def _keep_chart(xi: np.ndarray, chart: Chart, sy: dict[str, Any] | None = None) -> bool:
    if abs(xi[chart.axis]) < 0.3 * np.linalg.norm(xi):
        return False
    if sy is not None and abs(sy["g"]) < 0.1 * abs(sy["e"]):
        return False
    return True


def _sample(spec: FieldSpec, r: np.ndarray, chart: Chart, s: float) -> CurveSample:
    sy = special_system(spec, r, chart)
    state = LieCartanState(r[0], r[1], r[2], sy["p"], chart)
    sd = spectral_pair(spec, state, check=False)
    tag = classify_spectrum(sd)
    if tag is None:
        delta, _ = hopf_delta(spec, r, chart)
        tag = Tag.HOPF_HYPERBOLIC if delta > 0 else Tag.HOPF_ELLIPTIC
    return CurveSample(r.copy(), sy["p"], sd.sigma1, sd.sigma2, sd.disc, sy["phi"], sy["K"],
                       tag, s, chart)


def trace_special_curve(
    spec: FieldSpec,
    seed: Sequence[float],
    step: float = 0.02,
    max_samples: int = 400,
    box: tuple[Sequence[float], Sequence[float]] | None = None,
    both_directions: bool = True,
) -> SpecialCurve:
    """Pseudo-arclength continuation of the special curve through ``seed``.

    Tangent: grad K x grad phi. Euler predictor, Newton corrector on
    (K, phi) = 0 constrained to the hyperplane orthogonal to the tangent.
    Each direction stops at the box boundary, at ``max_samples // 2`` samples
    (all of them for a one-sided trace), or where the tangent degenerates.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in (box or (spec.domain.lo, spec.domain.hi)))
    r0 = np.asarray(seed, dtype=float)
    tensors = _tensors(spec, r0, 3)
    chart = _default_chart(tensors)
    r0 = _correct_seed(spec, r0, chart)
    sy = special_system(spec, r0, chart)
    t0 = _tangent(sy)
    scale = np.linalg.norm(sy["grad_K"]) * np.linalg.norm(sy["grad_phi"])
    if np.linalg.norm(t0) <= 1e-10 * max(scale, 1e-300):
        raise RankDeficient("constraint Jacobian has rank < 2 at the seed", point=r0.tolist())
    t0 = t0 / np.linalg.norm(t0)

    per_dir = max_samples // 2 if both_directions else max_samples
    branches: list[list[tuple[np.ndarray, Chart]]] = []
    reasons: list[str] = []
    for direction in ((1.0, -1.0) if both_directions else (1.0,)):
        pts, reason = _march(spec, r0, chart, direction * t0, step, per_dir, lo, hi)
        branches.append(pts)
        reasons.append(reason)

    ordered = list(reversed(branches[1])) if both_directions else []
    ordered += [(r0, chart)] + branches[0]
    samples: list[CurveSample] = []
    s = 0.0
    for k, (r, ch) in enumerate(ordered):
        if k > 0:
            s += float(np.linalg.norm(r - ordered[k - 1][0]))
        samples.append(_sample(spec, r, ch, s))
    if not both_directions:
        reasons.append("")
    return SpecialCurve(samples, [], step, (reasons[0], reasons[1]))


def _march(
    spec: FieldSpec,
    r0: np.ndarray,
    chart: Chart,
    t_prev: np.ndarray,
    step: float,
    count: int,
    lo: np.ndarray,
    hi: np.ndarray,
) -> tuple[list[tuple[np.ndarray, Chart]], str]:
    out: list[tuple[np.ndarray, Chart]] = []
    r = r0
    h_min = step / 64.0
    while len(out) < count:
        sy = special_system(spec, r, chart)
        t = _tangent(sy)
        norm = np.linalg.norm(t)
        scale = np.linalg.norm(sy["grad_K"]) * np.linalg.norm(sy["grad_phi"])
        if norm <= 1e-10 * max(scale, 1e-300):
            return out, "rank-deficient"
        t = t / norm
        if np.dot(t, t_prev) < 0:
            t = -t
        h = step
        while True:
            pred = r + h * t
            try:
                r_new = _correct(spec, pred, t, chart)
                ok = np.linalg.norm(r_new - r) < 2.0 * h
            except (NoConvergence, SingularXi):
                ok = False
            if ok:
                break
            h *= 0.5
            if h < h_min:
                return out, "corrector-failure"
        if np.any(r_new < lo) or np.any(r_new > hi):
            return out, "domain-exit"
        r, t_prev = r_new, t
        xi = spec.values(r)
        if not _keep_chart(xi, chart, special_system(spec, r, chart)):
            tensors = _tensors(spec, r, 3)
            chart = _default_chart(tensors)
        out.append((r.copy(), chart))
    return out, "max-samples"


# ------------------------------------------------------------- transitions


def _orient_value(sample: CurveSample, ref: Chart, spec: FieldSpec, which: str) -> float:
    """Spectral quantity of a sample expressed in chart ``ref``."""
    if sample.chart == ref or which != "sigma1":
        return getattr(sample, which)
    sy = special_system(spec, sample.point, ref)
    sd = spectral_pair(spec, LieCartanState(*sample.point, sy["p"], ref), check=False)
    return sd.sigma1


def _value_at(spec: FieldSpec, r: np.ndarray, chart: Chart, which: str) -> float:
    sy = special_system(spec, r, chart)
    sd = spectral_pair(spec, LieCartanState(r[0], r[1], r[2], sy["p"], chart), check=False)
    return float(getattr(sd, which))


def _point_at(spec: FieldSpec, curve: SpecialCurve, i: int, j: int, s: float, chart: Chart) -> np.ndarray:
    """Point of the special curve at arclength ``s`` within samples i..j."""
    samples = curve.samples
    k = i
    while k < j - 1 and samples[k + 1].s < s:
        k += 1
    a, b = samples[k], samples[k + 1]
    span = b.s - a.s
    lam = 0.0 if span == 0 else (s - a.s) / span
    pred = (1 - lam) * a.point + lam * b.point
    chord = b.point - a.point
    normal = chord / np.linalg.norm(chord)
    return _correct(spec, pred, normal, chart)


def _signs(values: list[float], eps: list[float]) -> list[int]:
    return [0 if abs(v) <= e else (1 if v > 0 else -1) for v, e in zip(values, eps)]


def _brackets(signs: list[int]) -> list[tuple[int, int]]:
    out = []
    last = None
    for k, sgn in enumerate(signs):
        if sgn == 0:
            continue
        if last is not None and signs[last] != sgn:
            out.append((last, k))
        last = k
    return out


def _bisect(spec: FieldSpec, curve: SpecialCurve, i: int, j: int, which: str, chart: Chart,
            sign_i: int, tol: float = 1e-10) -> tuple[float, np.ndarray]:
    lo_s, hi_s = curve.samples[i].s, curve.samples[j].s
    r = curve.samples[i].point
    for _ in range(200):
        if hi_s - lo_s <= tol:
            break
        mid = 0.5 * (lo_s + hi_s)
        r = _point_at(spec, curve, i, j, mid, chart)
        val = _value_at(spec, r, chart, which)
        if val == 0.0:
            return mid, r
        if (1 if val > 0 else -1) == sign_i:
            lo_s = mid
        else:
            hi_s = mid
    mid = 0.5 * (lo_s + hi_s)
    return mid, _point_at(spec, curve, i, j, mid, chart)


def drift_coefficient(
    field: Callable[[np.ndarray], np.ndarray], s0: np.ndarray, along: np.ndarray, h: float = 1e-3
) -> float:
    """Drift rate eta along a line of equilibria through a Hopf state ``s0``.

    Works in any dimension: the Jacobian is differenced from ``field``, the
    rotating eigenplane (a, b) is the pair with the largest imaginary part,
    and eta = w . (Q[a, a] + Q[b, b]) / 2 where Q is the second derivative of
    the field and w the left null covector with w . along = 1. For the normal
    form dx = eta |z|^2, dz = (i omega + alpha x) z this returns eta (up to
    differencing error) when ``along`` is the x axis; in general it is eta
    times a positive factor set by the eigenvector scale.
    """
    s0 = np.asarray(s0, dtype=float)
    n = s0.size
    X0 = np.asarray(field(s0), dtype=float)
    J = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        J[:, k] = (np.asarray(field(s0 + e)) - np.asarray(field(s0 - e))) / (2 * h)
    lam, vecs = np.linalg.eig(J)
    k = int(np.argmax(np.abs(lam.imag)))
    if abs(lam[k].imag) < 1e-9:
        raise DegenerateGradient("no rotating eigenplane at this state")
    a, b = vecs[:, k].real, vecs[:, k].imag
    quad = np.zeros(n)
    for u in (a, b):
        quad += 0.5 * (np.asarray(field(s0 + h * u)) - 2.0 * X0 + np.asarray(field(s0 - h * u))) / h**2
    nulls = np.linalg.svd(J.T)[2][n - _null_dim(lam):]
    coef, *_ = np.linalg.lstsq((nulls @ along)[None, :], np.array([1.0]), rcond=None)
    return float((coef @ nulls) @ quad)


def _null_dim(lam: np.ndarray) -> int:
    scale = max(1.0, float(np.max(np.abs(lam))))
    return max(1, int(np.sum(np.abs(lam) < 1e-6 * scale)))


def hopf_drift(spec: FieldSpec, state: LieCartanState, along: np.ndarray, h: float = 1e-3) -> float:
    """Second-order drift of the lifted flow along the lifted special curve."""
    chart = state.chart

    def field(v: np.ndarray) -> np.ndarray:
        return lie_cartan_field(spec, LieCartanState(v[0], v[1], v[2], v[3], chart))

    return drift_coefficient(field, np.array([state.x, state.y, state.z, state.p]), along, h)


def hopf_delta(
    spec: FieldSpec, point: Sequence[float], chart: Chart | None = None, h: float = 1e-3
) -> tuple[float, float]:
    """Transversality of sigma1 at a Hopf point, plus d(sigma1/2)/ds.

    The curve is oriented so the second-order drift of the lifted flow points
    forward; with that orientation delta = d(sigma1/2)/ds is independent of the
    chart and of the sign of the lifted field, and delta > 0 marks a hyperbolic
    Hopf point. The second value is the raw derivative along grad K x grad phi.
    """
    r = np.asarray(point, dtype=float)
    sy = special_system(spec, r, chart)
    chart = sy["chart"]
    t = _tangent(sy)
    t = t / np.linalg.norm(t)
    ends = []
    for sign in (1.0, -1.0):
        rr = _correct(spec, r + sign * h * t, t, chart)
        p = special_system(spec, rr, chart)["p"]
        state = LieCartanState(rr[0], rr[1], rr[2], p, chart)
        ends.append((rr, spectral_pair(spec, state, check=False).sigma1, np.r_[rr, p]))
    (r_p, s_p, q_p), (r_m, s_m, q_m) = ends
    dsig = 0.5 * (s_p - s_m) / float(np.linalg.norm(r_p - r_m))
    state0 = LieCartanState(r[0], r[1], r[2], sy["p"], chart)
    eta = hopf_drift(spec, state0, q_p - q_m)
    return float(np.sign(eta) * dsig), float(dsig)


def detect_transitions(spec: FieldSpec, curve: SpecialCurve) -> SpecialCurve:
    """Fill ``curve.transitions`` from sign changes along the samples.

    sigma2 changes sign at saddle-node points, the discriminant at node-focus
    points (sigma1 away from zero) and sigma1 at Hopf points (discriminant
    negative on both sides). Each is refined by bisection in arclength.
    """
    samples = curve.samples
    transitions: list[Transition] = []
    if len(samples) < 2:
        curve.transitions = transitions
        return curve
    eps = [eps_lambda(s.sigma1, s.sigma2) for s in samples]

    for which, kind in (("sigma2", "SaddleNode"), ("disc", "NodeFocus"), ("sigma1", "Hopf")):
        signs = _signs([getattr(s, which) for s in samples], eps)
        for i, j in _brackets(signs):
            a, b = samples[i], samples[j]
            if kind == "NodeFocus" and (abs(a.sigma1) <= eps[i] or abs(b.sigma1) <= eps[j]):
                continue
            if kind == "Hopf":
                if not (a.disc < -eps[i] and b.disc < -eps[j]):
                    continue
                if a.chart != b.chart:
                    other = _orient_value(b, a.chart, spec, "sigma1")
                    if np.sign(other) == np.sign(a.sigma1):
                        continue
            s_ref, r_ref = _bisect(spec, curve, i, j, which, a.chart, signs[i])
            delta = dsig = None
            tag = None
            if kind == "Hopf":
                delta, dsig = hopf_delta(spec, r_ref, a.chart, curve.step)
                tag = Tag.HOPF_HYPERBOLIC if delta > 0 else Tag.HOPF_ELLIPTIC
            transitions.append(
                Transition(kind, (i, j), r_ref, s_ref, (a.tag, b.tag), delta, dsig, tag)
            )
    transitions.sort(key=lambda t: (t.s, t.kind))
    curve.transitions = transitions
    return curve


def cusp_model(spec: FieldSpec, point: Sequence[float], axis: int | None = None) -> tuple[float, float]:
    """(I, R) at a cuspidal point: I = <grad K, A>, R = <curl xi, xi>."""
    phi, A = special_defect(spec, point, axis=axis)
    sy = special_system(spec, point, None if axis is None else _default_chart(
        _tensors(spec, np.asarray(point, dtype=float), 1), axis))
    if abs(phi) <= eps_phi(float(np.linalg.norm(sy["grad_K"])), float(np.linalg.norm(A))):
        raise NotCuspidal("phi vanishes: the point is special, not cuspidal", phi=phi)
    _, R = integrability_defect(spec, point)
    return float(phi), float(R)


# ------------------------------------------------------------- mesh


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("PLANEFIELD_THREADS", "1")))
    except ValueError:
        return 1


def _project_vertices(spec: FieldSpec, verts: np.ndarray, iters: int = 25) -> tuple[np.ndarray, ...]:
    """Vectorized Newton projection onto K = 0, stepping on K c^2."""
    r = verts.copy()
    n = len(r)
    K, M, tol = np.zeros(n), np.zeros(n), np.zeros(n)
    grad_K, grad_M = np.zeros_like(r), np.zeros_like(r)

    def evaluate(points: np.ndarray) -> None:
        tensors = spec.jets(points, 2)
        axes = np.argmax(np.abs(tensors[0]), axis=-1)
        for ax in range(3):
            m = axes == ax
            if not np.any(m):
                continue
            chart = Chart(ax)
            co = coefficient_jets([t[m] for t in tensors], chart, 1)
            Mj = co["K"] * co["c"] * co["c"]
            K[m], M[m] = co["K"].val, Mj.val
            grad_K[m] = chart.to_world(co["K"].grad)
            grad_M[m] = chart.to_world(Mj.grad)
            tol[m] = eps_k(co["e"].val, co["f"].val, co["g"].val)

    evaluate(r)
    for _ in range(iters):
        active = (np.abs(K) >= 1e-3 * tol) & (K != 0.0)
        gn = np.einsum("ij,ij->i", grad_M, grad_M)
        safe = active & (gn > EPS_GRAD**2)
        if not np.any(safe):
            break
        step = np.zeros_like(r)
        step[safe] = (M[safe] / gn[safe])[:, None] * grad_M[safe]
        r = r - step
        evaluate(r)
    return r, K, grad_K, tol


def extract_parabolic_surface(
    spec: FieldSpec,
    box: tuple[Sequence[float], Sequence[float]] | None = None,
    resolution: int = 32,
    classify: bool = True,
) -> ParabolicMesh:
    """Isosurface of K = 0 on a regular grid, with vertices projected by Newton.

    The grid samples the chart-free function k1 k2 |xi|^2, which is smooth and
    has the zero set of K in every chart. Marching cubes (scikit-image) builds
    the triangles. Vertex data: K residual, |grad K|, phi and, when
    ``classify`` is set, the classification tag.
    """
    from skimage.measure import marching_cubes

    if resolution < 8:
        raise ConfigError("resolution ≥ 8", "/resolution")
    lo, hi = (np.asarray(b, dtype=float) for b in (box or (spec.domain.lo, spec.domain.hi)))
    axes = [np.linspace(lo[k], hi[k], resolution) for k in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = curvature_invariant(spec, grid)
    if not np.all(np.isfinite(vals)):
        raise EmptySurface("curvature is not finite on the grid")
    if not (np.any(vals > 0) and np.any(vals < 0)) and not np.any(vals == 0):
        raise EmptySurface("K has no sign change in the box")
    tiny = np.finfo(float).tiny * 1e10
    vals = np.where(vals == 0.0, tiny, vals)
    if not (np.any(vals > 0) and np.any(vals < 0)):
        raise EmptySurface("K has no sign change in the box")
    spacing = tuple((hi - lo) / (resolution - 1))
    verts, faces, _, _ = marching_cubes(vals, level=0.0, spacing=spacing, allow_degenerate=False)
    verts = verts + lo
    faces = faces.astype(np.int64)

    r, K, grad, tol = _project_vertices(spec, verts.astype(float))
    converged = np.abs(K) < tol
    gnorm = np.linalg.norm(grad, axis=-1)
    phi = _vertex_phi(spec, r)
    warnings = [
        {"vertex": int(k), "grad_norm": float(gnorm[k]), "message": "grad K nearly vanishes"}
        for k in np.flatnonzero(gnorm < EPS_GRAD)
    ]
    classes = None
    if classify:
        def one(k: int) -> str:
            try:
                return classify_parabolic_point(spec, r[k]).tag.value
            except PlaneFieldError:
                return Tag.DEGENERATE.value

        with ThreadPoolExecutor(max_workers=_threads()) as pool:
            classes = list(pool.map(one, range(len(r))))
    return ParabolicMesh(r, faces, K, gnorm, phi, classes, converged, warnings)


def _vertex_phi(spec: FieldSpec, pts: np.ndarray) -> np.ndarray:
    tensors = spec.jets(pts, 3)
    xi = tensors[0]
    axes = np.argmax(np.abs(xi), axis=-1)
    phi = np.full(len(pts), np.nan)
    for ax in range(3):
        for swap in (False, True):
            base = coefficient_jets([t for t in tensors[:2]], Chart(ax), 0)
            use_swap = np.abs(base["g"].val) < np.abs(base["e"].val)
            m = (axes == ax) & (use_swap == swap)
            if not np.any(m):
                continue
            sj = _special_jets([t[m] for t in tensors], Chart(ax, swap))
            phi[m] = sj["phi"].val
    return phi


def mesh_edges(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique undirected edges and the number of triangles bordering each."""
    tri = np.asarray(triangles, dtype=np.int64)
    if tri.size == 0:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
    e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    e.sort(axis=1)
    edges, counts = np.unique(e, axis=0, return_counts=True)
    return edges, counts


def mesh_components(n_vertices: int, triangles: np.ndarray) -> np.ndarray:
    """Connected-component label per vertex (vertices joined through triangles)."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    edges, _ = mesh_edges(triangles)
    graph = coo_matrix(
        (np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n_vertices, n_vertices)
    )
    _, labels = connected_components(graph, directed=False)
    return labels


def euler_characteristic(triangles: np.ndarray) -> int:
    tri = np.asarray(triangles, dtype=np.int64)
    edges, _ = mesh_edges(tri)
    return int(len(np.unique(tri)) - len(edges) + len(tri))


def compact_components(mesh: ParabolicMesh, lo: Sequence[float], hi: Sequence[float],
                       margin: float) -> list[dict[str, Any]]:
    """Components whose vertices all stay ``margin`` away from the box faces."""
    labels = mesh_components(len(mesh.vertices), mesh.triangles)
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    out = []
    for lab in np.unique(labels[np.unique(mesh.triangles)]):
        vmask = labels == lab
        pts = mesh.vertices[vmask]
        inside = np.all(pts > lo + margin) and np.all(pts < hi - margin)
        if not inside:
            continue
        tri = mesh.triangles[vmask[mesh.triangles[:, 0]]]
        out.append({"label": int(lab), "vertices": int(vmask.sum()), "triangles": int(len(tri)),
                    "euler": euler_characteristic(tri)})
    return out
