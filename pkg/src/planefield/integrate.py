"""Integration of asymptotic lines and of the lifted Lie-Cartan field.

Asymptotic lines are integrated by arclength along a unit direction field.
In the hyperbolic region there are two asymptotic lines through each point;
a branch is followed by always taking the direction closest to the current
tangent, and a step whose stage directions turn by more than pi/4 is
rejected and halved. Branch labels 1 and 2 refer to the sign choice +s / -s
in the root formula of the starting chart, so they are chart relative.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .errors import (
    IntegrationFailure,
    PlaneFieldError,
    StartNotHyperbolic,
    StepFailure,
    TooShort,
)
from .expr import FieldSpec
from .geometry import (
    EPS_XI,
    Chart,
    branch_vector,
    coefficient_jets,
    eps_k,
    lift_direction,
)
from .liecartan import F_value, LieCartanState, lie_cartan_field
from .ode import dopri_step, error_norm, hermite, next_step

__all__ = [
    "Curve",
    "Curve4",
    "integrate_asymptotic",
    "integrate_lie_cartan",
    "asymptotic_portrait",
    "curve_diagnostics",
    "asymptotic_pair",
    "branch_of",
]

MAX_TURN = math.pi / 4


class _Reject(Exception):
    """Raised inside a stage evaluation to reject the current step."""


@dataclass
class Curve:
    t: np.ndarray
    points: np.ndarray
    tangents: np.ndarray
    branch: int | None
    events: list[dict[str, Any]] = field(default_factory=list)
    K: np.ndarray | None = None
    tangency: np.ndarray | None = None
    asymptotic: np.ndarray | None = None
    diagnostics: dict[str, np.ndarray] | None = None

    def __len__(self) -> int:
        return len(self.t)

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))

    def interpolate(self, t: float) -> np.ndarray:
        """Cubic Hermite interpolation through the samples and their tangents."""
        k = int(np.clip(np.searchsorted(self.t, t) - 1, 0, len(self.t) - 2))
        return hermite(self.t[k], self.points[k], self.tangents[k], self.t[k + 1],
                       self.points[k + 1], self.tangents[k + 1], t)

    def dense(self, per_step: int = 8) -> np.ndarray:
        out = [self.points[0]]
        for k in range(len(self.t) - 1):
            for j in range(1, per_step + 1):
                tt = self.t[k] + (self.t[k + 1] - self.t[k]) * j / per_step
                out.append(hermite(self.t[k], self.points[k], self.tangents[k], self.t[k + 1],
                                   self.points[k + 1], self.tangents[k + 1], tt))
        return np.array(out)

    def records(self) -> list[dict[str, Any]]:
        rows = []
        for k in range(len(self.t)):
            row: dict[str, Any] = {
                "t": float(self.t[k]),
                "x": float(self.points[k, 0]),
                "y": float(self.points[k, 1]),
                "z": float(self.points[k, 2]),
            }
            if self.K is not None:
                row["K"] = float(self.K[k])
            if self.tangency is not None:
                row["tangency"] = float(self.tangency[k])
                row["asymptotic"] = float(self.asymptotic[k])
            if self.diagnostics is not None:
                for name in ("kn", "kg", "tau_g", "k", "tau"):
                    row[name] = float(self.diagnostics[name][k])
            rows.append(row)
        return rows

    def to_dict(self) -> dict[str, Any]:
        return {"branch": self.branch, "events": self.events, "samples": self.records()}


@dataclass
class Curve4:
    t: np.ndarray
    states: np.ndarray
    chart: Chart
    F: np.ndarray
    events: list[dict[str, Any]]
    projection: Curve

    def to_dict(self) -> dict[str, Any]:
        return {
            "chart": self.chart.to_dict(),
            "events": self.events,
            "samples": [
                {"t": float(t), "x": float(s[0]), "y": float(s[1]), "z": float(s[2]),
                 "p": float(s[3]), "F": float(fv)}
                for t, s, fv in zip(self.t, self.states, self.F)
            ],
        }


# ----------------------------------------------------------- direction field


def asymptotic_pair(spec: FieldSpec, r: np.ndarray) -> tuple[float, float, tuple[np.ndarray, np.ndarray] | None]:
    """(K, eps_K, (branch 1, branch 2)) at r in the largest-component chart.

    The pair is None when K > 0. At K = 0 both entries coincide.
    """
    xi, J = spec.jets(r, 1)
    if np.linalg.norm(xi) < EPS_XI:
        raise _Reject("xi vanishes")
    chart = Chart(int(np.argmax(np.abs(xi))))
    co = coefficient_jets([xi, J], chart, 0)
    e, f, g = float(co["e"].val), float(co["f"].val), float(co["g"].val)
    K = e * g - f * f
    tol = float(eps_k(e, f, g))
    if K > 0 or max(abs(e), abs(f), abs(g)) <= tol:
        return K, tol, None
    dirs = []
    for sign in (1.0, -1.0):
        du, dv = branch_vector(e, f, g, K, sign)
        d = lift_direction(chart, xi, du, dv)
        dirs.append(d / np.linalg.norm(d))
    return K, tol, (dirs[0], dirs[1])


def _follow(spec: FieldSpec, r: np.ndarray, ref: np.ndarray) -> np.ndarray:
    _, _, pair = asymptotic_pair(spec, r)
    if pair is None:
        raise _Reject("left the hyperbolic region")
    best = max(pair, key=lambda d: abs(float(np.dot(d, ref))))
    cosang = float(np.dot(best, ref))
    if cosang < 0:
        best = -best
        cosang = -cosang
    if cosang < math.cos(MAX_TURN):
        raise _Reject("tangent turned too far")
    return best


def _chart_K(spec: FieldSpec, r: np.ndarray) -> float:
    K, _, _ = asymptotic_pair(spec, r)
    return K


def branch_of(spec: FieldSpec, point: Sequence[float], direction: Sequence[float]) -> int:
    """Branch label (1 or 2) of the asymptotic line closest to ``direction``."""
    _, _, pair = asymptotic_pair(spec, np.asarray(point, dtype=float))
    if pair is None:
        raise StartNotHyperbolic("no asymptotic directions here")
    d = np.asarray(direction, dtype=float)
    return 1 if abs(np.dot(pair[0], d)) >= abs(np.dot(pair[1], d)) else 2


def _outside(r: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    return float(max(np.max(lo - r), np.max(r - hi)))


def _locate(
    step: Callable[[float], np.ndarray], measure: Callable[[np.ndarray], float], h: float
) -> tuple[float, np.ndarray]:
    """Bisect on the step size for the crossing of measure = 0 (negative at h = 0)."""
    lo_h, hi_h = 0.0, h
    best: tuple[float, np.ndarray] | None = None
    for _ in range(80):
        mid = 0.5 * (lo_h + hi_h)
        try:
            y = step(mid)
            val = measure(y)
        except _Reject:
            val = math.inf
            y = None
        if val < 0:
            lo_h = mid
            best = (mid, y)
        else:
            hi_h = mid
        if hi_h - lo_h < 1e-15 * max(1.0, h):
            break
    if best is None:
        return 0.0, step(0.0)
    return best


def integrate_asymptotic(
    spec: FieldSpec,
    start: Sequence[float],
    branch: int = 1,
    t_max: float = 1.0,
    tol: float = 1e-10,
    max_step: float = 0.1,
    eps_switch: float = 1e-4,
    box: tuple[Sequence[float], Sequence[float]] | None = None,
    orient: Sequence[float] | None = None,
    min_step: float = 1e-13,
) -> Curve:
    """Asymptotic line through ``start`` parametrized by arclength.

    Stops with a ParabolicHit event once K >= -eps_switch (located by
    bisection on the last step), a DomainExit event at the box boundary, or
    at ``t_max``. ``orient`` flips the initial tangent to point along it.
    """
    if branch not in (1, 2):
        raise ValueError("branch must be 1 or 2")
    lo, hi = (np.asarray(b, dtype=float) for b in (box or (spec.domain.lo, spec.domain.hi)))
    y = np.asarray(start, dtype=float).copy()
    try:
        K0, tol_k, pair = asymptotic_pair(spec, y)
    except _Reject:
        raise StartNotHyperbolic("xi vanishes at the start") from None
    if pair is None:
        if K0 > tol_k:
            raise StartNotHyperbolic("start point is elliptic", K=K0)
        from .geometry import asymptotic_directions

        dirs = asymptotic_directions(spec, y)
        if not isinstance(dirs, list) or not dirs:
            raise StartNotHyperbolic("no unique asymptotic direction at the start", K=K0)
        d0 = dirs[0]
    else:
        d0 = pair[branch - 1]
    if orient is not None and np.dot(d0, orient) < 0:
        d0 = -d0
    armed = K0 < -eps_switch

    ts, pts, tans, Ks = [0.0], [y.copy()], [d0.copy()], [K0]
    events: list[dict[str, Any]] = []
    t = 0.0
    ref = d0
    h = min(max_step, 0.01, t_max) if t_max > 0 else 0.0
    k1: np.ndarray | None = d0

    while t < t_max - 1e-15:
        h = min(h, max_step, t_max - t)
        frozen = ref

        def f(_t: float, yy: np.ndarray) -> np.ndarray:
            return _follow(spec, yy, frozen)

        try:
            y1, err, ks = dopri_step(f, t, y, h, k1)
            en = error_norm(err, y, y1, tol, tol)
        except _Reject:
            en = math.inf
        if not en <= 1.0:
            h = 0.5 * h if not math.isfinite(en) else min(0.5 * h, next_step(h, en))
            if h < min_step:
                if len(ts) == 1:
                    raise StepFailure("step size underflow at the start", point=y.tolist())
                events.append({"t": t, "kind": "StepFailure", "point": y.tolist()})
                break
            continue
        K1 = _chart_K(spec, y1)
        outside = _outside(y1, lo, hi) > 0
        hit = armed and K1 >= -eps_switch
        if hit or outside:
            base_y, base_t, base_k1 = y, t, k1

            def one(hh: float) -> np.ndarray:
                if hh == 0.0:
                    return base_y
                return dopri_step(f, base_t, base_y, hh, base_k1)[0]

            if hit and not outside:
                hh, yy = _locate(one, lambda z: _chart_K(spec, z) + eps_switch, h)
                kind = "ParabolicHit"
            else:
                hh, yy = _locate(one, lambda z: _outside(z, lo, hi), h)
                kind = "DomainExit"
                if hit and _chart_K(spec, yy) >= -eps_switch:
                    hh, yy = _locate(one, lambda z: _chart_K(spec, z) + eps_switch, hh)
                    kind = "ParabolicHit"
            if hh > 0:
                t += hh
                y = yy
                try:
                    tan = _follow(spec, y, ref)
                except _Reject:
                    tan = ref
                ts.append(t)
                pts.append(y.copy())
                tans.append(tan)
                Ks.append(_chart_K(spec, y))
            events.append({"t": t, "kind": kind, "point": y.tolist()})
            break
        if not armed and K1 < -eps_switch:
            armed = True
        t += h
        y = y1
        ref = ks[-1]
        k1 = ks[-1]
        ts.append(t)
        pts.append(y.copy())
        tans.append(ref.copy())
        Ks.append(K1)
        h = next_step(h, en)

    curve = Curve(np.array(ts), np.array(pts), np.array(tans), branch, events, np.array(Ks))
    _fill_residuals(spec, curve)
    return curve


def _fill_residuals(spec: FieldSpec, curve: Curve) -> None:
    xi, J = spec.jets(curve.points, 1)
    d = curve.tangents
    dd = np.einsum("ij,ij->i", d, d)
    with np.errstate(all="ignore"):
        curve.tangency = np.einsum("ij,ij->i", xi, d) / np.sqrt(dd)
        curve.asymptotic = np.einsum("ij,ijk,ik->i", d, J, d) / dd


# ------------------------------------------------------------- lifted field


def integrate_lie_cartan(
    spec: FieldSpec,
    state0: LieCartanState,
    t_max: float = 1.0,
    tol: float = 1e-10,
    max_step: float = 0.05,
    normalize: bool = False,
    box: tuple[Sequence[float], Sequence[float]] | None = None,
    stall_time: float = 1.0,
    min_step: float = 1e-13,
    reverse: bool = False,
) -> Curve4:
    """Integral curve of the lifted field in (x, y, z, p), chart fixed by ``state0``.

    With ``normalize`` the field is divided by |X| + 1e-9, which keeps the
    orbits and lets trajectories pass close to singular points. ``reverse``
    integrates the negated field, i.e. backward in time.
    """
    chart = state0.chart
    F0, _, _ = F_value(spec, state0)
    if abs(F0) > 1e-6:
        raise IntegrationFailure("start is not on the Lie-Cartan hypersurface", F=F0)
    lo, hi = (np.asarray(b, dtype=float) for b in (box or (spec.domain.lo, spec.domain.hi)))

    sign = -1.0 if reverse else 1.0

    def raw(y: np.ndarray) -> np.ndarray:
        return sign * lie_cartan_field(spec, LieCartanState.from_vector(y, chart))

    def f(_t: float, y: np.ndarray) -> np.ndarray:
        X = raw(y)
        if normalize:
            return X / (np.linalg.norm(X) + 1e-9)
        return X

    y = state0.vector.astype(float)
    t = 0.0
    h = min(max_step, 0.01)
    ts, ys, Fs = [0.0], [y.copy()], [F0]
    events: list[dict[str, Any]] = []
    k1 = f(t, y)
    stalled_since: float | None = None
    while t < t_max - 1e-15:
        h = min(h, max_step, t_max - t)
        y1, err, ks = dopri_step(f, t, y, h, k1)
        en = error_norm(err, y, y1, tol, tol)
        if not en <= 1.0:
            h = min(0.5 * h, next_step(h, en)) if math.isfinite(en) else 0.5 * h
            if h < min_step:
                events.append({"t": t, "kind": "StepFailure", "point": y.tolist()})
                break
            continue
        if _outside(y1[:3], lo, hi) > 0:
            base_y, base_t, base_k1 = y, t, k1
            hh, yy = _locate(
                lambda s: base_y if s == 0.0 else dopri_step(f, base_t, base_y, s, base_k1)[0],
                lambda z: _outside(z[:3], lo, hi),
                h,
            )
            if hh > 0:
                t += hh
                y = yy
                ts.append(t)
                ys.append(y.copy())
                Fs.append(F_value(spec, LieCartanState.from_vector(y, chart))[0])
            events.append({"t": t, "kind": "DomainExit", "point": y.tolist()})
            break
        t += h
        y = y1
        k1 = ks[-1]
        ts.append(t)
        ys.append(y.copy())
        Fs.append(F_value(spec, LieCartanState.from_vector(y, chart))[0])
        speed = float(np.linalg.norm(raw(y)))
        if speed < 1e-12:
            stalled_since = t if stalled_since is None else stalled_since
            if t - stalled_since >= stall_time:
                events.append({"t": t, "kind": "StagnationNearSingularity", "point": y.tolist()})
                break
        else:
            stalled_since = None
        h = next_step(h, en)

    ts_a, ys_a = np.array(ts), np.array(ys)
    tangents = np.array([raw(s)[:3] for s in ys_a])
    projection = Curve(ts_a, ys_a[:, :3].copy(), tangents, None, list(events))
    _fill_residuals(spec, projection)
    return Curve4(ts_a, ys_a, chart, np.array(Fs), events, projection)


# ------------------------------------------------------------------ batches


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("PLANEFIELD_THREADS", "1")))
    except ValueError:
        return 1


def asymptotic_portrait(
    spec: FieldSpec, seeds: Sequence[Sequence[float]], **params: Any
) -> list[Curve | dict[str, Any]]:
    """Both branches from every seed, ordered by seed index then branch.

    Failures are returned in place as error records and never abort the batch.
    """
    jobs = [(i, np.asarray(s, dtype=float), b) for i, s in enumerate(seeds) for b in (1, 2)]

    def run(job: tuple[int, np.ndarray, int]) -> Curve | dict[str, Any]:
        i, seed, b = job
        try:
            return integrate_asymptotic(spec, seed, b, **params)
        except PlaneFieldError as err:
            out = err.to_dict()
            out.update({"seed_index": i, "branch": b, "seed": seed.tolist()})
            return out

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        return list(pool.map(run, jobs))


# --------------------------------------------------------------- diagnostics


def _flow(spec: FieldSpec, r: np.ndarray, ref: np.ndarray, length: float, substeps: int = 4) -> np.ndarray:
    """Follow the asymptotic direction closest to ``ref`` for arclength ``length`` (RK4)."""
    dt = length / substeps
    for _ in range(substeps):
        k1 = _follow(spec, r, ref)
        k2 = _follow(spec, r + 0.5 * dt * k1, k1)
        k3 = _follow(spec, r + 0.5 * dt * k2, k1)
        k4 = _follow(spec, r + dt * k3, k1)
        step = (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        r = r + dt * step
        ref = step
    return r


def curve_diagnostics(spec: FieldSpec, curve: Curve, delta: float = 1e-3) -> Curve:
    """Attach kn, kg, tau_g, curvature k and torsion tau at every sample.

    Samples are already arclength parametrized. Around each sample the line
    is re-traced for arclength +/- delta and the derivatives r'', r''' come
    from central differences of the unit tangent. kg and tau_g use the unit
    normal xi / |xi|, so that for an asymptotic line |kg| = k and tau_g = tau.
    """
    n = len(curve)
    if n < 5:
        raise TooShort("diagnostics need at least five samples", samples=n)
    out = {k: np.full(n, np.nan) for k in ("kn", "kg", "tau_g", "k", "tau")}
    xi_all, J_all = spec.jets(curve.points, 1)
    for i in range(n):
        r = curve.points[i]
        ref = curve.tangents[i]
        if not np.linalg.norm(ref) > 0:
            continue
        ref = ref / np.linalg.norm(ref)
        derivs = None
        d = delta
        while d >= 1e-5 and derivs is None:
            try:
                z0 = _follow(spec, r, ref)
                zp = _follow(spec, _flow(spec, r, z0, d), z0)
                zm = _follow(spec, _flow(spec, r, -z0, d), z0)
                derivs = (z0, (zp - zm) / (2 * d), (zp - 2 * z0 + zm) / (d * d))
            except _Reject:
                d *= 0.1
        if derivs is None:
            continue
        r1, r2, r3 = derivs
        xi, J = xi_all[i], J_all[i]
        nrm = xi / np.linalg.norm(xi)
        cross = np.cross(r1, r2)
        speed = np.linalg.norm(r1)
        out["k"][i] = np.linalg.norm(cross) / speed**3
        c2 = float(np.dot(cross, cross))
        out["tau"][i] = np.linalg.det(np.stack([r1, r2, r3])) / c2 if c2 > 0 else np.nan
        out["kg"][i] = np.linalg.det(np.stack([nrm, r1, r2])) / speed**3
        out["kn"][i] = -float(r1 @ J @ r1) / speed**2
        out["tau_g"][i] = np.linalg.det(np.stack([r1, nrm, J @ r1])) / (
            speed**2 * np.linalg.norm(xi)
        )
    curve.diagnostics = out
    return curve
