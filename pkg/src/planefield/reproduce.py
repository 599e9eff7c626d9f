"""Canned example scenarios with golden checks.

Each scenario loads its shipped field, runs the relevant computations and
returns a list of checks. Golden values live in ``data/goldens.json``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable

import numpy as np

from .config import EXAMPLES, example_field_path
from .errors import PlaneFieldError
from .expr import FieldSpec, compile_exprs, load_field, parse
from .geometry import chart_coefficients, integrability_defect
from .integrate import integrate_asymptotic
from .liecartan import LieCartanState, spectral_pair
from .parabolic import (
    Tag,
    classify_parabolic_point,
    compact_components,
    cusp_model,
    detect_transitions,
    extract_parabolic_surface,
    trace_special_curve,
)

__all__ = ["Check", "run_example", "goldens", "SCENARIOS", "surface_samples", "cusp_exponent_fit", "closed_form_K"]

SURFACE_POINTS = 500
SURFACE_TOL = 1e-8
OFFSET = 1e-2


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}" + (f": {self.detail}" if self.detail else "")

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@lru_cache(maxsize=1)
def goldens() -> dict[str, Any]:
    from importlib import resources

    return json.loads(resources.files("planefield").joinpath("data", "goldens.json").read_text())


def _fn(text: str) -> Callable[..., Any]:
    f = compile_exprs([parse(text)], True)
    return lambda x, y, z: np.broadcast_to(np.asarray(f(x, y, z)[0], dtype=float), np.shape(x))


def _check(name: str, cond: bool, detail: str = "") -> Check:
    return Check(name, bool(cond), detail)


def surface_samples(spec: FieldSpec, surface: dict[str, Any], n: int = SURFACE_POINTS,
                    seed: int = 0) -> tuple[np.ndarray, int]:
    """Points on a reference surface: two free coordinates random, the solved one from ``param``."""
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(spec.domain.lo), np.asarray(spec.domain.hi)
    k = "xyz".index(surface["solve"])
    pts = rng.uniform(0.5 * lo, 0.5 * hi, size=(n, 3))
    pts[:, k] = _fn(surface["param"])(pts[:, 0], pts[:, 1], pts[:, 2])
    return pts, k


def _surface_checks(spec: FieldSpec, surface: dict[str, Any]) -> list[Check]:
    pts, k = surface_samples(spec, surface)
    K = chart_coefficients(spec, pts)["K"]
    worst = float(np.max(np.abs(K)))
    shift = np.zeros(3)
    shift[k] = OFFSET
    off = np.concatenate([chart_coefficients(spec, pts + shift)["K"],
                          chart_coefficients(spec, pts - shift)["K"]])
    smallest = float(np.min(np.abs(off)))
    return [
        _check("K vanishes on the reference surface", worst < SURFACE_TOL, f"max |K| = {worst:.3g}"),
        _check("K nonzero at 1e-2 offsets", smallest > SURFACE_TOL, f"min |K| = {smallest:.3g}"),
    ]


def _trace(spec: FieldSpec, g: dict[str, Any], step: float = 0.02, max_samples: int = 80):
    curve = trace_special_curve(spec, g["seed"], step=step, max_samples=max_samples)
    return detect_transitions(spec, curve)


def _curve_match(curve, g: dict[str, Any]) -> float:
    var = g["param"]
    worst = 0.0
    for s in curve.samples:
        x, y, z = s.point
        env = {"x": x, "y": y, "z": z}
        t = env[var]
        for name in "xyz":
            if name == var or name not in g:
                continue
            expected = float(_fn(g[name])(np.array(t if var == "x" else 0.0),
                                          np.array(t if var == "y" else 0.0),
                                          np.array(t if var == "z" else 0.0)))
            worst = max(worst, abs(env[name] - expected))
    return worst


def cusp_exponent_fit(spec: FieldSpec, start, orient, branch: int, lo: float = 1e-4,
                      hi: float = 1e-2) -> tuple[float, int]:
    """Slope of log lateral vs log axial displacement of an asymptotic line entering a cusp."""
    from .geometry import asymptotic_directions

    c = integrate_asymptotic(spec, start, branch, t_max=1.0, orient=orient, max_step=1e-3,
                             eps_switch=1e-12)
    if not c.events or c.events[-1]["kind"] != "ParabolicHit":
        raise PlaneFieldError("asymptotic line did not reach the parabolic surface")
    P = c.points[-1]
    dirs = asymptotic_directions(spec, P)
    axial_dir = dirs[0]
    xi = spec.values(P)
    lateral_dir = np.cross(xi / np.linalg.norm(xi), axial_dir)
    pts = c.dense(8)
    d = pts - P
    axial = np.abs(d @ axial_dir)
    lateral = np.abs(d @ lateral_dir)
    mask = (axial > lo) & (axial < hi) & (lateral > 0)
    slope = float(np.polyfit(np.log(axial[mask]), np.log(lateral[mask]), 1)[0])
    return slope, int(mask.sum())


# --------------------------------------------------------------- scenarios


def _cusp(spec: FieldSpec, g: dict[str, Any]) -> list[Check]:
    checks = _surface_checks(spec, g["surface"])
    tags = [classify_parabolic_point(spec, p).tag for p in g["cuspidal_points"]]
    checks.append(_check("points on x = 0 are cuspidal", all(t == Tag.CUSPIDAL for t in tags),
                         ", ".join(t.value for t in tags)))
    cm = g["cusp_model"]
    I, R = cusp_model(spec, cm["point"], axis=cm["axis"])
    checks.append(_check("cusp model (I, R) at the origin", abs(I - cm["I"]) < 1e-12 and abs(R - cm["R"]) < 1e-12,
                         f"I = {I!r}, R = {R!r}"))
    mesh = extract_parabolic_surface(spec, resolution=g["mesh_resolution"], classify=False)
    dev = float(np.max(np.abs(mesh.vertices[:, 0])))
    checks.append(_check("mesh vertices lie on x = 0", dev < 1e-9, f"max |x| = {dev:.3g}"))
    ce = g["cusp_exponent"]
    for b in (1, 2):
        slope, n = cusp_exponent_fit(spec, ce["start"], ce["orient"], b)
        checks.append(_check(f"cusp exponent, branch {b}", abs(slope - ce["slope"]) <= ce["slope_tol"],
                             f"slope {slope:.4f} from {n} points"))
    return checks


def _saddle(spec: FieldSpec, g: dict[str, Any]) -> list[Check]:
    checks = _surface_checks(spec, g["surface"])
    curve = _trace(spec, g)
    tags = {s.tag for s in curve.samples}
    off_axis = max(float(np.hypot(s.point[0], s.point[1])) for s in curve.samples)
    checks.append(_check("special curve is the z-axis", off_axis < 1e-8, f"max distance {off_axis:.3g}"))
    checks.append(_check("all samples are saddles", tags == {Tag.SADDLE}, ", ".join(sorted(t.value for t in tags))))
    sd = spectral_pair(spec, LieCartanState(0.0, 0.0, 0.0, 0.0))
    lam = sorted(float(np.real(v)) for v in sd.lambdas)
    ok = all(abs(a - b) < 1e-9 for a, b in zip(lam, g["spectrum_at_origin"]))
    checks.append(_check("eigenvalues at the origin", ok, f"{lam}"))
    return checks


def _on_curve(spec: FieldSpec, g: dict[str, Any], window: list[float] | None = None) -> list[Check]:
    checks = _surface_checks(spec, g["surface"])
    curve = _trace(spec, g)
    err = _curve_match(curve, g["curve"])
    checks.append(_check("traced curve matches the reference curve", err < 1e-6, f"max deviation {err:.3g}"))
    var = "xyz".index(g["curve"]["param"])
    chosen = [s for s in curve.samples
              if window is None or window[0] <= s.point[var] <= window[1]]
    tags = {s.tag for s in chosen}
    checks.append(_check(f"samples are {g['class']}", tags == {Tag(g['class'])},
                         f"{len(chosen)} samples: " + ", ".join(sorted(t.value for t in tags))))
    return checks


def _node(spec: FieldSpec, g: dict[str, Any]) -> list[Check]:
    return _on_curve(spec, g, g["class_window"])


def _focus(spec: FieldSpec, g: dict[str, Any]) -> list[Check]:
    return _on_curve(spec, g)


def _transition(spec: FieldSpec, g: dict[str, Any]) -> list[Check]:
    checks = _surface_checks(spec, g["surface"])
    curve = _trace(spec, g)
    tr = g["transition"]
    found = [t for t in curve.transitions if t.kind == tr["kind"]]
    checks.append(_check(f"exactly one {tr['kind']} transition", len(found) == 1,
                         f"found {[t.kind for t in curve.transitions]}"))
    if not found:
        return checks
    t = min(found, key=lambda t: float(np.linalg.norm(t.point - np.asarray(tr["point"]))))
    dist = float(np.linalg.norm(t.point - np.asarray(tr["point"], dtype=float)))
    checks.append(_check(f"{tr['kind']} at the origin", dist < tr["tol"], f"distance {dist:.3g}"))
    if "sides" in tr:
        k = "xyz".index(tr["side_axis"])
        neg = {s.tag for s in curve.samples if s.point[k] < t.point[k] - 1e-3 and abs(s.point[k]) < 0.1}
        pos = {s.tag for s in curve.samples if s.point[k] > t.point[k] + 1e-3 and abs(s.point[k]) < 0.1}
        ok = neg == {Tag(tr["sides"][0])} and pos == {Tag(tr["sides"][1])}
        checks.append(_check(f"{tr['sides'][0]} for {tr['side_axis']} < 0 and {tr['sides'][1]} for {tr['side_axis']} > 0",
                             ok, f"{sorted(x.value for x in neg)} | {sorted(x.value for x in pos)}"))
    if tr["kind"] == "Hopf":
        i, j = t.interval
        discs = (curve.samples[i].disc, curve.samples[j].disc)
        checks.append(_check("disc < 0 on both sides", all(d < 0 for d in discs), f"disc = {discs}"))
        checks.append(_check(f"Hopf point is {tr['class']}", t.tag == Tag(tr["class"]),
                             f"delta = {t.delta!r}, tag = {t.tag.value if t.tag else None}"))
    return checks


def _hopf(spec: FieldSpec, g: dict[str, Any]) -> list[Check]:
    checks = _transition(spec, g)
    if not any(c.name.startswith("exactly one") and c.passed for c in checks):
        sd = spectral_pair(spec, LieCartanState(0.0, 0.0, 0.0, 0.0))
        checks.append(_check("spectrum at the origin", False,
                             f"sigma1 = {sd.sigma1!r}, sigma2 = {sd.sigma2!r}, disc = {sd.disc!r}"))
    return checks


def _circle(spec: FieldSpec, g: dict[str, Any]) -> list[Check]:
    n = g["samples"]
    th = 2 * np.pi * np.arange(n) / n
    pts = np.stack([np.cos(th), np.sin(th), np.zeros(n)], axis=1)
    tan = np.stack([-np.sin(th), np.cos(th), np.zeros(n)], axis=1)
    xi, J = spec.jets(pts, 1)
    tres = np.abs(np.einsum("ij,ij->i", xi, tan))
    ares = np.abs(np.einsum("ij,ijk,ik->i", tan, J, tan))
    checks = [
        _check("tangency residual on the unit circle", tres.max() < g["residual_tol"], f"max {tres.max():.3g}"),
        _check("asymptotic residual on the unit circle", ares.max() < g["residual_tol"], f"max {ares.max():.3g}"),
    ]
    d = g["defect"]
    _, R = integrability_defect(spec, d["point"])
    checks.append(_check("integrability defect at the sampled point", abs(R - d["value"]) < 1e-12 and R != 0,
                         f"defect = {R!r}"))
    tr = g["trace"]
    from .integrate import branch_of

    b = branch_of(spec, tr["start"], tr["orient"])
    c = integrate_asymptotic(spec, tr["start"], b, t_max=2 * math.pi, orient=tr["orient"], max_step=0.02)
    end = c.points[-1]
    closure = float(np.linalg.norm(end - np.asarray(tr["start"], dtype=float)))
    radial = float(np.max(np.abs(np.hypot(c.points[:, 0], c.points[:, 1]) - 1.0)))
    height = float(np.max(np.abs(c.points[:, 2])))
    checks.append(_check("integrated line closes after one revolution", closure < tr["closure_tol"],
                         f"gap {closure:.3g}"))
    checks.append(_check("integrated line stays on the circle", max(radial, height) < tr["closure_tol"],
                         f"radial {radial:.3g}, height {height:.3g}"))
    return checks


def closed_form_K(spec: FieldSpec, pts: np.ndarray) -> np.ndarray:
    """Closed-form K for fields of the form (f, g, 1) evaluated from the raw jets."""
    xi, J = spec.jets(pts, 1)
    f, g = xi[..., 0], xi[..., 1]
    fx, fy, fz = J[..., 0, 0], J[..., 0, 1], J[..., 0, 2]
    gx, gy, gz = J[..., 1, 0], J[..., 1, 1], J[..., 1, 2]
    return (fx - f * fz) * (gy - g * gz) - (fy - f * gz + gx - g * fz) ** 2 / 4


def _sphere(spec: FieldSpec, g: dict[str, Any]) -> list[Check]:
    lo, hi = spec.domain.lo, spec.domain.hi
    mesh = extract_parabolic_surface(spec, resolution=g["resolution"], classify=False)
    comps = compact_components(mesh, lo, hi, margin=1e-6)
    eulers = [c["euler"] for c in comps]
    checks = [_check("compact component has Euler characteristic 2", g["euler"] in eulers,
                     f"compact components: {comps}")]
    rng = np.random.default_rng(1)
    pts = rng.uniform(lo, hi, size=(g["oracle_points"], 3))
    K = chart_coefficients(spec, pts, axis=2)["K"]
    oracle = closed_form_K(spec, pts)
    reference = _fn(g["reference_polynomial"])(pts[:, 0], pts[:, 1], pts[:, 2])
    gap = float(np.max(np.abs(K - oracle) / (1 + np.abs(oracle))))
    checks.append(_check("chart K equals the closed-form oracle", gap < 1e-9, f"max rel gap {gap:.3g}"))
    both = (np.abs(K) > 1e-6) & (np.abs(reference) > 1e-6)
    signs = bool(np.all(np.sign(K[both]) == np.sign(reference[both])))
    ratio = reference[both] / K[both]
    spread = float(np.ptp(ratio) / np.mean(ratio))
    checks.append(_check("reference polynomial has the same signs as K", signs, f"{int(both.sum())} points"))
    checks.append(_check("reference polynomial is a constant multiple of K", spread < 1e-6,
                         f"ratio {float(np.mean(ratio)):.12g}, relative spread {spread:.3g}"))
    return checks


SCENARIOS: dict[str, Callable[[FieldSpec, dict[str, Any]], list[Check]]] = {
    "cusp": _cusp,
    "saddle": _saddle,
    "node": _node,
    "focus": _focus,
    "saddle-node": _transition,
    "node-focus": _transition,
    "hopf-hyperbolic": _hopf,
    "hopf-elliptic": _hopf,
    "circle": _circle,
    "sphere-k": _sphere,
}


def run_example(name: str) -> tuple[list[Check], float]:
    """Run one scenario. Returns the checks and the elapsed wall time in seconds."""
    if name not in EXAMPLES:
        raise KeyError(name)
    spec = load_field(example_field_path(name))
    start = time.perf_counter()
    try:
        checks = SCENARIOS[name](spec, goldens()[name])
    except PlaneFieldError as err:
        checks = [Check("scenario ran", False, f"{err.kind}: {err.message}")]
    return checks, time.perf_counter() - start
