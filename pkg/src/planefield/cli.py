"""Command line front end: ``planefield <command> [options]``.

Exit codes: 0 success, 1 numerical or domain failure, 2 configuration error.
Errors are written to stderr as a single JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .config import COMMANDS, EXAMPLES, RunConfig, config_from_mapping
from .errors import ConfigError, PlaneFieldError
from .export import clean, export, provenance, render
from .geometry import (
    AllDirections,
    PartiallyUmbilic,
    asymptotic_directions,
    chart_frame,
    integrability_defect,
    principal_data,
)
from .integrate import asymptotic_portrait, curve_diagnostics, integrate_asymptotic
from .parabolic import (
    classify_parabolic_point,
    detect_transitions,
    extract_parabolic_surface,
    trace_special_curve,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(message, "")


def _floats(text: str, counts: Sequence[int], what: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError:
        raise ConfigError(f"{what} must be comma separated numbers", f"/{what}") from None
    if len(vals) not in counts:
        raise ConfigError(f"{what} needs {' or '.join(map(str, counts))} numbers", f"/{what}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="planefield", description="Curvature analysis of plane fields in R^3.")
    p.add_argument("--version", action="version", version=f"planefield {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("args", nargs="*", help="point/seed as x,y,z; branch; or example name")
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--field", help="field definition JSON")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=["obj", "json", "csv"])
    p.add_argument("--tol", type=float)
    p.add_argument("--box", help="x0,y0,z0,x1,y1,z1")
    p.add_argument("--resolution", type=int)
    p.add_argument("--seed", help="x,y,z or x,y,z,p")
    p.add_argument("--branch", type=int, choices=[1, 2])
    return p


def _mapping(ns: argparse.Namespace) -> tuple[dict[str, Any], Path]:
    data: dict[str, Any] = {}
    base = Path.cwd()
    if ns.config:
        path = Path(ns.config)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}", "") from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"config is not valid JSON: {err.msg}", "", line=err.lineno) from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object", "/")
        base = path.parent
    if ns.field:
        data["field"] = str(Path(ns.field).resolve()) if ns.config else ns.field
    data["command"] = ns.command
    for key in ("out", "format", "tol", "resolution", "branch"):
        val = getattr(ns, key)
        if val is not None:
            data[key] = val
    if ns.box:
        data["box"] = _floats(ns.box, [6], "box")
    if ns.seed:
        data["seed"] = _floats(ns.seed, [3, 4], "seed")
    args = list(ns.args)
    if ns.command == "analyze" and args:
        data["point"] = _floats(args.pop(0), [3], "point")
    elif ns.command in ("special-curve", "trace") and args:
        data["seed"] = _floats(args.pop(0), [3, 4], "seed")
        if ns.command == "trace" and args:
            try:
                data["branch"] = int(args.pop(0))
            except ValueError:
                raise ConfigError("branch must be 1 or 2", "/branch") from None
    if args:
        raise ConfigError(f"unexpected arguments: {args}", "")
    if "field" not in data:
        raise ConfigError("no field given (use --field or a config with a field entry)", "/field")
    return data, base


def _emit(cfg: RunConfig, artifact: Any, stem: str, explicit_out: bool, fmt: str) -> None:
    prov = provenance(cfg.to_dict(), cfg.tolerances())
    if explicit_out:
        paths = export(artifact, fmt, Path(cfg.out) / stem, prov)
        print(json.dumps({"written": [str(p) for p in paths]}))
        return
    outputs = render(artifact, fmt, prov)
    sys.stdout.write(next(iter(outputs.values())))


def _validate(cfg: RunConfig) -> dict[str, Any]:
    lo, hi = (np.asarray(b, dtype=float) for b in cfg.box)
    axes = [np.linspace(lo[k], hi[k], 5) for k in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    defects = []
    for p in pts:
        try:
            defects.append(integrability_defect(cfg.field, p)[1])
        except PlaneFieldError:
            defects.append(float("nan"))
    arr = np.asarray(defects)
    worst = int(np.nanargmax(np.abs(arr))) if np.any(np.isfinite(arr)) else 0
    return {
        "field": cfg.field.to_dict(),
        "samples": len(pts),
        "max_abs_defect": float(np.nanmax(np.abs(arr))) if np.any(np.isfinite(arr)) else None,
        "worst_point": pts[worst].tolist(),
        "completely_integrable_on_samples": bool(np.nanmax(np.abs(arr)) < 1e-12),
    }


def _analyze(cfg: RunConfig) -> dict[str, Any]:
    point = cfg.point or (cfg.seed[:3] if cfg.seed else None)
    if point is None:
        raise ConfigError("analyze needs a point", "/point")
    frame = chart_frame(cfg.field, point)
    out: dict[str, Any] = {
        "point": list(point),
        "chart": frame.chart.to_dict(),
        "e": frame.e,
        "f": frame.f,
        "g": frame.g,
        "K": frame.K,
        "H": frame.H,
    }
    dirs = asymptotic_directions(cfg.field, point)
    out["asymptotic_directions"] = "all" if isinstance(dirs, AllDirections) else [d.tolist() for d in dirs]
    pd = principal_data(cfg.field, point)
    if isinstance(pd, PartiallyUmbilic):
        out["principal"] = {"partially_umbilic": True, "k": pd.k}
    else:
        out["principal"] = {"k1": pd.k1, "k2": pd.k2, "P1": pd.P1.tolist(), "P2": pd.P2.tolist()}
    cls = classify_parabolic_point(cfg.field, point)
    out.update(cls.to_dict())
    return out


def _reproduce(names: list[str]) -> int:
    from .reproduce import run_example

    if not names:
        raise ConfigError("reproduce needs an example name", "/example", choices=EXAMPLES)
    if names == ["all"]:
        names = list(EXAMPLES)
    failed = False
    for name in names:
        if name not in EXAMPLES:
            raise ConfigError(f"unknown example {name!r}", "/example", choices=EXAMPLES)
        checks, elapsed = run_example(name)
        for c in checks:
            print(f"{name}: {c.line()}")
        print(f"{name}: {sum(c.passed for c in checks)}/{len(checks)} checks passed in {elapsed:.2f} s")
        failed = failed or not all(c.passed for c in checks)
    return 1 if failed else 0


def run(argv: Sequence[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    if ns.command == "reproduce":
        return _reproduce(list(ns.args))
    data, base = _mapping(ns)
    cfg = config_from_mapping(data, base)
    explicit_out = ns.out is not None or (ns.config is not None and "out" in data)
    spec = cfg.field
    if ns.command == "validate":
        print(json.dumps(clean({"provenance": provenance(cfg.to_dict(), cfg.tolerances()), **_validate(cfg)}), indent=1))
        return 0
    if ns.command == "analyze":
        print(json.dumps(clean({"provenance": provenance(cfg.to_dict(), cfg.tolerances()), **_analyze(cfg)}), indent=1))
        return 0
    if ns.command == "surface":
        mesh = extract_parabolic_surface(spec, cfg.box, cfg.resolution)
        fmt = ns.format or ("obj" if explicit_out else "json")
        _emit(cfg, mesh, "surface", explicit_out, fmt)
        return 0
    if ns.command == "special-curve":
        if cfg.seed is None:
            raise ConfigError("special-curve needs a seed", "/seed")
        curve = trace_special_curve(spec, cfg.seed[:3], step=cfg.step, max_samples=cfg.max_samples, box=cfg.box)
        detect_transitions(spec, curve)
        _emit(cfg, curve, "special_curve", explicit_out, cfg.format)
        return 0
    if ns.command == "trace":
        if cfg.seed is None:
            raise ConfigError("trace needs a seed", "/seed")
        curve = integrate_asymptotic(spec, cfg.seed[:3], cfg.branch, t_max=cfg.t_max, tol=cfg.tol,
                                     max_step=cfg.max_step, eps_switch=cfg.eps_switch, box=cfg.box,
                                     orient=cfg.orient)
        if len(curve) >= 5:
            curve_diagnostics(spec, curve)
        _emit(cfg, curve, "trace", explicit_out, cfg.format)
        return 0
    if ns.command == "portrait":
        seeds = cfg.seeds or ([cfg.seed[:3]] if cfg.seed else [])
        results = asymptotic_portrait(spec, seeds, t_max=cfg.t_max, tol=cfg.tol, max_step=cfg.max_step,
                                      eps_switch=cfg.eps_switch, box=cfg.box)
        payload = {"kind": "Portrait",
                   "curves": [r.to_dict() if hasattr(r, "to_dict") else {"error": r} for r in results]}
        _emit(cfg, payload, "portrait", explicit_out, "json")
        return 0
    raise ConfigError(f"unknown command {ns.command}", "/command")  # pragma: no cover


def main(argv: Sequence[str] | None = None) -> int:
    try:
        return run(argv)
    except PlaneFieldError as err:
        sys.stderr.write(json.dumps(clean(err.to_dict() | {"exit_code": err.exit_code})) + "\n")
        return err.exit_code
    except OSError as err:
        sys.stderr.write(json.dumps({"error": "IOError", "message": str(err)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
