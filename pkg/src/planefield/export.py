"""Deterministic export of meshes and curves to OBJ, JSON and CSV.

Floats are written with ``repr`` (shortest round-trip decimal) and non-finite
values as ``null`` in JSON or ``nan`` in CSV. Every artifact carries a
provenance block with the tool version, a config hash and the tolerances.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .errors import IncompatibleFormat
from .integrate import Curve, Curve4
from .parabolic import ParabolicMesh, SpecialCurve

__all__ = ["provenance", "config_hash", "export", "render", "clean", "SPECIAL_CURVE_COLUMNS"]

SPECIAL_CURVE_COLUMNS = ["x", "y", "z", "p", "sigma1", "sigma2", "disc", "phi", "K", "class"]
FORMATS = ("obj", "json", "csv")


def config_hash(config: dict[str, Any]) -> str:
    text = json.dumps(clean(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def provenance(config: dict[str, Any] | None = None, tolerances: dict[str, float] | None = None) -> dict[str, Any]:
    return {
        "tool": "planefield",
        "version": __version__,
        "config_hash": config_hash(config or {}),
        "tolerances": clean(tolerances or {}),
    }


def clean(obj: Any) -> Any:
    """Convert numpy values to plain Python and non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def _num(v: Any) -> str:
    if isinstance(v, str):
        return v
    if v is None:
        return "nan"
    return repr(float(v))


def _mesh_dict(mesh: ParabolicMesh) -> dict[str, Any]:
    return {
        "vertex_count": int(len(mesh.vertices)),
        "triangle_count": int(len(mesh.triangles)),
        "vertices": [
            {
                "index": i,
                "K": mesh.K_residual[i],
                "grad_norm": mesh.grad_norm[i],
                "phi": mesh.phi[i],
                "class": mesh.classes[i] if mesh.classes is not None else None,
                "converged": bool(mesh.converged[i]),
            }
            for i in range(len(mesh.vertices))
        ],
        "warnings": mesh.warnings,
    }


def _obj_text(mesh: ParabolicMesh, prov: dict[str, Any]) -> str:
    out = io.StringIO()
    out.write("# planefield parabolic surface\n")
    out.write("# provenance " + json.dumps(clean(prov), sort_keys=True) + "\n")
    for v in mesh.vertices:
        out.write("v " + " ".join(_num(c) for c in v) + "\n")
    for t in mesh.triangles:
        out.write("f " + " ".join(str(int(i) + 1) for i in t) + "\n")
    return out.getvalue()


def _curve_rows(artifact: Any) -> tuple[list[str], list[list[Any]]]:
    if isinstance(artifact, SpecialCurve):
        rows = [[s.to_dict()[c] for c in SPECIAL_CURVE_COLUMNS] for s in artifact.samples]
        return SPECIAL_CURVE_COLUMNS, rows
    if isinstance(artifact, Curve4):
        cols = ["t", "x", "y", "z", "p", "F"]
        rows = [[t, *s, fv] for t, s, fv in zip(artifact.t, artifact.states, artifact.F)]
        return cols, rows
    records = artifact.records()
    cols = list(records[0].keys()) if records else ["t", "x", "y", "z"]
    return cols, [[r[c] for c in cols] for r in records]


def _csv_text(artifact: Any, prov: dict[str, Any]) -> str:
    cols, rows = _curve_rows(artifact)
    out = io.StringIO()
    out.write("# provenance " + json.dumps(clean(prov), sort_keys=True) + "\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_num(clean(v)) for v in row])
    return out.getvalue()


def _json_text(payload: dict[str, Any], prov: dict[str, Any]) -> str:
    body = {"provenance": prov, **payload}
    return json.dumps(clean(body), indent=1, allow_nan=False) + "\n"


def render(artifact: Any, fmt: str, prov: dict[str, Any] | None = None) -> dict[str, str]:
    """Render to {suffix: text}. Meshes in OBJ also produce a JSON sidecar."""
    fmt = fmt.lower()
    prov = prov or provenance()
    if fmt not in FORMATS:
        raise IncompatibleFormat(f"unknown format {fmt!r}", format=fmt)
    if isinstance(artifact, ParabolicMesh):
        if fmt == "csv":
            raise IncompatibleFormat("meshes export to obj or json only", format=fmt)
        side = _json_text({"kind": "ParabolicMesh", **_mesh_dict(artifact)}, prov)
        if fmt == "obj":
            return {".obj": _obj_text(artifact, prov), ".json": side}
        payload = {
            "kind": "ParabolicMesh",
            "positions": artifact.vertices,
            "triangles": artifact.triangles,
            **_mesh_dict(artifact),
        }
        return {".json": _json_text(payload, prov)}
    if isinstance(artifact, (Curve, Curve4, SpecialCurve)):
        if fmt == "obj":
            raise IncompatibleFormat("curves export to json or csv only", format=fmt)
        if fmt == "csv":
            return {".csv": _csv_text(artifact, prov)}
        return {".json": _json_text({"kind": type(artifact).__name__, **artifact.to_dict()}, prov)}
    if isinstance(artifact, dict):
        if fmt != "json":
            raise IncompatibleFormat("records export to json only", format=fmt)
        return {".json": _json_text(artifact, prov)}
    raise IncompatibleFormat(f"cannot export {type(artifact).__name__}", format=fmt)


def export(artifact: Any, fmt: str, path: str | Path, prov: dict[str, Any] | None = None) -> list[Path]:
    """Write the artifact next to ``path`` (suffix replaced per output). Returns written paths."""
    base = Path(path)
    written = []
    for suffix, text in render(artifact, fmt, prov).items():
        target = base.with_suffix(suffix)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text)
        written.append(target)
    return written
