"""Run configuration: JSON schema validation, defaults and field resolution."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .errors import ConfigError
from .expr import Domain, FieldSpec, field_from_mapping, load_field

__all__ = [
    "COMMANDS",
    "EXAMPLES",
    "DEFAULTS",
    "SCHEMA",
    "RunConfig",
    "load_config",
    "config_from_mapping",
    "example_config_path",
    "example_field_path",
]

COMMANDS = ["validate", "analyze", "surface", "special-curve", "trace", "portrait", "reproduce"]
EXAMPLES = [
    "cusp",
    "saddle",
    "node",
    "focus",
    "saddle-node",
    "node-focus",
    "hopf-hyperbolic",
    "hopf-elliptic",
    "circle",
    "sphere-k",
]

DEFAULTS: dict[str, Any] = {
    "tol": 1e-10,
    "resolution": 32,
    "branch": 1,
    "step": 0.02,
    "max_samples": 400,
    "t_max": 1.0,
    "max_step": 0.05,
    "eps_switch": 1e-4,
    "format": "json",
    "out": ".",
}

_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_positive = {"type": "number", "exclusiveMinimum": 0}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["field"],
    "properties": {
        "field": {
            "oneOf": [
                {"type": "string", "minLength": 1},
                {
                    "type": "object",
                    "required": ["a", "b", "c"],
                    "properties": {
                        "a": {"type": "string"},
                        "b": {"type": "string"},
                        "c": {"type": "string"},
                        "domain": {
                            "type": "object",
                            "required": ["min", "max"],
                            "properties": {"min": _vec3, "max": _vec3},
                        },
                    },
                },
            ]
        },
        "command": {"enum": COMMANDS},
        "box": {"type": "array", "items": {"type": "number"}, "minItems": 6, "maxItems": 6},
        "resolution": {"type": "integer", "minimum": 8},
        "point": _vec3,
        "seed": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 4},
        "seeds": {"type": "array", "items": _vec3},
        "orient": _vec3,
        "branch": {"enum": [1, 2]},
        "tol": _positive,
        "step": _positive,
        "max_samples": {"type": "integer", "minimum": 2},
        "t_max": _positive,
        "max_step": _positive,
        "eps_switch": _positive,
        "normalize": {"type": "boolean"},
        "example": {"enum": EXAMPLES},
        "format": {"enum": ["obj", "json", "csv"]},
        "out": {"type": "string"},
    },
}


def _pointer(path: Any) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path) or "/"


def _message(err: jsonschema.ValidationError) -> str:
    key = str(err.path[-1]) if err.path else "config"
    if err.validator == "minimum":
        return f"{key} ≥ {err.validator_value}"
    if err.validator == "exclusiveMinimum":
        return f"{key} > {err.validator_value}"
    if err.validator == "required":
        return err.message
    if err.validator == "additionalProperties":
        return err.message
    return f"{key}: {err.message}"


@dataclass
class RunConfig:
    field: FieldSpec
    field_source: str
    command: str | None = None
    box: tuple[tuple[float, float, float], tuple[float, float, float]] | None = None
    resolution: int = DEFAULTS["resolution"]
    point: list[float] | None = None
    seed: list[float] | None = None
    seeds: list[list[float]] = field(default_factory=list)
    orient: list[float] | None = None
    branch: int = DEFAULTS["branch"]
    tol: float = DEFAULTS["tol"]
    step: float = DEFAULTS["step"]
    max_samples: int = DEFAULTS["max_samples"]
    t_max: float = DEFAULTS["t_max"]
    max_step: float = DEFAULTS["max_step"]
    eps_switch: float = DEFAULTS["eps_switch"]
    normalize: bool = False
    example: str | None = None
    format: str = DEFAULTS["format"]
    out: str = DEFAULTS["out"]

    def tolerances(self) -> dict[str, float]:
        return {"tol": self.tol, "eps_switch": self.eps_switch, "step": self.step, "max_step": self.max_step}

    def to_dict(self) -> dict[str, Any]:
        """Resolved settings. The output directory is left out so it never changes the config hash."""
        return {
            "field": self.field.to_dict(),
            "field_source": self.field_source,
            "command": self.command,
            "box": [list(self.box[0]), list(self.box[1])] if self.box else None,
            "resolution": self.resolution,
            "point": self.point,
            "seed": self.seed,
            "seeds": self.seeds,
            "orient": self.orient,
            "branch": self.branch,
            "tol": self.tol,
            "step": self.step,
            "max_samples": self.max_samples,
            "t_max": self.t_max,
            "max_step": self.max_step,
            "eps_switch": self.eps_switch,
            "normalize": self.normalize,
            "example": self.example,
            "format": self.format,
        }


def _split_box(values: list[float]) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
    lo, hi = tuple(values[:3]), tuple(values[3:])
    Domain(lo, hi)  # validates extent
    return lo, hi


def config_from_mapping(data: Any, base_dir: Path | None = None) -> RunConfig:
    """Validate a config mapping and apply defaults. Relative paths resolve against ``base_dir``."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(e.path), e.validator))
    if errors:
        err = errors[0]
        raise ConfigError(_message(err), _pointer(err.path))
    base_dir = base_dir or Path.cwd()
    source = data["field"]
    if isinstance(source, str):
        path = Path(source)
        if not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ConfigError(f"field file not found: {source}", "/field")
        spec = load_field(path)
        field_source = str(source)
    else:
        spec = field_from_mapping(source, "/field", name="inline")
        field_source = "inline"
    box = None
    if "box" in data:
        try:
            box = _split_box(data["box"])
        except ConfigError as err:
            raise ConfigError(err.message, "/box") from None
    else:
        box = (tuple(spec.domain.lo), tuple(spec.domain.hi))
    kwargs = {k: data[k] for k in data if k not in ("field", "box")}
    return RunConfig(field=spec, field_source=field_source, box=box, **kwargs)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", "") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err.msg}", "", line=err.lineno) from None
    return config_from_mapping(data, path.parent)


def _data_path(*parts: str) -> Path:
    return Path(str(resources.files("planefield").joinpath("data", *parts)))


def example_config_path(name: str) -> Path:
    if name not in EXAMPLES:
        raise ConfigError(f"unknown example {name!r}", "/example", choices=EXAMPLES)
    return _data_path("configs", f"{name}.json")


def example_field_path(name: str) -> Path:
    if name not in EXAMPLES:
        raise ConfigError(f"unknown example {name!r}", "/example", choices=EXAMPLES)
    return _data_path("fields", f"{name}.json")
