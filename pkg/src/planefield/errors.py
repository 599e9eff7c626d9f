"""Exception hierarchy shared by every module.

Each error carries a short machine-readable ``kind`` and an exit code so the
command line front end can map failures without inspecting messages.
"""

from __future__ import annotations

from typing import Any

__all__ = [
    "PlaneFieldError",
    "ConfigError",
    "ParseError",
    "ExprSyntaxError",
    "UnknownIdentifier",
    "NonIntegerExponent",
    "DomainError",
    "SingularXi",
    "NotInPlane",
    "ChartMismatch",
    "NotOnCriminant",
    "NoConvergence",
    "DegenerateGradient",
    "NotParabolic",
    "DegenerateDirections",
    "NotCuspidal",
    "SeedNotConverged",
    "RankDeficient",
    "EmptySurface",
    "StartNotHyperbolic",
    "StepFailure",
    "IntegrationFailure",
    "TooShort",
    "IncompatibleFormat",
]


class PlaneFieldError(Exception):
    """Base class. Exit code 1 means a numerical/domain failure."""

    kind = "PlaneFieldError"
    exit_code = 1

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"error": self.kind, "message": self.message}
        for key in sorted(self.details):
            out[key] = self.details[key]
        return out


class ConfigError(PlaneFieldError):
    """Invalid configuration; ``pointer`` is a JSON pointer to the bad key."""

    kind = "ConfigError"
    exit_code = 2

    def __init__(self, message: str, pointer: str = "", **details: Any) -> None:
        super().__init__(message, pointer=pointer, **details)
        self.pointer = pointer


class ParseError(ConfigError):
    kind = "ParseError"

    def __init__(self, message: str, offset: int, text: str = "") -> None:
        super().__init__(message, offset=offset)
        self.offset = offset
        self.text = text


class ExprSyntaxError(ParseError):
    kind = "SyntaxError"


class UnknownIdentifier(ParseError):
    kind = "UnknownIdentifier"


class NonIntegerExponent(ParseError):
    kind = "NonIntegerExponent"


class DomainError(PlaneFieldError):
    """Evaluation left the real domain (division by zero, sqrt of a negative)."""

    kind = "DomainError"


class SingularXi(PlaneFieldError):
    kind = "SingularXi"


class NotInPlane(PlaneFieldError):
    kind = "NotInPlane"


class ChartMismatch(PlaneFieldError):
    kind = "ChartMismatch"


class NotOnCriminant(PlaneFieldError):
    kind = "NotOnCriminant"


class NoConvergence(PlaneFieldError):
    kind = "NoConvergence"


class DegenerateGradient(PlaneFieldError):
    kind = "DegenerateGradient"


class NotParabolic(PlaneFieldError):
    kind = "NotParabolic"


class DegenerateDirections(PlaneFieldError):
    kind = "DegenerateDirections"


class NotCuspidal(PlaneFieldError):
    kind = "NotCuspidal"


class SeedNotConverged(PlaneFieldError):
    kind = "SeedNotConverged"


class RankDeficient(PlaneFieldError):
    kind = "RankDeficient"


class EmptySurface(PlaneFieldError):
    kind = "EmptySurface"


class StartNotHyperbolic(PlaneFieldError):
    kind = "StartNotHyperbolic"


class StepFailure(PlaneFieldError):
    kind = "StepFailure"


class IntegrationFailure(PlaneFieldError):
    kind = "IntegrationFailure"


class TooShort(PlaneFieldError):
    kind = "TooShort"


class IncompatibleFormat(PlaneFieldError):
    kind = "IncompatibleFormat"
    exit_code = 2
