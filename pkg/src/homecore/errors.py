"""Exception hierarchy shared by all homecore modules.

Every error carries an ``exit_code`` so the CLI can map it to a stable
process status without a lookup table.
"""

from __future__ import annotations


class HomecoreError(Exception):
    """Base class for domain errors (CLI exit status 1)."""

    exit_code = 1
    code = "HomecoreError"

    def __init__(self, message: str = "", **context):
        super().__init__(message)
        self.context = context

    def to_dict(self) -> dict:
        out = {"error": self.code, "message": str(self)}
        if self.context:
            out["context"] = {k: _jsonable(v) for k, v in self.context.items()}
        return out


def _jsonable(value):
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return str(value)


class IoError(HomecoreError):
    exit_code = 3
    code = "IoError"


class ConfigError(HomecoreError):
    code = "ConfigError"


# semantic map
class InvalidPolygon(HomecoreError):
    code = "InvalidPolygon"


class ParseError(HomecoreError):
    code = "ParseError"


class ValidationError(HomecoreError):
    code = "ValidationError"


class UnknownTarget(HomecoreError):
    code = "UnknownTarget"


class NoFeasibleEdge(HomecoreError):
    code = "NoFeasibleEdge"


# grasp
class DimensionMismatch(HomecoreError):
    code = "DimensionMismatch"


class EmptyCloud(HomecoreError):
    code = "EmptyCloud"


class EmptyInput(HomecoreError):
    code = "EmptyInput"


class DegenerateCloud(HomecoreError):
    code = "DegenerateCloud"


# reservoir
class MissingJoint(HomecoreError):
    code = "MissingJoint"


class DegenerateScale(HomecoreError):
    code = "DegenerateScale"


class EmptyPatch(HomecoreError):
    code = "EmptyPatch"


class ZeroSpectralRadius(HomecoreError):
    code = "ZeroSpectralRadius"


class SingularSystem(HomecoreError):
    code = "SingularSystem"


class MissingClass(HomecoreError):
    code = "MissingClass"


class UntrainedModel(HomecoreError):
    code = "UntrainedModel"


# scene generation
class InfeasibleConfig(HomecoreError):
    code = "InfeasibleConfig"


# planner
class CommandError(HomecoreError):
    code = "CommandError"


class PreconditionFailed(HomecoreError):
    code = "PreconditionFailed"


class StepLimitExceeded(HomecoreError):
    code = "StepLimitExceeded"


class BackendError(HomecoreError):
    code = "BackendError"


class UnparsableCommand(BackendError):
    code = "UnparsableCommand"


class Timeout(BackendError):
    code = "Timeout"


class HttpError(BackendError):
    code = "HttpError"


class SchemaViolation(BackendError):
    code = "SchemaViolation"
