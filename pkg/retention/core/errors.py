"""
Exception hierarchy shared by every module.

Each error carries a stable process exit code and a structured `detail`
dict. The CLI wrapper turns them into exit codes; library callers can
catch `RetentionError` or any subclass.

Exit codes:
    2  configuration / parameter / data contract problems
    3  training diverged (NaN or Inf loss)
    4  dimension mismatch (layer shapes, checkpoint vs dataset)
    5  empty evaluation split
    6  protected attribute has a single group
"""
from typing import Any, Optional, Sequence


class RetentionError(Exception):
    exit_code: int = 2

    def __init__(self, message: str, detail: Optional[dict] = None):
        super().__init__(message)
        self.message = message
        self.detail: dict[str, Any] = detail or {}

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": self.message, **self.detail}


# ── Configuration ────────────────────────────────────────────
class ConfigError(RetentionError):
    exit_code = 2


class ParameterError(RetentionError):
    exit_code = 2


# ── Engine contracts ─────────────────────────────────────────
class DimensionError(RetentionError):
    exit_code = 4

    def __init__(
        self,
        what: str,
        expected: Sequence | int,
        actual: Sequence | int,
        message: Optional[str] = None,
    ):
        super().__init__(
            message or f"{what}: expected shape {_fmt(expected)}, got {_fmt(actual)}",
            detail={"what": what, "expected": _plain(expected), "actual": _plain(actual)},
        )


class SequenceLengthError(RetentionError):
    exit_code = 2


class EmptyBatchError(RetentionError):
    exit_code = 2


class ContractError(RetentionError):
    exit_code = 2


# ── Training / evaluation ────────────────────────────────────
class TrainingDivergedError(RetentionError):
    exit_code = 3


class EmptyDatasetError(RetentionError):
    exit_code = 5


class SingleGroupError(RetentionError):
    exit_code = 6


# ── Data ─────────────────────────────────────────────────────
class FormatError(RetentionError):
    exit_code = 2


class SchemaError(RetentionError):
    exit_code = 2


class EmbeddingLookupError(RetentionError):
    exit_code = 2


def _plain(value):
    if isinstance(value, int):
        return value
    return [int(v) for v in value]


def _fmt(value) -> str:
    if isinstance(value, int):
        return str(value)
    return "[" + "×".join(str(int(v)) for v in value) + "]"
