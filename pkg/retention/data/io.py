"""
Dataset files: one JSON student record per line, plus CSV table export.
"""
import json
import logging
from pathlib import Path

import pandas as pd
from pydantic import ValidationError

from retention.core.errors import FormatError, SchemaError
from retention.data.schema import (
    PERFORMANCE_FEATURES,
    STATIC_FIELDS,
    Dataset,
    StudentRecord,
)

logger = logging.getLogger(__name__)


def write_dataset(dataset: Dataset, path: str | Path) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        raise FormatError(f"output directory does not exist: {path.parent}", detail={"path": str(path)})
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for record in dataset:
            fh.write(record.model_dump_json())
            fh.write("\n")
    logger.info(f"write_dataset: {len(dataset)} records → {path}")
    return path


def read_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"dataset file not found: {path}", detail={"path": str(path)})
    records: Dataset = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}:{lineno}: malformed record ({e.msg})", detail={"line": lineno})
            try:
                records.append(StudentRecord.model_validate(raw))
            except ValidationError as e:
                problems = [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()]
                message = f"{path}:{lineno}: invalid record: " + "; ".join(problems)
                raise SchemaError(message, detail={"line": lineno, "errors": problems})
    logger.info(f"read_dataset: {len(records)} records from {path}")
    return records


def export_tables_csv(dataset: Dataset, directory: str | Path) -> tuple[Path, Path]:
    """
    Write `static.csv` (one one-hot row per student, column per
    field=category) and `performance.csv` (long format, one row per
    student-semester).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    static_columns = [f"{name}={value}" for name, values in STATIC_FIELDS.items() for value in values]
    static = pd.DataFrame([r.static for r in dataset], columns=static_columns)
    static.insert(0, "student_id", [r.id for r in dataset])

    rows = [
        [r.id, semester, *values]
        for r in dataset
        for semester, values in enumerate(r.performance, start=1)
    ]
    performance = pd.DataFrame(rows, columns=["student_id", "semester", *PERFORMANCE_FEATURES])

    static_path = directory / "static.csv"
    performance_path = directory / "performance.csv"
    static.to_csv(static_path, index=False)
    performance.to_csv(performance_path, index=False)
    return static_path, performance_path
