"""
Parameter checkpoints.

A checkpoint is a numpy `.npz` archive: one float64 array per dotted
parameter name (shape stored with the array) plus a `__meta__` entry
holding a JSON document. No pickling, so loading is safe and the
round-trip is bit-exact.
"""
import json
import logging
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from retention.core.errors import FormatError

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
_META_KEY = "__meta__"


def save_checkpoint(path: str | Path, arrays: Dict[str, np.ndarray], meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {"checkpoint_version": CHECKPOINT_VERSION, **(meta or {})}
    payload = {name: np.asarray(value, dtype=np.float64) for name, value in arrays.items()}
    payload[_META_KEY] = np.array(json.dumps(document, sort_keys=True))
    # np.savez appends .npz to bare names; write through a handle to keep the given path
    with path.open("wb") as fh:
        np.savez(fh, **payload)
    logger.info(f"checkpoint: wrote {len(arrays)} arrays to {path}")
    return path


def load_checkpoint(path: str | Path) -> Tuple[Dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"checkpoint not found: {path}", detail={"path": str(path)})
    try:
        with np.load(path, allow_pickle=False) as archive:
            arrays = {name: archive[name] for name in archive.files if name != _META_KEY}
            meta = json.loads(str(archive[_META_KEY])) if _META_KEY in archive.files else {}
    except (ValueError, OSError) as e:
        raise FormatError(f"unreadable checkpoint {path}: {e}", detail={"path": str(path)})
    if meta.get("checkpoint_version") != CHECKPOINT_VERSION:
        raise FormatError(
            f"unsupported checkpoint version {meta.get('checkpoint_version')!r}",
            detail={"path": str(path), "expected": CHECKPOINT_VERSION},
        )
    return arrays, meta
