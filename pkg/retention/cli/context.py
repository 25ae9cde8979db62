"""
Run configuration for the current CLI invocation.

The group callback only records `--config`, `--set` and `--seed`; each
command loads and validates the config inside its own error handling.
"""
import json
import logging
from pathlib import Path
from typing import Dict, Tuple

import click

from retention.core.config import RunConfig, load_run_config
from retention.core.errors import ConfigError
from retention.data.batching import NoteVectors, embed_notes
from retention.data.schema import Dataset
from retention.text.embedding import PrecomputedEmbedder, build_embedder

logger = logging.getLogger(__name__)


def parse_overrides(pairs: Tuple[str, ...]) -> Dict[str, str]:
    overrides: Dict[str, str] = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects KEY=VALUE, got {pair!r}")
        overrides[key.strip()] = value
    return overrides


def run_config(ctx: click.Context) -> RunConfig:
    obj = ctx.find_root().obj or {}
    overrides = parse_overrides(obj.get("overrides", ()))
    seed = obj.get("seed")
    if seed is not None:
        overrides["seed"] = str(seed)
        overrides["cohort.seed"] = str(seed)
    return load_run_config(obj.get("config_path"), overrides)


def note_vectors(dataset: Dataset, config: RunConfig) -> Tuple[NoteVectors, int]:
    embedder = build_embedder(config.embedder)
    if isinstance(embedder, PrecomputedEmbedder):
        embedder.require(n.note_id for r in dataset for n in r.notes)
    return embed_notes(dataset, embedder), embedder.dim


def write_json(document: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
