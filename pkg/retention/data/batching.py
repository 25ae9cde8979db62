"""
Padded mini-batches.

Performance sequences and note sequences are left-aligned and padded at
the end; masks mark valid positions. Labels carry 0 for undefined
entries, with the loss mask saying which ones count.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from retention.core.errors import DimensionError, EmptyBatchError
from retention.data.schema import PERFORMANCE_WIDTH, Dataset
from retention.model.heads import derive_mask, label_vector
from retention.text.embedding import NoteEmbedder

logger = logging.getLogger(__name__)

NoteVectors = Dict[str, np.ndarray]


@dataclass
class Batch:
    ids: list
    static: np.ndarray        # [B, 120]
    performance: np.ndarray   # [B, T, 20]
    performance_mask: np.ndarray  # [B, T]
    notes: np.ndarray         # [B, N, dim], N >= 1
    note_mask: np.ndarray     # [B, N]
    labels: np.ndarray        # [B, 5]
    mask: np.ndarray          # [B, 5]
    weights: np.ndarray       # [B]
    groups: np.ndarray        # [B] protected attribute values
    note_counts: np.ndarray   # [B]

    def __len__(self) -> int:
        return len(self.ids)


def embed_notes(dataset: Dataset, embedder: NoteEmbedder) -> NoteVectors:
    """One vector per distinct note id in the dataset."""
    vectors: NoteVectors = {}
    for record in dataset:
        for note in record.notes:
            if note.note_id not in vectors:
                vectors[note.note_id] = embedder.embed(note)
    return vectors


def collate(
    records: Dataset,
    vectors: NoteVectors,
    note_dim: int,
    mask_rule_3: bool = False,
    weights: Optional[Sequence[float]] = None,
) -> Batch:
    if not records:
        raise EmptyBatchError("cannot collate an empty list of records")
    size = len(records)
    steps = max(len(r.performance) for r in records)
    note_steps = max(1, max(r.note_count for r in records))

    performance = np.zeros((size, steps, PERFORMANCE_WIDTH))
    performance_mask = np.zeros((size, steps))
    notes = np.zeros((size, note_steps, note_dim))
    note_mask = np.zeros((size, note_steps))
    for i, record in enumerate(records):
        t = len(record.performance)
        performance[i, :t] = record.performance
        performance_mask[i, :t] = 1.0
        for j, note in enumerate(record.notes):
            vector = vectors[note.note_id]
            if len(vector) != note_dim:
                raise DimensionError(f"embedding of note {note.note_id}", [note_dim], [len(vector)])
            notes[i, j] = vector
            note_mask[i, j] = 1.0

    return Batch(
        ids=[r.id for r in records],
        static=np.array([r.static for r in records], dtype=np.float64),
        performance=performance,
        performance_mask=performance_mask,
        notes=notes,
        note_mask=note_mask,
        labels=np.stack([label_vector(r.labels) for r in records]),
        mask=np.stack([derive_mask(r.labels, mask_rule_3) for r in records]),
        weights=np.ones(size) if weights is None else np.asarray(weights, dtype=np.float64),
        groups=np.array([r.gender for r in records]),
        note_counts=np.array([r.note_count for r in records]),
    )
