"""
Advising-note embeddings.

Each note becomes one fixed-dimension vector. Two embedders share the
`NoteEmbedder` protocol:

- `HashingEmbedder`: signed feature hashing of the note tokens (plus a
  `reason_<name>` token for the visit reason), L2-normalised
- `PrecomputedEmbedder`: vectors computed elsewhere and imported from a
  text file, keyed by note id

Precomputed file format (UTF-8):
    dim=<n>
    <note_id>\t<v1> <v2> ... <vn>
"""
import hashlib
import logging
import re
import unicodedata
from pathlib import Path
from typing import Dict, Iterable, List, Protocol, Sequence

import numpy as np

from retention.core.errors import EmbeddingLookupError, FormatError, ParameterError
from retention.data.schema import NoteDocument

logger = logging.getLogger(__name__)

_TOKEN = re.compile(r"\d+(?:\.\d+)?|[^\W\d_]+(?:'[^\W\d_]+)?")
_HEADER = re.compile(r"^dim=(\d+)$")


def tokenize(text: str) -> List[str]:
    """NFC-normalise and lowercase, then keep runs of letters (any script) and numbers."""
    return _TOKEN.findall(unicodedata.normalize("NFC", text).lower())


def _hash64(token: str, seed: int, salt: bytes) -> int:
    digest = hashlib.blake2b(
        token.encode("utf-8"),
        digest_size=8,
        key=seed.to_bytes(8, "little", signed=True),
        salt=salt,
    ).digest()
    return int.from_bytes(digest, "little")


def embed_hashing(tokens: Sequence[str], dim: int, seed: int = 0) -> np.ndarray:
    """
    Hash every token to an index and an independent sign, accumulate the
    signed counts, and L2-normalise the result when it is nonzero.
    Token order does not matter.
    """
    if dim < 1:
        raise ParameterError(f"embedding dim must be >= 1, got {dim}")
    vector = np.zeros(dim)
    for token in tokens:
        index = _hash64(token, seed, b"index") % dim
        sign = 1.0 if _hash64(token, seed, b"sign") & 1 else -1.0
        vector[index] += sign
    norm = np.linalg.norm(vector)
    return vector / norm if norm > 0 else vector


def note_tokens(note: NoteDocument) -> List[str]:
    """Tokens a note contributes: its text plus the visit reason."""
    return tokenize(note.text) + [f"reason_{note.reason}"]


class NoteEmbedder(Protocol):
    dim: int

    def embed(self, note: NoteDocument) -> np.ndarray:
        ...


class HashingEmbedder:
    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 1:
            raise ParameterError(f"embedding dim must be >= 1, got {dim}")
        self.dim = dim
        self.seed = seed

    def embed(self, note: NoteDocument) -> np.ndarray:
        return embed_hashing(note_tokens(note), self.dim, self.seed)


class PrecomputedEmbedder:
    def __init__(self, vectors: Dict[str, np.ndarray], dim: int):
        self.vectors = vectors
        self.dim = dim

    @classmethod
    def from_file(cls, path: str | Path) -> "PrecomputedEmbedder":
        vectors = load_precomputed(path)
        dim = len(next(iter(vectors.values()))) if vectors else _read_dim(Path(path))
        return cls(vectors, dim)

    def embed(self, note: NoteDocument) -> np.ndarray:
        try:
            return self.vectors[note.note_id]
        except KeyError:
            raise EmbeddingLookupError(
                f"no precomputed embedding for note {note.note_id!r}",
                detail={"missing": [note.note_id]},
            )

    def require(self, note_ids: Iterable[str]) -> None:
        """Fail once, listing every note id the file does not cover."""
        missing = sorted(set(note_ids) - self.vectors.keys())
        if missing:
            preview = ", ".join(missing[:10]) + (" ..." if len(missing) > 10 else "")
            raise EmbeddingLookupError(
                f"{len(missing)} note ids have no precomputed embedding: {preview}",
                detail={"missing": missing},
            )


def _read_dim(path: Path) -> int:
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().strip()
    match = _HEADER.match(header)
    if not match:
        raise FormatError(f"{path}: first line must be 'dim=<n>', got {header!r}", detail={"line": 1})
    return int(match.group(1))


def load_precomputed(path: str | Path) -> Dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"precomputed embedding file not found: {path}", detail={"path": str(path)})
    dim = _read_dim(path)
    vectors: Dict[str, np.ndarray] = {}
    with path.open(encoding="utf-8") as fh:
        next(fh)
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            note_id, sep, body = line.partition("\t")
            if not sep:
                raise FormatError(f"{path}:{lineno}: expected '<note_id>\\t<values>'", detail={"line": lineno})
            try:
                values = np.array([float(v) for v in body.split()])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric embedding value", detail={"line": lineno})
            if values.size != dim:
                raise FormatError(
                    f"{path}:{lineno}: row has {values.size} values, header declares dim={dim}",
                    detail={"line": lineno, "expected": dim, "actual": int(values.size)},
                )
            if not np.all(np.isfinite(values)):
                raise FormatError(f"{path}:{lineno}: non-finite embedding value", detail={"line": lineno})
            vectors[note_id] = values
    logger.info(f"load_precomputed: {len(vectors)} vectors of dim {dim} from {path}")
    return vectors


def export_precomputed(vectors: Dict[str, np.ndarray], path: str | Path) -> Path:
    path = Path(path)
    dims = {len(v) for v in vectors.values()}
    if len(dims) > 1:
        raise FormatError(f"cannot export vectors of mixed dims {sorted(dims)}")
    dim = dims.pop() if dims else 0
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"dim={dim}\n")
        for note_id, vector in vectors.items():
            # repr round-trips float64 exactly
            fh.write(note_id + "\t" + " ".join(repr(float(v)) for v in vector) + "\n")
    return path


def build_embedder(config) -> NoteEmbedder:
    """Embedder for an `EmbedderConfig`."""
    path = config.precomputed_path
    if path is not None:
        return PrecomputedEmbedder.from_file(path)
    return HashingEmbedder(config.dim, config.seed)
