"""Knowledge-base chunking, an exact cosine vector store, and its file format.

Token counts use a whitespace-word approximation: one word ~ 4/3 tokens,
``approx_tokens = ceil(words * 4 / 3)``.

Store file layout (UTF-8 lines, ``\\n`` terminated)::

    {"format_version": 1, "dimension": D, "embedding_model_id": ..., "created_at": ...,
     "entry_count": N, "byte_order": "little"}
    {"chunk_id": ..., "source_id": ..., "text": ..., "approx_tokens": ..., "vector": "<hex>"}
    ...  (N entry lines)
    {"sha256": "<hex digest of every preceding byte>"}

``vector`` is the hex encoding of D IEEE-754 binary64 values, little-endian,
so vectors survive a round trip bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DimensionError, IntegrityError
from .records import ZERO_TIMESTAMP

FORMAT_VERSION = 1
NORM_TOLERANCE = 1e-6
DEFAULT_TARGET_TOKENS = 512
DEFAULT_OVERLAP_TOKENS = 64
DEFAULT_TOP_K = 8


def approx_tokens(n_words: int) -> int:
    return -(-n_words * 4 // 3)


def _words_for_tokens(tokens: int) -> int:
    return tokens * 3 // 4


@dataclass(frozen=True)
class DocumentChunk:
    chunk_id: str
    source_id: str
    text: str
    approx_tokens: int

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"chunk {self.chunk_id} is empty")
        if self.approx_tokens <= 0:
            raise ValueError(f"chunk {self.chunk_id} has no tokens")


def chunk_document(source_id: str, text: str, target_tokens: int = DEFAULT_TARGET_TOKENS,
                   overlap_tokens: int = DEFAULT_OVERLAP_TOKENS) -> list[DocumentChunk]:
    """Split ``text`` into word-aligned windows of at most ``target_tokens``.

    Consecutive chunks share exactly ``floor(overlap_tokens * 3/4)`` words.
    Chunk text is the window's words joined by single spaces.
    """
    if not 0 <= overlap_tokens < target_tokens:
        raise ValueError("need target_tokens > overlap_tokens >= 0")
    window = _words_for_tokens(target_tokens)
    overlap = _words_for_tokens(overlap_tokens)
    if window < 1 or window <= overlap:
        raise ValueError(f"target_tokens={target_tokens} leaves no room past the overlap")
    words = text.split()
    chunks: list[DocumentChunk] = []
    start = 0
    while start < len(words):
        piece = words[start : start + window]
        chunks.append(
            DocumentChunk(f"{source_id}#{len(chunks):04d}", source_id, " ".join(piece), approx_tokens(len(piece)))
        )
        if start + window >= len(words):
            break
        start += window - overlap
    return chunks


class EmbeddedChunk:
    __slots__ = ("chunk", "vector")

    def __init__(self, chunk: DocumentChunk, vector):
        vec = np.array(vector, dtype="<f8")
        if vec.ndim != 1 or vec.size == 0:
            raise DimensionError("embedding must be a non-empty 1-d vector")
        norm = math.sqrt(math.fsum(float(x) * float(x) for x in vec))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"embedding for {chunk.chunk_id} is not unit norm (|v| = {norm})")
        vec.setflags(write=False)
        self.chunk = chunk
        self.vector = vec

    @property
    def chunk_id(self) -> str:
        return self.chunk.chunk_id

    def __eq__(self, other):
        if not isinstance(other, EmbeddedChunk):
            return NotImplemented
        return self.chunk == other.chunk and self.vector.tobytes() == other.vector.tobytes()

    def __repr__(self):
        return f"EmbeddedChunk({self.chunk.chunk_id!r}, dim={self.vector.size})"


class VectorStore:
    """Ordered set of unit vectors with exact full-scan top-k retrieval.

    Mutated only by :meth:`upsert`; queries are read-only and thread safe
    while no ingestion is running.
    """

    def __init__(self, dimension: int, embedding_model_id: str, created_at: str = ZERO_TIMESTAMP,
                 entries: Iterable[EmbeddedChunk] = ()):
        if dimension < 1:
            raise DimensionError("dimension must be positive")
        self.dimension = dimension
        self.embedding_model_id = embedding_model_id
        self.created_at = created_at
        self._entries: list[EmbeddedChunk] = []
        self._positions: dict[str, int] = {}
        self._matrix = None
        for entry in entries:
            self.upsert(entry)

    @property
    def entries(self) -> tuple[EmbeddedChunk, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, chunk_id: object) -> bool:
        return chunk_id in self._positions

    def __getitem__(self, chunk_id: str) -> EmbeddedChunk:
        return self._entries[self._positions[chunk_id]]

    def __eq__(self, other):
        if not isinstance(other, VectorStore):
            return NotImplemented
        return (
            self.dimension == other.dimension
            and self.embedding_model_id == other.embedding_model_id
            and self.created_at == other.created_at
            and self._entries == other._entries
        )

    def upsert(self, embedded: EmbeddedChunk) -> "VectorStore":
        """Replace the entry with the same chunk_id, or append a new one."""
        if embedded.vector.size != self.dimension:
            raise DimensionError(f"vector has dimension {embedded.vector.size}, store expects {self.dimension}")
        pos = self._positions.get(embedded.chunk_id)
        if pos is None:
            self._positions[embedded.chunk_id] = len(self._entries)
            self._entries.append(embedded)
        else:
            self._entries[pos] = embedded
        self._matrix = None
        return self

    def _index(self):
        if self._matrix is None:
            matrix = np.vstack([e.vector for e in self._entries]) if self._entries else np.empty((0, self.dimension))
            ids = [e.chunk_id for e in self._entries]
            rank = np.empty(len(ids), dtype=np.int64)
            rank[sorted(range(len(ids)), key=ids.__getitem__)] = np.arange(len(ids))
            self._matrix = (matrix, rank)
        return self._matrix

    def query(self, query_vector, k: int = DEFAULT_TOP_K) -> list[tuple[EmbeddedChunk, float]]:
        """Top-k entries by cosine similarity, ties broken by ascending chunk_id.

        Scores are dot products accumulated with ``math.fsum`` so they do not
        depend on BLAS summation order.
        """
        if k < 1:
            raise ValueError("k must be at least 1")
        q = np.asarray(query_vector, dtype=np.float64)
        if q.shape != (self.dimension,):
            raise DimensionError(f"query has shape {q.shape}, store dimension is {self.dimension}")
        norm = math.sqrt(math.fsum(q * q))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"query vector is not unit norm (|q| = {norm})")
        if not self._entries:
            return []
        matrix, rank = self._index()
        products = matrix * q
        scores = np.fromiter((math.fsum(row) for row in products), dtype=np.float64, count=len(products))
        order = np.lexsort((rank, -scores))[:k]
        return [(self._entries[i], float(scores[i])) for i in order]


def build_query_text(identity, case_prompt: str) -> str:
    """Retrieval query for one agent: role, competences, then the case prompt."""
    competences = "; ".join(identity.competence_areas)
    return f"{identity.role_name}. Competences: {competences}.\n{case_prompt}"


# -- persistence -----------------------------------------------------------


def _line(obj: dict) -> bytes:
    return (json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n").encode("utf-8")


def dump_store(store: VectorStore) -> bytes:
    body = bytearray(
        _line(
            {
                "format_version": FORMAT_VERSION,
                "dimension": store.dimension,
                "embedding_model_id": store.embedding_model_id,
                "created_at": store.created_at,
                "entry_count": len(store),
                "byte_order": "little",
            }
        )
    )
    for e in store.entries:
        body += _line(
            {
                "chunk_id": e.chunk.chunk_id,
                "source_id": e.chunk.source_id,
                "text": e.chunk.text,
                "approx_tokens": e.chunk.approx_tokens,
                "vector": e.vector.astype("<f8").tobytes().hex(),
            }
        )
    body += _line({"sha256": hashlib.sha256(body).hexdigest()})
    return bytes(body)


def save_store(store: VectorStore, destination: str | Path) -> None:
    Path(destination).write_bytes(dump_store(store))


def parse_store(data: bytes) -> VectorStore:
    if not data.endswith(b"\n"):
        raise IntegrityError("file is truncated (no trailing newline)", len(data))
    trailer_start = data.rfind(b"\n", 0, len(data) - 1) + 1
    try:
        trailer = json.loads(data[trailer_start:])
        digest = trailer["sha256"]
    except (ValueError, KeyError, TypeError):
        raise IntegrityError("missing checksum trailer", trailer_start) from None
    if hashlib.sha256(data[:trailer_start]).hexdigest() != digest:
        raise IntegrityError("checksum mismatch", trailer_start)

    offsets, lines, pos = [], [], 0
    while pos < trailer_start:
        end = data.index(b"\n", pos)
        offsets.append(pos)
        lines.append(data[pos:end])
        pos = end + 1
    if not lines:
        raise IntegrityError("missing header record", 0)

    def record(i: int) -> dict:
        try:
            obj = json.loads(lines[i])
        except ValueError:
            raise IntegrityError("record is not valid JSON", offsets[i]) from None
        if not isinstance(obj, dict):
            raise IntegrityError("record is not an object", offsets[i])
        return obj

    header = record(0)
    try:
        if header["format_version"] != FORMAT_VERSION:
            raise IntegrityError(f"unsupported format_version {header['format_version']}", 0)
        dimension = int(header["dimension"])
        count = int(header["entry_count"])
        store = VectorStore(dimension, header["embedding_model_id"], header.get("created_at", ZERO_TIMESTAMP))
    except (KeyError, TypeError, ValueError) as exc:
        raise IntegrityError(f"bad header ({exc})", 0) from None
    if count != len(lines) - 1:
        raise IntegrityError(f"header declares {count} entries, file holds {len(lines) - 1}", offsets[0])

    for i in range(1, len(lines)):
        rec = record(i)
        try:
            raw = bytes.fromhex(rec["vector"])
            chunk = DocumentChunk(rec["chunk_id"], rec["source_id"], rec["text"], int(rec["approx_tokens"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise IntegrityError(f"bad entry ({exc})", offsets[i]) from None
        if len(raw) != 8 * dimension:
            raise DimensionError(
                f"entry at byte offset {offsets[i]} has {len(raw) // 8} components, header says {dimension}"
            )
        try:
            embedded = EmbeddedChunk(chunk, np.frombuffer(raw, dtype="<f8"))
        except ValueError as exc:
            raise IntegrityError(str(exc), offsets[i]) from None
        if embedded.chunk_id in store:
            raise IntegrityError(f"duplicate chunk_id {embedded.chunk_id}", offsets[i])
        store.upsert(embedded)
    return store


def load_store(source: str | Path) -> VectorStore:
    return parse_store(Path(source).read_bytes())

