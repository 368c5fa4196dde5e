"""Embeddings and an exact cosine top-k vector index with file persistence.

Two embedders are provided: a deterministic offline embedder (signed
feature hashing of character trigrams) used throughout the test fixtures,
and a remote embedder that calls an HTTP embeddings endpoint. Retrieval is
an exact full scan; no approximate structures.
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np

DETERMINISTIC_DIM = 256
DETERMINISTIC_MODEL_ID = "trigram-hash-256"

_MAGIC = b"vecidx v1\n"


class VecIndexError(Exception):
    pass


class DimensionMismatchError(VecIndexError):
    pass


class DegenerateVectorError(VecIndexError):
    pass


class IndexFileError(VecIndexError):
    """Version mismatch, checksum failure, or truncation."""


@dataclass
class EmbeddingVector:
    values: np.ndarray  # float32, unit L2 norm
    dim: int
    model_id: str


@dataclass
class VectorRecord:
    record_id: str
    vector: EmbeddingVector
    payload: dict[str, str] = field(default_factory=dict)


@dataclass
class Hit:
    record_id: str
    score: float
    payload: dict[str, str]


@lru_cache(maxsize=131072)
def _gram_slot(gram: str) -> tuple[int, int]:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
    bucket = int.from_bytes(digest[:4], "little") % DETERMINISTIC_DIM
    sign = 1 if digest[4] & 1 else -1
    return bucket, sign


class DeterministicEmbedder:
    """Signed feature hashing of lowercased character trigrams."""

    dim = DETERMINISTIC_DIM
    model_id = DETERMINISTIC_MODEL_ID

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        low = text.lower()
        grams: Iterable[str]
        if len(low) >= 3:
            grams = (low[i : i + 3] for i in range(len(low) - 2))
        else:
            grams = (low,)  # too short for trigrams: whole text as one feature
        acc = np.zeros(self.dim, dtype=np.float64)
        for gram in grams:
            bucket, sign = _gram_slot(gram)
            acc[bucket] += sign
        norm = float(np.linalg.norm(acc))
        if norm == 0.0:
            raise DegenerateVectorError(f"text hashed to the zero vector: {text[:40]!r}")
        return EmbeddingVector(
            values=(acc / norm).astype(np.float32), dim=self.dim, model_id=self.model_id
        )


class RemoteEmbedder:
    """Calls an embeddings endpoint with the common {model, input} shape."""

    def __init__(self, endpoint: str, model: str, credentials_env: str | None = None,
                 timeout: float = 60.0, max_retries: int = 3):
        self.endpoint = endpoint
        self.model = model
        self.model_id = model
        self.credentials_env = credentials_env
        self.timeout = timeout
        self.max_retries = max_retries
        self.dim: int | None = None

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        from .llm import _http_post_with_retries  # shared transport policy

        body = _http_post_with_retries(
            self.endpoint,
            {"model": self.model, "input": text},
            credentials_env=self.credentials_env,
            timeout=self.timeout,
            max_retries=self.max_retries,
        )
        values = np.asarray(body["data"][0]["embedding"], dtype=np.float64)
        norm = float(np.linalg.norm(values))
        if norm == 0.0:
            raise DegenerateVectorError("remote embedder returned a zero vector")
        if self.dim is None:
            self.dim = values.shape[0]
        return EmbeddingVector(
            values=(values / norm).astype(np.float32), dim=values.shape[0], model_id=self.model
        )


def make_embedder(spec: str, **kwargs):
    if spec == "deterministic":
        return DeterministicEmbedder()
    if spec == "remote":
        return RemoteEmbedder(**kwargs)
    raise ValueError(f"unknown embedder spec {spec!r}")


def embed_text(text: str, embedder) -> EmbeddingVector:
    return embedder.embed(text)


class VectorIndex:
    """Exact cosine-similarity index over unit-norm float32 vectors."""

    def __init__(self, name: str, dim: int, model_id: str):
        self.name = name
        self.dim = dim
        self.model_id = model_id
        self._records: dict[str, VectorRecord] = {}
        self._matrix: np.ndarray | None = None
        self._matrix_ids: list[str] = []

    def __len__(self) -> int:
        return len(self._records)

    @property
    def meta(self) -> dict:
        return {
            "name": self.name,
            "dim": self.dim,
            "model_id": self.model_id,
            "record_count": len(self._records),
        }

    def get(self, record_id: str) -> VectorRecord | None:
        return self._records.get(record_id)

    def records(self) -> list[VectorRecord]:
        return list(self._records.values())

    def upsert(self, records: Iterable[VectorRecord]) -> int:
        count = 0
        for rec in records:
            if rec.vector.dim != self.dim or rec.vector.values.shape[0] != self.dim:
                raise DimensionMismatchError(
                    f"record {rec.record_id}: dim {rec.vector.dim} != index dim {self.dim}"
                )
            if rec.vector.model_id != self.model_id:
                raise VecIndexError(
                    f"record {rec.record_id}: model {rec.vector.model_id!r} != {self.model_id!r}"
                )
            self._records[rec.record_id] = rec
            count += 1
        self._matrix = None
        return count

    def _ensure_matrix(self):
        if self._matrix is None:
            self._matrix_ids = sorted(self._records)
            if self._matrix_ids:
                self._matrix = np.stack(
                    [self._records[i].vector.values for i in self._matrix_ids]
                ).astype(np.float64)
            else:
                self._matrix = np.zeros((0, self.dim), dtype=np.float64)

    def top_k(self, query: EmbeddingVector, k: int,
              payload_filter: Callable[[dict[str, str]], bool] | None = None) -> list[Hit]:
        if k < 1:
            raise ValueError("k must be >= 1")
        if query.values.shape[0] != self.dim:
            raise DimensionMismatchError(f"query dim {query.values.shape[0]} != {self.dim}")
        if not self._records:
            return []
        self._ensure_matrix()
        scores = self._matrix @ query.values.astype(np.float64)
        order = sorted(range(len(self._matrix_ids)), key=lambda i: (-scores[i], self._matrix_ids[i]))
        hits: list[Hit] = []
        for i in order:
            rec = self._records[self._matrix_ids[i]]
            if payload_filter is not None and not payload_filter(rec.payload):
                continue
            hits.append(Hit(record_id=rec.record_id, score=float(scores[i]), payload=dict(rec.payload)))
            if len(hits) == k:
                break
        return hits

    # -- persistence ------------------------------------------------------

    def persist(self, path) -> None:
        out = bytearray()
        out += _MAGIC
        out += _pack_str(self.name)
        out += _pack_str(self.model_id)
        out += struct.pack("<II", self.dim, len(self._records))
        for record_id in sorted(self._records):
            rec = self._records[record_id]
            out += _pack_str(record_id)
            out += struct.pack("<I", len(rec.payload))
            for key in sorted(rec.payload):
                out += _pack_str(key)
                out += _pack_str(rec.payload[key])
            out += rec.vector.values.astype("<f4").tobytes()
        out += struct.pack("<I", zlib.crc32(bytes(out)))
        with open(path, "wb") as fh:
            fh.write(bytes(out))

    @classmethod
    def load(cls, path) -> "VectorIndex":
        with open(path, "rb") as fh:
            blob = fh.read()
        if not blob.startswith(_MAGIC):
            raise IndexFileError(f"{path}: not a vecidx v1 file")
        if len(blob) < len(_MAGIC) + 4:
            raise IndexFileError(f"{path}: truncated")
        body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
        if zlib.crc32(body) != crc:
            raise IndexFileError(f"{path}: checksum mismatch")
        try:
            reader = _Reader(body, len(_MAGIC))
            name = reader.str_()
            model_id = reader.str_()
            dim, count = reader.unpack("<II")
            index = cls(name=name, dim=dim, model_id=model_id)
            for _ in range(count):
                record_id = reader.str_()
                (n_payload,) = reader.unpack("<I")
                payload = {}
                for _ in range(n_payload):
                    key = reader.str_()
                    payload[key] = reader.str_()
                values = np.frombuffer(reader.take(4 * dim), dtype="<f4").copy()
                index._records[record_id] = VectorRecord(
                    record_id=record_id,
                    vector=EmbeddingVector(values=values, dim=dim, model_id=model_id),
                    payload=payload,
                )
        except struct.error:
            raise IndexFileError(f"{path}: truncated record data") from None
        return index

    # -- analytics --------------------------------------------------------

    def project_2d(self) -> list[tuple[str, float, float]]:
        """PCA onto the first two principal components, with a fixed sign
        convention so repeated runs agree."""
        if len(self._records) < 3:
            raise VecIndexError("projection requires at least 3 records")
        ids = sorted(self._records)
        matrix = np.stack([self._records[i].vector.values for i in ids]).astype(np.float64)
        centered = matrix - matrix.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        axes = vt[:2].copy()
        if axes.shape[0] < 2:
            axes = np.vstack([axes, np.zeros((2 - axes.shape[0], matrix.shape[1]))])
        for row in axes:
            pivot = int(np.argmax(np.abs(row)))
            if row[pivot] < 0:
                row *= -1
        coords = centered @ axes.T
        return [(rid, float(coords[i, 0]), float(coords[i, 1])) for i, rid in enumerate(ids)]


class _Reader:
    def __init__(self, blob: bytes, pos: int):
        self.blob = blob
        self.pos = pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise struct.error("short read")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def str_(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw
