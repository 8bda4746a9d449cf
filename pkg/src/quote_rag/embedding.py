"""Text-to-vector embedding with batching, plus cosine similarity.

Backends are pluggable: a deterministic offline mock for tests, and an
HTTP embeddings endpoint for real models.  Vectors are float32; similarity
is accumulated in float64 for rank stability.
"""

from __future__ import annotations

import hashlib
import logging
import os
import time
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
import requests

from .errors import EmbeddingError, InvalidInput, ProtocolError

logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 64


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """A fixed-dimension float vector tagged with the embedder that made it."""

    values: np.ndarray
    dim: int
    embedder_id: str

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidInput("vector dim must be >= 1")
        if self.values.shape != (self.dim,):
            raise ProtocolError(
                f"vector length {self.values.shape} does not match dim {self.dim}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ProtocolError("vector contains non-finite entries")


class EmbedderBackend(Protocol):
    """Embedding interface: an ordered batch of texts in, one vector per text out."""

    identity: str
    dimension: int

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


def embed_batch(
    backend: EmbedderBackend,
    texts: Sequence[str],
    batch_size: int = DEFAULT_BATCH_SIZE,
    retries: int = 3,
    backoff_seconds: float = 0.5,
) -> list[EmbeddingVector]:
    """Embed texts in order, splitting into batches with per-batch retries.

    The output has one vector per input text, in input order, all with the
    backend's dimension.  A batch that fails every attempt raises
    EmbeddingError carrying the failing input indices.
    """
    if not texts:
        raise InvalidInput("no texts to embed")
    if any(not t for t in texts):
        raise InvalidInput("empty text in embedding batch")
    if batch_size < 1:
        raise InvalidInput("batch_size must be >= 1")

    vectors: list[EmbeddingVector] = []
    for start in range(0, len(texts), batch_size):
        batch = list(texts[start:start + batch_size])
        last_error: Exception | None = None
        result: list[EmbeddingVector] | None = None
        for attempt in range(max(1, retries)):
            if attempt:
                time.sleep(backoff_seconds * 2 ** (attempt - 1))
            try:
                result = backend.embed_batch(batch)
                break
            except ProtocolError:
                raise
            except Exception as exc:
                last_error = exc
                logger.warning("embedding batch at %d failed (attempt %d): %s",
                               start, attempt + 1, exc)
        if result is None:
            raise EmbeddingError(
                f"embedding failed after {max(1, retries)} attempt(s): {last_error}",
                batch_indices=tuple(range(start, start + len(batch))),
            )
        if len(result) != len(batch):
            raise ProtocolError(
                f"backend returned {len(result)} vectors for {len(batch)} texts"
            )
        for vector in result:
            if vector.dim != backend.dimension:
                raise ProtocolError(
                    f"backend vector dim {vector.dim} != declared {backend.dimension}"
                )
        vectors.extend(result)
    return vectors


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """dot(a,b) / (|a|·|b|), accumulated in float64."""
    if a.dim != b.dim:
        raise InvalidInput(f"dimension mismatch: {a.dim} vs {b.dim}")
    av = a.values.astype(np.float64)
    bv = b.values.astype(np.float64)
    norm_a = float(np.linalg.norm(av))
    norm_b = float(np.linalg.norm(bv))
    if norm_a == 0.0 or norm_b == 0.0:
        raise InvalidInput("cosine similarity is undefined for a zero vector")
    return float(np.dot(av, bv) / (norm_a * norm_b))


class MockEmbedderBackend:
    """Deterministic offline embedder.

    Each text's vector is drawn from a generator seeded by a content hash of
    (salt, text), then L2-normalized, so embed(text) depends only on the
    text bytes and configuration.  Distinct texts get near-orthogonal
    vectors at desk scale.  Thread-safe: no shared mutable state.
    """

    def __init__(self, dimension: int = 32, salt: str = ""):
        if dimension < 1:
            raise InvalidInput("dimension must be >= 1")
        self.dimension = dimension
        self.salt = salt
        self.identity = f"mock-embedder-d{dimension}" + (f"-{salt}" if salt else "")

    def _embed_one(self, text: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.salt}\x00{text}".encode("utf-8")).digest()
        seed = int.from_bytes(digest[:8], "big")
        raw = np.random.default_rng(seed).standard_normal(self.dimension)
        return (raw / np.linalg.norm(raw)).astype(np.float32)

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [
            EmbeddingVector(values=self._embed_one(t), dim=self.dimension,
                            embedder_id=self.identity)
            for t in texts
        ]


class HttpEmbedderBackend:
    """Embeddings-style HTTP backend (OpenAI-compatible endpoint).

    Single-attempt: retry policy lives in embed_batch.  The declared
    dimension is enforced against every response vector.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        dimension: int,
        api_key_env: str | None = None,
        timeout_seconds: float = 60.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dimension = dimension
        self.api_key_env = api_key_env
        self.timeout_seconds = timeout_seconds
        self.identity = model

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        response = requests.post(
            f"{self.base_url}/embeddings",
            json={"model": self.model, "input": list(texts)},
            headers=self._headers(),
            timeout=self.timeout_seconds,
        )
        if response.status_code != 200:
            raise ProtocolError(
                f"embeddings endpoint returned {response.status_code}: "
                f"{response.text[:200]}"
            )
        try:
            rows = response.json()["data"]
            vectors = [
                np.asarray(row["embedding"], dtype=np.float32) for row in rows
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed embeddings response: {exc}") from exc
        if len(vectors) != len(texts):
            raise ProtocolError(
                f"embeddings endpoint returned {len(vectors)} vectors "
                f"for {len(texts)} inputs"
            )
        for values in vectors:
            if values.shape != (self.dimension,):
                raise ProtocolError(
                    f"embedding dim {values.shape} != configured {self.dimension}"
                )
        return [
            EmbeddingVector(values=v, dim=self.dimension, embedder_id=self.identity)
            for v in vectors
        ]
