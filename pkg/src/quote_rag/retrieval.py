"""Query strategies over a vector store: naive, quote, and hyde.

naive embeds the user query and searches bare chunks directly.  quote
searches question documents, over-retrieving k*M hits and collapsing them
to distinct chunks (first hit per chunk wins) before truncating to k.
hyde asks a generator for a hypothetical answer passage, embeds that text
instead of the query, and then follows whichever of the other two paths
matches the store's composition.  Every result carries per-query
wall-clock latency.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .embedding import EmbedderBackend, embed_batch
from .errors import HydeError, InvalidInput
from .question_gen import GeneratorBackend
from .vector_store import (
    BARE_CHUNK,
    QUESTION_CHUNK,
    QUESTION_ONLY,
    ScoredHit,
    VectorStore,
)

NAIVE = "naive"
QUOTE = "quote"
HYDE = "hyde"
MODES = (NAIVE, QUOTE, HYDE)

HYDE_SEARCH_AUTO = "auto"
HYDE_SEARCH_CHOICES = (HYDE_SEARCH_AUTO, NAIVE, QUOTE)

DEFAULT_MULTIPLIER = 5
DEFAULT_HYDE_PROMPT = (
    "Write a short encyclopedia-style passage that answers the question: {query}"
)

_QUESTION_KINDS = (QUESTION_CHUNK, QUESTION_ONLY)


@dataclass(frozen=True)
class RetrievalConfig:
    """Mode, depth, and over-retrieval settings for one retrieval run."""

    mode: str = QUOTE
    k: int = 5
    multiplier_m: int = DEFAULT_MULTIPLIER
    hyde_backend: GeneratorBackend | None = None
    hyde_prompt: str = DEFAULT_HYDE_PROMPT
    hyde_search: str = HYDE_SEARCH_AUTO
    group_map: dict[str, str] | None = None
    retry_doubled_m: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidInput(f"unknown retrieval mode: {self.mode!r}")
        if self.k < 1:
            raise InvalidInput("k must be >= 1")
        if self.multiplier_m < 1:
            raise InvalidInput("multiplier_m must be >= 1")
        if self.mode == HYDE and self.hyde_backend is None:
            raise InvalidInput("hyde mode requires a generator backend")
        if self.hyde_search not in HYDE_SEARCH_CHOICES:
            raise InvalidInput(f"unknown hyde_search: {self.hyde_search!r}")


@dataclass(frozen=True)
class RetrievedContext:
    """One distinct chunk in a result list."""

    chunk_id: str
    title: str
    chunk_text: str
    score: float
    matched_question: str | None = None

    def to_dict(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "title": self.title,
            "chunk_text": self.chunk_text,
            "score": self.score,
            "matched_question": self.matched_question,
        }


@dataclass(frozen=True)
class RetrievalResult:
    query: str
    contexts: tuple[RetrievedContext, ...]
    elapsed_ms: float

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "contexts": [c.to_dict() for c in self.contexts],
            "elapsed_ms": self.elapsed_ms,
        }


def _chunk_key(chunk_id: str, group_map: dict[str, str] | None) -> str:
    if group_map is None:
        return chunk_id
    return group_map.get(chunk_id, chunk_id)


def deduplicate(
    hits: Sequence[ScoredHit],
    group_map: dict[str, str] | None = None,
) -> list[ScoredHit]:
    """Collapse hits to distinct chunks, keeping the first (best) per chunk.

    Stable: output preserves input order.  When a group map is given, near
    duplicate chunks merged into one group share a key and collapse
    together.
    """
    seen: set[str] = set()
    unique: list[ScoredHit] = []
    for hit in hits:
        key = _chunk_key(hit.chunk_id, group_map)
        if key in seen:
            continue
        seen.add(key)
        unique.append(hit)
    return unique


def _search_kinds(store: VectorStore, mode: str, config: RetrievalConfig) -> tuple[str, ...]:
    counts = store.kind_counts()
    has_questions = any(counts.get(kind, 0) for kind in _QUESTION_KINDS)
    if mode == NAIVE:
        return (BARE_CHUNK,)
    # quote falls back to bare chunks on a question-free store, where
    # dedup is a no-op and the result equals naive's.
    return _QUESTION_KINDS if has_questions else (BARE_CHUNK,)


def _hyde_route(store: VectorStore, config: RetrievalConfig) -> str:
    if config.hyde_search != HYDE_SEARCH_AUTO:
        return config.hyde_search
    counts = store.kind_counts()
    has_questions = any(counts.get(kind, 0) for kind in _QUESTION_KINDS)
    return QUOTE if has_questions else NAIVE


def retrieve(
    query: str,
    store: VectorStore,
    embedder: EmbedderBackend,
    config: RetrievalConfig,
) -> RetrievalResult:
    """Run one query under the configured mode and return top-k distinct chunks.

    elapsed_ms covers everything the mode does: hypothetical-document
    generation (hyde), query embedding, search, and deduplication.  Fewer
    than k distinct chunks in the store yields a shorter list, not an
    error.
    """
    if not query:
        raise InvalidInput("query must be non-empty")
    start = time.perf_counter()

    if config.mode == HYDE:
        prompt = config.hyde_prompt.replace("{query}", query)
        try:
            search_text = config.hyde_backend.generate(prompt)
        except Exception as exc:
            raise HydeError(f"hypothetical document generation failed: {exc}") from exc
        if not search_text.strip():
            raise HydeError("hypothetical document generation returned empty text")
        path = _hyde_route(store, config)
    else:
        search_text = query
        path = config.mode

    vector = embed_batch(embedder, [search_text])[0]

    if path == NAIVE:
        hits = store.query_top_n(vector, config.k, kinds=(BARE_CHUNK,))
        unique = deduplicate(hits, config.group_map)[: config.k]
    else:
        kinds = _search_kinds(store, QUOTE, config)
        fetch = config.k * config.multiplier_m
        hits = store.query_top_n(vector, fetch, kinds=kinds)
        unique = deduplicate(hits, config.group_map)[: config.k]
        if len(unique) < config.k and config.retry_doubled_m:
            hits = store.query_top_n(vector, config.k * config.multiplier_m * 2,
                                     kinds=kinds)
            unique = deduplicate(hits, config.group_map)[: config.k]

    elapsed_ms = (time.perf_counter() - start) * 1000.0
    contexts = tuple(
        RetrievedContext(
            chunk_id=hit.chunk_id,
            title=hit.title,
            chunk_text=hit.chunk_text,
            score=hit.score,
            matched_question=hit.question,
        )
        for hit in unique
    )
    return RetrievalResult(query=query, contexts=contexts, elapsed_ms=elapsed_ms)


def retrieve_many(
    queries: Sequence[str],
    store: VectorStore,
    embedder: EmbedderBackend,
    config: RetrievalConfig,
    workers: int = 1,
) -> list[RetrievalResult]:
    """Retrieve for every query, results in query order.

    The store is immutable during queries, so fan-out is safe; each
    result's elapsed_ms remains that query's own wall-clock, never an
    aggregate throughput figure.
    """
    if workers <= 1:
        return [retrieve(q, store, embedder, config) for q in queries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(retrieve, q, store, embedder, config) for q in queries]
        return [f.result() for f in futures]
