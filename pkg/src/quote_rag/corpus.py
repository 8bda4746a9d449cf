"""Corpus loading, chunk splitting, and near-duplicate chunk merging.

Chunks are the retrieval target unit.  Splitting is deterministic: the same
(documents, policy) input always produces the same chunk list, including ids,
so index builds are reproducible and golden-testable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InvalidInput, LoadError

logger = logging.getLogger(__name__)

PARAGRAPH = "paragraph"
SENTENCE_BLOCK = "sentence_block"
CHUNKING_MODES = (PARAGRAPH, SENTENCE_BLOCK)

MERGE_SCOPE_TITLE = "title"
MERGE_SCOPE_CORPUS = "corpus"

# Tokens that end with '.' without terminating a sentence.
_ABBREVIATIONS = frozenset({
    "mr", "mrs", "ms", "dr", "prof", "rev", "hon", "jr", "sr", "st",
    "no", "vol", "fig", "vs", "etc", "approx", "dept", "est", "inc",
    "ltd", "co", "corp", "mt", "cf", "al", "ca",
    "e.g", "i.e", "u.s", "u.k", "a.m", "p.m", "ph.d",
})

# A sentence ends at terminal punctuation followed by whitespace and an
# uppercase letter or opening quote.
_SENTENCE_BOUNDARY = re.compile(r'[.!?]+["\'”’)\]]*\s+(?=[A-Z"\'“‘])')
_PARAGRAPH_BREAK = re.compile(r"\n\s*\n")
_WHITESPACE = re.compile(r"\s+")
_TOKEN = re.compile(r"[a-z0-9]+")


def normalize_whitespace(text: str) -> str:
    """Collapse whitespace runs to single spaces and trim the ends."""
    return _WHITESPACE.sub(" ", text).strip()


def tokenize(text: str) -> frozenset[str]:
    """Lowercased, punctuation-stripped token set used for chunk similarity."""
    return frozenset(_TOKEN.findall(text.lower()))


def jaccard_similarity(a: frozenset[str], b: frozenset[str]) -> float:
    """Token-set Jaccard similarity; two empty sets count as identical."""
    if not a and not b:
        return 1.0
    union = len(a | b)
    return len(a & b) / union if union else 1.0


@dataclass(frozen=True)
class Document:
    """One raw corpus document."""

    doc_id: str
    title: str
    body: str


@dataclass(frozen=True)
class Chunk:
    """A contiguous passage of a document, identified by a content hash."""

    chunk_id: str
    doc_id: str
    title: str
    text: str
    ordinal: int


@dataclass(frozen=True)
class ChunkingPolicy:
    """How documents are split: blank-line paragraphs or fixed sentence blocks."""

    mode: str = PARAGRAPH
    sentences_per_block: int = 4

    def __post_init__(self):
        if self.mode not in CHUNKING_MODES:
            raise InvalidInput(f"unknown chunking mode: {self.mode!r}")
        if self.sentences_per_block < 1:
            raise InvalidInput("sentences_per_block must be >= 1")


def chunk_id_for(doc_id: str, ordinal: int, text: str) -> str:
    """Stable hex id: content hash of (doc_id, ordinal, whitespace-normalized text)."""
    payload = "\x00".join((doc_id, str(ordinal), normalize_whitespace(text)))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def _make_chunk(doc: Document, ordinal: int, text: str) -> Chunk:
    return Chunk(
        chunk_id=chunk_id_for(doc.doc_id, ordinal, text),
        doc_id=doc.doc_id,
        title=doc.title,
        text=text,
        ordinal=ordinal,
    )


def split_sentences(text: str) -> list[str]:
    """Split text into sentences on terminal punctuation.

    Rule-based: a boundary is `.`, `!` or `?` (plus trailing quotes/brackets)
    followed by whitespace and an uppercase letter or opening quote.  Periods
    after known abbreviations and single-letter initials do not split.
    Whitespace is normalized before splitting.
    """
    flat = normalize_whitespace(text)
    if not flat:
        return []
    sentences: list[str] = []
    start = 0
    for match in _SENTENCE_BOUNDARY.finditer(flat):
        before = flat[start:match.start()]
        last_word = before.rsplit(" ", 1)[-1] if before else ""
        token = last_word.lstrip("\"'“‘([").rstrip(".").lower()
        if match.group()[0] == ".":
            if token in _ABBREVIATIONS:
                continue
            if len(token) == 1 and token.isalpha():
                continue  # initials like "John A. Smith"
        sentences.append(flat[start:match.end()].rstrip())
        start = match.end()
    tail = flat[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def split_corpus(documents: Sequence[Document], policy: ChunkingPolicy) -> list[Chunk]:
    """Split documents into chunks under the given policy.

    Paragraph mode splits on blank lines and preserves the raw paragraph
    text; sentence_block mode groups `sentences_per_block` consecutive
    sentences per chunk (the last block of a document may be shorter).
    Documents that yield no chunks are skipped with a warning.
    """
    if not documents:
        raise InvalidInput("document list is empty")
    seen_ids: set[str] = set()
    for doc in documents:
        if not doc.doc_id:
            raise InvalidInput("document with empty doc_id")
        if doc.doc_id in seen_ids:
            raise InvalidInput(f"duplicate doc_id: {doc.doc_id!r}")
        seen_ids.add(doc.doc_id)

    chunks: list[Chunk] = []
    for doc in documents:
        if policy.mode == PARAGRAPH:
            pieces = [p.strip() for p in _PARAGRAPH_BREAK.split(doc.body)]
            pieces = [p for p in pieces if p]
        else:
            sentences = split_sentences(doc.body)
            step = policy.sentences_per_block
            pieces = [
                " ".join(sentences[i:i + step])
                for i in range(0, len(sentences), step)
            ]
        if not pieces:
            logger.warning("document %r yields no chunks; skipped", doc.doc_id)
            continue
        for ordinal, text in enumerate(pieces):
            chunks.append(_make_chunk(doc, ordinal, text))
    return chunks


@dataclass(frozen=True)
class ChunkGroup:
    """A set of near-duplicate chunks scored as one retrieval target."""

    group_id: str
    representative: Chunk
    member_ids: tuple[str, ...]


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def merge_similar_chunks(
    chunks: Sequence[Chunk],
    threshold: float = 0.9,
    scope: str = MERGE_SCOPE_TITLE,
) -> list[ChunkGroup]:
    """Group near-duplicate chunks by token-Jaccard similarity.

    Chunks whose pairwise similarity meets `threshold` are merged by
    transitive closure (union-find), so the output partitions the input.
    By default only chunks sharing a title are compared; pass
    scope="corpus" to compare across the whole corpus.  The group
    representative is the member with the lowest (doc_id, ordinal).
    """
    if not 0.0 <= threshold <= 1.0:
        raise InvalidInput(f"threshold must be in [0, 1], got {threshold}")
    if scope not in (MERGE_SCOPE_TITLE, MERGE_SCOPE_CORPUS):
        raise InvalidInput(f"unknown merge scope: {scope!r}")

    token_sets = [tokenize(c.text) for c in chunks]
    uf = _UnionFind(len(chunks))

    buckets: dict[str, list[int]] = {}
    for i, chunk in enumerate(chunks):
        key = chunk.title if scope == MERGE_SCOPE_TITLE else ""
        buckets.setdefault(key, []).append(i)

    for indices in buckets.values():
        for a_pos, i in enumerate(indices):
            for j in indices[a_pos + 1:]:
                if jaccard_similarity(token_sets[i], token_sets[j]) >= threshold:
                    uf.union(i, j)

    members: dict[int, list[int]] = {}
    for i in range(len(chunks)):
        members.setdefault(uf.find(i), []).append(i)

    groups = []
    for idx_list in members.values():
        rep = min(idx_list, key=lambda i: (chunks[i].doc_id, chunks[i].ordinal, chunks[i].chunk_id))
        groups.append(ChunkGroup(
            group_id=chunks[rep].chunk_id,
            representative=chunks[rep],
            member_ids=tuple(sorted(chunks[i].chunk_id for i in idx_list)),
        ))
    groups.sort(key=lambda g: (g.representative.doc_id, g.representative.ordinal))
    return groups


def group_key_map(groups: Iterable[ChunkGroup]) -> dict[str, str]:
    """Map every member chunk_id to its group_id (identity for singletons)."""
    mapping: dict[str, str] = {}
    for group in groups:
        for member in group.member_ids:
            mapping[member] = group.group_id
    return mapping


def load_corpus_jsonl(path: str | Path) -> list[Document]:
    """Read documents from JSON Lines: {"doc_id", "title", "body"} per line."""
    documents: list[Document] = []
    try:
        with open(path, encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise LoadError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
                for field in ("doc_id", "title", "body"):
                    if field not in obj:
                        raise LoadError(f"{path}:{line_no}: missing field {field!r}")
                documents.append(Document(
                    doc_id=str(obj["doc_id"]),
                    title=str(obj["title"]),
                    body=str(obj["body"]),
                ))
    except OSError as exc:
        raise LoadError(f"cannot read corpus file {path}: {exc}") from exc
    return documents


def write_chunks_jsonl(chunks: Iterable[Chunk], path: str | Path) -> None:
    """Dump chunks for inspection, one JSON object per line."""
    with open(path, "w", encoding="utf-8") as handle:
        for chunk in chunks:
            handle.write(json.dumps({
                "chunk_id": chunk.chunk_id,
                "doc_id": chunk.doc_id,
                "title": chunk.title,
                "ordinal": chunk.ordinal,
                "text": chunk.text,
            }, ensure_ascii=False) + "\n")
