"""Exact-search vector store with a three-file on-disk format.

Documents and their vectors are kept in insertion order.  Queries scan
every stored vector (no approximate structures), score in float64, and
break score ties by ascending doc_key so results are identical across
runs and platforms.

On disk an index is a directory of three files:
  manifest.json  - provenance and counts, "format_version": 1
  docs.jsonl     - one document per line, same order as the vector rows
  vectors.bin    - little-endian float32, row-major, row i = line i
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .embedding import EmbeddingVector
from .errors import (
    DuplicateKey,
    EmptyIndex,
    IndexCorrupt,
    InvalidInput,
    ManifestMismatch,
    ProtocolError,
)

FORMAT_VERSION = 1

QUESTION_CHUNK = "question_chunk"
BARE_CHUNK = "bare_chunk"
QUESTION_ONLY = "question_only"
DOC_KINDS = (QUESTION_CHUNK, BARE_CHUNK, QUESTION_ONLY)

MANIFEST_FILE = "manifest.json"
DOCS_FILE = "docs.jsonl"
VECTORS_FILE = "vectors.bin"
GROUPS_FILE = "groups.json"

_DOC_FIELDS = ("doc_key", "kind", "embed_text", "question", "answer",
               "chunk_id", "title", "chunk_text")


@dataclass(frozen=True)
class IndexedDocument:
    """One embedded document: a bare chunk, or a question paired with its chunk."""

    doc_key: str
    kind: str
    embed_text: str
    chunk_id: str
    title: str
    chunk_text: str
    question: str | None = None
    answer: str | None = None

    def __post_init__(self):
        if self.kind not in DOC_KINDS:
            raise InvalidInput(f"unknown document kind: {self.kind!r}")
        if self.kind in (QUESTION_CHUNK, QUESTION_ONLY) and not self.question:
            raise InvalidInput(f"{self.kind} document requires a question")
        if not self.doc_key:
            raise InvalidInput("doc_key must be non-empty")


@dataclass
class IndexManifest:
    """Provenance for one index: what produced it and how many rows it holds."""

    embedder_id: str
    dim: int
    generator_id: str = ""
    template_name: str = ""
    budget: str = ""
    composition: list[str] = field(default_factory=list)
    created_at: str = ""
    doc_count: int = 0
    chunk_count: int = 0
    seed: str = ""
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "embedder_id": self.embedder_id,
            "dim": self.dim,
            "generator_id": self.generator_id,
            "template_name": self.template_name,
            "budget": self.budget,
            "composition": list(self.composition),
            "created_at": self.created_at,
            "doc_count": self.doc_count,
            "chunk_count": self.chunk_count,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "IndexManifest":
        try:
            manifest = cls(
                embedder_id=raw["embedder_id"],
                dim=int(raw["dim"]),
                generator_id=raw.get("generator_id", ""),
                template_name=raw.get("template_name", ""),
                budget=raw.get("budget", ""),
                composition=list(raw.get("composition", [])),
                created_at=raw.get("created_at", ""),
                doc_count=int(raw["doc_count"]),
                chunk_count=int(raw.get("chunk_count", 0)),
                seed=raw.get("seed", ""),
                format_version=int(raw.get("format_version", -1)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise IndexCorrupt(f"manifest missing or invalid field: {exc}",
                               filename=MANIFEST_FILE) from exc
        if manifest.format_version != FORMAT_VERSION:
            raise ManifestMismatch(
                f"unsupported index format_version {manifest.format_version}; "
                f"this build reads version {FORMAT_VERSION}"
            )
        return manifest


@dataclass(frozen=True)
class ScoredHit:
    """One query result row; hit lists are nonincreasing in score."""

    doc_key: str
    score: float
    chunk_id: str
    title: str
    chunk_text: str
    question: str | None = None


class VectorStore:
    """In-memory document + vector table with exact cosine top-N queries."""

    def __init__(self, manifest: IndexManifest):
        self.manifest = manifest
        self._docs: list[IndexedDocument] = []
        self._keys: set[str] = set()
        self._rows: list[np.ndarray] = []
        self._matrix: np.ndarray | None = None
        self._norms: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._docs)

    @property
    def documents(self) -> tuple[IndexedDocument, ...]:
        return tuple(self._docs)

    def kind_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for doc in self._docs:
            counts[doc.kind] = counts.get(doc.kind, 0) + 1
        return counts

    def add_documents(
        self,
        docs: Sequence[IndexedDocument],
        vectors: Sequence[EmbeddingVector],
    ) -> int:
        """Append documents with their vectors; all-or-nothing on validation failure."""
        if len(docs) != len(vectors):
            raise InvalidInput(
                f"{len(docs)} documents but {len(vectors)} vectors"
            )
        batch_keys: set[str] = set()
        for doc, vector in zip(docs, vectors):
            if doc.doc_key in self._keys or doc.doc_key in batch_keys:
                raise DuplicateKey(f"doc_key already present: {doc.doc_key!r}")
            batch_keys.add(doc.doc_key)
            if vector.dim != self.manifest.dim:
                raise ProtocolError(
                    f"vector dim {vector.dim} != index dim {self.manifest.dim}"
                )
            if vector.embedder_id != self.manifest.embedder_id:
                raise ProtocolError(
                    f"vector embedder {vector.embedder_id!r} != index embedder "
                    f"{self.manifest.embedder_id!r}"
                )
        for doc, vector in zip(docs, vectors):
            self._docs.append(doc)
            self._keys.add(doc.doc_key)
            self._rows.append(vector.values.astype(np.float32))
        self._matrix = None
        self._norms = None
        self.manifest.doc_count = len(self._docs)
        return len(docs)

    def _ensure_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        if self._matrix is None:
            self._matrix = np.vstack(self._rows).astype(np.float64)
            self._norms = np.linalg.norm(self._matrix, axis=1)
        return self._matrix, self._norms

    def query_top_n(
        self,
        vector: EmbeddingVector,
        n: int,
        kinds: Sequence[str] | None = None,
    ) -> list[ScoredHit]:
        """Exact top-N by cosine: scan all rows (optionally restricted by kind).

        Scores are nonincreasing; equal scores order by ascending doc_key.
        n is clipped to the number of candidate rows.
        """
        if n < 1:
            raise InvalidInput("n must be >= 1")
        if not self._docs:
            raise EmptyIndex("query against an empty index")
        if vector.dim != self.manifest.dim:
            raise InvalidInput(
                f"query dim {vector.dim} != index dim {self.manifest.dim}"
            )
        if vector.embedder_id != self.manifest.embedder_id:
            raise ManifestMismatch(
                f"query embedded with {vector.embedder_id!r} but index was built "
                f"with {self.manifest.embedder_id!r}"
            )
        matrix, norms = self._ensure_matrix()
        if kinds is None:
            candidates = np.arange(len(self._docs))
        else:
            wanted = set(kinds)
            candidates = np.array(
                [i for i, d in enumerate(self._docs) if d.kind in wanted],
                dtype=np.int64,
            )
            if candidates.size == 0:
                raise EmptyIndex(f"index holds no documents of kind {sorted(wanted)}")

        query = vector.values.astype(np.float64)
        query_norm = np.linalg.norm(query)
        if query_norm == 0.0:
            raise InvalidInput("query vector is all-zero")
        scores = (matrix[candidates] @ query) / (norms[candidates] * query_norm)

        order = np.argsort(-scores, kind="stable")
        top = order[: min(n, candidates.size)].tolist()

        # Resolve score ties by ascending doc_key.  Ties can straddle the
        # cut at n, so widen to every candidate tied with the last kept
        # score before re-cutting.
        if top:
            cutoff = scores[top[-1]]
            tied = [int(i) for i in order[len(top):] if scores[i] == cutoff]
            pool = top + tied
            pool.sort(key=lambda i: (-scores[i], self._docs[candidates[i]].doc_key))
            top = pool[: len(top)]

        hits = []
        for i in top:
            doc = self._docs[int(candidates[i])]
            hits.append(ScoredHit(
                doc_key=doc.doc_key,
                score=float(scores[i]),
                chunk_id=doc.chunk_id,
                title=doc.title,
                chunk_text=doc.chunk_text,
                question=doc.question,
            ))
        return hits


def _doc_to_dict(doc: IndexedDocument) -> dict:
    return {name: getattr(doc, name) for name in _DOC_FIELDS}


def save_index(store: VectorStore, path: str | Path) -> None:
    """Write the three-file index directory; overwrites existing files."""
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    manifest_text = json.dumps(store.manifest.to_dict(), indent=2, sort_keys=True)
    (directory / MANIFEST_FILE).write_text(manifest_text + "\n", encoding="utf-8")
    with open(directory / DOCS_FILE, "w", encoding="utf-8") as handle:
        for doc in store.documents:
            handle.write(json.dumps(_doc_to_dict(doc), ensure_ascii=False) + "\n")
    if len(store):
        matrix = np.vstack([row for row in store._rows]).astype("<f4")
        (directory / VECTORS_FILE).write_bytes(matrix.tobytes(order="C"))
    else:
        (directory / VECTORS_FILE).write_bytes(b"")


def load_index(path: str | Path) -> VectorStore:
    """Read an index directory back into memory, verifying counts and sizes."""
    directory = Path(path)
    manifest_path = directory / MANIFEST_FILE
    try:
        raw = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IndexCorrupt(f"cannot read manifest: {exc}", filename=MANIFEST_FILE) from exc
    except json.JSONDecodeError as exc:
        raise IndexCorrupt(f"manifest is not valid JSON: {exc}",
                           filename=MANIFEST_FILE) from exc
    manifest = IndexManifest.from_dict(raw)

    docs: list[IndexedDocument] = []
    try:
        with open(directory / DOCS_FILE, encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    docs.append(IndexedDocument(
                        doc_key=obj["doc_key"],
                        kind=obj["kind"],
                        embed_text=obj["embed_text"],
                        chunk_id=obj["chunk_id"],
                        title=obj["title"],
                        chunk_text=obj["chunk_text"],
                        question=obj.get("question"),
                        answer=obj.get("answer"),
                    ))
                except (json.JSONDecodeError, KeyError, InvalidInput) as exc:
                    raise IndexCorrupt(f"line {line_no}: {exc}",
                                       filename=DOCS_FILE) from exc
    except OSError as exc:
        raise IndexCorrupt(f"cannot read documents: {exc}", filename=DOCS_FILE) from exc
    if len(docs) != manifest.doc_count:
        raise IndexCorrupt(
            f"{len(docs)} documents but manifest says {manifest.doc_count}",
            filename=DOCS_FILE,
        )
    if len({d.doc_key for d in docs}) != len(docs):
        raise IndexCorrupt("duplicate doc_key", filename=DOCS_FILE)

    try:
        blob = (directory / VECTORS_FILE).read_bytes()
    except OSError as exc:
        raise IndexCorrupt(f"cannot read vectors: {exc}", filename=VECTORS_FILE) from exc
    expected = manifest.doc_count * manifest.dim * 4
    if len(blob) != expected:
        raise IndexCorrupt(
            f"vector file holds {len(blob)} bytes, expected {expected}",
            filename=VECTORS_FILE,
        )

    store = VectorStore(manifest)
    store._docs = docs
    store._keys = {d.doc_key for d in docs}
    if docs:
        matrix = np.frombuffer(blob, dtype="<f4").reshape(manifest.doc_count,
                                                          manifest.dim)
        store._rows = [matrix[i].copy() for i in range(manifest.doc_count)]
    return store


def save_group_map(index_path: str | Path, mapping: dict[str, str]) -> None:
    """Persist a chunk_id -> group_id map next to the core index files."""
    path = Path(index_path) / GROUPS_FILE
    path.write_text(json.dumps(mapping, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def load_group_map(index_path: str | Path) -> dict[str, str] | None:
    """Read the optional group map; None when the index has no merged groups."""
    path = Path(index_path) / GROUPS_FILE
    if not path.exists():
        return None
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IndexCorrupt(f"group map unreadable: {exc}", filename=GROUPS_FILE) from exc
    if not isinstance(raw, dict):
        raise IndexCorrupt("group map must be a JSON object", filename=GROUPS_FILE)
    return {str(k): str(v) for k, v in raw.items()}


def build_documents(
    chunks: Iterable,
    questions_per_chunk: Sequence[Sequence],
    composition: Sequence[str],
    include_answers: bool = False,
) -> list[IndexedDocument]:
    """Assemble IndexedDocuments from chunks and their generated questions.

    question_chunk documents embed the question concatenated with the chunk
    text (newline-separated); question_only documents embed the bare
    question; bare_chunk documents embed the chunk text itself, once per
    chunk.  include_answers appends each answer to the embedded text (the
    answer is always kept as metadata either way).
    """
    composition = list(composition)
    for kind in composition:
        if kind not in DOC_KINDS:
            raise InvalidInput(f"unknown composition kind: {kind!r}")
    if not composition:
        raise InvalidInput("composition must name at least one document kind")

    docs: list[IndexedDocument] = []
    for chunk, qa_list in zip(chunks, questions_per_chunk):
        if BARE_CHUNK in composition:
            docs.append(IndexedDocument(
                doc_key=f"{chunk.chunk_id}:chunk",
                kind=BARE_CHUNK,
                embed_text=chunk.text,
                chunk_id=chunk.chunk_id,
                title=chunk.title,
                chunk_text=chunk.text,
            ))
        for i, qa in enumerate(qa_list):
            if QUESTION_CHUNK in composition:
                embed_text = f"{qa.question}\n{chunk.text}"
                if include_answers and qa.answer:
                    embed_text = f"{qa.question} {qa.answer}\n{chunk.text}"
                docs.append(IndexedDocument(
                    doc_key=f"{chunk.chunk_id}:q{i}",
                    kind=QUESTION_CHUNK,
                    embed_text=embed_text,
                    chunk_id=chunk.chunk_id,
                    title=chunk.title,
                    chunk_text=chunk.text,
                    question=qa.question,
                    answer=qa.answer,
                ))
            if QUESTION_ONLY in composition:
                embed_text = qa.question
                if include_answers and qa.answer:
                    embed_text = f"{qa.question} {qa.answer}"
                docs.append(IndexedDocument(
                    doc_key=f"{chunk.chunk_id}:qo{i}",
                    kind=QUESTION_ONLY,
                    embed_text=embed_text,
                    chunk_id=chunk.chunk_id,
                    title=chunk.title,
                    chunk_text=chunk.text,
                    question=qa.question,
                    answer=qa.answer,
                ))
    return docs
