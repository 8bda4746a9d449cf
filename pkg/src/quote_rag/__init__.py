"""Question-indexed retrieval: index chunks under generated questions.

Instead of embedding each corpus chunk once, the build pipeline asks a
language model for questions the chunk answers and embeds every
(question + chunk) pair as its own document.  At query time the user's
question matches the stored questions, hits are collapsed back to
distinct chunks, and the best k chunks come back.  Naive (bare-chunk)
and hypothetical-document (hyde) retrieval are provided as baselines,
along with an evaluation harness for single-hop and multi-hop benchmarks.
"""

from .corpus import (
    Chunk,
    ChunkGroup,
    ChunkingPolicy,
    Document,
    chunk_id_for,
    group_key_map,
    jaccard_similarity,
    load_corpus_jsonl,
    merge_similar_chunks,
    normalize_whitespace,
    split_corpus,
    split_sentences,
    tokenize,
)
from .datasets_eval import (
    EvalReport,
    EvidenceItem,
    MultiHopQuery,
    SingleHopQuery,
    analyze_contexts_per_title,
    evaluate_multihop,
    evaluate_single_hop,
    load_multihop,
    load_nq,
    load_squad,
)
from .embedding import (
    EmbeddingVector,
    HttpEmbedderBackend,
    MockEmbedderBackend,
    cosine_similarity,
    embed_batch,
)
from .errors import (
    DuplicateKey,
    EmbeddingError,
    EmptyIndex,
    GenerationError,
    HydeError,
    IndexCorrupt,
    InvalidInput,
    LoadError,
    ManifestMismatch,
    ProtocolError,
    QuoteRagError,
    TemplateError,
)
from .question_gen import (
    BUILTIN_TEMPLATES,
    GeneratedQA,
    HttpChatBackend,
    MockGeneratorBackend,
    PromptTemplate,
    QuestionBudget,
    generate_questions,
    parse_qa_lines,
    render_prompt,
)
from .retrieval import (
    RetrievalConfig,
    RetrievalResult,
    RetrievedContext,
    deduplicate,
    retrieve,
    retrieve_many,
)
from .vector_store import (
    IndexManifest,
    IndexedDocument,
    ScoredHit,
    VectorStore,
    build_documents,
    load_index,
    save_index,
)

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_TEMPLATES",
    "Chunk",
    "ChunkGroup",
    "ChunkingPolicy",
    "Document",
    "DuplicateKey",
    "EmbeddingError",
    "EmbeddingVector",
    "EmptyIndex",
    "EvalReport",
    "EvidenceItem",
    "GeneratedQA",
    "GenerationError",
    "HttpChatBackend",
    "HttpEmbedderBackend",
    "HydeError",
    "IndexCorrupt",
    "IndexManifest",
    "IndexedDocument",
    "InvalidInput",
    "LoadError",
    "ManifestMismatch",
    "MockEmbedderBackend",
    "MockGeneratorBackend",
    "MultiHopQuery",
    "PromptTemplate",
    "ProtocolError",
    "QuestionBudget",
    "QuoteRagError",
    "RetrievalConfig",
    "RetrievalResult",
    "RetrievedContext",
    "ScoredHit",
    "SingleHopQuery",
    "TemplateError",
    "VectorStore",
    "analyze_contexts_per_title",
    "build_documents",
    "chunk_id_for",
    "cosine_similarity",
    "deduplicate",
    "embed_batch",
    "evaluate_multihop",
    "evaluate_single_hop",
    "generate_questions",
    "group_key_map",
    "jaccard_similarity",
    "load_corpus_jsonl",
    "load_index",
    "load_multihop",
    "load_nq",
    "load_squad",
    "merge_similar_chunks",
    "normalize_whitespace",
    "parse_qa_lines",
    "render_prompt",
    "retrieve",
    "retrieve_many",
    "save_index",
    "split_corpus",
    "split_sentences",
    "tokenize",
]
