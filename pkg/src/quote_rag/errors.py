"""Exception types shared across the package."""


class QuoteRagError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(QuoteRagError):
    """A precondition on caller-supplied data was violated."""


class LoadError(QuoteRagError):
    """A corpus or dataset file could not be parsed."""


class TemplateError(QuoteRagError):
    """A prompt template is malformed or incompatible with the budget."""


class GenerationError(QuoteRagError):
    """Question (or hypothetical document) generation failed."""

    def __init__(self, message: str, chunk_id: str | None = None):
        super().__init__(message)
        self.chunk_id = chunk_id


class EmbeddingError(QuoteRagError):
    """An embedding backend failed after retries."""

    def __init__(self, message: str, batch_indices: tuple[int, ...] = ()):
        super().__init__(message)
        self.batch_indices = batch_indices


class ProtocolError(QuoteRagError):
    """A backend returned data that violates its contract (e.g. wrong dimension)."""


class DuplicateKey(QuoteRagError):
    """A document key is already present in the store."""


class EmptyIndex(QuoteRagError):
    """A query was issued against a store with no matching documents."""


class IndexCorrupt(QuoteRagError):
    """An on-disk index is incomplete or inconsistent."""

    def __init__(self, message: str, filename: str | None = None):
        super().__init__(message)
        self.filename = filename


class ManifestMismatch(QuoteRagError):
    """The query-time embedder does not match the one recorded in the index manifest."""


class HydeError(QuoteRagError):
    """Hypothetical-document generation failed at query time."""
