import random
from pathlib import Path

import pytest

from quote_rag import (
    BUILTIN_TEMPLATES,
    ChunkingPolicy,
    Document,
    EvidenceItem,
    IndexManifest,
    MockEmbedderBackend,
    MockGeneratorBackend,
    MultiHopQuery,
    QuestionBudget,
    SingleHopQuery,
    VectorStore,
    build_documents,
    embed_batch,
    load_corpus_jsonl,
    split_corpus,
)
from quote_rag.question_gen import FIXED, generate_for_chunks

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def golden_dir():
    return GOLDEN


@pytest.fixture
def embedder():
    return MockEmbedderBackend(dimension=32, salt="t")


@pytest.fixture
def small_chunks():
    documents = load_corpus_jsonl(FIXTURES / "corpus_small.jsonl")
    return split_corpus(documents, ChunkingPolicy())


def make_store(chunks, embedder, composition=("question_chunk", "bare_chunk"),
               questions=2, generator=None, template=None):
    """Generate questions, embed, and assemble an in-memory store."""
    generator = generator or MockGeneratorBackend()
    template = template or BUILTIN_TEMPLATES["nq_squad_basic"]
    budget = QuestionBudget(mode=FIXED, count=questions)
    generation = generate_for_chunks(chunks, generator, template, budget)
    docs = build_documents(chunks, generation.questions, composition)
    vectors = embed_batch(embedder, [d.embed_text for d in docs])
    store = VectorStore(IndexManifest(embedder_id=embedder.identity,
                                      dim=embedder.dimension,
                                      chunk_count=len(chunks)))
    store.add_documents(docs, vectors)
    return store


def make_bare_store(chunks, embedder):
    """Store holding only the chunks themselves, no generated questions."""
    docs = build_documents(chunks, [[] for _ in chunks], ("bare_chunk",))
    vectors = embed_batch(embedder, [d.embed_text for d in docs])
    store = VectorStore(IndexManifest(embedder_id=embedder.identity,
                                      dim=embedder.dimension,
                                      chunk_count=len(chunks)))
    store.add_documents(docs, vectors)
    return store


@pytest.fixture
def store_factory():
    return make_store


@pytest.fixture
def small_store(small_chunks, embedder):
    return make_store(small_chunks, embedder)


_WORDS = ("harbor", "granite", "lantern", "meadow", "signal", "copper",
          "orchard", "tide", "quarry", "beacon", "ferry", "mill")


def random_single_hop_case(seed):
    """Small random corpus plus queries whose ground truth is a real chunk."""
    rng = random.Random(seed)
    documents = []
    for t in range(rng.randint(2, 4)):
        paragraphs = []
        for _ in range(rng.randint(1, 3)):
            first = " ".join(rng.choices(_WORDS, k=6)).capitalize() + "."
            second = " ".join(rng.choices(_WORDS, k=5)).capitalize() + "."
            paragraphs.append(f"{first} {second}")
        documents.append(Document(doc_id=f"doc-{t}", title=f"Title {t}",
                                  body="\n\n".join(paragraphs)))
    chunks = split_corpus(documents, ChunkingPolicy(mode="paragraph"))
    queries = []
    for q in range(rng.randint(5, 10)):
        gt = rng.choice(chunks)
        queries.append(SingleHopQuery(
            query_id=f"q{q}",
            question=" ".join(rng.choices(_WORDS, k=4)),
            gt_title=gt.title,
            gt_context=gt.text,
        ))
    return chunks, queries


def random_multihop_case(seed):
    """Random corpus with uniquely tagged sentences so evidence resolves."""
    rng = random.Random(seed)
    documents = []
    for d in range(rng.randint(2, 4)):
        sentences = [
            f"Fact {d}-{s} involves {' '.join(rng.choices(_WORDS, k=3))}."
            for s in range(rng.randint(4, 8))
        ]
        documents.append(Document(doc_id=f"doc-{d}", title=f"Title {d}",
                                  body=" ".join(sentences)))
    chunks = split_corpus(documents, ChunkingPolicy(mode="sentence_block",
                                                    sentences_per_block=2))
    queries = []
    for q in range(rng.randint(4, 8)):
        picked = rng.sample(chunks, k=min(rng.randint(2, 3), len(chunks)))
        evidence = []
        for chunk in picked:
            sentence = rng.choice(chunk.text.split(". "))
            fact = sentence if sentence.endswith(".") else sentence + "."
            evidence.append(EvidenceItem(doc_id=chunk.doc_id, title=chunk.title,
                                         fact=fact))
        queries.append(MultiHopQuery(query_id=f"mh{q}",
                                     question=" ".join(rng.choices(_WORDS, k=5)),
                                     evidence=tuple(evidence)))
    return chunks, queries


def assert_metric_invariants(report):
    """Bounds, monotonicity in k, and the pairwise metric dominance rules."""
    for name in report.metric_names:
        values = [report.metrics[name][k] for k in report.k_values]
        for value in values:
            assert 0 <= value <= 1
        for earlier, later in zip(values, values[1:]):
            assert earlier <= later
    by_name = report.metrics
    for k in report.k_values:
        if "C" in by_name and "T" in by_name:
            assert by_name["T"][k] >= by_name["C"][k]
        if "Full" in by_name and "Part" in by_name:
            assert by_name["Part"][k] >= by_name["Full"][k]
