"""Benchmark dataset loading, retrieval evaluation, and result reporting.

Single-hop datasets score Context Accuracy (C@k: the ground-truth
paragraph is among the top-k distinct chunks) and Title Accuracy (T@k:
the ground-truth article title is among the top-k chunks' titles).
Multi-hop datasets score Full Match (all evidence found in top-k) and
Partial Match (mean fraction of evidence found).  Metrics are exact
rationals internally and only become floats at serialization time.
"""

from __future__ import annotations

import csv
import json
import logging
import statistics
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .corpus import Chunk, Document, normalize_whitespace
from .embedding import EmbedderBackend
from .errors import InvalidInput, LoadError
from .retrieval import RetrievalConfig, retrieve_many
from .vector_store import VectorStore

logger = logging.getLogger(__name__)

SINGLE_HOP_METRICS = ("C", "T")
MULTI_HOP_METRICS = ("Full", "Part")

DEFAULT_BUCKET_EDGES = (1, 5, 20, 50, 100)

LATENCY_FIELDS = ("total_seconds", "ms_per_query", "index_seconds")


@dataclass(frozen=True)
class SingleHopQuery:
    """A question whose answer lives in one known paragraph of one article."""

    query_id: str
    question: str
    gt_title: str
    gt_context: str


@dataclass(frozen=True)
class EvidenceItem:
    """One fact a multi-hop query needs; matched to chunks by text containment."""

    doc_id: str
    title: str
    fact: str


@dataclass(frozen=True)
class MultiHopQuery:
    query_id: str
    question: str
    evidence: tuple[EvidenceItem, ...]


def load_squad(path: str | Path) -> tuple[list[Document], list[SingleHopQuery]]:
    """Load a SQuAD v1.1-format JSON file.

    One Document per title with paragraphs joined by blank lines, so the
    paragraph chunking policy reproduces the original paragraph boundaries.
    Each QA pair becomes a query whose ground truth is its containing
    paragraph.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise LoadError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path} is not valid JSON: {exc}") from exc

    documents: list[Document] = []
    queries: list[SingleHopQuery] = []
    try:
        for article in raw["data"]:
            title = article["title"]
            contexts = [p["context"] for p in article["paragraphs"]]
            documents.append(Document(
                doc_id=title,
                title=title,
                body="\n\n".join(contexts),
            ))
            for paragraph in article["paragraphs"]:
                for qa in paragraph["qas"]:
                    queries.append(SingleHopQuery(
                        query_id=str(qa["id"]),
                        question=qa["question"],
                        gt_title=title,
                        gt_context=paragraph["context"],
                    ))
    except (KeyError, TypeError) as exc:
        raise LoadError(f"{path} is not SQuAD-format: missing {exc}") from exc
    return documents, queries


def load_nq(path: str | Path) -> tuple[list[Document], list[SingleHopQuery]]:
    """Load pre-extracted single-hop queries from JSON Lines.

    Each line: {"query_id", "question", "title", "context"} where context
    is the long-answer paragraph.  Documents are reassembled per title from
    the distinct contexts in order of first appearance.
    """
    paragraphs: dict[str, list[str]] = {}
    queries: list[SingleHopQuery] = []
    try:
        with open(path, encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    query = SingleHopQuery(
                        query_id=str(obj["query_id"]),
                        question=obj["question"],
                        gt_title=obj["title"],
                        gt_context=obj["context"],
                    )
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise LoadError(f"{path}:{line_no}: {exc}") from exc
                queries.append(query)
                bucket = paragraphs.setdefault(query.gt_title, [])
                if query.gt_context not in bucket:
                    bucket.append(query.gt_context)
    except OSError as exc:
        raise LoadError(f"cannot read {path}: {exc}") from exc

    documents = [
        Document(doc_id=title, title=title, body="\n\n".join(contexts))
        for title, contexts in paragraphs.items()
    ]
    return documents, queries


def load_multihop(path: str | Path) -> tuple[list[Document], list[MultiHopQuery]]:
    """Load a combined multi-hop benchmark file.

    Format: one JSON object {"corpus": [{"doc_id"?, "title", "body"}, ...],
    "queries": [{"query_id"?, "question"|"query", "evidence"|"evidence_list":
    [{"doc_id"?|"title"?, "fact"}, ...]}, ...]}.  Evidence items resolve
    their title through the corpus so chunk-level matching can fall back to
    title equality when the fact text is absent.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise LoadError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or "corpus" not in raw or "queries" not in raw:
        raise LoadError(f"{path} must hold a JSON object with corpus and queries")

    documents: list[Document] = []
    title_by_doc: dict[str, str] = {}
    doc_by_title: dict[str, str] = {}
    for i, entry in enumerate(raw["corpus"]):
        try:
            title = entry["title"]
            body = entry["body"]
        except (KeyError, TypeError) as exc:
            raise LoadError(f"{path}: corpus entry {i}: missing {exc}") from exc
        doc_id = str(entry.get("doc_id", title))
        documents.append(Document(doc_id=doc_id, title=title, body=body))
        title_by_doc[doc_id] = title
        doc_by_title.setdefault(title, doc_id)

    queries: list[MultiHopQuery] = []
    for i, entry in enumerate(raw["queries"]):
        if not isinstance(entry, dict):
            raise LoadError(f"{path}: query {i} is not an object")
        question = entry.get("question", entry.get("query"))
        if not question:
            raise LoadError(f"{path}: query {i} has no question text")
        evidence_raw = entry.get("evidence", entry.get("evidence_list"))
        if not evidence_raw:
            raise LoadError(f"{path}: query {i} has no evidence")
        items = []
        for j, item in enumerate(evidence_raw):
            fact = item.get("fact", "")
            doc_id = str(item.get("doc_id", ""))
            title = item.get("title", "")
            if doc_id and not title:
                title = title_by_doc.get(doc_id, "")
            if title and not doc_id:
                doc_id = doc_by_title.get(title, "")
            if not fact and not title and not doc_id:
                raise LoadError(f"{path}: query {i} evidence {j} has no fact or source")
            items.append(EvidenceItem(doc_id=doc_id, title=title, fact=fact))
        queries.append(MultiHopQuery(
            query_id=str(entry.get("query_id", f"mh-{i}")),
            question=question,
            evidence=tuple(items),
        ))
    return documents, queries


@dataclass
class EvalReport:
    """Metric values for one (dataset, mode) run plus per-query detail.

    metrics maps metric name to {k: exact Fraction}; floats appear only in
    the serialized form, alongside the exact "num/den" strings so a report
    re-parses losslessly.
    """

    dataset: str
    mode: str
    k_values: list[int]
    metric_names: tuple[str, ...]
    metrics: dict[str, dict[int, Fraction]]
    query_count: int
    excluded_count: int
    excluded_ids: list[str]
    total_seconds: float
    ms_per_query: float
    index_seconds: float | None = None
    store_composition: dict[str, int] = field(default_factory=dict)
    per_query: list[dict] = field(default_factory=list)

    def metric_labels(self) -> list[str]:
        return [f"{name}@{k}" for name in self.metric_names for k in self.k_values]

    def to_dict(self) -> dict:
        flat = {
            f"{name}@{k}": round(float(self.metrics[name][k]), 6)
            for name in self.metric_names
            for k in self.k_values
        }
        exact = {
            f"{name}@{k}": str(self.metrics[name][k])
            for name in self.metric_names
            for k in self.k_values
        }
        return {
            "dataset": self.dataset,
            "mode": self.mode,
            "k_values": list(self.k_values),
            "metric_names": list(self.metric_names),
            "metrics": flat,
            "exact": exact,
            "query_count": self.query_count,
            "excluded_count": self.excluded_count,
            "excluded_ids": list(self.excluded_ids),
            "total_seconds": self.total_seconds,
            "ms_per_query": self.ms_per_query,
            "index_seconds": self.index_seconds,
            "store_composition": dict(self.store_composition),
            "per_query": list(self.per_query),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "EvalReport":
        k_values = [int(k) for k in raw["k_values"]]
        metric_names = tuple(raw["metric_names"])
        metrics: dict[str, dict[int, Fraction]] = {}
        for name in metric_names:
            metrics[name] = {
                k: Fraction(raw["exact"][f"{name}@{k}"]) for k in k_values
            }
        return cls(
            dataset=raw["dataset"],
            mode=raw["mode"],
            k_values=k_values,
            metric_names=metric_names,
            metrics=metrics,
            query_count=int(raw["query_count"]),
            excluded_count=int(raw["excluded_count"]),
            excluded_ids=list(raw.get("excluded_ids", [])),
            total_seconds=float(raw["total_seconds"]),
            ms_per_query=float(raw["ms_per_query"]),
            index_seconds=raw.get("index_seconds"),
            store_composition=dict(raw.get("store_composition", {})),
            per_query=list(raw.get("per_query", [])),
        )

    def comparable_dict(self) -> dict:
        """Serialized form with the latency fields removed, for determinism checks."""
        out = self.to_dict()
        for key in LATENCY_FIELDS:
            out.pop(key, None)
        return out


def _distinct_chunks(store: VectorStore) -> list[Chunk]:
    """Recover the distinct chunk universe from whatever documents the store holds."""
    seen: dict[str, Chunk] = {}
    for doc in store.documents:
        if doc.chunk_id not in seen:
            seen[doc.chunk_id] = Chunk(
                chunk_id=doc.chunk_id,
                doc_id="",
                title=doc.title,
                text=doc.chunk_text,
                ordinal=0,
            )
    return list(seen.values())


def _mapped(chunk_id: str, group_map: dict[str, str] | None) -> str:
    if group_map is None:
        return chunk_id
    return group_map.get(chunk_id, chunk_id)


def _validate_k_values(k_values: Sequence[int]) -> list[int]:
    ks = list(k_values)
    if not ks:
        raise InvalidInput("k_values must be non-empty")
    if any(k < 1 for k in ks):
        raise InvalidInput("every k must be >= 1")
    if ks != sorted(ks):
        raise InvalidInput("k_values must be sorted ascending")
    return ks


def _latency(results) -> tuple[float, float]:
    total_ms = sum(r.elapsed_ms for r in results)
    per_query = total_ms / len(results) if results else 0.0
    return total_ms / 1000.0, per_query


def evaluate_single_hop(
    queries: Sequence[SingleHopQuery],
    store: VectorStore,
    embedder: EmbedderBackend,
    config: RetrievalConfig,
    k_values: Sequence[int],
    dataset: str = "single_hop",
    workers: int = 1,
) -> EvalReport:
    """Score C@k and T@k over the query set.

    Each query retrieves once at the largest k; smaller k values score the
    rank prefix.  Ground truth resolves to chunks by whitespace-normalized
    text equality (to groups when the store carries a merge map); queries
    whose ground truth matches no chunk are excluded and tallied, never
    silently dropped.
    """
    ks = _validate_k_values(k_values)
    chunks = _distinct_chunks(store)
    by_text: dict[str, set[str]] = {}
    for chunk in chunks:
        by_text.setdefault(normalize_whitespace(chunk.text), set()).add(
            _mapped(chunk.chunk_id, config.group_map)
        )

    resolved: list[tuple[SingleHopQuery, set[str]]] = []
    excluded: list[str] = []
    for query in queries:
        gt_keys = by_text.get(normalize_whitespace(query.gt_context))
        if gt_keys:
            resolved.append((query, gt_keys))
        else:
            excluded.append(query.query_id)
    if excluded:
        logger.warning("%d quer%s had unresolvable ground truth and were excluded",
                       len(excluded), "y" if len(excluded) == 1 else "ies")
    if not resolved:
        raise InvalidInput("no query's ground truth resolves to an indexed chunk")

    run_config = replace(config, k=max(ks))
    results = retrieve_many([q.question for q, _ in resolved], store, embedder,
                            run_config, workers=workers)

    per_query: list[dict] = []
    for (query, gt_keys), result in zip(resolved, results):
        context_rank = None
        title_rank = None
        for rank, context in enumerate(result.contexts, start=1):
            if context_rank is None and _mapped(context.chunk_id,
                                                config.group_map) in gt_keys:
                context_rank = rank
            if title_rank is None and context.title == query.gt_title:
                title_rank = rank
            if context_rank is not None and title_rank is not None:
                break
        per_query.append({
            "query_id": query.query_id,
            "gt_title": query.gt_title,
            "context_rank": context_rank,
            "title_rank": title_rank,
        })

    count = len(resolved)
    metrics: dict[str, dict[int, Fraction]] = {"C": {}, "T": {}}
    for k in ks:
        c_hits = sum(1 for r in per_query
                     if r["context_rank"] is not None and r["context_rank"] <= k)
        t_hits = sum(1 for r in per_query
                     if r["title_rank"] is not None and r["title_rank"] <= k)
        metrics["C"][k] = Fraction(c_hits, count)
        metrics["T"][k] = Fraction(t_hits, count)

    total_seconds, ms_per_query = _latency(results)
    return EvalReport(
        dataset=dataset,
        mode=config.mode,
        k_values=ks,
        metric_names=SINGLE_HOP_METRICS,
        metrics=metrics,
        query_count=count,
        excluded_count=len(excluded),
        excluded_ids=excluded,
        total_seconds=total_seconds,
        ms_per_query=ms_per_query,
        store_composition=store.kind_counts(),
        per_query=per_query,
    )


def _evidence_matches(item: EvidenceItem, title: str, normalized_lower_text: str) -> bool:
    """Fact text containment, falling back to title equality for factless items."""
    if item.fact:
        needle = normalize_whitespace(item.fact).lower()
        return bool(needle) and needle in normalized_lower_text
    return bool(item.title) and item.title == title


def evaluate_multihop(
    queries: Sequence[MultiHopQuery],
    store: VectorStore,
    embedder: EmbedderBackend,
    config: RetrievalConfig,
    k_values: Sequence[int],
    dataset: str = "multihop",
    workers: int = 1,
) -> EvalReport:
    """Score Full@k (all evidence found) and Part@k (mean fraction found).

    An evidence item is found at rank r when the r-th retrieved chunk
    matches it; a query with any item that no indexed chunk can match is
    excluded and tallied.
    """
    ks = _validate_k_values(k_values)
    chunks = _distinct_chunks(store)
    chunk_norms = [(c.title, normalize_whitespace(c.text).lower()) for c in chunks]

    resolved: list[MultiHopQuery] = []
    excluded: list[str] = []
    for query in queries:
        ok = all(
            any(_evidence_matches(item, title, text) for title, text in chunk_norms)
            for item in query.evidence
        )
        if ok:
            resolved.append(query)
        else:
            excluded.append(query.query_id)
    if excluded:
        logger.warning("%d multi-hop quer%s had unresolvable evidence and were excluded",
                       len(excluded), "y" if len(excluded) == 1 else "ies")
    if not resolved:
        raise InvalidInput("no query's evidence resolves to indexed chunks")

    run_config = replace(config, k=max(ks))
    results = retrieve_many([q.question for q in resolved], store, embedder,
                            run_config, workers=workers)

    per_query: list[dict] = []
    for query, result in zip(resolved, results):
        normalized = [
            (c.title, normalize_whitespace(c.chunk_text).lower())
            for c in result.contexts
        ]
        found_ranks: list[int | None] = []
        for item in query.evidence:
            rank = None
            for r, (title, text) in enumerate(normalized, start=1):
                if _evidence_matches(item, title, text):
                    rank = r
                    break
            found_ranks.append(rank)
        per_query.append({"query_id": query.query_id, "found_ranks": found_ranks})

    count = len(resolved)
    metrics: dict[str, dict[int, Fraction]] = {"Full": {}, "Part": {}}
    for k in ks:
        full_hits = 0
        part_sum = Fraction(0)
        for record in per_query:
            ranks = record["found_ranks"]
            found = sum(1 for r in ranks if r is not None and r <= k)
            if found == len(ranks):
                full_hits += 1
            part_sum += Fraction(found, len(ranks))
        metrics["Full"][k] = Fraction(full_hits, count)
        metrics["Part"][k] = part_sum / count

    total_seconds, ms_per_query = _latency(results)
    return EvalReport(
        dataset=dataset,
        mode=config.mode,
        k_values=ks,
        metric_names=MULTI_HOP_METRICS,
        metrics=metrics,
        query_count=count,
        excluded_count=len(excluded),
        excluded_ids=excluded,
        total_seconds=total_seconds,
        ms_per_query=ms_per_query,
        store_composition=store.kind_counts(),
        per_query=per_query,
    )


@dataclass
class TitleStats:
    title_count: int
    mean: float
    median: float
    min: int
    max: int


@dataclass
class AnalysisResult:
    """Contexts-per-title distribution plus bucketed top-1 accuracy by mode."""

    stats: TitleStats
    per_title: list[tuple[str, int]]
    bucket_labels: list[str]
    bucket_rows: list[dict]
    modes: list[str]


def _bucket_label(lo: int, hi: int | None) -> str:
    if hi is None:
        return f"{lo - 1}+"
    if lo == hi:
        return str(lo)
    return f"{lo}-{hi}"


def _bucket_ranges(edges: Sequence[int]) -> list[tuple[int, int | None]]:
    sorted_edges = sorted(set(edges))
    if not sorted_edges or sorted_edges[0] < 1:
        raise InvalidInput("bucket edges must be positive integers")
    ranges: list[tuple[int, int | None]] = []
    lo = 1
    for edge in sorted_edges:
        ranges.append((lo, edge))
        lo = edge + 1
    ranges.append((lo, None))
    return ranges


def analyze_contexts_per_title(
    store: VectorStore,
    reports: Sequence[EvalReport],
    bucket_edges: Sequence[int] = DEFAULT_BUCKET_EDGES,
) -> AnalysisResult:
    """Relate per-title context counts to top-1 accuracy for each evaluated mode.

    Emits the contexts-per-title distribution (count, mean, median, min,
    max) and, for every bucket of that distribution, each mode's top-1
    accuracy plus the percentage improvement of quote over naive when both
    reports are present.  Reports must carry single-hop per-query records.
    """
    counts: dict[str, set[str]] = {}
    for doc in store.documents:
        counts.setdefault(doc.title, set()).add(doc.chunk_id)
    per_title = sorted((title, len(ids)) for title, ids in counts.items())
    if not per_title:
        raise InvalidInput("store holds no documents to analyze")
    values = [n for _, n in per_title]
    stats = TitleStats(
        title_count=len(values),
        mean=statistics.mean(values),
        median=float(statistics.median(values)),
        min=min(values),
        max=max(values),
    )

    ranges = _bucket_ranges(bucket_edges)
    labels = [_bucket_label(lo, hi) for lo, hi in ranges]
    count_by_title = dict(per_title)

    def bucket_of(n: int) -> int:
        for i, (lo, hi) in enumerate(ranges):
            if n >= lo and (hi is None or n <= hi):
                return i
        raise AssertionError("bucket ranges must cover all positive counts")

    modes = [r.mode for r in reports]
    rows: list[dict] = []
    for i, label in enumerate(labels):
        row: dict = {"bucket": label}
        hit_frac: dict[str, Fraction | None] = {}
        for report in reports:
            in_bucket = [
                rec for rec in report.per_query
                if rec.get("gt_title") in count_by_title
                and bucket_of(count_by_title[rec["gt_title"]]) == i
            ]
            if in_bucket:
                hits = sum(1 for rec in in_bucket if rec.get("context_rank") == 1)
                frac = Fraction(hits, len(in_bucket))
            else:
                frac = None
            hit_frac[report.mode] = frac
            row[f"queries_{report.mode}"] = len(in_bucket)
            row[f"top1_{report.mode}"] = (
                round(float(frac), 6) if frac is not None else None
            )
        naive = hit_frac.get("naive")
        quote = hit_frac.get("quote")
        if naive and quote is not None:
            improvement = (quote - naive) / naive * 100
            row["improvement_pct"] = round(float(improvement), 4)
        else:
            row["improvement_pct"] = None
        rows.append(row)

    return AnalysisResult(
        stats=stats,
        per_title=per_title,
        bucket_labels=labels,
        bucket_rows=rows,
        modes=modes,
    )


def write_metrics_csv(reports: Sequence[EvalReport], path: str | Path) -> None:
    """One row per report, with the familiar metric@k column names."""
    if not reports:
        raise InvalidInput("no reports to write")
    labels = reports[0].metric_labels()
    for report in reports[1:]:
        if report.metric_labels() != labels:
            raise InvalidInput("reports disagree on metrics or k values")
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["mode"] + labels + ["Time(s)", "ms/q"])
        for report in reports:
            flat = report.to_dict()["metrics"]
            writer.writerow(
                [report.mode]
                + [flat[label] for label in labels]
                + [round(report.total_seconds, 3), round(report.ms_per_query, 3)]
            )


def write_analysis_csv(analysis: AnalysisResult, path: str | Path) -> None:
    """Bucketed accuracy table; one row per contexts-per-title bucket."""
    columns = ["bucket"]
    for mode in analysis.modes:
        columns += [f"queries_{mode}", f"top1_{mode}"]
    columns.append("improvement_pct")
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns)
        writer.writeheader()
        for row in analysis.bucket_rows:
            writer.writerow({c: row.get(c) for c in columns})


def write_title_histogram_csv(analysis: AnalysisResult, path: str | Path) -> None:
    """Per-title context counts feeding the distribution figure."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["title", "contexts"])
        for title, count in analysis.per_title:
            writer.writerow([title, count])


def render_metrics_figure(reports: Sequence[EvalReport], path: str | Path) -> None:
    """Grouped bar chart of every metric@k for each report."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not reports:
        raise InvalidInput("no reports to plot")
    labels = reports[0].metric_labels()
    positions = range(len(labels))
    width = 0.8 / len(reports)

    fig, ax = plt.subplots(figsize=(max(6, len(labels) * 1.2), 4))
    for i, report in enumerate(reports):
        flat = report.to_dict()["metrics"]
        offsets = [p + i * width for p in positions]
        ax.bar(offsets, [flat[label] for label in labels], width=width,
               label=report.mode)
    ax.set_xticks([p + width * (len(reports) - 1) / 2 for p in positions])
    ax.set_xticklabels(labels)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("accuracy")
    ax.set_title(f"{reports[0].dataset}: retrieval accuracy by mode")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_analysis_figures(
    analysis: AnalysisResult,
    histogram_path: str | Path,
    improvement_path: str | Path,
) -> None:
    """Contexts-per-title histogram and per-bucket improvement bar chart."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.hist([n for _, n in analysis.per_title],
            bins=min(30, max(5, analysis.stats.max)), edgecolor="black")
    ax.set_xlabel("contexts per title")
    ax.set_ylabel("titles")
    ax.set_title(
        f"{analysis.stats.title_count} titles, mean {analysis.stats.mean:.2f}, "
        f"median {analysis.stats.median:.0f}"
    )
    fig.tight_layout()
    fig.savefig(histogram_path)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(7, 4))
    bars = [
        (row["bucket"], row["improvement_pct"])
        for row in analysis.bucket_rows
        if row.get("improvement_pct") is not None
    ]
    if bars:
        ax.bar([b for b, _ in bars], [v for _, v in bars], edgecolor="black")
    ax.set_xlabel("contexts per title")
    ax.set_ylabel("top-1 improvement over naive (%)")
    ax.set_title("quote vs naive top-1 accuracy by bucket")
    fig.tight_layout()
    fig.savefig(improvement_path)
    plt.close(fig)
