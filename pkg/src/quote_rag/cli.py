"""Command-line entry point: build, query, eval, analyze, inspect.

Configuration comes from flags, an optional JSON config file, and a few
environment variables, in that precedence order.  With mock backends every
command runs offline and deterministically; HTTP backends are configured
per provider in the config file, with API keys taken from the environment
variable the config names.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

from .corpus import (
    ChunkingPolicy,
    Document,
    group_key_map,
    load_corpus_jsonl,
    merge_similar_chunks,
    split_corpus,
)
from .datasets_eval import (
    DEFAULT_BUCKET_EDGES,
    EvalReport,
    analyze_contexts_per_title,
    evaluate_multihop,
    evaluate_single_hop,
    load_multihop,
    load_nq,
    load_squad,
    render_analysis_figures,
    render_metrics_figure,
    write_analysis_csv,
    write_metrics_csv,
    write_title_histogram_csv,
)
from .embedding import HttpEmbedderBackend, MockEmbedderBackend, embed_batch
from .errors import InvalidInput, LoadError, QuoteRagError
from .question_gen import (
    BUILTIN_TEMPLATES,
    FIXED,
    LLM_DECIDES,
    HttpChatBackend,
    MockGeneratorBackend,
    PromptTemplate,
    QuestionBudget,
    generate_for_chunks,
)
from .retrieval import (
    DEFAULT_HYDE_PROMPT,
    DEFAULT_MULTIPLIER,
    HYDE,
    HYDE_SEARCH_AUTO,
    MODES,
    RetrievalConfig,
    retrieve_many,
)
from .vector_store import (
    DOC_KINDS,
    QUESTION_CHUNK,
    IndexManifest,
    VectorStore,
    build_documents,
    load_group_map,
    load_index,
    save_group_map,
    save_index,
)

logger = logging.getLogger(__name__)

SINGLE_HOP_DATASETS = ("squad", "nq")
DATASETS = SINGLE_HOP_DATASETS + ("multihop",)

ENV_WORKERS = "QUOTE_RAG_WORKERS"
ENV_SEED = "QUOTE_RAG_SEED"


def load_config(path: str | None) -> dict:
    """Read the JSON config file; absent path means empty config."""
    if not path:
        return {}
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise LoadError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise LoadError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise LoadError(f"config {path} must hold a JSON object")
    return raw


def _setting(flag, cfg_value, env_name: str | None, default, cast: Callable = str):
    """Precedence: command-line flag, then config file, then environment, then default."""
    if flag is not None:
        return flag
    if cfg_value is not None:
        return cfg_value
    if env_name:
        env = os.environ.get(env_name)
        if env:
            return cast(env)
    return default


def make_embedder(config: dict, seed: str = ""):
    """Build the embedder backend named by config["embedder"] (mock by default)."""
    cfg = config.get("embedder", {})
    provider = cfg.get("provider", "mock")
    if provider == "mock":
        return MockEmbedderBackend(
            dimension=int(cfg.get("dimension", 32)),
            salt=seed or cfg.get("salt", ""),
        )
    if provider == "http":
        for key in ("base_url", "model", "dimension"):
            if key not in cfg:
                raise InvalidInput(f"http embedder config requires {key!r}")
        return HttpEmbedderBackend(
            base_url=cfg["base_url"],
            model=cfg["model"],
            dimension=int(cfg["dimension"]),
            api_key_env=cfg.get("api_key_env"),
            timeout_seconds=float(cfg.get("timeout_seconds", 60)),
        )
    raise InvalidInput(f"unknown embedder provider: {provider!r}")


def make_generator(config: dict):
    """Build the generator backend named by config["generator"] (mock by default)."""
    cfg = config.get("generator", {})
    provider = cfg.get("provider", "mock")
    if provider == "mock":
        script = cfg.get("script")
        if script is not None and not isinstance(script, dict):
            raise InvalidInput("mock generator script must be an object")
        return MockGeneratorBackend(
            default_count=int(cfg.get("default_count", 3)),
            delay_ms=float(cfg.get("delay_ms", 0)),
            script=script,
        )
    if provider == "http":
        for key in ("base_url", "model"):
            if key not in cfg:
                raise InvalidInput(f"http generator config requires {key!r}")
        return HttpChatBackend(
            base_url=cfg["base_url"],
            model=cfg["model"],
            api_key_env=cfg.get("api_key_env"),
            timeout_seconds=float(cfg.get("timeout_seconds", 60)),
            temperature=float(cfg.get("temperature", 0)),
        )
    raise InvalidInput(f"unknown generator provider: {provider!r}")


def embedder_for_index(manifest: IndexManifest, config: dict, seed: str = ""):
    """Embedder for querying an existing index.

    An explicit embedder config wins; otherwise a mock-built index carries
    enough provenance (dim and seed) to reconstruct its own embedder.  The
    store still verifies identity on every query, so a wrong choice here
    surfaces as ManifestMismatch rather than silent nonsense.
    """
    if "embedder" in config or seed:
        return make_embedder(config, seed)
    if manifest.embedder_id.startswith("mock-embedder-"):
        return MockEmbedderBackend(dimension=manifest.dim, salt=manifest.seed)
    raise LoadError(
        f"index was built with {manifest.embedder_id!r}; "
        "provide a matching embedder config"
    )


def resolve_template(name: str | None, config: dict) -> PromptTemplate:
    chosen = name or config.get("template", "nq_squad_basic")
    custom = config.get("templates", {})
    if chosen in custom:
        return PromptTemplate(name=chosen, body=custom[chosen])
    if chosen in BUILTIN_TEMPLATES:
        return BUILTIN_TEMPLATES[chosen]
    raise InvalidInput(
        f"unknown template {chosen!r}; built-ins: {sorted(BUILTIN_TEMPLATES)}"
    )


def resolve_budget(questions: str | None, config: dict) -> QuestionBudget:
    raw = questions if questions is not None else config.get("budget")
    if raw is None or raw == "" or str(raw) in (LLM_DECIDES, "llm"):
        return QuestionBudget(mode=LLM_DECIDES)
    if isinstance(raw, dict):
        if raw.get("mode") == FIXED:
            return QuestionBudget(mode=FIXED, count=int(raw["count"]))
        return QuestionBudget(mode=LLM_DECIDES)
    try:
        return QuestionBudget(mode=FIXED, count=int(raw))
    except ValueError:
        raise InvalidInput(
            f"--questions takes a count or 'llm_decides', got {raw!r}"
        ) from None


def parse_int_list(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise InvalidInput(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise InvalidInput("expected at least one integer")
    return values


@dataclass
class BuildReport:
    """What one index build produced, and how long it took."""

    index_path: str
    index_seconds: float
    document_count: int
    chunk_count: int
    group_count: int | None
    question_count: int
    indexed_doc_count: int
    malformed_lines: int
    empty_chunks: int
    failed_chunks: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "index_path": self.index_path,
            "index_seconds": round(self.index_seconds, 3),
            "document_count": self.document_count,
            "chunk_count": self.chunk_count,
            "group_count": self.group_count,
            "question_count": self.question_count,
            "indexed_doc_count": self.indexed_doc_count,
            "malformed_lines": self.malformed_lines,
            "empty_chunks": self.empty_chunks,
            "failed_chunks": list(self.failed_chunks),
        }


def build_index(
    documents: Sequence[Document],
    policy: ChunkingPolicy,
    generator,
    embedder,
    template: PromptTemplate,
    budget: QuestionBudget,
    composition: Sequence[str],
    index_path: str | Path,
    *,
    include_answers: bool = False,
    merge_threshold: float | None = None,
    merge_scope: str = "title",
    workers: int = 1,
    retries: int = 3,
    on_error: str = "abort",
    audit_path: str | Path | None = None,
    seed: str = "",
    batch_size: int = 64,
) -> BuildReport:
    """Split, generate questions, embed, and persist one index directory.

    Chunk merging (when a threshold is given) writes a group map companion
    file that retrieval uses as its deduplication key.  The audit file, if
    requested, records every prompt and raw completion in chunk order.
    """
    started = time.perf_counter()
    chunks = split_corpus(documents, policy)

    group_map = None
    group_count = None
    if merge_threshold is not None:
        groups = merge_similar_chunks(chunks, threshold=merge_threshold,
                                      scope=merge_scope)
        group_map = group_key_map(groups)
        group_count = len(groups)

    audit_handle = None
    audit = None
    if audit_path is not None:
        audit_handle = open(audit_path, "w", encoding="utf-8")

        def audit(chunk_id: str, prompt: str, completion: str) -> None:
            audit_handle.write(json.dumps({
                "chunk_id": chunk_id,
                "prompt": prompt,
                "completion": completion,
            }, ensure_ascii=False) + "\n")

    try:
        generation = generate_for_chunks(
            chunks, generator, template, budget,
            workers=workers, retries=retries, on_error=on_error, audit=audit,
        )
    finally:
        if audit_handle is not None:
            audit_handle.close()

    docs = build_documents(chunks, generation.questions, composition,
                           include_answers=include_answers)
    if not docs:
        raise InvalidInput("build produced no indexable documents")

    vectors = embed_batch(embedder, [d.embed_text for d in docs],
                          batch_size=batch_size)

    budget_text = (f"{FIXED}:{budget.count}" if budget.mode == FIXED else LLM_DECIDES)
    manifest = IndexManifest(
        embedder_id=embedder.identity,
        dim=embedder.dimension,
        generator_id=generator.identity,
        template_name=template.name,
        budget=budget_text,
        composition=list(composition),
        created_at=datetime.now(timezone.utc).isoformat(),
        chunk_count=len(chunks),
        seed=seed,
    )
    store = VectorStore(manifest)
    store.add_documents(docs, vectors)
    save_index(store, index_path)
    if group_map is not None:
        save_group_map(index_path, group_map)

    return BuildReport(
        index_path=str(index_path),
        index_seconds=time.perf_counter() - started,
        document_count=len(documents),
        chunk_count=len(chunks),
        group_count=group_count,
        question_count=sum(len(qs) for qs in generation.questions),
        indexed_doc_count=len(store),
        malformed_lines=generation.malformed_lines,
        empty_chunks=generation.empty_chunks,
        failed_chunks=generation.failed_chunk_ids,
    )


def _load_dataset(dataset: str, path: str):
    if dataset == "squad":
        return load_squad(path)
    if dataset == "nq":
        return load_nq(path)
    if dataset == "multihop":
        return load_multihop(path)
    raise InvalidInput(f"unknown dataset: {dataset!r}")


def _dataset_policy(dataset: str | None, args, config: dict) -> ChunkingPolicy:
    cfg = config.get("chunking", {})
    mode = _setting(args.chunk_mode, cfg.get("mode"), None,
                    "sentence_block" if dataset == "multihop" else "paragraph")
    per_block = int(_setting(args.sentences_per_block,
                             cfg.get("sentences_per_block"), None, 4))
    return ChunkingPolicy(mode=mode, sentences_per_block=per_block)


def _workers(args, config: dict) -> int:
    return int(_setting(args.workers, config.get("workers"), ENV_WORKERS,
                        os.cpu_count() or 1, cast=int))


def _seed(args, config: dict) -> str:
    return str(_setting(args.seed, config.get("seed"), ENV_SEED, ""))


def cmd_build(args) -> int:
    config = load_config(args.config)
    if args.data and not args.dataset:
        raise InvalidInput("--data requires --dataset")
    if args.dataset:
        if not args.data:
            raise InvalidInput("--dataset requires --data")
        documents, _ = _load_dataset(args.dataset, args.data)
    else:
        corpus_path = _setting(args.corpus, config.get("corpus"), None, None)
        if not corpus_path:
            raise InvalidInput("build needs --corpus or --dataset/--data")
        documents = load_corpus_jsonl(corpus_path)
    if not documents:
        raise InvalidInput("corpus contains no documents")

    index_path = _setting(args.index, config.get("index"), None, None)
    if not index_path:
        raise InvalidInput("build needs --index")

    seed = _seed(args, config)
    policy = _dataset_policy(args.dataset, args, config)
    template = resolve_template(args.template, config)
    budget = resolve_budget(args.questions, config)
    composition = (
        [part.strip() for part in args.composition.split(",") if part.strip()]
        if args.composition
        else list(config.get("composition", [QUESTION_CHUNK]))
    )
    merge_cfg = config.get("merge", {})
    merge_threshold = args.merge_threshold
    if merge_threshold is None and merge_cfg.get("enabled"):
        merge_threshold = float(merge_cfg.get("threshold", 0.9))
    merge_scope = args.merge_scope or merge_cfg.get("scope", "title")

    report = build_index(
        documents,
        policy,
        make_generator(config),
        make_embedder(config, seed),
        template,
        budget,
        composition,
        index_path,
        include_answers=bool(args.include_answers
                             or config.get("include_answers", False)),
        merge_threshold=merge_threshold,
        merge_scope=merge_scope,
        workers=_workers(args, config),
        retries=int(config.get("retries", 3)),
        on_error=args.on_error,
        audit_path=args.audit or config.get("audit"),
        seed=seed,
    )
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def _retrieval_config(args, config: dict, mode: str, k: int,
                      group_map: dict[str, str] | None) -> RetrievalConfig:
    retrieval_cfg = config.get("retrieval", {})
    m = int(_setting(args.m, retrieval_cfg.get("m"), None, DEFAULT_MULTIPLIER))
    hyde_backend = make_generator(config) if mode == HYDE else None
    return RetrievalConfig(
        mode=mode,
        k=k,
        multiplier_m=m,
        hyde_backend=hyde_backend,
        hyde_prompt=retrieval_cfg.get("hyde_prompt", DEFAULT_HYDE_PROMPT),
        hyde_search=retrieval_cfg.get("hyde_search", HYDE_SEARCH_AUTO),
        group_map=group_map,
    )


def cmd_query(args) -> int:
    config = load_config(args.config)
    store = load_index(args.index)
    group_map = load_group_map(args.index)
    embedder = embedder_for_index(store.manifest, config, _seed(args, config))
    rconfig = _retrieval_config(args, config, args.mode, args.k, group_map)

    if args.query_file:
        try:
            with open(args.query_file, encoding="utf-8") as handle:
                queries = [line.strip() for line in handle if line.strip()]
        except OSError as exc:
            raise LoadError(f"cannot read query file {args.query_file}: {exc}") from exc
    elif args.query:
        queries = [args.query]
    else:
        raise InvalidInput("query needs QUERY text or --query-file")

    results = retrieve_many(queries, store, embedder, rconfig,
                            workers=_workers(args, config))
    for result in results:
        print(json.dumps(result.to_dict(), ensure_ascii=False))
    return 0


def cmd_eval(args) -> int:
    config = load_config(args.config)
    documents, queries = _load_dataset(args.dataset, args.data)
    store = load_index(args.index)
    group_map = load_group_map(args.index)
    embedder = embedder_for_index(store.manifest, config, _seed(args, config))
    k_values = sorted(parse_int_list(args.k))
    rconfig = _retrieval_config(args, config, args.mode, max(k_values), group_map)
    workers = _workers(args, config)

    if args.dataset in SINGLE_HOP_DATASETS:
        report = evaluate_single_hop(queries, store, embedder, rconfig, k_values,
                                     dataset=args.dataset, workers=workers)
    else:
        report = evaluate_multihop(queries, store, embedder, rconfig, k_values,
                                   dataset=args.dataset, workers=workers)

    flat = report.to_dict()["metrics"]
    print(f"dataset={report.dataset} mode={report.mode} "
          f"queries={report.query_count} excluded={report.excluded_count}")
    print("  ".join(f"{label} {flat[label]:.4f}" for label in report.metric_labels()))
    print(f"Time(s) {report.total_seconds:.3f}  ms/q {report.ms_per_query:.3f}")

    if args.report:
        Path(args.report).write_text(
            json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
    if args.csv:
        write_metrics_csv([report], args.csv)
        if not args.no_figures:
            render_metrics_figure([report], Path(args.csv).with_suffix(".png"))
    return 0


def cmd_analyze(args) -> int:
    store = load_index(args.index)
    reports = []
    for path in args.reports:
        try:
            reports.append(EvalReport.from_dict(
                json.loads(Path(path).read_text(encoding="utf-8"))
            ))
        except OSError as exc:
            raise LoadError(f"cannot read report {path}: {exc}") from exc
        except (json.JSONDecodeError, KeyError) as exc:
            raise LoadError(f"report {path} is malformed: {exc}") from exc

    edges = parse_int_list(args.buckets) if args.buckets else DEFAULT_BUCKET_EDGES
    analysis = analyze_contexts_per_title(store, reports, edges)

    stats = analysis.stats
    print(f"titles={stats.title_count} contexts/title mean={stats.mean:.2f} "
          f"median={stats.median:.0f} min={stats.min} max={stats.max}")
    for row in analysis.bucket_rows:
        cells = [f"bucket {row['bucket']:>8}"]
        for mode in analysis.modes:
            acc = row.get(f"top1_{mode}")
            cells.append(f"{mode} top1 "
                         + (f"{acc:.4f}" if acc is not None else "-"))
        if row.get("improvement_pct") is not None:
            cells.append(f"improvement {row['improvement_pct']:+.2f}%")
        print("  ".join(cells))

    if args.csv:
        csv_path = Path(args.csv)
        write_analysis_csv(analysis, csv_path)
        titles_csv = csv_path.with_name(csv_path.stem + "_titles.csv")
        write_title_histogram_csv(analysis, titles_csv)
        if not args.no_figures:
            render_analysis_figures(
                analysis,
                csv_path.with_name(csv_path.stem + "_histogram.png"),
                csv_path.with_name(csv_path.stem + "_improvement.png"),
            )
    return 0


def cmd_inspect(args) -> int:
    store = load_index(args.index)
    group_map = load_group_map(args.index)
    summary = {
        "manifest": store.manifest.to_dict(),
        "kind_counts": store.kind_counts(),
        "distinct_chunks": len({d.chunk_id for d in store.documents}),
        "groups": (len(set(group_map.values())) if group_map else None),
    }
    print(json.dumps(summary, indent=2))
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--workers", type=int, default=None,
                        help="parallel workers (1 = fully serial)")
    parser.add_argument("--seed", default=None,
                        help="mock embedder seed salt, recorded in the manifest")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quote-rag",
        description="Question-indexed retrieval: build, query, and evaluate.",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build", help="build an index from a corpus or dataset")
    _add_common(p_build)
    p_build.add_argument("--corpus", help="corpus JSONL (doc_id, title, body)")
    p_build.add_argument("--dataset", choices=DATASETS,
                         help="build from a benchmark file instead of a corpus")
    p_build.add_argument("--data", help="benchmark file for --dataset")
    p_build.add_argument("--index", help="output index directory")
    p_build.add_argument("--template", help="prompt template name")
    p_build.add_argument("--questions",
                         help="questions per chunk: a count, or 'llm_decides'")
    p_build.add_argument("--composition",
                         help=f"comma list from {', '.join(DOC_KINDS)}")
    p_build.add_argument("--include-answers", action="store_true",
                         help="append generated answers to embedded question text")
    p_build.add_argument("--chunk-mode", choices=("paragraph", "sentence_block"),
                         default=None)
    p_build.add_argument("--sentences-per-block", type=int, default=None)
    p_build.add_argument("--merge-threshold", type=float, default=None,
                         help="enable near-duplicate chunk merging at this Jaccard")
    p_build.add_argument("--merge-scope", choices=("title", "corpus"), default=None)
    p_build.add_argument("--on-error", choices=("abort", "skip"), default="abort",
                         help="what to do when a chunk's generation fails")
    p_build.add_argument("--audit", help="JSONL file recording prompts and completions")
    p_build.set_defaults(func=cmd_build)

    p_query = sub.add_parser("query", help="run one query or a file of queries")
    _add_common(p_query)
    p_query.add_argument("query", nargs="?", help="query text")
    p_query.add_argument("--query-file", help="file with one query per line")
    p_query.add_argument("--index", required=True)
    p_query.add_argument("--mode", choices=MODES, default="quote")
    p_query.add_argument("--k", type=int, default=5)
    p_query.add_argument("--m", type=int, default=None,
                         help=f"over-retrieval multiplier (default {DEFAULT_MULTIPLIER})")
    p_query.set_defaults(func=cmd_query)

    p_eval = sub.add_parser("eval", help="run a benchmark and report metrics")
    _add_common(p_eval)
    p_eval.add_argument("--dataset", choices=DATASETS, required=True)
    p_eval.add_argument("--data", required=True, help="benchmark file")
    p_eval.add_argument("--index", required=True)
    p_eval.add_argument("--mode", choices=MODES, default="quote")
    p_eval.add_argument("--k", default="1,5,10,20",
                        help="comma-separated k values")
    p_eval.add_argument("--m", type=int, default=None)
    p_eval.add_argument("--report", help="write the full JSON report here")
    p_eval.add_argument("--csv", help="write a metrics CSV (and figure) here")
    p_eval.add_argument("--no-figures", action="store_true",
                        help="skip rendering the metrics figure next to the CSV")
    p_eval.set_defaults(func=cmd_eval)

    p_analyze = sub.add_parser(
        "analyze", help="relate contexts-per-title to top-1 accuracy across modes"
    )
    p_analyze.add_argument("--index", required=True)
    p_analyze.add_argument("--reports", nargs="+", required=True,
                           help="eval report JSON files (same dataset, any modes)")
    p_analyze.add_argument("--buckets", default=None,
                           help="bucket edges, e.g. 1,5,20,50,100")
    p_analyze.add_argument("--csv", help="write the bucket table CSV here")
    p_analyze.add_argument("--no-figures", action="store_true")
    p_analyze.set_defaults(func=cmd_analyze)

    p_inspect = sub.add_parser("inspect", help="dump an index's manifest and counts")
    p_inspect.add_argument("--index", required=True)
    p_inspect.set_defaults(func=cmd_inspect)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except QuoteRagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
