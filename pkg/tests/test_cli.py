import csv
import json
from fractions import Fraction
from pathlib import Path

import pytest

from quote_rag import EvalReport
from quote_rag.cli import main

PNG_MAGIC = b"\x89PNG"


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    monkeypatch.delenv("QUOTE_RAG_SEED", raising=False)
    monkeypatch.delenv("QUOTE_RAG_WORKERS", raising=False)


@pytest.fixture
def small_corpus(fixtures_dir):
    return str(fixtures_dir / "corpus_small.jsonl")


@pytest.fixture
def small_index(tmp_path, capsys, small_corpus):
    idx = tmp_path / "idx"
    code, _, err = run_cli(
        ["build", "--corpus", small_corpus, "--index", str(idx),
         "--questions", "2", "--seed", "s1",
         "--composition", "question_chunk,bare_chunk"],
        capsys,
    )
    assert code == 0, err
    return str(idx)


# ------------------------------------------------------------------- build


def test_build_reports_counts(tmp_path, capsys, small_corpus):
    idx = tmp_path / "idx"
    code, out, err = run_cli(
        ["build", "--corpus", small_corpus, "--index", str(idx),
         "--questions", "2", "--seed", "s1",
         "--composition", "question_chunk,bare_chunk"],
        capsys,
    )
    assert code == 0, err
    report = json.loads(out)
    assert report["document_count"] == 3
    assert report["chunk_count"] == 6
    assert report["question_count"] == 12
    assert report["indexed_doc_count"] == 18
    assert report["group_count"] is None
    assert report["malformed_lines"] == 0
    assert report["failed_chunks"] == []
    for name in ("manifest.json", "docs.jsonl", "vectors.bin"):
        assert (idx / name).is_file()


def test_build_rejects_empty_corpus(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    code, _, err = run_cli(
        ["build", "--corpus", str(empty), "--index", str(tmp_path / "idx")],
        capsys,
    )
    assert code == 1
    assert err.startswith("error:")


def test_build_argument_validation(tmp_path, capsys, small_corpus):
    code, _, err = run_cli(["build", "--index", str(tmp_path / "idx")], capsys)
    assert code == 1 and "error:" in err
    code, _, err = run_cli(
        ["build", "--dataset", "squad", "--index", str(tmp_path / "idx")],
        capsys,
    )
    assert code == 1 and "error:" in err
    code, _, err = run_cli(["build", "--corpus", small_corpus], capsys)
    assert code == 1 and "error:" in err


def test_rebuild_is_byte_identical(tmp_path, capsys, small_corpus):
    paths = []
    for name in ("one", "two"):
        idx = tmp_path / name
        code, _, err = run_cli(
            ["build", "--corpus", small_corpus, "--index", str(idx),
             "--questions", "2", "--seed", "s1"],
            capsys,
        )
        assert code == 0, err
        paths.append(idx)
    first, second = paths
    assert (first / "docs.jsonl").read_bytes() == (second / "docs.jsonl").read_bytes()
    assert (first / "vectors.bin").read_bytes() == (second / "vectors.bin").read_bytes()


def test_build_audit_trail(tmp_path, capsys, small_corpus):
    audit = tmp_path / "audit.jsonl"
    code, _, err = run_cli(
        ["build", "--corpus", small_corpus, "--index", str(tmp_path / "idx"),
         "--questions", "2", "--audit", str(audit)],
        capsys,
    )
    assert code == 0, err
    records = [json.loads(line) for line in audit.read_text().splitlines()]
    assert len(records) == 6
    assert len({r["chunk_id"] for r in records}) == 6
    for record in records:
        assert "Text:" in record["prompt"]
        assert record["completion"].strip()


def test_seed_precedence(tmp_path, capsys, monkeypatch, small_corpus):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": "cfg-s"}))

    def built_seed(name, *extra):
        idx = tmp_path / name
        code, _, err = run_cli(
            ["build", "--corpus", small_corpus, "--index", str(idx),
             "--questions", "1", *extra],
            capsys,
        )
        assert code == 0, err
        return json.loads((idx / "manifest.json").read_text())["seed"]

    assert built_seed("i-default") == ""
    monkeypatch.setenv("QUOTE_RAG_SEED", "env-s")
    assert built_seed("i-env") == "env-s"
    assert built_seed("i-cfg", "--config", str(cfg)) == "cfg-s"
    assert built_seed("i-flag", "--config", str(cfg), "--seed", "flag-s") == "flag-s"


def test_bad_config_file(tmp_path, capsys, small_corpus):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{broken")
    code, _, err = run_cli(
        ["build", "--corpus", small_corpus, "--index", str(tmp_path / "idx"),
         "--config", str(cfg)],
        capsys,
    )
    assert code == 1
    assert "error:" in err


# ------------------------------------------------------------------- query


def test_query_emits_json_lines(small_index, capsys):
    code, out, err = run_cli(
        ["query", "primary mirror", "--index", small_index, "--k", "3"],
        capsys,
    )
    assert code == 0, err
    lines = out.strip().splitlines()
    assert len(lines) == 1
    result = json.loads(lines[0])
    assert result["query"] == "primary mirror"
    assert 1 <= len(result["contexts"]) <= 3
    scores = [c["score"] for c in result["contexts"]]
    assert scores == sorted(scores, reverse=True)
    for context in result["contexts"]:
        assert set(context) == {"chunk_id", "title", "chunk_text", "score",
                                "matched_question"}
    assert result["elapsed_ms"] >= 0


def test_query_file_runs_each_line(small_index, tmp_path, capsys):
    queries = tmp_path / "q.txt"
    queries.write_text("asteroid survey\n\ngreystone steel\n")
    code, out, err = run_cli(
        ["query", "--query-file", str(queries), "--index", small_index],
        capsys,
    )
    assert code == 0, err
    lines = [json.loads(line) for line in out.strip().splitlines()]
    assert [r["query"] for r in lines] == ["asteroid survey", "greystone steel"]


def test_query_requires_text_or_file(small_index, capsys):
    code, _, err = run_cli(["query", "--index", small_index], capsys)
    assert code == 1
    assert "error:" in err


def test_query_hyde_mode(small_index, capsys):
    code, out, err = run_cli(
        ["query", "what does the observatory survey", "--index", small_index,
         "--mode", "hyde", "--k", "2"],
        capsys,
    )
    assert code == 0, err
    result = json.loads(out.strip())
    assert len(result["contexts"]) == 2


def test_missing_index_is_an_error(tmp_path, capsys):
    missing = str(tmp_path / "nope")
    for argv in (
        ["query", "x", "--index", missing],
        ["inspect", "--index", missing],
        ["eval", "--dataset", "squad", "--data", "also-missing.json",
         "--index", missing],
    ):
        code, _, err = run_cli(argv, capsys)
        assert code == 1
        assert err.startswith("error:")


# ----------------------------------------------------------------- inspect


def test_inspect_summarizes_index(small_index, capsys):
    code, out, err = run_cli(["inspect", "--index", small_index], capsys)
    assert code == 0, err
    summary = json.loads(out)
    assert summary["manifest"]["seed"] == "s1"
    assert summary["kind_counts"] == {"question_chunk": 12, "bare_chunk": 6}
    assert summary["distinct_chunks"] == 6
    assert summary["groups"] is None


def test_inspect_reports_groups_after_merge_build(tmp_path, capsys, small_corpus):
    idx = tmp_path / "idx"
    code, _, err = run_cli(
        ["build", "--corpus", small_corpus, "--index", str(idx),
         "--questions", "1", "--merge-threshold", "0.9"],
        capsys,
    )
    assert code == 0, err
    code, out, _ = run_cli(["inspect", "--index", str(idx)], capsys)
    assert code == 0
    assert json.loads(out)["groups"] == 6  # nothing similar, all singletons


# -------------------------------------------------------------------- eval


@pytest.fixture(scope="module")
def lookalike_run(tmp_path_factory, fixtures_dir):
    """Build a question index over the lookalike squad fixture via the CLI.

    The scripted generator emits, for every paragraph, exactly the benchmark
    question that targets it, so question-matching retrieval can be perfect
    while bare-chunk retrieval has to tell near-identical paragraphs apart.
    """
    root = tmp_path_factory.mktemp("lookalike")
    data = fixtures_dir / "confusable_squad.json"
    raw = json.loads(data.read_text())
    script = {}
    for article in raw["data"]:
        for paragraph in article["paragraphs"]:
            qa = paragraph["qas"][0]
            script[paragraph["context"]] = (
                f"{qa['question']} {qa['answers'][0]['text']}"
            )
    config = root / "config.json"
    config.write_text(json.dumps({
        "seed": "s5",
        "embedder": {"provider": "mock", "dimension": 32},
        "generator": {"provider": "mock", "script": script},
        "composition": ["question_only", "bare_chunk"],
    }))

    index = root / "idx"
    assert main(["build", "--dataset", "squad", "--data", str(data),
                 "--index", str(index), "--config", str(config)]) == 0

    reports = {}
    for mode in ("naive", "quote"):
        report = root / f"{mode}.json"
        assert main(["eval", "--dataset", "squad", "--data", str(data),
                     "--index", str(index), "--config", str(config),
                     "--mode", mode, "--k", "1,5,10", "--report", str(report),
                     "--no-figures"]) == 0
        reports[mode] = report
    return {"index": str(index), "data": str(data), "config": str(config),
            "reports": reports}


def test_eval_stdout_and_report_file(lookalike_run, capsys):
    code, out, err = run_cli(
        ["eval", "--dataset", "squad", "--data", lookalike_run["data"],
         "--index", lookalike_run["index"], "--config", lookalike_run["config"],
         "--mode", "naive", "--k", "5,1"],
        capsys,
    )
    assert code == 0, err
    lines = out.strip().splitlines()
    assert lines[0] == "dataset=squad mode=naive queries=12 excluded=0"
    for label in ("C@1", "C@5", "T@1", "T@5"):
        assert label in lines[1]
    assert "C@10" not in lines[1]
    assert lines[2].startswith("Time(s)")

    report = EvalReport.from_dict(
        json.loads(lookalike_run["reports"]["naive"].read_text())
    )
    assert report.k_values == [1, 5, 10]
    assert report.query_count == 12
    assert len(report.per_query) == 12


def test_quote_mode_beats_naive_on_lookalike_paragraphs(lookalike_run):
    naive = EvalReport.from_dict(
        json.loads(lookalike_run["reports"]["naive"].read_text())
    )
    quote = EvalReport.from_dict(
        json.loads(lookalike_run["reports"]["quote"].read_text())
    )
    assert quote.metrics["C"][1] == Fraction(1)
    assert naive.metrics["C"][1] < Fraction(1)
    assert quote.metrics["C"][1] > naive.metrics["C"][1]
    raw = json.loads(lookalike_run["reports"]["quote"].read_text())
    assert raw["exact"]["C@1"] == "1"


def test_eval_csv_and_figure_outputs(lookalike_run, tmp_path, capsys):
    csv_path = tmp_path / "out" / "metrics.csv"
    csv_path.parent.mkdir()
    code, _, err = run_cli(
        ["eval", "--dataset", "squad", "--data", lookalike_run["data"],
         "--index", lookalike_run["index"], "--config", lookalike_run["config"],
         "--mode", "quote", "--k", "1,5", "--csv", str(csv_path)],
        capsys,
    )
    assert code == 0, err
    rows = list(csv.reader(csv_path.open()))
    assert rows[0] == ["mode", "C@1", "C@5", "T@1", "T@5", "Time(s)", "ms/q"]
    assert rows[1][0] == "quote"
    assert rows[1][1] == "1.0"
    figure = csv_path.with_suffix(".png")
    assert figure.read_bytes()[:4] == PNG_MAGIC

    bare_csv = tmp_path / "out" / "nofig.csv"
    code, _, _ = run_cli(
        ["eval", "--dataset", "squad", "--data", lookalike_run["data"],
         "--index", lookalike_run["index"], "--config", lookalike_run["config"],
         "--mode", "quote", "--k", "1", "--csv", str(bare_csv), "--no-figures"],
        capsys,
    )
    assert code == 0
    assert bare_csv.is_file()
    assert not bare_csv.with_suffix(".png").exists()


def test_eval_rejects_bad_k(lookalike_run, capsys):
    code, _, err = run_cli(
        ["eval", "--dataset", "squad", "--data", lookalike_run["data"],
         "--index", lookalike_run["index"], "--config", lookalike_run["config"],
         "--k", "one,two"],
        capsys,
    )
    assert code == 1
    assert "error:" in err


# ----------------------------------------------------------------- analyze


def test_analyze_cli_outputs(lookalike_run, tmp_path, capsys):
    csv_path = tmp_path / "analysis.csv"
    code, out, err = run_cli(
        ["analyze", "--index", lookalike_run["index"],
         "--reports", str(lookalike_run["reports"]["naive"]),
         str(lookalike_run["reports"]["quote"]),
         "--csv", str(csv_path)],
        capsys,
    )
    assert code == 0, err
    assert "titles=4" in out
    assert "mean=3.00" in out

    assert csv_path.is_file()
    titles = list(csv.reader((tmp_path / "analysis_titles.csv").open()))
    assert titles[0] == ["title", "contexts"]
    assert len(titles) == 5
    assert all(row[1] == "3" for row in titles[1:])
    for name in ("analysis_histogram.png", "analysis_improvement.png"):
        assert (tmp_path / name).read_bytes()[:4] == PNG_MAGIC


def test_analyze_rejects_malformed_report(lookalike_run, tmp_path, capsys):
    bogus = tmp_path / "r.json"
    bogus.write_text("{}")
    code, _, err = run_cli(
        ["analyze", "--index", lookalike_run["index"], "--reports", str(bogus)],
        capsys,
    )
    assert code == 1
    assert "error:" in err
