import json
import threading
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quote_rag import (
    BUILTIN_TEMPLATES,
    Chunk,
    GeneratedQA,
    GenerationError,
    InvalidInput,
    MockGeneratorBackend,
    PromptTemplate,
    QuestionBudget,
    TemplateError,
    generate_questions,
    parse_qa_lines,
    render_prompt,
)
from quote_rag.question_gen import (
    FIXED,
    LLM_DECIDES,
    ParsedCompletion,
    format_qa_lines,
    generate_for_chunks,
)

TEMPLATE_NAMES = ("nq_squad_basic", "nq_squad_complex",
                  "multihop_basic", "multihop_complex")


def _chunk(text, chunk_id="c1"):
    return Chunk(chunk_id=chunk_id, doc_id="d1", title="T", text=text, ordinal=0)


@pytest.mark.parametrize("name", TEMPLATE_NAMES)
def test_builtin_template_bodies_match_golden(name, golden_dir):
    golden = (golden_dir / f"prompt_{name}.txt").read_text(encoding="utf-8")
    assert BUILTIN_TEMPLATES[name].body == golden


def test_render_replaces_only_the_placeholder(golden_dir):
    body = (golden_dir / "prompt_nq_squad_basic.txt").read_text(encoding="utf-8")
    chunk = _chunk("Chunk body text.")
    rendered = render_prompt(BUILTIN_TEMPLATES["nq_squad_basic"], chunk,
                             QuestionBudget(mode=LLM_DECIDES))
    assert rendered == body.replace("{chunk_text}", chunk.text)
    assert rendered.endswith("Text:Chunk body text.")


def test_render_golden_file(golden_dir, small_chunks):
    cedar = next(c for c in small_chunks if c.doc_id == "cedar-archive")
    rendered = render_prompt(BUILTIN_TEMPLATES["multihop_complex"], cedar,
                             QuestionBudget(mode=LLM_DECIDES))
    golden = (golden_dir / "prompt_multihop_complex_rendered.txt").read_text(
        encoding="utf-8"
    )
    assert rendered == golden


def test_render_fixed_prepends_exact_count_directive(golden_dir):
    body = (golden_dir / "prompt_nq_squad_basic.txt").read_text(encoding="utf-8")
    chunk = _chunk("Facts here.")
    rendered = render_prompt(BUILTIN_TEMPLATES["nq_squad_basic"], chunk,
                             QuestionBudget(mode=FIXED, count=5))
    directive = ("Generate exactly 5 questions to properly capture "
                 "all the important parts of the text.")
    assert rendered == directive + "\n" + body.replace("{chunk_text}", chunk.text)


def test_render_fixed_fills_count_placeholder_in_place():
    template = PromptTemplate(name="counted",
                              body="Make {num_questions} items. Text:{chunk_text}")
    rendered = render_prompt(template, _chunk("Body."),
                             QuestionBudget(mode=FIXED, count=4))
    assert rendered == "Make 4 items. Text:Body."


def test_render_llm_decides_rejects_count_placeholder():
    template = PromptTemplate(name="counted",
                              body="Make {num_questions} items. Text:{chunk_text}")
    with pytest.raises(TemplateError):
        render_prompt(template, _chunk("Body."), QuestionBudget(mode=LLM_DECIDES))


def test_template_requires_single_chunk_placeholder():
    with pytest.raises(TemplateError):
        PromptTemplate(name="none", body="no placeholder")
    with pytest.raises(TemplateError):
        PromptTemplate(name="two", body="{chunk_text} and {chunk_text}")


def test_budget_validation():
    with pytest.raises(InvalidInput):
        QuestionBudget(mode="sometimes")
    with pytest.raises(InvalidInput):
        QuestionBudget(mode=FIXED)
    with pytest.raises(InvalidInput):
        QuestionBudget(mode=FIXED, count=0)


def test_parse_simple_pairs():
    parsed = parse_qa_lines("Who founded Tesla? Elon Musk\nWhen was that? 2003", "c1")
    assert parsed.malformed_count == 0
    assert [(p.question, p.answer) for p in parsed.pairs] == [
        ("Who founded Tesla?", "Elon Musk"),
        ("When was that?", "2003"),
    ]
    assert all(p.chunk_id == "c1" for p in parsed.pairs)


def test_parse_splits_at_first_question_mark():
    parsed = parse_qa_lines("Is it A? or B? maybe", "c1")
    assert parsed.pairs[0].question == "Is it A?"
    assert parsed.pairs[0].answer == "or B? maybe"


def test_parse_counts_malformed_lines():
    raw = "A statement with no mark\n? just an answer\nReal question? yes"
    parsed = parse_qa_lines(raw, "c1")
    assert parsed.malformed_count == 2
    assert len(parsed.pairs) == 1


def test_parse_strips_bullets_and_numbering():
    raw = "- What is it? A thing\n2) Where is it? Nearby\n * 3. Who? Them"
    parsed = parse_qa_lines(raw, "c1")
    assert [(p.question, p.answer) for p in parsed.pairs] == [
        ("What is it?", "A thing"),
        ("Where is it?", "Nearby"),
        ("Who?", "Them"),
    ]
    assert parsed.malformed_count == 0


def test_parse_golden_fixture(fixtures_dir, golden_dir):
    raw = (fixtures_dir / "raw_completion.txt").read_text(encoding="utf-8")
    golden = json.loads((golden_dir / "raw_completion_parsed.json").read_text())
    parsed = parse_qa_lines(raw, "chunk-x")
    assert parsed.malformed_count == golden["malformed_count"]
    assert [[p.question, p.answer] for p in parsed.pairs] == golden["pairs"]


def test_parse_never_raises_on_garbage():
    for raw in ("", "\n\n", "????", "\x00binary?", "  \t "):
        parsed = parse_qa_lines(raw, "c1")
        assert isinstance(parsed, ParsedCompletion)


_STEM = st.text(
    alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Nd"),
                           whitelist_characters=" ,'"),
    min_size=1,
    max_size=40,
).map(str.strip).filter(bool)
_ANSWER = st.text(
    alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Nd"),
                           whitelist_characters=" ,'?"),
    max_size=40,
).map(str.strip)


@settings(max_examples=200)
@given(st.lists(st.tuples(_STEM, _ANSWER), min_size=1, max_size=10))
def test_format_then_parse_round_trips(items):
    pairs = [GeneratedQA(question=f"{stem}?", answer=answer, chunk_id="c")
             for stem, answer in items]
    parsed = parse_qa_lines(format_qa_lines(pairs), "c")
    assert parsed.malformed_count == 0
    assert list(parsed.pairs) == pairs


def test_mock_generator_is_deterministic(small_chunks):
    backend = MockGeneratorBackend(default_count=3)
    budget = QuestionBudget(mode=FIXED, count=5)
    template = BUILTIN_TEMPLATES["nq_squad_basic"]
    chunk = small_chunks[0]
    first = generate_questions(chunk, backend, template, budget)
    second = generate_questions(chunk, backend, template, budget)
    assert first == second
    assert len(first) == 5
    assert all(q.chunk_id == chunk.chunk_id for q in first)
    # different chunks get different questions
    other = generate_questions(small_chunks[1], backend, template, budget)
    assert {q.question for q in first}.isdisjoint(q.question for q in other)


def test_mock_generator_script_overrides_output(small_chunks):
    backend = MockGeneratorBackend(script={"Karvel": "Which river? The Karvel"})
    budget = QuestionBudget(mode=LLM_DECIDES)
    template = BUILTIN_TEMPLATES["nq_squad_basic"]
    karvel = next(c for c in small_chunks if "Karvel" in c.text)
    pairs = generate_questions(karvel, backend, template, budget)
    assert [(p.question, p.answer) for p in pairs] == [("Which river?", "The Karvel")]


def test_fixed_count_deviation_is_logged_not_fatal(small_chunks, caplog):
    backend = MockGeneratorBackend(script={"Text:": "Only one? Pair"})
    with caplog.at_level("INFO", logger="quote_rag.question_gen"):
        pairs = generate_questions(small_chunks[0], backend,
                                   BUILTIN_TEMPLATES["nq_squad_basic"],
                                   QuestionBudget(mode=FIXED, count=5))
    assert len(pairs) == 1
    assert "requested 5" in caplog.text


class FlakyBackend:
    """Fails the first `failures` calls, then defers to the mock."""

    identity = "flaky"

    def __init__(self, failures):
        self.failures = failures
        self.calls = 0
        self.inner = MockGeneratorBackend()
        self.lock = threading.Lock()

    def generate(self, prompt):
        with self.lock:
            self.calls += 1
            if self.calls <= self.failures:
                raise ConnectionError("transient")
        return self.inner.generate(prompt)


def test_generation_retries_until_success(small_chunks):
    backend = FlakyBackend(failures=2)
    pairs = generate_questions(small_chunks[0], backend,
                               BUILTIN_TEMPLATES["nq_squad_basic"],
                               QuestionBudget(mode=FIXED, count=2),
                               retries=3, backoff_seconds=0)
    assert len(pairs) == 2
    assert backend.calls == 3


def test_generation_error_carries_chunk_id(small_chunks):
    backend = FlakyBackend(failures=99)
    with pytest.raises(GenerationError) as excinfo:
        generate_questions(small_chunks[0], backend,
                           BUILTIN_TEMPLATES["nq_squad_basic"],
                           QuestionBudget(mode=FIXED, count=2),
                           retries=2, backoff_seconds=0)
    assert excinfo.value.chunk_id == small_chunks[0].chunk_id
    assert backend.calls == 2


class FailFor:
    """Raises only for prompts containing the needle."""

    identity = "fail-for"

    def __init__(self, needle):
        self.needle = needle
        self.inner = MockGeneratorBackend()

    def generate(self, prompt):
        if self.needle in prompt:
            raise ConnectionError("boom")
        return self.inner.generate(prompt)


def test_generate_for_chunks_skip_records_failures(small_chunks):
    backend = FailFor("Karvel")
    report = generate_for_chunks(small_chunks, backend,
                                 BUILTIN_TEMPLATES["nq_squad_basic"],
                                 QuestionBudget(mode=FIXED, count=2),
                                 retries=1, backoff_seconds=0, on_error="skip")
    karvel = next(c for c in small_chunks if "Karvel" in c.text)
    assert report.failed_chunk_ids == [karvel.chunk_id]
    for chunk, pairs in zip(small_chunks, report.questions):
        if chunk.chunk_id == karvel.chunk_id:
            assert pairs == []
        else:
            assert len(pairs) == 2
            assert all(p.chunk_id == chunk.chunk_id for p in pairs)


def test_generate_for_chunks_abort_raises(small_chunks):
    backend = FailFor("Karvel")
    with pytest.raises(GenerationError):
        generate_for_chunks(small_chunks, backend,
                            BUILTIN_TEMPLATES["nq_squad_basic"],
                            QuestionBudget(mode=FIXED, count=2),
                            retries=1, backoff_seconds=0, on_error="abort")


def test_generate_for_chunks_rejects_unknown_policy(small_chunks):
    with pytest.raises(InvalidInput):
        generate_for_chunks(small_chunks, MockGeneratorBackend(),
                            BUILTIN_TEMPLATES["nq_squad_basic"],
                            QuestionBudget(mode=LLM_DECIDES), on_error="retry")


class SlowForFirst:
    """The chunk mentioning Aurora completes last under parallelism."""

    identity = "slow-first"

    def __init__(self):
        self.inner = MockGeneratorBackend()

    def generate(self, prompt):
        if "Aurora" in prompt:
            time.sleep(0.05)
        return self.inner.generate(prompt)


def test_parallel_results_stay_in_chunk_order(small_chunks):
    template = BUILTIN_TEMPLATES["nq_squad_basic"]
    budget = QuestionBudget(mode=FIXED, count=2)
    serial = generate_for_chunks(small_chunks, MockGeneratorBackend(),
                                 template, budget, workers=1)
    parallel = generate_for_chunks(small_chunks, SlowForFirst(),
                                   template, budget, workers=4)
    assert parallel.questions == serial.questions
    assert parallel.failed_chunk_ids == []


def test_audit_callback_sees_chunk_order(small_chunks):
    seen = []

    def audit(chunk_id, prompt, completion):
        seen.append(chunk_id)
        assert "Text:" in prompt
        assert completion.strip()

    generate_for_chunks(small_chunks, SlowForFirst(),
                        BUILTIN_TEMPLATES["nq_squad_basic"],
                        QuestionBudget(mode=FIXED, count=1),
                        workers=4, audit=audit)
    assert seen == [c.chunk_id for c in small_chunks]
