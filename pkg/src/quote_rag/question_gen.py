"""Per-chunk question generation and "Question? Answer" line parsing.

A pluggable backend turns a rendered prompt into raw completion text; this
module owns the prompt templates, the placeholder substitution rules, and
the line-format parser.  A deterministic offline mock backend makes the
whole pipeline testable without network access.
"""

from __future__ import annotations

import hashlib
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence

import requests

from .corpus import Chunk
from .errors import GenerationError, InvalidInput, ProtocolError, TemplateError

logger = logging.getLogger(__name__)

CHUNK_PLACEHOLDER = "{chunk_text}"
COUNT_PLACEHOLDER = "{num_questions}"

FIXED_COUNT_DIRECTIVE = (
    "Generate exactly {num_questions} questions to properly capture "
    "all the important parts of the text."
)
LLM_DECIDES_DIRECTIVE = (
    "Generate enough questions to properly capture "
    "all the important parts of the text."
)

FIXED = "fixed"
LLM_DECIDES = "llm_decides"

ON_ERROR_ABORT = "abort"
ON_ERROR_SKIP = "skip"

_BULLET_PREFIX = re.compile(r"^(?:\s*(?:[-*•]+|\d+[.)]))*\s*")
_EXACT_COUNT = re.compile(r"exactly (\d+) questions")


@dataclass(frozen=True)
class PromptTemplate:
    """A named prompt whose body carries a {chunk_text} placeholder."""

    name: str
    body: str

    def __post_init__(self):
        if self.body.count(CHUNK_PLACEHOLDER) != 1:
            raise TemplateError(
                f"template {self.name!r} must contain {CHUNK_PLACEHOLDER} exactly once"
            )


BUILTIN_TEMPLATES: dict[str, PromptTemplate] = {
    template.name: template
    for template in (
        PromptTemplate(
            name="nq_squad_basic",
            body=(
                "Generate numerous questions to properly capture all the important "
                "parts of the text. Separate each question-answer pair by a new line "
                "only; do not use bullets. Format each question-answer pair on a "
                "single line as 'Question? Answer' without any additional separators "
                "or spaces around the question mark. Text:{chunk_text}"
            ),
        ),
        PromptTemplate(
            name="nq_squad_complex",
            body=(
                "Read the following text and generate numerous factual "
                "question-answer pairs designed to resemble authentic user search "
                "queries and natural language variations. Each question should "
                "accurately and semantically capture important aspects of the text, "
                "with varying lengths and complexities that mirror real-world search "
                "patterns. Include both shorter, keyword-focused questions such as "
                "'who founded Tesla Motors' and longer, natural style questions like "
                "'when did Elon Musk first start Tesla company'. Incorporate 'how' "
                "and 'why' questions to reflect genuine user curiosity. Avoid using "
                "phrases like 'according to the text' and abstain from pronouns by "
                "specifying names or entities. Ensure questions are not overly "
                "formal or artificial, maintaining a natural query style. "
                "Immediately follow each question with its precise answer on the "
                "same line, formatted as 'Question? Answer', without any additional "
                "formatting or commentary. Each pair should be on its own line. "
                "Text:{chunk_text}"
            ),
        ),
        PromptTemplate(
            name="multihop_basic",
            body=(
                "Generate enough multi-hop questions along with their answers to "
                "properly capture all the important parts of the text. These "
                "questions should require integrating multiple pieces of "
                "information to answer. Separate each question-answer pair by a new "
                "line only; do not use bullets. Format each question-answer pair on "
                "a single line as 'Question? Answer' without any additional "
                "separators or spaces around the question mark. Text:{chunk_text}"
            ),
        ),
        PromptTemplate(
            name="multihop_complex",
            body=(
                "Read the following text and generate complex, multi-hop questions "
                "that require integrating multiple pieces of information from the "
                "text to answer. The questions should involve reasoning and "
                "synthesis, referring to different parts or aspects of the text. Do "
                "not use phrases like 'according to the text', 'mentioned in the "
                "text', or 'in the text'. All questions should be one sentence "
                "long. Never use pronouns in questions; instead, use the actual "
                "names or entities. Format each question on a single new line as "
                "Question? Answer without any additional separators or spaces "
                "around the question mark. Text:{chunk_text}"
            ),
        ),
    )
}


@dataclass(frozen=True)
class QuestionBudget:
    """How many questions to request per chunk: a fixed count, or let the model decide."""

    mode: str = LLM_DECIDES
    count: int | None = None

    def __post_init__(self):
        if self.mode not in (FIXED, LLM_DECIDES):
            raise InvalidInput(f"unknown budget mode: {self.mode!r}")
        if self.mode == FIXED and (self.count is None or self.count < 1):
            raise InvalidInput("fixed budget requires count >= 1")


@dataclass(frozen=True)
class GeneratedQA:
    question: str
    answer: str
    chunk_id: str


@dataclass(frozen=True)
class ParsedCompletion:
    """Parse result: extracted pairs plus a count of dropped malformed lines."""

    pairs: tuple[GeneratedQA, ...]
    malformed_count: int


class GeneratorBackend(Protocol):
    """Text generation interface: a prompt in, raw completion text out."""

    identity: str

    def generate(self, prompt: str) -> str: ...


def render_prompt(template: PromptTemplate, chunk: Chunk, budget: QuestionBudget) -> str:
    """Substitute the chunk text (and question count, if fixed) into the template.

    Only placeholder spans change.  In fixed mode a template without its own
    {num_questions} placeholder gets the exact-count directive prepended as
    its own line, leaving the template text intact below it.
    """
    if template.body.count(CHUNK_PLACEHOLDER) != 1:
        raise TemplateError(
            f"template {template.name!r} must contain {CHUNK_PLACEHOLDER} exactly once"
        )
    body = template.body
    if budget.mode == FIXED:
        count = str(budget.count)
        if COUNT_PLACEHOLDER in body:
            body = body.replace(COUNT_PLACEHOLDER, count)
        else:
            directive = FIXED_COUNT_DIRECTIVE.replace(COUNT_PLACEHOLDER, count)
            body = directive + "\n" + body
    elif COUNT_PLACEHOLDER in body:
        raise TemplateError(
            f"template {template.name!r} requires a question count; use a fixed budget"
        )
    return body.replace(CHUNK_PLACEHOLDER, chunk.text)


def parse_qa_lines(raw: str, chunk_id: str) -> ParsedCompletion:
    """Parse completion text in the one-pair-per-line 'Question? Answer' format.

    Each line splits at its FIRST '?': question keeps the mark, the trimmed
    remainder is the answer.  Bullet and numbering prefixes are stripped
    first.  Blank lines are ignored; lines without a '?' (or with nothing
    before it) are dropped and counted as malformed.  Never raises.
    """
    pairs: list[GeneratedQA] = []
    malformed = 0
    for line in raw.splitlines():
        if not line.strip():
            continue
        line = _BULLET_PREFIX.sub("", line).strip()
        mark = line.find("?")
        if mark < 1:
            malformed += 1
            continue
        pairs.append(GeneratedQA(
            question=line[:mark + 1].strip(),
            answer=line[mark + 1:].strip(),
            chunk_id=chunk_id,
        ))
    return ParsedCompletion(pairs=tuple(pairs), malformed_count=malformed)


def format_qa_lines(pairs: Sequence[GeneratedQA]) -> str:
    """Inverse of parse_qa_lines for well-formed pairs: one 'Question? Answer' line each."""
    return "\n".join(
        f"{p.question} {p.answer}" if p.answer else p.question for p in pairs
    )


def _generate_once(
    chunk: Chunk,
    backend: GeneratorBackend,
    template: PromptTemplate,
    budget: QuestionBudget,
    retries: int,
    backoff_seconds: float,
) -> tuple[str, str, ParsedCompletion]:
    prompt = render_prompt(template, chunk, budget)
    last_error: Exception | None = None
    for attempt in range(max(1, retries)):
        if attempt:
            time.sleep(backoff_seconds * 2 ** (attempt - 1))
        try:
            completion = backend.generate(prompt)
        except Exception as exc:  # transport errors are backend-specific
            last_error = exc
            logger.warning("generation attempt %d failed for chunk %s: %s",
                           attempt + 1, chunk.chunk_id, exc)
            continue
        parsed = parse_qa_lines(completion, chunk.chunk_id)
        if parsed.malformed_count:
            logger.info("chunk %s: %d malformed completion line(s) dropped",
                        chunk.chunk_id, parsed.malformed_count)
        if budget.mode == FIXED and len(parsed.pairs) != budget.count:
            logger.info("chunk %s: requested %d questions, parsed %d",
                        chunk.chunk_id, budget.count, len(parsed.pairs))
        if not parsed.pairs:
            logger.warning("chunk %s: completion yielded no questions", chunk.chunk_id)
        return prompt, completion, parsed
    raise GenerationError(
        f"backend failed after {max(1, retries)} attempt(s): {last_error}",
        chunk_id=chunk.chunk_id,
    )


def generate_questions(
    chunk: Chunk,
    backend: GeneratorBackend,
    template: PromptTemplate,
    budget: QuestionBudget,
    retries: int = 3,
    backoff_seconds: float = 0.5,
) -> list[GeneratedQA]:
    """Render, call the backend (with retries), and parse.

    A parsed count differing from a fixed budget is logged and accepted; an
    empty parse is logged and returns an empty list.  Transport failure on
    every attempt raises GenerationError carrying the chunk id.
    """
    _, _, parsed = _generate_once(chunk, backend, template, budget, retries, backoff_seconds)
    return list(parsed.pairs)


@dataclass
class ChunkGenerationReport:
    """Per-chunk questions aligned with the input order, plus failure/parse tallies."""

    questions: list[list[GeneratedQA]]
    failed_chunk_ids: list[str]
    malformed_lines: int
    empty_chunks: int


def generate_for_chunks(
    chunks: Sequence[Chunk],
    backend: GeneratorBackend,
    template: PromptTemplate,
    budget: QuestionBudget,
    *,
    workers: int = 1,
    retries: int = 3,
    backoff_seconds: float = 0.5,
    on_error: str = ON_ERROR_ABORT,
    audit: Callable[[str, str, str], None] | None = None,
) -> ChunkGenerationReport:
    """Generate questions for every chunk with bounded parallelism.

    Results are collected in chunk order regardless of completion order, so
    downstream index building is deterministic.  workers=1 runs fully
    serial.  on_error="skip" records failing chunk ids and keeps going;
    "abort" re-raises the first GenerationError.  The optional audit
    callback receives (chunk_id, prompt, completion) in chunk order.
    """
    if on_error not in (ON_ERROR_ABORT, ON_ERROR_SKIP):
        raise InvalidInput(f"unknown on_error policy: {on_error!r}")

    def run_one(chunk: Chunk):
        return _generate_once(chunk, backend, template, budget, retries, backoff_seconds)

    outcomes: list[tuple[str, str, ParsedCompletion] | GenerationError] = []
    if workers <= 1:
        for chunk in chunks:
            try:
                outcomes.append(run_one(chunk))
            except GenerationError as exc:
                if on_error == ON_ERROR_ABORT:
                    raise
                outcomes.append(exc)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_one, chunk) for chunk in chunks]
            for future in futures:
                try:
                    outcomes.append(future.result())
                except GenerationError as exc:
                    if on_error == ON_ERROR_ABORT:
                        raise
                    outcomes.append(exc)

    report = ChunkGenerationReport(
        questions=[], failed_chunk_ids=[], malformed_lines=0, empty_chunks=0
    )
    for chunk, outcome in zip(chunks, outcomes):
        if isinstance(outcome, GenerationError):
            report.questions.append([])
            report.failed_chunk_ids.append(chunk.chunk_id)
            continue
        prompt, completion, parsed = outcome
        if audit is not None:
            audit(chunk.chunk_id, prompt, completion)
        report.questions.append(list(parsed.pairs))
        report.malformed_lines += parsed.malformed_count
        if not parsed.pairs:
            report.empty_chunks += 1
    return report


class MockGeneratorBackend:
    """Deterministic offline generator for tests and desk-scale runs.

    Honors an "exactly N questions" directive found in the prompt, otherwise
    emits `default_count` pairs.  Output depends only on the prompt text, so
    repeated calls agree exactly.  A script maps prompt substrings to canned
    completions (first match wins); delay_ms simulates model latency.
    Thread-safe: no mutable state.
    """

    def __init__(
        self,
        default_count: int = 3,
        script: Mapping[str, str] | None = None,
        delay_ms: float = 0.0,
        identity: str = "mock-generator",
    ):
        self.identity = identity
        self.default_count = default_count
        self.script = dict(script or {})
        self.delay_ms = delay_ms

    def generate(self, prompt: str) -> str:
        if self.delay_ms > 0:
            time.sleep(self.delay_ms / 1000.0)
        for key, canned in self.script.items():
            if key in prompt:
                return canned
        match = _EXACT_COUNT.search(prompt)
        count = int(match.group(1)) if match else self.default_count
        source = prompt.split("Text:", 1)[-1]
        tag = hashlib.sha256(source.encode("utf-8")).hexdigest()[:8]
        return "\n".join(
            f"What does passage {tag} state in part {i}? Fact {tag}-{i}"
            for i in range(1, count + 1)
        )


class HttpChatBackend:
    """Chat-completions-style HTTP generator (OpenAI-compatible endpoint).

    Single-attempt: retry policy lives in the calling operation.  The API
    key is read from the named environment variable at request time and is
    never stored in config files.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str | None = None,
        timeout_seconds: float = 60.0,
        temperature: float = 0.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_seconds = timeout_seconds
        self.temperature = temperature
        self.identity = model

    def _headers(self) -> dict[str, str]:
        import os

        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def generate(self, prompt: str) -> str:
        response = requests.post(
            f"{self.base_url}/chat/completions",
            json={
                "model": self.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": self.temperature,
            },
            headers=self._headers(),
            timeout=self.timeout_seconds,
        )
        if response.status_code != 200:
            raise ProtocolError(
                f"chat endpoint returned {response.status_code}: {response.text[:200]}"
            )
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed chat completion response: {exc}") from exc
