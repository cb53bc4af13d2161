"""End-to-end query answering and marked-output parsing.

Completions label data sentences with ``(1)``, ``(2)``, ... and advice sentences
with ``(A)``, ``(B)``, ...; the markers are for evaluation only and are stripped
from the view users see.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

from .completion import CompletionClient
from .diary import DEFAULT_WINDOW_DAYS, DiaryTable, serialize_markdown, truncate_recent
from .errors import WorkbenchError
from .knowledge import DEFAULT_TOP_K, ChunkIndex, Embedder, retrieve, with_retries
from .prompting import PromptConfig, build_prompt

MARKER_RE = re.compile(r"\((\d+|[A-Z])\)(?=\s|$)")

FORMAT_REMINDER = (
    "Reminder: end each data sentence with (1), (2), ... and each advice sentence "
    "with (A), (B), ...; start at (1) and (A), skip nothing, and write no text "
    "after the final marker."
)


class ParseError(WorkbenchError):
    """Completion text does not follow the marker format; carries the text offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class PipelineStageError(WorkbenchError):
    """Failure in a named pipeline stage."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class DataClaim:
    label: int
    text: str
    referenced_columns: frozenset = frozenset()


@dataclass(frozen=True)
class ContextStatement:
    label: str
    text: str
    supporting_chunk_ids: frozenset = frozenset()


@dataclass(frozen=True)
class CounselResponse:
    response_id: str
    query: str
    claims: tuple[DataClaim, ...]
    statements: tuple[ContextStatement, ...]
    retrieved_chunk_ids: tuple[str, ...]
    raw_text: str
    corpus_version: int


def parse_response(raw: str) -> tuple[tuple[DataClaim, ...], tuple[ContextStatement, ...]]:
    """Extract labeled claims and statements, rejecting gaps, duplicates, and stray text."""
    markers = list(MARKER_RE.finditer(raw))
    if not markers:
        raise ParseError("no data-claim markers like (1) found", 0)
    claims: list[tuple[int, str, int]] = []
    statements: list[tuple[str, str, int]] = []
    cursor = 0
    for m in markers:
        sentence = raw[cursor:m.start()].strip()
        if not sentence:
            raise ParseError(f"marker ({m.group(1)}) has no sentence text", m.start())
        label = m.group(1)
        if label.isdigit():
            claims.append((int(label), sentence, m.start()))
        else:
            statements.append((label, sentence, m.start()))
        cursor = m.end()
    trailing = raw[cursor:].strip()
    if trailing:
        raise ParseError("text after the final marker", cursor)
    if not claims:
        raise ParseError("no data-claim markers like (1) found", 0)
    if not statements:
        raise ParseError("no contextualisation-statement markers like (A) found", 0)
    for expected, (number, _, position) in enumerate(claims, start=1):
        if number != expected:
            raise ParseError(f"claim marker ({number}) breaks the sequence, expected ({expected})", position)
    for offset, (letter, _, position) in enumerate(statements):
        expected_letter = chr(ord("A") + offset)
        if letter != expected_letter:
            raise ParseError(
                f"statement marker ({letter}) breaks the sequence, expected ({expected_letter})", position)
    return (
        tuple(DataClaim(label=number, text=text) for number, text, _ in claims),
        tuple(ContextStatement(label=letter, text=text) for letter, text, _ in statements),
    )


def write_marked(claims, statements) -> str:
    """Canonical inverse of parse_response for well-formed claims/statements."""
    parts = [f"{c.text} ({c.label})" for c in claims]
    parts += [f"{s.text} ({s.label})" for s in statements]
    return " ".join(parts)


def user_view_text(raw: str) -> str:
    """Marker-free text shown to users; whitespace normalized, idempotent."""
    without_markers = MARKER_RE.sub("", raw)
    return " ".join(without_markers.split())


def render_user_view(resp: CounselResponse) -> str:
    return user_view_text(resp.raw_text)


def _stage(name: str, call):
    try:
        return call()
    except WorkbenchError as exc:
        raise PipelineStageError(name, str(exc)) from exc


def answer_query(table: DiaryTable, query: str, index: ChunkIndex, config: PromptConfig,
                 client: CompletionClient, embedder: Embedder,
                 k: int = DEFAULT_TOP_K, max_days: int = DEFAULT_WINDOW_DAYS) -> CounselResponse:
    """Run the full pipeline: window, serialize, embed, retrieve, prompt, complete, parse."""
    if not table.rows:
        raise PipelineStageError("diary", "empty diary")
    if not query or not query.strip():
        raise PipelineStageError("query", "empty query")
    if not index.chunks:
        raise PipelineStageError("retrieve", "empty index")

    recent = _stage("diary", lambda: truncate_recent(table, max_days))
    table_text = _stage("serialize", lambda: serialize_markdown(recent))
    query_vec = _stage("embed", lambda: with_retries(lambda: embedder.embed_text(query)))
    hits = _stage("retrieve", lambda: retrieve(index, query_vec, k=k))
    prompt = _stage("prompt", lambda: build_prompt(table_text, hits, query, config))
    raw = _stage("complete", lambda: client.complete(prompt.full_text))
    try:
        claims, statements = parse_response(raw)
    except ParseError:
        raw = _stage("complete", lambda: client.complete(prompt.full_text + "\n\n" + FORMAT_REMINDER))
        try:
            claims, statements = parse_response(raw)
        except ParseError as exc:
            raise PipelineStageError("parse", f"unparseable completion: {exc}") from exc

    digest = hashlib.sha256(f"{query}|{raw}|{index.corpus_version}".encode("utf-8")).hexdigest()
    return CounselResponse(
        response_id=f"r-{digest[:12]}",
        query=query,
        claims=claims,
        statements=statements,
        retrieved_chunk_ids=tuple(chunk.chunk_id for chunk, _ in hits),
        raw_text=raw,
        corpus_version=index.corpus_version,
    )
