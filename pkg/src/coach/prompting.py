"""Six-part counselling prompt assembly.

Instruction sections come first and are pure functions of the config; the
serialized diary table, retrieved chunks, and user query always come last,
with the query as the final text.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import WorkbenchError
from .knowledge import KnowledgeChunk

SECTION_TAGS = ("system", "style", "table_schema", "topic_examples", "output_format", "external_data")

CANONICAL_TOPICS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("physical fatigue", ("energy", "sleep", "exercise")),
    ("mental fatigue", ("mood", "energy", "social")),
    ("daily activities", ("work", "chores", "social", "exercise")),
)

DEFAULT_SYSTEM_MESSAGE = (
    "You are a careful assistant for a digital health diary. You help people living "
    "with the consequences of cancer and its treatment understand their own diary "
    "entries and find realistic lifestyle adjustments."
)

DEFAULT_STYLE_INSTRUCTIONS = (
    "Write with warmth and empathy. Keep the answer brief and easy to follow, and "
    "encourage small, concrete steps. Never give medical advice, diagnoses, or "
    "treatment recommendations; for medical concerns, suggest talking to a care "
    "professional."
)

DEFAULT_TABLE_SCHEMA_NOTES = (
    "The diary below is a Markdown table with one row per day. Read the headers "
    "carefully: the date column holds the calendar day in ISO-8601 form; score "
    "columns hold whole numbers from 1 (lowest) to 5 (highest); hour columns hold "
    "hours between 0 and 24; any column whose header contains the word 'goal' "
    "always holds booleans, where true means the goal was met that day. A legend "
    "after the table describes every column. An empty cell means nothing was "
    "logged that day; never invent a value for it."
)

DEFAULT_OUTPUT_FORMAT_INSTRUCTIONS = (
    "Structure the answer in two kinds of sentences. First describe what you "
    "actually see in the diary data: end every such sentence with a numbered "
    "marker like (1), (2), counting up from (1). Then give advice grounded in the "
    "provided source passages: end every advice sentence with a letter marker "
    "like (A), (B), counting up from (A). Place each marker immediately at the "
    "end of its sentence, use every marker exactly once, and write no text after "
    "the last marked sentence."
)


class PromptError(WorkbenchError):
    """Invalid prompt configuration or inputs."""


@dataclass(frozen=True)
class PromptConfig:
    system_message: str
    style_instructions: str
    table_schema_notes: str
    topic_examples: tuple[tuple[str, tuple[str, ...]], ...]
    output_format_instructions: str

    def __post_init__(self):
        texts = {
            "system": self.system_message,
            "style": self.style_instructions,
            "table_schema": self.table_schema_notes,
            "output_format": self.output_format_instructions,
        }
        for label, text in texts.items():
            if not text or not text.strip():
                raise PromptError(f"prompt config section {label!r} must be non-empty")
        names = [topic for topic, _ in self.topic_examples]
        if len(set(names)) != len(names):
            raise PromptError("topic examples contain a duplicate topic")
        missing = [t for t, _ in CANONICAL_TOPICS if t not in names]
        if missing:
            raise PromptError(f"topic examples missing canonical topics: {', '.join(missing)}")
        for topic, cols in self.topic_examples:
            if not cols:
                raise PromptError(f"topic {topic!r} lists no columns")

    @classmethod
    def default(cls) -> "PromptConfig":
        return cls(
            system_message=DEFAULT_SYSTEM_MESSAGE,
            style_instructions=DEFAULT_STYLE_INSTRUCTIONS,
            table_schema_notes=DEFAULT_TABLE_SCHEMA_NOTES,
            topic_examples=CANONICAL_TOPICS,
            output_format_instructions=DEFAULT_OUTPUT_FORMAT_INSTRUCTIONS,
        )

    def topic_columns(self) -> dict[str, tuple[str, ...]]:
        return {topic: cols for topic, cols in self.topic_examples}


@dataclass(frozen=True)
class AssembledPrompt:
    sections: tuple[tuple[str, str], ...]

    @property
    def full_text(self) -> str:
        return "\n\n".join(text for _, text in self.sections)

    @property
    def tags(self) -> tuple[str, ...]:
        return tuple(tag for tag, _ in self.sections)


def build_prompt(table_text: str, chunks, query: str, config: PromptConfig) -> AssembledPrompt:
    """Assemble the six sections in canonical order; external data last, query last of all."""
    if not query or not query.strip():
        raise PromptError("query must be non-empty")
    chunk_list = [c[0] if isinstance(c, tuple) else c for c in chunks]
    if not chunk_list:
        raise PromptError("at least one retrieved chunk is required")
    for chunk in chunk_list:
        if not isinstance(chunk, KnowledgeChunk):
            raise PromptError(f"expected KnowledgeChunk, got {type(chunk).__name__}")

    topic_lines = "\n".join(f"- {topic}: {', '.join(cols)}" for topic, cols in config.topic_examples)
    topic_text = "Example query topics and the diary columns worth checking:\n" + topic_lines

    blocks = [f"[Source: {chunk.title}]\n{chunk.text}" for chunk in chunk_list]
    external = "\n\n".join([table_text.rstrip(), *blocks, query.strip()])

    return AssembledPrompt(sections=(
        ("system", config.system_message),
        ("style", config.style_instructions),
        ("table_schema", config.table_schema_notes),
        ("topic_examples", topic_text),
        ("output_format", config.output_format_instructions),
        ("external_data", external),
    ))


def dumps_prompt_config(config: PromptConfig) -> str:
    parts = [
        "[system]", config.system_message, "",
        "[style]", config.style_instructions, "",
        "[table_schema]", config.table_schema_notes, "",
        "[topics]",
        *[f"{topic}: {', '.join(cols)}" for topic, cols in config.topic_examples],
        "",
        "[output_format]", config.output_format_instructions,
    ]
    return "\n".join(parts) + "\n"


def loads_prompt_config(text: str) -> PromptConfig:
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            name = stripped[1:-1].strip()
            if name in sections:
                raise PromptError(f"prompt config repeats section [{name}]")
            current = sections.setdefault(name, [])
        elif current is not None:
            current.append(line)
        elif stripped:
            raise PromptError(f"prompt config text outside any section: {stripped!r}")

    required = ("system", "style", "table_schema", "topics", "output_format")
    missing = [name for name in required if name not in sections]
    if missing:
        raise PromptError(f"prompt config missing sections: {', '.join(missing)}")

    def body(name: str) -> str:
        return "\n".join(sections[name]).strip()

    topics = []
    for line in sections["topics"]:
        if not line.strip():
            continue
        topic, sep, cols = line.partition(":")
        if not sep:
            raise PromptError(f"topic line needs 'name: col, col', got {line.strip()!r}")
        columns = tuple(col.strip() for col in cols.split(",") if col.strip())
        topics.append((topic.strip(), columns))

    return PromptConfig(
        system_message=body("system"),
        style_instructions=body("style"),
        table_schema_notes=body("table_schema"),
        topic_examples=tuple(topics),
        output_format_instructions=body("output_format"),
    )


def load_prompt_config(path) -> PromptConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise PromptError(f"cannot read prompt config {p}: {exc}") from exc
    return loads_prompt_config(text)
