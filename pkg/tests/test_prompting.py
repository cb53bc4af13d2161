from pathlib import Path

import pytest

from coach.knowledge import KnowledgeChunk
from coach.prompting import (
    CANONICAL_TOPICS,
    SECTION_TAGS,
    PromptConfig,
    PromptError,
    build_prompt,
    dumps_prompt_config,
    loads_prompt_config,
)

TABLE = "| date | mood |\n| --- | --- |\n| 2025-01-01 | 4 |\n\nColumns:\n- date (date): d\n- mood (score): m"


def chunks(n: int):
    return [KnowledgeChunk(chunk_id=f"d{i}#0000", title=f"Title {i}", text=f"text {i}", token_count=2)
            for i in range(n)]


def test_sections_in_canonical_order():
    prompt = build_prompt(TABLE, chunks(2), "How can I sleep better?", PromptConfig.default())
    assert prompt.tags == SECTION_TAGS
    assert prompt.tags[-1] == "external_data"


def test_empty_query_rejected():
    with pytest.raises(PromptError, match="query"):
        build_prompt(TABLE, chunks(1), "   ", PromptConfig.default())


def test_empty_chunk_list_rejected():
    with pytest.raises(PromptError, match="chunk"):
        build_prompt(TABLE, [], "query", PromptConfig.default())


def test_chunk_blocks_precede_query_with_titles():
    prompt = build_prompt(TABLE, chunks(4), "my question", PromptConfig.default())
    external = dict(prompt.sections)["external_data"]
    assert external.count("[Source: ") == 4
    for i in range(4):
        assert f"[Source: Title {i}]" in external
    assert external.index("[Source: Title 3]") < external.index("my question")


def test_full_text_ends_with_query():
    prompt = build_prompt(TABLE, chunks(1), "my question  ", PromptConfig.default())
    assert prompt.full_text.endswith("my question")


def test_accepts_ranked_chunk_tuples():
    ranked = [(c, 0.9) for c in chunks(2)]
    prompt = build_prompt(TABLE, ranked, "q", PromptConfig.default())
    assert "[Source: Title 0]" in prompt.full_text


def test_instruction_sections_do_not_depend_on_user_data():
    config = PromptConfig.default()
    a = build_prompt(TABLE, chunks(1), "first query", config)
    b = build_prompt("| date |\n| --- |", chunks(3), "second query", config)
    for tag in SECTION_TAGS[:-1]:
        assert dict(a.sections)[tag] == dict(b.sections)[tag]


def test_each_canonical_topic_listed_exactly_once():
    prompt = build_prompt(TABLE, chunks(1), "q", PromptConfig.default())
    topic_text = dict(prompt.sections)["topic_examples"]
    for topic, _cols in CANONICAL_TOPICS:
        assert topic_text.count(f"- {topic}:") == 1


def test_style_section_covers_required_instructions():
    style = dict(build_prompt(TABLE, chunks(1), "q", PromptConfig.default()).sections)["style"]
    lowered = style.lower()
    assert "empath" in lowered
    assert "brief" in lowered
    assert "medical advice" in lowered


def test_config_requires_canonical_topics():
    with pytest.raises(PromptError, match="missing canonical topics"):
        PromptConfig(
            system_message="s", style_instructions="s", table_schema_notes="s",
            topic_examples=(("physical fatigue", ("energy",)),),
            output_format_instructions="s",
        )


def test_config_rejects_empty_sections():
    with pytest.raises(PromptError, match="non-empty"):
        PromptConfig(
            system_message=" ", style_instructions="s", table_schema_notes="s",
            topic_examples=CANONICAL_TOPICS, output_format_instructions="s",
        )


def test_config_file_round_trip():
    config = PromptConfig.default()
    assert loads_prompt_config(dumps_prompt_config(config)) == config


def test_shipped_config_matches_defaults():
    shipped = Path(__file__).resolve().parent.parent / "config" / "prompt.cfg"
    assert loads_prompt_config(shipped.read_text(encoding="utf-8")) == PromptConfig.default()


def test_config_missing_section_rejected():
    with pytest.raises(PromptError, match="missing sections"):
        loads_prompt_config("[system]\nhello\n")
