"""Command-line interface: ingest, ask, check-claim, eval, report, serve."""

from __future__ import annotations

import json
from pathlib import Path

import click

from .claims import evaluate_claim, parse_claim, to_text
from .completion import completion_client_from_env, embedder_from_env
from .diary import load_diary
from .engine import answer_query, render_user_view
from .errors import WorkbenchError
from .knowledge import (
    DEFAULT_OVERLAP_TOKENS,
    DEFAULT_TARGET_TOKENS,
    DEFAULT_TOP_K,
    KnowledgeError,
    MockEmbedder,
    build_index,
    load_corpus,
    load_index,
    mock_embedder_from_identity,
    save_index,
)
from .prompting import PromptConfig, load_prompt_config
from .report import metric_summaries, render_charts, report_or_empty
from .service import CounselService, create_app, load_state


def _fail(exc: Exception) -> None:
    raise click.ClickException(str(exc))


def _prompt_config(path: str | None) -> PromptConfig:
    return load_prompt_config(path) if path else PromptConfig.default()


@click.group()
def main():
    """Diary-grounded counselling pipeline and its evaluation workbench."""


@main.command()
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--target-tokens", default=DEFAULT_TARGET_TOKENS, show_default=True)
@click.option("--overlap", default=DEFAULT_OVERLAP_TOKENS, show_default=True)
@click.option("--mock-embed-seed", default=0, show_default=True,
              help="Seed for the mock embedder (used unless COACH_EMBED_* is set).")
def ingest(corpus_dir, out_path, target_tokens, overlap, mock_embed_seed):
    """Chunk and embed a corpus directory into an index file."""
    try:
        docs = load_corpus(corpus_dir)
        embedder = embedder_from_env() or MockEmbedder(seed=mock_embed_seed)
        previous = 0
        if Path(out_path).is_file():
            previous = load_index(out_path).corpus_version
        index = build_index(docs, embedder, target_tokens=target_tokens,
                            overlap_tokens=overlap, previous_version=previous)
        save_index(index, out_path)
    except WorkbenchError as exc:
        _fail(exc)
    click.echo(f"ingested {len(docs)} documents into {out_path} "
               f"({len(index.chunks)} chunks, corpus_version={index.corpus_version})")


@main.command()
@click.option("--diary", "diary_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--index", "index_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--query", required=True)
@click.option("--top-k", default=DEFAULT_TOP_K, show_default=True)
@click.option("--mock-seed", default=0, show_default=True)
@click.option("--prompt-config", "prompt_config_path", default=None, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True, help="Emit the full labeled response as JSON.")
def ask(diary_path, index_path, query, top_k, mock_seed, prompt_config_path, as_json):
    """Answer a query about a diary using the ingested knowledge index."""
    try:
        table = load_diary(diary_path)
        index = load_index(index_path)
        config = _prompt_config(prompt_config_path)
        try:
            embedder = mock_embedder_from_identity(index.embedder_id)
        except KnowledgeError:
            embedder = embedder_from_env()
            if embedder is None:
                raise KnowledgeError(
                    f"index was built with {index.embedder_id!r}; set COACH_EMBED_* to use it")
        client = completion_client_from_env(mock_seed=mock_seed)
        response = answer_query(table, query, index, config, client, embedder, k=top_k)
    except WorkbenchError as exc:
        _fail(exc)
    if as_json:
        payload = {
            "response_id": response.response_id,
            "query": response.query,
            "claims": [{"label": c.label, "text": c.text} for c in response.claims],
            "statements": [{"label": s.label, "text": s.text} for s in response.statements],
            "retrieved_chunk_ids": list(response.retrieved_chunk_ids),
            "user_view": render_user_view(response),
        }
        click.echo(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False))
    else:
        click.echo(render_user_view(response))


@main.command("check-claim")
@click.option("--diary", "diary_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--claim", "claim_text", required=True)
def check_claim(diary_path, claim_text):
    """Evaluate a structured claim expression against a diary."""
    try:
        table = load_diary(diary_path)
        claim = parse_claim(claim_text)
        verdict = evaluate_claim(claim, table)
    except WorkbenchError as exc:
        _fail(exc)
    click.echo(json.dumps({
        "claim": to_text(claim),
        "supported": verdict.supported,
        "note": verdict.note,
        "evidence": [[d.isoformat(), v] for d, v in verdict.evidence],
    }, indent=2, sort_keys=True, ensure_ascii=False))


@main.command("eval")
@click.option("--annotations", "annotations_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--strictness", default="strict", type=click.Choice(["strict", "lenient"]),
              show_default=True)
def eval_cmd(annotations_path, out_path, strictness):
    """Compute raw metric summaries, ratios, and agreement from an annotations file."""
    try:
        state = load_state(annotations_path)
        metrics = metric_summaries(state.annotations, consensus=state.consensus,
                                   strictness=strictness)
    except WorkbenchError as exc:
        _fail(exc)
    Path(out_path).write_text(
        json.dumps(metrics, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    click.echo(f"wrote metrics for {len(state.annotations)} annotations to {out_path}")


@main.command()
@click.option("--annotations", "annotations_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--svg", "svg_path", default=None, type=click.Path(dir_okay=False))
@click.option("--strictness", default="strict", type=click.Choice(["strict", "lenient"]),
              show_default=True)
def report(annotations_path, out_path, svg_path, strictness):
    """Assemble the four-panel evaluation report (and optionally its SVG charts)."""
    try:
        state = load_state(annotations_path)
        result = report_or_empty(state.annotations, consensus=state.consensus,
                                 strictness=strictness, corpus_version=state.corpus_version)
    except WorkbenchError as exc:
        _fail(exc)
    Path(out_path).write_text(result.to_json() + "\n", encoding="utf-8")
    message = f"wrote report to {out_path}"
    if svg_path:
        Path(svg_path).write_text(render_charts(result), encoding="utf-8")
        message += f" and charts to {svg_path}"
    click.echo(message)


@main.command()
@click.option("--data-dir", required=True, type=click.Path(file_okay=False))
@click.option("--index", "index_path", default=None, type=click.Path(dir_okay=False))
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--prompt-config", "prompt_config_path", default=None, type=click.Path(exists=True))
@click.option("--annotators", "annotators_path", default=None, type=click.Path(exists=True),
              help="JSON file mapping bearer tokens to annotator ids; enables auth.")
@click.option("--mock-seed", default=0, show_default=True)
def serve(data_dir, index_path, port, host, prompt_config_path, annotators_path, mock_seed):
    """Run the HTTP JSON API (and the annotation UI's backend)."""
    import uvicorn

    try:
        tokens = None
        if annotators_path:
            tokens = json.loads(Path(annotators_path).read_text(encoding="utf-8"))
        service = CounselService(
            data_dir=data_dir, index_path=index_path,
            prompt_config=_prompt_config(prompt_config_path),
            default_mock_seed=mock_seed, annotator_tokens=tokens,
        )
    except WorkbenchError as exc:
        _fail(exc)
    uvicorn.run(create_app(service), host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
