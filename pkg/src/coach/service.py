"""HTTP JSON API over the pipeline and evaluation workflow.

The service owns no metric logic: reports come from the same replay + build
path the CLI uses, so a GET /report equals `coach report` on the same log.
Tasks are derived views over stored responses and annotations; several
annotators may rate the same item (agreement needs it), while a duplicate by
the same annotator is rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from pydantic import BaseModel

from .completion import completion_client_from_env, embedder_from_env
from .diary import DiaryError, load_diary
from .engine import PipelineStageError, answer_query, user_view_text
from .errors import WorkbenchError
from .knowledge import (
    DEFAULT_TOP_K,
    KnowledgeError,
    TransientProviderError,
    load_index,
    mock_embedder_from_identity,
)
from .metrics import (
    PERSPECTIVE_VARIABLES,
    AnnotationRecord,
    MetricsError,
    consensus_merge,
)
from .prompting import PromptConfig
from .report import QuorumReport, render_charts, report_or_empty
from .store import Store, StoreRecord
from .store import utc_now

USER_TASK_VARIABLES = PERSPECTIVE_VARIABLES["user"]
EXPERT_TASK_VARIABLES = PERSPECTIVE_VARIABLES["expert"]
CLAIM_TASK_VARIABLES = ("faithfulness", "completeness")
STATEMENT_TASK_VARIABLES = ("hallucination",)


class ServiceError(WorkbenchError):
    status_code = 400


class BadRequestError(ServiceError):
    status_code = 400


class AuthError(ServiceError):
    status_code = 401


class NotFoundError(ServiceError):
    status_code = 404


class ConflictError(ServiceError):
    status_code = 409


class UnprocessableError(ServiceError):
    status_code = 422


class ProviderError(ServiceError):
    status_code = 502


def _annotation_from_payload(payload: dict) -> AnnotationRecord:
    try:
        return AnnotationRecord(
            annotator_id=payload["annotator_id"],
            perspective=payload["perspective"],
            item_id=payload["item_id"],
            variable=payload["variable"],
            value=payload["value"],
            remark=payload.get("remark"),
            strictness=payload.get("strictness"),
            timestamp=payload.get("timestamp"),
        )
    except KeyError as exc:
        raise UnprocessableError(f"annotation record missing field {exc.args[0]!r}") from exc


@dataclass
class WorkbenchState:
    """In-memory view reconstructed by replaying the log (or a bare annotations file)."""

    responses: dict = field(default_factory=dict)
    annotations: list = field(default_factory=list)
    consensus: dict = field(default_factory=dict)
    corpus_version: int | None = None

    def apply(self, kind: str, payload: dict) -> None:
        if kind == "response":
            self.responses[payload["response_id"]] = payload
            version = payload.get("corpus_version")
            if version is not None:
                self.corpus_version = max(self.corpus_version or 0, version)
        elif kind == "annotation":
            self.annotations.append(_annotation_from_payload(payload))
        elif kind == "consensus":
            key = (payload["variable"], payload.get("strictness"))
            self.consensus[key] = dict(payload["values"])

    @classmethod
    def from_records(cls, records: list[StoreRecord]) -> "WorkbenchState":
        state = cls()
        for record in records:
            state.apply(record.kind, record.payload)
        return state


def load_state(path) -> WorkbenchState:
    """Load either a store log (kind-enveloped lines) or a bare annotations JSONL file."""
    p = Path(path)
    if not p.is_file():
        raise ServiceError(f"no such annotations file: {p}")
    first = ""
    for line in p.read_text(encoding="utf-8").splitlines():
        if line.strip():
            first = line
            break
    if not first:
        return WorkbenchState()
    try:
        head = json.loads(first)
    except json.JSONDecodeError:
        head = {}
    if isinstance(head, dict) and "kind" in head and "payload" in head:
        return WorkbenchState.from_records(Store(p).records())
    state = WorkbenchState()
    for line_no, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ServiceError(f"annotations file line {line_no}: invalid JSON ({exc})") from exc
        state.apply("annotation", payload)
    return state


def _item_kind(state: WorkbenchState, item_id: str) -> tuple[str, str, str | None]:
    """Resolve an item id to (kind, response_id, label); kind in {response, claim, statement}."""
    if item_id in state.responses:
        return "response", item_id, None
    response_id, sep, rest = item_id.partition(":")
    if sep and response_id in state.responses:
        kind, sep2, label = rest.partition(":")
        if sep2 and kind in ("claim", "stmt"):
            resp = state.responses[response_id]
            if kind == "claim" and any(str(c["label"]) == label for c in resp["claims"]):
                return "claim", response_id, label
            if kind == "stmt" and any(s["label"] == label for s in resp["statements"]):
                return "statement", response_id, label
    raise NotFoundError(f"unknown item {item_id!r}")


def tasks_for_response(resp: dict) -> list[dict]:
    rid = resp["response_id"]
    tasks = [
        {"task_id": f"{rid}:user", "response_id": rid, "perspective": "user",
         "items": [{"item_id": rid, "variables": list(USER_TASK_VARIABLES)}]},
        {"task_id": f"{rid}:expert", "response_id": rid, "perspective": "expert",
         "items": [{"item_id": rid, "variables": list(EXPERT_TASK_VARIABLES)}]},
    ]
    for claim in resp["claims"]:
        label = claim["label"]
        tasks.append({
            "task_id": f"{rid}:dev:claim:{label}", "response_id": rid, "perspective": "developer",
            "items": [{"item_id": f"{rid}:claim:{label}", "variables": list(CLAIM_TASK_VARIABLES)}],
        })
    for statement in resp["statements"]:
        label = statement["label"]
        tasks.append({
            "task_id": f"{rid}:dev:stmt:{label}", "response_id": rid, "perspective": "developer",
            "items": [{"item_id": f"{rid}:stmt:{label}", "variables": list(STATEMENT_TASK_VARIABLES)}],
        })
    return tasks


class CounselService:
    def __init__(self, data_dir, index_path=None, prompt_config: PromptConfig | None = None,
                 default_mock_seed: int = 0, annotator_tokens: dict | None = None):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.store = Store(self.data_dir / "store.log")
        self.state = WorkbenchState.from_records(self.store.records())
        self.index_path = index_path
        self.index = None
        if index_path is not None and Path(index_path).is_file():
            self.index = load_index(index_path)
        self.prompt_config = prompt_config or PromptConfig.default()
        self.default_mock_seed = default_mock_seed
        self.annotator_tokens = annotator_tokens

    # -- queries ---------------------------------------------------------

    def _embedder(self):
        try:
            return mock_embedder_from_identity(self.index.embedder_id)
        except KnowledgeError:
            embedder = embedder_from_env()
            if embedder is None:
                raise ProviderError(
                    f"index was built with {self.index.embedder_id!r}; set COACH_EMBED_* to use it"
                ) from None
            return embedder

    def submit_query(self, payload: dict) -> dict:
        query = (payload.get("query") or "").strip()
        if not query:
            raise BadRequestError("query must be non-empty")
        if self.index is None:
            raise ConflictError("no index ingested; run `coach ingest --corpus <dir> --out <index>` "
                                "and restart with --index")
        diary_ref = payload.get("diary")
        if not diary_ref:
            raise BadRequestError("diary reference (path) is required")
        try:
            table = load_diary(diary_ref)
        except DiaryError as exc:
            raise BadRequestError(f"diary {diary_ref!r}: {exc}") from exc
        if not table.rows:
            raise BadRequestError(f"diary {diary_ref!r} has no rows")

        k = payload.get("k") or DEFAULT_TOP_K
        mock_seed = payload.get("mock_seed")
        client = completion_client_from_env(
            mock_seed=self.default_mock_seed if mock_seed is None else mock_seed)
        try:
            response = answer_query(table, query, self.index, self.prompt_config,
                                    client, self._embedder(), k=k)
        except TransientProviderError as exc:
            raise ProviderError(f"provider failure: {exc}") from exc
        except PipelineStageError as exc:
            if exc.stage in ("complete", "embed", "parse"):
                raise ProviderError(str(exc)) from exc
            raise BadRequestError(str(exc)) from exc

        if response.response_id not in self.state.responses:
            record_payload = {
                "response_id": response.response_id,
                "query": response.query,
                "claims": [{"label": c.label, "text": c.text} for c in response.claims],
                "statements": [{"label": s.label, "text": s.text} for s in response.statements],
                "retrieved_chunk_ids": list(response.retrieved_chunk_ids),
                "raw_text": response.raw_text,
                "corpus_version": response.corpus_version,
            }
            self.store.append("response", record_payload)
            self.state.apply("response", record_payload)
        return self.get_response(response.response_id)

    def get_response(self, response_id: str) -> dict:
        resp = self.state.responses.get(response_id)
        if resp is None:
            raise NotFoundError(f"unknown response {response_id!r}")
        chunks = []
        by_id = {c.chunk_id: c for c in self.index.chunks} if self.index else {}
        for chunk_id in resp["retrieved_chunk_ids"]:
            chunk = by_id.get(chunk_id)
            chunks.append({
                "chunk_id": chunk_id,
                "title": chunk.title if chunk else None,
                "text": chunk.text if chunk else None,
            })
        return {
            "response_id": resp["response_id"],
            "query": resp["query"],
            "user_view": user_view_text(resp["raw_text"]),
            "claims": resp["claims"],
            "statements": resp["statements"],
            "retrieved_chunk_ids": resp["retrieved_chunk_ids"],
            "retrieved_chunks": chunks,
            "corpus_version": resp["corpus_version"],
        }

    # -- tasks and annotations --------------------------------------------

    def _task_submitted(self, task: dict, annotator: str | None) -> bool:
        for item in task["items"]:
            for variable in item["variables"]:
                matching = [
                    r for r in self.state.annotations
                    if r.item_id == item["item_id"] and r.variable == variable
                    and (variable != "hallucination" or r.strictness == "strict")
                    and (annotator is None or r.annotator_id == annotator)
                ]
                if not matching:
                    return False
        return True

    def tasks(self, perspective: str | None = None, annotator: str | None = None) -> list[dict]:
        if perspective is not None and perspective not in PERSPECTIVE_VARIABLES:
            raise UnprocessableError(f"unknown perspective {perspective!r}")
        out = []
        for resp in self.state.responses.values():
            for task in tasks_for_response(resp):
                if perspective is not None and task["perspective"] != perspective:
                    continue
                task = dict(task)
                task["status"] = "submitted" if self._task_submitted(task, annotator) else "pending"
                out.append(task)
        return out

    def resolve_annotator(self, payload: dict, token: str | None) -> str:
        if self.annotator_tokens is not None:
            if not token:
                raise AuthError("missing bearer token")
            annotator = self.annotator_tokens.get(token)
            if annotator is None:
                raise AuthError("unknown bearer token")
            return annotator
        annotator = payload.get("annotator_id")
        if not annotator:
            raise UnprocessableError("annotator_id is required")
        return annotator

    def submit_annotation(self, payload: dict, token: str | None = None) -> dict:
        annotator = self.resolve_annotator(payload, token)
        payload = dict(payload, annotator_id=annotator)
        item_kind, _rid, _label = _item_kind(self.state, payload.get("item_id", ""))
        perspective = payload.get("perspective")
        variable = payload.get("variable")
        if item_kind == "response" and perspective == "developer":
            raise UnprocessableError("developer judgments target individual claims/statements")
        if item_kind != "response" and perspective != "developer":
            raise UnprocessableError(f"{perspective} judgments target whole responses")
        if item_kind == "claim" and variable not in CLAIM_TASK_VARIABLES:
            raise UnprocessableError(f"claims take faithfulness/completeness, not {variable!r}")
        if item_kind == "statement" and variable not in STATEMENT_TASK_VARIABLES:
            raise UnprocessableError(f"statements take hallucination, not {variable!r}")

        try:
            record = _annotation_from_payload(payload)
        except MetricsError as exc:
            raise UnprocessableError(str(exc)) from exc

        for existing in self.state.annotations:
            if (existing.annotator_id == record.annotator_id
                    and existing.item_id == record.item_id
                    and existing.variable == record.variable
                    and existing.strictness == record.strictness):
                raise ConflictError(
                    f"{record.annotator_id} already judged {record.variable} on {record.item_id}")

        timestamp = record.timestamp or utc_now()
        record_payload = {
            "annotator_id": record.annotator_id,
            "perspective": record.perspective,
            "item_id": record.item_id,
            "variable": record.variable,
            "value": record.value,
            "remark": record.remark,
            "strictness": record.strictness,
            "timestamp": timestamp,
        }
        stored = self.store.append("annotation", record_payload, timestamp=timestamp)
        self.state.apply("annotation", record_payload)
        return {"sequence_number": stored.sequence_number, "item_id": record.item_id,
                "variable": record.variable, "status": "stored"}

    # -- consensus ---------------------------------------------------------

    def submit_consensus(self, payload: dict) -> dict:
        variable = payload.get("variable")
        if variable not in PERSPECTIVE_VARIABLES["developer"]:
            raise UnprocessableError(f"consensus applies to developer variables, got {variable!r}")
        strictness = payload.get("strictness")
        if variable == "hallucination":
            strictness = strictness or "strict"
            if strictness not in ("strict", "lenient"):
                raise UnprocessableError(f"strictness must be strict or lenient, got {strictness!r}")
        elif strictness is not None:
            raise UnprocessableError("strictness only applies to hallucination")
        annotator_a = payload.get("annotator_a")
        annotator_b = payload.get("annotator_b")
        if not annotator_a or not annotator_b:
            raise UnprocessableError("annotator_a and annotator_b are required")
        resolutions = payload.get("resolutions") or {}

        def judgments(annotator: str) -> dict:
            return {
                r.item_id: r.value for r in self.state.annotations
                if r.annotator_id == annotator and r.variable == variable
                and (variable != "hallucination" or r.strictness == strictness)
            }

        set_a, set_b = judgments(annotator_a), judgments(annotator_b)
        if not set_a or not set_b:
            raise UnprocessableError("both annotators need judgments for this variable")
        try:
            merged = consensus_merge(set_a, set_b, resolutions)
        except MetricsError as exc:
            raise UnprocessableError(str(exc)) from exc
        record_payload = {
            "variable": variable,
            "strictness": strictness,
            "annotators": sorted([annotator_a, annotator_b]),
            "values": merged,
        }
        self.store.append("consensus", record_payload)
        self.state.apply("consensus", record_payload)
        return {"variable": variable, "strictness": strictness, "n_items": len(merged)}

    # -- reports -----------------------------------------------------------

    def report(self, strictness: str = "strict") -> QuorumReport:
        return report_or_empty(
            self.state.annotations, consensus=self.state.consensus,
            strictness=strictness, corpus_version=self.state.corpus_version,
        )

    def report_svg(self, strictness: str = "strict") -> str:
        return render_charts(self.report(strictness=strictness))


# --- HTTP layer ---------------------------------------------------------------


class QueryRequest(BaseModel):
    diary: str
    query: str
    k: int | None = None
    mock_seed: int | None = None


class AnnotationRequest(BaseModel):
    annotator_id: str | None = None
    perspective: str
    item_id: str
    variable: str
    value: int
    remark: str | None = None
    strictness: str | None = None


class ConsensusRequest(BaseModel):
    variable: str
    strictness: str | None = None
    annotator_a: str
    annotator_b: str
    resolutions: dict[str, int] = {}


def create_app(service: CounselService):
    from fastapi import FastAPI, Header, Query, Request
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import JSONResponse, Response

    app = FastAPI(title="coach workbench", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )

    @app.exception_handler(ServiceError)
    async def service_error_handler(_request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status_code, content={"detail": str(exc)})

    def bearer_token(authorization: str | None) -> str | None:
        if authorization and authorization.lower().startswith("bearer "):
            return authorization[7:].strip()
        return None

    @app.post("/queries")
    def post_query(body: QueryRequest):
        return service.submit_query(body.model_dump())

    @app.get("/responses/{response_id}")
    def get_response(response_id: str):
        return service.get_response(response_id)

    @app.get("/tasks")
    def get_tasks(perspective: str | None = Query(default=None),
                  annotator: str | None = Query(default=None)):
        return service.tasks(perspective=perspective, annotator=annotator)

    @app.post("/annotations")
    def post_annotation(body: AnnotationRequest, authorization: str | None = Header(default=None)):
        return service.submit_annotation(body.model_dump(), token=bearer_token(authorization))

    @app.post("/consensus")
    def post_consensus(body: ConsensusRequest):
        return service.submit_consensus(body.model_dump())

    @app.get("/report")
    def get_report(strictness: str = Query(default="strict")):
        if strictness not in ("strict", "lenient"):
            raise UnprocessableError(f"strictness must be strict or lenient, got {strictness!r}")
        return service.report(strictness=strictness).to_dict()

    @app.get("/report.svg")
    def get_report_svg(strictness: str = Query(default="strict")):
        if strictness not in ("strict", "lenient"):
            raise UnprocessableError(f"strictness must be strict or lenient, got {strictness!r}")
        return Response(content=service.report_svg(strictness=strictness),
                        media_type="image/svg+xml")

    return app
