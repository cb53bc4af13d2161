"""Knowledge corpus: chunking, embedding contract, and top-k cosine retrieval.

The corpus lives in a directory with a ``manifest`` file (one ``id<TAB>title<TAB>source``
line per document) next to ``<id>.txt`` bodies. Retrieval is an exact scan; desk-scale
corpora do not need approximate structures.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

from .errors import WorkbenchError

DEFAULT_TOP_K = 4
DEFAULT_TARGET_TOKENS = 400
DEFAULT_OVERLAP_TOKENS = 50
MOCK_DIMENSION = 256

_TAG_RE = re.compile(r"<[a-zA-Z/!][^>]*>")


class KnowledgeError(WorkbenchError):
    """Invalid corpus input or retrieval misuse."""


class TransientProviderError(WorkbenchError):
    """Provider failure that is worth retrying."""


@dataclass(frozen=True)
class KnowledgeDocument:
    doc_id: str
    source: str
    title: str
    body: str

    def __post_init__(self):
        if not self.body or not self.body.split():
            raise KnowledgeError(f"document {self.doc_id!r}: empty body")


@dataclass(frozen=True)
class KnowledgeChunk:
    chunk_id: str
    title: str
    text: str
    token_count: int


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    @property
    def dimension(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ChunkIndex:
    chunks: tuple[KnowledgeChunk, ...]
    embeddings: tuple[EmbeddingVector, ...]
    corpus_version: int
    embedder_id: str

    def __post_init__(self):
        if len(self.chunks) != len(self.embeddings):
            raise KnowledgeError("chunks and embeddings must be aligned")


class Embedder(Protocol):
    identity: str

    def embed_text(self, text: str) -> EmbeddingVector: ...


class MockEmbedder:
    """Deterministic bag-of-tokens embedder: tokens hash into fixed buckets.

    Identical texts always produce identical vectors; texts with bucket-disjoint
    vocabularies have cosine similarity 0.
    """

    def __init__(self, seed: int = 0, dimension: int = MOCK_DIMENSION):
        self.seed = seed
        self.dimension = dimension
        self.identity = f"mock-bag{dimension}-seed{seed}"

    def bucket(self, token: str) -> int:
        digest = hashlib.sha256(f"{self.seed}|{token}".encode("utf-8")).digest()
        return int.from_bytes(digest[:4], "big") % self.dimension

    def embed_text(self, text: str) -> EmbeddingVector:
        tokens = text.lower().split()
        if not tokens:
            raise KnowledgeError("cannot embed empty text")
        counts = [0.0] * self.dimension
        for token in tokens:
            counts[self.bucket(token)] += 1.0
        return EmbeddingVector(tuple(counts))


def mock_embedder_from_identity(identity: str) -> MockEmbedder:
    m = re.match(r"^mock-bag(\d+)-seed(-?\d+)$", identity)
    if not m:
        raise KnowledgeError(f"not a mock embedder identity: {identity!r}")
    return MockEmbedder(seed=int(m.group(2)), dimension=int(m.group(1)))


def with_retries(call: Callable[[], object], retries: int = 3, base_delay: float = 0.1,
                 sleep: Callable[[float], None] = time.sleep):
    """Run a provider call, retrying transient failures with exponential backoff."""
    attempt = 0
    while True:
        try:
            return call()
        except TransientProviderError:
            if attempt >= retries:
                raise
            sleep(base_delay * (2 ** attempt))
            attempt += 1


def chunk_document(doc: KnowledgeDocument, target_tokens: int = DEFAULT_TARGET_TOKENS,
                   overlap_tokens: int = DEFAULT_OVERLAP_TOKENS) -> list[KnowledgeChunk]:
    """Split a document into overlapping whitespace-token windows.

    Consecutive chunks share exactly overlap_tokens tokens (except possibly around
    a short final chunk) and every token lands in at least one chunk.
    """
    if overlap_tokens < 0 or target_tokens <= overlap_tokens:
        raise KnowledgeError("need target_tokens > overlap_tokens >= 0")
    tokens = doc.body.split()
    if not tokens:
        raise KnowledgeError(f"document {doc.doc_id!r}: empty body")
    stride = target_tokens - overlap_tokens
    chunks = []
    start = 0
    ordinal = 0
    while True:
        window = tokens[start:start + target_tokens]
        chunks.append(KnowledgeChunk(
            chunk_id=f"{doc.doc_id}#{ordinal:04d}",
            title=doc.title,
            text=" ".join(window),
            token_count=len(window),
        ))
        if start + target_tokens >= len(tokens):
            break
        start += stride
        ordinal += 1
    return chunks


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dimension != b.dimension:
        raise KnowledgeError(f"dimension mismatch: {a.dimension} vs {b.dimension}")
    dot = sum(x * y for x, y in zip(a.values, b.values))
    norm_a = math.sqrt(sum(x * x for x in a.values))
    norm_b = math.sqrt(sum(y * y for y in b.values))
    if norm_a == 0.0 or norm_b == 0.0:
        raise KnowledgeError("cosine similarity undefined for a zero vector")
    return max(-1.0, min(1.0, dot / (norm_a * norm_b)))


def build_index(docs: list[KnowledgeDocument], embedder: Embedder,
                target_tokens: int = DEFAULT_TARGET_TOKENS,
                overlap_tokens: int = DEFAULT_OVERLAP_TOKENS,
                previous_version: int = 0,
                sleep: Callable[[float], None] = time.sleep) -> ChunkIndex:
    """Chunk and embed all documents into a fresh index with a bumped corpus version."""
    if not docs:
        raise KnowledgeError("cannot build an index from zero documents")
    chunks: list[KnowledgeChunk] = []
    for doc in docs:
        chunks.extend(chunk_document(doc, target_tokens, overlap_tokens))
    ids = [c.chunk_id for c in chunks]
    if len(set(ids)) != len(ids):
        raise KnowledgeError("duplicate chunk ids; document ids must be unique")
    embeddings = [with_retries(lambda c=c: embedder.embed_text(c.text), sleep=sleep) for c in chunks]
    dims = {e.dimension for e in embeddings}
    if len(dims) > 1:
        raise KnowledgeError(f"embedder returned mixed dimensions: {sorted(dims)}")
    return ChunkIndex(
        chunks=tuple(chunks),
        embeddings=tuple(embeddings),
        corpus_version=previous_version + 1,
        embedder_id=embedder.identity,
    )


def retrieve(index: ChunkIndex, query_vec: EmbeddingVector,
             k: int = DEFAULT_TOP_K) -> list[tuple[KnowledgeChunk, float]]:
    """Return the min(k, |index|) most similar chunks, ties broken by ascending chunk_id."""
    if not index.chunks:
        raise KnowledgeError("cannot retrieve from an empty index")
    if k < 1:
        raise KnowledgeError(f"k must be positive, got {k}")
    scored = [
        (chunk, cosine_similarity(emb, query_vec))
        for chunk, emb in zip(index.chunks, index.embeddings)
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0].chunk_id))
    return scored[:k]


def load_corpus(corpus_dir) -> list[KnowledgeDocument]:
    """Read documents listed in <dir>/manifest; strips simple HTML tags from bodies."""
    root = Path(corpus_dir)
    manifest = root / "manifest"
    if not manifest.is_file():
        raise KnowledgeError(f"no manifest file in {root}")
    docs = []
    for line_no, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t", 2)
        if len(parts) != 3:
            raise KnowledgeError(f"manifest line {line_no}: expected 'id<TAB>title<TAB>source'")
        doc_id, title, source = (p.strip() for p in parts)
        body_path = root / f"{doc_id}.txt"
        if not body_path.is_file():
            raise KnowledgeError(f"manifest entry {doc_id!r}: missing body file {body_path.name}")
        body = _TAG_RE.sub(" ", body_path.read_text(encoding="utf-8"))
        docs.append(KnowledgeDocument(doc_id=doc_id, source=source, title=title, body=body))
    if not docs:
        raise KnowledgeError(f"manifest in {root} lists no documents")
    return docs


def save_index(index: ChunkIndex, path) -> None:
    payload = {
        "corpus_version": index.corpus_version,
        "embedder_id": index.embedder_id,
        "chunks": [
            {"chunk_id": c.chunk_id, "title": c.title, "text": c.text, "token_count": c.token_count}
            for c in index.chunks
        ],
        "embeddings": [list(e.values) for e in index.embeddings],
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_index(path) -> ChunkIndex:
    p = Path(path)
    try:
        payload = json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise KnowledgeError(f"cannot read index file {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise KnowledgeError(f"index file {p} is not valid JSON: {exc}") from exc
    return ChunkIndex(
        chunks=tuple(KnowledgeChunk(**c) for c in payload["chunks"]),
        embeddings=tuple(EmbeddingVector(tuple(v)) for v in payload["embeddings"]),
        corpus_version=payload["corpus_version"],
        embedder_id=payload["embedder_id"],
    )
