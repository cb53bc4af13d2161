import math
import random

import pytest

from coach.knowledge import (
    EmbeddingVector,
    KnowledgeDocument,
    KnowledgeError,
    MockEmbedder,
    TransientProviderError,
    build_index,
    chunk_document,
    cosine_similarity,
    load_corpus,
    load_index,
    mock_embedder_from_identity,
    retrieve,
    save_index,
    with_retries,
)
from helpers import brute_force_top_k


def doc(doc_id: str, n_tokens: int, word: str = "w") -> KnowledgeDocument:
    body = " ".join(f"{word}{i}" for i in range(n_tokens))
    return KnowledgeDocument(doc_id=doc_id, source="src", title=f"Doc {doc_id}", body=body)


# --- chunking ----------------------------------------------------------------

def test_short_doc_is_one_chunk():
    chunks = chunk_document(doc("a", 300), target_tokens=400, overlap_tokens=50)
    assert len(chunks) == 1
    assert chunks[0].token_count == 300


def test_empty_document_rejected():
    with pytest.raises(KnowledgeError, match="empty body"):
        KnowledgeDocument(doc_id="a", source="s", title="t", body="   ")


def test_chunk_starts_follow_stride():
    d = doc("a", 900)
    chunks = chunk_document(d, target_tokens=400, overlap_tokens=50)
    tokens = d.body.split()
    assert len(chunks) == 3
    # stride = target - overlap = 350: starts at 0, 350, 700; recount by token content
    assert chunks[0].text == " ".join(tokens[0:400])
    assert chunks[1].text == " ".join(tokens[350:750])
    assert chunks[2].text == " ".join(tokens[700:900])


def test_chunk_coverage_and_overlap_property():
    rng = random.Random(3)
    for _ in range(20):
        n = rng.randint(1, 1200)
        target = rng.randint(2, 300)
        overlap = rng.randint(0, target - 1)
        d = doc("a", n)
        tokens = d.body.split()
        chunks = chunk_document(d, target_tokens=target, overlap_tokens=overlap)
        rebuilt = []
        stride = target - overlap
        for i, chunk in enumerate(chunks):
            start = i * stride
            window = tokens[start:start + target]
            assert chunk.text == " ".join(window)  # contiguous token substring
            rebuilt.extend(window[overlap if i else 0:])
        assert rebuilt == tokens  # every token covered, in order


def test_bad_chunk_params_rejected():
    with pytest.raises(KnowledgeError, match="target_tokens > overlap_tokens"):
        chunk_document(doc("a", 10), target_tokens=50, overlap_tokens=50)


# --- mock embedder -------------------------------------------------------------

def test_mock_embedder_is_pure():
    emb = MockEmbedder(seed=0)
    assert emb.embed_text("sleep") == emb.embed_text("sleep")


def test_mock_embedder_disjoint_vocabulary_is_orthogonal():
    emb = MockEmbedder(seed=0)
    a_words, b_words = ["sleep", "rest", "bedtime"], ["walking", "strength", "outdoors"]
    # vocabulary chosen to occupy disjoint hash buckets; verify the construction
    assert {emb.bucket(w) for w in a_words}.isdisjoint({emb.bucket(w) for w in b_words})
    sim = cosine_similarity(emb.embed_text(" ".join(a_words)), emb.embed_text(" ".join(b_words)))
    assert sim == 0.0


def test_mock_embedder_rejects_empty_text():
    with pytest.raises(KnowledgeError, match="empty text"):
        MockEmbedder().embed_text("   ")


def test_mock_embedder_identity_round_trip():
    emb = mock_embedder_from_identity(MockEmbedder(seed=9).identity)
    assert emb.seed == 9 and emb.dimension == 256


# --- cosine ----------------------------------------------------------------------

def test_cosine_self_similarity_is_one():
    v = EmbeddingVector((1.0, 2.0, 3.0))
    assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-12)


def test_cosine_orthogonal_is_zero():
    assert cosine_similarity(EmbeddingVector((1.0, 0.0)), EmbeddingVector((0.0, 1.0))) == 0.0


def test_cosine_45_degrees():
    sim = cosine_similarity(EmbeddingVector((1.0, 1.0)), EmbeddingVector((1.0, 0.0)))
    assert abs(sim - 1.0 / math.sqrt(2.0)) < 1e-9


def test_cosine_dimension_mismatch():
    with pytest.raises(KnowledgeError, match="dimension mismatch"):
        cosine_similarity(EmbeddingVector((1.0,)), EmbeddingVector((1.0, 2.0)))


def test_cosine_zero_vector_rejected():
    with pytest.raises(KnowledgeError, match="zero vector"):
        cosine_similarity(EmbeddingVector((0.0, 0.0)), EmbeddingVector((1.0, 0.0)))


# --- index build ------------------------------------------------------------------

def test_build_index_counts_and_version():
    emb = MockEmbedder()
    index = build_index([doc("a", 10), doc("b", 10)], emb)
    assert len(index.chunks) == 2
    assert index.corpus_version == 1
    rebuilt = build_index([doc("a", 10), doc("b", 10)], emb, previous_version=index.corpus_version)
    assert [c.chunk_id for c in rebuilt.chunks] == [c.chunk_id for c in index.chunks]
    assert rebuilt.corpus_version == 2


def test_build_index_requires_documents():
    with pytest.raises(KnowledgeError, match="zero documents"):
        build_index([], MockEmbedder())


class FlakyEmbedder:
    def __init__(self, failures: int):
        self.failures = failures
        self.calls = 0
        self.inner = MockEmbedder()
        self.identity = "flaky"

    def embed_text(self, text):
        self.calls += 1
        if self.calls <= self.failures:
            raise TransientProviderError("blip")
        return self.inner.embed_text(text)


def test_transient_failures_are_retried():
    flaky = FlakyEmbedder(failures=3)
    index = build_index([doc("a", 5)], flaky, sleep=lambda _t: None)
    assert len(index.chunks) == 1
    assert flaky.calls == 4  # 1 initial + 3 retries


def test_persistent_failure_propagates_after_retries():
    flaky = FlakyEmbedder(failures=99)
    with pytest.raises(TransientProviderError):
        build_index([doc("a", 5)], flaky, sleep=lambda _t: None)
    assert flaky.calls == 4


def test_with_retries_backoff_schedule():
    delays = []
    flaky = FlakyEmbedder(failures=2)
    with_retries(lambda: flaky.embed_text("x"), base_delay=0.1, sleep=delays.append)
    assert delays == [0.1, 0.2]


# --- retrieval ---------------------------------------------------------------------

def make_index(texts: list[str], emb: MockEmbedder):
    docs = [KnowledgeDocument(doc_id=f"d{i}", source="s", title=f"T{i}", body=t)
            for i, t in enumerate(texts)]
    return build_index(docs, emb, target_tokens=50, overlap_tokens=0)


def test_retrieve_returns_all_when_fewer_than_k():
    emb = MockEmbedder()
    index = make_index(["alpha beta", "gamma delta", "epsilon zeta"], emb)
    assert len(retrieve(index, emb.embed_text("alpha"), k=4)) == 3


def test_retrieve_exact_match_first():
    emb = MockEmbedder()
    index = make_index(["alpha beta", "gamma delta"], emb)
    results = retrieve(index, emb.embed_text("alpha beta"), k=2)
    assert results[0][0].chunk_id == "d0#0000"
    assert results[0][1] == pytest.approx(1.0, abs=1e-12)


def test_retrieve_tie_broken_by_chunk_id():
    emb = MockEmbedder()
    index = make_index(["same text here", "same text here"], emb)
    results = retrieve(index, emb.embed_text("same text here"), k=2)
    assert [r[0].chunk_id for r in results] == ["d0#0000", "d1#0000"]


def test_retrieve_deterministic_and_sorted():
    rng = random.Random(5)
    emb = MockEmbedder()
    words = "one two three four five six seven eight nine ten".split()
    texts = [" ".join(rng.choices(words, k=rng.randint(3, 12))) for _ in range(8)]
    index = make_index(texts, emb)
    query = emb.embed_text(" ".join(rng.choices(words, k=5)))
    first = retrieve(index, query, k=4)
    second = retrieve(index, query, k=4)
    assert first == second
    sims = [s for _, s in first]
    assert all(sims[i] >= sims[i + 1] for i in range(len(sims) - 1))
    oracle = brute_force_top_k(index, query.values, 4)
    assert [c.chunk_id for c, _ in first] == [cid for cid, _ in oracle]


def test_retrieve_empty_index_rejected():
    emb = MockEmbedder()
    index = make_index(["x"], emb)
    empty = type(index)(chunks=(), embeddings=(), corpus_version=1, embedder_id=emb.identity)
    with pytest.raises(KnowledgeError, match="empty index"):
        retrieve(empty, emb.embed_text("x"))


# --- corpus loading and index files ---------------------------------------------------

def test_load_corpus_and_round_trip_index(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    (corpus / "manifest").write_text(
        "sleep\tSleeping well\thttps://example.org/sleep\n"
        "move\tMoving more\thttps://example.org/move\n", encoding="utf-8")
    (corpus / "sleep.txt").write_text("<p>Good sleep needs a regular rhythm.</p>", encoding="utf-8")
    (corpus / "move.txt").write_text("Movement helps energy levels.", encoding="utf-8")
    docs = load_corpus(corpus)
    assert [d.doc_id for d in docs] == ["sleep", "move"]
    assert "<p>" not in docs[0].body

    emb = MockEmbedder()
    index = build_index(docs, emb)
    path = tmp_path / "index.json"
    save_index(index, path)
    assert load_index(path) == index


def test_load_corpus_missing_body_file(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    (corpus / "manifest").write_text("a\tA\tsrc\n", encoding="utf-8")
    with pytest.raises(KnowledgeError, match="missing body file"):
        load_corpus(corpus)
