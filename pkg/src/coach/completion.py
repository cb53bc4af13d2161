"""Completion client contract with a deterministic mock and an env-configured HTTP client.

All tests run against the mock; the live client reads COACH_LLM_ENDPOINT,
COACH_LLM_KEY, and COACH_LLM_MODEL (and the embedding twin reads COACH_EMBED_*).
"""

from __future__ import annotations

import hashlib
import os
import random
import re
from typing import Protocol

from .errors import WorkbenchError
from .knowledge import EmbeddingVector, TransientProviderError


class CompletionError(WorkbenchError):
    """Completion provider failure."""


class CompletionClient(Protocol):
    identity: str

    def complete(self, prompt: str) -> str: ...


_HEADER_ROW_RE = re.compile(r"^\|(.+)\|$")
_SOURCE_RE = re.compile(r"\[Source: (.+?)\]")

_CLAIM_TEMPLATES = (
    "Your {col} entries stayed fairly steady over the recent days.",
    "There were several days where {col} was not logged at all.",
    "The recent {col} values lean toward the higher end of their range.",
    "Your {col} shows a dip in the middle of the period.",
)

_STATEMENT_TEMPLATES = (
    "Guidance from {title} suggests keeping a regular daily rhythm.",
    "According to {title}, building activity up in small steps tends to work best.",
    "Based on {title}, planning short rest moments during the day can help.",
)


def _table_columns(prompt: str) -> list[str]:
    for line in prompt.splitlines():
        m = _HEADER_ROW_RE.match(line.strip())
        if not m:
            continue
        cells = [c.strip() for c in m.group(1).split("|")]
        names = [c for c in cells if c and set(c) != {"-"}]
        if names:
            return [n for n in names if n.lower() != "date"] or names
    return []


class MockCompletionClient:
    """Deterministic given (prompt, seed); emits well-formed marked counselling."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.identity = f"mock:counsel-v1:seed{seed}"

    def complete(self, prompt: str) -> str:
        digest = hashlib.sha256(f"{self.seed}|{prompt}".encode("utf-8")).digest()
        rng = random.Random(int.from_bytes(digest[:8], "big"))
        columns = _table_columns(prompt) or ["mood"]
        titles = _SOURCE_RE.findall(prompt) or ["the knowledge base"]

        n_claims = rng.randint(2, 3)
        sentences = []
        for i in range(1, n_claims + 1):
            template = rng.choice(_CLAIM_TEMPLATES)
            sentences.append(f"{template.format(col=rng.choice(columns))} ({i})")
        n_statements = rng.randint(1, min(3, len(titles)) if titles else 1)
        for i in range(n_statements):
            template = rng.choice(_STATEMENT_TEMPLATES)
            sentences.append(f"{template.format(title=rng.choice(titles))} ({chr(ord('A') + i)})")
        return " ".join(sentences)


class HttpCompletionClient:
    """Minimal chat-completion client for an OpenAI-compatible endpoint."""

    def __init__(self, endpoint: str, key: str, model: str, timeout: float = 60.0):
        self.endpoint = endpoint
        self.key = key
        self.model = model
        self.timeout = timeout
        self.identity = f"http:{model}"

    def complete(self, prompt: str) -> str:
        import httpx

        try:
            response = httpx.post(
                self.endpoint,
                headers={"Authorization": f"Bearer {self.key}"},
                json={"model": self.model, "messages": [{"role": "user", "content": prompt}]},
                timeout=self.timeout,
            )
        except httpx.TransportError as exc:
            raise TransientProviderError(f"completion transport failure: {exc}") from exc
        if response.status_code >= 500:
            raise TransientProviderError(f"completion provider returned {response.status_code}")
        if response.status_code != 200:
            raise CompletionError(f"completion provider returned {response.status_code}: {response.text}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise CompletionError(f"unexpected completion payload: {exc}") from exc


class HttpEmbedder:
    """Minimal embeddings client for an OpenAI-compatible endpoint."""

    def __init__(self, endpoint: str, key: str, model: str, timeout: float = 60.0):
        self.endpoint = endpoint
        self.key = key
        self.model = model
        self.timeout = timeout
        self.identity = f"http:{model}"

    def embed_text(self, text: str) -> EmbeddingVector:
        import httpx

        if not text or not text.strip():
            raise CompletionError("cannot embed empty text")
        try:
            response = httpx.post(
                self.endpoint,
                headers={"Authorization": f"Bearer {self.key}"},
                json={"model": self.model, "input": text},
                timeout=self.timeout,
            )
        except httpx.TransportError as exc:
            raise TransientProviderError(f"embedding transport failure: {exc}") from exc
        if response.status_code >= 500:
            raise TransientProviderError(f"embedding provider returned {response.status_code}")
        if response.status_code != 200:
            raise CompletionError(f"embedding provider returned {response.status_code}: {response.text}")
        try:
            return EmbeddingVector(tuple(response.json()["data"][0]["embedding"]))
        except (KeyError, IndexError, ValueError) as exc:
            raise CompletionError(f"unexpected embedding payload: {exc}") from exc


def completion_client_from_env(mock_seed: int = 0) -> CompletionClient:
    endpoint = os.environ.get("COACH_LLM_ENDPOINT")
    if not endpoint:
        return MockCompletionClient(seed=mock_seed)
    return HttpCompletionClient(
        endpoint=endpoint,
        key=os.environ.get("COACH_LLM_KEY", ""),
        model=os.environ.get("COACH_LLM_MODEL", ""),
    )


def embedder_from_env():
    endpoint = os.environ.get("COACH_EMBED_ENDPOINT")
    if not endpoint:
        return None
    return HttpEmbedder(
        endpoint=endpoint,
        key=os.environ.get("COACH_EMBED_KEY", ""),
        model=os.environ.get("COACH_EMBED_MODEL", ""),
    )
