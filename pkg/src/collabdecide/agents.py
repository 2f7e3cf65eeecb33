"""Agent backends: OpenAI-compatible HTTP endpoints and scripted fixtures.

Scripted fixtures are JSON objects mapping :func:`stable_hash` of a prompt
to a list of response texts, which makes whole runs replayable offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import httpx

from .ach import answer_block
from .labels import OPTION_LABELS, first_label, last_label

logger = logging.getLogger(__name__)

EXECUTOR = "executor"
DECIDER = "decider"


class AgentError(RuntimeError):
    pass


class BackendTimeout(AgentError):
    """Transient failures persisted through every retry."""


class BackendRejected(AgentError):
    """The backend answered with a non-retryable error."""


class FixtureMiss(AgentError):
    pass


class KTooLarge(ValueError):
    pass


def stable_hash(text: str) -> str:
    """64-bit BLAKE2b digest of the UTF-8 text as 16 hex characters."""
    return hashlib.blake2b(text.encode("utf-8"), digest_size=8).hexdigest()


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.6
    top_p: float = 0.95
    n: int = 5

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.n < 1:
            raise ValueError("n must be >= 1")


@dataclass
class HttpBackend:
    endpoint: str
    model: str
    auth_env: str | None = None
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 0.5
    max_concurrency: int = 4
    transport: httpx.BaseTransport | None = field(default=None, repr=False, compare=False)
    sleep: Callable[[float], None] = field(default=time.sleep, repr=False, compare=False)
    _client: httpx.Client | None = field(default=None, init=False, repr=False, compare=False)
    _slots: threading.Semaphore | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        self._slots = threading.BoundedSemaphore(self.max_concurrency)

    def _http(self) -> httpx.Client:
        if self._client is None:
            self._client = httpx.Client(timeout=self.timeout, transport=self.transport)
        return self._client

    def _headers(self) -> dict[str, str]:
        if not self.auth_env:
            return {}
        token = os.environ.get(self.auth_env)
        if not token:
            raise BackendRejected(f"environment variable {self.auth_env} is not set")
        return {"Authorization": f"Bearer {token}"}

    def _request(self, prompt: str, params: SamplingParams, n: int) -> list[str]:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "n": n,
        }
        headers = self._headers()
        last_error = "no attempt made"
        for attempt in range(self.max_retries + 1):
            if attempt:
                self.sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self._http().post(self.endpoint, json=payload, headers=headers)
            except httpx.TransportError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                logger.warning("attempt %d to %s failed: %s", attempt + 1, self.endpoint, last_error)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                logger.warning("attempt %d to %s got %s", attempt + 1, self.endpoint, last_error)
                continue
            if resp.status_code >= 400:
                raise BackendRejected(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                choices = sorted(resp.json()["choices"], key=lambda c: c.get("index", 0))
                return [str(c["message"]["content"] or "") for c in choices]
            except (ValueError, KeyError, TypeError) as exc:
                raise BackendRejected(f"malformed chat-completion response: {exc}") from exc
        raise BackendTimeout(f"{self.endpoint}: gave up after {self.max_retries + 1} attempts ({last_error})")

    def complete(self, prompt: str, params: SamplingParams) -> list[str]:
        texts: list[str] = []
        # Some servers ignore n and return one choice; ask again for the rest.
        for _ in range(params.n):
            texts += self._request(prompt, params, params.n - len(texts))
            if len(texts) >= params.n:
                return texts[: params.n]
        raise BackendRejected(f"backend returned {len(texts)} of {params.n} requested choices")


@dataclass
class ScriptedBackend:
    fixture: str | None = None
    entries: Mapping[str, Sequence[str]] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.entries is None:
            if self.fixture is None:
                raise ValueError("a scripted backend needs a fixture path or entries")
            with open(self.fixture, encoding="utf-8") as fh:
                self.entries = json.load(fh)

    def complete(self, prompt: str, params: SamplingParams) -> list[str]:
        key = stable_hash(prompt)
        texts = self.entries.get(key)
        if not texts:
            raise FixtureMiss(f"no scripted response for prompt hash {key}")
        return [texts[i % len(texts)] for i in range(params.n)]


@dataclass
class AgentSpec:
    id: str
    backend: HttpBackend | ScriptedBackend
    role: str = EXECUTOR
    sampling: SamplingParams = field(default_factory=SamplingParams)

    @property
    def is_live(self) -> bool:
        return isinstance(self.backend, HttpBackend)


@dataclass(frozen=True)
class AgentResponse:
    agent_id: str
    sample_index: int
    text: str
    extracted_label: str | None = None
    latency_ms: int = 0

    def to_json(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "sample_index": self.sample_index,
            "text": self.text,
            "extracted_label": self.extracted_label,
            "latency_ms": self.latency_ms,
        }


def generate(
    agent: AgentSpec,
    prompt: str,
    params: SamplingParams | None = None,
    options: Sequence[str] = OPTION_LABELS,
) -> list[AgentResponse]:
    """Draw ``params.n`` responses from one agent, ordered by sample index."""
    params = params or agent.sampling
    start = time.perf_counter()
    texts = agent.backend.complete(prompt, params)
    if len(texts) != params.n:
        raise BackendRejected(f"{agent.id}: expected {params.n} responses, got {len(texts)}")
    latency = 0 if isinstance(agent.backend, ScriptedBackend) else int((time.perf_counter() - start) * 1000)
    return [
        AgentResponse(agent.id, i, text, extract_choice(text, options), latency)
        for i, text in enumerate(texts)
    ]


# Extraction ---------------------------------------------------------------


def extract_choice(text: str, options: Sequence[str]) -> str | None:
    """Option label from the answer block if present, else the last label in the text."""
    block = answer_block(text)
    if block is not None:
        return first_label(block, options)
    return last_label(text, options)


_RANKING_LINE = re.compile(r"^\W*ranking\W*?:\s*(.*)$", re.IGNORECASE | re.MULTILINE)
_SCORES_LINE = re.compile(r"^\W*scores?\W*?:\s*(.*)$", re.IGNORECASE | re.MULTILINE)
_SCORE_PAIR = re.compile(r"\(?([A-Za-z])\)?\s*[=:]\s*(\d+(?:\.\d+)?)")


def extract_ranking(text: str, options: Sequence[str]) -> list[str] | None:
    m = _RANKING_LINE.search(text)
    if not m:
        return None
    allowed = {o.upper(): o for o in options}
    ranking: list[str] = []
    for piece in re.split(r"[>,]", m.group(1)):
        token = piece.strip().strip("()[]*.` ").upper()
        if token in allowed and allowed[token] not in ranking:
            ranking.append(allowed[token])
    return ranking or None


def extract_scores(text: str, options: Sequence[str], score_max: int = 10) -> dict[str, float] | None:
    """Parse a ``Scores: A=9, B=3`` line; out-of-range or unknown entries are dropped."""
    m = _SCORES_LINE.search(text)
    if not m:
        return None
    allowed = {o.upper(): o for o in options}
    scores: dict[str, float] = {}
    for label, value in _SCORE_PAIR.findall(m.group(1)):
        label = label.upper()
        number = float(value)
        if label in allowed and allowed[label] not in scores and 0 <= number <= score_max:
            scores[allowed[label]] = int(number) if number.is_integer() else number
    return scores or None


def sample_pool(pool: Sequence[AgentSpec], k: int, rng: random.Random) -> list[AgentSpec]:
    """Uniform k-subset without replacement, kept in pool order."""
    if not 1 <= k <= len(pool):
        raise KTooLarge(f"cannot draw {k} agents from a pool of {len(pool)}")
    picked = sorted(rng.sample(range(len(pool)), k))
    return [pool[i] for i in picked]


def load_fixture(path: str | Path) -> dict[str, list[str]]:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
