"""Rule-based rewards for scoring decision-agent rollouts.

Stage 1 sums a format reward, an accuracy reward and a pattern-matched ACH
reward. Stage 2 swaps the ACH term for the cosine similarity between the
think block and the ACH script. The prompt variant used in stage 2 is drawn
from a cosine-annealed schedule that moves from the full to the simplified
scaffold over training.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import random
import re
import threading
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator, Mapping, Protocol

import httpx
import numpy as np

from . import ach
from .ach import PromptVariant
from .labels import first_label

STAGE1 = "Stage1"
STAGE2 = "Stage2"
ACH_CHECKS = len(ach.FULL_HEADINGS) + 1


class RewardError(ValueError):
    pass


class StepOutOfRange(RewardError):
    pass


class EmbedderUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class RewardWeights:
    format: float = 1.0
    answer: float = 1.0
    ach: float = 1.0


@dataclass(frozen=True)
class RewardBreakdown:
    format_score: float
    answer_score: float
    ach_score: float
    stage: str
    total: float

    def to_json(self) -> dict:
        return asdict(self)


def _breakdown(fmt: float, ans: float, ach_score: float, stage: str, weights: RewardWeights) -> RewardBreakdown:
    total = weights.format * fmt + weights.answer * ans + weights.ach * ach_score
    return RewardBreakdown(fmt, ans, ach_score, stage, total)


def format_reward(raw: str) -> float:
    try:
        ach.parse_decision_output(raw)
    except ach.MalformedOutput:
        return 0.0
    return 1.0


def accuracy_reward(answer_block: str, gold_label: str) -> float:
    return 1.0 if first_label(answer_block) == gold_label.strip().upper() else 0.0


def ach_pattern_reward(think: str, binary: bool = False) -> float:
    """Fraction of the 8 protocol checks passed: 7 headings plus a parseable grid."""
    headings = ach.find_headings(think)
    passed = sum(1 for h in ach.FULL_HEADINGS if headings.get(h))
    try:
        ach.parse_ach_report(think)
        passed += 1
    except ach.AchError:
        pass
    if binary:
        return 1.0 if passed == ACH_CHECKS else 0.0
    return passed / ACH_CHECKS


# Embedders ----------------------------------------------------------------


class Embedder(Protocol):
    def embed(self, text: str) -> np.ndarray: ...


class HashEmbedder:
    """Deterministic bag-of-words projection onto 64 signed hash buckets."""

    name = "hash64"

    def __init__(self, dim: int = 64):
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        tokens = re.findall(r"\w+", text.lower()) or [text]
        for tok in tokens:
            digest = hashlib.blake2b(tok.encode("utf-8"), digest_size=8).digest()
            h = int.from_bytes(digest, "big")
            vec[h % self.dim] += 1.0 if (h >> 63) & 1 else -1.0
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            vec[0], norm = 1.0, 1.0
        return vec / norm


class HttpEmbedder:
    """Embedding endpoint speaking the OpenAI ``/embeddings`` wire format."""

    def __init__(self, url: str, model: str, auth_env: str | None = None, timeout: float = 30.0,
                 transport: httpx.BaseTransport | None = None):
        self.url = url
        self.model = model
        self.auth_env = auth_env
        self.timeout = timeout
        self._client = httpx.Client(timeout=timeout, transport=transport)
        self._lock = threading.Lock()

    def embed(self, text: str) -> np.ndarray:
        headers = {}
        if self.auth_env:
            token = os.environ.get(self.auth_env)
            if not token:
                raise EmbedderUnavailable(f"environment variable {self.auth_env} is not set")
            headers["Authorization"] = f"Bearer {token}"
        try:
            with self._lock:
                resp = self._client.post(self.url, json={"model": self.model, "input": [text]}, headers=headers)
            resp.raise_for_status()
            vec = np.asarray(resp.json()["data"][0]["embedding"], dtype=float)
        except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
            raise EmbedderUnavailable(f"embedding request failed: {exc}") from exc
        norm = np.linalg.norm(vec)
        if vec.ndim != 1 or norm == 0.0:
            raise EmbedderUnavailable("embedding endpoint returned an unusable vector")
        return vec / norm


def make_embedder(provider: str = "hash64", **options) -> Embedder:
    if provider == "hash64":
        return HashEmbedder()
    if provider == "http":
        return HttpEmbedder(**options)
    raise EmbedderUnavailable(f"unknown embedder provider {provider!r}")


def soft_ach_reward(think: str, protocol_reference: str, embedder: Embedder) -> float:
    u = np.asarray(embedder.embed(think), dtype=float)
    v = np.asarray(embedder.embed(protocol_reference), dtype=float)
    if np.array_equal(u, v):
        return 1.0
    cos = float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))
    return min(1.0, max(0.0, cos))


# Composite scores ---------------------------------------------------------


def stage1_score(raw: str, gold_label: str, weights: RewardWeights = RewardWeights(),
                 binary_ach: bool = False) -> RewardBreakdown:
    try:
        think, answer = ach.parse_decision_output(raw)
    except ach.MalformedOutput:
        return _breakdown(0.0, 0.0, 0.0, STAGE1, weights)
    return _breakdown(
        1.0, accuracy_reward(answer, gold_label), ach_pattern_reward(think, binary_ach), STAGE1, weights
    )


def stage2_score(raw: str, gold_label: str, protocol_reference: str, embedder: Embedder,
                 weights: RewardWeights = RewardWeights()) -> RewardBreakdown:
    try:
        think, answer = ach.parse_decision_output(raw)
    except ach.MalformedOutput:
        return _breakdown(0.0, 0.0, 0.0, STAGE2, weights)
    soft = soft_ach_reward(think, protocol_reference, embedder) if think else 0.0
    return _breakdown(1.0, accuracy_reward(answer, gold_label), soft, STAGE2, weights)


# Curriculum ---------------------------------------------------------------


@dataclass(frozen=True)
class AnnealState:
    step: int
    total_steps: int
    p_full: float
    p_simple: float


def anneal_probability(step: int, total_steps: int) -> AnnealState:
    if total_steps < 1:
        raise StepOutOfRange(f"total_steps must be >= 1, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise StepOutOfRange(f"step {step} outside [0, {total_steps}]")
    p_full = 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
    return AnnealState(step, total_steps, p_full, 1.0 - p_full)


def sample_variant(state: AnnealState, rng: random.Random) -> PromptVariant:
    return PromptVariant.FULL if rng.random() < state.p_full else PromptVariant.SIMPLIFIED


# Rollout records ----------------------------------------------------------


@dataclass(frozen=True)
class RolloutRecord:
    item_id: str
    prompt: str
    variant: PromptVariant
    response: str
    gold_label: str
    breakdown: RewardBreakdown
    step: int = 0

    def to_json(self) -> dict:
        return {
            "item_id": self.item_id,
            "prompt": self.prompt,
            "variant": self.variant.value,
            "response": self.response,
            "gold_label": self.gold_label,
            "breakdown": self.breakdown.to_json(),
            "step": self.step,
        }


@dataclass
class ScoringOptions:
    stage: int = 1
    weights: RewardWeights = field(default_factory=RewardWeights)
    binary_ach: bool = False
    embedder: Embedder | None = None
    protocol_reference: str = field(default_factory=ach.protocol_reference)

    def score(self, raw: str, gold_label: str) -> RewardBreakdown:
        if self.stage == 1:
            return stage1_score(raw, gold_label, self.weights, self.binary_ach)
        if self.stage == 2:
            if self.embedder is None:
                raise EmbedderUnavailable("stage 2 scoring needs an embedder")
            return stage2_score(raw, gold_label, self.protocol_reference, self.embedder, self.weights)
        raise RewardError(f"unknown stage {self.stage}")


def score_transcript(rows: Iterable[Mapping], options: ScoringOptions) -> Iterator[RolloutRecord]:
    """Score transcript rows ``{item_id, prompt, variant, response, gold_label, step}``."""
    for row in rows:
        try:
            yield RolloutRecord(
                item_id=str(row["item_id"]),
                prompt=str(row.get("prompt", "")),
                variant=PromptVariant.parse(str(row.get("variant", PromptVariant.FULL.value))),
                response=str(row["response"]),
                gold_label=str(row["gold_label"]),
                breakdown=options.score(str(row["response"]), str(row["gold_label"])),
                step=int(row.get("step", 0)),
            )
        except KeyError as exc:
            raise RewardError(f"transcript row is missing field {exc.args[0]!r}") from None


def dump_jsonl(records: Iterable, fh) -> None:
    for rec in records:
        fh.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")
