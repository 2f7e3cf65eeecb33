"""Strict JSON run configuration.

Relative paths inside a config file resolve against the file's directory.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import social_choice
from .ach import PromptVariant
from .agents import EXECUTOR, AgentSpec, HttpBackend, SamplingParams, ScriptedBackend
from .orchestrator import DEFAULT_SHOTS, SINGLE_AGENT, Strategy
from .rewards import RewardWeights, ScoringOptions, make_embedder


class ConfigError(ValueError):
    def __init__(self, field: str, reason: str):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SamplingModel(_Strict):
    temperature: float = Field(0.6, ge=0)
    top_p: float = Field(0.95, gt=0, le=1)
    n: int = Field(5, ge=1)


class ScriptedAgentModel(_Strict):
    backend: Literal["scripted"]
    fixture: str
    role: Literal["executor", "decider"] = EXECUTOR
    sampling: SamplingModel = SamplingModel()


class HttpAgentModel(_Strict):
    backend: Literal["http"]
    endpoint: str
    model: str
    auth_env: Optional[str] = None
    timeout: float = Field(60.0, gt=0)
    max_retries: int = Field(3, ge=0)
    max_concurrency: int = Field(4, ge=1)
    role: Literal["executor", "decider"] = EXECUTOR
    sampling: SamplingModel = SamplingModel()


AgentModel = Annotated[Union[ScriptedAgentModel, HttpAgentModel], Field(discriminator="backend")]


class StrategyModel(_Strict):
    kind: Literal["single_agent", "informed_dictatorial", "voting", "ach_decision"]
    agent: Optional[str] = None
    rule: Optional[str] = None
    variant: Optional[str] = None
    anneal: Optional[tuple[int, int]] = None


class PoolSampleModel(_Strict):
    k: int = Field(ge=1)


class SeedsModel(_Strict):
    pool: Optional[int] = None
    variant: Optional[int] = None


class EmbedderModel(_Strict):
    provider: Literal["hash64", "http"] = "hash64"
    url: Optional[str] = None
    model: Optional[str] = None
    auth_env: Optional[str] = None


class WeightsModel(_Strict):
    format: float = 1.0
    answer: float = 1.0
    ach: float = 1.0


class RewardsModel(_Strict):
    stage: Literal[1, 2] = 1
    binary_ach: bool = False
    embedder: EmbedderModel = EmbedderModel()
    weights: WeightsModel = WeightsModel()


class SubsetModel(_Strict):
    per_subject: int = Field(ge=1)
    seed: int


class ConfigModel(_Strict):
    dataset: str
    subset: Optional[SubsetModel] = None
    agents: dict[str, AgentModel]
    executors: list[str] = Field(min_length=1)
    strategies: list[StrategyModel] = Field(min_length=1)
    baseline: Optional[StrategyModel] = None
    pool_sample: Optional[PoolSampleModel] = None
    seeds: SeedsModel = SeedsModel()
    rewards: Optional[RewardsModel] = None
    candidate_selection: Literal["first", "majority"] = "first"
    ballot_shots: Optional[str] = None
    score_max: int = Field(10, ge=1)
    output_dir: Optional[str] = None
    max_concurrency: int = Field(4, ge=1)

    @model_validator(mode="after")
    def _references(self):
        for i, name in enumerate(self.executors):
            if name not in self.agents:
                raise ValueError(f"executors[{i}]: unknown agent {name!r}")
        if self.pool_sample and self.pool_sample.k > len(self.executors):
            raise ValueError(f"pool_sample.k: {self.pool_sample.k} exceeds the {len(self.executors)} executors")
        if self.pool_sample and self.seeds.pool is None:
            raise ValueError("seeds.pool: required when pool_sample is set")
        return self


@dataclass(frozen=True)
class Seeds:
    pool: int | None = None
    variant: int | None = None


@dataclass
class RunConfig:
    source: Path | None
    config_hash: str
    dataset_path: Path
    agents: dict[str, AgentSpec]
    executors: list[str]
    strategies: list[Strategy]
    baseline: Strategy | None = None
    pool_k: int | None = None
    seeds: Seeds = field(default_factory=Seeds)
    scoring: ScoringOptions | None = None
    candidate_selection: str = "first"
    ballot_shots: str = DEFAULT_SHOTS
    score_max: int = 10
    output_dir: Path = Path("runs")
    max_concurrency: int = 4
    subset: tuple[int, int] | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def live_agents(self) -> list[AgentSpec]:
        return [a for a in self.agents.values() if a.is_live]

    @property
    def all_strategies(self) -> list[Strategy]:
        extra = [self.baseline] if self.baseline and self.baseline not in self.strategies else []
        return extra + list(self.strategies)


def _field_of(err: dict) -> str:
    loc = [str(p) for p in err.get("loc", ()) if p not in ("scripted", "http")]
    return ".".join(loc) or "config"


def _strategy(model: StrategyModel, agents: dict, where: str) -> Strategy:
    if model.kind == "voting":
        if model.rule not in social_choice.RULES:
            raise ConfigError(f"{where}.rule", f"unknown voting rule {model.rule!r}; expected one of {sorted(social_choice.RULES)}")
    else:
        if not model.agent:
            raise ConfigError(f"{where}.agent", f"{model.kind} needs an agent")
        if model.agent not in agents:
            raise ConfigError(f"{where}.agent", f"unknown agent {model.agent!r}")
    try:
        variant = PromptVariant.parse(model.variant) if model.variant else None
        return Strategy(model.kind, model.agent, model.rule, variant, tuple(model.anneal) if model.anneal else None)
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from None


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else (base / path)


def _agent(name: str, model: AgentModel, base: Path) -> AgentSpec:
    sampling = SamplingParams(**model.sampling.model_dump())
    if isinstance(model, ScriptedAgentModel):
        path = _resolve(base, model.fixture)
        try:
            backend = ScriptedBackend(str(path))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"agents.{name}.fixture", f"cannot load {path}: {exc}") from None
    else:
        backend = HttpBackend(
            model.endpoint, model.model, model.auth_env, model.timeout, model.max_retries,
            max_concurrency=model.max_concurrency,
        )
    return AgentSpec(name, backend, model.role, sampling)


def build_config(data: Any, base: Path = Path("."), source: Path | None = None) -> RunConfig:
    try:
        model = ConfigModel.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        msg = err["msg"].removeprefix("Value error, ")
        if not err.get("loc") and ": " in msg:
            where, msg = msg.split(": ", 1)
            raise ConfigError(where, msg) from None
        raise ConfigError(_field_of(err), msg) from None

    agents = {name: _agent(name, m, base) for name, m in model.agents.items()}
    strategies = [_strategy(s, agents, f"strategies[{i}]") for i, s in enumerate(model.strategies)]
    baseline = _strategy(model.baseline, agents, "baseline") if model.baseline else None
    if baseline is None:
        baseline = next((s for s in strategies if s.kind == SINGLE_AGENT), None)
    if baseline is not None and baseline.kind != SINGLE_AGENT:
        raise ConfigError("baseline.kind", "the baseline must be a single_agent strategy")
    if any(s.anneal for s in strategies) and model.seeds.variant is None:
        raise ConfigError("seeds.variant", "required when a strategy anneals its prompt variant")

    scoring = None
    if model.rewards:
        r = model.rewards
        embedder = None
        if r.stage == 2:
            opts = {k: v for k, v in r.embedder.model_dump().items() if k != "provider" and v is not None}
            try:
                embedder = make_embedder(r.embedder.provider, **opts)
            except (TypeError, RuntimeError) as exc:
                raise ConfigError("rewards.embedder", str(exc)) from None
        scoring = ScoringOptions(r.stage, RewardWeights(**r.weights.model_dump()), r.binary_ach, embedder)

    shots = DEFAULT_SHOTS
    if model.ballot_shots:
        try:
            shots = _resolve(base, model.ballot_shots).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError("ballot_shots", str(exc)) from None

    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return RunConfig(
        source=source,
        config_hash=hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
        dataset_path=_resolve(base, model.dataset),
        agents=agents,
        executors=list(model.executors),
        strategies=strategies,
        baseline=baseline,
        pool_k=model.pool_sample.k if model.pool_sample else None,
        seeds=Seeds(model.seeds.pool, model.seeds.variant),
        scoring=scoring,
        candidate_selection=model.candidate_selection,
        ballot_shots=shots,
        score_max=model.score_max,
        output_dir=_resolve(base, model.output_dir) if model.output_dir else Path("runs"),
        max_concurrency=model.max_concurrency,
        subset=(model.subset.per_subject, model.subset.seed) if model.subset else None,
        raw=data,
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("path", f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("path", f"{path} is not valid JSON: {exc}") from None
    return build_config(data, path.parent, path)
