"""Two-phase pipeline: execution agents answer, then one decision step resolves.

The decision step is one of four strategies: trust a single agent, ask a
decider with an unstructured prompt, aggregate ballots with a voting rule,
or ask a decider to run the ACH protocol.
"""

from __future__ import annotations

import logging
import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from typing import TYPE_CHECKING, Mapping, Sequence

from . import ach, social_choice
from .ach import AchReport, PromptVariant
from .agents import (
    AgentError,
    AgentResponse,
    AgentSpec,
    SamplingParams,
    extract_choice,
    extract_ranking,
    extract_scores,
    generate,
    sample_pool,
    stable_hash,
)
from .datasets import McqaItem
from .rewards import RewardBreakdown, anneal_probability, sample_variant
from .social_choice import Profile, VoteResult

if TYPE_CHECKING:
    from .config import RunConfig

logger = logging.getLogger(__name__)

SINGLE_AGENT = "single_agent"
INFORMED_DICTATORIAL = "informed_dictatorial"
VOTING = "voting"
ACH_DECISION = "ach_decision"
STRATEGY_KINDS = (SINGLE_AGENT, INFORMED_DICTATORIAL, VOTING, ACH_DECISION)


class OrchestrationError(RuntimeError):
    pass


class AllAgentsFailed(OrchestrationError):
    pass


class NoValidBallots(OrchestrationError):
    pass


class DeciderFailed(OrchestrationError):
    pass


@dataclass(frozen=True)
class Strategy:
    kind: str
    agent: str | None = None
    rule: str | None = None
    variant: PromptVariant | None = None
    # (step, total_steps): draw the ACH variant per item from the annealing schedule
    anneal: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.kind == VOTING:
            if self.rule not in social_choice.RULES:
                raise ValueError(f"unknown voting rule {self.rule!r}")
        elif not self.agent:
            raise ValueError(f"{self.kind} needs an agent id")
        if self.anneal is not None:
            if self.kind != ACH_DECISION:
                raise ValueError("only ach_decision strategies can anneal their prompt variant")
            anneal_probability(*self.anneal)
            object.__setattr__(self, "variant", None)
        elif self.kind == ACH_DECISION and self.variant is None:
            object.__setattr__(self, "variant", PromptVariant.FULL)

    @classmethod
    def single_agent(cls, agent: str) -> "Strategy":
        return cls(SINGLE_AGENT, agent=agent)

    @classmethod
    def informed(cls, decider: str) -> "Strategy":
        return cls(INFORMED_DICTATORIAL, agent=decider)

    @classmethod
    def voting(cls, rule: str) -> "Strategy":
        return cls(VOTING, rule=rule)

    @classmethod
    def ach_decision(cls, decider: str, variant: PromptVariant = PromptVariant.FULL) -> "Strategy":
        return cls(ACH_DECISION, agent=decider, variant=variant)

    @property
    def name(self) -> str:
        if self.kind == VOTING:
            return f"voting[{self.rule}]"
        if self.kind == ACH_DECISION:
            if self.anneal is not None:
                return f"ach_decision[{self.agent},annealed@{self.anneal[0]}/{self.anneal[1]}]"
            return f"ach_decision[{self.agent},{self.variant.value}]"
        return f"{self.kind}[{self.agent}]"

    @property
    def uses_ballots(self) -> bool:
        return self.kind == VOTING

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.agent is not None:
            out["agent"] = self.agent
        if self.rule is not None:
            out["rule"] = self.rule
        if self.variant is not None:
            out["variant"] = self.variant.value
        if self.anneal is not None:
            out["anneal"] = list(self.anneal)
        return out


@dataclass(frozen=True)
class History:
    query: str
    responses: tuple[AgentResponse, ...]
    samples: tuple[AgentResponse, ...] = ()
    trace: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "query": self.query,
            "responses": [r.to_json() for r in self.responses],
            "samples": [r.to_json() for r in self.samples],
            "trace": list(self.trace),
        }


@dataclass(frozen=True)
class DecisionRecord:
    item_id: str
    strategy: Strategy
    history: History
    final_label: str | None
    correct: bool
    ach_report: AchReport | None = None
    vote_result: VoteResult | None = None
    breakdown: RewardBreakdown | None = None
    trace: tuple[str, ...] = ()
    decider_response: AgentResponse | None = None
    subject: str | None = None

    def to_json(self) -> dict:
        return {
            "item_id": self.item_id,
            "subject": self.subject,
            "strategy": self.strategy.to_json(),
            "history": self.history.to_json(),
            "final_label": self.final_label,
            "correct": self.correct,
            "ach_report": self.ach_report.to_json() if self.ach_report else None,
            "vote_result": self.vote_result.to_json() if self.vote_result else None,
            "breakdown": self.breakdown.to_json() if self.breakdown else None,
            "decider_response": self.decider_response.to_json() if self.decider_response else None,
            "trace": list(self.trace),
        }


# Prompts ------------------------------------------------------------------

DEFAULT_SHOTS = resources.files("collabdecide").joinpath("templates", "ballot_shots.txt").read_text("utf-8")


def question_block(item: McqaItem) -> str:
    lines = [f"Question: {item.question}"]
    lines += [f"{label}. {text}" for label, text in item.options]
    return "\n".join(lines)


def question_prompt(item: McqaItem, ballot: bool = False, shots: str = DEFAULT_SHOTS) -> str:
    """Prompt sent to every executor; ballot prompts also ask for a ranking and scores."""
    labels = ", ".join(item.labels)
    if not ballot:
        return (
            "Answer the following multiple-choice question.\n\n"
            f"{question_block(item)}\n\n"
            f"Think it through, then finish with a final line \"Answer: <label>\" where <label> is one of {labels}."
        )
    return (
        "Rank every option of a multiple-choice question from most to least likely correct, "
        "score each option from 0 to 10, and state your single best answer. "
        "Follow the format of the examples.\n\n"
        f"{shots.strip()}\n\n"
        f"{question_block(item)}\n"
        f"Reply with exactly three lines, ranking all of {labels}:\n"
        "Ranking: <best> > <next> > ...\n"
        "Scores: <label>=<0-10>, ...\n"
        "Answer: <label>"
    )


# Execution phase ----------------------------------------------------------


def _candidate(samples: Sequence[AgentResponse], selection: str) -> AgentResponse:
    if selection == "first" or len(samples) == 1:
        return samples[0]
    if selection != "majority":
        raise ValueError(f"unknown candidate selection {selection!r}")
    votes = Counter(s.extracted_label for s in samples if s.extracted_label)
    if not votes:
        return samples[0]
    top = max(votes.values())
    return next(s for s in samples if s.extracted_label and votes[s.extracted_label] == top)


def run_execution_phase(
    item: McqaItem,
    executors: Sequence[AgentSpec],
    ballot: bool = False,
    candidate_selection: str = "first",
    max_concurrency: int = 4,
    shots: str = DEFAULT_SHOTS,
) -> History:
    """Query every executor with the same prompt and collect answers in executor order."""
    if not executors:
        raise OrchestrationError("the execution phase needs at least one executor")
    prompt = question_prompt(item, ballot, shots)

    def call(agent: AgentSpec):
        try:
            return generate(agent, prompt, agent.sampling, item.labels)
        except AgentError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max(1, min(max_concurrency, len(executors)))) as pool:
        results = list(pool.map(call, executors))

    responses, samples, trace = [], [], []
    for agent, result in zip(executors, results):
        if isinstance(result, Exception):
            trace.append(f"executor {agent.id} failed: {type(result).__name__}: {result}")
            logger.warning("executor %s failed on %s: %s", agent.id, item.id, result)
            continue
        samples.extend(result)
        responses.append(_candidate(result, candidate_selection))
    if not responses:
        raise AllAgentsFailed(f"every executor failed on item {item.id}: {trace}")
    return History(question_block(item), tuple(responses), tuple(samples), tuple(trace))


# Decision phase -----------------------------------------------------------


def build_profile(history: History, item: McqaItem, rule: str, score_max: int = 10) -> tuple[Profile, list[str]]:
    """Turn executor responses into ballots; unreadable responses abstain."""
    trace = []
    ballots = []
    for resp in history.responses:
        if rule == "range":
            scores = extract_scores(resp.text, item.labels, score_max)
            if scores is None:
                choice = extract_choice(resp.text, item.labels)
                if choice is None:
                    trace.append(f"{resp.agent_id} abstains (no readable scores or answer)")
                    continue
                trace.append(f"{resp.agent_id}: no scores line, using answer {choice} at full score")
                scores = {choice: score_max}
            ballots.append(social_choice.Ballot.cardinal(scores))
            continue
        ranking = extract_ranking(resp.text, item.labels)
        if ranking is None:
            choice = extract_choice(resp.text, item.labels)
            if choice is None:
                trace.append(f"{resp.agent_id} abstains (no readable ranking or answer)")
                continue
            trace.append(f"{resp.agent_id}: no ranking line, using answer {choice} as a one-item ballot")
            ranking = [choice]
        ballots.append(social_choice.Ballot.ranked(ranking))
    if not ballots:
        raise NoValidBallots(f"no agent produced a usable ballot for item {item.id}")
    return Profile(item.labels, tuple(ballots), score_max), trace


def _decider_call(decider: AgentSpec, prompt: str, item: McqaItem) -> AgentResponse:
    params = SamplingParams(decider.sampling.temperature, decider.sampling.top_p, n=1)
    try:
        return generate(decider, prompt, params, item.labels)[0]
    except AgentError as exc:
        raise DeciderFailed(f"decider {decider.id} failed: {exc}") from exc


def run_decision_phase(
    history: History,
    item: McqaItem,
    strategy: Strategy,
    pool: Mapping[str, AgentSpec],
    score_max: int = 10,
    rng: random.Random | None = None,
) -> DecisionRecord:
    """Resolve one history into a final label; ``rng`` is needed only for annealed variants."""
    trace: list[str] = list(history.trace)
    report = vote = response = None

    if strategy.kind == SINGLE_AGENT:
        resp = next((r for r in history.responses if r.agent_id == strategy.agent), None)
        if resp is None:
            trace.append(f"agent {strategy.agent} has no response in the history")
        label = resp.extracted_label if resp else None

    elif strategy.kind == VOTING:
        profile, notes = build_profile(history, item, strategy.rule, score_max)
        trace += notes
        vote = social_choice.apply_rule(strategy.rule, profile)
        trace += list(vote.trace)
        label = vote.winner

    else:
        if strategy.agent not in pool:
            raise DeciderFailed(f"unknown decider {strategy.agent!r}")
        if strategy.kind == INFORMED_DICTATORIAL:
            variant = PromptVariant.UNSTRUCTURED
        elif strategy.anneal is not None:
            if rng is None:
                raise OrchestrationError("an annealed strategy needs a random generator")
            state = anneal_probability(*strategy.anneal)
            variant = sample_variant(state, rng)
            trace.append(f"prompt variant {variant.value} drawn at p_full={state.p_full:.6f}")
        else:
            variant = strategy.variant
        candidates = [(r.agent_id, r.text) for r in history.responses]
        prompt = ach.render_decision_prompt(history.query, candidates, variant)
        response = _decider_call(pool[strategy.agent], prompt, item)
        label = response.extracted_label
        if strategy.kind == ACH_DECISION:
            report = _read_report(response.text, variant, trace)
            if report is not None and report.final_answer and report.final_answer != label:
                trace.append(
                    f"answer block says {label}, report decision says {report.final_answer}; answer block kept"
                )

    return DecisionRecord(
        item_id=item.id,
        strategy=strategy,
        history=history,
        final_label=label,
        correct=label == item.gold_label,
        ach_report=report,
        vote_result=vote,
        trace=tuple(trace),
        decider_response=response,
        subject=item.subject,
    )


def _read_report(raw: str, variant: PromptVariant, trace: list[str]) -> AchReport | None:
    try:
        think, _ = ach.parse_decision_output(raw)
    except ach.MalformedOutput as exc:
        trace.append(f"malformed decider output: {exc}")
        return None
    try:
        report = ach.parse_ach_report(think)
    except ach.UnparseableReport as exc:
        trace.append(f"unparseable ACH report: {exc}")
        return None
    for violation in ach.validate_report(report, variant):
        trace.append(f"ACH violation: {violation}")
    return report


# Episodes -----------------------------------------------------------------


def item_rng(seed: int, item: McqaItem) -> random.Random:
    return random.Random(int(stable_hash(f"{seed}:{item.id}"), 16))


def episode_executors(item: McqaItem, config: "RunConfig") -> list[AgentSpec]:
    pool = [config.agents[a] for a in config.executors]
    if config.pool_k:
        return sample_pool(pool, config.pool_k, item_rng(config.seeds.pool, item))
    return pool


def _score(record: DecisionRecord, item: McqaItem, config: "RunConfig") -> DecisionRecord:
    if config.scoring is None or record.decider_response is None:
        return record
    breakdown = config.scoring.score(record.decider_response.text, item.gold_label)
    return DecisionRecord(**{**record.__dict__, "breakdown": breakdown})


def run_item(
    item: McqaItem,
    config: "RunConfig",
    strategies: Sequence[Strategy],
    executors: Sequence[AgentSpec] | None = None,
) -> list[DecisionRecord]:
    """Decide one item under several strategies, sharing each execution phase."""
    executors = list(executors) if executors is not None else episode_executors(item, config)
    histories: dict[bool, History] = {}
    records = []
    for strategy in strategies:
        ballot = strategy.uses_ballots
        if ballot not in histories:
            histories[ballot] = run_execution_phase(
                item, executors, ballot, config.candidate_selection, config.max_concurrency, config.ballot_shots
            )
        rng = item_rng(config.seeds.variant, item) if strategy.anneal is not None else None
        record = run_decision_phase(histories[ballot], item, strategy, config.agents, config.score_max, rng)
        records.append(_score(record, item, config))
    return records


def run_episode(item: McqaItem, config: "RunConfig", strategy: Strategy | None = None) -> DecisionRecord:
    return run_item(item, config, [strategy or config.strategies[0]])[0]


def run_items(
    items: Sequence[McqaItem],
    config: "RunConfig",
    strategies: Sequence[Strategy],
    workers: int = 1,
    executors: Sequence[AgentSpec] | None = None,
) -> list[DecisionRecord]:
    """Records grouped item by item, in dataset order regardless of ``workers``."""

    def one(item):
        return run_item(item, config, strategies, executors)

    if workers <= 1:
        per_item = [one(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_item = list(pool.map(one, items))
    return [rec for recs in per_item for rec in recs]
