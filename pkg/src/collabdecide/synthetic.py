"""Generator for the bundled synthetic benchmark and its scripted agents.

The bundle is 20 arithmetic items plus fixture files whose answers are fixed
by construction, so every strategy's accuracy on it is known in advance:

- solver_a, solver_b: always correct
- contrarian: always picks the option after the gold one
- pool_1 .. pool_5: pool_j is wrong exactly on items whose index is j-1 mod 5
- judge: informed decider that echoes the executors' majority
- analyst: ACH decider whose matrix singles out the majority answer

Run ``python3 -m collabdecide.synthetic DIR`` to rewrite the bundle.
"""

from __future__ import annotations

import json
import sys
from collections import Counter
from importlib import resources
from pathlib import Path

from . import ach
from .ach import CellMark, Evidence, Hypothesis, PromptVariant
from .agents import AgentSpec, SamplingParams, ScriptedBackend, stable_hash
from .datasets import McqaItem
from .orchestrator import DEFAULT_SHOTS, question_prompt, run_execution_phase

N_ITEMS = 20
LABELS = "ABCD"
SOLVERS = ("solver_a", "solver_b")
CONTRARIAN = "contrarian"
POOL = tuple(f"pool_{j}" for j in range(1, 6))
JUDGE = "judge"
ANALYST = "analyst"
EVAL_EXECUTORS = (*SOLVERS, CONTRARIAN)


def make_items(n: int = N_ITEMS) -> list[McqaItem]:
    items = []
    for i in range(n):
        a, b = 3 + 2 * i, 4 + (i % 7)
        if i % 2 == 0:
            subject, question, value = "addition", f"What is {a} + {b}?", a + b
        else:
            subject, question, value = "multiplication", f"What is {a} * {b}?", a * b
        gold = i % len(LABELS)
        offsets = [k - gold for k in range(len(LABELS))]
        options = tuple((LABELS[k], str(value + 2 * off)) for k, off in enumerate(offsets))
        items.append(McqaItem(f"syn-{i:02d}", question, options, LABELS[gold], subject))
    return items


def _wrong(item: McqaItem) -> str:
    return LABELS[(LABELS.index(item.gold_label) + 1) % len(LABELS)]


def _text(item: McqaItem, choice: str, ballot: bool, voice: str) -> str:
    if not ballot:
        value = dict(item.options)[choice]
        return f"{voice} the result is {value}.\nAnswer: {choice}"
    gold, wrong = item.gold_label, _wrong(item)
    middle = [label for label in item.labels if label not in (gold, wrong)]
    # correct agents rank the usual wrong pick last; wrong agents rank gold second
    ranking = [gold, *middle, wrong] if choice == gold else [choice, gold, *(l for l in middle if l != choice)]
    scores = ", ".join(f"{label}={10 if label == choice else 2}" for label in item.labels)
    return f"Ranking: {' > '.join(ranking)}\nScores: {scores}\nAnswer: {choice}"


def executor_choice(agent: str, index: int, item: McqaItem) -> str:
    if agent in SOLVERS:
        return item.gold_label
    if agent == CONTRARIAN:
        return _wrong(item)
    j = POOL.index(agent)
    return _wrong(item) if index % len(POOL) == j else item.gold_label


_VOICES = {
    "solver_a": "Working it out step by step,",
    "solver_b": "Direct calculation shows",
    CONTRARIAN: "At a glance",
}


def executor_fixture(agent: str, items: list[McqaItem], shots: str = DEFAULT_SHOTS) -> dict[str, list[str]]:
    entries = {}
    voice = _VOICES.get(agent, f"As {agent} I find")
    for index, item in enumerate(items):
        choice = executor_choice(agent, index, item)
        for ballot in (False, True):
            entries[stable_hash(question_prompt(item, ballot, shots))] = [_text(item, choice, ballot, voice)]
    return entries


def _majority(labels: list[str]) -> str:
    counts = Counter(labels)
    top = max(counts.values())
    return min(label for label, c in counts.items() if c == top)


def judge_response(labels: list[str]) -> str:
    pick = _majority(labels)
    n = labels.count(pick)
    return f"<think>{n} of {len(labels)} candidate answers choose {pick}, so I side with them.</think><answer>{pick}</answer>"


def analyst_response(agent_ids: list[str], labels: list[str]) -> str:
    pick = _majority(labels)
    options = sorted(set(labels))
    hypotheses = [Hypothesis(f"H{k}", f"option {label} is correct", frozenset({label})) for k, label in enumerate(options, 1)]
    evidence = [Evidence(f"E{k}", f"{agent} concludes {label}", agent) for k, (agent, label) in enumerate(zip(agent_ids, labels), 1)]
    evidence.append(Evidence(f"E{len(evidence) + 1}", f"a majority of candidates agree on {pick}", "query"))
    cells = []
    for ev_label in [*labels, pick]:
        cells.append([CellMark.CONSISTENT if h_label == ev_label else CellMark.INCONSISTENT for h_label in options])
    report = ach.build_report(
        hypotheses,
        evidence,
        cells,
        review_notes="Each candidate counts once; no source is weighted above another.",
        adversarial_notes="A dissenting candidate could be right, but it is contradicted by every other source.",
        confidence_assessment="high",
    )
    think = ach.serialize_report(report, PromptVariant.FULL)
    return f"<think>\n{think}\n</think>\n<answer>{report.final_answer}</answer>"


def _scripted(name: str, entries: dict) -> AgentSpec:
    return AgentSpec(name, ScriptedBackend(entries=entries), sampling=SamplingParams())


def decider_fixtures(items: list[McqaItem], executors: dict[str, dict]) -> tuple[dict, dict]:
    """Judge and analyst entries for the eval history (solvers plus contrarian, plain prompt)."""
    specs = [_scripted(name, executors[name]) for name in EVAL_EXECUTORS]
    judge, analyst = {}, {}
    for item in items:
        history = run_execution_phase(item, specs)
        ids = [r.agent_id for r in history.responses]
        labels = [r.extracted_label for r in history.responses]
        candidates = [(r.agent_id, r.text) for r in history.responses]
        unstructured = ach.render_decision_prompt(history.query, candidates, PromptVariant.UNSTRUCTURED)
        full = ach.render_decision_prompt(history.query, candidates, PromptVariant.FULL)
        judge[stable_hash(unstructured)] = [judge_response(labels)]
        analyst[stable_hash(full)] = [analyst_response(ids, labels)]
    return judge, analyst


def _agent_block(names, role="executor") -> dict:
    return {name: {"backend": "scripted", "fixture": f"agents/{name}.json", "role": role} for name in names}


def configs() -> dict[str, dict]:
    eval_cfg = {
        "dataset": "items.jsonl",
        "agents": {**_agent_block(EVAL_EXECUTORS), **_agent_block((JUDGE, ANALYST), "decider")},
        "executors": list(EVAL_EXECUTORS),
        "baseline": {"kind": "single_agent", "agent": "solver_a"},
        "strategies": [
            {"kind": "single_agent", "agent": CONTRARIAN},
            {"kind": "informed_dictatorial", "agent": JUDGE},
            *({"kind": "voting", "rule": rule} for rule in
              ("plurality", "borda", "bucklin", "irv", "minimax", "ranked_pairs", "range")),
            {"kind": "ach_decision", "agent": ANALYST, "variant": "FullACH"},
        ],
        "seeds": {"pool": 0, "variant": 0},
        "rewards": {"stage": 1},
    }
    pool_agents = _agent_block(POOL)
    scale_cfg = {
        "dataset": "items.jsonl",
        "agents": pool_agents,
        "executors": list(POOL),
        "strategies": [{"kind": "voting", "rule": "plurality"}],
        "seeds": {"pool": 0},
    }
    hetero_cfg = {
        "dataset": "items.jsonl",
        "agents": pool_agents,
        "executors": list(POOL),
        "pool_sample": {"k": 3},
        "strategies": [{"kind": "voting", "rule": "plurality"}, {"kind": "voting", "rule": "borda"}],
        "seeds": {"pool": 7},
    }
    return {"eval.json": eval_cfg, "scale.json": scale_cfg, "hetero.json": hetero_cfg}


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def build_bundle() -> dict[str, str]:
    """Relative path -> file contents for the whole synthetic bundle."""
    items = make_items()
    executors = {name: executor_fixture(name, items) for name in (*SOLVERS, CONTRARIAN, *POOL)}
    judge, analyst = decider_fixtures(items, executors)
    files = {"items.jsonl": "".join(json.dumps(i.to_json(), ensure_ascii=False) + "\n" for i in items)}
    for name, entries in {**executors, JUDGE: judge, ANALYST: analyst}.items():
        files[f"agents/{name}.json"] = _dump(entries)
    for name, cfg in configs().items():
        files[name] = _dump(cfg)
    return files


def write_bundle(directory: str | Path) -> None:
    directory = Path(directory)
    for rel, text in build_bundle().items():
        path = directory / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


def bundle_path(name: str = "") -> Path:
    """Filesystem path of a bundled file, e.g. ``bundle_path("eval.json")``."""
    root = resources.files("collabdecide").joinpath("data", "synthetic")
    return Path(str(root.joinpath(name) if name else root))


if __name__ == "__main__":
    write_bundle(sys.argv[1] if len(sys.argv) > 1 else bundle_path())
