"""Analysis of Competing Hypotheses (ACH) for the decision agent.

The decision agent writes its ACH analysis inside a ``<think>`` block. This
module renders the prompts that ask for it, parses the result back into an
:class:`AchReport`, re-derives the falsification pick from the matrix and
audits the report for protocol violations.

Text grammar of a report (headings are matched loosely, grids strictly)::

    ## 1. Hypothesis Space
    H1: statement → A
    ## 2. Evidence Pool
    E1 [agent_1]: statement
    ## 3. Hypothesis-Evidence Matrix
    | Evidence | H1 | H2 |
    | --- | --- | --- |
    | E1 | Consistent | Inconsistent |
    ...
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Sequence


class AchError(ValueError):
    pass


class EmptyCandidates(AchError):
    pass


class MalformedOutput(AchError):
    """The response does not hold exactly one think block followed by one answer block."""


class UnparseableReport(AchError):
    """The think block has no usable hypothesis-evidence grid."""


class CellMark(str, enum.Enum):
    CONSISTENT = "Consistent"
    INCONSISTENT = "Inconsistent"
    IRRELEVANT = "Irrelevant"

    @classmethod
    def parse(cls, token: str) -> "CellMark":
        key = token.strip().strip("*_` ").lower()
        for mark in cls:
            if key in (mark.value.lower(), _ABBREV[mark].lower()):
                return mark
        raise UnparseableReport(f"unknown matrix mark {token!r}")


_ABBREV = {CellMark.CONSISTENT: "C", CellMark.INCONSISTENT: "I", CellMark.IRRELEVANT: "N"}


class PromptVariant(str, enum.Enum):
    FULL = "FullACH"
    SIMPLIFIED = "SimplifiedACH"
    UNSTRUCTURED = "Unstructured"

    @classmethod
    def parse(cls, name: str) -> "PromptVariant":
        aliases = {"full": cls.FULL, "simplified": cls.SIMPLIFIED, "unstructured": cls.UNSTRUCTURED}
        for v in cls:
            aliases[v.value.lower()] = v
        try:
            return aliases[name.lower()]
        except KeyError:
            raise ValueError(f"unknown prompt variant {name!r}") from None


FULL_HEADINGS = (
    "Hypothesis Space",
    "Evidence Pool",
    "Hypothesis-Evidence Matrix",
    "Meta-Cognitive Review",
    "Falsification Selection",
    "Adversarial Testing",
    "Analytical Report",
)
SIMPLIFIED_HEADINGS = ("Hypotheses", "Matrix", "Conclusion")

# heading -> section key used by the parser
_SECTION_OF = {
    "Hypothesis Space": "hypotheses",
    "Evidence Pool": "evidence",
    "Hypothesis-Evidence Matrix": "matrix",
    "Meta-Cognitive Review": "review",
    "Falsification Selection": "selection",
    "Adversarial Testing": "adversarial",
    "Analytical Report": "report",
    "Hypotheses": "hypotheses",
    "Matrix": "matrix",
    "Conclusion": "report",
}


def _heading_regex(name: str) -> re.Pattern:
    words = re.split(r"[\s-]+", name)
    body = r"[\s-]*".join(re.escape(w) for w in words)
    return re.compile(
        r"^\s*(?:#{1,6}\s*)?(?:\*\*\s*)?(?:(?:step|stage|section)\s*)?"
        r"(?:\d{1,2}\s*[.):]?\s*)?" + body + r"\s*(?:\*\*)?\s*:?\s*(?:\*\*)?\s*$",
        re.IGNORECASE,
    )


_HEADING_PATTERNS = [(h, _heading_regex(h)) for h in FULL_HEADINGS + SIMPLIFIED_HEADINGS]


def heading_of(line: str) -> str | None:
    """Return the canonical heading a line announces, or None."""
    for name, pattern in _HEADING_PATTERNS:
        if pattern.match(line):
            return name
    return None


def find_headings(text: str) -> dict[str, int]:
    """Count heading lines per canonical heading name."""
    counts: dict[str, int] = {}
    for line in text.splitlines():
        name = heading_of(line)
        if name is not None:
            counts[name] = counts.get(name, 0) + 1
    return counts


# Domain types -------------------------------------------------------------


@dataclass(frozen=True)
class Hypothesis:
    id: str
    statement: str
    covered_options: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Evidence:
    id: str
    statement: str
    source: str = "query"


@dataclass(frozen=True)
class AchMatrix:
    hypothesis_ids: tuple[str, ...]
    evidence_ids: tuple[str, ...]
    # cells[row][col]: evidence row, hypothesis column
    cells: tuple[tuple[CellMark, ...], ...]

    def __post_init__(self):
        if len(self.cells) != len(self.evidence_ids) or any(
            len(row) != len(self.hypothesis_ids) for row in self.cells
        ):
            raise AchError("matrix grid is incomplete")

    def column(self, hypothesis_id: str) -> list[CellMark]:
        col = self.hypothesis_ids.index(hypothesis_id)
        return [row[col] for row in self.cells]


@dataclass(frozen=True)
class AchReport:
    hypotheses: tuple[Hypothesis, ...]
    evidence: tuple[Evidence, ...]
    matrix: AchMatrix
    review_notes: str = ""
    tentative_selection: str = ""
    adversarial_notes: str = ""
    final_decision: str = ""
    final_answer: str = ""
    rejection_rationale: Mapping[str, str] = field(default_factory=dict)
    confidence_assessment: str = ""

    def hypothesis(self, hid: str) -> Hypothesis | None:
        return next((h for h in self.hypotheses if h.id == hid), None)

    def to_json(self) -> dict:
        return {
            "hypotheses": [
                {"id": h.id, "statement": h.statement, "covered_options": sorted(h.covered_options)}
                for h in self.hypotheses
            ],
            "evidence": [{"id": e.id, "statement": e.statement, "source": e.source} for e in self.evidence],
            "matrix": {
                "hypothesis_ids": list(self.matrix.hypothesis_ids),
                "evidence_ids": list(self.matrix.evidence_ids),
                "cells": [[m.value for m in row] for row in self.matrix.cells],
            },
            "review_notes": self.review_notes,
            "tentative_selection": self.tentative_selection,
            "adversarial_notes": self.adversarial_notes,
            "final_decision": self.final_decision,
            "final_answer": self.final_answer,
            "rejection_rationale": dict(self.rejection_rationale),
            "confidence_assessment": self.confidence_assessment,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "AchReport":
        m = data["matrix"]
        return cls(
            hypotheses=tuple(
                Hypothesis(h["id"], h["statement"], frozenset(h["covered_options"]))
                for h in data["hypotheses"]
            ),
            evidence=tuple(Evidence(e["id"], e["statement"], e["source"]) for e in data["evidence"]),
            matrix=AchMatrix(
                tuple(m["hypothesis_ids"]),
                tuple(m["evidence_ids"]),
                tuple(tuple(CellMark(c) for c in row) for row in m["cells"]),
            ),
            review_notes=data["review_notes"],
            tentative_selection=data["tentative_selection"],
            adversarial_notes=data["adversarial_notes"],
            final_decision=data["final_decision"],
            final_answer=data["final_answer"],
            rejection_rationale=dict(data["rejection_rationale"]),
            confidence_assessment=data["confidence_assessment"],
        )


# Prompts ------------------------------------------------------------------


def _load_template(name: str) -> str:
    return resources.files("collabdecide").joinpath("templates", name).read_text(encoding="utf-8")


TEMPLATES = {
    PromptVariant.FULL: _load_template("full_ach.txt"),
    PromptVariant.SIMPLIFIED: _load_template("simplified_ach.txt"),
    PromptVariant.UNSTRUCTURED: _load_template("unstructured.txt"),
}

_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")


def fill_template(template: str, values: Mapping[str, str]) -> str:
    """Substitute ``{{name}}`` placeholders in one pass."""

    def sub(match: re.Match) -> str:
        key = match.group(1)
        if key not in values:
            raise KeyError(f"template placeholder {key!r} has no value")
        return values[key]

    return _PLACEHOLDER.sub(sub, template)


def format_candidates(candidates: Sequence[tuple[str, str]]) -> str:
    return "\n\n".join(f"[{agent_id}]\n{text}" for agent_id, text in candidates)


def render_decision_prompt(
    query: str, candidates: Sequence[tuple[str, str]], variant: PromptVariant
) -> str:
    if not candidates:
        raise EmptyCandidates("the decision prompt needs at least one candidate answer")
    if not query.strip():
        raise AchError("query must be non-empty")
    return fill_template(
        TEMPLATES[PromptVariant(variant)],
        {"query": query, "candidates": format_candidates(candidates)},
    )


def protocol_reference() -> str:
    """The FullACH section script, used as the soft-reward reference text."""
    text = TEMPLATES[PromptVariant.FULL]
    start = next(i for i, line in enumerate(text.splitlines()) if heading_of(line))
    return "\n".join(text.splitlines()[start:]).strip()


# Output parsing -----------------------------------------------------------

_TAG = re.compile(r"</?(?:think|answer)>")


def parse_decision_output(raw: str) -> tuple[str, str]:
    """Split a response into (think, answer) block contents."""
    tags = [(m.group(0), m.start(), m.end()) for m in _TAG.finditer(raw)]
    names = [t[0] for t in tags]
    if names != ["<think>", "</think>", "<answer>", "</answer>"]:
        if names.count("<think>") != 1 or names.count("<answer>") != 1:
            raise MalformedOutput("expected exactly one think block and one answer block")
        raise MalformedOutput(f"tags out of order: {names}")
    think = raw[tags[0][2]:tags[1][1]].strip()
    answer = raw[tags[2][2]:tags[3][1]].strip()
    return think, answer


def answer_block(raw: str) -> str | None:
    """Content of the last ``<answer>`` block, tolerating broken think tags."""
    found = re.findall(r"<answer>(.*?)</answer>", raw, flags=re.DOTALL)
    return found[-1].strip() if found else None


_ID = r"[A-Za-z]{1,3}\d+"
_HYP_LINE = re.compile(r"^\s*(?:[-*]\s*)?\**(" + _ID + r")\**\s*[:.)]\s*(.*?)\s*$")
_EVID_LINE = re.compile(
    r"^\s*(?:[-*]\s*)?\**(" + _ID + r")\**\s*(?:\[([^\]]*)\])?\s*[:.)]\s*(.*?)\s*$"
)
_ARROW = re.compile(r"\s*(?:→|->)\s*")
_LABEL = re.compile(r"(?<![A-Za-z0-9])([A-J])(?![A-Za-z0-9])")
_SEPARATOR_CELL = re.compile(r"^:?-{2,}:?$")


def _sections(text: str) -> dict[str, list[str]]:
    sections: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        heading = heading_of(line)
        if heading is not None:
            current = _SECTION_OF[heading]
            sections.setdefault(current, [])
        elif current is not None:
            sections[current].append(line)
    return sections


def _body(lines: Iterable[str]) -> str:
    return "\n".join(lines).strip()


def _split_row(line: str) -> list[str]:
    inner = line.strip()
    inner = inner[1:] if inner.startswith("|") else inner
    inner = inner[:-1] if inner.endswith("|") else inner
    return [cell.strip() for cell in inner.split("|")]


def _parse_hypothesis(hid: str, rest: str) -> Hypothesis:
    parts = _ARROW.split(rest)
    if len(parts) > 1:
        statement = " → ".join(parts[:-1]).strip()
        labels = frozenset(_LABEL.findall(parts[-1].upper()))
    else:
        statement, labels = rest.strip(), frozenset()
    return Hypothesis(hid, statement, labels)


def _parse_grid(lines: list[str], hyp_ids: list[str], evid_ids: list[str]) -> AchMatrix:
    rows = [_split_row(line) for line in lines if line.strip().startswith("|")]
    rows = [r for r in rows if not all(_SEPARATOR_CELL.match(c) for c in r if c)]
    if not rows:
        raise UnparseableReport("no hypothesis-evidence grid found")
    header, body = rows[0], rows[1:]
    columns = [c.strip("* ") for c in header[1:]]
    lookup_h = {h.lower(): h for h in hyp_ids}
    lookup_e = {e.lower(): e for e in evid_ids}
    try:
        col_ids = [lookup_h[c.lower()] for c in columns]
    except KeyError as exc:
        raise UnparseableReport(f"grid column {exc.args[0]!r} is not a declared hypothesis") from None
    if sorted(col_ids) != sorted(hyp_ids):
        raise UnparseableReport("grid columns do not match the hypothesis list")
    marks: dict[str, dict[str, CellMark]] = {}
    for row in body:
        label = re.match(r"\**\s*(" + _ID + ")", row[0])
        if not label or label.group(1).lower() not in lookup_e:
            raise UnparseableReport(f"grid row {row[0]!r} is not a declared evidence item")
        eid = lookup_e[label.group(1).lower()]
        if eid in marks:
            raise UnparseableReport(f"grid repeats row {eid}")
        if len(row) - 1 != len(col_ids):
            raise UnparseableReport(f"grid row {eid} has {len(row) - 1} cells, expected {len(col_ids)}")
        marks[eid] = {h: CellMark.parse(cell) for h, cell in zip(col_ids, row[1:])}
    if sorted(marks) != sorted(evid_ids):
        raise UnparseableReport("grid rows do not match the evidence pool")
    cells = tuple(tuple(marks[e][h] for h in hyp_ids) for e in evid_ids)
    return AchMatrix(tuple(hyp_ids), tuple(evid_ids), cells)


def _find_ref(pattern: str, lines: list[str], ids: Mapping[str, str]) -> tuple[str, str] | None:
    regex = re.compile(pattern, re.IGNORECASE)
    for line in lines:
        m = regex.match(line.strip().strip("*"))
        if m and m.group(1).lower() in ids:
            return ids[m.group(1).lower()], (m.group(2) or "").strip()
    return None


def parse_ach_report(think: str) -> AchReport:
    sections = _sections(think)
    hyp_lines = sections.get("hypotheses", [])
    hypotheses = []
    for line in hyp_lines:
        m = _HYP_LINE.match(line)
        if m and m.group(2):
            hypotheses.append(_parse_hypothesis(m.group(1), m.group(2)))
    if not hypotheses:
        raise UnparseableReport("no hypotheses declared")
    hyp_ids = [h.id for h in hypotheses]
    if len(set(hyp_ids)) != len(hyp_ids):
        raise UnparseableReport("duplicate hypothesis ids")

    evid_source = sections.get("evidence", sections.get("matrix", []))
    evidence = []
    for line in evid_source:
        if line.strip().startswith("|"):
            continue
        m = _EVID_LINE.match(line)
        if m and m.group(3):
            evidence.append(Evidence(m.group(1), m.group(3), (m.group(2) or "").strip()))
    evid_ids = [e.id for e in evidence]
    if len(set(evid_ids)) != len(evid_ids) or set(evid_ids) & set(hyp_ids):
        raise UnparseableReport("duplicate evidence ids")

    grid_lines = sections.get("matrix") or think.splitlines()
    matrix = _parse_grid(grid_lines, hyp_ids, evid_ids)

    ids = {h.lower(): h for h in hyp_ids}
    report_lines = sections.get("report", think.splitlines())
    selection_lines = sections.get("selection", []) + sections.get("report", [])

    tentative = _find_ref(r"tentative(?:\s+selection)?\s*:\s*(" + _ID + r")\b()", selection_lines, ids)
    tentative_id = tentative[0] if tentative else falsification_select(matrix)
    decision = _find_ref(
        r"(?:final\s+)?decision\s*:\s*(" + _ID + r")\b(?:\s*(?:→|->)\s*(.*))?", report_lines, ids
    )
    final_id = decision[0] if decision else tentative_id
    final_answer = ""
    if decision and decision[1]:
        labels = _LABEL.findall(decision[1].upper())
        final_answer = labels[0] if labels else ""
    if not final_answer:
        covered = sorted(hypotheses[hyp_ids.index(final_id)].covered_options)
        final_answer = covered[0] if len(covered) == 1 else ""

    rationale = {}
    reject = re.compile(r"reject(?:ed)?\s+(" + _ID + r")\s*:\s*(.*)", re.IGNORECASE)
    confidence = ""
    conf = re.compile(r"confidence(?:\s+assessment)?\s*:\s*(.*)", re.IGNORECASE)
    for line in report_lines:
        stripped = line.strip().strip("*").strip()
        m = reject.match(stripped)
        if m and m.group(1).lower() in ids:
            rationale[ids[m.group(1).lower()]] = m.group(2).strip()
            continue
        m = conf.match(stripped)
        if m and not confidence:
            confidence = m.group(1).strip()

    return AchReport(
        hypotheses=tuple(hypotheses),
        evidence=tuple(evidence),
        matrix=matrix,
        review_notes=_body(sections.get("review", [])),
        tentative_selection=tentative_id,
        adversarial_notes=_body(sections.get("adversarial", [])),
        final_decision=final_id,
        final_answer=final_answer,
        rejection_rationale=rationale,
        confidence_assessment=confidence,
    )


def serialize_report(report: AchReport, variant: PromptVariant = PromptVariant.FULL) -> str:
    """Canonical think-block text for a report; ``parse_ach_report`` inverts it."""

    def hyp_line(h: Hypothesis) -> str:
        labels = ", ".join(sorted(h.covered_options))
        return f"{h.id}: {h.statement} → {labels}" if labels else f"{h.id}: {h.statement}"

    def evid_line(e: Evidence) -> str:
        return f"{e.id} [{e.source}]: {e.statement}" if e.source else f"{e.id}: {e.statement}"

    m = report.matrix
    grid = ["| Evidence | " + " | ".join(m.hypothesis_ids) + " |"]
    grid.append("|" + " --- |" * (len(m.hypothesis_ids) + 1))
    for eid, row in zip(m.evidence_ids, m.cells):
        grid.append(f"| {eid} | " + " | ".join(c.value for c in row) + " |")

    decision = f"Final decision: {report.final_decision}"
    if report.final_answer:
        decision += f" → {report.final_answer}"
    conclusion = [decision]
    conclusion += [f"Rejected {hid}: {why}" for hid, why in report.rejection_rationale.items()]
    conclusion.append(f"Confidence: {report.confidence_assessment}")
    tentative = f"Tentative selection: {report.tentative_selection}"

    if PromptVariant(variant) == PromptVariant.SIMPLIFIED:
        parts = [
            ("Hypotheses", [hyp_line(h) for h in report.hypotheses]),
            ("Matrix", [evid_line(e) for e in report.evidence] + [""] + grid),
            ("Conclusion", [tentative] + conclusion),
        ]
        out = []
        for heading, lines in parts:
            out.append(f"## {heading}")
            out.extend(lines)
            out.append("")
        return "\n".join(out).strip()

    blocks = [
        [hyp_line(h) for h in report.hypotheses],
        [evid_line(e) for e in report.evidence],
        grid,
        [report.review_notes] if report.review_notes else [],
        [tentative],
        [report.adversarial_notes] if report.adversarial_notes else [],
        conclusion,
    ]
    out = []
    for number, (heading, lines) in enumerate(zip(FULL_HEADINGS, blocks), start=1):
        out.append(f"## {number}. {heading}")
        out.extend(lines)
        out.append("")
    return "\n".join(out).strip()


# Selection and auditing ---------------------------------------------------


def falsification_select(matrix: AchMatrix) -> str:
    """Hypothesis with the fewest Inconsistent marks.

    Ties go to more Consistent marks, then to the earlier hypothesis.
    """

    def key(pos: int):
        col = [row[pos] for row in matrix.cells]
        return (col.count(CellMark.INCONSISTENT), -col.count(CellMark.CONSISTENT), pos)

    best = min(range(len(matrix.hypothesis_ids)), key=key)
    return matrix.hypothesis_ids[best]


SINGLE_HYPOTHESIS = "single hypothesis"
EMPTY_EVIDENCE = "empty evidence pool"
SELECTION_CONTRADICTS = "selection contradicts falsification"
NON_EXCLUSIVE = "non-exclusive hypotheses"
UNLABELED = "unlabeled hypothesis"
NO_ADVERSARIAL = "missing adversarial testing"
ANSWER_NOT_COVERED = "final answer not covered by final decision"
DECISION_DIVERGES = "final decision diverges from tentative selection"


def validate_report(report: AchReport, variant: PromptVariant = PromptVariant.FULL) -> list[str]:
    """Return protocol violations; an empty list means the report complies."""
    violations = []
    if len(report.hypotheses) < 2:
        violations.append(SINGLE_HYPOTHESIS)
    if not report.evidence:
        violations.append(EMPTY_EVIDENCE)
    if report.tentative_selection != falsification_select(report.matrix):
        violations.append(SELECTION_CONTRADICTS)
    seen: set[str] = set()
    for h in report.hypotheses:
        if h.covered_options & seen:
            violations.append(NON_EXCLUSIVE)
            break
        seen |= h.covered_options
    if any(not h.covered_options for h in report.hypotheses):
        violations.append(UNLABELED)
    if PromptVariant(variant) == PromptVariant.FULL and not report.adversarial_notes.strip():
        violations.append(NO_ADVERSARIAL)
    final = report.hypothesis(report.final_decision)
    if final is None or report.final_answer not in final.covered_options:
        violations.append(ANSWER_NOT_COVERED)
    if report.final_decision != report.tentative_selection:
        violations.append(DECISION_DIVERGES)
    return violations


def build_report(
    hypotheses: Sequence[Hypothesis],
    evidence: Sequence[Evidence],
    cells: Sequence[Sequence[CellMark]],
    review_notes: str = "",
    adversarial_notes: str = "",
    confidence_assessment: str = "",
    rejection_rationale: Mapping[str, str] | None = None,
) -> AchReport:
    """Assemble a report whose selection and decision follow the matrix."""
    matrix = AchMatrix(
        tuple(h.id for h in hypotheses),
        tuple(e.id for e in evidence),
        tuple(tuple(row) for row in cells),
    )
    pick = falsification_select(matrix)
    chosen = next(h for h in hypotheses if h.id == pick)
    if rejection_rationale is None:
        rejection_rationale = {
            h.id: "more inconsistent evidence than " + pick for h in hypotheses if h.id != pick
        }
    return AchReport(
        hypotheses=tuple(hypotheses),
        evidence=tuple(evidence),
        matrix=matrix,
        review_notes=review_notes,
        tentative_selection=pick,
        adversarial_notes=adversarial_notes,
        final_decision=pick,
        final_answer=min(chosen.covered_options) if chosen.covered_options else "",
        rejection_rationale=dict(rejection_rationale),
        confidence_assessment=confidence_assessment,
    )
