"""Seeded generators for random reports and matrices."""

import random

from collabdecide.ach import AchMatrix, AchReport, CellMark, Evidence, Hypothesis

WORDS = (
    "price rises when supply falls the agent notes a strong signal weak claim "
    "river delta basin calcium orbit chemistry ledger tariff equation slope "
    "mostly partly unlikely clear vague source cited twice"
).split()
LABELS = "ABCDEFGHIJ"
MARKS = list(CellMark)


def sentence(rng, lo=1, hi=8):
    return " ".join(rng.choice(WORDS) for _ in range(rng.randint(lo, hi)))


def notes(rng):
    return "\n".join(sentence(rng) for _ in range(rng.randint(0, 3)))


def random_matrix(rng, max_h=6, max_e=6, min_e=1):
    n_h, n_e = rng.randint(1, max_h), rng.randint(min_e, max_e)
    cells = tuple(tuple(rng.choice(MARKS) for _ in range(n_h)) for _ in range(n_e))
    return AchMatrix(
        tuple(f"H{i + 1}" for i in range(n_h)),
        tuple(f"E{i + 1}" for i in range(n_e)),
        cells,
    )


def random_report(rng, max_h=8, max_e=12):
    n_h = rng.randint(1, max_h)
    n_e = rng.randint(0, max_e)
    hyps = []
    for i in range(n_h):
        covered = frozenset(rng.sample(LABELS, rng.randint(1, 3)))
        hyps.append(Hypothesis(f"H{i + 1}", sentence(rng), covered))
    evidence = [
        Evidence(f"E{i + 1}", sentence(rng), rng.choice(["query", "agent_1", "agent_2", ""]))
        for i in range(n_e)
    ]
    matrix = AchMatrix(
        tuple(h.id for h in hyps),
        tuple(e.id for e in evidence),
        tuple(tuple(rng.choice(MARKS) for _ in hyps) for _ in evidence),
    )
    final = rng.choice(hyps)
    others = [h.id for h in hyps if h.id != final.id]
    return AchReport(
        hypotheses=tuple(hyps),
        evidence=tuple(evidence),
        matrix=matrix,
        review_notes=notes(rng),
        tentative_selection=rng.choice(hyps).id,
        adversarial_notes=notes(rng),
        final_decision=final.id,
        final_answer=rng.choice(sorted(final.covered_options)),
        rejection_rationale={h: sentence(rng, 0, 6) for h in rng.sample(others, rng.randint(0, len(others)))},
        confidence_assessment=sentence(rng, 0, 6),
    )


def seeds(n, base=0):
    return [random.Random(base + i) for i in range(n)]
