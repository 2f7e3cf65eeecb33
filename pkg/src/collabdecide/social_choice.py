"""Single-winner voting rules used to aggregate agent ballots.

All rules are pure functions of a :class:`Profile`. Ties are broken by
lexicographic order over candidate labels and every result reports whether
that happened through ``tiebreak_applied``.

Truncated ranked ballots are allowed: unranked candidates earn no Borda
points and sit below every ranked candidate in pairwise comparisons.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

RANKED = "ranked"
CARDINAL = "cardinal"
DEFAULT_SCORE_MAX = 10


class SocialChoiceError(ValueError):
    """Base class for voting errors."""


class InvalidProfile(SocialChoiceError):
    pass


class CardinalProfile(SocialChoiceError):
    """Raised when an ordinal rule receives score ballots."""


class RankedProfile(SocialChoiceError):
    """Raised when range voting receives ranked ballots."""


class ScoreOutOfRange(InvalidProfile):
    pass


@dataclass(frozen=True)
class Ballot:
    kind: str
    ranking: tuple[str, ...] = ()
    scores: Mapping[str, float] = field(default_factory=dict)

    @classmethod
    def ranked(cls, ranking: Iterable[str]) -> "Ballot":
        return cls(RANKED, ranking=tuple(ranking))

    @classmethod
    def cardinal(cls, scores: Mapping[str, float]) -> "Ballot":
        return cls(CARDINAL, scores=dict(scores))

    def to_json(self):
        return list(self.ranking) if self.kind == RANKED else dict(self.scores)


@dataclass(frozen=True)
class Profile:
    """Candidates plus a list of ballots of one kind."""

    candidates: tuple[str, ...]
    ballots: tuple[Ballot, ...]
    score_max: int = DEFAULT_SCORE_MAX

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        object.__setattr__(self, "ballots", tuple(self.ballots))
        cands = self.candidates
        if len(cands) < 2:
            raise InvalidProfile("a profile needs at least 2 candidates")
        if any(not c for c in cands):
            raise InvalidProfile("candidate labels must be non-empty")
        if len(set(cands)) != len(cands):
            raise InvalidProfile("candidate labels must be unique")
        if not self.ballots:
            raise InvalidProfile("a profile needs at least 1 ballot")
        kinds = {b.kind for b in self.ballots}
        if len(kinds) != 1 or not kinds <= {RANKED, CARDINAL}:
            raise InvalidProfile(f"ballots must all be of one kind, got {sorted(kinds)}")
        if self.score_max < 1:
            raise InvalidProfile("score_max must be at least 1")
        known = set(cands)
        for i, ballot in enumerate(self.ballots):
            if ballot.kind == RANKED:
                if not ballot.ranking:
                    raise InvalidProfile(f"ballot {i} is empty")
                if len(set(ballot.ranking)) != len(ballot.ranking):
                    raise InvalidProfile(f"ballot {i} repeats a candidate")
                unknown = [c for c in ballot.ranking if c not in known]
                if unknown:
                    raise InvalidProfile(f"ballot {i} names unknown candidates {unknown}")
            else:
                unknown = [c for c in ballot.scores if c not in known]
                if unknown:
                    raise InvalidProfile(f"ballot {i} names unknown candidates {unknown}")
                for c, s in ballot.scores.items():
                    if not 0 <= s <= self.score_max:
                        raise ScoreOutOfRange(
                            f"ballot {i} scores {c}={s} outside [0, {self.score_max}]"
                        )

    @property
    def kind(self) -> str:
        return self.ballots[0].kind

    @classmethod
    def from_rankings(cls, candidates: Sequence[str], rankings: Iterable[Sequence[str]]) -> "Profile":
        return cls(tuple(candidates), tuple(Ballot.ranked(r) for r in rankings))

    @classmethod
    def from_scores(
        cls,
        candidates: Sequence[str],
        scores: Iterable[Mapping[str, float]],
        score_max: int = DEFAULT_SCORE_MAX,
    ) -> "Profile":
        return cls(tuple(candidates), tuple(Ballot.cardinal(s) for s in scores), score_max)

    @classmethod
    def from_json(cls, data: Mapping) -> "Profile":
        """Build a profile from ``{"candidates": [...], "ballots": [...], "score_max": 10}``.

        Ballots are either lists of labels (ranked) or label->score objects.
        """
        try:
            candidates = [str(c) for c in data["candidates"]]
            raw = list(data["ballots"])
        except (KeyError, TypeError) as exc:
            raise InvalidProfile(f"malformed profile document: {exc}") from exc
        ballots = []
        for b in raw:
            if isinstance(b, Mapping):
                ballots.append(Ballot.cardinal({str(k): v for k, v in b.items()}))
            elif isinstance(b, (list, tuple)):
                ballots.append(Ballot.ranked(str(c) for c in b))
            else:
                raise InvalidProfile(f"ballot must be a list or an object, got {b!r}")
        return cls(tuple(candidates), tuple(ballots), int(data.get("score_max", DEFAULT_SCORE_MAX)))

    def to_json(self) -> dict:
        return {
            "candidates": list(self.candidates),
            "ballots": [b.to_json() for b in self.ballots],
            "score_max": self.score_max,
        }


@dataclass(frozen=True)
class PairwiseMatrix:
    """``counts[i][j]`` is the number of ballots ranking candidate i above j."""

    candidates: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]
    n_ballots: int

    def count(self, a: str, b: str) -> int:
        return self.counts[self.candidates.index(a)][self.candidates.index(b)]

    def margin(self, a: str, b: str) -> int:
        return self.count(a, b) - self.count(b, a)


@dataclass(frozen=True)
class VoteResult:
    winner: str
    tally: dict[str, float]
    tiebreak_applied: bool
    trace: tuple[str, ...] = ()
    rule: str = ""

    def to_json(self) -> dict:
        return {
            "rule": self.rule,
            "winner": self.winner,
            "tally": dict(self.tally),
            "tiebreak_applied": self.tiebreak_applied,
            "trace": list(self.trace),
        }


def _require_ranked(profile: Profile) -> None:
    if profile.kind != RANKED:
        raise CardinalProfile("this rule needs ranked ballots")


def _best(tally: Mapping[str, float], candidates: Sequence[str], lowest: bool = False) -> tuple[str, bool]:
    """Return (winner, tied) with lexicographic tie-break."""
    sign = -1 if lowest else 1
    top = max(sign * tally[c] for c in candidates)
    tied = sorted(c for c in candidates if sign * tally[c] == top)
    return tied[0], len(tied) > 1


def _result(rule: str, tally: dict, winner: str, tied: bool, trace: list[str]) -> VoteResult:
    if tied:
        trace.append(f"tie-break: {winner} chosen lexicographically")
    return VoteResult(winner, tally, tied, tuple(trace), rule)


def pairwise_matrix(profile: Profile) -> PairwiseMatrix:
    _require_ranked(profile)
    cands = profile.candidates
    index = {c: i for i, c in enumerate(cands)}
    m = len(cands)
    counts = [[0] * m for _ in range(m)]
    for ballot in profile.ballots:
        ranked = [index[c] for c in ballot.ranking]
        unranked = set(range(m)) - set(ranked)
        for pos, i in enumerate(ranked):
            for j in ranked[pos + 1:]:
                counts[i][j] += 1
            for j in unranked:
                counts[i][j] += 1
    return PairwiseMatrix(cands, tuple(tuple(row) for row in counts), len(profile.ballots))


def condorcet_winner(matrix: PairwiseMatrix) -> str | None:
    counts = matrix.counts
    for i, c in enumerate(matrix.candidates):
        if all(counts[i][j] > counts[j][i] for j in range(len(counts)) if j != i):
            return c
    return None


def plurality(profile: Profile) -> VoteResult:
    _require_ranked(profile)
    tally = {c: 0 for c in profile.candidates}
    for ballot in profile.ballots:
        tally[ballot.ranking[0]] += 1
    winner, tied = _best(tally, profile.candidates)
    return _result("plurality", tally, winner, tied, [f"first choices {tally}"])


def borda(profile: Profile) -> VoteResult:
    _require_ranked(profile)
    m = len(profile.candidates)
    tally = {c: 0 for c in profile.candidates}
    for ballot in profile.ballots:
        for k, c in enumerate(ballot.ranking):
            tally[c] += m - 1 - k
    winner, tied = _best(tally, profile.candidates)
    return _result("borda", tally, winner, tied, [f"borda points {tally}"])


def bucklin(profile: Profile) -> VoteResult:
    _require_ranked(profile)
    n = len(profile.ballots)
    tally: dict[str, int] = {}
    trace = []
    for r in range(1, len(profile.candidates) + 1):
        tally = {c: 0 for c in profile.candidates}
        for ballot in profile.ballots:
            for c in ballot.ranking[:r]:
                tally[c] += 1
        trace.append(f"round {r}: {tally}")
        if any(2 * v > n for v in tally.values()):
            winner, tied = _best(tally, profile.candidates)
            trace.append(f"majority reached in round {r}")
            return _result("bucklin", tally, winner, tied, trace)
    trace.append("no majority ever reached; using final-round maximum")
    winner, tied = _best(tally, profile.candidates)
    return _result("bucklin", tally, winner, tied, trace)


def irv(profile: Profile) -> VoteResult:
    _require_ranked(profile)
    remaining = list(profile.candidates)
    trace = []
    tiebreak = False
    while True:
        tally = {c: 0 for c in remaining}
        active = 0
        for ballot in profile.ballots:
            top = next((c for c in ballot.ranking if c in tally), None)
            if top is not None:
                tally[top] += 1
                active += 1
        trace.append(f"counts {tally} ({active} active ballots)")
        leader, lead_tied = _best(tally, remaining)
        if not lead_tied and 2 * tally[leader] > active:
            trace.append(f"{leader} holds a majority")
            return VoteResult(leader, tally, tiebreak, tuple(trace), "irv")
        if len(remaining) == 1:
            return VoteResult(remaining[0], tally, tiebreak, tuple(trace), "irv")
        fewest = min(tally.values())
        losers = sorted(c for c in remaining if tally[c] == fewest)
        out = losers[-1]
        if len(losers) > 1:
            tiebreak = True
            trace.append(f"elimination tie among {losers}; dropping {out}")
        trace.append(f"eliminate {out}")
        remaining.remove(out)


def minimax(profile: Profile) -> VoteResult:
    matrix = pairwise_matrix(profile)
    cands = matrix.candidates
    tally = {}
    for c in cands:
        tally[c] = max([max(0, matrix.margin(o, c)) for o in cands if o != c])
    winner, tied = _best(tally, cands, lowest=True)
    return _result("minimax", tally, winner, tied, [f"worst defeat margins {tally}"])


def _reaches(edges: dict[str, set[str]], start: str, goal: str) -> bool:
    stack, seen = [start], set()
    while stack:
        node = stack.pop()
        if node == goal:
            return True
        if node not in seen:
            seen.add(node)
            stack.extend(edges[node])
    return False


def ranked_pairs(profile: Profile) -> VoteResult:
    matrix = pairwise_matrix(profile)
    cands = matrix.candidates
    victories = []
    for a in cands:
        for b in cands:
            if a != b and matrix.count(a, b) > matrix.count(b, a):
                victories.append((matrix.margin(a, b), matrix.count(a, b), a, b))
    victories.sort(key=lambda v: (-v[0], -v[1], v[2], v[3]))
    # Equal (margin, support) keys are ordered lexicographically: a tie-break.
    keys = Counter((v[0], v[1]) for v in victories)
    tiebreak = any(n > 1 for n in keys.values())

    locked: dict[str, set[str]] = {c: set() for c in cands}
    trace = []
    for margin, _, a, b in victories:
        if _reaches(locked, b, a):
            trace.append(f"skip {a}>{b} (margin {margin}, cycle)")
        else:
            locked[a].add(b)
            trace.append(f"lock {a}>{b} (margin {margin})")
    beaten = {b for a in cands for b in locked[a]}
    sources = sorted(c for c in cands if c not in beaten)
    if len(sources) > 1:
        tiebreak = True
        trace.append(f"several unbeaten candidates {sources}")
    winner = sources[0]
    tally = {c: len(locked[c]) for c in cands}
    if tiebreak:
        trace.append(f"tie-break: {winner} chosen lexicographically")
    return VoteResult(winner, tally, tiebreak, tuple(trace), "ranked_pairs")


def range_voting(profile: Profile) -> VoteResult:
    if profile.kind != CARDINAL:
        raise RankedProfile("range voting needs score ballots")
    tally = {c: 0 for c in profile.candidates}
    for ballot in profile.ballots:
        for c, s in ballot.scores.items():
            tally[c] += s
    winner, tied = _best(tally, profile.candidates)
    return _result("range", tally, winner, tied, [f"score totals {tally}"])


RULES: dict[str, Callable[[Profile], VoteResult]] = {
    "plurality": plurality,
    "borda": borda,
    "bucklin": bucklin,
    "irv": irv,
    "minimax": minimax,
    "ranked_pairs": ranked_pairs,
    "range": range_voting,
}

ORDINAL_RULES = tuple(r for r in RULES if r != "range")


def apply_rule(name: str, profile: Profile) -> VoteResult:
    try:
        rule = RULES[name]
    except KeyError:
        raise SocialChoiceError(f"unknown rule {name!r}; expected one of {sorted(RULES)}") from None
    return rule(profile)
