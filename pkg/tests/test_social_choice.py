import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from collabdecide import social_choice as sc
from collabdecide.social_choice import Ballot, Profile

P1 = Profile.from_rankings(
    "ABC",
    [list("ABC"), list("ABC"), list("BCA"), list("BCA"), list("CAB")],
)
CONDORCET_A = Profile.from_rankings("ABC", [list("ABC")] * 3 + [list("BAC")] * 2)
SINGLE_AB = Profile.from_rankings("AB", [["A", "B"]])


def test_pairwise_counts_p1():
    m = sc.pairwise_matrix(P1)
    assert (m.count("A", "B"), m.count("B", "A")) == (3, 2)
    assert (m.count("B", "C"), m.count("C", "B")) == (4, 1)
    assert (m.count("C", "A"), m.count("A", "C")) == (3, 2)
    assert all(m.counts[i][i] == 0 for i in range(3))


def test_pairwise_small_cases():
    m = sc.pairwise_matrix(SINGLE_AB)
    assert m.count("A", "B") == 1 and m.count("B", "A") == 0
    m = sc.pairwise_matrix(Profile.from_rankings("ABC", [list("ABC")] * 3))
    assert m.count("A", "B") == m.count("A", "C") == m.count("B", "C") == 3


def test_pairwise_truncated_ballot_ranks_missing_last():
    m = sc.pairwise_matrix(Profile.from_rankings("ABC", [["B"]]))
    assert m.count("B", "A") == 1 and m.count("B", "C") == 1
    assert m.count("A", "C") == 0 and m.count("C", "A") == 0


def test_condorcet_winner():
    assert sc.condorcet_winner(sc.pairwise_matrix(P1)) is None
    assert sc.condorcet_winner(sc.pairwise_matrix(CONDORCET_A)) == "A"
    assert sc.condorcet_winner(sc.pairwise_matrix(SINGLE_AB)) == "A"


def test_plurality_examples():
    r = sc.plurality(P1)
    assert r.winner == "A" and r.tiebreak_applied and r.tally == {"A": 2, "B": 2, "C": 1}
    assert sc.plurality(Profile.from_rankings("AB", [["A"], ["A"], ["B"]])).winner == "A"
    assert sc.plurality(Profile.from_rankings("ABC", [list("CAB")] * 3)).winner == "C"


def test_borda_examples():
    r = sc.borda(P1)
    assert r.tally == {"A": 5, "B": 6, "C": 4} and r.winner == "B" and not r.tiebreak_applied
    assert sc.borda(Profile.from_rankings("ABC", [list("ABC")])).tally == {"A": 2, "B": 1, "C": 0}
    r = sc.borda(Profile.from_rankings("AB", [["A", "B"], ["B", "A"]]))
    assert r.winner == "A" and r.tiebreak_applied


def test_bucklin_examples():
    r = sc.bucklin(P1)
    assert r.winner == "B" and r.tally == {"A": 3, "B": 4, "C": 3}
    assert sc.bucklin(Profile.from_rankings("AB", [["A", "B"]] * 3 + [["B", "A"]] * 2)).winner == "A"
    r = sc.bucklin(Profile.from_rankings("ABC", [list("BAC")] * 4))
    assert r.winner == "B" and "round 1" in r.trace[0] and len(r.trace) == 2


def test_bucklin_without_majority_falls_back():
    prof = Profile.from_rankings("ABCD", [["A"], ["B"], ["C"], ["D"], ["A"]])
    r = sc.bucklin(prof)
    assert r.winner == "A"
    assert any("no majority" in t for t in r.trace)


def test_irv_examples():
    r = sc.irv(P1)
    assert r.winner == "A" and not r.tiebreak_applied
    assert "eliminate C" in r.trace
    assert sc.irv(Profile.from_rankings("AB", [["A", "B"]] * 3 + [["B", "A"]] * 2)).winner == "A"
    prof = Profile.from_rankings("ABC", [list("ACB")] * 2 + [list("BCA")] * 2 + [list("CAB")])
    assert sc.irv(prof).winner == "A"


def test_irv_drops_exhausted_ballots():
    prof = Profile.from_rankings("ABC", [["C"], ["A", "B"], ["B", "A"], ["B"], ["A"]])
    r = sc.irv(prof)
    # C is eliminated and its ballot exhausts; A and B tie 2-2 among 4 active.
    assert r.winner == "A" and r.tiebreak_applied


def test_minimax_examples():
    r = sc.minimax(P1)
    assert r.tally == {"A": 1, "B": 1, "C": 3}
    assert r.winner == "A" and r.tiebreak_applied
    r = sc.minimax(CONDORCET_A)
    assert r.winner == "A" and r.tally["A"] == 0
    assert sc.minimax(SINGLE_AB).winner == "A"


def test_ranked_pairs_examples():
    r = sc.ranked_pairs(P1)
    assert r.winner == "A"
    assert r.trace[:3] == (
        "lock B>C (margin 3)",
        "lock A>B (margin 1)",
        "skip C>A (margin 1, cycle)",
    )
    assert sc.ranked_pairs(CONDORCET_A).winner == "A"
    assert sc.ranked_pairs(SINGLE_AB).winner == "A"


def test_range_examples():
    prof = Profile.from_scores(
        "ABC", [{"A": 9, "B": 3, "C": 0}, {"A": 2, "B": 8, "C": 5}, {"A": 5, "B": 5, "C": 10}]
    )
    r = sc.range_voting(prof)
    assert r.tally == {"A": 16, "B": 16, "C": 15} and r.winner == "A" and r.tiebreak_applied
    assert sc.range_voting(Profile.from_scores("AB", [{"A": 7, "B": 2}])).winner == "A"
    r = sc.range_voting(Profile.from_scores("ABC", [{"A": 0, "B": 0, "C": 0}] * 2))
    assert r.winner == "A" and r.tiebreak_applied


def test_range_missing_scores_count_zero():
    r = sc.range_voting(Profile.from_scores("ABC", [{"B": 1}, {"C": 2}]))
    assert r.tally == {"A": 0, "B": 1, "C": 2}


@pytest.mark.parametrize("rule", sc.ORDINAL_RULES)
def test_ordinal_rules_reject_scores(rule):
    with pytest.raises(sc.CardinalProfile):
        sc.apply_rule(rule, Profile.from_scores("AB", [{"A": 1}]))


def test_range_rejects_rankings():
    with pytest.raises(sc.RankedProfile):
        sc.range_voting(SINGLE_AB)


@pytest.mark.parametrize(
    "cands, ballots",
    [
        ("A", [["A"]]),
        ("AB", []),
        ("AB", [["A", "A"]]),
        ("AB", [["Z"]]),
        ("AB", [[]]),
        ("AA", [["A"]]),
    ],
)
def test_invalid_profiles(cands, ballots):
    with pytest.raises(sc.InvalidProfile):
        Profile.from_rankings(cands, ballots)


def test_mixed_and_out_of_range_ballots():
    with pytest.raises(sc.InvalidProfile):
        Profile("AB", (Ballot.ranked("A"), Ballot.cardinal({"A": 1})))
    with pytest.raises(sc.ScoreOutOfRange):
        Profile.from_scores("AB", [{"A": 11}])
    with pytest.raises(sc.ScoreOutOfRange):
        Profile.from_scores("AB", [{"A": -1}])


def test_profile_json_round_trip():
    assert Profile.from_json(P1.to_json()) == P1
    prof = Profile.from_json({"candidates": ["A", "B"], "ballots": [{"A": 3}], "score_max": 5})
    assert prof.kind == sc.CARDINAL and prof.score_max == 5


def test_unknown_rule():
    with pytest.raises(sc.SocialChoiceError):
        sc.apply_rule("schulze", P1)


# Properties ---------------------------------------------------------------

rankings = st.permutations(list("ABCD")).flatmap(
    lambda p: st.integers(1, 4).map(lambda k: tuple(p[:k]))
)
profiles = st.lists(rankings, min_size=1, max_size=9).map(lambda rs: Profile.from_rankings("ABCD", rs))


@settings(max_examples=300, deadline=None)
@given(profiles)
def test_matches_oracles_on_truncated_profiles(prof):
    ballots = [list(b.ranking) for b in prof.ballots]
    for name, oracle in oracles.RANKED_ORACLES.items():
        assert sc.apply_rule(name, prof).winner == oracle(list("ABCD"), ballots), name


@settings(max_examples=300, deadline=None)
@given(profiles)
def test_pairwise_counts_bounded(prof):
    m = sc.pairwise_matrix(prof)
    n = len(prof.ballots)
    for i, j in itertools.permutations(range(4), 2):
        assert m.counts[i][j] + m.counts[j][i] <= n


@settings(max_examples=300, deadline=None)
@given(profiles)
def test_condorcet_consistency(prof):
    cw = sc.condorcet_winner(sc.pairwise_matrix(prof))
    if cw is not None:
        assert sc.minimax(prof).winner == cw
        assert sc.ranked_pairs(prof).winner == cw


@settings(max_examples=300, deadline=None)
@given(profiles)
def test_majority_criterion(prof):
    firsts = [b.ranking[0] for b in prof.ballots]
    for c in "ABCD":
        if 2 * firsts.count(c) > len(firsts):
            for rule in (sc.plurality, sc.irv, sc.bucklin):
                assert rule(prof).winner == c


@settings(max_examples=200, deadline=None)
@given(profiles, st.permutations(list("ABCD")))
def test_relabeling_equivariance(prof, perm):
    relabel = dict(zip("ABCD", perm))
    moved = Profile.from_rankings("ABCD", [[relabel[c] for c in b.ranking] for b in prof.ballots])
    for name in sc.ORDINAL_RULES:
        before, after = sc.apply_rule(name, prof), sc.apply_rule(name, moved)
        if not before.tiebreak_applied and not after.tiebreak_applied:
            assert after.winner == relabel[before.winner], name
        elif after.winner != relabel[before.winner]:
            assert before.tiebreak_applied or after.tiebreak_applied


@settings(max_examples=100, deadline=None)
@given(profiles)
def test_untied_winner_is_strictly_best(prof):
    for name in ("plurality", "borda", "bucklin"):
        r = sc.apply_rule(name, prof)
        if not r.tiebreak_applied:
            assert all(r.tally[r.winner] > v for c, v in r.tally.items() if c != r.winner)
    r = sc.minimax(prof)
    if not r.tiebreak_applied:
        assert all(r.tally[r.winner] < v for c, v in r.tally.items() if c != r.winner)


@settings(max_examples=100, deadline=None)
@given(profiles)
def test_deterministic(prof):
    clone = Profile.from_json(prof.to_json())
    for name in sc.ORDINAL_RULES:
        assert sc.apply_rule(name, prof) == sc.apply_rule(name, clone)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(
        st.fixed_dictionaries({}, optional={c: st.integers(0, 10) for c in "ABC"}),
        min_size=1,
        max_size=6,
    )
)
def test_range_matches_oracle(ballots):
    prof = Profile.from_scores("ABC", ballots)
    assert sc.range_voting(prof).winner == oracles.range_voting(list("ABC"), ballots)
