import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from collabdecide import benchmark
from collabdecide.agents import KTooLarge, sample_pool
from collabdecide.config import build_config, load_config
from collabdecide.datasets import load_dataset
from collabdecide.orchestrator import DecisionRecord, History, Strategy, run_items
from collabdecide.synthetic import bundle_path

BASE = Strategy.single_agent("solo")
VOTE = Strategy.voting("plurality")
EMPTY = History("q", ())


def rec(i, correct, strategy=VOTE, subject=None):
    return DecisionRecord(f"q{i}", strategy, EMPTY, "A" if correct else "B", correct, subject=subject)


def records(n_correct, n, strategy=VOTE, subjects=None):
    return [rec(i, i < n_correct, strategy, subjects[i] if subjects else None) for i in range(n)]


def test_accuracy_percent():
    report = benchmark.evaluate_run(records(7, 10))
    assert report.rows[0].accuracy == 70.0 and report.rows[0].n_items == 10
    assert report.rows[0].delta is None


def test_delta_against_baseline():
    report = benchmark.evaluate_run(records(14, 20), records(13, 20, BASE))
    assert report.baseline == BASE.name
    assert [r.strategy for r in report.rows] == [BASE.name, VOTE.name]
    assert report.row(VOTE.name).delta == pytest.approx(5.0, abs=1e-12)
    assert report.row(BASE.name).delta == 0.0


def test_deltas_are_unrounded():
    report = benchmark.evaluate_run(records(2, 3), records(1, 3, BASE))
    assert report.row(VOTE.name).delta == 100.0 * 2 / 3 - 100.0 * 1 / 3


def test_item_mismatch():
    other = [rec(i + 100, True, BASE) for i in range(10)]
    with pytest.raises(benchmark.ItemMismatch):
        benchmark.evaluate_run(records(7, 10), other)


def test_per_subject_breakdown():
    subjects = ["bio", "chem"] * 5
    report = benchmark.evaluate_run(records(4, 10, subjects=subjects))
    assert report.rows[0].subjects == {"bio": 40.0, "chem": 40.0}
    report = benchmark.evaluate_run(records(4, 10))
    assert report.rows[0].subjects == {}


def test_metadata_has_timestamp():
    report = benchmark.evaluate_run(records(1, 2), metadata={"seed": 3})
    assert "timestamp" in report.metadata and report.metadata["seed"] == 3
    assert report.to_json()["rows"][0]["accuracy"] == 50.0


@given(st.lists(st.tuples(st.sampled_from([VOTE, Strategy.voting("borda")]), st.booleans()), min_size=1),
       st.randoms(use_true_random=False))
def test_evaluate_run_is_permutation_invariant(spec, rnd):
    recs = [rec(i, ok, strat) for i, (strat, ok) in enumerate(spec)]
    shuffled = list(recs)
    rnd.shuffle(shuffled)
    a = {r.strategy: (r.accuracy, r.n_items) for r in benchmark.evaluate_run(recs).rows}
    b = {r.strategy: (r.accuracy, r.n_items) for r in benchmark.evaluate_run(shuffled).rows}
    assert a == b


@pytest.mark.parametrize(
    "acc, delta, baseline, text",
    [
        (70.6, 3.6, False, "70.6(+3.6)"),
        (61.0, -2.25, False, "61.0(-2.2)"),
        (50.0, -0.01, False, "50.0(+0.0)"),
        (66.0, 0.0, True, "66.0"),
        (-0.0, None, False, "0.0"),
    ],
)
def test_format_cell(acc, delta, baseline, text):
    assert benchmark.format_cell(acc, delta, baseline) == text


def test_format_table_aligns_columns():
    report = benchmark.evaluate_run(records(14, 20), records(13, 20, BASE), dataset="demo")
    lines = benchmark.format_table(report).splitlines()
    assert lines[0].split() == ["strategy", "demo", "n"]
    assert lines[1].split() == [BASE.name, "65.0", "20"]
    assert lines[2].split() == [VOTE.name, "70.0(+5.0)", "20"]
    assert len({len(line) for line in lines}) == 1


@pytest.fixture(scope="module")
def items():
    return load_dataset(bundle_path("items.jsonl"))


def _solver_pool_config():
    fixture = str(bundle_path("agents/solver_a.json"))
    agents = {f"s{i}": {"backend": "scripted", "fixture": fixture} for i in range(5)}
    return build_config({"dataset": str(bundle_path("items.jsonl")), "agents": agents,
                         "executors": list(agents), "strategies": [{"kind": "voting", "rule": "plurality"}],
                         "seeds": {"pool": 0}})


def test_scaling_count_independent_pool(items):
    rows = benchmark.scaling_table(items, [1, 3, 5], _solver_pool_config())
    assert [c for c, _ in rows] == [1, 3, 5]
    assert len({a for _, a in rows}) == 1


def test_scaling_count_one_is_single_agent(items):
    cfg = load_config(bundle_path("scale.json"))
    (_, acc), = benchmark.scaling_table(items, [1], cfg)
    pool = [cfg.agents[a] for a in cfg.executors]
    chosen = sample_pool(pool, 1, random.Random(cfg.seeds.pool + 1))[0]
    single = benchmark.accuracy(run_items(items, cfg, [Strategy.single_agent(chosen.id)]))
    assert acc == single == 80.0


def test_scaling_count_too_large(items):
    with pytest.raises(KTooLarge):
        benchmark.scaling_table(items, [6], load_config(bundle_path("scale.json")))


def test_scaling_csv():
    assert benchmark.scaling_csv([(1, 80.0), (3, 100.0)]) == "count,accuracy\n1,80.0\n3,100.0\n"


def test_cross_dataset_grid_matches_independent_runs(items):
    configs = {"solvers": _solver_pool_config(), "pool": load_config(bundle_path("scale.json"))}
    datasets = {"first": items[:10], "second": items[10:]}
    grid = benchmark.cross_dataset_grid(configs, datasets)
    for (row, col), value in grid.items():
        cfg = configs[row]
        assert value == benchmark.accuracy(run_items(datasets[col], cfg, [cfg.strategies[0]]))
    text = benchmark.format_grid(grid)
    assert text.splitlines()[0].split() == ["first", "second"]
    assert text.splitlines()[1].split() == ["solvers", "100.0", "100.0"]
