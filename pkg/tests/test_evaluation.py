import csv
import json
import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hlsrank import design as dm
from hlsrank import evaluation as ev
from hlsrank.errors import ContractError
from hlsrank.evaluation import kendall_tau, pairwise_accuracy, rmse
from oracles import brute_rmse, brute_tau_b

small_floats = st.floats(-100, 100, allow_nan=False)


def test_rmse_examples():
    assert rmse([1, 2, 3], [1, 2, 3]) == 0.0
    assert rmse([0, 0], [5, 0]) == pytest.approx(3.5355339059327378, rel=1e-15)
    with pytest.raises(ContractError):
        rmse([], [])
    with pytest.raises(ContractError):
        rmse([1, 2], [1])


@given(st.lists(st.tuples(small_floats, small_floats), min_size=1, max_size=30))
def test_rmse_symmetric_and_matches_oracle(pairs):
    a, b = zip(*pairs)
    assert rmse(a, b) == rmse(b, a)
    assert abs(rmse(a, b) - brute_rmse(a, b)) <= 1e-12 * max(1.0, brute_rmse(a, b))
    assert rmse(a, b) >= 0


def test_tau_examples():
    assert kendall_tau([1, 2, 3], [1, 3, 2]) == pytest.approx(1 / 3, rel=1e-15)
    assert kendall_tau([1, 2, 3, 4], [10, 20, 30, 40]) == 1.0
    assert kendall_tau([1, 2, 3, 4], [4, 3, 2, 1]) == -1.0
    assert math.isnan(kendall_tau([1, 1, 1], [1, 2, 3]))
    with pytest.raises(ContractError):
        kendall_tau([1.0], [2.0])


@given(st.integers(2, 25), st.integers(0, 10**6))
def test_tau_matches_brute_force_with_ties(n, seed):
    rng = random.Random(seed)
    x = [rng.randint(0, 4) for _ in range(n)]
    y = [rng.randint(0, 4) for _ in range(n)]
    got, want = kendall_tau(x, y), brute_tau_b(x, y)
    assert (math.isnan(got) and math.isnan(want)) or abs(got - want) <= 1e-12


@given(st.lists(small_floats, min_size=2, max_size=20, unique=True))
def test_tau_self_is_one(x):
    assert kendall_tau(x, x) == 1.0


# ---------------------------------------------------------------------------
# pairwise accuracy


def constant_scorer(p):
    return lambda recs, pairs: np.full(len(pairs), p)


def test_oracle_stub_is_perfect(tiny_dataset):
    acc = pairwise_accuracy(ev.oracle_scorer, tiny_dataset.by_kernel("train"))
    for b in ev.BUCKETS:
        assert acc[b].count == 0 or acc[b].accuracy == 1.0


def test_all_count_and_half_probability_predicts_second(tiny_dataset):
    by_kernel = tiny_dataset.by_kernel("train")
    acc = pairwise_accuracy(constant_scorer(0.5), by_kernel)
    assert acc["ALL"].count == sum(math.comb(len(v), 2) for v in by_kernel.values())
    # p = 0.5 says "second wins": correct exactly when y_i <= y_j
    want = sum(
        recs[i].y <= recs[j].y for recs in by_kernel.values() for i, j in ev.all_pairs(len(recs))
    )
    assert acc["ALL"].correct == want


def test_bucket_counts_match_degree(tiny_dataset):
    by_kernel = tiny_dataset.by_kernel("train")
    acc = pairwise_accuracy(ev.oracle_scorer, by_kernel)
    for d in (1, 2, 3):
        want = sum(
            dm.pragma_difference_degree(recs[i].graph, recs[j].graph) == d
            for recs in by_kernel.values() for i, j in ev.all_pairs(len(recs))
        )
        assert acc[f"d{d}"].count == want
    assert sum(acc[f"d{d}"].count for d in (1, 2, 3)) <= acc["ALL"].count


def test_empty_bucket_is_nan():
    assert math.isnan(ev.BucketAccuracy(0, 0).accuracy)


def test_model_scorer_matches_model(tiny_dataset, model):
    by_kernel = tiny_dataset.by_kernel("test")
    a = pairwise_accuracy(model, by_kernel)
    b = pairwise_accuracy(ev.model_scorer(model), by_kernel)
    assert a == b


# ---------------------------------------------------------------------------
# report files


def test_geomean():
    assert ev.geomean([1.0, 4.0]) == pytest.approx(2.0, rel=1e-15)


def test_evaluate_metrics_only(tiny_dataset, model, tmp_path):
    rep = ev.evaluate(model, tiny_dataset, seed=7, checkpoint_hash="abc123")
    paths = ev.write_report(rep, tmp_path)
    names = sorted(p.name for p in paths)
    assert names == ["metrics.csv", "report.json"]
    rows = list(csv.DictReader((tmp_path / "metrics.csv").open()))
    assert {r["seed"] for r in rows} == {"7"}
    assert {r["checkpoint_sha256"] for r in rows} == {"abc123"}
    scopes = {(r["metric"], r["scope"]) for r in rows}
    assert {("rmse", "pooled"), ("kendall_tau", "pooled"), ("pairwise_accuracy", "ALL")} <= scopes
    j = json.loads((tmp_path / "report.json").read_text())
    assert j["dse_latency"] == [] and j["dse_summary"] == {}


def test_report_with_dse(tiny_dataset, model, tmp_path):
    rows = [ev.DseLatency("k1", 2.0, 4.0, 8.0), ev.DseLatency("k2", 8.0, 4.0, 2.0)]
    rep = ev.evaluate(model, tiny_dataset, 0, "h", dse=rows)
    s = rep.dse_summary()
    assert s["ratio_vs_random"] == pytest.approx(1.0) and s["ratio_vs_stage1_only"] == pytest.approx(1.0)
    ev.write_report(rep, tmp_path)
    table = list(csv.DictReader((tmp_path / "dse_latency.csv").open()))
    assert [r["kernel"] for r in table] == ["k1", "k2", "GEOMEAN"]
    assert float(table[0]["ratio_vs_random"]) == 0.25


def test_nan_serialised_as_null(tiny_dataset, model):
    rep = ev.evaluate(model, tiny_dataset, 0, "h")
    rep.tau_per_kernel["x"] = math.nan
    text = dm.dumps(rep.to_json())
    assert json.loads(text)["kendall_tau"]["per_kernel"]["x"] is None


def test_evaluate_empty_split(tiny_dataset, model):
    with pytest.raises(ContractError):
        ev.evaluate(model, tiny_dataset, 0, "h", split="nope")


def test_dse_comparison_row(kernel, model):
    t, oracle = kernel
    row, two, s1 = ev.dse_comparison(t, oracle, model, 12, 3, 60, None, 0)
    assert row.kernel_id == t.kernel_id
    assert row.stage1_only >= min(ev.latency(oracle, r.config) for r in s1.stage1_ranking[:12])
    assert row.two_stage == ev.best_true_latency(oracle, two.survivors)
    with pytest.raises(ContractError):
        ev.best_true_latency(oracle, [])
