import itertools
import json
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from builders import toy_template
from hlsrank import design as dm
from hlsrank import dse
from hlsrank.errors import ContractError
from hlsrank.model import CompareModel
from oracles import brute_rcv


def total_order_scores(order):
    """order[r] = design index ranked r (0 = best); score 1 when the left design is better."""
    n = len(order)
    rank = {d: r for r, d in enumerate(order)}
    s = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            s[i, j] = 1.0 if rank[i] < rank[j] else 0.0
    return s


def random_scores(rng, n):
    return np.triu(rng.random((n, n)), k=1)


# ---------------------------------------------------------------------------
# rcv_eliminate


def test_rcv_hand_example():
    s = total_order_scores([0, 1, 2, 3])  # A > B > C > D
    kept, trace = dse.rcv_eliminate(s, 2)
    assert kept == [0, 1]
    assert [t.points for t in trace] == [(3.0, 2.0, 1.0, 0.0), (2.0, 1.0, 0.0)]
    assert [t.eliminated for t in trace] == [3, 2]


def test_rcv_k2_equals_n():
    s = random_scores(np.random.default_rng(0), 5)
    kept, trace = dse.rcv_eliminate(s, 5)
    assert kept == [0, 1, 2, 3, 4] and trace == []


def test_rcv_all_ties_removes_one_per_round_by_largest_key():
    s = np.triu(np.full((4, 4), 0.5), k=1)
    keys = [(2, 1), (1, 1), (3, 0), (1, 2)]
    kept, trace = dse.rcv_eliminate(s, 1, keys)
    assert all(len(set(t.points)) == 1 for t in trace)
    assert [t.eliminated for t in trace] == [2, 0, 3]
    assert kept == [1]


def test_rcv_k2_out_of_range():
    s = random_scores(np.random.default_rng(0), 3)
    with pytest.raises(ContractError):
        dse.rcv_eliminate(s, 0)
    with pytest.raises(ContractError):
        dse.rcv_eliminate(s, 4)


@given(st.integers(0, 1_000_000), st.integers(1, 8), st.data())
def test_rcv_matches_brute_force(seed, n, data):
    rng = np.random.default_rng(seed)
    s = random_scores(rng, n)
    if data.draw(st.booleans()):
        s = np.round(s * 2) / 2  # lots of exact ties
    k2 = data.draw(st.integers(1, n))
    keys = [tuple(rng.integers(0, 3, size=2)) + (i,) for i in range(n)]
    assert dse.rcv_eliminate(s, k2, keys)[0] == brute_rcv(s.tolist(), k2, keys)


@given(st.permutations(range(8)), st.integers(1, 8))
def test_rcv_total_order_recovers_top_k2(order, k2):
    kept, trace = dse.rcv_eliminate(total_order_scores(order), k2)
    assert kept == sorted(order[:k2])
    # each round removes the worst remaining design
    for t in trace:
        remaining_ranked = [d for d in order if d in t.remain]
        assert t.eliminated == remaining_ranked[-1]


@given(st.integers(0, 100_000), st.integers(2, 8))
def test_points_conservation(seed, n):
    s = random_scores(np.random.default_rng(seed), n)
    _, trace = dse.rcv_eliminate(s, 1)
    for t in trace:
        m = len(t.remain)
        assert abs(sum(t.points) - m * (m - 1) / 2) <= 1e-9


# ---------------------------------------------------------------------------
# score_matrix


def test_score_matrix_two_designs():
    sm = dse.score_matrix(dse.ConstantComparator(0.25), 2)
    assert sm.calls == 1
    assert sm.values.tolist() == [[0.0, 0.25], [0.0, 0.0]]


def test_score_matrix_constant_stub():
    stub = dse.ConstantComparator(0.5)
    sm = dse.score_matrix(stub, 6, batch=4)
    iu = np.triu_indices(6, k=1)
    assert np.all(sm.values[iu] == 0.5)
    assert np.all(sm.values[np.tril_indices(6)] == 0.0)


@pytest.mark.parametrize("batch", [None, 1, 7, 512])
def test_call_count_k1_100(batch):
    stub = dse.ConstantComparator(0.5)
    sm = dse.score_matrix(stub, 100, batch)
    assert stub.calls == sm.calls == 4950


def test_score_matrix_needs_two():
    with pytest.raises(ContractError):
        dse.score_matrix(dse.ConstantComparator(), 1)


@pytest.fixture(scope="module")
def designs(kernel):
    t, _ = kernel
    configs = dm.enumerate_valid(t.pragma_space)[::37][:12]
    return t, [dm.instantiate(t, c) for c in configs]


def test_batched_equals_sequential(model, designs):
    _, graphs = designs
    comp = dse.ModelComparator(model, graphs)
    seq = dse.score_matrix(comp, len(graphs), None).values
    for b in (1, 7, 512):
        assert np.max(np.abs(dse.score_matrix(comp, len(graphs), b).values - seq)) <= 1e-12
    iu = np.triu_indices(len(graphs), k=1)
    assert np.all((seq[iu] >= 0) & (seq[iu] <= 1))


def test_model_comparator_matches_pair_probability(model, designs):
    _, graphs = designs
    comp = dse.ModelComparator(model, graphs)
    assert comp.compare(0, 3) == pytest.approx(model.pair_probability(graphs[0], graphs[3]), abs=1e-15)


# ---------------------------------------------------------------------------
# stage 1 and explore


def test_stage1_examples(model, designs):
    t, graphs = designs
    cands = [g.config for g in graphs]
    top, ranking = dse.stage1_prune(t, cands, model, 100)
    assert len(top) == len(cands) == len(ranking)
    assert [r.y_hat for r in top] == sorted((r.y_hat for r in top), reverse=True)
    best, _ = dse.stage1_prune(t, cands, model, 1)
    assert best[0].y_hat == max(model.predict(graphs))
    with pytest.raises(ContractError):
        dse.stage1_prune(t, [], model, 3)


def test_stage1_tie_break_and_shuffle_invariance():
    t = toy_template({"a": (1, 2, 4), "b": (1, 2, 4)})
    m = CompareModel.create(seed=0)
    for p in m.params:
        if p.name.startswith("point."):
            p.tensor.data[:] = 0.0  # every design predicts 0: pure tie-break
    cands = dm.enumerate_valid(t.pragma_space)
    shuffled = cands[:]
    random.Random(3).shuffle(shuffled)
    a, _ = dse.stage1_prune(t, cands, m, 5)
    b, _ = dse.stage1_prune(t, shuffled, m, 5)
    assert [r.config for r in a] == [r.config for r in b] == cands[:5]


def test_explore_defaults_and_call_count(model, kernel):
    t, _ = kernel
    res = dse.explore(t, model, budget=400)
    assert (dse.DEFAULT_K1, dse.DEFAULT_K2) == (100, 10)
    assert res.k1 == 100 and len(res.survivors) == 10
    assert res.comparator_calls == 4950
    assert len(res.elimination_trace) == 90
    assert len(res.stage1_ranking) == 400
    top100 = {r.config for r in res.stage1_ranking[:100]}
    assert set(res.survivors) <= top100


def test_explore_stage1_only(model, kernel):
    t, _ = kernel
    res = dse.explore(t, model, 20, 5, budget=100, stage1_only=True)
    assert res.is_ablation and res.comparator_calls == 0
    assert res.survivors == [r.config for r in res.stage1_ranking[:5]]
    assert res.to_json()["ablation_baseline"] is True


def test_explore_small_space_warns():
    t = toy_template({"a": (1, 2), "b": (1, 2)})
    m = CompareModel.create(seed=0)
    with pytest.warns(UserWarning, match="smaller than k2"):
        res = dse.explore(t, m, 100, 10)
    assert set(res.survivors) == set(dm.enumerate_valid(t.pragma_space))


def test_explore_deterministic_and_json_roundtrip(model, kernel, tmp_path):
    t, _ = kernel
    a = dse.explore(t, model, 30, 5, budget=200, seed=4)
    b = dse.explore(t, model, 30, 5, budget=200, seed=4)
    assert dm.dumps(a.to_json()) == dm.dumps(b.to_json())
    path = a.save(tmp_path / "r.json")
    back = dse.DseResult.load(path)
    assert dm.dumps(back.to_json()) == dm.dumps(a.to_json())
    d = json.loads(path.read_text())
    assert {"survivors", "stage1_ranking", "elimination_trace", "comparator_calls"} <= set(d)


def test_budget_sampling_is_seeded_subset(kernel):
    t, _ = kernel
    full = dm.enumerate_valid(t.pragma_space)
    a = dse.candidate_pool(t, 50, 1)
    assert a == dse.candidate_pool(t, 50, 1)
    assert a != dse.candidate_pool(t, 50, 2)
    assert len(a) == 50 and set(a) <= set(full)
    assert dse.candidate_pool(t, None, 0) == full


def test_upper_pairs_enumeration():
    assert dse.upper_pairs(4) == list(itertools.combinations(range(4), 2))
