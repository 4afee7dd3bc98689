import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dha import evaluation as ev
from dha.errors import EmptyRelevant, UnknownUser


def naive_recall(ranked, rel, m):
    return sum(1 for x in ranked[:m] if x in rel) / len(rel)


def naive_ap(ranked, rel, m):
    # direct definition: mean over relevant positions of precision at that cut
    precs = []
    for k in range(1, min(m, len(ranked)) + 1):
        if ranked[k - 1] in rel:
            precs.append(len([x for x in ranked[:k] if x in rel]) / k)
    return sum(precs) / min(len(rel), m)


def test_recall_examples():
    assert ev.recall_at_m([1, 2, 3], {1, 3}, 3) == 1.0
    assert ev.recall_at_m([1, 2, 3], {1, 9}, 3) == 0.5
    assert ev.recall_at_m([1, 2, 3], {7}, 3) == 0.0
    with pytest.raises(EmptyRelevant):
        ev.recall_at_m([1, 2], set(), 2)


def test_average_precision_examples():
    assert ev.average_precision(["a", "x", "b"], {"a", "b"}, 3) == pytest.approx(0.833333, abs=1e-6)
    assert ev.average_precision([4, 5, 6], {4, 5, 6}, 3) == 1.0
    assert ev.average_precision([4, 5, 6], {9}, 3) == 0.0
    with pytest.raises(EmptyRelevant):
        ev.average_precision([1], [], 1)


def test_ties_break_by_ascending_id():
    scores = np.array([0.5, 0.9, 0.5, 0.9, 0.1])
    assert ev.rank_order(scores, np.arange(5)).tolist() == [1, 3, 0, 2, 4]


def test_toy_ranking_and_train_exclusion():
    U = np.array([[1.0, 0.0], [0.0, 1.0]])
    V = np.array([[2.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    assert ev.rank_candidates(U, V, [], 0).items.tolist() == [0, 2, 1]
    assert ev.rank_candidates(U, V, [0], 0).items.tolist() == [2, 1]
    assert ev.rank_candidates(U, V, [0, 2], 0, top=5).items.tolist() == [1]
    with pytest.raises(UnknownUser):
        ev.rank_candidates(U, V, [], 2)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_metrics_match_naive_reference(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 40))
    ranked = rng.permutation(n).tolist()
    rel = set(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False).tolist())
    m = int(rng.integers(1, n + 3))
    assert ev.recall_at_m(ranked, rel, m) == pytest.approx(naive_recall(ranked, rel, m), abs=1e-12)
    assert ev.average_precision(ranked, rel, m) == pytest.approx(naive_ap(ranked, rel, m), abs=1e-12)
    assert 0 <= ev.average_precision(ranked, rel, m) <= 1
    assert ev.recall_at_m(ranked, rel, m) <= ev.recall_at_m(ranked, rel, m + 1)


def test_evaluate_counts_and_lines():
    rng = np.random.default_rng(0)
    U, V = rng.normal(size=(4, 2)), rng.normal(size=(6, 2))
    train = [np.array([0]), np.array([], dtype=int), np.array([1, 2]), np.array([3])]
    test = [np.array([1, 2]), np.array([5]), np.array([], dtype=int), np.array([0])]
    rep = ev.evaluate(U, V, train, test, [3, 1])
    assert (rep.users_evaluated, rep.users_skipped) == (3, 1)
    assert rep.ms == [1, 3]
    lines = rep.lines()
    assert [ln.split("\t")[:2] for ln in lines] == [["recall", "1"], ["recall", "3"], ["map", "1"], ["map", "3"]]
    want = np.mean([naive_recall(ev.rank_candidates(U, V, train[u], u).items.tolist(), set(test[u].tolist()), 3)
                    for u in (0, 1, 3)])
    assert rep.recall[3] == pytest.approx(want, abs=1e-15)
    assert "skipped (no test items): 1" in rep.table()


def test_map_skips_empty_users():
    assert ev.map_at_m([[1, 2], [3, 4]], [{2}, set()], 2) == 0.5
    with pytest.raises(EmptyRelevant):
        ev.map_at_m([[1]], [set()], 1)
