import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from weldkge.errors import DataError
from weldkge.evaluation import (RankingReport, compute_metrics, evaluate, hits_groupby3, load_grouping,
                                make_grouping, mean_reciprocal_rank, nrmse, rank_tail, save_grouping, summarize, top1)
from weldkge.literals import BinningScheme
from weldkge.models import init_params
from _oracles import oracle_rank, random_rank_instance


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["realistic", "optimistic", "pessimistic"]))
def test_rank_tail_matches_sort_oracle(seed, ties):
    p, h, r, t, cands, known = random_rank_instance(seed)
    assert rank_tail(p, h, r, t, cands, known, ties) == oracle_rank(p, h, r, t, cands, known, ties)


def test_rank_examples():
    const = lambda h, r, c: np.zeros(len(c))
    for n in range(1, 9):
        assert rank_tail(const, 0, 0, 0, list(range(n)), None) == math.ceil((1 + n) / 2)
    best = lambda h, r, c: (np.asarray(c) == 3).astype(float)
    assert rank_tail(best, 0, 0, 3, range(6), None) == 1
    with pytest.raises(DataError):
        rank_tail(best, 0, 0, 9, range(6), None)


def test_filtered_never_below_known_positive():
    scores = {0: 5.0, 1: 9.0, 2: 1.0}
    f = lambda h, r, c: np.array([scores[x] for x in c])
    assert rank_tail(f, 7, 0, 0, [0, 1, 2], {(7, 0, 1)}) == 1
    assert rank_tail(f, 7, 0, 0, [0, 1, 2], None) == 2


def test_dim2_transe_hand_set():
    p = init_params("TransE", 5, 1, 2, 0)
    p.tensors["entity"][:] = [[0, 0], [1, 0], [0, 2], [3, 0], [0.5, 0]]
    p.tensors["relation"][0] = [1, 0]
    cands = [1, 2, 3, 4]
    for t in cands:
        for ties in ("realistic", "optimistic", "pessimistic"):
            assert rank_tail(p, 0, 0, t, cands, None, ties) == oracle_rank(p, 0, 0, t, cands, set(), ties)
    assert rank_tail(p, 0, 0, 1, cands, None) == 1


def test_compute_metrics_examples():
    m = compute_metrics([1, 1, 1])
    assert m["hits_at_1"] == 1 and m["mrr"] == 1
    m = compute_metrics([1, 2, 4])
    assert abs(m["hits_at_1"] - 1 / 3) <= 1e-12 and abs(m["mrr"] - 0.5833333333333334) <= 1e-12
    assert m["hits_at_k"][3] == pytest.approx(2 / 3)
    m = compute_metrics([10])
    assert m["hits_at_1"] == 0 and m["mrr"] == pytest.approx(0.1)
    with pytest.raises(DataError):
        compute_metrics([])
    with pytest.raises(DataError):
        compute_metrics([0, 1])


@given(st.lists(st.integers(1, 50), min_size=1, max_size=40))
def test_mrr_at_least_hits1(ranks):
    m = compute_metrics(ranks)
    assert m["mrr"] >= m["hits_at_1"] - 1e-15
    assert all(m["hits_at_k"][a] <= m["hits_at_k"][b] for a, b in zip(sorted(m["hits_at_k"]), sorted(m["hits_at_k"])[1:]))


def test_grouping(tmp_path):
    g = make_grouping([f"carbody:B{i}" for i in (4, 0, 2, 1, 3)])
    assert g == {"carbody:B0": 0, "carbody:B1": 0, "carbody:B2": 0, "carbody:B3": 1, "carbody:B4": 1}
    save_grouping(g, tmp_path / "g.tsv")
    assert load_grouping(tmp_path / "g.tsv") == g


def test_hits_groupby3():
    g = make_grouping(list("abcdef"))
    assert hits_groupby3(list("abc"), list("abc"), g) == 1.0
    assert hits_groupby3(list("def"), list("abc"), g) == 0.0
    assert hits_groupby3(list("bad"), list("abc"), g) == pytest.approx(2 / 3)
    with pytest.raises(DataError):
        hits_groupby3(["z"], ["a"], g)


def test_nrmse_examples():
    s = BinningScheme("diameter", "equal_width", (3.5, 4.5, 5.5))
    assert nrmse([0, 1], [0, 1], s) == 0
    assert nrmse([1, 1, 1], [0, 0, 0], s) == pytest.approx(0.25)
    s2 = BinningScheme("diameter", "equal_width", (4.85, 5.15, 5.45))
    assert nrmse([1], [0], s2) == pytest.approx(0.06)


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=20), st.randoms())
def test_nrmse_permutation_invariant(pairs, rnd):
    s = BinningScheme("diameter", "equal_width", tuple(4.0 + 0.5 * i for i in range(6)))
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    a = nrmse([p for p, _ in pairs], [t for _, t in pairs], s)
    b = nrmse([p for p, _ in shuffled], [t for _, t in shuffled], s)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-15)


def test_top1_follows_tie_convention():
    c = np.array([3, 5, 7])
    assert top1(c, np.array([1.0, 1.0, 0.0]), 5, "optimistic") == 5
    assert top1(c, np.array([1.0, 1.0, 0.0]), 5, "realistic") == 3
    assert top1(c, np.array([0.0, 1.0, 0.0]), 5, "realistic") == 5


def _oracle_scorer(kg):
    test = {tuple(t) for t in kg.split("test").tolist()}
    return lambda h, r, c: np.array([1.0 if (h, r, int(x)) in test else 0.0 for x in c])


def test_evaluate_oracle_and_constant(small_build):
    kg, schemes, _ = small_build
    grouping = make_grouping(kg.vocab.entities[i] for i in kg.vocab.entities_of("carbody"))
    rep = evaluate(_oracle_scorer(kg), kg, "Q1", schemes["diameter"])
    assert rep.hits_at_1 == 1 and rep.mrr == 1 and rep.nrmse == 0
    assert rep.time_test >= 0 and rep.n_queries == len(rep.ranks)
    rep = evaluate(lambda h, r, c: np.zeros(len(c)), kg, "Q2", grouping=grouping)
    n = len(kg.vocab.entities_of("carbody"))
    assert rep.mrr == pytest.approx(1 / math.ceil((1 + n) / 2))
    assert rep.hits_groupby3 >= rep.hits_at_1


def test_evaluate_requirements(small_build):
    kg, schemes, _ = small_build
    with pytest.raises(DataError):
        evaluate(_oracle_scorer(kg), kg, "Q1")
    with pytest.raises(DataError):
        evaluate(_oracle_scorer(kg), kg, "Q2")
    with pytest.raises(DataError):
        evaluate(_oracle_scorer(kg), kg, "Q3", schemes["diameter"])


def test_threads_do_not_change_results(small_build):
    kg, schemes, _ = small_build
    p = init_params("TransE", kg.n_entities, kg.n_relations, 8, 0)
    a = evaluate(p, kg, "Q1", schemes["diameter"])
    b = evaluate(p, kg, "Q1", schemes["diameter"], threads=3)
    assert a.ranks == b.ranks and a.queries == b.queries


def test_report_round_trip(small_build, tmp_path):
    kg, schemes, _ = small_build
    p = init_params("DistMult", kg.n_entities, kg.n_relations, 8, 0)
    rep = evaluate(p, kg, "Q1", schemes["diameter"])
    rep.save(tmp_path / "r.json")
    back = RankingReport.load(tmp_path / "r.json")
    assert back.to_dict() == rep.to_dict()
    rep.save(tmp_path / "m.json", timestamps=False)
    assert RankingReport.load(tmp_path / "m.json").time_test is None
    rep.save_queries(tmp_path / "q.tsv")
    assert len((tmp_path / "q.tsv").read_text().splitlines()) == rep.n_queries


def test_mean_reciprocal_rank(small_build):
    kg = small_build[0]
    out = mean_reciprocal_rank(_oracle_scorer(kg), kg, "test")
    assert out == {"Q1": 1.0, "Q2": 1.0, "all": 1.0}


def test_summarize():
    assert summarize([1.0, 3.0]) == (2.0, 1.0)
    assert all(math.isnan(x) for x in summarize([]))
