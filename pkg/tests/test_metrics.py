import numpy as np
import pytest

from rwkg.graph import RelationLayer, Triple, build_graph
from rwkg.metrics import (
    aggregate,
    build_queries,
    compare_external,
    evaluate,
    percentiles,
    rank_from_scores,
    relative_change,
    write_curve_csv,
    write_metrics_csv,
    write_queries_tsv,
)


def sort_oracle_rank(scores, true_pos):
    """Optimistic and pessimistic positions from a full sort, averaged."""
    order = sorted(range(len(scores)), key=lambda i: (scores[i], i))
    tied = [p for p, i in enumerate(order, 1) if scores[i] == scores[true_pos]]
    return (tied[0] + tied[-1]) / 2


def test_singleton_pool():
    assert rank_from_scores(np.array([3.0]), 0) == (1.0, 1)
    assert aggregate([(1.0, 1)]).mean_percentile == 100.0


def test_strict_argmin_is_rank_one():
    rng = np.random.default_rng(0)
    s = rng.random(100) + 1.0
    s[17] = 0.5
    assert rank_from_scores(s, 17) == (1.0, 100)


@pytest.mark.parametrize("seed", range(20))
def test_rank_matches_sort_oracle(seed):
    rng = np.random.default_rng(seed)
    scores = rng.integers(0, 8, size=30).astype(float)  # plenty of ties
    pos = int(rng.integers(30))
    rank, c = rank_from_scores(scores, pos)
    assert c == 30
    assert rank == sort_oracle_rank(list(scores), pos)


@pytest.mark.parametrize("seed", range(20))
def test_filtering_never_increases_rank(seed):
    rng = np.random.default_rng(seed)
    scores = rng.random(40)
    pos = int(rng.integers(40))
    keep = rng.random(40) < 0.6
    keep[pos] = True
    assert rank_from_scores(scores, pos, keep)[0] <= rank_from_scores(scores, pos)[0]


def test_filtered_true_gene_is_error():
    with pytest.raises(ValueError):
        rank_from_scores(np.zeros(3), 1, np.array([True, False, True]))


def test_examples_mp():
    r = aggregate([(1.0, 101), (101.0, 101)])
    assert r.mean_percentile == 50.0
    perfect = aggregate([(1.0, 10), (1.0, 50)], ks=(1, 10))
    assert perfect.hits == {1: 1.0, 10: 1.0}
    assert perfect.mean_percentile == 100.0
    assert aggregate([(1.0, 7)]).mean_percentile == 100.0
    np.testing.assert_allclose(percentiles([1, 5, 5], [1, 5, 9]), [100.0, 0.0, 50.0])


@pytest.mark.parametrize("seed", range(10))
def test_report_invariants(seed):
    rng = np.random.default_rng(seed)
    counts = rng.integers(1, 60, size=25)
    ranks = np.array([rng.integers(1, c + 1) for c in counts], dtype=float)
    ks = tuple(range(1, int(counts.max()) + 1))
    rep = aggregate(list(zip(ranks, counts)), ks=ks)
    hits = [rep.hit(k) for k in ks]
    assert all(a <= b for a, b in zip(hits, hits[1:]))
    assert hits[-1] == 1.0
    assert 0.0 <= rep.mean_percentile <= 100.0


def test_monotone_transform_invariance():
    rng = np.random.default_rng(3)
    pools = [rng.random(25) for _ in range(10)]
    a = aggregate([rank_from_scores(p, i) for i, p in enumerate(pools)])
    b = aggregate([rank_from_scores(2 * p + 7, i) for i, p in enumerate(pools)])
    assert a.mean_percentile == b.mean_percentile
    assert np.array_equal(a.ranks, b.ranks)


@pytest.mark.parametrize("before,after,direction,expected", [
    (4995.65, 1186.81, "lower", 76.2),
    (0.189, 0.375, "higher", 98.4),
    (72.77, 93.32, "higher", 28.2),
])
def test_relative_change_examples(before, after, direction, expected):
    assert round(relative_change(before, after, direction), 1) == expected


def test_relative_change_edge_cases():
    assert relative_change(3.0, 3.0, "lower") == 0.0
    assert relative_change(3.0, 3.0, "higher") == 0.0
    with pytest.raises(ValueError):
        relative_change(0.0, 1.0)
    with pytest.raises(ValueError):
        relative_change(1.0, 2.0, "sideways")


def test_compare_external_hand_enumeration():
    ranked = list("abcdefghij")
    truth = {"b", "d", "g", "z"}
    pts = compare_external(ranked, truth, k=10)
    assert [p.hits for p in pts] == [0, 1, 1, 2, 2, 2, 3, 3, 3, 3]
    assert pts[3].precision == 0.5
    assert pts[6].recall == 0.75
    assert pts[9].precision == pytest.approx(0.3)


def test_compare_external_edges():
    pts = compare_external(list("abc"), set("abcxyz"), k=3)
    assert all(p.precision == 1.0 for p in pts)
    assert all(p.hits == 0 for p in compare_external(list("abc"), {"q"}, k=3))
    assert compare_external(list("abcd"), {"a", "d"}, k=4)[-1].recall == 1.0
    assert compare_external(list("abcd"), {"a", "q"}, k=4)[-1].recall < 1.0
    with pytest.raises(ValueError):
        compare_external(list("ab"), {"a"}, k=3)
    with pytest.raises(ValueError):
        compare_external(list("ab"), set(), k=1)


def query_graph():
    types = {"D1": "disease", "D2": "disease", **{f"g{i}": "gene" for i in range(6)}, "P": "pathway"}
    dg = RelationLayer.from_pairs("DG", "dg", [("D1", "g0"), ("D1", "g1"), ("D1", "g2"), ("D2", "g3")])
    rt = RelationLayer.from_pairs("RT", "rt", [("g4", "P")])
    return build_graph([dg, rt], types)


def test_build_queries_filters_other_truths():
    g = query_graph()
    qs = build_queries(g, [Triple("D1", "dg", "g1")])
    q = qs[0]
    assert [g.nodes[i].id for i in q.candidates] == [f"g{i}" for i in range(5)]
    names = [g.nodes[i].id for i in q.candidates]
    assert {names[i] for i in np.flatnonzero(q.filtered)} == {"g0", "g2"}
    assert not q.filtered[q.true_pos]


def test_evaluate_with_scorer_and_writers(tmp_path):
    g = query_graph()
    qs = build_queries(g, [Triple("D1", "dg", "g1"), Triple("D2", "dg", "g3")])

    def scorer(disease, cand):
        return np.array([0.0 if g.nodes[i].id == "g3" else float(i) for i in cand])

    rep = evaluate(scorer, qs, ks=(1, 3))
    # D1/g1: survivors g1,g3,g4 scored 1,0,4 -> rank 2 of 3; D2/g3: rank 1 of 5
    assert rep.ranks.tolist() == [2.0, 1.0]
    assert rep.counts.tolist() == [3, 5]
    assert rep.mean_percentile == pytest.approx((50.0 + 100.0) / 2)
    write_metrics_csv(rep, tmp_path / "m.csv", {"seed": 1})
    write_queries_tsv(rep, tmp_path / "q.tsv", {"seed": 1})
    write_curve_csv(compare_external(list("abc"), {"a"}, 2), tmp_path / "c.csv")
    text = (tmp_path / "m.csv").read_text()
    assert text.startswith("# seed=1\n")
    assert "mean_percentile,75.000000" in text
    assert (tmp_path / "q.tsv").read_text().splitlines()[-1] == "D2\tg3\t1.000000\t5"
    assert (tmp_path / "c.csv").read_text().splitlines()[1] == "1,1,1.000000,1.000000"


def test_aggregate_empty():
    with pytest.raises(ValueError):
        aggregate([])
