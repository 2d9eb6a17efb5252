import itertools
import random
from fractions import Fraction
from math import comb

import numpy as np
import pytest

from rwkg.baselines import (
    GeneNetwork,
    SeedSet,
    diamond_pvalue,
    diamond_rank,
    neighborhood_rank,
    random_walk_restart,
    rwr_rank,
    transition_matrix,
)

HAND_EDGES = [("a", "d"), ("b", "d"), ("c", "d"), ("a", "e"), ("e", "f"), ("b", "g"), ("g", "h"),
              ("h", "i"), ("c", "j"), ("j", "k"), ("k", "l"), ("f", "l")]
HAND = GeneNetwork.from_edges("abcdefghijkl", HAND_EDGES)
HAND_SEED = SeedSet("D", {"a", "b", "c"})


def exact_tail(n, s0, k, ks):
    return sum(Fraction(comb(s0, x) * comb(n - s0, k - x), comb(n, k)) for x in range(ks, min(k, s0) + 1))


def random_net(rnd, n=20, p=0.2, isolated=False):
    ids = [f"n{i:02d}" for i in range(n)]
    edges = [(a, b) for a, b in itertools.combinations(ids, 2) if rnd.random() < p]
    if isolated:
        edges = [e for e in edges if ids[-1] not in e]
    return GeneNetwork.from_edges(ids, edges)


def test_network_is_symmetric_without_loops():
    net = GeneNetwork.from_edges("xyz", [("x", "y"), ("y", "x"), ("z", "z")])
    a = net.adjacency.toarray()
    assert np.array_equal(a, a.T)
    assert np.all(np.diag(a) == 0)
    assert a.sum() == 2


def test_neighborhood_fraction():
    net = GeneNetwork.from_edges("gabcd", [("g", "a"), ("g", "b"), ("g", "c"), ("g", "d")])
    out = neighborhood_rank(net, SeedSet("D", {"a", "b"}), limit=1)
    assert out == [("g", 0.5)]


def test_neighborhood_isolated_scores_zero():
    net = GeneNetwork.from_edges("abcz", [("a", "b"), ("b", "c")])
    out = neighborhood_rank(net, SeedSet("D", {"a"}), limit=10)
    assert [g for g, _ in out] == ["b", "c"]


def test_neighborhood_hand_simulation():
    out = neighborhood_rank(HAND, HAND_SEED, limit=5)
    assert out == [("d", 1.0), ("e", 0.5), ("f", 0.5), ("g", 0.5), ("h", 0.5)]


def test_diamond_hand_table():
    out = diamond_rank(HAND, HAND_SEED, limit=3)
    assert [g for g, _ in out] == ["d", "e", "f"]
    expected = [Fraction(1, 220), Fraction(19, 33), Fraction(15, 22)]
    for (_, p), e in zip(out, expected):
        assert p == pytest.approx(float(e), rel=1e-12)


def test_diamond_dominance_and_exhaustion():
    net = GeneNetwork.from_edges(["s1", "s2", "hub", "lone", "x"], [("hub", "s1"), ("hub", "s2"), ("lone", "x")])
    out = diamond_rank(net, SeedSet("D", {"s1", "s2"}), limit=10)
    assert [g for g, _ in out] == ["hub"]


def test_pvalue_examples():
    assert diamond_pvalue(10, 3, 2, 0) == 1.0
    assert diamond_pvalue(10, 3, 2, 2) == pytest.approx(3 / 45, rel=1e-14)
    for bad in [(10, 3, 2, 3), (10, 10, 2, 1), (10, 3, 11, 1), (10, 3, 2, -1)]:
        with pytest.raises(ValueError):
            diamond_pvalue(*bad)


def test_pvalue_big_rational_random():
    rnd = random.Random(0)
    for _ in range(300):
        n = rnd.randint(2, 60)
        s0 = rnd.randint(0, n - 1)
        k = rnd.randint(0, n)
        ks = rnd.randint(0, min(k, s0))
        assert abs(diamond_pvalue(n, s0, k, ks) - float(exact_tail(n, s0, k, ks))) < 1e-12


def test_pvalue_monotone_in_ks():
    for n in range(2, 16):
        for s0 in range(n):
            for k in range(n + 1):
                ps = [diamond_pvalue(n, s0, k, ks) for ks in range(min(k, s0) + 1)]
                assert all(a >= b for a, b in zip(ps, ps[1:]))
                assert all(0.0 <= p <= 1.0 for p in ps)


def test_rwr_two_node():
    net = GeneNetwork.from_edges("ab", [("a", "b")])
    np.testing.assert_allclose(random_walk_restart(net, SeedSet("D", {"a", "b"})), [0.5, 0.5], atol=1e-12)


def test_rwr_restart_dominance():
    rnd = random.Random(1)
    net = random_net(rnd, 10, 0.4)
    seed = SeedSet("D", {"n00", "n01"})
    pi = random_walk_restart(net, seed, restart=0.999999, tol=1e-14)
    assert pi[[net.index("n00"), net.index("n01")]].sum() > 1 - 1e-5


def dense_oracle(net, seed, restart):
    mask = net.seed_mask(seed)
    u = mask / mask.sum()
    a = net.adjacency.toarray()
    deg = a.sum(axis=0)
    w = np.where(deg > 0, a / np.where(deg > 0, deg, 1), u[:, None])
    return np.linalg.solve(np.eye(net.size) - (1 - restart) * w, restart * u)


@pytest.mark.parametrize("seed", range(10))
def test_rwr_dense_solve(seed):
    rnd = random.Random(seed)
    net = random_net(rnd, 10, 0.3, isolated=seed % 2 == 0)
    s = SeedSet("D", set(rnd.sample(net.ids, 3)))
    r = rnd.uniform(0.1, 0.9)
    pi = random_walk_restart(net, s, r, tol=1e-13)
    np.testing.assert_allclose(pi, dense_oracle(net, s, r), atol=1e-8)
    assert np.all(pi >= 0) and abs(pi.sum() - 1) < 1e-9


def test_transition_columns_stochastic():
    net = random_net(random.Random(2), 15, 0.2, isolated=True)
    w, dangling = transition_matrix(net, np.full(net.size, 1 / net.size))
    sums = np.asarray(w.sum(axis=0)).ravel()
    np.testing.assert_allclose(sums[~dangling], 1.0)
    assert dangling[-1]


def test_rwr_errors():
    net = GeneNetwork.from_edges("ab", [("a", "b")])
    for bad in (0.0, 1.0):
        with pytest.raises(ValueError):
            random_walk_restart(net, SeedSet("D", {"a"}), restart=bad)
    with pytest.raises(ValueError):
        random_walk_restart(net, SeedSet("D", {"a"}), tol=0)
    with pytest.raises(ValueError):
        random_walk_restart(net, SeedSet("D", {"zz"}))
    with pytest.raises(ValueError):
        neighborhood_rank(GeneNetwork.from_edges([], []), SeedSet("D", {"a"}))


@pytest.mark.parametrize("seed", range(50))
def test_rankings_properties(seed):
    rnd = random.Random(seed)
    net = random_net(rnd, 20, 0.15)
    seeds = set(rnd.sample(net.ids, 3))
    shuffled = SeedSet("D", set(rnd.sample(sorted(seeds), 3)))
    for fn in (neighborhood_rank, diamond_rank, rwr_rank):
        kw = {"limit": 20}
        out = fn(net, SeedSet("D", seeds), **kw)
        genes = [g for g, _ in out]
        assert not set(genes) & seeds
        assert len(genes) == len(set(genes))
        assert fn(net, shuffled, **kw) == out
