"""Network-medicine baselines: direct neighborhood scoring, DIAMOnD and
random walk with restart, all seeded from a disease's training genes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.stats import hypergeom

from .graph import KnowledgeGraph


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SeedSet:
    disease: str
    seeds: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "seeds", frozenset(self.seeds))


@dataclass(frozen=True, eq=False)
class GeneNetwork:
    """Undirected binary adjacency; node order is sorted id order, which is
    also the tie-break order of every ranking below."""

    ids: tuple[str, ...]
    adjacency: sp.csr_matrix

    def __post_init__(self):
        object.__setattr__(self, "_index", {g: i for i, g in enumerate(self.ids)})

    @classmethod
    def from_edges(cls, nodes: Iterable[str], edges: Iterable[tuple[str, str]]) -> "GeneNetwork":
        edges = [(a, b) for a, b in edges if a != b]
        ids = tuple(sorted(set(nodes) | {n for e in edges for n in e}))
        index = {g: i for i, g in enumerate(ids)}
        rows = [index[a] for a, b in edges] + [index[b] for a, b in edges]
        cols = [index[b] for a, b in edges] + [index[a] for a, b in edges]
        adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(ids), len(ids))).tocsr()
        adj.data[:] = 1.0  # collapse duplicates to binary
        return cls(ids, adj)

    @property
    def size(self) -> int:
        return len(self.ids)

    @property
    def degree(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    def index(self, gene: str) -> int:
        return self._index[gene]

    def seed_mask(self, seed: SeedSet) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        for g in seed.seeds:
            if g in self._index:
                mask[self._index[g]] = True
        return mask


def gene_network(graph: KnowledgeGraph, pp_tag: str, gene_type: str = "gene") -> GeneNetwork:
    layer = graph.layer(pp_tag)
    genes = [n.id for n in graph.nodes_of_type(gene_type)]
    return GeneNetwork.from_edges(genes, ((t.head, t.tail) for t in layer.triples))


def _check(net: GeneNetwork, limit: int):
    if net.size == 0:
        raise ValueError("empty gene network")
    if limit < 1:
        raise ValueError("limit must be >= 1")


def neighborhood_rank(net: GeneNetwork, seed: SeedSet, limit: int = 100) -> list[tuple[str, float]]:
    """Greedy expansion by fraction of neighbours already in the cluster."""
    _check(net, limit)
    in_cluster = net.seed_mask(seed)
    counts = net.adjacency @ in_cluster.astype(np.float64)
    deg = net.degree
    out = []
    while len(out) < limit:
        score = np.divide(counts, deg, out=np.zeros_like(counts), where=deg > 0)
        score[in_cluster] = -1.0
        best = int(np.argmax(score))
        if score[best] <= 0:
            break
        out.append((net.ids[best], float(score[best])))
        in_cluster[best] = True
        counts += net.adjacency.getcol(best).toarray().ravel()
    return out


def diamond_pvalue(n: int, s0: int, k: int, ks: int) -> float:
    """P(X >= ks) for X ~ Hypergeom(population n, s0 marked, k draws)."""
    if not (0 <= ks <= min(k, s0)) or not (0 <= s0 < n) or not (0 <= k <= n):
        raise ValueError(f"invalid connectivity parameters N={n} s0={s0} k={k} ks={ks}")
    if ks == 0:
        return 1.0
    return float(min(1.0, max(0.0, hypergeom.sf(ks - 1, n, s0, k))))


def diamond_rank(net: GeneNetwork, seed: SeedSet, limit: int = 100) -> list[tuple[str, float]]:
    """Add, one at a time, the gene whose links into the cluster are least
    likely by chance; ties go to more links, then to node order."""
    _check(net, limit)
    in_cluster = net.seed_mask(seed)
    ks = net.adjacency @ in_cluster.astype(np.float64)
    deg = net.degree
    n = net.size
    order = np.arange(n)
    out = []
    while len(out) < limit:
        s0 = int(in_cluster.sum())
        cand = np.flatnonzero(~in_cluster & (ks >= 1))
        if cand.size == 0 or s0 >= n:
            break
        p = hypergeom.sf(ks[cand] - 1, n, s0, deg[cand])
        pick = np.lexsort((order[cand], -ks[cand], p))[0]
        best = int(cand[pick])
        out.append((net.ids[best], float(p[pick])))
        in_cluster[best] = True
        ks += net.adjacency.getcol(best).toarray().ravel()
    return out


def transition_matrix(net: GeneNetwork, restart_dist: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    """Column-normalised adjacency plus the mask of dangling columns,
    which are to be read as ``restart_dist``."""
    deg = net.degree
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    return (net.adjacency @ sp.diags(inv)).tocsr(), deg == 0


def random_walk_restart(net: GeneNetwork, seed: SeedSet, restart: float = 0.5, tol: float = 1e-10,
                        max_iter: int = 10_000) -> np.ndarray:
    """Stationary visit frequencies of a walker restarting at the seeds."""
    if not 0 < restart < 1:
        raise ValueError("restart must lie in (0, 1)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    mask = net.seed_mask(seed)
    if not mask.any():
        raise ValueError(f"no seed of {seed.disease!r} is in the network")
    u = mask / mask.sum()
    w, dangling = transition_matrix(net, u)
    pi = u.copy()
    for _ in range(max_iter):
        nxt = (1 - restart) * (w @ pi + u * pi[dangling].sum()) + restart * u
        if np.abs(nxt - pi).sum() < tol:
            return nxt / nxt.sum()
        pi = nxt
    raise ConvergenceError(f"random walk did not converge within {max_iter} iterations")


def rwr_rank(net: GeneNetwork, seed: SeedSet, restart: float = 0.5, tol: float = 1e-10,
             limit: int | None = None) -> list[tuple[str, float]]:
    pi = random_walk_restart(net, seed, restart, tol)
    mask = net.seed_mask(seed)
    idx = np.flatnonzero(~mask)
    idx = idx[np.lexsort((idx, -pi[idx]))]
    if limit is not None:
        idx = idx[:limit]
    return [(net.ids[i], float(pi[i])) for i in idx]
