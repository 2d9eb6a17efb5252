"""Filtered ranking metrics over type-restricted candidate pools."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .graph import KnowledgeGraph, Triple

MP_FORMULA = "MP = mean_q 100*(C_q - rank_q)/(C_q - 1); 100 when C_q = 1"
TIE_RULE = "ties: mean of best and worst tie position"

# scorer(disease_id, candidate_indices) -> distances, lower is better
Scorer = Callable[[str, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class RankingQuery:
    disease: str
    true_gene: str
    candidates: np.ndarray  # graph node indices, gene-typed
    true_pos: int  # position of true_gene within candidates
    filtered: np.ndarray  # bool mask over candidates: known truths to drop

    def __post_init__(self):
        if self.filtered[self.true_pos]:
            raise ValueError(f"true gene {self.true_gene!r} is filtered out of its own query")


@dataclass
class MetricsReport:
    ranks: np.ndarray
    counts: np.ndarray
    ks: tuple[int, ...]
    queries: list[tuple[str, str]] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.ranks)

    def hit(self, k: int) -> float:
        return float(np.mean(self.ranks <= k))

    @property
    def hits(self) -> dict[int, float]:
        return {k: self.hit(k) for k in self.ks}

    @property
    def mean_rank(self) -> float:
        return float(np.mean(self.ranks))

    @property
    def mean_percentile(self) -> float:
        return float(np.mean(percentiles(self.ranks, self.counts)))

    def as_rows(self) -> list[tuple[str, float]]:
        rows = [(f"hit@{k}", v) for k, v in self.hits.items()]
        rows += [("mean_rank", self.mean_rank), ("mean_percentile", self.mean_percentile),
                 ("queries", self.n)]
        return rows


def percentiles(ranks, counts) -> np.ndarray:
    ranks = np.asarray(ranks, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    out = np.full(ranks.shape, 100.0)
    many = counts > 1
    out[many] = 100.0 * (counts[many] - ranks[many]) / (counts[many] - 1)
    return out


def rank_from_scores(scores: np.ndarray, true_pos: int, keep: np.ndarray | None = None):
    """Filtered rank of ``scores[true_pos]`` (lower score is better)."""
    scores = np.asarray(scores, dtype=np.float64)
    target = scores[true_pos]
    if keep is not None:
        if not keep[true_pos]:
            raise ValueError("true candidate is filtered out")
        scores = scores[keep]
    better = int(np.count_nonzero(scores < target))
    ties = int(np.count_nonzero(scores == target)) - 1
    return 1.0 + better + ties / 2.0, len(scores)


def rank_one(scorer: Scorer, query: RankingQuery) -> tuple[float, int]:
    scores = scorer(query.disease, query.candidates)
    return rank_from_scores(scores, query.true_pos, ~query.filtered)


def aggregate(ranks_and_counts: Sequence[tuple[float, int]], ks: Iterable[int] = (10, 30, 100),
              queries=None) -> MetricsReport:
    if not ranks_and_counts:
        raise ValueError("no ranked queries to aggregate")
    arr = np.asarray(ranks_and_counts, dtype=np.float64)
    return MetricsReport(arr[:, 0], arr[:, 1].astype(np.int64), tuple(int(k) for k in ks),
                         list(queries or []))


def build_queries(graph: KnowledgeGraph, triples: Iterable[Triple], gene_type: str = "gene",
                  head_is_disease: bool = True, known: Iterable[Triple] = ()) -> list[RankingQuery]:
    """One query per held-out triple, candidates = every gene-typed node of ``graph``.

    Other known truths for the same disease and relation (any layer of
    ``graph``, plus the optional ``known`` triples) are filtered; the
    query's own gene never is.
    """
    cand = graph.type_indices(gene_type)
    pos_of = {int(c): i for i, c in enumerate(cand)}
    extra: dict[tuple[str, str], set[str]] = {}
    for t in known:
        key = (t.head, t.relation) if head_is_disease else (t.tail, t.relation)
        extra.setdefault(key, set()).add(t.tail if head_is_disease else t.head)
    out = []
    for tr in triples:
        disease, gene = (tr.head, tr.tail) if head_is_disease else (tr.tail, tr.head)
        if gene not in graph or graph.index(gene) not in pos_of:
            raise ValueError(f"true gene {gene!r} is not a candidate in this graph")
        known_genes = graph.tails(disease, tr.relation) if head_is_disease else graph.heads(disease, tr.relation)
        known_genes = set(known_genes) | extra.get((disease, tr.relation), set())
        mask = np.zeros(len(cand), dtype=bool)
        for g in sorted(known_genes):
            if g != gene and g in graph and graph.index(g) in pos_of:
                mask[pos_of[graph.index(g)]] = True
        out.append(RankingQuery(disease, gene, cand, pos_of[graph.index(gene)], mask))
    return out


def evaluate(scorer: Scorer, queries: Sequence[RankingQuery], ks=(10, 30, 100)) -> MetricsReport:
    results = [rank_one(scorer, q) for q in queries]
    return aggregate(results, ks, [(q.disease, q.true_gene) for q in queries])


def relative_change(before: float, after: float, direction: str = "higher") -> float:
    """Percentage improvement from ``before`` to ``after``.

    ``direction`` is ``"lower"`` when smaller values are better (mean rank)
    and ``"higher"`` otherwise.
    """
    if before == 0:
        raise ValueError("relative change from a zero baseline is undefined")
    if direction in ("lower", "lower-is-better"):
        return 100.0 * (before - after) / before
    if direction in ("higher", "higher-is-better"):
        return 100.0 * (after - before) / before
    raise ValueError(f"unknown direction {direction!r}")


@dataclass(frozen=True)
class CurvePoint:
    j: int
    hits: int
    precision: float
    recall: float


def compare_external(ranked: Sequence[str], truth: Iterable[str], k: int = 50) -> list[CurvePoint]:
    """Cumulative hits and precision/recall over the top ``k`` of a ranked list."""
    truth = set(truth)
    if not truth:
        raise ValueError("truth set is empty")
    if k > len(ranked):
        raise ValueError(f"cutoff {k} exceeds list length {len(ranked)}")
    out, hits = [], 0
    for j, gene in enumerate(ranked[:k], 1):
        hits += gene in truth
        out.append(CurvePoint(j, hits, hits / j, hits / len(truth)))
    return out


def _header(config: dict | None) -> str:
    buf = io.StringIO()
    for key, value in sorted((config or {}).items()):
        buf.write(f"# {key}={value}\n")
    return buf.getvalue()


def write_metrics_csv(report: MetricsReport, path, config: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_header(config))
        fh.write(f"# {MP_FORMULA}\n# {TIE_RULE}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        for name, value in report.as_rows():
            w.writerow([name, fmt(value)])


def write_queries_tsv(report: MetricsReport, path, config: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_header(config))
        fh.write("disease\tgene\trank\tC\n")
        for (d, g), r, c in zip(report.queries, report.ranks, report.counts):
            fh.write(f"{d}\t{g}\t{fmt(r)}\t{int(c)}\n")


def write_curve_csv(points: Sequence[CurvePoint], path, config: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_header(config))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "hits", "precision", "recall"])
        for p in points:
            w.writerow([p.j, p.hits, fmt(p.precision), fmt(p.recall)])


def fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.6f}"
