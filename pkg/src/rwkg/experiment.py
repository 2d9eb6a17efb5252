"""Experiment protocol: layer ablation, weighted-vs-original, baselines, external comparison."""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import baselines as bl
from .graph import KnowledgeGraph, RelationLayer, Triple, build_graph
from .hypersearch import RealRange, Trial, search
from .metrics import MetricsReport, RankingQuery, build_queries, evaluate, relative_change
from .rotate import Model, TrainConfig, TrainHistory, tail_distances, train
from .split import SplitBundle

logger = logging.getLogger(__name__)


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named component (split, init, negatives, search...)."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


def substream_seed(seed: int, name: str) -> int:
    return int(substream(seed, name).integers(2**31 - 1))


@dataclass(frozen=True)
class Protocol:
    """Names that tie the generic graph to the disease-gene task."""

    dg_tag: str = "DG"
    pp_tag: str = "PP"
    gene_type: str = "gene"
    ks: tuple[int, ...] = (10, 30, 100)


def rotate_scorer(model: Model, graph: KnowledgeGraph, relation: str, weighted: bool = True):
    """Distances from ``disease * r`` to candidate genes, scaled by the relation weight."""
    to_model = np.array([model.node_index(n.id) for n in graph.nodes], dtype=np.int64)
    r = model.relation_index(relation)
    w = model.relation_weight[r] if weighted else 1.0

    def scorer(disease: str, candidates: np.ndarray) -> np.ndarray:
        return w * tail_distances(model, model.node_index(disease), r, to_model[candidates])

    return scorer


def validation_hook(graph: KnowledgeGraph, queries: Sequence[RankingQuery], relation: str,
                    weighted: bool, ks) -> Callable[[Model], float]:
    def hook(model: Model) -> float:
        return evaluate(rotate_scorer(model, graph, relation, weighted), queries, ks).mean_percentile
    return hook


@dataclass
class FitResult:
    model: Model
    history: TrainHistory
    valid: MetricsReport | None
    test: MetricsReport | None


def fit_and_evaluate(graph: KnowledgeGraph, bundle: SplitBundle, config: TrainConfig,
                     protocol: Protocol, seed: int, on_eval=None, evaluate_test: bool = True) -> FitResult:
    """Train on ``bundle.train`` (restricted to triples inside ``graph``) and
    score valid/test queries against the gene candidates of ``graph``."""
    relation = bundle.dg_relation or graph.layer(protocol.dg_tag).relation
    train_triples = [t for t in bundle.train if graph.contains(t)]
    valid_q = build_queries(graph, bundle.valid, protocol.gene_type)
    hook = validation_hook(graph, valid_q, relation, config.weighted, protocol.ks) if valid_q else None
    model, history = train(graph, train_triples, config, hook,
                           rng_init=substream(seed, "init"), rng_neg=substream(seed, "negatives"),
                           on_eval=on_eval)
    scorer = rotate_scorer(model, graph, relation, config.weighted)
    valid = evaluate(scorer, valid_q, protocol.ks) if valid_q else None
    test = None
    if evaluate_test and bundle.test:
        test = evaluate(scorer, build_queries(graph, bundle.test, protocol.gene_type), protocol.ks)
    return FitResult(model, history, valid, test)


def stage_graphs(layers: Sequence[RelationLayer], node_types: Mapping[str, str]):
    """Cumulative prefixes: [L1], [L1, L2], ..."""
    for i in range(1, len(layers) + 1):
        yield " + ".join(l.tag for l in layers[:i]), build_graph(layers[:i], node_types)


METRIC_COLUMNS = ("mean_rank", "mean_percentile")


def metric_row(label: str, report: MetricsReport | None, ks: Sequence[int],
               skip: Iterable[str] = ()) -> dict:
    skip = set(skip)
    row = {"variant": label}
    for k in ks:
        key = f"hit@{k}"
        row[key] = "NA" if report is None or key in skip else report.hit(k)
    row["mean_rank"] = "NA" if report is None or "mean_rank" in skip else report.mean_rank
    row["mean_percentile"] = "NA" if report is None or "mean_percentile" in skip else report.mean_percentile
    return row


def ablate(layers: Sequence[RelationLayer], node_types, bundle: SplitBundle, config: TrainConfig,
           protocol: Protocol, seed: int) -> list[dict]:
    """One model per cumulative layer prefix, all scored on the same test split."""
    rows, first = [], None
    for label, graph in stage_graphs(layers, node_types):
        staged = bundle.with_layers(graph, graph.tags)
        fit = fit_and_evaluate(graph, staged, config, protocol, seed)
        row = metric_row(label, fit.test, protocol.ks)
        row["best_epoch"] = fit.history.best_epoch
        first = first or row
        for k in protocol.ks:
            row[f"rel_hit@{k}"] = _rel(first[f"hit@{k}"], row[f"hit@{k}"], "higher")
        row["rel_mean_rank"] = _rel(first["mean_rank"], row["mean_rank"], "lower")
        row["rel_mean_percentile"] = _rel(first["mean_percentile"], row["mean_percentile"], "higher")
        rows.append(row)
    return rows


def _rel(before, after, direction):
    if before == 0:
        return "NA"
    return relative_change(before, after, direction)


def weight_space(relations: Sequence[str], fixed_relation: str, low: float = 1e-2, high: float = 1e2):
    return {f"weight.{r}": RealRange(low, high, log=True) for r in relations if r != fixed_relation}


def search_weights(graph: KnowledgeGraph, bundle: SplitBundle, config: TrainConfig, protocol: Protocol,
                   seed: int, budget: int, space: Mapping | None = None, warmup: int = 5, grace: int = 2,
                   log_path=None, log_header=None, enqueue_uniform: bool = True):
    """Random search over relation weights (and any other TrainConfig fields
    named in ``space``) maximising validation mean percentile.

    With ``enqueue_uniform`` the first trial sets every searched weight to 1,
    so the search can fall back to uniform weighting when nothing sampled
    beats it on validation.

    Returns ``(best_params, trials, best_fit)``.
    """
    relation = bundle.dg_relation or graph.layer(protocol.dg_tag).relation
    space = space if space is not None else weight_space(graph.relations, relation)
    if not build_queries(graph, bundle.valid, protocol.gene_type):
        raise ValueError("weight search needs a nonempty validation split")
    fits: dict[int, FitResult] = {}

    def objective(trial: Trial) -> float:
        cfg = apply_params(config, trial.params)
        report = trial.report
        fit = fit_and_evaluate(graph, bundle, cfg, protocol, seed, on_eval=report, evaluate_test=False)
        fits[trial.record.trial] = fit
        return fit.valid.mean_percentile

    fixed = {f"weight.{relation}": 1.0} if f"weight.{relation}" not in space else None
    uniform = [{k: 1.0 for k in space if k.startswith("weight.")}] if enqueue_uniform else []
    best, trials = search(objective, space, budget, substream_seed(seed, "search"), warmup, grace,
                          fixed=fixed, log_path=log_path, log_header=log_header, enqueue=uniform)
    best_trial = max((t for t in trials if t.status == "complete"), key=lambda t: (t.value, -t.trial))
    fit = fits[best_trial.trial]
    test_q = build_queries(graph, bundle.test, protocol.gene_type)
    fit.test = evaluate(rotate_scorer(fit.model, graph, relation, config.weighted), test_q, protocol.ks)
    return best, trials, fit


def apply_params(config: TrainConfig, params: Mapping) -> TrainConfig:
    weights = dict(config.relation_weight)
    fields = {}
    for key, value in params.items():
        if key.startswith("weight."):
            weights[key[len("weight."):]] = float(value)
        else:
            fields[key.removeprefix("train.")] = value
    return replace(config, relation_weight=weights, **fields)


def compare_weighted(graph: KnowledgeGraph, bundle: SplitBundle, config: TrainConfig, protocol: Protocol,
                     seed: int, budget: int, **search_kw):
    """Original (all weights 1) versus searched relation weights on identical splits and seeds."""
    original_cfg = replace(config, relation_weight={}, weighted=False)
    original = fit_and_evaluate(graph, bundle, original_cfg, protocol, seed)
    best, trials, weighted = search_weights(graph, bundle, replace(config, weighted=True), protocol, seed,
                                            budget, **search_kw)
    rows = [metric_row("Original", original.test, protocol.ks),
            metric_row("Relation-weighted", weighted.test, protocol.ks)]
    return rows, best, trials, original, weighted


# --- baselines ------------------------------------------------------------

def seed_sets(graph: KnowledgeGraph, train: Iterable[Triple], relation: str) -> dict[str, bl.SeedSet]:
    seeds: dict[str, set] = {}
    for t in train:
        if t.relation == relation:
            seeds.setdefault(t.head, set()).add(t.tail)
    return {d: bl.SeedSet(d, frozenset(g)) for d, g in sorted(seeds.items())}


def ranked_list_scorer(graph: KnowledgeGraph, lists: Mapping[str, Sequence[str]]):
    """Distances from ranked lists: list position, or ``len + 1`` for unlisted
    genes, so unlisted candidates tie at the midpoint of the remaining ranks."""
    index = {n.index: n.id for n in graph.nodes}

    def scorer(disease: str, candidates: np.ndarray) -> np.ndarray:
        ranked = lists.get(disease, ())
        pos = {g: i + 1 for i, g in enumerate(ranked)}
        tail = len(ranked) + 1
        return np.array([pos.get(index[int(c)], tail) for c in candidates], dtype=np.float64)

    return scorer


def rwr_scorer(graph: KnowledgeGraph, net: bl.GeneNetwork, seeds: Mapping[str, bl.SeedSet],
               restart: float, tol: float):
    cache: dict[str, np.ndarray] = {}
    to_net = np.array([net.index(n.id) if n.id in net._index else -1 for n in graph.nodes])

    def scorer(disease: str, candidates: np.ndarray) -> np.ndarray:
        if disease not in cache:
            cache[disease] = bl.random_walk_restart(net, seeds[disease], restart, tol)
        pi = cache[disease]
        idx = to_net[candidates]
        return np.where(idx >= 0, -pi[np.maximum(idx, 0)], 0.0)

    return scorer


@dataclass
class BaselineSettings:
    limit: int = 200
    restart_grid: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    tol: float = 1e-10
    skip: tuple[str, ...] = ()  # "method.metric" cells reported as NA


def _queries_with_seeds(graph, triples, seeds, gene_type):
    kept = []
    for t in triples:
        if t.head in seeds:
            kept.append(t)
        else:
            logger.warning("disease %s has no training seed genes; query %s skipped", t.head, t.tail)
    return build_queries(graph, kept, gene_type)


BASELINE_METHODS = ("neighborhood", "diamond", "random_walk")


def run_baselines(graph: KnowledgeGraph, bundle: SplitBundle, protocol: Protocol,
                  settings: BaselineSettings) -> dict:
    """Per-method test reports on the DG+PP projection.

    Returns ``{"reports": {method: MetricsReport | None}, "ranked": {method:
    {disease: [(gene, score), ...]}}, "restart": tuned restart}``. A method
    named in ``settings.skip`` is not run and reports ``None``.
    """
    relation = bundle.dg_relation or graph.layer(protocol.dg_tag).relation
    sub = build_graph([graph.layer(protocol.dg_tag), graph.layer(protocol.pp_tag)], graph.node_types)
    net = bl.gene_network(sub, protocol.pp_tag, protocol.gene_type)
    seeds = seed_sets(sub, bundle.train, relation)
    valid_q = _queries_with_seeds(sub, bundle.valid, seeds, protocol.gene_type)
    test_q = _queries_with_seeds(sub, bundle.test, seeds, protocol.gene_type)
    skip = set(settings.skip)
    reports: dict[str, MetricsReport | None] = {m: None for m in BASELINE_METHODS}
    ranked: dict[str, dict] = {}

    for method, fn in (("neighborhood", bl.neighborhood_rank), ("diamond", bl.diamond_rank)):
        if method in skip:
            continue
        ranked[method] = {d: fn(net, s, settings.limit) for d, s in seeds.items()}
        lists = {d: [g for g, _ in r] for d, r in ranked[method].items()}
        reports[method] = evaluate(ranked_list_scorer(sub, lists), test_q, protocol.ks)

    best_restart = settings.restart_grid[0]
    if "random_walk" not in skip:
        best_mp = -math.inf
        if valid_q:
            for c in settings.restart_grid:
                mp = evaluate(rwr_scorer(sub, net, seeds, c, settings.tol), valid_q, protocol.ks).mean_percentile
                if mp > best_mp:
                    best_restart, best_mp = c, mp
        reports["random_walk"] = evaluate(rwr_scorer(sub, net, seeds, best_restart, settings.tol),
                                          test_q, protocol.ks)
        ranked["random_walk"] = {d: bl.rwr_rank(net, s, best_restart, settings.tol, settings.limit)
                                 for d, s in seeds.items()}
    return {"reports": reports, "ranked": ranked, "restart": best_restart}


def top_predictions(model: Model, graph: KnowledgeGraph, disease: str, relation: str,
                    gene_type: str = "gene", exclude: Iterable[str] = (), k: int | None = None,
                    weighted: bool = True) -> list[tuple[str, float]]:
    cand = graph.type_indices(gene_type)
    d = rotate_scorer(model, graph, relation, weighted)(disease, cand)
    exclude = set(exclude)
    ranked = [(graph.nodes[int(c)].id, float(s)) for s, c in sorted(zip(d, cand))]
    ranked = [(g, s) for g, s in ranked if g not in exclude]
    return ranked[:k] if k else ranked
