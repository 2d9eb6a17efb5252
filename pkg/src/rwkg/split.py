"""Coverage-constrained train/valid/test splitting and leakage excision."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .graph import GraphError, KnowledgeGraph, Triple

COVER_MODES = ("all", "head", "tail")


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class SplitBundle:
    train: tuple[Triple, ...]
    valid: tuple[Triple, ...]
    test: tuple[Triple, ...]
    seed: int
    ratios: tuple[float, float, float]
    dg_tag: str = "DG"
    cover: str = "all"
    extra_tags: tuple[str, ...] = field(default=())
    dg_relation: str = ""

    @property
    def dg_train(self) -> tuple[Triple, ...]:
        return tuple(t for t in self.train if t.relation == self.dg_relation)

    def with_layers(self, graph: KnowledgeGraph, tags: Iterable[str]) -> "SplitBundle":
        """Attach whole non-disease-gene layers to the train split."""
        tags = [t for t in tags if t != self.dg_tag and t not in self.extra_tags]
        train = set(self.train)
        for tag in tags:
            train.update(graph.layer(tag).triples)
        held = set(self.valid) | set(self.test)
        train -= held
        return replace(self, train=tuple(sorted(train)), extra_tags=self.extra_tags + tuple(tags))


def _split_sizes(n: int, ratios) -> tuple[int, int, int]:
    n_valid = math.floor(n * ratios[1])
    n_test = math.floor(n * ratios[2])
    return n - n_valid - n_test, n_valid, n_test


def _check_ratios(ratios):
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(not r > 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise SplitError(f"ratios must be three positive fractions summing to 1, got {ratios}")
    return ratios


def split_disease_gene(graph: KnowledgeGraph, ratios=(0.8, 0.1, 0.1), seed: int = 0,
                       dg_tag: str = "DG", cover: str = "all") -> SplitBundle:
    """Partition the disease-gene layer so every covered node keeps a train edge.

    A greedy pass over shuffled edges first claims, for train, each edge that
    touches a still-uncovered node; the remaining train quota is then filled
    uniformly and the leftovers become valid and test. ``cover`` selects which
    endpoints must be covered: ``all`` (both), ``head`` (diseases) or
    ``tail`` (genes).
    """
    ratios = _check_ratios(ratios)
    if cover not in COVER_MODES:
        raise SplitError(f"cover must be one of {COVER_MODES}, got {cover!r}")
    try:
        layer = graph.layer(dg_tag)
    except GraphError as exc:
        raise SplitError(str(exc)) from None
    edges = list(layer.triples)
    if not edges:
        raise SplitError(f"disease-gene layer {dg_tag!r} is empty")
    n_train, n_valid, n_test = _split_sizes(len(edges), ratios)

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(edges))
    covered: set[str] = set()
    forced: list[int] = []
    for i in order:
        h, _, t = edges[i]
        need = []
        if cover in ("all", "head"):
            need.append(h)
        if cover in ("all", "tail"):
            need.append(t)
        if any(n not in covered for n in need):
            forced.append(int(i))
            covered.update(need)
    if len(forced) > n_train:
        raise SplitError(
            f"coverage unsatisfiable: {len(forced)} edges are needed to cover every "
            f"{'node' if cover == 'all' else cover} but the train quota is {n_train}"
        )
    forced_set = set(forced)
    rest = [int(i) for i in order if int(i) not in forced_set]
    rest = [rest[j] for j in rng.permutation(len(rest))]
    fill = n_train - len(forced)
    train = [edges[i] for i in forced + rest[:fill]]
    valid = [edges[i] for i in rest[fill:fill + n_valid]]
    test = [edges[i] for i in rest[fill + n_valid:]]
    assert len(test) == n_test
    return SplitBundle(tuple(sorted(train)), tuple(sorted(valid)), tuple(sorted(test)),
                       seed, ratios, dg_tag, cover, (), layer.relation)


def excise_gene_leakage(train: Iterable[Triple], genes: Iterable[str],
                        graph: KnowledgeGraph | None = None, gene_type: str = "gene") -> set[Triple]:
    """Drop every triple touching one of ``genes``.

    When ``graph`` is given, each id is checked to be gene-typed.
    """
    genes = set(genes)
    if graph is not None:
        for g in genes:
            if g in graph and graph.node(g).type_tag != gene_type:
                raise SplitError(f"{g!r} is typed {graph.node(g).type_tag!r}, not {gene_type!r}")
            if g not in graph and graph.node_types.get(g, gene_type) != gene_type:
                raise SplitError(f"{g!r} is not a {gene_type!r} node")
    return {t for t in train if t.head not in genes and t.tail not in genes}


def write_manifest(bundle: SplitBundle, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in ("train", "valid", "test"):
        with open(directory / f"{name}.tsv", "w", encoding="utf-8", newline="\n") as fh:
            for h, r, t in getattr(bundle, name):
                fh.write(f"{h}\t{r}\t{t}\n")
    meta = {
        "seed": bundle.seed,
        "ratios": ",".join(repr(r) for r in bundle.ratios),
        "dg_tag": bundle.dg_tag,
        "cover": bundle.cover,
        "extra_tags": ",".join(bundle.extra_tags),
        "dg_relation": bundle.dg_relation,
        "train": len(bundle.train),
        "valid": len(bundle.valid),
        "test": len(bundle.test),
    }
    with open(directory / "split.meta", "w", encoding="utf-8", newline="\n") as fh:
        for k, v in meta.items():
            fh.write(f"{k}={v}\n")


def _read_triples(path: Path) -> tuple[Triple, ...]:
    out = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise SplitError(f"{path}: expected 3 columns, got {line!r}")
        out.append(Triple(*cols))
    return tuple(sorted(out))


def read_manifest(directory) -> SplitBundle:
    directory = Path(directory)
    try:
        meta = dict(
            line.split("=", 1)
            for line in (directory / "split.meta").read_text(encoding="utf-8").splitlines()
            if "=" in line
        )
        parts = {name: _read_triples(directory / f"{name}.tsv") for name in ("train", "valid", "test")}
    except OSError as exc:
        raise SplitError(f"cannot read split manifest in {directory}: {exc}") from exc
    extra = tuple(t for t in meta.get("extra_tags", "").split(",") if t)
    return SplitBundle(parts["train"], parts["valid"], parts["test"], int(meta["seed"]),
                       tuple(float(x) for x in meta["ratios"].split(",")),
                       meta.get("dg_tag", "DG"), meta.get("cover", "all"), extra,
                       meta.get("dg_relation", ""))
