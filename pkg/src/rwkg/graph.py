"""Typed heterogeneous knowledge graph: TSV ingestion, relation layers, augmentation."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

import numpy as np

logger = logging.getLogger(__name__)


class GraphError(ValueError):
    """Raised for malformed inputs or inconsistent graph construction."""


class Triple(NamedTuple):
    head: str
    relation: str
    tail: str

    def reversed(self) -> "Triple":
        return Triple(self.tail, self.relation, self.head)


@dataclass(frozen=True)
class NodeRef:
    id: str
    type_tag: str
    index: int


@dataclass(frozen=True)
class IngestReport:
    path: str
    rows_read: int = 0
    rows_kept: int = 0
    duplicates: int = 0
    malformed: int = 0
    comments: int = 0

    def line(self, tag: str) -> str:
        return (
            f"{tag}\tpath={self.path}\trows_read={self.rows_read}\tkept={self.rows_kept}"
            f"\tduplicates={self.duplicates}\tmalformed={self.malformed}"
        )


@dataclass(frozen=True)
class RelationLayer:
    """One relation type sourced from one dataset.

    ``triples`` is stored sorted so that iteration order, and everything
    derived from it (node indexes, splits), is reproducible.
    """

    tag: str
    relation: str
    triples: tuple[Triple, ...] = ()
    symmetric: bool = False
    report: IngestReport | None = None

    def __post_init__(self):
        bad = [t for t in self.triples if t.relation != self.relation]
        if bad:
            raise GraphError(f"layer {self.tag}: triple {bad[0]} has relation != {self.relation!r}")
        canon = set(self.triples)
        if self.symmetric:
            canon |= {t.reversed() for t in canon}
        object.__setattr__(self, "triples", tuple(sorted(canon)))

    @classmethod
    def from_pairs(cls, tag: str, relation: str, pairs: Iterable[tuple[str, str]],
                   symmetric: bool = False) -> "RelationLayer":
        return cls(tag, relation, tuple(Triple(h, relation, t) for h, t in pairs), symmetric)

    def node_ids(self) -> set[str]:
        out = set()
        for h, _, t in self.triples:
            out.add(h)
            out.add(t)
        return out

    def __len__(self) -> int:
        return len(self.triples)


def load_layer(path, tag: str, relation: str, symmetric: bool = False) -> RelationLayer:
    """Read a ``head<TAB>tail`` edge file into a deduplicated layer.

    Blank lines and ``#`` comments are skipped; rows with fewer than two
    non-empty columns are counted as malformed and skipped. Any third
    column is ignored.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise GraphError(f"cannot read layer file {path}: {exc}") from exc

    seen: set[Triple] = set()
    read = dup = malformed = comments = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        if line.lstrip().startswith("#"):
            comments += 1
            continue
        read += 1
        cols = line.split("\t")
        if len(cols) < 2 or not cols[0].strip() or not cols[1].strip():
            malformed += 1
            logger.warning("%s:%d: malformed row skipped: %r", path, lineno, line)
            continue
        triple = Triple(cols[0].strip(), relation, cols[1].strip())
        if triple in seen:
            dup += 1
            continue
        seen.add(triple)
    if not seen:
        raise GraphError(f"layer file {path} has no valid rows")

    layer = RelationLayer(tag, relation, tuple(seen), symmetric)
    report = IngestReport(str(path), read, len(layer.triples), dup, malformed, comments)
    object.__setattr__(layer, "report", report)
    return layer


def load_node_types(path) -> dict[str, str]:
    """Read a ``node_id<TAB>type_tag`` file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise GraphError(f"cannot read node-type file {path}: {exc}") from exc
    types: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.rstrip("\r").split("\t")
        if len(cols) < 2 or not cols[0].strip() or not cols[1].strip():
            raise GraphError(f"{path}:{lineno}: malformed node-type row {line!r}")
        nid, tag = cols[0].strip(), cols[1].strip()
        if types.get(nid, tag) != tag:
            raise GraphError(f"node {nid!r} has conflicting types {types[nid]!r} and {tag!r}")
        types[nid] = tag
    return types


def ingestion_report(layers: Iterable[RelationLayer]) -> str:
    lines = []
    for layer in layers:
        rep = layer.report or IngestReport("<memory>", len(layer), len(layer))
        lines.append(rep.line(layer.tag))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    """Immutable multi-layer graph with dense node indexes.

    Build with :func:`build_graph`; :func:`augment` and
    :func:`project_subgraph` return new graphs.
    """

    nodes: tuple[NodeRef, ...]
    layers: tuple[RelationLayer, ...]
    node_types: Mapping[str, str] = field(repr=False)
    _by_id: dict = field(repr=False, default_factory=dict)
    _out: dict = field(repr=False, default_factory=dict)
    _in: dict = field(repr=False, default_factory=dict)
    _true: frozenset = field(repr=False, default=frozenset())

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def relations(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for layer in self.layers:
            seen.setdefault(layer.relation, None)
        return tuple(seen)

    @property
    def tags(self) -> tuple[str, ...]:
        return tuple(layer.tag for layer in self.layers)

    def layer(self, tag: str) -> RelationLayer:
        for layer in self.layers:
            if layer.tag == tag:
                return layer
        raise GraphError(f"unknown layer tag {tag!r}")

    def node(self, node_id: str) -> NodeRef:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise GraphError(f"unknown node {node_id!r}") from None

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._by_id

    def index(self, node_id: str) -> int:
        return self.node(node_id).index

    def nodes_of_type(self, type_tag: str) -> list[NodeRef]:
        return [n for n in self.nodes if n.type_tag == type_tag]

    def type_indices(self, type_tag: str) -> np.ndarray:
        return np.array([n.index for n in self.nodes if n.type_tag == type_tag], dtype=np.int64)

    def triples(self) -> Iterable[Triple]:
        for layer in self.layers:
            yield from layer.triples

    def triple_set(self) -> set[Triple]:
        return set(self.triples())

    def contains(self, triple: Triple) -> bool:
        return tuple(triple) in self._true

    def tails(self, head: str, relation: str) -> tuple[str, ...]:
        return self._out.get(relation, {}).get(head, ())

    def heads(self, tail: str, relation: str) -> tuple[str, ...]:
        return self._in.get(relation, {}).get(tail, ())

    def degree(self, node_id: str, relation: str, undirected: bool = False) -> int:
        deg = len(self.tails(node_id, relation))
        if undirected:
            deg += len(self.heads(node_id, relation))
        return deg


def _index_adjacency(layers):
    out = defaultdict(lambda: defaultdict(set))
    inn = defaultdict(lambda: defaultdict(set))
    for layer in layers:
        for h, r, t in layer.triples:
            out[r][h].add(t)
            inn[r][t].add(h)
    freeze = lambda d: {r: {k: tuple(sorted(v)) for k, v in m.items()} for r, m in d.items()}
    return freeze(out), freeze(inn)


def _assemble(layers, node_types, nodes=()):
    nodes = list(nodes)
    by_id = {n.id: n for n in nodes}
    for layer in layers:
        for h, _, t in layer.triples:
            for nid in (h, t):
                if nid in by_id:
                    continue
                if nid not in node_types:
                    raise GraphError(f"node {nid!r} (layer {layer.tag}) has no type_tag")
                ref = NodeRef(nid, node_types[nid], len(nodes))
                nodes.append(ref)
                by_id[nid] = ref
    out, inn = _index_adjacency(layers)
    true = frozenset(t for layer in layers for t in layer.triples)
    return KnowledgeGraph(tuple(nodes), tuple(layers), dict(node_types), by_id, out, inn, true)


def build_graph(layers: Iterable[RelationLayer], node_types: Mapping[str, str]) -> KnowledgeGraph:
    """Assemble layers into a graph.

    Node indexes follow first appearance in layer order, then sorted triple
    order, so the same inputs always produce the same indexing.
    """
    layers = list(layers)
    tags = [layer.tag for layer in layers]
    if len(set(tags)) != len(tags):
        raise GraphError(f"duplicate layer tags in {tags}")
    return _assemble(layers, node_types)


def augment(graph: KnowledgeGraph, layer: RelationLayer,
            node_types: Mapping[str, str] | None = None) -> KnowledgeGraph:
    if layer.tag in graph.tags:
        raise GraphError(f"layer tag {layer.tag!r} already present")
    types = dict(graph.node_types)
    for nid, tag in (node_types or {}).items():
        if types.get(nid, tag) != tag:
            raise GraphError(f"node {nid!r} has conflicting types {types[nid]!r} and {tag!r}")
        types[nid] = tag
    return _assemble(graph.layers + (layer,), types, graph.nodes)


def project_subgraph(graph: KnowledgeGraph, tags: Iterable[str]) -> KnowledgeGraph:
    """Keep only the named layers (in their original order) and the nodes they touch."""
    tags = set(tags)
    unknown = tags - set(graph.tags)
    if unknown:
        raise GraphError(f"unknown layer tags {sorted(unknown)}")
    return build_graph([l for l in graph.layers if l.tag in tags], graph.node_types)
