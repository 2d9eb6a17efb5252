"""Synthetic multi-layer graphs with planted disease modules."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import KnowledgeGraph, RelationLayer, build_graph

DG_RELATION = "disease_gene"
PP_RELATION = "interacts"
NOISE_RELATION = "noise"
SIGNAL_FLOOR = 2.0

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SynthConfig:
    n_diseases: int = 5
    n_genes: int = 300
    n_pathways: int = 20
    module_size: int = 20
    p_in: float = 0.3
    p_out: float = 0.01
    reveal: float = 0.6
    noise_edges: int = 300
    seed: int = 0

    def __post_init__(self):
        if min(self.n_diseases, self.n_genes, self.n_pathways, self.module_size) < 1:
            raise ValueError("counts must be positive")
        # equality is allowed so a signal-free control graph can be generated
        if not (0 <= self.p_out <= self.p_in <= 1):
            raise ValueError("need 0 <= p_out <= p_in <= 1")
        if not 0 < self.reveal <= 1:
            raise ValueError("reveal fraction must lie in (0, 1]")
        if self.n_diseases * self.module_size > self.n_genes:
            raise ValueError(
                f"{self.n_diseases} disjoint modules of {self.module_size} exceed {self.n_genes} genes")
        if not 0 <= self.noise_edges <= self.n_genes * self.n_pathways:
            raise ValueError("noise_edges exceeds the number of gene-pathway pairs")

    @property
    def expected_signal_ratio(self) -> float:
        """Expected intra-module over background PP degree of a module gene."""
        back = self.p_out * (self.n_genes - self.module_size)
        return self.p_in * (self.module_size - 1) / back if back else float("inf")

    def items(self):
        return dataclasses.asdict(self).items()

    @classmethod
    def from_mapping(cls, values) -> "SynthConfig":
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name in values:
                kwargs[f.name] = (int if f.type in ("int", int) else float)(values[f.name])
        return cls(**kwargs)


@dataclass(frozen=True, eq=False)
class SynthGraph:
    config: SynthConfig
    graph: KnowledgeGraph
    node_types: dict[str, str]
    modules: dict[str, tuple[str, ...]]
    truth: tuple[tuple[str, str, str], ...]  # (disease, gene, revealed|held_out)

    def signal_ratio(self) -> float:
        """Mean intra-module over mean background PP degree of held-out genes."""
        pp = self.graph.layer("PP")
        member = {g: d for d, genes in self.modules.items() for g in genes}
        held = [g for d, g, flag in self.truth if flag == "held_out"]
        if not held:
            held = list(member)
        intra = back = 0
        nbrs = {}
        for h, _, t in pp.triples:
            nbrs.setdefault(h, []).append(t)
        for g in held:
            for n in nbrs.get(g, ()):
                if member.get(n) == member[g]:
                    intra += 1
                else:
                    back += 1
        return intra / back if back else float("inf")


def _ids(prefix: str, n: int) -> list[str]:
    width = len(str(n))
    return [f"{prefix}{i:0{width}d}" for i in range(1, n + 1)]


def generate(config: SynthConfig = SynthConfig()) -> SynthGraph:
    rng = np.random.default_rng(config.seed)
    diseases = _ids("D", config.n_diseases)
    genes = _ids("G", config.n_genes)
    pathways = _ids("P", config.n_pathways)

    perm = rng.permutation(config.n_genes)
    module_of = np.full(config.n_genes, -1)
    modules, truth, dg_pairs = {}, [], []
    n_reveal = max(1, round(config.reveal * config.module_size))
    for d, disease in enumerate(diseases):
        members = np.sort(perm[d * config.module_size:(d + 1) * config.module_size])
        module_of[members] = d
        modules[disease] = tuple(genes[i] for i in members)
        revealed = set(rng.choice(members, size=n_reveal, replace=False).tolist())
        for i in members:
            flag = "revealed" if i in revealed else "held_out"
            truth.append((disease, genes[i], flag))
            if i in revealed:
                dg_pairs.append((disease, genes[i]))

    iu, ju = np.triu_indices(config.n_genes, k=1)
    same = (module_of[iu] == module_of[ju]) & (module_of[iu] >= 0)
    prob = np.where(same, config.p_in, config.p_out)
    keep = rng.random(len(iu)) < prob
    pp_pairs = [(genes[i], genes[j]) for i, j in zip(iu[keep], ju[keep])]

    flat = rng.choice(config.n_genes * config.n_pathways, size=config.noise_edges, replace=False)
    noise_pairs = sorted((genes[i // config.n_pathways], pathways[i % config.n_pathways]) for i in flat)

    node_types = {d: "disease" for d in diseases}
    node_types.update({g: "gene" for g in genes})
    node_types.update({p: "pathway" for p in pathways})
    layers = [
        RelationLayer.from_pairs("DG", DG_RELATION, dg_pairs),
        RelationLayer.from_pairs("PP", PP_RELATION, pp_pairs, symmetric=True),
        RelationLayer.from_pairs("NOISE", NOISE_RELATION, noise_pairs),
    ]
    sg = SynthGraph(config, build_graph(layers, node_types), node_types, modules, tuple(truth))
    if config.expected_signal_ratio > SIGNAL_FLOOR and sg.signal_ratio() <= SIGNAL_FLOOR:
        logger.warning("realized module signal ratio %.3f <= %.1f (expected %.3f)",
                       sg.signal_ratio(), SIGNAL_FLOOR, config.expected_signal_ratio)
    return sg


def _write_pairs(path: Path, pairs, header: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header)
        for a, b in pairs:
            fh.write(f"{a}\t{b}\n")


def write_synth(sg: SynthGraph, directory) -> dict[str, Path]:
    """Emit edge/node/truth TSVs and a ready-to-run ``run.cfg``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = "".join(f"# {k}={v}\n" for k, v in sg.config.items())
    g = sg.graph
    files = {
        "dg": directory / "dg.tsv",
        "pp": directory / "pp.tsv",
        "noise": directory / "noise.tsv",
        "nodes": directory / "nodes.tsv",
        "truth": directory / "truth.tsv",
        "config": directory / "run.cfg",
    }
    _write_pairs(files["dg"], [(t.head, t.tail) for t in g.layer("DG").triples], header)
    _write_pairs(files["pp"], [(t.head, t.tail) for t in g.layer("PP").triples if t.head < t.tail], header)
    _write_pairs(files["noise"], [(t.head, t.tail) for t in g.layer("NOISE").triples], header)
    _write_pairs(files["nodes"], sorted(sg.node_types.items()), header)
    with open(files["truth"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header)
        for row in sg.truth:
            fh.write("\t".join(row) + "\n")
    with open(files["config"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header)
        fh.write(
            "nodes=nodes.tsv\n"
            "layers=DG,PP,NOISE\n"
            "dg_layer=DG\n"
            "pp_layer=PP\n"
            f"layer.DG.path=dg.tsv\nlayer.DG.relation={DG_RELATION}\nlayer.DG.symmetric=false\n"
            f"layer.PP.path=pp.tsv\nlayer.PP.relation={PP_RELATION}\nlayer.PP.symmetric=true\n"
            f"layer.NOISE.path=noise.tsv\nlayer.NOISE.relation={NOISE_RELATION}\n"
            "layer.NOISE.symmetric=false\n"
            # every synthetic gene has a single disease link, so only diseases can be covered
            "split.cover=head\n"
            f"seed={sg.config.seed}\n"
        )
    return files
