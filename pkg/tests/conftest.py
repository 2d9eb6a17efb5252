import random

import numpy as np
import pytest

from rwkg.graph import RelationLayer, Triple, build_graph


def random_layers(rng: random.Random, n_nodes: int = 50, n_layers: int = 3, n_edges: int = 60):
    ids = [f"n{i:03d}" for i in range(n_nodes)]
    types = {nid: rng.choice(["gene", "disease", "pathway"]) for nid in ids}
    layers = []
    for li in range(n_layers):
        rel = f"r{li % 2}"
        pairs = {(rng.choice(ids), rng.choice(ids)) for _ in range(n_edges)}
        layers.append(RelationLayer.from_pairs(f"L{li}", rel, pairs, symmetric=rng.random() < 0.5))
    return layers, types


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_graph():
    types = {"D1": "disease", "D2": "disease", "g1": "gene", "g2": "gene", "g3": "gene", "g4": "gene"}
    dg = RelationLayer.from_pairs("DG", "dg", [("D1", "g1"), ("D1", "g2"), ("D2", "g3"), ("D2", "g4")])
    pp = RelationLayer.from_pairs("PP", "pp", [("g1", "g2"), ("g2", "g3"), ("g3", "g4")], symmetric=True)
    return build_graph([dg, pp], types)


__all__ = ["random_layers", "Triple", "ACCEPTANCE"]


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
