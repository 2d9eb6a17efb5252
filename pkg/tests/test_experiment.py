import logging

import numpy as np

from rwkg.experiment import (
    BaselineSettings,
    Protocol,
    apply_params,
    ranked_list_scorer,
    run_baselines,
    seed_sets,
    stage_graphs,
    substream,
)
from rwkg.graph import RelationLayer, Triple, build_graph
from rwkg.metrics import rank_from_scores
from rwkg.rotate import TrainConfig
from rwkg.split import SplitBundle


def test_substreams_are_named_and_repeatable():
    a = substream(3, "init").random(4)
    assert np.array_equal(a, substream(3, "init").random(4))
    assert not np.array_equal(a, substream(3, "negatives").random(4))
    assert not np.array_equal(a, substream(4, "init").random(4))


def test_apply_params():
    cfg = apply_params(TrainConfig(), {"weight.pp": 0.5, "train.lr": 0.1, "dim": 8})
    assert cfg.relation_weight == {"pp": 0.5} and cfg.lr == 0.1 and cfg.dim == 8


def test_ranked_list_tail_convention(small_graph):
    scorer = ranked_list_scorer(small_graph, {"D1": ["g3", "g1"]})
    cand = small_graph.type_indices("gene")
    scores = scorer("D1", cand)
    names = [small_graph.nodes[i].id for i in cand]
    pos = names.index("g4")
    # g4 and g2 are unlisted: they share ranks 3 and 4
    assert rank_from_scores(scores, pos) == (3.5, 4)
    assert rank_from_scores(scores, names.index("g3")) == (1.0, 4)


def test_stage_graphs_prefixes(small_graph):
    layers = [small_graph.layer("DG"), small_graph.layer("PP")]
    labels = [label for label, _ in stage_graphs(layers, small_graph.node_types)]
    assert labels == ["DG", "DG + PP"]


def test_disease_without_seeds_is_skipped(caplog):
    types = {"D1": "disease", "D2": "disease", **{f"g{i}": "gene" for i in range(6)}}
    dg = RelationLayer.from_pairs("DG", "dg", [("D1", "g0"), ("D1", "g1"), ("D1", "g2"), ("D2", "g3")])
    pp = RelationLayer.from_pairs("PP", "pp", [(f"g{i}", f"g{i + 1}") for i in range(5)], symmetric=True)
    g = build_graph([dg, pp], types)
    train = (Triple("D1", "dg", "g0"), Triple("D1", "dg", "g1"))
    bundle = SplitBundle(train, (), (Triple("D1", "dg", "g2"), Triple("D2", "dg", "g3")), 0,
                         (0.8, 0.1, 0.1), dg_relation="dg")
    assert set(seed_sets(g, train, "dg")) == {"D1"}
    with caplog.at_level(logging.WARNING):
        res = run_baselines(g, bundle, Protocol(), BaselineSettings(limit=5))
    assert "D2 has no training seed genes" in caplog.text
    assert res["reports"]["random_walk"].n == 1
    assert res["reports"]["neighborhood"].n == 1


def test_weight_search_falls_back_to_uniform(small_graph):
    import pytest

    from rwkg.experiment import search_weights
    from rwkg.hypersearch import Categorical
    from rwkg.split import split_disease_gene
    from rwkg.synth import SynthConfig, generate

    cfg = TrainConfig(dim=4, max_epochs=2, eval_every=1, patience=1, negatives=2)
    space = {"weight.pp": Categorical((1.0, 50.0))}
    empty = split_disease_gene(small_graph, cover="head", seed=0)
    with pytest.raises(ValueError, match="validation"):
        search_weights(small_graph, empty, cfg, Protocol(), seed=0, budget=2, space=space)
    sg = generate(SynthConfig(n_diseases=3, n_genes=60, n_pathways=5, module_size=10, p_out=0.03,
                              noise_edges=40, seed=1))
    bundle = split_disease_gene(sg.graph, cover="head", seed=0).with_layers(sg.graph, sg.graph.tags)
    space = {"weight.interacts": Categorical((1.0, 50.0)), "weight.noise": Categorical((1.0, 50.0))}
    best, trials, fit = search_weights(sg.graph, bundle, cfg, Protocol(), seed=0, budget=3, space=space)
    assert trials[0].params == {"weight.disease_gene": 1.0, "weight.interacts": 1.0, "weight.noise": 1.0}
    assert best == max((t for t in trials if t.status == "complete"),
                       key=lambda t: (t.value, -t.trial)).params
    assert fit.test is not None
