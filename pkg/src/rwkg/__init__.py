"""Relation-weighted rotation embeddings for multi-layer knowledge graphs,
with the splitting, evaluation and baseline tooling around them."""

from .graph import KnowledgeGraph, RelationLayer, Triple, build_graph, load_layer
from .rotate import Model, TrainConfig, train

__all__ = ["KnowledgeGraph", "RelationLayer", "Triple", "build_graph", "load_layer", "Model",
           "TrainConfig", "train"]
__version__ = "0.1.0"
