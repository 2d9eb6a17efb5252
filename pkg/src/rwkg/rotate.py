"""Complex-rotation embeddings with an optional per-relation distance weight.

Entities are complex vectors stored as ``2k`` reals (real parts first);
relations are phase vectors, so every rotation has unit modulus by
construction. The edge loss is the negative-sampling objective

    -log s(g - w d+) - sum_i p_i log s(w d_i - g)

with ``w = 1`` giving the unweighted model.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .graph import GraphError, KnowledgeGraph, Triple

logger = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    pass


@dataclass
class Model:
    node_ids: tuple[str, ...]
    relations: tuple[str, ...]
    entity: np.ndarray  # (N, 2k)
    phase: np.ndarray  # (R, k)
    relation_weight: np.ndarray  # (R,)
    margin: float
    node_types: tuple[str, ...] = ()
    _node_index: dict = field(default_factory=dict, repr=False, compare=False)
    _rel_index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.entity = np.ascontiguousarray(self.entity, dtype=np.float64)
        self.phase = np.ascontiguousarray(self.phase, dtype=np.float64)
        self.relation_weight = np.asarray(self.relation_weight, dtype=np.float64).copy()
        n, two_k = self.entity.shape
        if two_k % 2 or self.phase.shape != (len(self.relations), two_k // 2):
            raise ValueError("entity/phase shapes disagree")
        if n != len(self.node_ids) or self.relation_weight.shape != (len(self.relations),):
            raise ValueError("parameter tables disagree with node/relation tables")
        if self.margin <= 0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        if np.any(self.relation_weight <= 0):
            raise ValueError("relation weights must be positive")
        self._node_index = {nid: i for i, nid in enumerate(self.node_ids)}
        self._rel_index = {rel: i for i, rel in enumerate(self.relations)}

    @property
    def dim(self) -> int:
        return self.phase.shape[1]

    def node_index(self, node_id: str) -> int:
        try:
            return self._node_index[node_id]
        except KeyError:
            raise GraphError(f"node {node_id!r} not in model") from None

    def relation_index(self, relation: str) -> int:
        try:
            return self._rel_index[relation]
        except KeyError:
            raise GraphError(f"relation {relation!r} not in model") from None

    def encode(self, triple: Triple) -> tuple[int, int, int]:
        return (self.node_index(triple.head), self.relation_index(triple.relation),
                self.node_index(triple.tail))

    def complex_entity(self, idx=slice(None)) -> np.ndarray:
        k = self.dim
        e = self.entity[idx]
        return e[..., :k] + 1j * e[..., k:]

    def rotation(self, idx=slice(None)) -> np.ndarray:
        return np.exp(1j * self.phase[idx])

    def weight(self, relation: str) -> float:
        return float(self.relation_weight[self.relation_index(relation)])

    def copy(self) -> "Model":
        return copy.deepcopy(self)


def init_model(graph: KnowledgeGraph, dim: int, margin: float, rng: np.random.Generator,
               relation_weight: Mapping[str, float] | None = None) -> Model:
    """Entities uniform in [-b, b] with b = margin / (2 dim); phases uniform in [-pi, pi]."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    relations = graph.relations
    bound = margin / (2 * dim)
    entity = rng.uniform(-bound, bound, size=(graph.node_count, 2 * dim))
    phase = rng.uniform(-math.pi, math.pi, size=(len(relations), dim))
    weights = np.array([float((relation_weight or {}).get(r, 1.0)) for r in relations])
    return Model(tuple(n.id for n in graph.nodes), relations, entity, phase, weights, float(margin),
                 tuple(n.type_tag for n in graph.nodes))


def _tables(model):
    return model.complex_entity(), model.rotation()


def _distance_parts(tables, heads, rels, tails):
    """Rotated head, residual ``h*r - t`` and its per-coordinate modulus."""
    ent, rot = tables
    hr = ent[heads] * rot[rels]
    z = hr - ent[tails]
    return hr, z, np.abs(z)


def distances(model: Model, heads, rels, tails, tables=None) -> np.ndarray:
    """Vectorised sum of complex moduli ``|h*r - t|`` over coordinates."""
    tables = tables or _tables(model)
    return _distance_parts(tables, np.asarray(heads), np.asarray(rels), np.asarray(tails))[2].sum(-1)


def distance(model: Model, triple: Triple) -> float:
    h, r, t = model.encode(triple)
    return float(distances(model, h, r, t))


def tail_distances(model: Model, head: int, rel: int, tails: np.ndarray) -> np.ndarray:
    hr = model.complex_entity(head) * model.rotation(rel)
    return np.abs(hr[None, :] - model.complex_entity(tails)).sum(-1)


# --- negative sampling ------------------------------------------------------

@dataclass
class NegativeBatch:
    """Corruptions of positives; arrays are shaped (B, n)."""

    heads: np.ndarray
    tails: np.ndarray
    head_side: np.ndarray  # True where the head was replaced
    adv_weight: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.heads.shape[-1]


class NegativeSampler:
    """Type-constrained corruption: a replaced node is drawn uniformly from
    the other nodes sharing its type."""

    def __init__(self, node_types: Sequence[str]):
        types = np.asarray(node_types)
        self.type_names, type_id = np.unique(types, return_inverse=True)
        order = np.argsort(type_id, kind="stable")
        self.pool = order
        counts = np.bincount(type_id, minlength=len(self.type_names))
        self.offset = np.concatenate([[0], np.cumsum(counts)[:-1]])
        self.size = counts
        self.type_id = type_id
        self.pos = np.empty_like(order)
        self.pos[order] = np.arange(len(order)) - self.offset[type_id[order]]

    @classmethod
    def for_model(cls, model: Model) -> "NegativeSampler":
        return cls(model.node_types)

    def check(self, nodes: np.ndarray) -> None:
        small = self.size[self.type_id[np.asarray(nodes)]] < 2
        if np.any(small):
            bad = int(np.asarray(nodes)[small][0])
            raise ValueError(f"candidate pool for node {bad} (type "
                             f"{self.type_names[self.type_id[bad]]}) has fewer than 2 members")

    def replace(self, nodes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        tid = self.type_id[nodes]
        draw = np.floor(rng.random(nodes.shape) * (self.size[tid] - 1)).astype(np.int64)
        draw += draw >= self.pos[nodes]
        return self.pool[self.offset[tid] + draw]

    def sample(self, heads: np.ndarray, tails: np.ndarray, n: int,
               rng: np.random.Generator) -> NegativeBatch:
        if n < 1:
            raise ValueError("n must be >= 1")
        heads = np.atleast_1d(np.asarray(heads, dtype=np.int64))
        tails = np.atleast_1d(np.asarray(tails, dtype=np.int64))
        shape = (heads.shape[0], n)
        side = rng.random(shape) < 0.5
        nh = np.broadcast_to(heads[:, None], shape).copy()
        nt = np.broadcast_to(tails[:, None], shape).copy()
        self.check(np.concatenate([heads[side.any(1)], tails[(~side).any(1)]]))
        nh[side] = self.replace(nh[side], rng)
        nt[~side] = self.replace(nt[~side], rng)
        return NegativeBatch(nh, nt, side)


def sample_negatives(model: Model, positive: Triple, n: int, rng: np.random.Generator) -> NegativeBatch:
    h, _, t = model.encode(positive)
    return NegativeSampler.for_model(model).sample(np.array([h]), np.array([t]), n, rng)


def adversarial_weights(model: Model, rels: np.ndarray, batch: NegativeBatch,
                        temperature: float, tables=None) -> NegativeBatch:
    """Softmax of ``temperature * (margin - d)`` over each positive's negatives.

    The weights are plain arrays, so no gradient flows through them.
    """
    rels = np.atleast_1d(np.asarray(rels))
    d = distances(model, batch.heads, rels[:, None], batch.tails, tables)
    logits = temperature * (model.margin - d)
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=-1, keepdims=True)
    batch.adv_weight = w
    return batch


# --- loss and analytic gradient ----------------------------------------------

def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def _scatter(index: np.ndarray, values: np.ndarray, size: int) -> np.ndarray:
    """Row-wise sum of ``values`` into ``size`` slots (a faster ``np.add.at``)."""
    m = sp.csr_matrix((np.ones(index.size), (index, np.arange(index.size))), shape=(size, index.size))
    return m @ values


def batch_loss(model: Model, heads, rels, tails, batch: NegativeBatch, weighted: bool = True,
               need_grad: bool = True, tables=None):
    """Per-edge losses and (optionally) dense gradients for a batch of positives.

    Returns ``(losses, entity_grad, phase_grad)``; the gradients are of the
    *sum* of per-edge losses. ``adv_weight`` must already be set.
    """
    if batch.adv_weight is None:
        raise ValueError("negative batch has no adversarial weights")
    heads = np.atleast_1d(np.asarray(heads))
    rels = np.atleast_1d(np.asarray(rels))
    tails = np.atleast_1d(np.asarray(tails))
    p = batch.adv_weight
    g = model.margin
    w = model.relation_weight[rels] if weighted else np.ones(len(rels))

    tables = tables or _tables(model)
    ent, rot_all = tables
    hr, z, a = _distance_parts(tables, heads, rels, tails)
    hrn, zn, an = _distance_parts(tables, batch.heads, rels[:, None], batch.tails)
    d = a.sum(-1)
    dn = an.sum(-1)
    losses = _softplus(w * d - g) + (p * _softplus(g - w[:, None] * dn)).sum(-1)
    if not need_grad:
        return losses, None, None

    coef = w * _sigmoid(w * d - g)  # dL/dd+
    coef_n = -p * w[:, None] * _sigmoid(g - w[:, None] * dn)  # dL/dd_i
    k = model.dim
    n_ent = len(model.node_ids)
    ent_grad = np.zeros((n_ent, k), dtype=np.complex128)
    ph_grad = np.zeros_like(model.phase)

    def accumulate(hr, zz, aa, cc, hh, rr, tt):
        # unit residual scaled by dL/dd; subgradient 0 where the residual vanishes
        f = np.divide(cc[..., None], aa, out=np.zeros_like(aa), where=aa > 0)
        s = zz * f
        rot = rot_all[rr]
        idx = np.concatenate([hh.ravel(), tt.ravel()])
        vals = np.concatenate([(s * np.conj(rot)).reshape(-1, k), (-s).reshape(-1, k)])
        ent_grad[:] += _scatter(idx, vals, n_ent)
        ph_grad[:] += _scatter(np.broadcast_to(rr, hh.shape).ravel(),
                               np.imag(s * np.conj(hr)).reshape(-1, k), len(ph_grad))

    accumulate(hr, z, a, coef, heads, rels, tails)
    accumulate(hrn, zn, an, coef_n, batch.heads, rels[:, None], batch.tails)
    entity_grad = np.concatenate([ent_grad.real, ent_grad.imag], axis=1)
    return losses, entity_grad, ph_grad


def loss_edge(model: Model, positive: Triple, batch: NegativeBatch, weighted: bool = True) -> float:
    h, r, t = model.encode(positive)
    return float(batch_loss(model, h, r, t, _as_batch(batch), weighted, need_grad=False)[0][0])


@dataclass
class GradientRecord:
    entity: dict[int, np.ndarray]
    phase: dict[int, np.ndarray]


def grad_edge(model: Model, positive: Triple, batch: NegativeBatch,
              weighted: bool = True) -> GradientRecord:
    """Gradient of :func:`loss_edge`, restricted to the touched parameters."""
    h, r, t = model.encode(positive)
    batch = _as_batch(batch)
    _, eg, pg = batch_loss(model, h, r, t, batch, weighted)
    touched = sorted({h, t} | set(batch.heads.ravel().tolist()) | set(batch.tails.ravel().tolist()))
    return GradientRecord({i: eg[i] for i in touched}, {r: pg[r]})


def _as_batch(batch):
    if batch.heads.ndim == 1:
        return NegativeBatch(batch.heads[None], batch.tails[None], batch.head_side[None],
                             None if batch.adv_weight is None else batch.adv_weight[None])
    return batch


# --- training ----------------------------------------------------------------

@dataclass
class TrainConfig:
    dim: int = 32
    margin: float = 6.0
    negatives: int = 16
    temperature: float = 1.0
    lr: float = 0.02
    batch_size: int = 256
    max_epochs: int = 200
    patience: int = 5
    eval_every: int = 10
    seed: int = 0
    relation_weight: dict[str, float] = field(default_factory=dict)
    weighted: bool = True

    def __post_init__(self):
        for name in ("dim", "negatives", "batch_size", "eval_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.margin <= 0 or self.lr <= 0 or self.temperature < 0:
            raise ValueError("margin and lr must be positive, temperature non-negative")
        if self.max_epochs < 0 or self.patience < 1 or self.patience > max(self.max_epochs, 1):
            raise ValueError("need max_epochs >= 0 and 1 <= patience <= max_epochs")
        if any(w <= 0 for w in self.relation_weight.values()):
            raise ValueError("relation weights must be positive")


@dataclass
class TrainHistory:
    epoch_loss: list[float] = field(default_factory=list)
    eval_epochs: list[int] = field(default_factory=list)
    valid_mp: list[float] = field(default_factory=list)
    best_epoch: int = 0

    def rows(self):
        evals = dict(zip(self.eval_epochs, self.valid_mp))
        for epoch, loss in enumerate(self.epoch_loss, 1):
            yield epoch, loss, evals.get(epoch)


class Adam:
    def __init__(self, params: Sequence[np.ndarray], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(graph: KnowledgeGraph, train_triples: Sequence[Triple], config: TrainConfig,
          eval_hook: Callable[[Model], float] | None = None, rng_init=None, rng_neg=None,
          on_eval: Callable[[int, float], None] | None = None) -> tuple[Model, TrainHistory]:
    """Mini-batch Adam training with best-on-validation checkpointing.

    ``eval_hook`` maps a model to its validation mean percentile (higher is
    better) and is called every ``eval_every`` epochs; training stops after
    ``patience`` evaluations without improvement. ``on_eval(step, value)`` is
    forwarded each evaluation, which lets an outer search prune the run by
    raising.
    """
    if not train_triples:
        raise ValueError("train split is empty")
    rng_init = rng_init if rng_init is not None else np.random.default_rng([config.seed, 1])
    rng_neg = rng_neg if rng_neg is not None else np.random.default_rng([config.seed, 2])
    model = init_model(graph, config.dim, config.margin, rng_init, config.relation_weight)
    history = TrainHistory()
    if config.max_epochs == 0:
        return model, history

    enc = np.array([model.encode(t) for t in train_triples], dtype=np.int64)
    sampler = NegativeSampler.for_model(model)
    sampler.check(enc[:, 0])
    sampler.check(enc[:, 2])
    opt = Adam([model.entity, model.phase], config.lr)

    best_model, best_value, stale = model.copy(), -math.inf, 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng_neg.permutation(len(enc))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            b = enc[order[start:start + config.batch_size]]
            h, r, t = b[:, 0], b[:, 1], b[:, 2]
            neg = sampler.sample(h, t, config.negatives, rng_neg)
            tables = _tables(model)
            adversarial_weights(model, r, neg, config.temperature, tables)
            losses, eg, pg = batch_loss(model, h, r, t, neg, config.weighted, tables=tables)
            loss = losses.sum()
            if not np.isfinite(loss) or not np.all(np.isfinite(eg)):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            scale = 1.0 / len(b)
            opt.step([eg * scale, pg * scale])
            total += loss
        history.epoch_loss.append(total / len(enc))

        if eval_hook is not None and epoch % config.eval_every == 0:
            value = float(eval_hook(model))
            history.eval_epochs.append(epoch)
            history.valid_mp.append(value)
            logger.debug("epoch %d loss %.5f valid MP %.3f", epoch, history.epoch_loss[-1], value)
            if value > best_value:
                best_value, best_model, stale = value, model.copy(), 0
                history.best_epoch = epoch
            else:
                stale += 1
            if on_eval is not None:
                on_eval(len(history.valid_mp) - 1, value)
            if stale >= config.patience:
                break

    if eval_hook is None or not history.valid_mp:
        history.best_epoch = len(history.epoch_loss)
        return model, history
    return best_model, history
