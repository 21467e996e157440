"""Losses, Adam, the semi-supervised training loop and evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from heal.config import TrainConfig
from heal.consistency import MemoryBank, consistency_loss
from heal.data import GraphCollection, SplitAssignment
from heal.errors import ContractError, ShapeError
from heal.model import HEALModel, propagation_matrix
from heal.tensor import Tape, Var, log, pick, total

logger = logging.getLogger(__name__)


def supervised_loss(probs: Var, labels) -> Var:
    """Mean negative log-probability of the true class."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (probs.shape[0],):
        raise ShapeError(f"{labels.size} labels for {probs.shape[0]} predictions")
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise ContractError(f"label outside [0, {probs.shape[1]})")
    return -total(log(pick(probs, labels))) / len(labels)


def total_loss(l_sup, l_con, beta: float):
    """``l_sup + beta * l_con``; a missing consistency term counts as zero."""
    if beta < 0:
        raise ContractError(f"beta must be non-negative, got {beta}")
    if l_con is None:
        return l_sup
    return l_sup + l_con * beta


@dataclass
class AdamState:
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, weight_decay: float = 0.0, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> tuple[dict[str, np.ndarray], AdamState]:
    """Bias-corrected Adam with L2 weight decay folded into the gradient. Updates in place."""
    for name, g in grads.items():
        if name not in params or params[name].shape != g.shape:
            raise ContractError(f"gradient for {name!r} does not match any parameter shape")
    state.step += 1
    t = state.step
    for name, g in grads.items():
        p = params[name]
        g = g + weight_decay * p
        m = state.first.get(name, np.zeros_like(p))
        v = state.second.get(name, np.zeros_like(p))
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        state.first[name], state.second[name] = m, v
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


@dataclass
class EvalResult:
    accuracy: float
    correct: int
    total: int
    per_class: dict[int, tuple[int, int]]  # class -> (correct, total)


@dataclass
class EpochMetrics:
    epoch: int
    l_sup: float
    l_con: float
    train_acc: float
    val_acc: float


@dataclass
class TrainResult:
    model: HEALModel
    history: list[EpochMetrics]
    best_epoch: int


class PropagationCache:
    """Propagation matrices per graph index, computed on first use."""

    def __init__(self, collection: GraphCollection, kind: str):
        self.collection = collection
        self.kind = kind
        self._cache: dict[int, np.ndarray] = {}

    def __call__(self, indices) -> list[np.ndarray]:
        out = []
        for i in indices:
            if i not in self._cache:
                self._cache[i] = propagation_matrix(self.collection[i], self.kind)
            out.append(self._cache[i])
        return out


def predict(model: HEALModel, collection: GraphCollection, indices, cache: PropagationCache | None = None,
            batch_size: int | None = None) -> np.ndarray:
    indices = list(indices)
    cache = cache or PropagationCache(collection, model.config.encoder)
    batch_size = batch_size or model.config.batch_size
    chunks = []
    for lo in range(0, len(indices), batch_size):
        part = indices[lo : lo + batch_size]
        chunks.append(model.predict_proba([collection[i] for i in part], cache(part)))
    return np.vstack(chunks) if chunks else np.zeros((0, model.num_classes))


def accuracy_from_probs(probs: np.ndarray, labels) -> EvalResult:
    labels = np.asarray(labels, dtype=np.int64)
    pred = np.argmax(probs, axis=1)  # first maximum wins ties
    hits = pred == labels
    per_class = {int(c): (int(hits[labels == c].sum()), int((labels == c).sum())) for c in np.unique(labels)}
    return EvalResult(float(hits.mean()), int(hits.sum()), len(labels), per_class)


def evaluate(model: HEALModel, collection: GraphCollection, indices,
             cache: PropagationCache | None = None) -> EvalResult:
    indices = list(indices)
    if not indices:
        raise ContractError("evaluate needs at least one graph")
    labels = [collection[i].label for i in indices]
    if any(y is None for y in labels):
        raise ContractError("evaluate called on an unlabeled graph")
    return accuracy_from_probs(predict(model, collection, indices, cache), labels)


class _Cycler:
    """Endless reshuffled pass over an index pool."""

    def __init__(self, pool, rng: np.random.Generator):
        self.pool = np.asarray(pool, dtype=np.int64)
        self.rng = rng
        self.order = np.zeros(0, dtype=np.int64)
        self.pos = 0

    def take(self, n: int) -> list[int]:
        if len(self.pool) == 0:
            return []
        out = []
        while len(out) < min(n, len(self.pool)):
            if self.pos >= len(self.order):
                self.order = self.rng.permutation(self.pool)
                self.pos = 0
            out.append(int(self.order[self.pos]))
            self.pos += 1
        return out


def train_step(model: HEALModel, collection: GraphCollection, labeled: list[int], unlabeled: list[int],
               bank: MemoryBank, state: AdamState, cache: PropagationCache) -> tuple[float, float | None]:
    """One optimizer step on a labeled and an unlabeled minibatch, then a bank push."""
    cfg = model.config
    tape = Tape()
    handles = model.bind(tape)
    s_l, t_l, _ = model.forward_batch(tape, handles, [collection[i] for i in labeled], cache(labeled))
    probs = model.classify(tape, handles, s_l, t_l)
    l_sup = supervised_loss(probs, [collection[i].label for i in labeled])

    l_con = None
    if cfg.uses_consistency and unlabeled and len(bank) > 0:
        s_u, t_u, _ = model.forward_batch(tape, handles, [collection[i] for i in unlabeled], cache(unlabeled))
        l_con = consistency_loss(s_u, t_u, bank, cfg.tau)

    loss = total_loss(l_sup, l_con, cfg.beta)
    grads = tape.backward(loss)
    adam_step(model.params, grads, state, cfg.learning_rate, cfg.weight_decay)
    if cfg.uses_consistency:
        bank.push(s_l.value, t_l.value, labeled)
    return float(l_sup.value[0, 0]), None if l_con is None else float(l_con.value[0, 0])


def train(config: TrainConfig, collection: GraphCollection, splits: SplitAssignment,
          on_epoch: Callable[[EpochMetrics], None] | None = None) -> TrainResult:
    """Run the semi-supervised loop and return the best-validation model.

    Each epoch walks the shuffled labeled pool in minibatches; the unlabeled
    pool is cycled independently, one minibatch per labeled minibatch.
    """
    labeled_pool = list(splits.labeled_train)
    if not labeled_pool:
        raise ContractError("labeled training split is empty")
    model = HEALModel.initialize(config, collection.feature_dim, collection.num_classes,
                                 np.random.default_rng(config.seed))
    labeled_rng = np.random.default_rng([config.seed, 1])
    unlabeled = _Cycler(splits.unlabeled_train, np.random.default_rng([config.seed, 2]))
    cache = PropagationCache(collection, config.encoder)
    bank = MemoryBank(config.bank_capacity)
    state = AdamState()
    val_pool = list(splits.validation) or labeled_pool

    history: list[EpochMetrics] = []
    best, best_acc, best_epoch = model.copy(), -1.0, 0
    for epoch in range(1, config.epochs + 1):
        order = labeled_rng.permutation(labeled_pool)
        sup_terms, con_terms = [], []
        for lo in range(0, len(order), config.batch_size):
            batch = [int(i) for i in order[lo : lo + config.batch_size]]
            ubatch = unlabeled.take(config.batch_size) if config.uses_consistency else []
            l_sup, l_con = train_step(model, collection, batch, ubatch, bank, state, cache)
            sup_terms.append(l_sup)
            if l_con is not None:
                con_terms.append(l_con)
        metrics = EpochMetrics(
            epoch,
            float(np.mean(sup_terms)),
            float(np.mean(con_terms)) if con_terms else 0.0,
            evaluate(model, collection, labeled_pool, cache).accuracy,
            evaluate(model, collection, val_pool, cache).accuracy,
        )
        history.append(metrics)
        logger.debug("epoch %d: %s", epoch, metrics)
        if on_epoch is not None:
            on_epoch(metrics)
        if metrics.val_acc > best_acc:
            best, best_acc, best_epoch = model.copy(), metrics.val_acc, epoch
    return TrainResult(best, history, best_epoch)
