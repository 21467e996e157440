"""Finite-difference verification of the full training loss on a toy problem."""

from __future__ import annotations

import numpy as np

from heal.config import TrainConfig
from heal.consistency import MemoryBank, consistency_loss
from heal.data import GraphCollection, random_graph
from heal.model import HEALModel
from heal.tensor import Tape, Var, grad_check_report
from heal.trainer import supervised_loss, total_loss

TOY_FEATURES = 4
TOY_CLASSES = 2


def toy_problem(config: TrainConfig) -> tuple[HEALModel, GraphCollection, MemoryBank]:
    """Two labeled graphs, one unlabeled graph and a bank seeded from the labeled pair."""
    rng = np.random.default_rng(config.seed)
    graphs = (
        random_graph(rng, 5, 0.5, TOY_FEATURES, label=0),
        random_graph(rng, 6, 0.5, TOY_FEATURES, label=1),
        random_graph(rng, 4, 0.6, TOY_FEATURES),
    )
    collection = GraphCollection(graphs, TOY_CLASSES, TOY_FEATURES, "TOY")
    model = HEALModel.initialize(config, TOY_FEATURES, TOY_CLASSES, rng)
    tape = Tape()
    handles = model.bind(tape)
    s, t, _ = model.forward_batch(tape, handles, list(graphs[:2]))
    bank = MemoryBank(config.bank_capacity).push(s.value, t.value, [0, 1])
    return model, collection, bank


def full_loss(model: HEALModel, collection: GraphCollection, bank: MemoryBank,
              tape: Tape, handles: dict[str, Var]) -> Var:
    labeled = [g for g in collection.graphs if g.label is not None]
    unlabeled = [g for g in collection.graphs if g.label is None]
    s_l, t_l, _ = model.forward_batch(tape, handles, labeled)
    l_sup = supervised_loss(model.classify(tape, handles, s_l, t_l), [g.label for g in labeled])
    l_con = None
    if model.config.uses_consistency:
        s_u, t_u, _ = model.forward_batch(tape, handles, unlabeled)
        l_con = consistency_loss(s_u, t_u, bank, model.config.tau)
    return total_loss(l_sup, l_con, model.config.beta)


def run_gradcheck(config: TrainConfig, epsilon: float = 1e-6) -> dict[str, float]:
    model, collection, bank = toy_problem(config)
    return grad_check_report(
        lambda tape, handles: full_loss(model, collection, bank, tape, handles),
        model.params,
        epsilon,
    )
