"""Learned low-rank hypergraph: incidence, hyperedge embeddings, node refresh."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from heal.encoder import readout_sum
from heal.errors import ShapeError
from heal.tensor import Op, Var, activate

THRESHOLD = 0.0


@dataclass(eq=False)
class HypergraphIncidence:
    """Continuous incidence scores plus the node sets they induce.

    ``members[j]`` holds every node whose score for hyperedge ``j`` is strictly
    above ``threshold``.  The scores themselves are used unconstrained
    downstream; only line-graph construction and export look at the sets.
    """

    scores: Var
    threshold: float = THRESHOLD

    @property
    def mask(self) -> np.ndarray:
        return self.scores.value > self.threshold

    @cached_property
    def members(self) -> list[frozenset[int]]:
        return binarize(self.scores.value, self.threshold)

    @property
    def num_hyperedges(self) -> int:
        return self.scores.shape[1]


def binarize(scores: np.ndarray, threshold: float = THRESHOLD) -> list[frozenset[int]]:
    cols, rows = np.nonzero((scores > threshold).T)
    bounds = np.searchsorted(cols, np.arange(scores.shape[1] + 1))
    rows = rows.tolist()
    return [frozenset(rows[bounds[j] : bounds[j + 1]]) for j in range(scores.shape[1])]


def learn_incidence(h: Var, weight: Var, threshold: float = THRESHOLD) -> HypergraphIncidence:
    if h.shape[1] != weight.shape[0]:
        raise ShapeError(f"node embeddings {h.shape} do not match incidence weight {weight.shape}")
    scores = h @ weight
    return HypergraphIncidence(scores, threshold)


def hyperedge_embeddings(incidence: HypergraphIncidence, h: Var, mixer: Var,
                         activation: Op = Op.RELU) -> Var:
    """``act(U L^T H) + L^T H`` with ``L`` the incidence scores, shape k x d."""
    lam = incidence.scores
    if lam.shape[0] != h.shape[0]:
        raise ShapeError(f"incidence {lam.shape} and node embeddings {h.shape} disagree on node count")
    if mixer.shape != (lam.shape[1], lam.shape[1]):
        raise ShapeError(f"mixer must be {lam.shape[1]}x{lam.shape[1]}, got {mixer.shape}")
    pooled = lam.T @ h
    return activate(mixer @ pooled, activation) + pooled


def update_nodes(incidence: HypergraphIncidence, edge_emb: Var) -> Var:
    return incidence.scores @ edge_emb


def readout_hyper(s: Var) -> Var:
    return readout_sum(s)
