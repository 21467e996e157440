"""Line graph over learned hyperedges and the convolution that runs on it."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from heal.encoder import readout_sum
from heal.errors import ShapeError
from heal.hypergraph import HypergraphIncidence
from heal.tensor import Op, Var, activate


@dataclass(eq=False)
class LineGraph:
    adjacency: np.ndarray  # k x k Jaccard weights, zero diagonal
    features: Var  # hyperedge embeddings, k x d

    @property
    def num_nodes(self) -> int:
        return self.adjacency.shape[0]


def jaccard_adjacency(members: Sequence[frozenset[int]], num_nodes: int | None = None) -> np.ndarray:
    """Pairwise ``|Si & Sj| / |Si | Sj|`` with zero diagonal; empty pairs give 0."""
    k = len(members)
    if num_nodes is None:
        num_nodes = max((max(s) for s in members if s), default=-1) + 1
    b = np.zeros((num_nodes, k))
    for j, s in enumerate(members):
        if s:
            b[list(s), j] = 1.0
    return jaccard_from_mask(b)


def jaccard_from_mask(mask: np.ndarray) -> np.ndarray:
    """Jaccard weights between the columns of a nodes x hyperedges membership mask."""
    b = np.asarray(mask, dtype=np.float64)
    inter = b.T @ b
    size = np.diag(inter)
    union = size[:, None] + size[None, :] - inter
    adj = np.divide(inter, union, out=np.zeros_like(inter), where=inter > 0)
    np.fill_diagonal(adj, 0.0)
    return adj


def build_line_graph(incidence: HypergraphIncidence | Sequence[frozenset[int]], edge_emb: Var,
                     num_nodes: int | None = None) -> LineGraph:
    """Line graph whose nodes are hyperedges, weighted by membership overlap.

    Accepts either a :class:`HypergraphIncidence` or plain node sets.
    """
    if isinstance(incidence, HypergraphIncidence):
        k = incidence.num_hyperedges
        adj = jaccard_from_mask(incidence.mask)
    else:
        k = len(incidence)
        adj = jaccard_adjacency(incidence, num_nodes)
    if edge_emb.shape[0] != k:
        raise ShapeError(f"{k} hyperedges but {edge_emb.shape[0]} embedding rows")
    return LineGraph(adj, edge_emb)


def normalize_line_adjacency(adj: np.ndarray) -> np.ndarray:
    a = adj + np.eye(adj.shape[0])
    inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    # outer product first keeps the result exactly symmetric
    return a * (inv_sqrt[:, None] * inv_sqrt[None, :])


def line_encode(lg: LineGraph, weights: list[Var], activation: Op = Op.RELU) -> tuple[Var, Var]:
    """Convolve over the line graph; returns (per-hyperedge output, column-sum readout).

    The adjacency enters as a constant, so no gradient reaches the incidence
    scores through the thresholded structure.
    """
    t = lg.features
    a_hat = t.tape.const(normalize_line_adjacency(lg.adjacency))
    for w in weights:
        if t.shape[1] != w.shape[0]:
            raise ShapeError(f"line-graph features {t.shape} do not match weight {w.shape}")
        t = activate(a_hat @ t @ w, activation)
    return t, readout_sum(t)
