"""Message-passing node encoder and sum readout."""

from __future__ import annotations

import numpy as np

from heal.errors import ContractError, ShapeError
from heal.tensor import Op, Var, activate, colsum

GCN = "gcn"
GIN = "gin"
ENCODER_KINDS = (GCN, GIN)


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def encoder_shapes(feature_dim: int, dim: int, layers: int, kind: str = GCN) -> dict[str, tuple[int, int]]:
    """Parameter names and shapes of an encoder stack.

    The GCN stack has one ``encoder.<l>`` matrix per layer.  The GIN stack has
    a two-matrix per-node transform, ``encoder.<l>.a`` and ``encoder.<l>.b``.
    """
    if layers < 1:
        raise ContractError("encoder needs at least one layer")
    if kind not in ENCODER_KINDS:
        raise ContractError(f"unknown encoder kind {kind!r}")
    shapes = {}
    for layer in range(layers):
        d_in = feature_dim if layer == 0 else dim
        if kind == GCN:
            shapes[f"encoder.{layer}"] = (d_in, dim)
        else:
            shapes[f"encoder.{layer}.a"] = (d_in, dim)
            shapes[f"encoder.{layer}.b"] = (dim, dim)
    return shapes


def encode(adj: Var, x: Var, params: dict[str, Var], layers: int, kind: str = GCN,
           activation: Op = Op.RELU) -> Var:
    """Node embeddings after ``layers`` rounds of propagation.

    ``adj`` is the normalized adjacency for the GCN stack and ``A + I``
    (plain sum aggregation including self) for the GIN stack.
    """
    if layers < 1:
        raise ContractError("encoder needs at least one layer")
    first = params["encoder.0" if kind == GCN else "encoder.0.a"]
    if x.shape[1] != first.shape[0]:
        raise ShapeError(f"features have width {x.shape[1]} but the first encoder layer expects {first.shape[0]}")
    h = x
    for layer in range(layers):
        if kind == GCN:
            h = activate(adj @ h @ params[f"encoder.{layer}"], activation)
        else:
            z = activate(adj @ h @ params[f"encoder.{layer}.a"], activation)
            h = activate(z @ params[f"encoder.{layer}.b"], activation)
    return h


def readout_sum(h: Var) -> Var:
    """Column sums of the node embeddings, as a 1 x d matrix."""
    if h.shape[0] == 0:
        raise ContractError("readout over a graph with no nodes")
    return colsum(h)
