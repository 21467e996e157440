"""HEAL model: parameters, per-graph dual-branch forward pass and classifier."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from heal import encoder as enc
from heal.config import TrainConfig
from heal.data import Graph, normalized_adjacency
from heal.errors import ShapeError
from heal.hypergraph import HypergraphIncidence, hyperedge_embeddings, learn_incidence, readout_hyper, update_nodes
from heal.linegraph import LineGraph, build_line_graph, line_encode
from heal.tensor import Op, Tape, Var, hcat, matmul, relu, softmax_rows, vstack

ACTIVATIONS = {"relu": Op.RELU, "tanh": Op.TANH}


def propagation_matrix(graph: Graph, kind: str = enc.GCN) -> np.ndarray:
    if kind == enc.GCN:
        return normalized_adjacency(graph)
    return graph.adjacency() + np.eye(graph.num_nodes)


def parameter_shapes(config: TrainConfig, feature_dim: int, num_classes: int) -> dict[str, tuple[int, int]]:
    d, k = config.embed_dim, config.hyperedges
    shapes = enc.encoder_shapes(feature_dim, d, config.encoder_layers, config.encoder)
    shapes["hyper.incidence"] = (d, k)
    shapes["hyper.mixer"] = (k, k)
    for layer in range(config.line_layers):
        shapes[f"line.{layer}"] = (d, d)
    shapes["classifier.hidden"] = (2 * d, d)
    shapes["classifier.output"] = (d, num_classes)
    return shapes


@dataclass(eq=False)
class GraphPass:
    """Everything one graph's forward pass produces."""

    hyper: Var  # s_G, 1 x d
    line: Var  # t_G, 1 x d
    nodes: Var
    incidence: HypergraphIncidence
    linegraph: LineGraph


@dataclass(eq=False)
class HEALModel:
    config: TrainConfig
    feature_dim: int
    num_classes: int
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def initialize(cls, config: TrainConfig, feature_dim: int, num_classes: int,
                   rng: np.random.Generator | None = None) -> HEALModel:
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        shapes = parameter_shapes(config, feature_dim, num_classes)
        params = {name: enc.glorot(rng, *shape) for name, shape in shapes.items()}
        return cls(config, feature_dim, num_classes, params)

    def copy(self) -> HEALModel:
        return HEALModel(self.config, self.feature_dim, self.num_classes,
                         {k: v.copy() for k, v in self.params.items()})

    @property
    def activation(self) -> Op:
        return ACTIVATIONS[self.config.activation]

    def bind(self, tape: Tape) -> dict[str, Var]:
        return {name: tape.param(name, value) for name, value in self.params.items()}

    def check_graph(self, graph: Graph) -> None:
        if graph.features.shape[1] != self.feature_dim:
            raise ShapeError(f"graph features have width {graph.features.shape[1]}, model expects {self.feature_dim}")

    def forward_graph(self, tape: Tape, handles: dict[str, Var], graph: Graph,
                      prop: np.ndarray | None = None) -> GraphPass:
        cfg = self.config
        self.check_graph(graph)
        if prop is None:
            prop = propagation_matrix(graph, cfg.encoder)
        h = enc.encode(tape.const(prop), tape.const(graph.features), handles,
                       cfg.encoder_layers, cfg.encoder, self.activation)
        incidence = learn_incidence(h, handles["hyper.incidence"], cfg.threshold)
        r = hyperedge_embeddings(incidence, h, handles["hyper.mixer"], self.activation)
        s = update_nodes(incidence, r)
        lg = build_line_graph(incidence, r)
        line_weights = [handles[f"line.{i}"] for i in range(cfg.line_layers)]
        _, t_g = line_encode(lg, line_weights, self.activation)
        return GraphPass(readout_hyper(s), t_g, h, incidence, lg)

    def forward_batch(self, tape: Tape, handles: dict[str, Var], graphs: list[Graph],
                      props: list[np.ndarray] | None = None) -> tuple[Var, Var, list[GraphPass]]:
        """Per-graph passes with their readouts stacked into B x d matrices."""
        props = props or [None] * len(graphs)
        passes = [self.forward_graph(tape, handles, g, p) for g, p in zip(graphs, props)]
        return vstack([p.hyper for p in passes]), vstack([p.line for p in passes]), passes

    def classify(self, tape: Tape, handles: dict[str, Var], hyper: Var, line: Var) -> Var:
        """Class probabilities from the fused representation, one row per graph."""
        return classify(hyper, line, handles["classifier.hidden"], handles["classifier.output"],
                        self.config.branch_mode)

    def predict_proba(self, graphs: list[Graph], props: list[np.ndarray] | None = None) -> np.ndarray:
        tape = Tape()
        handles = self.bind(tape)
        s, t, _ = self.forward_batch(tape, handles, graphs, props)
        return self.classify(tape, handles, s, t).value


def classify(hyper: Var, line: Var, hidden: Var, output: Var, branch_mode: str = "dual") -> Var:
    if hyper.shape != line.shape:
        raise ShapeError(f"branch readouts {hyper.shape} and {line.shape} differ")
    if hidden.shape[0] != 2 * hyper.shape[1]:
        raise ShapeError(f"classifier expects {hidden.shape[0]} fused features, got {2 * hyper.shape[1]}")
    tape = hyper.tape
    if branch_mode == "hyper-only":
        line = tape.const(np.zeros(line.shape))
    elif branch_mode == "line-only":
        hyper = tape.const(np.zeros(hyper.shape))
    fused = hcat(hyper, line)
    return softmax_rows(matmul(relu(fused @ hidden), output))
