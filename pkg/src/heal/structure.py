"""Export of a graph's learned hypergraph and line graph as Graphviz DOT text.

Original nodes are ``n<i>``, hyperedges ``h<j>``.  Each hyperedge carries its
member list as an attribute and is joined to its members by ``membership``
edges; line-graph edges join hyperedges and carry the Jaccard weight.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from heal.data import Graph
from heal.hypergraph import HypergraphIncidence
from heal.linegraph import jaccard_from_mask
from heal.model import HEALModel
from heal.tensor import Tape

HEADER = "// heal structure export v1"


@dataclass
class Structure:
    num_nodes: int
    edges: list[tuple[int, int]]
    hyperedges: list[frozenset[int]]
    line_edges: dict[tuple[int, int], float]


def extract_structure(graph: Graph, incidence: HypergraphIncidence) -> Structure:
    adj = jaccard_from_mask(incidence.mask)
    k = adj.shape[0]
    line_edges = {(i, j): float(adj[i, j]) for i in range(k) for j in range(i + 1, k) if adj[i, j] > 0}
    return Structure(graph.num_nodes, list(graph.edges), list(incidence.members), line_edges)


def learned_structure(model: HEALModel, graph: Graph) -> Structure:
    tape = Tape()
    result = model.forward_graph(tape, model.bind(tape), graph)
    return extract_structure(graph, result.incidence)


def to_dot(structure: Structure, graph_index: int = 0, threshold: float = 0.0) -> str:
    lines = [
        HEADER,
        "graph heal_structure {",
        f'  graph [graph_index={graph_index}, nodes={structure.num_nodes}, '
        f'hyperedges={len(structure.hyperedges)}, threshold="{threshold!r}"];',
    ]
    lines += [f"  n{i} [kind=node];" for i in range(structure.num_nodes)]
    lines += [f"  n{u} -- n{v} [kind=original];" for u, v in structure.edges]
    for j, members in enumerate(structure.hyperedges):
        ids = " ".join(str(m) for m in sorted(members))
        lines.append(f'  h{j} [kind=hyperedge, shape=box, members="{ids}"];')
        lines += [f"  h{j} -- n{m} [kind=membership];" for m in sorted(members)]
    for (i, j), w in sorted(structure.line_edges.items()):
        lines.append(f'  h{i} -- h{j} [kind=line, weight="{w!r}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


_GRAPH_ATTRS = re.compile(r"graph \[graph_index=(\d+), nodes=(\d+), hyperedges=(\d+)")
_ORIGINAL = re.compile(r"^\s*n(\d+) -- n(\d+) \[kind=original\];")
_HYPEREDGE = re.compile(r'^\s*h(\d+) \[kind=hyperedge, shape=box, members="([\d ]*)"\];')
_LINE = re.compile(r'^\s*h(\d+) -- h(\d+) \[kind=line, weight="([^"]+)"\];')


def parse_dot(text: str) -> Structure:
    """Inverse of :func:`to_dot`."""
    num_nodes, k = 0, 0
    edges, line_edges, hyper = [], {}, {}
    for line in text.splitlines():
        if m := _GRAPH_ATTRS.search(line):
            num_nodes, k = int(m.group(2)), int(m.group(3))
        elif m := _ORIGINAL.match(line):
            edges.append((int(m.group(1)), int(m.group(2))))
        elif m := _HYPEREDGE.match(line):
            hyper[int(m.group(1))] = frozenset(int(x) for x in m.group(2).split())
        elif m := _LINE.match(line):
            line_edges[(int(m.group(1)), int(m.group(2)))] = float(m.group(3))
    return Structure(num_nodes, edges, [hyper.get(j, frozenset()) for j in range(k)], line_edges)


def line_adjacency(structure: Structure) -> np.ndarray:
    k = len(structure.hyperedges)
    adj = np.zeros((k, k))
    for (i, j), w in structure.line_edges.items():
        adj[i, j] = adj[j, i] = w
    return adj
