"""Graph containers, TUDataset ingestion, normalization and semi-supervised splits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from heal.errors import ContractError, FormatError, IngestError

DEGREE_CAP = 10
SPLIT_RATIO = (2, 5, 1, 2)


@dataclass(frozen=True, eq=False)
class Graph:
    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    features: np.ndarray
    label: int | None = None

    def __post_init__(self):
        seen = set()
        for u, v in self.edges:
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise ContractError(f"edge ({u}, {v}) outside [0, {self.num_nodes})")
            if u == v:
                raise ContractError(f"self-loop on node {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ContractError(f"duplicate edge {key}")
            seen.add(key)
        if self.features.ndim != 2 or self.features.shape[0] != self.num_nodes:
            raise ContractError(
                f"features shape {self.features.shape} does not match {self.num_nodes} nodes"
            )

    @classmethod
    def from_edges(cls, num_nodes: int, edges, features=None, label=None) -> Graph:
        """Build a graph, dropping duplicate undirected edges."""
        canon = sorted({(min(u, v), max(u, v)) for u, v in edges})
        if features is None:
            features = np.zeros((num_nodes, 0))
        return cls(num_nodes, tuple(canon), np.asarray(features, dtype=np.float64), label)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes))
        for u, v in self.edges:
            a[u, v] = a[v, u] = 1.0
        return a

    def permuted(self, perm) -> Graph:
        """Relabel node ``i`` as ``perm[i]``."""
        perm = np.asarray(perm)
        feats = np.empty_like(self.features)
        feats[perm] = self.features
        edges = [(int(perm[u]), int(perm[v])) for u, v in self.edges]
        return Graph.from_edges(self.num_nodes, edges, feats, self.label)

    def with_features(self, features) -> Graph:
        return Graph(self.num_nodes, self.edges, np.asarray(features, dtype=np.float64), self.label)

    def same_as(self, other: Graph) -> bool:
        return (
            self.num_nodes == other.num_nodes
            and self.edges == other.edges
            and self.label == other.label
            and np.array_equal(self.features, other.features)
        )


@dataclass(frozen=True, eq=False)
class GraphCollection:
    graphs: tuple[Graph, ...]
    num_classes: int
    feature_dim: int
    name: str = "graphs"

    def __post_init__(self):
        for i, g in enumerate(self.graphs):
            if g.features.shape[1] != self.feature_dim:
                raise ContractError(f"graph {i} has feature width {g.features.shape[1]}, expected {self.feature_dim}")
            if g.label is not None and not 0 <= g.label < self.num_classes:
                raise ContractError(f"graph {i} label {g.label} outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.graphs)

    def __getitem__(self, i: int) -> Graph:
        return self.graphs[i]

    @property
    def labels(self) -> np.ndarray:
        return np.array([-1 if g.label is None else g.label for g in self.graphs])

    def same_as(self, other: GraphCollection) -> bool:
        return (
            self.num_classes == other.num_classes
            and self.feature_dim == other.feature_dim
            and len(self) == len(other)
            and all(a.same_as(b) for a, b in zip(self.graphs, other.graphs))
        )


@dataclass(frozen=True)
class SplitAssignment:
    labeled_train: tuple[int, ...]
    unlabeled_train: tuple[int, ...]
    validation: tuple[int, ...]
    test: tuple[int, ...]
    label_ratio: float = 1.0

    def get(self, name: str) -> tuple[int, ...]:
        key = name.replace("-", "_")
        if key not in ("labeled_train", "unlabeled_train", "validation", "test"):
            raise ContractError(f"unknown split {name!r}")
        return getattr(self, key)


def _read_ints(path: Path, name: str) -> list[list[int]]:
    if not path.is_file():
        raise IngestError(f"missing required file {path.name} for dataset {name}")
    rows = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([int(float(tok)) for tok in line.replace(",", " ").split()])
            except ValueError:
                raise FormatError(f"{path.name}:{lineno}: cannot parse {line!r}") from None
    return rows


def _read_floats(path: Path) -> np.ndarray:
    rows = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.replace(",", " ").split()])
            except ValueError:
                raise FormatError(f"{path.name}:{lineno}: cannot parse {line!r}") from None
    return np.array(rows, dtype=np.float64)


def parse_tudataset(directory, name: str, degree_cap: int = DEGREE_CAP) -> GraphCollection:
    """Read a dataset stored in the TUDataset plain-text layout.

    Node labels become one-hot columns and node attributes real-valued columns
    (labels first when both exist).  Graphs without either get degree one-hot
    features capped at ``degree_cap``.  Graph labels are remapped to
    ``0..C-1`` in sorted order of the raw values.
    """
    root = Path(directory)
    prefix = root / name
    edge_rows = _read_ints(Path(f"{prefix}_A.txt"), name)
    indicator = [r[0] for r in _read_ints(Path(f"{prefix}_graph_indicator.txt"), name)]
    raw_labels = [r[0] for r in _read_ints(Path(f"{prefix}_graph_labels.txt"), name)]

    graph_ids = sorted(set(indicator))
    if len(graph_ids) != len(raw_labels):
        raise FormatError(f"{len(graph_ids)} graphs in indicator but {len(raw_labels)} graph labels")
    pos = {gid: i for i, gid in enumerate(graph_ids)}
    node_graph = np.array([pos[g] for g in indicator])
    node_local = np.zeros(len(indicator), dtype=np.int64)
    counts = np.zeros(len(graph_ids), dtype=np.int64)
    for n, g in enumerate(node_graph):
        node_local[n] = counts[g]
        counts[g] += 1

    edges: list[list[tuple[int, int]]] = [[] for _ in graph_ids]
    for lineno, row in enumerate(edge_rows, 1):
        if len(row) != 2:
            raise FormatError(f"{name}_A.txt:{lineno}: expected two node ids")
        u, v = row[0] - 1, row[1] - 1
        if not (0 <= u < len(indicator) and 0 <= v < len(indicator)):
            raise FormatError(f"{name}_A.txt:{lineno}: node id outside 1..{len(indicator)}")
        if node_graph[u] != node_graph[v]:
            raise FormatError(f"{name}_A.txt:{lineno}: edge {row[0]},{row[1]} joins nodes of different graphs")
        if u != v:
            edges[node_graph[u]].append((int(node_local[u]), int(node_local[v])))

    columns = []
    nl_path = Path(f"{prefix}_node_labels.txt")
    if nl_path.is_file():
        nl = np.array([r[0] for r in _read_ints(nl_path, name)])
        if len(nl) != len(indicator):
            raise FormatError(f"{nl_path.name}: {len(nl)} rows for {len(indicator)} nodes")
        values = np.unique(nl)
        onehot = np.zeros((len(nl), len(values)))
        onehot[np.arange(len(nl)), np.searchsorted(values, nl)] = 1.0
        columns.append(onehot)
    na_path = Path(f"{prefix}_node_attributes.txt")
    if na_path.is_file():
        na = _read_floats(na_path)
        if na.shape[0] != len(indicator):
            raise FormatError(f"{na_path.name}: {na.shape[0]} rows for {len(indicator)} nodes")
        columns.append(na)

    label_values = sorted(set(raw_labels))
    remap = {v: i for i, v in enumerate(label_values)}

    graphs = []
    offsets = np.concatenate([[0], np.cumsum(counts)])
    order = np.argsort(node_graph, kind="stable")
    features = np.hstack(columns)[order] if columns else None
    for g in range(len(graph_ids)):
        feats = features[offsets[g] : offsets[g + 1]] if features is not None else None
        graph = Graph.from_edges(int(counts[g]), edges[g], feats, remap[raw_labels[g]])
        if feats is None:
            graph = graph.with_features(featurize_degrees(graph, degree_cap))
        graphs.append(graph)
    dim = graphs[0].features.shape[1] if graphs else 0
    return GraphCollection(tuple(graphs), len(label_values), dim, name)


def write_tudataset(collection: GraphCollection, directory, name: str | None = None) -> None:
    """Write ``collection`` in TUDataset layout, features as node attributes."""
    name = name or collection.name
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    prefix = root / name
    offset = 0
    with open(f"{prefix}_A.txt", "w") as fa, open(f"{prefix}_graph_indicator.txt", "w") as fi, open(
        f"{prefix}_graph_labels.txt", "w"
    ) as fl, open(f"{prefix}_node_attributes.txt", "w") as fn:
        for gid, g in enumerate(collection.graphs, 1):
            for u, v in g.edges:
                fa.write(f"{u + offset + 1}, {v + offset + 1}\n")
                fa.write(f"{v + offset + 1}, {u + offset + 1}\n")
            for row in g.features:
                fi.write(f"{gid}\n")
                fn.write(", ".join(repr(float(x)) for x in row) + "\n")
            fl.write(f"{g.label}\n")
            offset += g.num_nodes


def featurize_degrees(graph: Graph, cap: int = DEGREE_CAP) -> np.ndarray:
    deg = np.minimum(graph.degrees(), cap)
    out = np.zeros((graph.num_nodes, cap + 1))
    out[np.arange(graph.num_nodes), deg] = 1.0
    return out


def normalized_adjacency(graph: Graph) -> np.ndarray:
    """Symmetric normalization of the adjacency with self-loops added."""
    if graph.num_nodes < 1:
        raise ContractError("graph has no nodes")
    a = graph.adjacency() + np.eye(graph.num_nodes)
    inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    # outer product first keeps the result exactly symmetric
    return a * (inv_sqrt[:, None] * inv_sqrt[None, :])


def _bucket_sizes(n: int, ratio=SPLIT_RATIO) -> list[int]:
    # largest-remainder rounding keeps every bucket within 1 of its exact share
    exact = [n * r / sum(ratio) for r in ratio]
    sizes = [math.floor(x) for x in exact]
    order = sorted(range(len(ratio)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def make_splits(collection: GraphCollection, seed: int, label_ratio: float = 0.5) -> SplitAssignment:
    """Stratified 2:5:1:2 split into labeled/unlabeled/validation/test.

    Classes are shuffled independently and interleaved so every bucket sees
    roughly the global class mix.  Only ``ceil(label_ratio * |labeled|)``
    graphs of the labeled bucket keep their labels; the rest move to the
    unlabeled pool.
    """
    n = len(collection)
    if n < 10:
        raise ContractError(f"need at least 10 graphs to split, got {n}")
    if not 0 < label_ratio <= 1:
        raise ContractError(f"label_ratio must lie in (0, 1], got {label_ratio}")
    rng = np.random.default_rng(seed)
    labels = collection.labels
    keys = np.empty(n)
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        members = rng.permutation(members)
        keys[members] = (np.arange(len(members)) + rng.random()) / len(members)
    order = np.lexsort((rng.random(n), keys))

    sizes = _bucket_sizes(n)
    bounds = np.cumsum([0] + sizes)
    buckets = [order[bounds[i] : bounds[i + 1]] for i in range(4)]
    keep = math.ceil(label_ratio * len(buckets[0]))
    labeled = sorted(int(i) for i in buckets[0][:keep])
    unlabeled = sorted(int(i) for i in np.concatenate([buckets[0][keep:], buckets[1]]))
    return SplitAssignment(
        tuple(labeled),
        tuple(unlabeled),
        tuple(sorted(int(i) for i in buckets[2])),
        tuple(sorted(int(i) for i in buckets[3])),
        label_ratio,
    )


def cycles_vs_stars(num_graphs: int = 200, seed: int = 0, min_size: int = 10, max_size: int = 20,
                    degree_cap: int = DEGREE_CAP) -> GraphCollection:
    """Two-class toy set: label 0 is a cycle, label 1 a star, both with degree features."""
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(num_graphs):
        n = int(rng.integers(min_size, max_size + 1))
        label = i % 2
        if label == 0:
            edges = [(j, (j + 1) % n) for j in range(n)]
        else:
            edges = [(0, j) for j in range(1, n)]
        g = Graph.from_edges(n, edges, label=label)
        graphs.append(g.with_features(featurize_degrees(g, degree_cap)))
    perm = rng.permutation(num_graphs)
    return GraphCollection(tuple(graphs[i] for i in perm), 2, degree_cap + 1, "CYCLES_STARS")


def random_graph(rng: np.random.Generator, num_nodes: int, edge_prob: float = 0.3,
                 feature_dim: int = 4, label: int | None = None) -> Graph:
    """Erdos-Renyi graph with standard-normal node features."""
    iu, ju = np.triu_indices(num_nodes, k=1)
    keep = rng.random(len(iu)) < edge_prob
    edges = list(zip(iu[keep].tolist(), ju[keep].tolist()))
    return Graph.from_edges(num_nodes, edges, rng.standard_normal((num_nodes, feature_dim)), label)
