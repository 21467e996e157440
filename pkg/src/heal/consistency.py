"""Anchor memory bank and the relational consistency loss between branches."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from heal.errors import ContractError, ShapeError
from heal.tensor import NORM_EPS, Var, exp, log_softmax_rows, mul, normalize_rows, sub, total

TAU = 0.5


@dataclass(frozen=True, eq=False)
class Anchor:
    hyper: np.ndarray  # length d
    line: np.ndarray  # length d
    graph_id: int


class MemoryBank:
    """FIFO queue holding detached anchor embeddings from both branches."""

    def __init__(self, capacity: int = 128):
        if capacity < 1:
            raise ContractError(f"bank capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._queue: deque[Anchor] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._queue)

    def __iter__(self):
        return iter(self._queue)

    def push(self, hyper: np.ndarray, line: np.ndarray, graph_ids: Iterable[int]) -> MemoryBank:
        """Append one anchor per row, oldest entries falling off the front."""
        ids = list(graph_ids)
        if not ids:
            return self
        hyper = np.atleast_2d(np.array(hyper, dtype=np.float64))
        line = np.atleast_2d(np.array(line, dtype=np.float64))
        if not len(ids) == hyper.shape[0] == line.shape[0]:
            raise ShapeError(f"{len(ids)} ids for {hyper.shape[0]} / {line.shape[0]} embedding rows")
        for s, t, gid in zip(hyper, line, ids):
            self._queue.append(Anchor(s.copy(), t.copy(), int(gid)))
        return self

    @property
    def graph_ids(self) -> list[int]:
        return [a.graph_id for a in self._queue]

    def hyper_matrix(self) -> np.ndarray:
        return np.array([a.hyper for a in self._queue])

    def line_matrix(self) -> np.ndarray:
        return np.array([a.line for a in self._queue])


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"cosine of vectors with lengths {a.size} and {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < NORM_EPS or nb < NORM_EPS:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def similarity_distribution(query, anchors, tau: float = TAU) -> np.ndarray:
    """Softmax over ``cos(query, anchor) / tau``."""
    if tau <= 0:
        raise ContractError(f"tau must be positive, got {tau}")
    anchors = list(anchors)
    if not anchors:
        raise ContractError("similarity distribution over an empty anchor set")
    logits = np.array([cosine(query, a) for a in anchors]) / tau
    z = np.exp(logits - logits.max())
    return z / z.sum()


def symmetric_kl(p, q) -> float:
    """Half the sum of both KL directions."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeError(f"distributions have lengths {p.size} and {q.size}")
    if np.any(p <= 0) or np.any(q <= 0):
        raise ContractError("distributions must be strictly positive")
    return float(0.5 * np.sum((p - q) * (np.log(p) - np.log(q))))


def relational_logits(queries: Var, anchors: np.ndarray, tau: float) -> Var:
    """Row-wise log of the similarity distributions of ``queries`` against fixed anchors."""
    tape = queries.tape
    if anchors.ndim != 2 or anchors.shape[1] != queries.shape[1]:
        raise ShapeError(f"anchors {anchors.shape} do not match queries {queries.shape}")
    norms = np.linalg.norm(anchors, axis=1, keepdims=True)
    unit = anchors / np.where(norms < NORM_EPS, np.inf, norms)
    cos = normalize_rows(queries) @ tape.const(unit.T)
    return log_softmax_rows(cos / tau)


def consistency_loss(hyper: Var, line: Var, bank: MemoryBank, tau: float = TAU) -> Var | None:
    """Mean symmetric KL between the two branches' anchor distributions.

    ``hyper`` and ``line`` stack one row per unlabeled graph.  Returns ``None``
    while the bank is empty or the batch has no rows.
    """
    if len(bank) == 0 or hyper.shape[0] == 0:
        return None
    if hyper.shape != line.shape:
        raise ShapeError(f"branch embeddings {hyper.shape} and {line.shape} differ")
    log_p = relational_logits(hyper, bank.hyper_matrix(), tau)
    log_q = relational_logits(line, bank.line_matrix(), tau)
    per_entry = mul(sub(exp(log_p), exp(log_q)), sub(log_p, log_q))
    return total(per_entry) * (0.5 / hyper.shape[0])
