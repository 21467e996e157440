"""Dense float64 matrices with a define-by-run tape for reverse-mode gradients.

Every value is a 2-D ``numpy`` array.  Operations performed on :class:`Var`
objects are appended to the owning :class:`Tape`; :meth:`Tape.backward` walks
the tape in reverse and returns the gradient for each named parameter leaf.
There is no broadcasting: operand shapes must agree exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from heal.errors import ContractError, ShapeError

LOG_CLAMP = 1e-12
NORM_EPS = 1e-12


class Op(enum.Enum):
    PARAM = "param"
    CONST = "const"
    MATMUL = "matmul"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    SCALE = "scale"
    RELU = "relu"
    TANH = "tanh"
    TRANSPOSE = "transpose"
    COLSUM = "colsum"
    SUM = "sum"
    HCAT = "hcat"
    VSTACK = "vstack"
    SOFTMAX = "softmax"
    LOG_SOFTMAX = "log_softmax"
    EXP = "exp"
    LOG = "log"
    PICK = "pick"
    NORMALIZE = "normalize"


@dataclass(eq=False)
class TapeNode:
    id: int
    op: Op
    parents: tuple[int, ...]
    inputs: tuple = ()
    value: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    requires_grad: bool = False
    name: str | None = None


def as_matrix(value, dtype=np.float64) -> np.ndarray:
    arr = np.array(value, dtype=dtype)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected a matrix, got array of shape {arr.shape}")
    return arr


class Var:
    """Handle to one node on a tape."""

    __slots__ = ("tape", "id")

    def __init__(self, tape: Tape, node_id: int):
        self.tape = tape
        self.id = node_id

    @property
    def node(self) -> TapeNode:
        return self.tape.nodes[self.id]

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.id].value

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def T(self) -> Var:
        return transpose(self)

    def __matmul__(self, other: Var) -> Var:
        return matmul(self, other)

    def __add__(self, other: Var) -> Var:
        return add(self, other)

    def __sub__(self, other: Var) -> Var:
        return sub(self, other)

    def __mul__(self, other) -> Var:
        if isinstance(other, Var):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other: float) -> Var:
        return scale(self, 1.0 / float(other))

    def __neg__(self) -> Var:
        return scale(self, -1.0)

    def __repr__(self) -> str:
        return f"Var(id={self.id}, op={self.node.op.value}, shape={self.shape})"


class Tape:
    """Topologically ordered record of a single forward pass.

    ``dtype`` is float64 for all model work; the gradient checker replays
    forward passes in ``np.longdouble`` when float64 cannot resolve a
    finite difference.
    """

    def __init__(self, dtype=np.float64):
        self.nodes: list[TapeNode] = []
        self.dtype = dtype

    def __len__(self) -> int:
        return len(self.nodes)

    def _append(self, op, parents, value, inputs=(), requires_grad=False, name=None) -> Var:
        if not np.isfinite(value).all():
            raise FloatingPointError(f"non-finite value produced by {op.value}")
        node = TapeNode(len(self.nodes), op, tuple(parents), tuple(inputs), value, requires_grad, name)
        self.nodes.append(node)
        return Var(self, node.id)

    def param(self, name: str, value) -> Var:
        """Register a trainable leaf; its gradient is reported under ``name``."""
        return self._append(Op.PARAM, (), as_matrix(value, self.dtype), requires_grad=True, name=name)

    def const(self, value) -> Var:
        return self._append(Op.CONST, (), as_matrix(value, self.dtype))

    def record(self, op: Op, parents: tuple[Var, ...], value: np.ndarray, inputs=()) -> Var:
        for p in parents:
            if p.tape is not self:
                raise ContractError("operands belong to different tapes")
        requires_grad = any(self.nodes[p.id].requires_grad for p in parents)
        return self._append(op, (p.id for p in parents), value, inputs, requires_grad)

    def backward(self, loss: Var) -> dict[str, np.ndarray]:
        """Gradients of the scalar ``loss`` with respect to every parameter leaf.

        Parameters that do not influence the loss get an all-zero entry;
        constants get no entry at all.
        """
        if loss.tape is not self:
            raise ContractError("loss belongs to a different tape")
        if loss.shape != (1, 1):
            raise ContractError(f"backward needs a 1x1 loss, got {loss.shape}")
        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        grads[loss.id] = np.ones((1, 1))
        for node in reversed(self.nodes[: loss.id + 1]):
            g = grads[node.id]
            if g is None or not node.requires_grad or not node.parents:
                continue
            rule = BACKWARD_RULES[node.op]
            parent_grads = rule(node, g, [self.nodes[p].value for p in node.parents])
            for pid, pg in zip(node.parents, parent_grads):
                if pg is None or not self.nodes[pid].requires_grad:
                    continue
                grads[pid] = pg if grads[pid] is None else grads[pid] + pg
        store: dict[str, np.ndarray] = {}
        for node in self.nodes:
            if node.op is Op.PARAM:
                g = grads[node.id]
                if g is None:
                    g = np.zeros_like(node.value)
                store[node.name] = store[node.name] + g if node.name in store else g
        return store


def _check_same(op: str, a: Var, b: Var) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def matmul(a: Var, b: Var) -> Var:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a.tape.record(Op.MATMUL, (a, b), a.value @ b.value)


def add(a: Var, b: Var) -> Var:
    _check_same("add", a, b)
    return a.tape.record(Op.ADD, (a, b), a.value + b.value)


def sub(a: Var, b: Var) -> Var:
    _check_same("sub", a, b)
    return a.tape.record(Op.SUB, (a, b), a.value - b.value)


def mul(a: Var, b: Var) -> Var:
    _check_same("mul", a, b)
    return a.tape.record(Op.MUL, (a, b), a.value * b.value)


def scale(a: Var, c: float) -> Var:
    return a.tape.record(Op.SCALE, (a,), a.value * c, inputs=(c,))


def relu(a: Var) -> Var:
    return a.tape.record(Op.RELU, (a,), np.maximum(a.value, 0.0))


def tanh(a: Var) -> Var:
    return a.tape.record(Op.TANH, (a,), np.tanh(a.value))


ACTIVATIONS: dict[Op, Callable[[Var], Var]] = {Op.RELU: relu, Op.TANH: tanh}


def activate(a: Var, kind: Op = Op.RELU) -> Var:
    try:
        fn = ACTIVATIONS[kind]
    except KeyError:
        raise ContractError(f"{kind} is not an activation") from None
    return fn(a)


def transpose(a: Var) -> Var:
    return a.tape.record(Op.TRANSPOSE, (a,), a.value.T.copy())


def colsum(a: Var) -> Var:
    """Sum over rows, giving a 1 x cols matrix."""
    if a.shape[0] == 0:
        raise ContractError("colsum of a matrix with no rows")
    return a.tape.record(Op.COLSUM, (a,), a.value.sum(axis=0, keepdims=True))


def total(a: Var) -> Var:
    return a.tape.record(Op.SUM, (a,), np.array([[a.value.sum()]]))


def hcat(a: Var, b: Var) -> Var:
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"hcat: row counts of {a.shape} and {b.shape} differ")
    return a.tape.record(Op.HCAT, (a, b), np.hstack([a.value, b.value]), inputs=(a.shape[1],))


def vstack(parts: list[Var]) -> Var:
    if not parts:
        raise ContractError("vstack of an empty list")
    cols = parts[0].shape[1]
    for p in parts:
        if p.shape[1] != cols:
            raise ShapeError(f"vstack: column counts {cols} and {p.shape[1]} differ")
    sizes = tuple(p.shape[0] for p in parts)
    return parts[0].tape.record(Op.VSTACK, tuple(parts), np.vstack([p.value for p in parts]), inputs=sizes)


def softmax_rows(a: Var) -> Var:
    z = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    return a.tape.record(Op.SOFTMAX, (a,), e / e.sum(axis=1, keepdims=True))


def log_softmax_rows(a: Var) -> Var:
    z = a.value - a.value.max(axis=1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return a.tape.record(Op.LOG_SOFTMAX, (a,), out)


def exp(a: Var) -> Var:
    return a.tape.record(Op.EXP, (a,), np.exp(a.value))


def log(a: Var) -> Var:
    """Natural log with inputs clamped below at ``LOG_CLAMP``."""
    return a.tape.record(Op.LOG, (a,), np.log(np.maximum(a.value, LOG_CLAMP)))


def pick(a: Var, columns) -> Var:
    """Select ``a[i, columns[i]]`` for every row, giving a rows x 1 matrix."""
    idx = np.asarray(columns, dtype=np.int64)
    if idx.shape != (a.shape[0],):
        raise ShapeError(f"pick: need {a.shape[0]} column indices, got {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[1]):
        raise ContractError(f"pick: column index outside [0, {a.shape[1]})")
    rows = np.arange(a.shape[0])
    return a.tape.record(Op.PICK, (a,), a.value[rows, idx][:, None], inputs=(idx,))


def normalize_rows(a: Var) -> Var:
    """Scale each row to unit L2 norm; rows with norm below ``NORM_EPS`` become zero."""
    norms = np.sqrt((a.value**2).sum(axis=1, keepdims=True))
    safe = np.where(norms < NORM_EPS, np.inf, norms)
    return a.tape.record(Op.NORMALIZE, (a,), a.value / safe, inputs=(safe,))


# Backward rules: (node, upstream gradient, parent values) -> per-parent gradients.


def _matmul_back(node, g, xs):
    a, b = xs
    return g @ b.T, a.T @ g


def _relu_back(node, g, xs):
    return (g * (xs[0] > 0),)


def _tanh_back(node, g, xs):
    return (g * (1.0 - node.value**2),)


def _colsum_back(node, g, xs):
    return (np.repeat(g, xs[0].shape[0], axis=0),)


def _sum_back(node, g, xs):
    return (np.full_like(xs[0], g[0, 0]),)


def _hcat_back(node, g, xs):
    (split,) = node.inputs
    return g[:, :split], g[:, split:]


def _vstack_back(node, g, xs):
    bounds = np.cumsum((0,) + node.inputs)
    return tuple(g[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))


def _softmax_back(node, g, xs):
    y = node.value
    return (y * (g - (g * y).sum(axis=1, keepdims=True)),)


def _log_softmax_back(node, g, xs):
    y = np.exp(node.value)
    return (g - y * g.sum(axis=1, keepdims=True),)


def _log_back(node, g, xs):
    x = xs[0]
    return (np.where(x > LOG_CLAMP, g / np.maximum(x, LOG_CLAMP), 0.0),)


def _pick_back(node, g, xs):
    (idx,) = node.inputs
    out = np.zeros_like(xs[0])
    out[np.arange(len(idx)), idx] = g[:, 0]
    return (out,)


def _normalize_back(node, g, xs):
    (norms,) = node.inputs
    y = node.value
    return ((g - y * (g * y).sum(axis=1, keepdims=True)) / norms,)


BACKWARD_RULES: dict[Op, Callable[[TapeNode, np.ndarray, list[np.ndarray]], tuple]] = {
    Op.MATMUL: _matmul_back,
    Op.ADD: lambda node, g, xs: (g, g),
    Op.SUB: lambda node, g, xs: (g, -g),
    Op.MUL: lambda node, g, xs: (g * xs[1], g * xs[0]),
    Op.SCALE: lambda node, g, xs: (g * node.inputs[0],),
    Op.RELU: _relu_back,
    Op.TANH: _tanh_back,
    Op.TRANSPOSE: lambda node, g, xs: (g.T,),
    Op.COLSUM: _colsum_back,
    Op.SUM: _sum_back,
    Op.HCAT: _hcat_back,
    Op.VSTACK: _vstack_back,
    Op.SOFTMAX: _softmax_back,
    Op.LOG_SOFTMAX: _log_softmax_back,
    Op.EXP: lambda node, g, xs: (g * node.value,),
    Op.LOG: _log_back,
    Op.PICK: _pick_back,
    Op.NORMALIZE: _normalize_back,
}


def _loss_value(closure, params: Mapping[str, np.ndarray], dtype=np.float64):
    tape = Tape(dtype)
    handles = {name: tape.param(name, value) for name, value in params.items()}
    return closure(tape, handles).value[0, 0]


def _central_difference(closure, work, name, idx, epsilon, dtype):
    value = work[name]
    orig = value[idx]
    value[idx] = orig + epsilon
    f_plus = _loss_value(closure, work, dtype)
    value[idx] = orig - epsilon
    f_minus = _loss_value(closure, work, dtype)
    value[idx] = orig
    return (f_plus - f_minus) / (2 * epsilon)


def _relative_error(g, fd) -> float:
    return float(abs(g - fd) / max(abs(g), abs(fd), 1e-8))


def grad_check_report(
    closure: Callable[[Tape, dict[str, Var]], Var],
    params: Mapping[str, np.ndarray],
    epsilon: float = 1e-6,
    refine_above: float | None = 1e-6,
) -> dict[str, float]:
    """Maximum relative gradient error per parameter.

    ``closure(tape, handles)`` must build the loss on ``tape`` from the parameter
    handles and return it.  Each entry is compared against the central difference
    ``(f(x+eps) - f(x-eps)) / 2eps`` using
    ``|g - g_fd| / max(|g|, |g_fd|, 1e-8)``.

    A float64 difference resolves gradients only down to roughly
    ``ulp(f) / 2eps``.  Entries whose error exceeds ``refine_above`` are
    therefore re-measured with the forward pass replayed in ``np.longdouble``
    and that measurement is reported instead.  ``refine_above=None`` disables
    the replay.
    """
    if not epsilon > 0:
        raise ContractError(f"epsilon must be positive, got {epsilon}")
    work = {name: as_matrix(value).copy() for name, value in params.items()}

    tape = Tape()
    handles = {name: tape.param(name, value) for name, value in work.items()}
    loss = closure(tape, handles)
    analytic = tape.backward(loss)
    if _loss_value(closure, work) != loss.value[0, 0]:
        raise ContractError("closure is not deterministic: repeated evaluation differs")

    extended = None
    report = {}
    for name, value in work.items():
        worst = 0.0
        g = analytic.get(name, np.zeros_like(value))
        for idx in np.ndindex(value.shape):
            err = _relative_error(g[idx], _central_difference(closure, work, name, idx, epsilon, np.float64))
            if refine_above is not None and err > refine_above:
                if extended is None:
                    extended = {k: v.astype(np.longdouble) for k, v in work.items()}
                fd = _central_difference(closure, extended, name, idx, np.longdouble(epsilon), np.longdouble)
                err = _relative_error(np.longdouble(g[idx]), fd)
            worst = max(worst, err)
        report[name] = worst
    return report


def grad_check(closure, params, epsilon: float = 1e-6, refine_above: float | None = 1e-6) -> float:
    """Largest relative error between analytic and finite-difference gradients."""
    report = grad_check_report(closure, params, epsilon, refine_above)
    return max(report.values(), default=0.0)
