"""Dense 2-D matrix math with tape-based reverse-mode differentiation.

Everything the model computes is expressed through the primitives on
:class:`Tape`. Each primitive validates shapes, checks the result for
NaN/Inf, and records a closure that propagates gradients to its inputs.
Calling :meth:`Tape.backward` on a scalar node replays the recorded ops
in exact reverse order and flushes leaf gradients into their
:class:`ParamStore` slots.

All values are float64 numpy arrays of shape (rows, cols); scalars are
(1, 1), row vectors (1, k). A tape is built per training step and
discarded; replaying a tape twice raises :class:`TapeError`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericFault, ShapeError, TapeError

Array = np.ndarray


def as_matrix(x) -> Array:
    """Coerce to a C-ordered float64 2-D array; scalars/vectors become rows."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got shape {a.shape}")
    return np.ascontiguousarray(a)


def _check_finite(value: Array, op: str) -> Array:
    if not np.all(np.isfinite(value)):
        raise NumericFault(f"non-finite values produced by '{op}'")
    return value


def sigmoid(x: Array) -> Array:
    """Numerically stable logistic function."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x: Array) -> Array:
    """log(1 + e^x) without overflow."""
    return np.logaddexp(0.0, x)


@dataclass
class Slot:
    """A named parameter: value, gradient accumulator, trainable flag."""

    value: Array
    grad: Array
    trainable: bool = True


class ParamStore:
    """Named trainable tensors with gradient accumulators."""

    def __init__(self) -> None:
        self._slots: dict[str, Slot] = {}

    def add(self, name: str, value, trainable: bool = True) -> Slot:
        if name in self._slots:
            raise ValueError(f"duplicate parameter name {name!r}")
        v = as_matrix(value)
        slot = Slot(value=v, grad=np.zeros_like(v), trainable=trainable)
        self._slots[name] = slot
        return slot

    def __getitem__(self, name: str) -> Slot:
        return self._slots[name]

    def __contains__(self, name: str) -> bool:
        return name in self._slots

    def names(self) -> list[str]:
        return list(self._slots)

    def items(self) -> Iterable[tuple[str, Slot]]:
        return self._slots.items()

    def trainable_items(self) -> list[tuple[str, Slot]]:
        return [(n, s) for n, s in self._slots.items() if s.trainable]

    def zero_grads(self) -> None:
        for slot in self._slots.values():
            slot.grad[...] = 0.0

    def state(self) -> dict[str, Array]:
        return {n: s.value.copy() for n, s in self._slots.items()}

    def load_state(self, state: dict[str, Array]) -> None:
        for name, value in state.items():
            slot = self._slots[name]
            v = as_matrix(value)
            if v.shape != slot.value.shape:
                raise ShapeError(f"state for {name!r} has shape {v.shape}, "
                                 f"expected {slot.value.shape}")
            slot.value[...] = v

    def copy(self) -> "ParamStore":
        other = ParamStore()
        for name, slot in self._slots.items():
            other.add(name, slot.value.copy(), trainable=slot.trainable)
        return other


def glorot_uniform(rng: np.random.Generator, rows: int, cols: int) -> Array:
    """Uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out))."""
    s = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-s, s, size=(rows, cols))


class Node:
    """A value on the tape. ``grad`` is filled during the backward pass."""

    __slots__ = ("value", "grad", "slot")

    def __init__(self, value: Array, slot: Slot | None = None):
        self.value = value
        self.grad: Array | None = None
        self.slot = slot

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape  # type: ignore[return-value]


def _accum(node: Node, g: Array) -> None:
    if node.grad is None:
        node.grad = g.copy()
    else:
        node.grad += g


class Tape:
    """Ordered record of primitive ops; replays them in reverse on backward.

    The computation must be built in program order (it always is here:
    every op's inputs are nodes created earlier), so reversing the record
    list is a valid topological order for the backward sweep.
    """

    def __init__(self) -> None:
        self._records: list[tuple[Node, Callable[[Array], None]]] = []
        self._leaves: list[Node] = []
        self._spent = False

    # -- leaves ------------------------------------------------------------

    def leaf(self, value, slot: Slot | None = None) -> Node:
        node = Node(as_matrix(value) if slot is None else slot.value, slot)
        self._leaves.append(node)
        return node

    def param(self, slot: Slot) -> Node:
        return self.leaf(slot.value, slot=slot)

    def constant(self, value) -> Node:
        return self.leaf(value, slot=None)

    # -- recording ---------------------------------------------------------

    def _emit(self, op: str, value: Array, backward: Callable[[Array], None]) -> Node:
        node = Node(_check_finite(value, op))
        self._records.append((node, backward))
        return node

    # -- primitives ----------------------------------------------------------

    def matmul(self, a: Node, b: Node) -> Node:
        if a.value.shape[1] != b.value.shape[0]:
            raise ShapeError(f"matmul: {a.value.shape} @ {b.value.shape}")
        value = a.value @ b.value

        def backward(g: Array) -> None:
            _accum(a, g @ b.value.T)
            _accum(b, a.value.T @ g)

        return self._emit("matmul", value, backward)

    def add(self, a: Node, b: Node) -> Node:
        if a.value.shape != b.value.shape:
            raise ShapeError(f"add: {a.value.shape} vs {b.value.shape}")
        value = a.value + b.value

        def backward(g: Array) -> None:
            _accum(a, g)
            _accum(b, g)

        return self._emit("add", value, backward)

    def sub(self, a: Node, b: Node) -> Node:
        return self.add(a, self.scale(b, -1.0))

    def add_bias(self, x: Node, b: Node) -> Node:
        if b.value.shape != (1, x.value.shape[1]):
            raise ShapeError(f"add_bias: bias {b.value.shape} for {x.value.shape}")
        value = x.value + b.value

        def backward(g: Array) -> None:
            _accum(x, g)
            _accum(b, g.sum(axis=0, keepdims=True))

        return self._emit("add_bias", value, backward)

    def hadamard(self, a: Node, b: Node) -> Node:
        if a.value.shape != b.value.shape:
            raise ShapeError(f"hadamard: {a.value.shape} vs {b.value.shape}")
        value = a.value * b.value

        def backward(g: Array) -> None:
            _accum(a, g * b.value)
            _accum(b, g * a.value)

        return self._emit("hadamard", value, backward)

    def transpose(self, x: Node) -> Node:
        value = np.ascontiguousarray(x.value.T)

        def backward(g: Array) -> None:
            _accum(x, g.T)

        return self._emit("transpose", value, backward)

    def scale(self, x: Node, c: float) -> Node:
        if not np.isfinite(c):
            raise NumericFault("scale by non-finite constant")
        value = x.value * c

        def backward(g: Array) -> None:
            _accum(x, g * c)

        return self._emit("scale", value, backward)

    def scalar_mul(self, x: Node, s: Node) -> Node:
        """Multiply a matrix by a (1, 1) node, differentiable in both."""
        if s.value.shape != (1, 1):
            raise ShapeError(f"scalar_mul: scalar has shape {s.value.shape}")
        value = x.value * s.value[0, 0]

        def backward(g: Array) -> None:
            _accum(x, g * s.value[0, 0])
            _accum(s, np.array([[float(np.sum(g * x.value))]]))

        return self._emit("scalar_mul", value, backward)

    def sigmoid(self, x: Node) -> Node:
        value = sigmoid(x.value)

        def backward(g: Array) -> None:
            _accum(x, g * value * (1.0 - value))

        return self._emit("sigmoid", value, backward)

    def tanh(self, x: Node) -> Node:
        value = np.tanh(x.value)

        def backward(g: Array) -> None:
            _accum(x, g * (1.0 - value * value))

        return self._emit("tanh", value, backward)

    def relu(self, x: Node) -> Node:
        value = np.maximum(x.value, 0.0)

        def backward(g: Array) -> None:
            _accum(x, g * (x.value > 0.0))

        return self._emit("relu", value, backward)

    def softplus(self, x: Node) -> Node:
        value = softplus(x.value)

        def backward(g: Array) -> None:
            _accum(x, g * sigmoid(x.value))

        return self._emit("softplus", value, backward)

    def softmax_vec(self, x: Node) -> Node:
        """Softmax of a (1, m) row vector with max-subtraction."""
        if x.value.shape[0] != 1:
            raise ShapeError(f"softmax_vec expects a row vector, got {x.value.shape}")
        z = x.value - x.value.max()
        e = np.exp(z)
        value = e / e.sum()

        def backward(g: Array) -> None:
            dot = float((g * value).sum())
            _accum(x, value * (g - dot))

        return self._emit("softmax_vec", value, backward)

    def logsumexp_rows(self, x: Node) -> Node:
        """Row-wise log(sum(exp)), (n, m) -> (n, 1)."""
        m = x.value.max(axis=1, keepdims=True)
        value = m + np.log(np.exp(x.value - m).sum(axis=1, keepdims=True))

        def backward(g: Array) -> None:
            _accum(x, g * np.exp(x.value - value))

        return self._emit("logsumexp_rows", value, backward)

    def mean_rows(self, x: Node) -> Node:
        """Column-wise mean, (n, k) -> (1, k)."""
        n = x.value.shape[0]
        value = x.value.mean(axis=0, keepdims=True)

        def backward(g: Array) -> None:
            _accum(x, np.broadcast_to(g / n, x.value.shape))

        return self._emit("mean_rows", value, backward)

    def row_sums(self, x: Node) -> Node:
        """Row-wise sum, (n, k) -> (n, 1)."""
        value = x.value.sum(axis=1, keepdims=True)

        def backward(g: Array) -> None:
            _accum(x, np.broadcast_to(g, x.value.shape))

        return self._emit("row_sums", value, backward)

    def sum_all(self, x: Node) -> Node:
        value = np.array([[float(x.value.sum())]])

        def backward(g: Array) -> None:
            _accum(x, np.full_like(x.value, g[0, 0]))

        return self._emit("sum_all", value, backward)

    def mean_all(self, x: Node) -> Node:
        n = x.value.size
        value = np.array([[float(x.value.sum()) / n]])

        def backward(g: Array) -> None:
            _accum(x, np.full_like(x.value, g[0, 0] / n))

        return self._emit("mean_all", value, backward)

    def gather_rows(self, x: Node, idx) -> Node:
        idx = np.asarray(idx, dtype=np.intp)
        if idx.ndim != 1:
            raise ShapeError("gather_rows expects a 1-D index array")
        if idx.size and (idx.min() < 0 or idx.max() >= x.value.shape[0]):
            raise ShapeError("gather_rows: index out of range")
        value = x.value[idx]

        def backward(g: Array) -> None:
            out = np.zeros_like(x.value)
            np.add.at(out, idx, g)
            _accum(x, out)

        return self._emit("gather_rows", value, backward)

    def pick(self, x: Node, i: int, j: int) -> Node:
        """Extract entry (i, j) as a (1, 1) node."""
        if not (0 <= i < x.value.shape[0] and 0 <= j < x.value.shape[1]):
            raise ShapeError(f"pick({i}, {j}) out of range for {x.value.shape}")
        value = x.value[i:i + 1, j:j + 1].copy()

        def backward(g: Array) -> None:
            out = np.zeros_like(x.value)
            out[i, j] = g[0, 0]
            _accum(x, out)

        return self._emit("pick", value, backward)

    def concat_cols(self, xs: Sequence[Node]) -> Node:
        """Stack (1, 1) scalars into a (1, m) row vector."""
        for x in xs:
            if x.value.shape != (1, 1):
                raise ShapeError("concat_cols expects (1, 1) nodes")
        value = np.array([[x.value[0, 0] for x in xs]])
        nodes = list(xs)

        def backward(g: Array) -> None:
            for j, x in enumerate(nodes):
                _accum(x, g[:, j:j + 1])

        return self._emit("concat_cols", value, backward)

    # -- backward ------------------------------------------------------------

    def backward(self, loss: Node) -> None:
        """Accumulate d(loss)/d(slot) into every leaf slot's gradient."""
        if self._spent:
            raise TapeError("tape already replayed; build a fresh tape per step")
        if loss.value.shape != (1, 1):
            raise ShapeError(f"backward needs a (1, 1) loss, got {loss.value.shape}")
        self._spent = True
        loss.grad = np.ones((1, 1))
        for node, backward_fn in reversed(self._records):
            if node.grad is not None:
                backward_fn(node.grad)
        for leaf in self._leaves:
            if leaf.slot is not None and leaf.grad is not None:
                leaf.slot.grad += leaf.grad


@dataclass
class GradCheckRow:
    name: str
    max_rel_error: float
    passed: bool


@dataclass
class GradCheckReport:
    rows: list[GradCheckRow]
    eps: float
    tolerance: float

    @property
    def max_rel_error(self) -> float:
        return max((r.max_rel_error for r in self.rows), default=0.0)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def format(self) -> str:
        lines = [f"{'parameter':<28}{'max_rel_err':>14}  status"]
        for r in self.rows:
            lines.append(f"{r.name:<28}{r.max_rel_error:>14.3e}  "
                         f"{'ok' if r.passed else 'FAIL'}")
        return "\n".join(lines)


def check_gradients(params: ParamStore,
                    loss_fn: Callable[[ParamStore, Tape], Node],
                    eps: float = 1e-5,
                    tolerance: float = 1e-4) -> GradCheckReport:
    """Compare tape gradients against central finite differences.

    ``loss_fn(params, tape)`` must rebuild the same scalar loss from the
    current parameter values (it is re-evaluated with perturbed entries,
    so any sampling inside must be frozen by the caller).
    """
    tape = Tape()
    loss = loss_fn(params, tape)
    params.zero_grads()
    tape.backward(loss)
    analytic = {name: slot.grad.copy() for name, slot in params.trainable_items()}

    def eval_loss() -> float:
        return float(loss_fn(params, Tape()).value[0, 0])

    rows = []
    for name, slot in params.trainable_items():
        value = slot.value
        fd = np.zeros_like(value)
        flat = value.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = eval_loss()
            flat[i] = orig - eps
            f_minus = eval_loss()
            flat[i] = orig
            fd_flat[i] = (f_plus - f_minus) / (2.0 * eps)
        a = analytic[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(fd)), 1e-6)
        max_rel = float((np.abs(a - fd) / denom).max()) if a.size else 0.0
        rows.append(GradCheckRow(name, max_rel, max_rel < tolerance))
    return GradCheckReport(rows=rows, eps=eps, tolerance=tolerance)
