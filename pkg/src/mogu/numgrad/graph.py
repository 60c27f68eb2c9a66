"""Dense tensor computation graph with reverse-mode differentiation.

Nodes are evaluated eagerly as they are appended, so a graph is also a tape:
``backward`` walks it once in reverse order.  Every value is a float64
``numpy.ndarray``.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

LN2 = math.log(2.0)


class GraphError(Exception):
    """Base class for graph evaluation failures."""


class ShapeError(GraphError, ValueError):
    def __init__(self, op: str, *shapes: tuple[int, ...]):
        self.op = op
        self.shapes = shapes
        joined = " and ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")


class NonFiniteError(GraphError, FloatingPointError):
    def __init__(self, op: str, where: str = "forward"):
        self.op = op
        super().__init__(f"{op}: non-finite value during {where}")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a, b)
    except ValueError:
        raise ShapeError(op, a, b) from None


class Tensor:
    """A node of a :class:`Graph`: an immutable value plus how it was made."""

    __slots__ = ("graph", "id", "op", "inputs", "data", "requires_grad", "_vjp", "name")

    def __init__(self, graph, op, inputs, data, requires_grad, vjp=None, name=None):
        self.graph = graph
        self.op = op
        self.inputs = inputs
        self.data = data
        self.requires_grad = requires_grad
        self._vjp = vjp
        self.name = name
        self.id = -1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, id={self.id}, shape={self.shape})"

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return self.graph.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.graph.sub(self, other)

    def __rsub__(self, other):
        return self.graph.sub(other, self)

    def __mul__(self, other):
        return self.graph.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.graph.mul(self, self.graph.reciprocal(self.graph.lift(other)))

    def __rtruediv__(self, other):
        return self.graph.mul(other, self.graph.reciprocal(self))

    def __neg__(self):
        return self.graph.mul(self, -1.0)

    def __matmul__(self, other):
        return self.graph.matmul(self, other)

    def __rmatmul__(self, other):
        return self.graph.matmul(other, self)

    def __getitem__(self, index):
        return self.graph.slice(self, index)

    # unary shortcuts ---------------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        return self.graph.sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return self.graph.mean(self, axis, keepdims)

    def square(self):
        return self.graph.square(self)

    def exp(self):
        return self.graph.exp(self)

    def log(self):
        return self.graph.log(self)

    def tanh(self):
        return self.graph.tanh(self)

    def softplus2(self):
        return self.graph.softplus2(self)

    def reciprocal(self):
        return self.graph.reciprocal(self)

    def clamp_min(self, floor: float):
        return self.graph.clamp_min(self, floor)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return self.graph.reshape(self, shape)

    def broadcast_to(self, shape):
        return self.graph.broadcast_to(self, tuple(shape))

    def softmax(self, axis=-1):
        return self.graph.softmax(self, axis)

    def logsumexp(self, axis=-1, keepdims=False):
        return self.graph.logsumexp(self, axis, keepdims)

    def detach(self):
        return self.graph.detach(self)


class Graph:
    """Append-only list of nodes; parameters are named trainable leaves.

    >>> g = Graph()
    >>> x = g.parameter("x", [1.0, 2.0])
    >>> (x + x).data
    array([2., 4.])
    """

    def __init__(self) -> None:
        self.nodes: list[Tensor] = []
        self.parameters: dict[str, Tensor] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    # leaves -------------------------------------------------------------------
    def _append(self, node: Tensor) -> Tensor:
        if not np.all(np.isfinite(node.data)):
            raise NonFiniteError(node.op)
        node.id = len(self.nodes)
        self.nodes.append(node)
        return node

    def constant(self, value, name: str | None = None) -> Tensor:
        data = np.array(value, dtype=np.float64)
        return self._append(Tensor(self, "const", (), data, False, name=name))

    def parameter(self, name: str, value) -> Tensor:
        """Register a trainable leaf; re-registering a name returns the same node."""
        node = self.parameters.get(name)
        if node is not None:
            return node
        data = np.array(value, dtype=np.float64)
        node = self._append(Tensor(self, "param", (), data, True, name=name))
        self.parameters[name] = node
        return node

    def lift(self, value) -> Tensor:
        if isinstance(value, Tensor):
            if value.graph is not self:
                raise GraphError("tensor belongs to a different graph")
            return value
        return self.constant(value)

    def _op(self, op: str, inputs: Sequence[Tensor], data: np.ndarray, vjp: Callable) -> Tensor:
        requires = any(t.requires_grad for t in inputs)
        data = np.asarray(data, dtype=np.float64)
        return self._append(Tensor(self, op, tuple(inputs), data, requires, vjp if requires else None))

    # elementwise binary ----------------------------------------------------------
    def add(self, a, b) -> Tensor:
        a, b = self.lift(a), self.lift(b)
        _broadcast_shape("add", a.shape, b.shape)
        sa, sb = a.shape, b.shape
        return self._op("add", (a, b), a.data + b.data,
                        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))

    def sub(self, a, b) -> Tensor:
        a, b = self.lift(a), self.lift(b)
        _broadcast_shape("sub", a.shape, b.shape)
        sa, sb = a.shape, b.shape
        return self._op("sub", (a, b), a.data - b.data,
                        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))

    def mul(self, a, b) -> Tensor:
        a, b = self.lift(a), self.lift(b)
        _broadcast_shape("mul", a.shape, b.shape)
        ad, bd = a.data, b.data
        return self._op("mul", (a, b), ad * bd,
                        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))

    def matmul(self, a, b) -> Tensor:
        """Matrix product with numpy's batch broadcasting over leading axes."""
        a, b = self.lift(a), self.lift(b)
        if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeError("matmul", a.shape, b.shape)
        try:
            np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
        except ValueError:
            raise ShapeError("matmul", a.shape, b.shape) from None
        ad, bd = a.data, b.data

        def vjp(g):
            ga = g @ np.swapaxes(bd, -1, -2)
            gb = np.swapaxes(ad, -1, -2) @ g
            return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

        return self._op("matmul", (a, b), ad @ bd, vjp)

    # reductions -------------------------------------------------------------------
    def sum(self, a, axis=None, keepdims=False) -> Tensor:
        a = self.lift(a)
        shape = a.shape
        out = a.data.sum(axis=axis, keepdims=keepdims)

        def vjp(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return self._op("sum", (a,), out, vjp)

    def mean(self, a, axis=None, keepdims=False) -> Tensor:
        a = self.lift(a)
        shape = a.shape
        out = a.data.mean(axis=axis, keepdims=keepdims)
        count = a.size / max(out.size, 1)

        def vjp(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g / count, shape).copy(),)

        return self._op("mean", (a,), out, vjp)

    # elementwise unary ---------------------------------------------------------
    def square(self, a) -> Tensor:
        a = self.lift(a)
        ad = a.data
        return self._op("square", (a,), ad * ad, lambda g: (2.0 * ad * g,))

    def exp(self, a) -> Tensor:
        a = self.lift(a)
        with np.errstate(over="ignore"):
            out = np.exp(a.data)
        return self._op("exp", (a,), out, lambda g: (g * out,))

    def log(self, a) -> Tensor:
        a = self.lift(a)
        ad = a.data
        if np.any(ad <= 0):
            raise NonFiniteError("log")
        return self._op("log", (a,), np.log(ad), lambda g: (g / ad,))

    def tanh(self, a) -> Tensor:
        a = self.lift(a)
        out = np.tanh(a.data)
        return self._op("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))

    def softplus2(self, a) -> Tensor:
        """Base-2 softplus, ``log2(1 + exp(a))``."""
        a = self.lift(a)
        ad = a.data
        out = np.logaddexp(0.0, ad) / LN2
        # logistic sigmoid without overflow
        sig = np.exp(-np.logaddexp(0.0, -ad))
        return self._op("softplus2", (a,), out, lambda g: (g * sig / LN2,))

    def reciprocal(self, a) -> Tensor:
        a = self.lift(a)
        ad = a.data
        if np.any(ad == 0):
            raise NonFiniteError("reciprocal")
        out = 1.0 / ad
        return self._op("reciprocal", (a,), out, lambda g: (-g * out * out,))

    def clamp_min(self, a, floor: float) -> Tensor:
        """``max(a, floor)``; gradient passes where unclamped, zero where clamped."""
        a = self.lift(a)
        ad = a.data
        keep = ad >= floor
        return self._op("clamp_min", (a,), np.where(keep, ad, floor), lambda g: (g * keep,))

    def detach(self, a) -> Tensor:
        a = self.lift(a)
        return self._append(Tensor(self, "detach", (a,), a.data, False))

    # shape ops --------------------------------------------------------------------
    def slice(self, a, index) -> Tensor:
        a = self.lift(a)
        shape = a.shape
        try:
            out = a.data[index]
        except IndexError:
            raise ShapeError("slice", shape) from None

        def vjp(g):
            full = np.zeros(shape)
            np.add.at(full, index, g)
            return (full,)

        return self._op("slice", (a,), np.array(out), vjp)

    def reshape(self, a, shape) -> Tensor:
        a = self.lift(a)
        old = a.shape
        try:
            out = a.data.reshape(shape)
        except ValueError:
            raise ShapeError("reshape", old, tuple(shape)) from None
        return self._op("reshape", (a,), out, lambda g: (g.reshape(old),))

    def broadcast_to(self, a, shape) -> Tensor:
        a = self.lift(a)
        old = a.shape
        try:
            out = np.broadcast_to(a.data, shape).copy()
        except ValueError:
            raise ShapeError("broadcast", old, tuple(shape)) from None
        return self._op("broadcast", (a,), out, lambda g: (_unbroadcast(g, old),))

    def stack(self, tensors: Iterable, axis: int = 0) -> Tensor:
        ts = tuple(self.lift(t) for t in tensors)
        shapes = {t.shape for t in ts}
        if len(shapes) != 1:
            raise ShapeError("stack", *sorted(shapes))
        out = np.stack([t.data for t in ts], axis=axis)
        n = len(ts)

        def vjp(g):
            return tuple(np.take(g, i, axis=axis) for i in range(n))

        return self._op("stack", ts, out, vjp)

    # normalisers ------------------------------------------------------------------
    def softmax(self, a, axis: int = -1) -> Tensor:
        a = self.lift(a)
        z = a.data - a.data.max(axis=axis, keepdims=True)
        e = np.exp(z)
        out = e / e.sum(axis=axis, keepdims=True)

        def vjp(g):
            return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

        return self._op("softmax", (a,), out, vjp)

    def logsumexp(self, a, axis: int = -1, keepdims: bool = False) -> Tensor:
        a = self.lift(a)
        m = a.data.max(axis=axis, keepdims=True)
        e = np.exp(a.data - m)
        s = e.sum(axis=axis, keepdims=True)
        out_k = m + np.log(s)
        soft = e / s
        out = out_k if keepdims else np.squeeze(out_k, axis=axis)

        def vjp(g):
            if not keepdims:
                g = np.expand_dims(g, axis)
            return (g * soft,)

        return self._op("logsumexp", (a,), out, vjp)


def evaluate(graph: Graph, node) -> np.ndarray:
    """Value of ``node`` (a :class:`Tensor` or node id) in ``graph``."""
    if isinstance(node, Tensor):
        if node.graph is not graph:
            raise GraphError("node belongs to a different graph")
        return node.data
    return graph.nodes[node].data


def backward(graph: Graph, loss) -> dict[str, np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to every graph parameter.

    Parameters the loss does not depend on get a zero gradient.  Constants
    and other non-parameter leaves are not reported.
    """
    loss = graph.nodes[loss] if not isinstance(loss, Tensor) else loss
    if loss.size != 1:
        raise ShapeError("backward (loss must be scalar)", loss.shape)
    if not np.isfinite(loss.data).all():
        raise NonFiniteError("backward", "loss check")
    grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
    for node in reversed(graph.nodes[: loss.id + 1]):
        g = grads.pop(node.id, None) if node.op != "param" else grads.get(node.id)
        if g is None or node._vjp is None:
            continue
        for parent, pg in zip(node.inputs, node._vjp(g)):
            if not parent.requires_grad:
                continue
            if parent.id in grads:
                grads[parent.id] = grads[parent.id] + pg
            else:
                grads[parent.id] = pg
            if not np.all(np.isfinite(grads[parent.id])):
                raise NonFiniteError(node.op, "backward")
    out = {}
    for name, p in graph.parameters.items():
        g = grads.get(p.id)
        out[name] = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=np.float64).reshape(p.shape)
    return out
