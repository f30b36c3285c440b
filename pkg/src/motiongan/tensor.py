"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tensor` wraps a numpy array. Every op applied to a tensor that
requires gradients records its parents and a local backward rule, so the
graph is rebuilt on each forward pass. :func:`backward` walks that graph in
reverse topological order and accumulates ``d output / d leaf`` into the
``grad`` buffer of every leaf that requires gradients. Leaf gradients are
never reset implicitly; call :meth:`Tensor.zero_grad`.

Broadcasting is deliberately limited to scalar-with-tensor. Anything else
must go through :func:`broadcast_to` or :func:`reshape`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, EvaluationError

_EXP_CLAMP = 700.0


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward", "__weakref__")

    __array_priority__ = 100.0

    def __init__(self, data, requires_grad=False, *, _parents=(), _backward=None, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.op = op
        self._parents = _parents
        self._backward = _backward

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None if self.grad is None else np.zeros_like(self.data)

    def backward(self):
        return backward(self)

    # -- operator sugar ------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data):
    """Leaf tensor that accumulates gradients."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _node(data, parents, backward_fn, op):
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, _parents=tuple(parents), _backward=backward_fn, op=op)
    return Tensor(data, op=op)


# -- graph traversal -----------------------------------------------------------

@dataclass
class Graph:
    """Topologically ordered view of the nodes feeding ``outputs``."""

    nodes: list = field(default_factory=list)
    outputs: list = field(default_factory=list)

    @classmethod
    def from_outputs(cls, *outputs):
        order, seen = [], set()
        for out in outputs:
            if id(out) in seen or not out.requires_grad:
                continue
            stack = [(out, False)]
            while stack:
                node, expanded = stack.pop()
                if expanded:
                    order.append(node)
                    continue
                if id(node) in seen:
                    continue
                seen.add(id(node))
                stack.append((node, True))
                for parent in node._parents:
                    if parent.requires_grad and id(parent) not in seen:
                        stack.append((parent, False))
        return cls(order, list(outputs))


def backward(output, graph=None):
    """Accumulate d(output)/d(leaf) into every participating leaf.

    Returns a dict mapping ``id(leaf)`` to the gradient contributed by this
    call (the leaf's ``grad`` buffer also holds any earlier accumulation).
    """
    if not isinstance(output, Tensor) or output.size != 1:
        shape = getattr(output, "shape", type(output).__name__)
        raise ContractError(f"backward requires a scalar output, got shape {shape}")
    if not output.requires_grad:
        return {}
    if graph is None:
        graph = Graph.from_outputs(output)
    grads = {id(output): np.ones_like(output.data)}
    contributed = {}
    for node in reversed(graph.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            contributed[id(node)] = g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return contributed


# -- elementwise arithmetic ------------------------------------------------------

def _binary_operands(a, b, op):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}")
    return a, b


def _unbroadcast(g, shape):
    return np.sum(g).reshape(shape) if shape == () and g.shape != () else g


def add(a, b):
    a, b = _binary_operands(a, b, "add")
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b):
    a, b = _binary_operands(a, b, "sub")
    return _node(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b):
    a, b = _binary_operands(a, b, "mul")
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
                 "mul")


def div(a, b):
    a, b = _binary_operands(a, b, "div")
    if np.any(b.data == 0.0):
        raise EvaluationError("div: zero divisor")
    out = a.data / b.data
    return _node(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)),
                 "div")


def neg(x):
    x = as_tensor(x)
    return _node(-x.data, (x,), lambda g: (-g,), "neg")


def power(x, p):
    x = as_tensor(x)
    p = float(p)
    if p < 1.0 and np.any(x.data == 0.0):
        raise EvaluationError(f"power: exponent {p} undefined at zero")
    return _node(x.data ** p, (x,), lambda g: (g * p * x.data ** (p - 1.0),), "power")


def square(x):
    x = as_tensor(x)
    return _node(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,), "square")


def exp(x):
    x = as_tensor(x)
    out = np.exp(np.minimum(x.data, _EXP_CLAMP))
    return _node(out, (x,), lambda g: (g * out * (x.data <= _EXP_CLAMP),), "exp")


def log(x):
    x = as_tensor(x)
    if np.any(x.data <= 0.0):
        raise EvaluationError("log: non-positive input")
    return _node(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def sqrt(x):
    x = as_tensor(x)
    if np.any(x.data < 0.0):
        raise EvaluationError("sqrt: negative input")
    out = np.sqrt(x.data)

    def _bw(g):
        with np.errstate(divide="ignore"):
            return (np.where(out > 0.0, g / (2.0 * np.where(out > 0.0, out, 1.0)), 0.0),)

    return _node(out, (x,), _bw, "sqrt")


def tanh(x):
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _node(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(x):
    x = as_tensor(x)
    d = x.data
    # split by sign to avoid overflow in exp
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _node(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def unary(x, value, derivative, op):
    """Elementwise op from a value function and its pointwise derivative."""
    x = as_tensor(x)
    return _node(value(x.data), (x,), lambda g: (g * derivative(x.data),), op)


# -- linear algebra --------------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ok = (a.ndim == b.ndim == 2 and a.shape[1] == b.shape[0]) or (
        a.ndim == b.ndim == 3 and a.shape[0] == b.shape[0] and a.shape[2] == b.shape[1])
    if not ok:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def _bw(g):
        return (g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None,
                np.swapaxes(a.data, -1, -2) @ g if b.requires_grad else None)

    return _node(a.data @ b.data, (a, b), _bw, "matmul")


def cross(a, b):
    """Cross product along the last axis (size 3)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape or a.shape[-1:] != (3,):
        raise DimensionError(f"cross: incompatible shapes {a.shape} and {b.shape}")
    return _node(np.cross(a.data, b.data), (a, b),
                 lambda g: (np.cross(b.data, g), np.cross(g, a.data)), "cross")


# -- shape manipulation ----------------------------------------------------------

def reshape(x, shape):
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot reshape {x.shape} to {tuple(shape)}") from None
    return _node(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes=None):
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError(f"transpose: axes {axes} invalid for shape {x.shape}")
    inverse = tuple(np.argsort(axes))
    return _node(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),),
                 "transpose")


def getitem(x, index):
    x = as_tensor(x)
    out = x.data[index]

    def _bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _node(np.array(out, dtype=np.float64), (x,), _bw, "slice")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError(
            f"concat: incompatible shapes {[t.shape for t in tensors]} on axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _node(out, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)), "concat")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError(f"stack: incompatible shapes {[t.shape for t in tensors]}") from None
    n = len(tensors)
    return _node(out, tensors,
                 lambda g: tuple(np.squeeze(p, axis=axis) for p in np.split(g, n, axis=axis)),
                 "stack")


def broadcast_to(x, shape):
    """Explicit broadcast; gradient is summed back over the expanded axes."""
    x = as_tensor(x)
    shape = tuple(shape)
    try:
        out = np.broadcast_to(x.data, shape)
    except ValueError:
        raise DimensionError(f"broadcast_to: cannot broadcast {x.shape} to {shape}") from None
    lead = len(shape) - x.ndim
    expanded = tuple(range(lead)) + tuple(
        lead + i for i, n in enumerate(x.shape) if n == 1 and shape[lead + i] != 1)

    def _bw(g):
        return (np.sum(g, axis=expanded, keepdims=True).reshape(x.shape),)

    return _node(np.array(out), (x,), _bw, "broadcast")


# -- reductions ------------------------------------------------------------------

def _expand(g, shape, axis, keepdims):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def tsum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)
    return _node(out, (x,), lambda g: (np.array(_expand(g, x.shape, axis, keepdims)),), "sum")


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = np.mean(x.data, axis=axis, keepdims=keepdims)
    n = x.size / max(out.size, 1)
    return _node(out, (x,), lambda g: (np.array(_expand(g, x.shape, axis, keepdims)) / n,), "mean")


def tmax(x, axis):
    """Max along one axis; the gradient flows to the first maximiser."""
    x = as_tensor(x)
    idx = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    out = np.take_along_axis(x.data, idx, axis=axis).squeeze(axis)

    def _bw(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, idx, np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _node(out, (x,), _bw, "max")


def softmax(x, axis=-1):
    x = as_tensor(x)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)
    return _node(out, (x,),
                 lambda g: (out * (g - np.sum(g * out, axis=axis, keepdims=True)),), "softmax")


def l2norm(x, axis=None, keepdims=False):
    """Euclidean norm; the subgradient at the origin is taken as zero."""
    x = as_tensor(x)
    out = np.sqrt(np.sum(x.data * x.data, axis=axis, keepdims=keepdims))

    def _bw(g):
        n = _expand(out, x.shape, axis, keepdims)
        safe = np.where(n > 0.0, n, 1.0)
        return (np.where(n > 0.0, _expand(g, x.shape, axis, keepdims) * x.data / safe, 0.0),)

    return _node(out, (x,), _bw, "l2norm")


# -- op registry -------------------------------------------------------------------

OPS = {
    "add": add, "sub": sub, "mul": mul, "div": div, "neg": neg, "power": power,
    "square": square, "exp": exp, "log": log, "sqrt": sqrt, "tanh": tanh,
    "sigmoid": sigmoid, "matmul": matmul, "cross": cross, "reshape": reshape,
    "transpose": transpose, "slice": getitem, "concat": concat, "stack": stack,
    "broadcast": broadcast_to, "sum": tsum, "mean": mean, "max": tmax,
    "softmax": softmax, "l2norm": l2norm,
}


def forward_op(kind, *inputs, **kwargs):
    """Dispatch an op by name, e.g. ``forward_op("softmax", x, axis=0)``."""
    try:
        fn = OPS[kind]
    except KeyError:
        raise ContractError(f"unknown op kind {kind!r}") from None
    return fn(*inputs, **kwargs)
