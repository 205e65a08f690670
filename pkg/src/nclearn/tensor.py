"""Dense float64 tensors with reverse-mode automatic differentiation.

The graph is dynamic: every operation on a tensor that requires gradients
records its parents and a closure mapping the output gradient to parent
gradients.  ``backward`` walks the recorded nodes in reverse construction
order.

Broadcasting is deliberately narrow.  A binary operation is accepted when the
two shapes are equal, when one operand is a scalar, or when one operand
broadcasts (numpy rules) into the exact shape of the other, e.g. a bias row
``[n]`` or ``[B, 1, n]`` against ``[B, m, n]``.  Shapes where *both* operands
would have to be expanded are rejected.

Example::

    >>> x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    >>> (x * x).sum().backward()
    >>> x.grad
    array([2., 4., 6.])
"""
from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError

_counter = itertools.count()

Backward = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    if lead > 0:
        grad = grad.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(op: str, a: tuple, b: tuple) -> tuple:
    if a == b:
        return a
    try:
        out = np.broadcast_shapes(a, b)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast shapes {a} and {b}") from None
    if out != a and out != b:
        raise DimensionError(
            f"{op}: shapes {a} and {b} would both need expanding; "
            "only one-sided broadcasting is supported"
        )
    return out


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_seq", "name")

    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple = ()
        self._backward: Backward | None = None
        self._seq = next(_counter)
        self.name = name

    # ------------------------------------------------------------------ basics
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    @staticmethod
    def _make(data: np.ndarray, parents: tuple, backward: Backward) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out._seq = next(_counter)
        out.name = None
        live = any(p.requires_grad for p in parents)
        out.requires_grad = live
        if live:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    # ------------------------------------------------------------- arithmetic
    def _binary(self, other, op: str):
        if not isinstance(other, Tensor):
            other = np.asarray(other, dtype=np.float64)
            if other.ndim == 0:
                return self._scalar(op, float(other))
            other = Tensor(other)
        return _BINARY[op](self, other)

    def _scalar(self, op: str, c: float) -> "Tensor":
        x = self.data
        if op == "add":
            return Tensor._make(x + c, (self,), lambda g: (g,))
        if op == "sub":
            return Tensor._make(x - c, (self,), lambda g: (g,))
        if op == "rsub":
            return Tensor._make(c - x, (self,), lambda g: (-g,))
        if op == "mul":
            return Tensor._make(x * c, (self,), lambda g: (g * c,))
        if op == "div":
            return Tensor._make(x / c, (self,), lambda g: (g / c,))
        if op == "rdiv":
            out = c / x
            return Tensor._make(out, (self,), lambda g: (-g * out / x,))
        raise ValueError(op)

    def __add__(self, other):
        return self._binary(other, "add")

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, "sub")

    def __rsub__(self, other):
        if isinstance(other, Tensor):
            return other._binary(self, "sub")
        other = np.asarray(other, dtype=np.float64)
        if other.ndim == 0:
            return self._scalar("rsub", float(other))
        return Tensor(other)._binary(self, "sub")

    def __mul__(self, other):
        return self._binary(other, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, "div")

    def __rtruediv__(self, other):
        if isinstance(other, Tensor):
            return other._binary(self, "div")
        other = np.asarray(other, dtype=np.float64)
        if other.ndim == 0:
            return self._scalar("rdiv", float(other))
        return Tensor(other)._binary(self, "div")

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, p):
        if isinstance(p, Tensor):
            raise ContractError("only scalar exponents are supported")
        p = float(p)
        if p == 2.0:
            return self.square()
        x = self.data
        return Tensor._make(x ** p, (self,), lambda g: (g * p * x ** (p - 1.0),))

    def __matmul__(self, other):
        return matmul(self, other)

    # ------------------------------------------------------------ elementwise
    def _unary(self, out: np.ndarray, local: "np.ndarray | Callable[[], np.ndarray]") -> "Tensor":
        """Elementwise op whose derivative is ``local`` (array or thunk)."""
        if callable(local):
            return Tensor._make(out, (self,), lambda g: (g * local(),))
        return Tensor._make(out, (self,), lambda g: (g * local,))

    def relu(self) -> "Tensor":
        x = self.data
        return self._unary(np.maximum(x, 0.0), lambda: (x > 0).astype(np.float64))

    def tanh(self) -> "Tensor":
        out = np.tanh(self.data)
        return self._unary(out, lambda: 1.0 - out * out)

    def sigmoid(self) -> "Tensor":
        x = self.data
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return self._unary(out, lambda: out * (1.0 - out))

    def exp(self) -> "Tensor":
        out = np.exp(self.data)
        return self._unary(out, out)

    def log(self) -> "Tensor":
        x = self.data
        return self._unary(np.log(x), lambda: 1.0 / x)

    def square(self) -> "Tensor":
        x = self.data
        return self._unary(x * x, lambda: 2.0 * x)

    def abs(self) -> "Tensor":
        x = self.data
        return self._unary(np.abs(x), lambda: np.sign(x))

    def sqrt(self) -> "Tensor":
        out = np.sqrt(self.data)
        return self._unary(out, lambda: 0.5 / out)

    def clip_min(self, floor: float) -> "Tensor":
        """``max(x, floor)``; zero gradient where the floor is active."""
        x = self.data
        return self._unary(np.maximum(x, floor), lambda: (x >= floor).astype(np.float64))

    # -------------------------------------------------------------- reductions
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        shape = self.shape
        out = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return Tensor._make(np.asarray(out), (self,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            n = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            n = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # ------------------------------------------------------------------ shape
    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return Tensor._make(self.data.reshape(shape), (self,), lambda g: (g.reshape(old),))

    def permute(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = tuple(np.argsort(axes))
        return Tensor._make(self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),))

    def swapaxes(self, a: int, b: int) -> "Tensor":
        return Tensor._make(self.data.swapaxes(a, b), (self,), lambda g: (g.swapaxes(a, b),))

    @property
    def T(self) -> "Tensor":
        return self.swapaxes(-1, -2)

    def __getitem__(self, index) -> "Tensor":
        shape = self.shape

        def backward(g):
            full = np.zeros(shape)
            np.add.at(full, index, g)
            return (full,)

        return Tensor._make(np.array(self.data[index]), (self,), backward)

    # ---------------------------------------------------------------- softmax
    def softmax(self, axis: int = -1) -> "Tensor":
        x = self.data
        if np.isnan(x).any():
            raise NumericError("softmax received NaN input")
        z = np.exp(x - x.max(axis=axis, keepdims=True))
        out = z / z.sum(axis=axis, keepdims=True)

        def backward(g):
            return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

        return Tensor._make(out, (self,), backward)

    def log_softmax(self, axis: int = -1) -> "Tensor":
        x = self.data
        if np.isnan(x).any():
            raise NumericError("log_softmax received NaN input")
        shifted = x - x.max(axis=axis, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        out = shifted - lse

        def backward(g):
            p = np.exp(out)
            return (g - p * g.sum(axis=axis, keepdims=True),)

        return Tensor._make(out, (self,), backward)

    # --------------------------------------------------------------- backward
    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf.

        Calling it twice on the same graph adds the gradients twice; callers
        zero leaf gradients between steps.
        """
        if grad is None:
            if self.data.size != 1:
                raise ContractError(
                    f"backward() needs a scalar loss, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            return

        nodes = []
        seen = {id(self)}
        stack = [self]
        while stack:
            node = stack.pop()
            nodes.append(node)
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    seen.add(id(p))
                    stack.append(p)
        nodes.sort(key=lambda n: n._seq, reverse=True)

        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in nodes:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pg = _unbroadcast(pg, parent.shape)
                key = id(parent)
                prev = grads.get(key)
                grads[key] = pg if prev is None else prev + pg


# ----------------------------------------------------------------- binary ops
def _add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("add", a.shape, b.shape)
    return Tensor._make(a.data + b.data, (a, b), lambda g: (g, g))


def _sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("sub", a.shape, b.shape)
    return Tensor._make(a.data - b.data, (a, b), lambda g: (g, -g))


def _mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("mul", a.shape, b.shape)
    x, y = a.data, b.data

    def backward(g):
        return (g * y if a.requires_grad else None, g * x if b.requires_grad else None)

    return Tensor._make(x * y, (a, b), backward)


def _div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("div", a.shape, b.shape)
    x, y = a.data, b.data
    out = x / y

    def backward(g):
        return (g / y if a.requires_grad else None, -g * out / y if b.requires_grad else None)

    return Tensor._make(out, (a, b), backward)


_BINARY = {"add": _add, "sub": _sub, "mul": _mul, "div": _div}


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes.

    ``a`` is ``[..., m, k]``.  ``b`` is either a shared matrix ``[k, n]`` or a
    stack ``[..., k, n]`` with exactly the leading axes of ``a``.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs matrices, got shapes {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul inner dimensions differ: {a.shape} @ {b.shape}"
        )
    if b.ndim > 2 and b.shape[:-2] != a.shape[:-2]:
        raise DimensionError(
            f"matmul batch axes differ: {a.shape} @ {b.shape}"
        )
    x, y = a.data, b.data
    shared = b.ndim == 2 and a.ndim > 2
    if shared:
        # one large GEMM instead of a stack of small ones
        k, n = y.shape
        out = (x.reshape(-1, k) @ y).reshape(*x.shape[:-1], n)
    else:
        out = x @ y

    def backward(g):
        ga = gb = None
        if shared:
            g2 = g.reshape(-1, n)
            if a.requires_grad:
                ga = (g2 @ y.T).reshape(x.shape)
            if b.requires_grad:
                gb = x.reshape(-1, k).T @ g2
        else:
            if a.requires_grad:
                ga = g @ y.swapaxes(-1, -2)
            if b.requires_grad:
                gb = x.swapaxes(-1, -2) @ g
        return ga, gb

    return Tensor._make(out, (a, b), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat along axis {axis} failed for shapes {shapes}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return np.split(g, bounds, axis=axis)

    return Tensor._make(out, tuple(tensors), backward)


_UNARY = {
    "relu": Tensor.relu,
    "exp": Tensor.exp,
    "log": Tensor.log,
    "square": Tensor.square,
    "abs": Tensor.abs,
    "tanh": Tensor.tanh,
    "sigmoid": Tensor.sigmoid,
}


def elementwise(op: str, *args) -> Tensor:
    """Dispatch an elementwise op by name (``add``, ``relu``, ...)."""
    if op in _BINARY:
        a, b = args
        return as_tensor(a)._binary(b, op)
    try:
        fn = _UNARY[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    (a,) = args
    return fn(as_tensor(a))


def zero_grads(params) -> None:
    for p in _iter_params(params):
        p.grad = None


def _iter_params(params):
    if isinstance(params, dict):
        return params.values()
    return params
