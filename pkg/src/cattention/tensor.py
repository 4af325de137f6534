"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation computes its forward value eagerly with numpy and, when any
input participates in gradient computation, records a backward rule on the
output node. ``Tensor.backward()`` replays those rules in reverse topological
order, populating ``grad`` on every ``requires_grad`` leaf. Graphs are
single-use: backward releases the recorded rules.

Only the shapes the network layers need are supported (vectors and matrices,
broadcasting limited to numpy's rules on those ranks).
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import ShapeError


def as_tensor(value) -> "Tensor":
    """Wrap a scalar/array in a non-differentiable Tensor, pass Tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` over axes that numpy broadcasting introduced or stretched."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A float64 array plus the bookkeeping for reverse-mode gradients."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_rule")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward_rule = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _record(data: np.ndarray, parents: Sequence["Tensor"], rule) -> "Tensor":
        out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward_rule = rule
        return out

    def backward(self) -> None:
        """Populate grad on every requires_grad leaf reachable from this scalar."""
        if self.data.size != 1:
            raise ShapeError(
                f"backward requires a scalar loss, got shape {self.shape}"
            )
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_rule is not None:
                node._backward_rule(node.grad)
        # The tape is single-use: drop rules so the graph can be collected.
        for node in order:
            node._backward_rule = None
            node._parents = ()

    # -- elementwise arithmetic ----------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        data = self.data + other.data

        def rule(g):
            self._accumulate(_unbroadcast(g, self.data.shape))
            other._accumulate(_unbroadcast(g, other.data.shape))

        return Tensor._record(data, (self, other), rule)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        def rule(g):
            self._accumulate(-g)

        return Tensor._record(-self.data, (self,), rule)

    def __sub__(self, other) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        data = self.data * other.data

        def rule(g):
            self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        return Tensor._record(data, (self, other), rule)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> "Tensor":
        return self * (1.0 / float(scalar))

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data
        if a.ndim > 2 or b.ndim > 2 or a.ndim == 0 or b.ndim == 0:
            raise ShapeError(
                f"matmul supports vectors and matrices only, got {a.shape} @ {b.shape}"
            )
        if a.shape[-1] != b.shape[0]:
            raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
        data = a @ b

        def rule(g):
            if a.ndim == 1 and b.ndim == 2:
                self._accumulate(g @ b.T)
                other._accumulate(np.outer(a, g))
            elif a.ndim == 2 and b.ndim == 1:
                self._accumulate(np.outer(g, b))
                other._accumulate(a.T @ g)
            elif a.ndim == 1 and b.ndim == 1:
                self._accumulate(g * b)
                other._accumulate(g * a)
            else:
                self._accumulate(g @ b.T)
                other._accumulate(a.T @ g)

        return Tensor._record(data, (self, other), rule)

    # -- nonlinearities -------------------------------------------------------

    def relu(self) -> "Tensor":
        mask = self.data > 0.0

        def rule(g):
            self._accumulate(g * mask)

        return Tensor._record(np.where(mask, self.data, 0.0), (self,), rule)

    def tanh(self) -> "Tensor":
        out = np.tanh(self.data)

        def rule(g):
            self._accumulate(g * (1.0 - out * out))

        return Tensor._record(out, (self,), rule)

    def log(self) -> "Tensor":
        def rule(g):
            self._accumulate(g / self.data)

        return Tensor._record(np.log(self.data), (self,), rule)

    def clamp_min(self, floor: float) -> "Tensor":
        mask = self.data > floor

        def rule(g):
            self._accumulate(g * mask)

        return Tensor._record(np.maximum(self.data, floor), (self,), rule)

    def softmax(self) -> "Tensor":
        """Softmax along the last axis, stabilized by max subtraction."""
        shifted = self.data - self.data.max(axis=-1, keepdims=True)
        exp = np.exp(shifted)
        out = exp / exp.sum(axis=-1, keepdims=True)

        def rule(g):
            inner = (g * out).sum(axis=-1, keepdims=True)
            self._accumulate(out * (g - inner))

        return Tensor._record(out, (self,), rule)

    # -- reductions -----------------------------------------------------------

    def sum(self, axis: int | None = None) -> "Tensor":
        data = self.data.sum(axis=axis)

        def rule(g):
            if axis is None:
                self._accumulate(np.full_like(self.data, g))
            else:
                self._accumulate(np.broadcast_to(np.expand_dims(g, axis), self.data.shape).copy())

        return Tensor._record(data, (self,), rule)

    def mean(self, axis: int | None = None) -> "Tensor":
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) / count

    def max(self, axis: int = 0) -> tuple["Tensor", np.ndarray]:
        """Max over `axis` of a matrix, plus argmax indices (first max on ties)."""
        if self.data.ndim != 2 or axis != 0:
            raise ShapeError(f"max supports axis 0 of a matrix, got shape {self.shape}")
        idx = self.data.argmax(axis=0)
        cols = np.arange(self.data.shape[1])
        data = self.data[idx, cols]

        def rule(g):
            full = np.zeros_like(self.data)
            full[idx, cols] = g
            self._accumulate(full)

        return Tensor._record(data, (self,), rule), idx

    # -- shape handling ---------------------------------------------------------

    def reshape(self, *shape: int) -> "Tensor":
        def rule(g):
            self._accumulate(g.reshape(self.data.shape))

        return Tensor._record(self.data.reshape(*shape), (self,), rule)

    @property
    def T(self) -> "Tensor":
        if self.data.ndim != 2:
            raise ShapeError(f"transpose requires a matrix, got shape {self.shape}")

        def rule(g):
            self._accumulate(g.T)

        return Tensor._record(self.data.T, (self,), rule)

    def __getitem__(self, key) -> "Tensor":
        data = self.data[key]

        def rule(g):
            full = np.zeros_like(self.data)
            full[key] += g
            self._accumulate(full)

        return Tensor._record(np.array(data), (self,), rule)

    def windows(self, width: int) -> "Tensor":
        """All contiguous row windows of a matrix, flattened one per output row.

        For input [n x d], row w of the result is the concatenation of rows
        w..w+width-1, giving shape [n-width+1 x width*d].
        """
        if self.data.ndim != 2:
            raise ShapeError(f"windows requires a matrix, got shape {self.shape}")
        n, d = self.data.shape
        if width < 1 or width > n:
            raise ShapeError(f"window width {width} invalid for {n} rows")
        count = n - width + 1
        data = np.concatenate([self.data[i : i + count] for i in range(width)], axis=1)

        def rule(g):
            full = np.zeros_like(self.data)
            for i in range(width):
                full[i : i + count] += g[:, i * d : (i + 1) * d]
            self._accumulate(full)

        return Tensor._record(data, (self,), rule)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    """Concatenate tensors along `axis`, splitting the gradient back apart."""
    parts = tuple(tensors)
    sizes = [p.data.shape[axis] for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    offsets = np.cumsum([0] + sizes)

    def rule(g):
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            part._accumulate(g[tuple(sl)])

    return Tensor._record(data, parts, rule)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row of `x` to zero mean / unit variance, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mu) * inv_std
    data = x_hat * gain.data + bias.data

    def rule(g):
        lead = tuple(range(g.ndim - 1))
        gain._accumulate((g * x_hat).sum(axis=lead))
        bias._accumulate(g.sum(axis=lead))
        g_hat = g * gain.data
        x._accumulate(
            inv_std
            * (
                g_hat
                - g_hat.mean(axis=-1, keepdims=True)
                - x_hat * (g_hat * x_hat).mean(axis=-1, keepdims=True)
            )
        )

    return Tensor._record(data, (x, gain, bias), rule)
