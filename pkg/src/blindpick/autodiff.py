"""Reverse-mode automatic differentiation on float64 numpy arrays.

A Tensor wraps an ndarray and records the operation that produced it.
Calling backward() on a scalar loss walks the recorded graph once in
reverse topological order and accumulates gradients into every tensor
created with requires_grad=True. Binary ops follow numpy broadcasting;
their backward passes sum gradients back down to the operand shapes.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "concat",
    "gather_rows",
    "layer_norm",
    "softmax",
    "finite_difference",
]


def _unbroadcast(grad, shape):
    """Sum grad down to shape, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @classmethod
    def _op(cls, data, parents, backward):
        out = cls(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return "Tensor(shape=%s, grad=%s)" % (self.data.shape, self.requires_grad)

    # ------------------------------------------------------------------
    # arithmetic
    # ------------------------------------------------------------------

    def __add__(self, other):
        other = _as_tensor(other)
        a, b = self, other

        def backward(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return Tensor._op(a.data + b.data, (a, b), backward)

    __radd__ = __add__

    def __neg__(self):
        a = self
        return Tensor._op(-a.data, (a,), lambda g: (-g,))

    def __sub__(self, other):
        other = _as_tensor(other)
        a, b = self, other

        def backward(g):
            return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

        return Tensor._op(a.data - b.data, (a, b), backward)

    def __rsub__(self, other):
        return _as_tensor(other).__sub__(self)

    def __mul__(self, other):
        other = _as_tensor(other)
        a, b = self, other

        def backward(g):
            return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

        return Tensor._op(a.data * b.data, (a, b), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tensor(other)
        a, b = self, other

        def backward(g):
            ga = _unbroadcast(g / b.data, a.shape)
            gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
            return ga, gb

        return Tensor._op(a.data / b.data, (a, b), backward)

    def __rtruediv__(self, other):
        return _as_tensor(other).__truediv__(self)

    def __matmul__(self, other):
        other = _as_tensor(other)
        a, b = self, other
        if a.ndim < 2 or b.ndim < 2:
            raise ValueError("matmul operands must be at least 2-D")

        def backward(g):
            ga = _unbroadcast(g @ b.data.swapaxes(-1, -2), a.shape)
            gb = _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.shape)
            return ga, gb

        return Tensor._op(a.data @ b.data, (a, b), backward)

    def pow(self, exponent):
        a = self
        c = float(exponent)

        def backward(g):
            return (g * c * np.power(a.data, c - 1.0),)

        return Tensor._op(np.power(a.data, c), (a,), backward)

    __pow__ = pow

    # ------------------------------------------------------------------
    # elementwise nonlinearities
    # ------------------------------------------------------------------

    def exp(self):
        a = self
        out_data = np.exp(a.data)
        return Tensor._op(out_data, (a,), lambda g: (g * out_data,))

    def log(self):
        a = self
        return Tensor._op(np.log(a.data), (a,), lambda g: (g / a.data,))

    def sqrt(self):
        a = self
        out_data = np.sqrt(a.data)
        return Tensor._op(out_data, (a,), lambda g: (g * 0.5 / out_data,))

    def tanh(self):
        a = self
        out_data = np.tanh(a.data)
        return Tensor._op(out_data, (a,), lambda g: (g * (1.0 - out_data * out_data),))

    def sigmoid(self):
        a = self
        out_data = 1.0 / (1.0 + np.exp(-a.data))
        return Tensor._op(out_data, (a,), lambda g: (g * out_data * (1.0 - out_data),))

    def relu(self):
        a = self
        mask = a.data > 0.0
        return Tensor._op(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))

    # ------------------------------------------------------------------
    # reductions and shape ops
    # ------------------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        a = self

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape).copy(),)

        return Tensor._op(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)

    def mean(self, axis=None, keepdims=False):
        a = self
        n = a.size if axis is None else np.prod(
            [a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
        )

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape).copy() / n,)

        return Tensor._op(a.data.mean(axis=axis, keepdims=keepdims), (a,), backward)

    def reshape(self, *shape):
        a = self
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Tensor._op(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))

    def transpose(self, *axes):
        a = self
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(range(a.ndim))[::-1]
        inverse = tuple(np.argsort(axes))
        return Tensor._op(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))

    def swapaxes(self, i, j):
        a = self
        return Tensor._op(a.data.swapaxes(i, j), (a,), lambda g: (g.swapaxes(i, j),))

    # ------------------------------------------------------------------
    # backward pass
    # ------------------------------------------------------------------

    def backward(self, grad=None):
        if grad is None:
            if self.size != 1:
                raise ValueError("backward() without a gradient needs a scalar")
            grad = np.ones_like(self.data)
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, emitted = stack.pop()
            if emitted:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = grad if self.grad is None else self.grad + grad
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._backward(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g


def concat(tensors, axis=0):
    """Differentiable concatenation along an existing axis."""
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, offsets, axis=axis))

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._op(data, tuple(tensors), backward)


def gather_rows(table, indices):
    """Select rows of a (N, D) table by an integer index array; the backward
    pass scatter-adds so repeated indices accumulate."""
    table = _as_tensor(table)
    idx = np.asarray(indices, dtype=np.intp)

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return Tensor._op(table.data[idx], (table,), backward)


def softmax(x, axis=-1):
    """Shift-stabilized softmax; the shift is detached so gradients are exact."""
    x = _as_tensor(x)
    shifted = x - Tensor(x.data.max(axis=axis, keepdims=True))
    e = shifted.exp()
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize the last axis to zero mean and unit variance, then rescale."""
    x = _as_tensor(x)
    centered = x - x.mean(axis=-1, keepdims=True)
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / (var + eps).sqrt() * gain + bias


def finite_difference(func, tensors, h=1e-4):
    """Central-difference gradients of scalar func() wrt each tensor's data.

    func must re-run the forward pass from the tensors' current data. Returns
    one ndarray per tensor, matching its shape.
    """
    grads = []
    for t in tensors:
        flat = t.data.reshape(-1)
        g = np.zeros_like(flat)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            hi = func()
            flat[i] = keep - h
            lo = func()
            flat[i] = keep
            g[i] = (hi - lo) / (2.0 * h)
        grads.append(g.reshape(t.data.shape))
    return grads
