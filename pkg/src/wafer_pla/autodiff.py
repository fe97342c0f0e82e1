"""A small reverse-mode autodiff engine over numpy arrays.

Only the operations needed by the trajectory models are provided. Each
op records its parents and a closure that pushes the output adjoint back.
"""
from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("value", "grad", "parents", "_backward", "name")

    def __init__(self, value, parents=(), backward=None, name=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self.parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, name={self.name})"

    def _acc(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=float, copy=True)
        else:
            self.grad += g

    # arithmetic -----------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.value + other.value, (self, other))

        def back(g):
            self._acc(_unbroadcast(g, self.shape))
            other._acc(_unbroadcast(g, other.shape))

        out._backward = back
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.value, (self,))
        out._backward = lambda g: self._acc(-g)
        return out

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.value * other.value, (self, other))

        def back(g):
            self._acc(_unbroadcast(g * other.value, self.shape))
            other._acc(_unbroadcast(g * self.value, other.shape))

        out._backward = back
        return out

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.value @ other.value, (self, other))

        def back(g):
            a, b = self.value, other.value
            if a.ndim == 1 and b.ndim == 1:
                self._acc(g * b)
                other._acc(g * a)
            elif b.ndim == 1:
                self._acc(np.outer(g, b))
                other._acc(a.T @ g)
            elif a.ndim == 1:
                self._acc(b @ g)
                other._acc(np.outer(a, g))
            else:
                self._acc(g @ b.T)
                other._acc(a.T @ g)

        out._backward = back
        return out

    # reductions and elementwise ---------------------------------------
    def sum(self):
        out = Tensor(self.value.sum(), (self,))
        out._backward = lambda g: self._acc(np.broadcast_to(g, self.shape))
        return out

    def square(self):
        out = Tensor(self.value * self.value, (self,))
        out._backward = lambda g: self._acc(2.0 * self.value * g)
        return out

    def relu(self):
        mask = self.value > 0  # subgradient 0 at 0
        out = Tensor(np.where(mask, self.value, 0.0), (self,))
        out._backward = lambda g: self._acc(g * mask)
        return out

    def softplus(self):
        out = Tensor(np.logaddexp(0.0, self.value), (self,))
        out._backward = lambda g: self._acc(g * sigmoid(self.value))
        return out

    def abs(self):
        out = Tensor(np.abs(self.value), (self,))
        out._backward = lambda g: self._acc(g * np.sign(self.value))
        return out

    def reshape(self, *shape):
        out = Tensor(self.value.reshape(*shape), (self,))
        out._backward = lambda g: self._acc(g.reshape(self.shape))
        return out

    def block(self, start, shape):
        """Contiguous slice of a flat tensor, reshaped."""
        size = int(np.prod(shape)) if shape else 1
        out = Tensor(self.value[start:start + size].reshape(shape), (self,))

        def back(g):
            full = np.zeros(self.shape)
            full[start:start + size] = np.ravel(g)
            self._acc(full)

        out._backward = back
        return out

    def take(self, idx):
        idx = np.asarray(idx)
        out = Tensor(self.value[idx], (self,))

        def back(g):
            full = np.zeros(self.shape)
            np.add.at(full, idx, g)
            self._acc(full)

        out._backward = back
        return out

    def segment_sum(self, starts):
        """Sum consecutive runs of a 1-d tensor; ``starts`` are run offsets."""
        starts = np.asarray(starts, dtype=np.int64)
        out = Tensor(np.add.reduceat(self.value, starts) if len(starts) else np.zeros(0), (self,))
        lengths = np.diff(np.append(starts, self.value.shape[0]))

        def back(g):
            self._acc(np.repeat(g, lengths))

        out._backward = back
        return out

    # backprop ----------------------------------------------------------
    def backward(self):
        if self.value.size != 1:
            raise ValueError("backward() needs a scalar output")
        order = _topo(self)
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _unbroadcast(g, shape):
    g = np.asarray(g)
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _topo(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def grad(loss, wrt):
    """Gradient arrays of scalar ``loss`` with respect to each leaf in ``wrt``."""
    single = isinstance(wrt, Tensor)
    leaves = [wrt] if single else list(wrt)
    loss.backward()
    grads = [np.zeros(t.shape) if t.grad is None else t.grad.copy() for t in leaves]
    return grads[0] if single else grads
