"""Tensors and the gradient tape.

A ``Graph`` records every differentiable op executed while it is active (it
is a context manager); ``Graph.backward`` replays the tape in reverse. The
tape is append-only and per-thread: distinct graphs may run on distinct
threads, but one graph must stay on one thread.
"""

from __future__ import annotations

import threading

import numpy as np

from ..errors import ShapeError

_active = threading.local()


class Tensor:
    """A dense float64 array of up to 4 dimensions plus its gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        if self.data.ndim > 4:
            raise ShapeError(f"tensors are limited to 4 dimensions, got {self.data.ndim}")
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True).reshape(self.data.shape)
        else:
            self.grad += g.reshape(self.data.shape)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"


class Graph:
    """Topologically ordered record of ops, replayed in reverse for gradients."""

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def __enter__(self) -> "Graph":
        stack = getattr(_active, "stack", None)
        if stack is None:
            stack = _active.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _active.stack.pop()
        return False

    @staticmethod
    def current() -> "Graph | None":
        stack = getattr(_active, "stack", None)
        return stack[-1] if stack else None

    def record(self, out: Tensor, parents: tuple[Tensor, ...], backward_fn) -> None:
        self._nodes.append((out, parents, backward_fn))

    def tensors(self):
        seen = set()
        for out, parents, _ in self._nodes:
            for t in (out, *parents):
                if id(t) not in seen:
                    seen.add(id(t))
                    yield t

    def zero_grads(self) -> None:
        for t in self.tensors():
            t.grad = None

    def backward(self, loss: Tensor) -> None:
        """Accumulate gradients of ``loss`` into every contributing tensor.

        Call ``zero_grads`` first when reusing a graph for a second pass;
        gradients always add into existing ones.
        """
        if loss.data.size != 1:
            raise ShapeError(f"backward root must be scalar, got shape {loss.shape}")
        loss.accumulate_grad(np.ones_like(loss.data))
        for out, parents, backward_fn in reversed(self._nodes):
            if out.grad is None:
                continue
            grads = backward_fn(out.grad)
            for parent, g in zip(parents, grads):
                if g is not None and (parent.requires_grad or parent.grad is not None):
                    parent.accumulate_grad(g)


def record_op(out: Tensor, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Register an op on the active graph; no-op outside a graph context."""
    graph = Graph.current()
    if graph is not None and out.requires_grad:
        graph.record(out, parents, backward_fn)
    return out


def needs_grad(*parents: Tensor) -> bool:
    return Graph.current() is not None and any(p.requires_grad for p in parents)
