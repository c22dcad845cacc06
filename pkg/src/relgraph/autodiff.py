"""Minimal reverse-mode automatic differentiation over dense float64 tensors.

A :class:`Tape` records primitive applications in execution order; operands
and results are :class:`Node` handles onto the tape.  ``backward`` walks the
records in reverse and accumulates gradients into the :class:`Parameter`
objects read by the tape.  Tapes are single-threaded; distinct tapes over a
shared read-only parameter snapshot may run concurrently.
"""

from __future__ import annotations

import numpy as np

from .errors import NonScalarRootError, ShapeMismatchError


class Parameter:
    """Named tensor with a persistent gradient accumulator of the same shape."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.value.shape})"


class Node:
    """Handle to one value on a tape."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape: "Tape", idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.idx]

    @property
    def shape(self):
        return self.value.shape


class Tape:
    """Ordered record of primitive applications, topological by construction."""

    def __init__(self):
        self.values: list[np.ndarray] = []
        self.records: list[tuple[int, tuple[int, ...], object]] = []  # (out, ins, vjp)
        self.param_nodes: list[tuple[int, Parameter]] = []

    # -- node creation

    def _node(self, value) -> Node:
        self.values.append(np.asarray(value, dtype=np.float64))
        return Node(self, len(self.values) - 1)

    def constant(self, value) -> Node:
        return self._node(value)

    def read(self, param: Parameter) -> Node:
        node = self._node(param.value)
        self.param_nodes.append((node.idx, param))
        return node

    def _record(self, value, inputs: tuple[Node, ...], vjp) -> Node:
        out = self._node(value)
        self.records.append((out.idx, tuple(n.idx for n in inputs), vjp))
        return out

    # -- primitives

    def add(self, a: Node, b: Node) -> Node:
        if a.shape != b.shape:
            raise ShapeMismatchError(f"add: {a.shape} vs {b.shape}")
        return self._record(a.value + b.value, (a, b), lambda g: (g, g))

    def sub(self, a: Node, b: Node) -> Node:
        if a.shape != b.shape:
            raise ShapeMismatchError(f"sub: {a.shape} vs {b.shape}")
        return self._record(a.value - b.value, (a, b), lambda g: (g, -g))

    def mul(self, a: Node, b: Node) -> Node:
        if a.shape != b.shape:
            raise ShapeMismatchError(f"mul: {a.shape} vs {b.shape}")
        av, bv = a.value, b.value
        return self._record(av * bv, (a, b), lambda g: (g * bv, g * av))

    def neg(self, a: Node) -> Node:
        return self._record(-a.value, (a,), lambda g: (-g,))

    def scale(self, a: Node, c: float) -> Node:
        return self._record(a.value * c, (a,), lambda g: (g * c,))

    def matmul(self, a: Node, b: Node) -> Node:
        av, bv = a.value, b.value
        if av.ndim == 2 and bv.ndim == 1:
            if av.shape[1] != bv.shape[0]:
                raise ShapeMismatchError(f"matmul: {av.shape} @ {bv.shape}")
            return self._record(av @ bv, (a, b), lambda g: (np.outer(g, bv), av.T @ g))
        if av.ndim == 2 and bv.ndim == 2:
            if av.shape[1] != bv.shape[0]:
                raise ShapeMismatchError(f"matmul: {av.shape} @ {bv.shape}")
            return self._record(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))
        raise ShapeMismatchError(f"matmul: unsupported ranks {av.ndim} @ {bv.ndim}")

    def concat(self, parts: list[Node]) -> Node:
        for p in parts:
            if p.value.ndim != 1:
                raise ShapeMismatchError("concat expects vectors")
        sizes = [p.value.shape[0] for p in parts]
        offsets = np.cumsum([0] + sizes)

        def vjp(g):
            return tuple(g[offsets[i]: offsets[i + 1]] for i in range(len(sizes)))

        return self._record(np.concatenate([p.value for p in parts]), tuple(parts), vjp)

    def relu(self, a: Node) -> Node:
        mask = (a.value > 0).astype(np.float64)  # subgradient at 0 is 0
        return self._record(a.value * mask, (a,), lambda g: (g * mask,))

    def tanh(self, a: Node) -> Node:
        out = np.tanh(a.value)
        return self._record(out, (a,), lambda g: (g * (1.0 - out * out),))

    def softmax(self, a: Node) -> Node:
        if a.value.ndim != 1:
            raise ShapeMismatchError("softmax expects a vector")
        shifted = a.value - np.max(a.value)
        e = np.exp(shifted)
        out = e / np.sum(e)

        def vjp(g):
            return ((g - np.dot(g, out)) * out,)

        return self._record(out, (a,), vjp)

    def log_softmax(self, a: Node) -> Node:
        if a.value.ndim != 1:
            raise ShapeMismatchError("log_softmax expects a vector")
        shifted = a.value - np.max(a.value)
        lse = np.log(np.sum(np.exp(shifted)))
        out = shifted - lse
        p = np.exp(out)

        def vjp(g):
            return (g - p * np.sum(g),)

        return self._record(out, (a,), vjp)

    def logsumexp(self, a: Node) -> Node:
        if a.value.ndim != 1:
            raise ShapeMismatchError("logsumexp expects a vector")
        m = np.max(a.value)
        out = m + np.log(np.sum(np.exp(a.value - m)))
        p = np.exp(a.value - out)
        return self._record(out, (a,), lambda g: (g * p,))

    def sum(self, a: Node) -> Node:
        shape = a.shape
        return self._record(np.sum(a.value), (a,), lambda g: (np.full(shape, g),))

    def pick(self, a: Node, index: int) -> Node:
        if a.value.ndim != 1:
            raise ShapeMismatchError("pick expects a vector")
        shape = a.shape

        def vjp(g):
            out = np.zeros(shape)
            out[index] = g
            return (out,)

        return self._record(a.value[index], (a,), vjp)

    def stack(self, parts: list[Node]) -> Node:
        for p in parts:
            if p.value.ndim != 0:
                raise ShapeMismatchError("stack expects scalars")

        def vjp(g):
            return tuple(g[i] for i in range(len(parts)))

        return self._record(np.array([p.value for p in parts]), tuple(parts), vjp)

    def embedding_lookup(self, table: Node, index: int) -> Node:
        if table.value.ndim != 2:
            raise ShapeMismatchError("embedding_lookup expects a 2-d table")
        shape = table.shape

        def vjp(g):
            out = np.zeros(shape)
            out[index] = g
            return (out,)

        return self._record(table.value[index], (table,), vjp)

    def cross_entropy(self, logits: Node, label: int) -> Node:
        """-log softmax(logits)[label], numerically stable."""
        return self.neg(self.pick(self.log_softmax(logits), label))

    # -- reverse pass

    def backward(self, root: Node):
        """Accumulate d(root)/d(theta) into every parameter read by this tape."""
        if root.value.ndim != 0:
            raise NonScalarRootError(f"backward root must be scalar, got shape {root.shape}")
        grads: dict[int, np.ndarray] = {root.idx: np.array(1.0)}
        for out_idx, in_idxs, vjp in reversed(self.records):
            g = grads.get(out_idx)
            if g is None:
                continue
            for idx, part in zip(in_idxs, vjp(g)):
                if idx in grads:
                    grads[idx] = grads[idx] + part
                else:
                    grads[idx] = np.array(part, dtype=np.float64, copy=True)
        for idx, param in self.param_nodes:
            g = grads.get(idx)
            if g is not None:
                param.grad += g
