"""Dense tensors with reverse-mode automatic differentiation.

Define-by-run: while a `Tape` is active, every differentiable op appends one
node (output, inputs, gradient closure) in construction order. `backward`
walks the node list strictly in reverse, so every node's inputs are visited
after the node itself and gradient accumulation is deterministic for a fixed
graph.

Storage is float32 by default. Ops follow the dtype of their inputs, which
gives the gradient-check harness a float64 replay path: cast the leaves,
rerun the forward, and the whole graph computes in 64-bit.
"""

from __future__ import annotations

import threading

import numpy as np

from ..errors import NoTape, NotScalar

_tls = threading.local()


def _tape_stack():
    stack = getattr(_tls, "tapes", None)
    if stack is None:
        stack = []
        _tls.tapes = stack
    return stack


def active_tape():
    """The innermost active tape on this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Node:
    """One recorded operation: output tensor, inputs, and gradient closure.

    ``grad_fn(grad_out) -> tuple`` returns one gradient array (or None) per
    input, aligned positionally.
    """

    __slots__ = ("out", "inputs", "grad_fn", "tape")

    def __init__(self, out, inputs, grad_fn, tape):
        self.out = out
        self.inputs = inputs
        self.grad_fn = grad_fn
        self.tape = tape


class Tape:
    """Ordered record of one forward pass. Confined to a single thread."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        assert stack and stack[-1] is self, "tape exited out of order"
        stack.pop()
        return False

    def backward(self, loss: "Tensor") -> None:
        """Populate .grad on every requires_grad leaf reachable from `loss`.

        Gradients accumulate additively, both across multiple uses within
        the graph and across repeated backward calls.
        """
        if loss.data.size != 1:
            raise NotScalar(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.node is None or loss.node.tape is not self:
            raise NoTape("loss was not recorded on this tape")

        pending = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            grad_out = pending.pop(id(node.out), None)
            if grad_out is None:
                continue
            input_grads = node.grad_fn(grad_out)
            for tensor, grad in zip(node.inputs, input_grads):
                if grad is None or not isinstance(tensor, Tensor) or not tensor.requires_grad:
                    continue
                if tensor.node is not None:
                    prev = pending.get(id(tensor))
                    pending[id(tensor)] = grad if prev is None else prev + grad
                else:
                    if tensor.grad is None:
                        tensor.grad = np.zeros_like(tensor.data)
                    tensor.grad += grad


class Tensor:
    """N-dimensional float array, optionally participating in the active tape."""

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.node = None

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    # -- gradient management -------------------------------------------
    def backward(self) -> None:
        if self.node is None:
            raise NoTape("tensor was not recorded on an active tape")
        self.node.tape.backward(self)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def item(self) -> float:
        if self.data.size != 1:
            raise NotScalar(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    # -- operator sugar (implementations live in ops.py) ----------------
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops

        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)


def record(out_data: np.ndarray, inputs: tuple, grad_fn) -> Tensor:
    """Wrap an op result, registering a node when gradients are needed."""
    tape = active_tape()
    needs = tape is not None and any(
        isinstance(t, Tensor) and t.requires_grad for t in inputs
    )
    out = Tensor(out_data, requires_grad=needs)
    if needs:
        node = Node(out, tuple(inputs), grad_fn, tape)
        out.node = node
        tape.nodes.append(node)
    return out


def zeros(shape, dtype=np.float32, requires_grad=False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def ones(shape, dtype=np.float32, requires_grad=False) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=requires_grad)


def full(shape, value, dtype=np.float32) -> Tensor:
    return Tensor(np.full(shape, value, dtype=dtype))
