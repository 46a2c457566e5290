"""Dense float64 tensors with reverse-mode autodiff.

The graph is recorded eagerly: every differentiable operation creates an
``Op`` node pointing at its input tensors, and ``backward`` walks the nodes
in reverse topological order.  Gradients of intermediate tensors live in a
per-call scratch map; only leaf tensors (inputs, ``Parameter``s) accumulate
into their ``grad`` field, so calling ``backward`` twice without zeroing
adds the gradients together.
"""

import os
import threading

import numpy as np

from ..errors import DimensionError, StateError

# Optional per-op finiteness validation; costs a full pass over every
# output, so it is opt-in (normal runs assert finiteness at the loss).
CHECK_FINITE = os.environ.get("HIROS_CHECK_FINITE", "") not in ("", "0")

_state = threading.local()


def recording():
    return getattr(_state, "record", True)


class no_grad:
    """Context manager that disables graph recording (inference mode)."""

    def __enter__(self):
        self._prev = recording()
        _state.record = False
        return self

    def __exit__(self, *exc):
        _state.record = self._prev
        return False


def assert_finite(a, what="tensor"):
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} contains NaN or Inf")


class Tensor:
    """A dense row-major float64 array plus autograd bookkeeping."""

    __slots__ = ("data", "grad", "creator", "name")

    def __init__(self, data, name=None):
        a = np.asarray(data, dtype=np.float64)
        assert_finite(a, "tensor data")
        self.data = a
        self.grad = None
        self.creator = None
        self.name = name

    @classmethod
    def from_op(cls, data):
        """Fast construction for op outputs (skips the finiteness scan)."""
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        t.creator = None
        t.name = None
        if CHECK_FINITE:
            assert_finite(data, "op output")
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self):
        """Accumulate gradients of this scalar into all leaf tensors."""
        if self.creator is None:
            raise StateError("backward called before any recorded forward pass")
        if self.size != 1:
            raise DimensionError(
                f"backward root must be scalar, got shape {self.shape}"
            )
        grads = {self: np.ones_like(self.data)}
        for op in reversed(_toposort(self.creator)):
            out_grads = [grads.pop(o, None) for o in op.outputs]
            if all(g is None for g in out_grads):
                continue
            in_grads = op.backward(out_grads)
            for inp, g in zip(op.inputs, in_grads):
                if g is None:
                    continue
                if inp.creator is None:
                    inp.accumulate_grad(g)
                elif inp in grads:
                    grads[inp] += g
                else:
                    grads[inp] = g

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, name={self.name!r})"

    def __hash__(self):
        return id(self)

    def __eq__(self, other):
        return self is other


class Parameter(Tensor):
    """Trainable tensor carrying Adam state.

    ``adam_m``/``adam_v`` share the value's shape; ``step_count`` counts
    optimizer steps taken on this parameter.
    """

    __slots__ = ("adam_m", "adam_v", "step_count")

    def __init__(self, data, name=None):
        super().__init__(data, name=name)
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.step_count = 0

    def __repr__(self):
        return f"Parameter(shape={tuple(self.shape)}, name={self.name!r})"


class Op:
    """One recorded operation; constructed only while recording is on.

    Subclasses implement ``backward(out_grads) -> per-input gradients``
    (``None`` entries mean "no gradient flows to this input").
    """

    __slots__ = ("inputs", "outputs")

    def __init__(self, inputs, outputs):
        self.inputs = tuple(inputs)
        self.outputs = tuple(outputs)
        for o in self.outputs:
            o.creator = self

    def backward(self, out_grads):
        raise NotImplementedError


def _toposort(root_op):
    order = []
    seen = {id(root_op)}
    stack = [(root_op, False)]
    while stack:
        op, expanded = stack.pop()
        if expanded:
            order.append(op)
            continue
        stack.append((op, True))
        for t in op.inputs:
            c = t.creator
            if c is not None and id(c) not in seen:
                seen.add(id(c))
                stack.append((c, False))
    return order
