"""Dense tensors with tape-based reverse-mode differentiation.

Operations only record themselves while a :class:`Tape` is active, so plain
forward passes outside a ``with Tape():`` block build no graph.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError, DetachedTensorError, NumericError

_DTYPES = {"float32": np.float32, "float64": np.float64}

_config = {"dtype": np.float32, "debug": False}
_local = threading.local()


def get_dtype():
    return _config["dtype"]


def set_precision(name: str) -> None:
    """Select ``"float32"`` (training) or ``"float64"`` (verification)."""
    try:
        _config["dtype"] = _DTYPES[name]
    except KeyError:
        raise ValueError(f"unknown precision {name!r}") from None


@contextlib.contextmanager
def precision(name: str):
    previous = _config["dtype"]
    set_precision(name)
    try:
        yield
    finally:
        _config["dtype"] = previous


def set_debug(flag: bool) -> None:
    """When on, every recorded forward output is checked for NaN/Inf."""
    _config["debug"] = bool(flag)


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def current_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


@contextlib.contextmanager
def no_record():
    """Temporarily suspend recording (e.g. for validation inside a train loop)."""
    stack = _tape_stack()
    saved = list(stack)
    stack.clear()
    try:
        yield
    finally:
        stack.extend(saved)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype or _config["dtype"])
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> Tensor:
        t = object.__new__(Tensor)
        t.data = arr
        t.requires_grad = False
        t.grad = None
        t.name = None
        return t

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

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> Tensor:
        return Tensor._wrap(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    # Arithmetic is delegated to ops so every path shares one implementation.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __pow__(self, exponent: float):
        from . import ops
        return ops.power(self, exponent)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis, keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def exp(self):
        from . import ops
        return ops.exp(self)

    def log(self):
        from . import ops
        return ops.log(self)

    def tanh(self):
        from . import ops
        return ops.tanh(self)

    def sigmoid(self):
        from . import ops
        return ops.sigmoid(self)

    def relu(self):
        from . import ops
        return ops.relu(self)

    def abs(self):
        from . import ops
        return ops.absolute(self)


class Parameter(Tensor):
    """A leaf tensor that always requires a gradient."""

    __slots__ = ()

    def __init__(self, data, name: str | None = None):
        super().__init__(data, requires_grad=True, name=name)


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class _Node:
    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(self, op, inputs, output, backward):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of differentiable operations.

    Nodes are appended in execution order, which is already a topological
    order; :meth:`backward` walks that list once in reverse.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._produced: set[int] = set()
        self._consumed = False

    def __enter__(self) -> Tape:
        if self._consumed:
            raise ContractError("tape was already consumed by backward()")
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        else:
            stack.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward: Callable) -> None:
        self.nodes.append(_Node(op, tuple(inputs), output, backward))
        self._produced.add(id(output))

    def backward(self, loss: Tensor) -> None:
        backward(self, loss)


def record(op: str, out_data: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    """Wrap ``out_data`` and, if any input needs a gradient, log the node."""
    out = Tensor._wrap(out_data)
    tape = current_tape()
    if tape is not None:
        for t in inputs:
            if t.requires_grad:
                out.requires_grad = True
                tape.record(op, inputs, out, backward)
                break
    if _config["debug"] and not np.all(np.isfinite(out_data)):
        raise NumericError(f"{op} produced non-finite values")
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf on ``tape``."""
    if loss.data.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if id(loss) not in tape._produced:
        raise DetachedTensorError("loss tensor was not produced on this tape")
    if tape._consumed:
        raise ContractError("tape was already consumed by backward()")
    tape._consumed = True

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    produced = tape._produced
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        input_grads = node.backward(g)
        for inp, gi in zip(node.inputs, input_grads):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in produced:
                prev = grads.get(key)
                grads[key] = gi if prev is None else prev + gi
            elif inp.grad is None:
                inp.grad = np.array(gi, dtype=inp.data.dtype).reshape(inp.data.shape)
            else:
                inp.grad = inp.grad + gi
    tape.nodes.clear()
    tape._produced = set()
