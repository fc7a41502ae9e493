"""Dense tensors with a reverse-mode gradient tape.

Every differentiable operation in the package funnels through here: an op
computes its forward value with numpy, then (when gradients are enabled and
an input requires them) appends one record to the active tape. `backward`
replays the tape in reverse execution order exactly once, accumulating
gradients into leaf tensors with `+=` semantics.

Scalars are float32 by default; `precision(64)` switches the process to
float64, which the gradient checker requires.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericsError, ShapeError

_DTYPES = {32: np.float32, 64: np.float64}
_default_dtype = np.float32

_PARAM_NAME_RE = re.compile(r"^[A-Za-z0-9._/-]+$")


def default_dtype():
    return _default_dtype


def set_default_dtype(bits):
    """Set the process-wide scalar width; `bits` is 32 or 64."""
    global _default_dtype
    if bits not in _DTYPES:
        raise ContractError(f"precision must be 32 or 64, got {bits!r}")
    _default_dtype = _DTYPES[bits]


class precision:
    """Context manager that temporarily switches the default scalar width."""

    def __init__(self, bits):
        self._bits = bits
        self._saved = None

    def __enter__(self):
        global _default_dtype
        self._saved = _default_dtype
        set_default_dtype(self._bits)
        return self

    def __exit__(self, *exc):
        global _default_dtype
        _default_dtype = self._saved
        return False


class _ThreadState(threading.local):
    def __init__(self):
        self.grad_enabled = True
        self.tape_stack = []


_state = _ThreadState()


class no_grad:
    """Disable tape recording inside the context (thread-local)."""

    def __enter__(self):
        self._saved = _state.grad_enabled
        _state.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _state.grad_enabled = self._saved
        return False


def grad_enabled():
    return _state.grad_enabled


class Tensor:
    """A dense n-d float array, optionally tracked by the gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "_op_output")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=_default_dtype if dtype is None else dtype)
        if not np.all(np.isfinite(arr)):
            raise NumericsError("tensor holds non-finite values")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._op_output = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        """A leaf view of the same data that never receives gradients."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out._op_output = False
        return out

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


@dataclass
class Parameter:
    """A named trainable tensor; names must be checkpoint-portable."""

    name: str
    tensor: Tensor

    def __post_init__(self):
        if not _PARAM_NAME_RE.match(self.name):
            raise ContractError(
                f"parameter name {self.name!r} outside charset [A-Za-z0-9._/-]"
            )
        self.tensor.requires_grad = True


class _Record:
    __slots__ = ("out", "parents", "backward_fn")

    def __init__(self, out, parents, backward_fn):
        self.out = out
        self.parents = parents
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of executed differentiable ops and saved activations.

    Usable as a context manager; the innermost active tape receives the
    records. A module-level default tape catches ops run outside any
    context (convenient in tests and small scripts).
    """

    def __init__(self):
        self.records = []

    def __len__(self):
        return len(self.records)

    def clear(self):
        self.records.clear()

    def __enter__(self):
        _state.tape_stack.append(self)
        return self

    def __exit__(self, *exc):
        _state.tape_stack.pop()
        return False


_default_tape = Tape()


def active_tape():
    if _state.tape_stack:
        return _state.tape_stack[-1]
    return _default_tape


def _wrap(arr):
    """Wrap an op result without changing dtype; enforces the finite invariant."""
    if not np.all(np.isfinite(arr)):
        raise NumericsError("operation produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = arr
    out.requires_grad = False
    out.grad = None
    out._op_output = False
    return out


def _record(out, parents, backward_fn):
    if _state.grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._op_output = True
        active_tape().records.append(_Record(out, parents, backward_fn))
    return out


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def backward(loss, tape=None):
    """Accumulate d(loss)/d(leaf) into every reachable leaf's `.grad`.

    Walks the tape in reverse execution order; each record fires exactly
    once. Leaf gradients add onto any existing `.grad`, so calling twice
    without zeroing doubles them.
    """
    if not isinstance(loss, Tensor):
        raise ContractError("backward expects a Tensor loss")
    if loss.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.shape}")
    tape = tape if tape is not None else active_tape()
    if not tape.records:
        raise ContractError("backward called with an empty tape")

    pending = {id(loss): np.ones_like(loss.data)}
    for rec in reversed(tape.records):
        g = pending.pop(id(rec.out), None)
        if g is None:
            continue
        parent_grads = rec.backward_fn(g)
        for p, pg in zip(rec.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if p._op_output:
                key = id(p)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg
            else:
                p.grad = pg.copy() if p.grad is None else p.grad + pg


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / linear-algebra primitives
# ---------------------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = _wrap(a.data + b.data)

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(out, (a, b), bwd)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = _wrap(a.data - b.data)

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(out, (a, b), bwd)


def neg(a):
    a = as_tensor(a)
    out = _wrap(-a.data)
    return _record(out, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = _wrap(a.data * b.data)

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(out, (a, b), bwd)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    out = _wrap(a.data @ b.data)

    def bwd(g):
        return g @ b.data.T, a.data.T @ g

    return _record(out, (a, b), bwd)


def transpose(a):
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    out = _wrap(np.ascontiguousarray(a.data.T))
    return _record(out, (a,), lambda g: (g.T,))


def relu(a):
    a = as_tensor(a)
    out = _wrap(np.maximum(a.data, 0))

    def bwd(g):
        return (g * (a.data > 0),)

    return _record(out, (a,), bwd)


def concat(tensors, axis):
    tensors = [as_tensor(t) for t in tensors]
    out = _wrap(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        return tuple(
            np.take(g, range(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return _record(out, tuple(tensors), bwd)


def slice_cols(a, start, stop):
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"slice_cols expects a matrix, got shape {a.shape}")
    out = _wrap(np.ascontiguousarray(a.data[:, start:stop]))

    def bwd(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return (full,)

    return _record(out, (a,), bwd)


def reshape(a, shape):
    a = as_tensor(a)
    out = _wrap(np.ascontiguousarray(a.data.reshape(shape)))

    def bwd(g):
        return (g.reshape(a.shape),)

    return _record(out, (a,), bwd)


def tensor_sum(a):
    a = as_tensor(a)
    out = _wrap(np.asarray(a.data.sum(), dtype=a.data.dtype))

    def bwd(g):
        return (np.broadcast_to(g, a.shape).astype(a.data.dtype, copy=True),)

    return _record(out, (a,), bwd)


def mean(a):
    a = as_tensor(a)
    out = _wrap(np.asarray(a.data.mean(), dtype=a.data.dtype))
    n = a.size

    def bwd(g):
        return (np.broadcast_to(g / n, a.shape).astype(a.data.dtype, copy=True),)

    return _record(out, (a,), bwd)


_AXES = {"row": 1, "col": 0}


def softmax(x, axis="row"):
    """Softmax along each row ("row") or each column ("col") of a matrix.

    Stabilized by max subtraction, so the result is shift-invariant along
    the normalized axis.
    """
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"softmax expects a matrix, got shape {x.shape}")
    if axis not in _AXES:
        raise ContractError(f"softmax axis must be 'row' or 'col', got {axis!r}")
    np_axis = _AXES[axis]
    shifted = x.data - x.data.max(axis=np_axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=np_axis, keepdims=True)
    out = _wrap(s)

    def bwd(g):
        dot = (g * s).sum(axis=np_axis, keepdims=True)
        return ((g - dot) * s,)

    return _record(out, (x,), bwd)


def linear(x, w, b=None):
    """x @ w (+ b broadcast over rows)."""
    y = matmul(x, w)
    if b is None:
        return y
    return add(y, b)
