"""Dense float64 tensors with reverse-mode autodiff on an explicit tape.

Ops are module-level functions (plus a few operator overloads on ``Tensor``
for readability). Forward values are plain numpy arrays; when a ``GradTape``
is active and an input requires gradients, the op appends one record to the
tape. ``backward`` replays the records in reverse, which visits each node
exactly once because records are appended in execution order.

Everything is float64: the gradient-check tolerances this package is built
around would drown in float32 noise.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError

_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = []
        _local.tapes = stack
    return stack


def active_tape():
    """The innermost active tape for this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A dense row-major float64 array, optionally tracked for gradients.

    ``grad`` stays None until a backward pass reaches this tensor; it then
    holds a numpy array of the same shape as ``data``.
    """

    __slots__ = ("data", "requires_grad", "grad", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._tape = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """A view of the same data outside any graph."""
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Arithmetic sugar; scalars route through scale / constant shifts.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / other)
        raise TypeError("tensor/tensor division is not supported")

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class GradTape:
    """Ordered record of primitive ops, replayed in reverse by backward().

    Use as a context manager::

        with GradTape() as tape:
            loss = ...
            backward(loss)
    """

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "GradTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise ContractError("tape stack corrupted: exiting a tape that is not innermost")
        stack.pop()

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], back: Callable) -> None:
        out.requires_grad = True
        out._tape = self
        self._records.append((out, inputs, back))

    def backward(self, loss: Tensor) -> None:
        """Populate .grad on every requires_grad ancestor of ``loss``."""
        if loss.ndim != 0:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        adjoint: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
        holders: dict[int, Tensor] = {id(loss): loss}
        for out, inputs, back in reversed(self._records):
            g = adjoint.pop(id(out), None)
            if g is None:
                continue  # not an ancestor of the loss
            holders.pop(id(out), None)
            if out.requires_grad:
                out.grad = g if out.grad is None else out.grad + g
            grads = back(g)
            for t, gi in zip(inputs, grads):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in adjoint:
                    adjoint[key] = adjoint[key] + gi
                else:
                    adjoint[key] = gi
                    holders[key] = t
        # Whatever is left received its full adjoint but has no producing
        # record on this tape: leaves (and cross-tape inputs).
        for key, t in holders.items():
            if t.requires_grad:
                g = adjoint[key]
                t.grad = g if t.grad is None else t.grad + g


class no_grad:
    """Context manager that suppresses recording: ops inside build no graph."""

    def __enter__(self):
        _tape_stack().append(None)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()


def backward(loss: Tensor) -> None:
    """Run reverse-mode accumulation from a scalar recorded on a tape."""
    if loss._tape is None:
        raise ContractError("loss was not recorded on any tape")
    loss._tape.backward(loss)


def _tape_for(*inputs: Tensor):
    tape = active_tape()
    if tape is None:
        return None
    if any(t.requires_grad for t in inputs):
        return tape
    return None


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape`` by summing extra axes."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, (gdim, dim) in enumerate(zip(g.shape, shape)):
        if dim == 1 and gdim != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data)
    tape = _tape_for(a, b)
    if tape is not None:
        ash, bsh = a.shape, b.shape

        def back(g):
            return _unbroadcast(g, ash), _unbroadcast(g, bsh)

        tape.record(out, (a, b), back)
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data)
    tape = _tape_for(a, b)
    if tape is not None:
        ash, bsh = a.shape, b.shape

        def back(g):
            return _unbroadcast(g, ash), _unbroadcast(-g, bsh)

        tape.record(out, (a, b), back)
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data)
    tape = _tape_for(a, b)
    if tape is not None:
        ad, bd, ash, bsh = a.data, b.data, a.shape, b.shape

        def back(g):
            return _unbroadcast(g * bd, ash), _unbroadcast(g * ad, bsh)

        tape.record(out, (a, b), back)
    return out


def scale(x, c: float) -> Tensor:
    """Multiply by a Python constant (never differentiated w.r.t. c)."""
    x = as_tensor(x)
    c = float(c)
    out = Tensor(x.data * c)
    tape = _tape_for(x)
    if tape is not None:
        tape.record(out, (x,), lambda g: (g * c,))
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)
    tape = _tape_for(a, b)
    if tape is not None:
        ad, bd = a.data, b.data

        def back(g):
            return g @ bd.T, ad.T @ g

        tape.record(out, (a, b), back)
    return out


def transpose(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"transpose needs a 2-D tensor, got shape {x.shape}")
    out = Tensor(x.data.T)  # view; op outputs are never mutated in place
    tape = _tape_for(x)
    if tape is not None:
        tape.record(out, (x,), lambda g: (g.T,))
    return out


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(int(s) for s in shape)
    if math.prod(shape) != x.size:
        raise DimensionError(f"cannot reshape {x.shape} ({x.size} values) to {shape}")
    out = Tensor(x.data.reshape(shape))
    tape = _tape_for(x)
    if tape is not None:
        old = x.shape
        tape.record(out, (x,), lambda g: (g.reshape(old),))
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat of an empty list")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    tape = _tape_for(*tensors)
    if tape is not None:
        sizes = [t.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]

        def back(g):
            return tuple(np.split(g, splits, axis=axis))

        tape.record(out, tuple(tensors), back)
    return out


def gather_rows(x, index) -> Tensor:
    """Select rows of a 2-D tensor; the adjoint scatter-adds them back."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"gather_rows needs a 2-D tensor, got shape {x.shape}")
    idx = np.asarray(index, dtype=np.intp)
    out = Tensor(x.data[idx])
    tape = _tape_for(x)
    if tape is not None:
        xsh = x.shape

        def back(g):
            gx = np.zeros(xsh, dtype=np.float64)
            np.add.at(gx, idx, g)
            return (gx,)

        tape.record(out, (x,), back)
    return out


def gather_cols(x, index) -> Tensor:
    """Select columns of a 2-D tensor; the adjoint scatter-adds them back."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"gather_cols needs a 2-D tensor, got shape {x.shape}")
    idx = np.asarray(index, dtype=np.intp)
    out = Tensor(x.data[:, idx])
    tape = _tape_for(x)
    if tape is not None:
        xsh = x.shape

        def back(g):
            gx = np.zeros(xsh, dtype=np.float64)
            np.add.at(gx.T, idx, g.T)
            return (gx,)

        tape.record(out, (x,), back)
    return out


def _segmented_views(a: Tensor, b: Tensor, segments: int):
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(
            f"segmented matmul needs 2-D tensors, got {a.shape} and {b.shape}")
    if a.shape[0] % segments or b.shape[0] % segments:
        raise DimensionError(
            f"row counts {a.shape[0]}, {b.shape[0]} do not split into {segments} segments")
    a3 = a.data.reshape(segments, a.shape[0] // segments, a.shape[1])
    b3 = b.data.reshape(segments, b.shape[0] // segments, b.shape[1])
    return a3, b3


def segmented_matmul_nt(a, b, segments: int) -> Tensor:
    """Per-segment a_s @ b_s^T, stacked: (S*T, k) x (S*U, k) -> (S*T, U).

    One batched GEMM instead of S small matmuls; segments never mix.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"inner extents differ: {a.shape} vs {b.shape}")
    a3, b3 = _segmented_views(a, b, segments)
    out3 = np.matmul(a3, b3.swapaxes(1, 2))
    out = Tensor(out3.reshape(a.shape[0], b3.shape[1]))
    tape = _tape_for(a, b)
    if tape is not None:
        ash, bsh = a.shape, b.shape

        def back(g):
            g3 = g.reshape(out3.shape)
            ga = np.matmul(g3, b3).reshape(ash)
            gb = np.matmul(g3.swapaxes(1, 2), a3).reshape(bsh)
            return ga, gb

        tape.record(out, (a, b), back)
    return out


def segmented_matmul(a, b, segments: int) -> Tensor:
    """Per-segment a_s @ b_s, stacked: (S*T, U) x (S*U, k) -> (S*T, k)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] * segments != b.shape[0]:
        raise DimensionError(
            f"segment inner extents differ: {a.shape} x {b.shape} over {segments} segments")
    a3, b3 = _segmented_views(a, b, segments)
    out3 = np.matmul(a3, b3)
    out = Tensor(out3.reshape(a.shape[0], b.shape[1]))
    tape = _tape_for(a, b)
    if tape is not None:
        ash, bsh = a.shape, b.shape

        def back(g):
            g3 = g.reshape(out3.shape)
            ga = np.matmul(g3, b3.swapaxes(1, 2)).reshape(ash)
            gb = np.matmul(a3.swapaxes(1, 2), g3).reshape(bsh)
            return ga, gb

        tape.record(out, (a, b), back)
    return out


def reduce_sum(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    if axis not in (None, 0):
        raise DimensionError("reduce_sum supports axis None or 0")
    out = Tensor(x.data.sum(axis=axis))
    tape = _tape_for(x)
    if tape is not None:
        xsh = x.shape

        def back(g):
            return (np.broadcast_to(g, xsh) if axis is None
                    else np.broadcast_to(g[None, ...], xsh),)

        tape.record(out, (x,), back)
    return out


def reduce_mean(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    if axis not in (None, 0):
        raise DimensionError("reduce_mean supports axis None or 0")
    out = Tensor(x.data.mean(axis=axis))
    tape = _tape_for(x)
    if tape is not None:
        xsh = x.shape
        count = x.size if axis is None else xsh[0]

        def back(g):
            scaled = g / count
            return (np.broadcast_to(scaled, xsh) if axis is None
                    else np.broadcast_to(scaled[None, ...], xsh),)

        tape.record(out, (x,), back)
    return out


def relu(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0))
    tape = _tape_for(x)
    if tape is not None:
        mask = x.data > 0.0
        tape.record(out, (x,), lambda g: (g * mask,))
    return out


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def gelu(x) -> Tensor:
    """GELU, tanh approximation (smooth everywhere)."""
    x = as_tensor(x)
    xd = x.data
    sq = xd * xd
    t = np.tanh(_GELU_C * (xd + _GELU_A * sq * xd))
    out = Tensor(0.5 * xd * (1.0 + t))
    tape = _tape_for(x)
    if tape is not None:
        dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * sq)
        local = 0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * dinner
        tape.record(out, (x,), lambda g: (g * local,))
    return out


def exp(x) -> Tensor:
    x = as_tensor(x)
    ed = np.exp(x.data)
    out = Tensor(ed)
    tape = _tape_for(x)
    if tape is not None:
        tape.record(out, (x,), lambda g: (g * ed,))
    return out


def log(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.log(x.data))
    tape = _tape_for(x)
    if tape is not None:
        xd = x.data
        tape.record(out, (x,), lambda g: (g / xd,))
    return out


def _stable_sigmoid(xd: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(xd))
    return np.where(xd >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = _stable_sigmoid(x.data)
    out = Tensor(s)
    tape = _tape_for(x)
    if tape is not None:
        tape.record(out, (x,), lambda g: (g * s * (1.0 - s),))
    return out


def softplus(x) -> Tensor:
    """log(1 + e^x), computed in the overflow-safe form."""
    x = as_tensor(x)
    xd = x.data
    out = Tensor(np.maximum(xd, 0.0) + np.log1p(np.exp(-np.abs(xd))))
    tape = _tape_for(x)
    if tape is not None:
        s = _stable_sigmoid(xd)
        tape.record(out, (x,), lambda g: (g * s,))
    return out


def softmax(x) -> Tensor:
    """Softmax over the last axis; rows sum to 1."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(s)
    tape = _tape_for(x)
    if tape is not None:
        def back(g):
            dot = (g * s).sum(axis=-1, keepdims=True)
            return (s * (g - dot),)

        tape.record(out, (x,), back)
    return out


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(
            f"layer_norm gain/bias must have shape ({d},), got {gain.shape} and {bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Tensor(gain.data * xhat + bias.data)
    tape = _tape_for(x, gain, bias)
    if tape is not None:
        gd = gain.data

        def back(g):
            dxhat = g * gd
            dx = inv * (dxhat
                        - dxhat.mean(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
            lead = tuple(range(g.ndim - 1))
            dgain = (g * xhat).sum(axis=lead)
            dbias = g.sum(axis=lead)
            return dx, dgain, dbias

        tape.record(out, (x, gain, bias), back)
    return out


class BatchNormState:
    """Running first/second moments for batch_norm eval mode (never trained)."""

    def __init__(self, dim: int):
        self.mean = np.zeros(dim, dtype=np.float64)
        self.var = np.ones(dim, dtype=np.float64)

    def copy(self) -> "BatchNormState":
        fresh = BatchNormState(len(self.mean))
        fresh.mean = self.mean.copy()
        fresh.var = self.var.copy()
        return fresh


def batch_norm(x, gain, bias, state: BatchNormState, eps: float = 1e-5,
               momentum: float = 0.1, training: bool = False) -> Tensor:
    """Normalize over the batch axis (0) of a 2-D tensor.

    Training mode normalizes with batch statistics (biased variance) and
    advances the running stats; eval mode uses the running stats, making the
    op a per-column affine map.
    """
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if x.ndim != 2:
        raise DimensionError(f"batch_norm needs a 2-D input, got shape {x.shape}")
    d = x.shape[1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(
            f"batch_norm gain/bias must have shape ({d},), got {gain.shape} and {bias.shape}")
    if training:
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        state.mean = (1.0 - momentum) * state.mean + momentum * mu
        state.var = (1.0 - momentum) * state.var + momentum * var
    else:
        mu, var = state.mean, state.var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Tensor(gain.data * xhat + bias.data)
    tape = _tape_for(x, gain, bias)
    if tape is not None:
        gd = gain.data

        if training:
            def back(g):
                dxhat = g * gd
                dx = inv * (dxhat
                            - dxhat.mean(axis=0)
                            - xhat * (dxhat * xhat).mean(axis=0))
                return dx, (g * xhat).sum(axis=0), g.sum(axis=0)
        else:
            def back(g):
                return g * gd * inv, (g * xhat).sum(axis=0), g.sum(axis=0)

        tape.record(out, (x, gain, bias), back)
    return out
