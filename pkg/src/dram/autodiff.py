"""Small reverse-mode autodiff on float64 numpy arrays.

Every op builds its output eagerly and, when gradients are enabled and some
input requires them, records its parents plus a closure that maps the
upstream gradient onto the parents. ``Tensor.backward`` replays those
closures in reverse topological order.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "DimensionError",
    "ParameterError",
    "Tensor",
    "Parameter",
    "no_grad",
    "is_grad_enabled",
    "as_tensor",
    "linear",
    "causal_dilated_conv1d",
    "lstm_cell_step",
    "elementwise",
    "tanh",
    "sigmoid",
    "relu",
    "absolute",
    "mse_loss",
    "concat",
    "swapaxes",
    "tsum",
    "grad_check",
]


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class ParameterError(ValueError):
    """An op was called with an invalid hyperparameter."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


_kink_margins: list[float] | None = None


@contextlib.contextmanager
def track_kinks():
    """Collect the smallest ``|input|`` seen by each relu/abs call in the block."""
    global _kink_margins
    prev = _kink_margins
    _kink_margins = []
    try:
        yield _kink_margins
    finally:
        _kink_margins = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | float | None = None) -> None:
        if grad is None:
            grad = np.ones_like(self.data)
        grad = np.broadcast_to(np.asarray(grad, dtype=np.float64), self.shape)

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        # intermediate grads are transient; leaves keep accumulating
        for node in order:
            if node._backward is not None:
                node.grad = None
        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return _add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return _add(self, _neg(as_tensor(other)))

    def __rsub__(self, other):
        return _add(as_tensor(other), _neg(self))

    def __neg__(self):
        return _neg(self)

    def __mul__(self, other):
        return _mul(self, other)

    __rmul__ = __mul__

    def __getitem__(self, idx):
        return _getitem(self, idx)


class Parameter(Tensor):
    """Trainable leaf tensor with an always-allocated gradient buffer."""

    __slots__ = ()

    def __init__(self, data, name: str = ""):
        super().__init__(np.array(data, dtype=np.float64, copy=True), requires_grad=True, name=name)
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# elementary glue ops -------------------------------------------------------

def _add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backward)


def _neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: a._accumulate(-g))


def _mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward)


def _getitem(a: Tensor, idx) -> Tensor:
    # basic (non-repeating) indexing only
    def backward(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        a._accumulate(full)

    return _result(a.data[idx], (a,), backward)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return _result(np.concatenate([t.data for t in ts], axis=axis), ts, backward)


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    return _result(np.swapaxes(a.data, ax1, ax2), (a,),
                   lambda g: a._accumulate(np.swapaxes(g, ax1, ax2)))


def tsum(a: Tensor) -> Tensor:
    return _result(np.asarray(a.data.sum()), (a,),
                   lambda g: a._accumulate(np.broadcast_to(g, a.shape)))


# layer primitives ----------------------------------------------------------

def linear(x, W: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ W.T + b`` over the last axis of ``x``."""
    x = as_tensor(x)
    if W.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise DimensionError(f"linear: input shape {x.shape} does not match weight shape {W.shape}")
    if b is not None and b.shape != (W.shape[0],):
        raise DimensionError(f"linear: bias shape {b.shape} does not match weight shape {W.shape}")
    out = x.data @ W.data.T
    if b is not None:
        out = out + b.data
    parents = (x, W) if b is None else (x, W, b)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ W.data)
        g2 = g.reshape(-1, W.shape[0])
        if W.requires_grad:
            W._accumulate(g2.T @ x.data.reshape(-1, W.shape[1]))
        if b is not None and b.requires_grad:
            b._accumulate(g2.sum(axis=0))

    return _result(out, parents, backward)


def causal_dilated_conv1d(x, kernel: Tensor, dilation: int = 1, bias: Tensor | None = None) -> Tensor:
    """Causal dilated convolution with left zero padding.

    ``x`` is ``(C_in, T)`` or ``(B, C_in, T)``; ``kernel`` is ``(C_out, C_in, K)``.
    Tap ``j`` reads ``x[:, t - j * dilation]``, so output ``t`` never sees
    inputs later than ``t``.
    """
    x = as_tensor(x)
    if int(dilation) != dilation or dilation < 1:
        raise ParameterError(f"dilation must be a positive integer, got {dilation!r}")
    dilation = int(dilation)
    if kernel.ndim != 3 or kernel.shape[2] < 1:
        raise DimensionError(f"conv1d: kernel shape {kernel.shape} is not (C_out, C_in, K)")
    if x.ndim not in (2, 3) or x.shape[-2] != kernel.shape[1]:
        raise DimensionError(f"conv1d: input shape {x.shape} does not match kernel shape {kernel.shape}")
    if bias is not None and bias.shape != (kernel.shape[0],):
        raise DimensionError(f"conv1d: bias shape {bias.shape} does not match kernel shape {kernel.shape}")

    T = x.shape[-1]
    K = kernel.shape[2]
    # contiguous per-tap matrices keep matmul on the BLAS path
    taps = [np.ascontiguousarray(kernel.data[:, :, j]) for j in range(K)]
    out = np.zeros(x.shape[:-2] + (kernel.shape[0], T))
    for j in range(K):
        shift = j * dilation
        if shift >= T:
            break
        out[..., shift:] += taps[j] @ x.data[..., : T - shift]
    if bias is not None:
        out += bias.data[:, None]
    parents = (x, kernel) if bias is None else (x, kernel, bias)
    batch_axes = [0, 2] if x.ndim == 3 else [1]

    def backward(g):
        gx = np.zeros_like(x.data) if x.requires_grad else None
        gk = np.zeros_like(kernel.data) if kernel.requires_grad else None
        for j in range(K):
            shift = j * dilation
            if shift >= T:
                break
            g_part = g[..., shift:]
            if gx is not None:
                gx[..., : T - shift] += taps[j].T @ g_part
            if gk is not None:
                gk[:, :, j] = np.tensordot(g_part, x.data[..., : T - shift], axes=(batch_axes, batch_axes))
        if gx is not None:
            x._accumulate(gx)
        if gk is not None:
            kernel._accumulate(gk)
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=tuple(a for a in range(g.ndim) if a != g.ndim - 2)))

    return _result(out, parents, backward)


def lstm_cell_step(x, h_prev, c_prev, W_ih: Tensor, W_hh: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM step with gate rows ordered (input, forget, cell, output)."""
    x, h_prev, c_prev = as_tensor(x), as_tensor(h_prev), as_tensor(c_prev)
    d_h = W_hh.shape[1]
    if W_ih.shape[0] != 4 * d_h or W_hh.shape != (4 * d_h, d_h) or b.shape != (4 * d_h,):
        raise DimensionError(
            f"lstm: inconsistent parameter shapes W_ih {W_ih.shape}, W_hh {W_hh.shape}, b {b.shape}")
    if h_prev.shape[-1] != d_h or c_prev.shape != h_prev.shape:
        raise DimensionError(f"lstm: state shapes h {h_prev.shape}, c {c_prev.shape} do not match hidden size {d_h}")
    z = linear(x, W_ih, b) + linear(h_prev, W_hh)
    i = sigmoid(z[..., :d_h])
    f = sigmoid(z[..., d_h: 2 * d_h])
    g = tanh(z[..., 2 * d_h: 3 * d_h])
    o = sigmoid(z[..., 3 * d_h:])
    c = f * c_prev + i * g
    h = o * tanh(c)
    return h, c


def _sigmoid(v: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * v) + 1.0)


_ELEMENTWISE = {
    # kind: (forward, derivative expressed via (input, output))
    "tanh": (np.tanh, lambda v, y: 1.0 - y * y),
    "sigmoid": (_sigmoid, lambda v, y: y * (1.0 - y)),
    "relu": (lambda v: np.maximum(v, 0.0), lambda v, y: (v > 0).astype(np.float64)),
    "abs": (np.abs, lambda v, y: np.sign(v)),
}


def elementwise(kind: str, x) -> Tensor:
    x = as_tensor(x)
    try:
        fwd, deriv = _ELEMENTWISE[kind]
    except KeyError:
        raise ParameterError(f"unknown elementwise kind {kind!r}") from None
    y = fwd(x.data)
    if _kink_margins is not None and kind in ("relu", "abs") and x.data.size:
        _kink_margins.append(float(np.abs(x.data).min()))
    return _result(y, (x,), lambda g: x._accumulate(g * deriv(x.data, y)))


def tanh(x) -> Tensor:
    return elementwise("tanh", x)


def sigmoid(x) -> Tensor:
    return elementwise("sigmoid", x)


def relu(x) -> Tensor:
    return elementwise("relu", x)


def absolute(x) -> Tensor:
    return elementwise("abs", x)


def mse_loss(pred, target) -> Tensor:
    """Sum of squared errors divided by the number of frames.

    The last axis is the per-frame feature axis; every other axis counts frames.
    """
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"mse_loss: prediction shape {pred.shape} != target shape {target.shape}")
    n_frames = max(pred.data.size // pred.shape[-1], 1) if pred.ndim else 1
    diff = pred.data - target.data

    def backward(g):
        scale = 2.0 * g / n_frames
        if pred.requires_grad:
            pred._accumulate(scale * diff)
        if target.requires_grad:
            target._accumulate(-scale * diff)

    return _result(np.asarray((diff * diff).sum() / n_frames), (pred, target), backward)


# verification harness --------------------------------------------------------

def grad_check(fn: Callable[[], Tensor], inputs: Iterable[Tensor], h: float = 1e-5) -> float:
    """Compare backprop gradients of ``sum(fn())`` with central differences.

    Returns the largest, over ``inputs``, of
    ``max|analytic - numeric| / max(max|analytic|, max|numeric|, 1e-8)``.
    """
    if not 0.0 < h <= 1e-3:
        raise ParameterError(f"finite-difference step must lie in (0, 1e-3], got {h}")
    inputs = list(inputs)
    for t in inputs:
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = np.zeros_like(t.data)
    tsum(fn()).backward()
    analytic = [t.grad.copy() for t in inputs]

    worst = 0.0
    with no_grad():
        for t, a in zip(inputs, analytic):
            numeric = np.zeros_like(t.data)
            flat = t.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                f_plus = float(fn().data.sum())
                flat[i] = orig - h
                f_minus = float(fn().data.sum())
                flat[i] = orig
                numeric.reshape(-1)[i] = (f_plus - f_minus) / (2.0 * h)
            scale = max(np.abs(a).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
            worst = max(worst, float(np.abs(a - numeric).max(initial=0.0) / scale))
    return worst
