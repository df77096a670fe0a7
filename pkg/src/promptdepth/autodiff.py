"""Dense float64 tensors with taped reverse-mode differentiation.

Everything runs in float64 on numpy buffers. Differentiable operations
record themselves on the innermost active :class:`Tape`; ``backward``
replays the record in strict reverse execution order and accumulates
gradients into the ``grad`` slot of every leaf that requires them.
Tapes are rebuilt per forward pass (define-by-run); nothing is cached
between passes.

A :class:`FlopsCounter` can be scoped around any piece of forward code
to accumulate a deterministic multiply-add count per named subgraph.
"""

from __future__ import annotations

from contextlib import contextmanager
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import GraphError, ParameterError, ShapeError

_tape_stack: list["Tape"] = []
_flop_scopes: list[tuple["FlopsCounter", str]] = []


class Tensor:
    """A dense float64 array, optionally participating in gradient taping.

    Tensors written by an operation are treated as immutable; parameters
    (leaves) may only be rebound between forward/backward passes, which
    is what the optimizer does.
    """

    __slots__ = ("data", "requires_grad", "grad", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._tape: "Tape | None" = None

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
        if self.data.size != 1:
            raise ShapeError(f"item() needs a one-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def sum(self, axis=None):
        return reduce_sum(self, axis=axis)

    def mean(self, axis=None):
        return reduce_mean(self, axis=axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


class Tape:
    """Execution-ordered record of differentiable operations.

    Used as a context manager; one forward/backward pass owns the tape
    exclusively. Replaying backward visits operations in strict reverse
    execution order.
    """

    def __init__(self):
        self._entries: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self._output_ids: set[int] = set()

    def __enter__(self) -> "Tape":
        _tape_stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack.pop()
        if popped is not self:  # pragma: no cover - misuse guard
            raise GraphError("tape context stack corrupted")
        return False

    def __len__(self) -> int:
        return len(self._entries)

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> None:
        self._entries.append((out, inputs, backward_fn))
        self._output_ids.add(id(out))
        out._tape = self

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every requires_grad leaf reachable from ``loss``."""
        if loss.data.size != 1:
            raise GraphError(f"backward target must be scalar, got shape {loss.shape}")
        if id(loss) not in self._output_ids:
            if loss.requires_grad:
                _accumulate_leaf(loss, np.ones_like(loss.data))
            return
        pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, inputs, backward_fn in reversed(self._entries):
            out_grad = pending.pop(id(out), None)
            if out_grad is None:
                continue
            for tensor, grad in zip(inputs, backward_fn(out_grad)):
                if grad is None or not tensor.requires_grad:
                    continue
                if id(tensor) in self._output_ids:
                    held = pending.get(id(tensor))
                    pending[id(tensor)] = grad if held is None else held + grad
                else:
                    _accumulate_leaf(tensor, grad)


def _accumulate_leaf(tensor: Tensor, grad: np.ndarray) -> None:
    tensor.grad = np.array(grad) if tensor.grad is None else tensor.grad + grad


def backward(loss: Tensor) -> None:
    """Run reverse-mode differentiation from a scalar loss."""
    if loss._tape is None:
        if loss.requires_grad and loss.data.size == 1:
            _accumulate_leaf(loss, np.ones_like(loss.data))
            return
        raise GraphError("loss was not recorded on any tape")
    loss._tape.backward(loss)


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None


class FlopsCounter:
    """Accumulates multiply-add counts per named subgraph.

    Counts depend only on operand shapes, so they are deterministic for
    a fixed graph, and nested/sequential scopes are additive.
    """

    def __init__(self):
        self.counts: dict[str, int] = {}

    @contextmanager
    def scope(self, name: str):
        self.counts.setdefault(name, 0)
        _flop_scopes.append((self, name))
        try:
            yield self
        finally:
            _flop_scopes.pop()

    def __getitem__(self, name: str) -> int:
        return self.counts[name]


def _add_flops(macs: int) -> None:
    for counter, name in _flop_scopes:
        counter.counts[name] += int(macs)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    out.requires_grad = any(t.requires_grad for t in inputs)
    if _tape_stack and out.requires_grad:
        _tape_stack[-1]._record(out, inputs, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise and structural ops


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data
    if _flop_scopes:
        _add_flops(data.size)
    ash, bsh = a.data.shape, b.data.shape
    return _emit(data, (a, b), lambda g: (_unbroadcast(g, ash), _unbroadcast(g, bsh)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data - b.data
    if _flop_scopes:
        _add_flops(data.size)
    ash, bsh = a.data.shape, b.data.shape
    return _emit(data, (a, b), lambda g: (_unbroadcast(g, ash), _unbroadcast(-g, bsh)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data
    if _flop_scopes:
        _add_flops(data.size)
    ad, bd = a.data, b.data
    return _emit(
        data,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def scale(a, s: float) -> Tensor:
    a = _as_tensor(a)
    s = float(s)
    data = a.data * s
    if _flop_scopes:
        _add_flops(data.size)
    return _emit(data, (a,), lambda g: (g * s,))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    data = np.maximum(a.data, 0.0)
    gate = a.data > 0.0
    return _emit(data, (a,), lambda g: (g * gate,))


def absolute(a) -> Tensor:
    a = _as_tensor(a)
    sign = np.sign(a.data)
    return _emit(np.abs(a.data), (a,), lambda g: (g * sign,))


def reduce_sum(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    data = a.data.sum(axis=axis)
    if _flop_scopes:
        _add_flops(a.data.size)
    shape = a.data.shape

    def backward_fn(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        gx = np.expand_dims(g, axis)
        return (np.broadcast_to(gx, shape).copy(),)

    return _emit(data, (a,), backward_fn)


def reduce_mean(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return scale(reduce_sum(a, axis=axis), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    orig = a.data.shape
    return _emit(a.data.reshape(shape), (a,), lambda g: (g.reshape(orig),))


def transpose(a, axes) -> Tensor:
    a = _as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _emit(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def concat(tensors, axis: int = 0) -> Tensor:
    ts = tuple(_as_tensor(t) for t in tensors)
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return _emit(data, ts, backward_fn)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    a = _as_tensor(a)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    shape = a.data.shape

    def backward_fn(g):
        full = np.zeros(shape)
        full[idx] = g
        return (full,)

    return _emit(a.data[idx].copy(), (a,), backward_fn)


# ---------------------------------------------------------------------------
# linear algebra and network primitives


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim == b.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul inner dims disagree: {a.shape} x {b.shape}")
        macs = a.shape[0] * a.shape[1] * b.shape[1]
    elif a.ndim == b.ndim == 3:
        if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
            raise ShapeError(f"batched matmul dims disagree: {a.shape} x {b.shape}")
        macs = a.shape[0] * a.shape[1] * a.shape[2] * b.shape[2]
    else:
        raise ShapeError(f"matmul supports 2-D or batched 3-D operands, got {a.shape} x {b.shape}")
    data = a.data @ b.data
    if _flop_scopes:
        _add_flops(macs)
    ad, bd = a.data, b.data

    if a.ndim == 2:
        backward_fn = lambda g: (g @ bd.T, ad.T @ g)
    else:
        backward_fn = lambda g: (g @ bd.transpose(0, 2, 1), ad.transpose(0, 2, 1) @ g)
    return _emit(data, (a, b), backward_fn)


def softmax(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    if _flop_scopes:
        _add_flops(5 * y.size)

    def backward_fn(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _emit(y, (a,), backward_fn)


def layer_norm(a, gamma, beta, eps: float = 1e-6) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    if eps <= 0:
        raise ParameterError(f"layer_norm eps must be positive, got {eps}")
    a, gamma, beta = _as_tensor(a), _as_tensor(gamma), _as_tensor(beta)
    n = a.data.shape[-1]
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = gamma.data * xhat + beta.data
    if _flop_scopes:
        _add_flops(8 * out.size)
    lead = tuple(range(a.ndim - 1))
    gdata = gamma.data

    def backward_fn(g):
        dgamma = (g * xhat).sum(axis=lead) if lead else g * xhat
        dbeta = g.sum(axis=lead) if lead else g
        dxhat = g * gdata
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return (dx, dgamma, dbeta)

    return _emit(out, (a, gamma, beta), backward_fn)


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def conv2d(x, w, b, stride=1, padding=None) -> Tensor:
    """2-D cross-correlation of ``x[C,H,W]`` with ``w[O,C,kh,kw]`` plus bias.

    ``padding=None`` means "same" padding, which requires odd kernel
    extents. Output extents must come out integral for the given stride.
    """
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.ndim != 3 or w.ndim != 4:
        raise ShapeError(f"conv2d expects x[C,H,W], w[O,C,kh,kw]; got {x.shape}, {w.shape}")
    c, h, wd = x.shape
    o, ci, kh, kw = w.shape
    if ci != c:
        raise ShapeError(f"conv2d channel mismatch: input {c}, kernel {ci}")
    if b.shape != (o,):
        raise ShapeError(f"conv2d bias must have shape ({o},), got {b.shape}")
    sh, sw = _pair(stride)
    if padding is None:
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError("even kernel extents need explicit padding")
        ph, pw = kh // 2, kw // 2
    else:
        ph, pw = _pair(padding)
    if (h + 2 * ph - kh) % sh or (wd + 2 * pw - kw) % sw:
        raise ShapeError(
            f"conv2d output extent not integral for input {h}x{wd}, "
            f"kernel {kh}x{kw}, stride {sh}x{sw}, padding {ph}x{pw}"
        )
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1

    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw)))
    windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::sh, ::sw]
    cols = windows.transpose(1, 2, 0, 3, 4).reshape(ho * wo, c * kh * kw)
    w2 = w.data.reshape(o, -1)
    out = (cols @ w2.T + b.data).T.reshape(o, ho, wo)
    if _flop_scopes:
        _add_flops(o * c * kh * kw * ho * wo)
    wshape = w.data.shape

    def backward_fn(g):
        g2 = g.reshape(o, ho * wo).T
        dw = (g2.T @ cols).reshape(wshape)
        db = g2.sum(axis=0)
        dcols = g2 @ w2
        dx = _col2im(dcols, c, h, wd, kh, kw, sh, sw, ph, pw, ho, wo)
        return (dx, dw, db)

    return _emit(out, (x, w, b), backward_fn)


def _col2im(dcols, c, h, w, kh, kw, sh, sw, ph, pw, ho, wo) -> np.ndarray:
    padded = np.zeros((c, h + 2 * ph, w + 2 * pw))
    blocks = dcols.reshape(ho, wo, c, kh, kw).transpose(2, 3, 4, 0, 1)
    for i in range(kh):
        for j in range(kw):
            padded[:, i : i + sh * ho : sh, j : j + sw * wo : sw] += blocks[:, i, j]
    return padded[:, ph : ph + h, pw : pw + w]


@lru_cache(maxsize=128)
def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-interpolation matrix for the align-corners-false convention.

    Sample centers map as ``src = (dst + 0.5) * n_in / n_out - 0.5``,
    clamped to the valid range. The returned array is cached; callers
    must not mutate it.
    """
    m = np.zeros((n_out, n_in))
    if n_in == 1:
        m[:, 0] = 1.0
        return m
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - frac)
    np.add.at(m, (rows, i1), frac)
    return m


def bilinear_resize(x, out_h: int, out_w: int) -> Tensor:
    """Resize ``x[C,H,W]`` to ``[C,out_h,out_w]`` bilinearly (align-corners false)."""
    x = _as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"bilinear_resize expects x[C,H,W], got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ParameterError(f"target extents must be >= 1, got {out_h}x{out_w}")
    _, h, w = x.shape
    ry = _interp_matrix(h, int(out_h))
    rx = _interp_matrix(w, int(out_w))
    data = np.matmul(np.matmul(ry, x.data), rx.T)
    if _flop_scopes:
        _add_flops(4 * data.size)

    def backward_fn(g):
        return (np.matmul(np.matmul(ry.T, g), rx),)

    return _emit(data, (x,), backward_fn)


def resize2d(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Plain-numpy bilinear resize of a 2-D array, same convention as above."""
    values = np.asarray(values, dtype=np.float64)
    ry = _interp_matrix(values.shape[0], int(out_h))
    rx = _interp_matrix(values.shape[1], int(out_w))
    return ry @ values @ rx.T


# ---------------------------------------------------------------------------
# verification helper


def gradcheck(fn, inputs, rel_tol: float = 1e-4, step: float = 1e-5) -> float:
    """Compare taped gradients of ``fn(*inputs)`` with central differences.

    Every input must be a requires_grad leaf. Returns the worst relative
    error over all input elements and raises ``GraphError`` when it
    exceeds ``rel_tol``. The relative error denominator is floored at
    1e-3, which turns the check into an absolute one for near-zero
    gradients.
    """
    inputs = tuple(inputs)
    zero_grads(inputs)
    with Tape() as tape:
        out = fn(*inputs)
    if out.data.size != 1:
        raise GraphError("gradcheck target must be scalar")
    tape.backward(out)

    worst = 0.0
    for t in inputs:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        for idx in np.ndindex(t.data.shape):
            keep = t.data[idx]
            t.data[idx] = keep + step
            hi = fn(*inputs).item()
            t.data[idx] = keep - step
            lo = fn(*inputs).item()
            t.data[idx] = keep
            numeric = (hi - lo) / (2.0 * step)
            a = analytic[idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-3)
            worst = max(worst, err)
    if worst > rel_tol:
        raise GraphError(f"gradient check failed: worst relative error {worst:.3e}")
    return worst
