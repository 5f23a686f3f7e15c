"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to one gradient per parent.  ``backward``
walks the graph once in reverse topological order and accumulates into
``.grad`` of every leaf that requires it.

4-D activations use the (batch, channel, height, width) layout.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import sparse
from scipy.special import erf

from . import _kernels

DTYPE = np.float64

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class ShapeError(ValueError):
    """Raised when operand extents are incompatible."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self.name = name

    # ------------------------------------------------------------------ basics
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # -------------------------------------------------------------- operators
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    # --------------------------------------------------------------- backward
    def backward(self, grad: np.ndarray | None = None, retain_graph: bool = False) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``.grad``.

        Without an explicit ``grad`` the tensor must be a scalar. Unless
        ``retain_graph`` is set, each interior node drops its saved context
        once used, so a second backward through the same graph is an error.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError(
                    f"backward() without a seed gradient needs a scalar, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)
        backward(self, grad, retain_graph)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the graph (inference, validation, probes)."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _result(data: np.ndarray, parents: Iterable[Tensor], fn: BackwardFn) -> Tensor:
    parents = tuple(parents)
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = fn
    return out


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _released(g):
    raise RuntimeError("graph already released by an earlier backward(); pass retain_graph=True")


def backward(root: Tensor, grad: np.ndarray, retain_graph: bool = False) -> None:
    if not root.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(root): np.asarray(grad, dtype=DTYPE)}
    order = _toposort(root)
    while order:
        node = order.pop()
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parents, fn = node._parents, node._backward
        if not retain_graph:
            node._backward, node._parents = _released, ()
        for parent, pg in zip(parents, fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                raise ShapeError(f"gradient shape {pg.shape} != tensor shape {parent.shape}")
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
        del parents, fn, g


def unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return _result(
        a.data + b.data,
        (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return _result(
        a.data - b.data,
        (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    out = a.data / b.data
    return _result(
        out,
        (a, b),
        lambda g: (unbroadcast(g / b.data, a.shape), unbroadcast(-g * out / b.data, b.shape)),
    )


def scale(x: Tensor, c: float) -> Tensor:
    return _result(x.data * c, (x,), lambda g: (g * c,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _result(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return _result(np.log(x.data), (x,), lambda g: (g / x.data,))


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _result(out, (x,), lambda g: (g * out * (1.0 - out),))


def softplus(x: Tensor) -> Tensor:
    d = x.data
    out = np.logaddexp(0.0, d)
    return _result(out, (x,), lambda g: (g * 0.5 * (1.0 + np.tanh(0.5 * d)),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    d = x.data
    cdf = 0.5 * (1.0 + erf(d * _INV_SQRT2))
    pdf = np.exp(-0.5 * d * d) * _INV_SQRT2PI
    return _result(d * cdf, (x,), lambda g: (g * (cdf + d * pdf),))


def absolute(x: Tensor) -> Tensor:
    return _result(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


# ----------------------------------------------------------------- reductions
def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(out, (x,), bw)


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    n = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return scale(tsum(x, axes, keepdims), 1.0 / n)


# ---------------------------------------------------------------- shape ops
def reshape(x: Tensor, shape) -> Tensor:
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _result(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def getitem(x: Tensor, idx) -> Tensor:
    def bw(g):
        out = np.zeros_like(x.data)
        np.add.at(out, idx, g)
        return (out,)

    return _result(x.data[idx], (x,), bw)


def take(x: Tensor, index: np.ndarray, axis: int) -> Tensor:
    """Gather ``x`` along ``axis`` with an integer index array (repeats allowed)."""
    index = np.asarray(index, dtype=np.intp)
    axis %= x.ndim
    n = x.shape[axis]

    unique = np.unique(index).size == index.size
    if not unique:
        # one-hot scatter matrix; a sparse product beats np.add.at by an order of magnitude
        onehot = sparse.csr_matrix(
            (np.ones(index.size), (index, np.arange(index.size))), shape=(n, index.size)
        )

    def bw(g):
        gm = np.moveaxis(g, axis, 0)
        if unique:
            out = np.zeros((n,) + gm.shape[1:], dtype=DTYPE)
            out[index] = gm
        else:
            out = np.asarray(onehot @ gm.reshape(index.size, -1)).reshape((n,) + gm.shape[1:])
        return (np.moveaxis(out, 0, axis),)

    return _result(np.take(x.data, index, axis=axis), (x,), bw)


def split(x: Tensor, parts: int, axis: int) -> list[Tensor]:
    axis %= x.ndim
    n = x.shape[axis]
    if parts <= 0 or n % parts:
        raise ShapeError(f"cannot split extent {n} of shape {x.shape} into {parts} parts")
    step = n // parts
    return [narrow(x, axis, i * step, step) for i in range(parts)]


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    axis %= x.ndim
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def bw(g):
        out = np.zeros_like(x.data)
        out[sl] = g
        return (out,)

    return _result(x.data[sl], (x,), bw)


def concat(xs: Sequence[Tensor], axis: int) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    if not xs:
        raise ShapeError("concat of an empty list")
    axis %= xs[0].ndim
    ref = xs[0].shape
    for t in xs[1:]:
        if t.ndim != len(ref) or any(
            t.shape[i] != ref[i] for i in range(len(ref)) if i != axis
        ):
            raise ShapeError(f"concat shape mismatch {ref} vs {t.shape} on axis {axis}")
    bounds = np.cumsum([0] + [t.shape[axis] for t in xs])

    def bw(g):
        out = []
        for i in range(len(xs)):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(bounds[i], bounds[i + 1])
            out.append(g[tuple(sl)])
        return out

    return _result(np.concatenate([t.data for t in xs], axis=axis), xs, bw)


# ------------------------------------------------------------------- linear
def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    try:
        out = a.data @ b.data
    except ValueError:
        raise ShapeError(f"matmul batch dims not broadcastable: {a.shape} @ {b.shape}") from None

    def bw(g):
        ga = unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        gb = unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _result(out, (a, b), bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x[..., in] @ weight[in, out] + bias[out]`` as a single graph node."""
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ weight.data
    if bias is not None:
        out = out + bias.data
    out = out.reshape(lead + (weight.shape[1],))

    def bw(g):
        g2 = g.reshape(-1, weight.shape[1])
        gx = (g2 @ weight.data.T).reshape(x.shape)
        gw = x2.T @ g2
        gb = g2.sum(axis=0) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return _result(out, parents, bw)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale by ``gamma`` and shift by ``beta``."""
    d = x.data
    mu = d.mean(axis=-1, keepdims=True)
    xc = d - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = xhat * gamma.data + beta.data

    def bw(g):
        gxhat = g * gamma.data
        gx = rstd * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        red = tuple(range(d.ndim - 1))
        return gx, (g * xhat).sum(axis=red), g.sum(axis=red)

    return _result(out, (x, gamma, beta), bw)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    return _result(p, (x,), lambda g: (p * (g - (g * p).sum(axis=-1, keepdims=True)),))


# -------------------------------------------------------------- convolution
def _col2im(gcols: np.ndarray, shape, kh, kw, stride, Ho, Wo) -> np.ndarray:
    """Adjoint of the sliding-window view: scatter-add [B, C, Ho, Wo, kh, kw] into ``shape``."""
    out = np.zeros(shape, dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += gcols[..., i, j]
    return out


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """2-D cross-correlation, weight laid out as [Cout, Cin/groups, kh, kw]."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and weight, got {x.shape}, {weight.shape}")
    B, cin, H, W = x.shape
    cout, cin_g, kh, kw = weight.shape
    if groups <= 0 or cin % groups or cout % groups:
        raise ShapeError(f"channels {cin}->{cout} not divisible by groups={groups}")
    if cin // groups != cin_g:
        raise ShapeError(f"weight expects {cin_g * groups} input channels, input has {cin}")
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    if Ho <= 0 or Wo <= 0:
        raise ShapeError(f"conv2d output extent would be {Ho}x{Wo} for input {x.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    w = weight.data
    depthwise = groups == cin and cout == cin

    if depthwise:
        xp = np.ascontiguousarray(xp)
        out = _kernels.depthwise_forward(xp, np.ascontiguousarray(w), stride, Ho, Wo)
    elif groups == 1:
        # im2col: rows are output pixels, columns are (cin, kh, kw) taps
        if kh == 1 and kw == 1 and stride == 1:
            cols = xp.transpose(0, 2, 3, 1).reshape(-1, cin)
        else:
            win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
            cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(-1, cin * kh * kw)
        wmat = w.reshape(cout, -1)
        out = (cols @ wmat.T).reshape(B, Ho, Wo, cout).transpose(0, 3, 1, 2)
    else:
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        cg = win.reshape(B, groups, cin_g, Ho, Wo, kh, kw)
        wg = w.reshape(groups, cout // groups, cin_g, kh, kw)
        out = np.einsum("bgchwij,gocij->bgohw", cg, wg, optimize=True).reshape(B, cout, Ho, Wo)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def bw(g):
        if depthwise:
            gxp, gw = _kernels.depthwise_backward(xp, np.ascontiguousarray(w), np.ascontiguousarray(g), stride)
        elif groups == 1:
            g2 = g.transpose(0, 2, 3, 1).reshape(-1, cout)
            gw = (g2.T @ cols).reshape(w.shape)
            gcols = g2 @ wmat
            if kh == 1 and kw == 1 and stride == 1:
                gxp = gcols.reshape(B, Ho, Wo, cin).transpose(0, 3, 1, 2)
            else:
                gcols = gcols.reshape(B, Ho, Wo, cin, kh, kw).transpose(0, 3, 1, 2, 4, 5)
                gxp = _col2im(gcols, xp.shape, kh, kw, stride, Ho, Wo)
        else:
            gg = g.reshape(B, groups, cout // groups, Ho, Wo)
            gw = np.einsum("bgohw,bgchwij->gocij", gg, cg, optimize=True).reshape(w.shape)
            gcols = np.einsum("bgohw,gocij->bgchwij", gg, wg, optimize=True).reshape(B, cin, Ho, Wo, kh, kw)
            gxp = _col2im(gcols, xp.shape, kh, kw, stride, Ho, Wo)
        gx = gxp[:, :, padding : padding + H, padding : padding + W] if padding else gxp
        grads = [np.ascontiguousarray(gx), gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return _result(out, parents, bw)


def attention(q: Tensor, k: Tensor, v: Tensor, bias: Tensor | None, scale_: float) -> Tensor:
    """softmax(q k^T * scale_ + bias) v for q, k, v of shape [windows, heads, tokens, d]
    and bias [heads, tokens, tokens]; only the probabilities are kept for backward."""
    qd, kd, vd = (np.ascontiguousarray(t.data) for t in (q, k, v))
    has_bias = bias is not None
    bd = np.ascontiguousarray(bias.data) if has_bias else np.zeros((1, 1, 1))
    out, p = _kernels.attention_forward(qd, kd, vd, bd, has_bias, scale_)

    def bw(g):
        gq, gk, gv, gb = _kernels.attention_backward(qd, kd, vd, p, np.ascontiguousarray(g), scale_, has_bias)
        return (gq, gk, gv, gb) if has_bias else (gq, gk, gv)

    parents = (q, k, v, bias) if has_bias else (q, k, v)
    return _result(out, parents, bw)


# ------------------------------------------------------------ resampling ops
def avg_pool2(x: Tensor) -> Tensor:
    """2x2 mean pooling with stride 2 over the last two axes."""
    *lead, H, W = x.shape
    if H % 2 or W % 2:
        raise ShapeError(f"avg_pool2 needs even spatial extents, got {H}x{W}")
    d = x.data
    # pairwise order keeps the sum of four equal values exact
    out = ((d[..., 0::2, 0::2] + d[..., 0::2, 1::2]) + (d[..., 1::2, 0::2] + d[..., 1::2, 1::2])) * 0.25

    def bw(g):
        q = g * 0.25
        gx = np.empty_like(d)
        gx[..., 0::2, 0::2] = q
        gx[..., 0::2, 1::2] = q
        gx[..., 1::2, 0::2] = q
        gx[..., 1::2, 1::2] = q
        return (gx,)

    return _result(out, (x,), bw)


def _up2_axis(d: np.ndarray, axis: int) -> np.ndarray:
    # half-pixel centres: even outputs lean toward the previous sample, odd toward the next
    d = np.moveaxis(d, axis, -1)
    prev = np.concatenate([d[..., :1], d[..., :-1]], axis=-1)
    nxt = np.concatenate([d[..., 1:], d[..., -1:]], axis=-1)
    out = np.empty(d.shape[:-1] + (2 * d.shape[-1],), dtype=DTYPE)
    out[..., 0::2] = d + 0.25 * (prev - d)
    out[..., 1::2] = d + 0.25 * (nxt - d)
    return np.moveaxis(out, -1, axis)


def _up2_axis_adjoint(g: np.ndarray, axis: int) -> np.ndarray:
    g = np.moveaxis(g, axis, -1)
    ge, go = g[..., 0::2], g[..., 1::2]
    out = 0.75 * (ge + go)
    out[..., :-1] += 0.25 * ge[..., 1:]
    out[..., 0] += 0.25 * ge[..., 0]
    out[..., 1:] += 0.25 * go[..., :-1]
    out[..., -1] += 0.25 * go[..., -1]
    return np.moveaxis(out, -1, axis)


def bilinear_up2(x: Tensor) -> Tensor:
    """Bilinear x2 upsampling of the last two axes (align_corners=False, edge clamp)."""
    out = _up2_axis(_up2_axis(x.data, -2), -1)
    return _result(
        out, (x,), lambda g: (_up2_axis_adjoint(_up2_axis_adjoint(g, -1), -2),)
    )


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    B, C, H, W = x.shape
    if C % (r * r):
        raise ShapeError(f"pixel_shuffle: {C} channels not divisible by r^2={r * r}")
    c = C // (r * r)
    out = x.data.reshape(B, c, r, r, H, W).transpose(0, 1, 4, 2, 5, 3).reshape(B, c, H * r, W * r)

    def bw(g):
        return (g.reshape(B, c, H, r, W, r).transpose(0, 1, 3, 5, 2, 4).reshape(x.shape),)

    return _result(out, (x,), bw)


def reflect_index(n: int, before: int, after: int) -> np.ndarray:
    """Source indices for reflect padding (edge not repeated); pads may exceed ``n``."""
    if n == 1:
        return np.zeros(n + before + after, dtype=np.intp)
    return np.pad(np.arange(n), (before, after), mode="reflect")


def pad_reflect(x: Tensor, pad_h: int, pad_w: int) -> Tensor:
    """Reflect-pad the bottom and right edges of a [..., H, W] tensor."""
    if pad_h == 0 and pad_w == 0:
        return x
    H, W = x.shape[-2:]
    y = take(x, reflect_index(H, 0, pad_h), axis=-2)
    return take(y, reflect_index(W, 0, pad_w), axis=-1)


def crop(x: Tensor, h: int, w: int) -> Tensor:
    if x.shape[-2:] == (h, w):
        return x
    return narrow(narrow(x, -2, 0, h), -1, 0, w)
