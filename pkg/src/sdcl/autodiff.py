"""Dense float64 tensors with reverse-mode differentiation.

Only the operations the pipeline needs are registered: elementwise
arithmetic, fused dense and 3x3 convolution kernels, channel statistics,
the softmax family (including sparse top-k gating), pooling, and the
reductions the losses use. There is no general broadcasting; binary
operations accept equal shapes, a scalar tensor on either side, or a
plain numpy constant that broadcasts without growing the tensor operand.

Every operation validates that its output is finite and raises
``NumericError`` otherwise. Gradients are accumulated, never overwritten:
calling ``backward`` twice doubles leaf gradients unless they are reset.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, NumericError, ShapeError

Array = np.ndarray

# Floor applied to channel standard deviations wherever they appear in a
# denominator. Keeps constant channels from blowing up the backward pass.
STD_FLOOR = 1e-5


def _check_finite(arr: Array, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{op} produced a non-finite value")


class Tensor:
    """A float64 array plus an optional slot in a backward graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, "Tensor")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[Array], tuple[Array | None, ...]] | None = None

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
            raise ContractError("item() requires a single-element tensor")
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def grad_or_zero(self) -> Array:
        """The accumulated gradient; a leaf off every path to the loss has zero."""
        if self.grad is None:
            return np.zeros_like(self.data)
        return self.grad

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # -- graph -----------------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from a scalar loss, accumulating into leaf grads."""
        if self.data.ndim != 0:
            raise ContractError(
                f"backward requires a scalar loss, got shape {self.data.shape}"
            )
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

        grads: dict[int, Array] = {id(self): np.ones((), dtype=np.float64)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None:
                    continue
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(_wrap(other)) if isinstance(other, Tensor) else -_np(other))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __truediv__(self, other):
        return div(self, other)


def _np(x) -> Array:
    return np.asarray(x, dtype=np.float64)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(name: str, data: Array, parents: tuple[Tensor, ...], backward) -> Tensor:
    _check_finite(data, name)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _binary_guard(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape == b.data.shape:
        return
    if a.data.ndim == 0 or b.data.ndim == 0:
        return
    raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} do not match")


def _contract_to(g: Array, shape: tuple[int, ...]) -> Array:
    # Reduce a gradient back onto a scalar operand of a mixed-shape binary op.
    if g.shape == shape:
        return g
    return np.asarray(g.sum(), dtype=np.float64).reshape(shape)


# -- elementwise arithmetic -------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = _np(b)
        data = a.data + c
        if data.shape != a.data.shape:
            raise ShapeError(f"add: constant of shape {c.shape} grows tensor {a.data.shape}")

        def bw_const(g: Array):
            return (g,)

        return _node("add", data, (a,), bw_const)

    _binary_guard(a, b, "add")
    data = a.data + b.data

    def bw(g: Array):
        ga = _contract_to(g, a.data.shape) if a.requires_grad else None
        gb = _contract_to(g, b.data.shape) if b.requires_grad else None
        return (ga, gb)

    return _node("add", data, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    def bw(g: Array):
        return (-g,)

    return _node("neg", -a.data, (a,), bw)


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = _np(b)
        data = a.data * c
        if data.shape != a.data.shape:
            raise ShapeError(f"mul: constant of shape {c.shape} grows tensor {a.data.shape}")

        def bw_const(g: Array):
            return (g * c,)

        return _node("mul", data, (a,), bw_const)

    _binary_guard(a, b, "mul")
    data = a.data * b.data

    def bw(g: Array):
        ga = _contract_to(g * b.data, a.data.shape) if a.requires_grad else None
        gb = _contract_to(g * a.data, b.data.shape) if b.requires_grad else None
        return (ga, gb)

    return _node("mul", data, (a, b), bw)


def div(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        return mul(a, 1.0 / _np(b))
    _binary_guard(a, b, "div")
    with np.errstate(divide="ignore", invalid="ignore"):
        data = a.data / b.data
    _check_finite(data, "div")

    def bw(g: Array):
        ga = _contract_to(g / b.data, a.data.shape) if a.requires_grad else None
        gb = (
            _contract_to(-g * a.data / (b.data * b.data), b.data.shape)
            if b.requires_grad
            else None
        )
        return (ga, gb)

    return _node("div", data, (a, b), bw)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bw(g: Array):
        return (g * mask,)

    return _node("relu", np.where(mask, a.data, 0.0), (a,), bw)


def clamp_min(a: Tensor, lo: float) -> Tensor:
    mask = a.data > lo

    def bw(g: Array):
        return (g * mask,)

    return _node("clamp_min", np.maximum(a.data, lo), (a,), bw)


# -- fused layer kernels ------------------------------------------------------


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w.T + b for x of shape (B, in), w of shape (out, in)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or b.data.ndim != 1:
        raise ShapeError("linear expects x (B, in), w (out, in), b (out,)")
    if x.data.shape[1] != w.data.shape[1] or w.data.shape[0] != b.data.shape[0]:
        raise ShapeError(
            f"linear: x {x.data.shape}, w {w.data.shape}, b {b.data.shape} disagree"
        )
    data = x.data @ w.data.T + b.data

    def bw(g: Array):
        gx = g @ w.data if x.requires_grad else None
        gw = g.T @ x.data if w.requires_grad else None
        gb = g.sum(axis=0) if b.requires_grad else None
        return (gx, gw, gb)

    return _node("linear", data, (x, w, b), bw)


def _im2col3(padded: Array, h: int, w: int) -> Array:
    bsz, ch = padded.shape[:2]
    s = padded.strides
    view = np.lib.stride_tricks.as_strided(
        padded,
        shape=(bsz, ch, 3, 3, h, w),
        strides=(s[0], s[1], s[2], s[3], s[2], s[3]),
    )
    return view.transpose(0, 4, 5, 1, 2, 3).reshape(bsz * h * w, ch * 9)


def _col2im3(dcols: Array, bsz: int, ch: int, h: int, w: int) -> Array:
    d = dcols.reshape(bsz, h, w, ch, 3, 3).transpose(0, 3, 4, 5, 1, 2)
    dpad = np.zeros((bsz, ch, h + 2, w + 2), dtype=np.float64)
    for i in range(3):
        for j in range(3):
            dpad[:, :, i : i + h, j : j + w] += d[:, :, i, j]
    return dpad[:, :, 1 : h + 1, 1 : w + 1]


def conv3x3(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Unit-stride, same-padding 3x3 convolution with fused bias."""
    if x.data.ndim != 4:
        raise ShapeError(f"conv3x3 expects (B, C, H, W), got {x.data.shape}")
    if w.data.ndim != 4 or w.data.shape[2:] != (3, 3):
        raise ShapeError(f"conv3x3 expects kernel (O, C, 3, 3), got {w.data.shape}")
    bsz, ch, h, wd = x.data.shape
    out_ch = w.data.shape[0]
    if w.data.shape[1] != ch or b.data.shape != (out_ch,):
        raise ShapeError(
            f"conv3x3: x {x.data.shape}, w {w.data.shape}, b {b.data.shape} disagree"
        )
    padded = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = _im2col3(padded, h, wd)
    wmat = w.data.reshape(out_ch, ch * 9)
    out = cols @ wmat.T + b.data
    data = out.reshape(bsz, h, wd, out_ch).transpose(0, 3, 1, 2).copy()

    def bw(g: Array):
        gmat = g.transpose(0, 2, 3, 1).reshape(bsz * h * wd, out_ch)
        gw = (gmat.T @ cols).reshape(out_ch, ch, 3, 3) if w.requires_grad else None
        gb = gmat.sum(axis=0) if b.requires_grad else None
        gx = None
        if x.requires_grad:
            gx = _col2im3(gmat @ wmat, bsz, ch, h, wd)
        return (gx, gw, gb)

    return _node("conv3x3", data, (x, w, b), bw)


def residual_mixture_conv3x3(
    x: Tensor, gates: Tensor, ws: list[Tensor], bs: list[Tensor]
) -> Tensor:
    """Gate-weighted mixture of residual 3x3 conv experts in one pass.

    Computes sum_i gates[:, i] * (x + conv3x3(x, ws[i], bs[i])) with a single
    shared im2col and one stacked matrix product over the whole expert bank,
    which is what makes a sparse expert mixture affordable on a CPU. Equals
    the per-expert computation up to floating-point summation order.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"residual_mixture_conv3x3 expects (B, C, H, W), got {x.data.shape}")
    n = len(ws)
    if n == 0 or len(bs) != n:
        raise ShapeError("residual_mixture_conv3x3: empty or mismatched expert bank")
    bsz, ch, h, wd = x.data.shape
    if gates.data.shape != (bsz, n):
        raise ShapeError(
            f"residual_mixture_conv3x3: gates {gates.data.shape}, expected ({bsz}, {n})"
        )
    for wi, bi in zip(ws, bs):
        if wi.data.shape != (ch, ch, 3, 3) or bi.data.shape != (ch,):
            raise ShapeError(
                f"residual_mixture_conv3x3: expert kernel {wi.data.shape} / "
                f"bias {bi.data.shape} do not match {ch} channels"
            )

    padded = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = _im2col3(padded, h, wd)
    stack = np.concatenate([w.data.reshape(ch, ch * 9) for w in ws], axis=0)
    bias = np.stack([b.data for b in bs], axis=0)
    outs = (cols @ stack.T).reshape(bsz, h * wd, n, ch) + bias[None, None]
    convs = outs.reshape(bsz, h, wd, n, ch).transpose(0, 3, 4, 1, 2)
    g = gates.data
    scale = g.sum(axis=1)
    data = x.data * scale[:, None, None, None] + np.einsum("bn,bnchw->bchw", g, convs)

    def bw(grad: Array):
        gf = grad.transpose(0, 2, 3, 1).reshape(bsz, h * wd, ch)
        ggates = None
        if gates.requires_grad:
            ggates = np.einsum("bchw,bnchw->bn", grad, convs) + np.einsum(
                "bchw,bchw->b", grad, x.data
            )[:, None]
        dout = np.einsum("bsc,bn->bsnc", gf, g).reshape(bsz * h * wd, n * ch)
        gx = None
        if x.requires_grad:
            gx = grad * scale[:, None, None, None] + _col2im3(
                dout @ stack, bsz, ch, h, wd
            )
        dstack = dout.T @ cols if any(w.requires_grad for w in ws) else None
        gws = [
            dstack[i * ch : (i + 1) * ch].reshape(ch, ch, 3, 3)
            if w.requires_grad
            else None
            for i, w in enumerate(ws)
        ]
        dbias = np.einsum("bn,bc->nc", g, grad.sum(axis=(2, 3)))
        gbs = [dbias[i] if b.requires_grad else None for i, b in enumerate(bs)]
        return (gx, ggates, *gws, *gbs)

    return _node("residual_mixture_conv3x3", data, (x, gates, *ws, *bs), bw)


def avgpool2(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2."""
    if x.data.ndim != 4:
        raise ShapeError(f"avgpool2 expects (B, C, H, W), got {x.data.shape}")
    bsz, ch, h, w = x.data.shape
    if h < 2 or w < 2 or h % 2 or w % 2:
        raise ShapeError(f"avgpool2 needs even spatial dims >= 2, got {h}x{w}")
    data = x.data.reshape(bsz, ch, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def bw(g: Array):
        return (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) / 4.0,)

    return _node("avgpool2", data, (x,), bw)


# -- channel statistics -------------------------------------------------------


def _spatial_guard(x: Tensor, op: str) -> tuple[int, int, int, int]:
    if x.data.ndim != 4:
        raise ShapeError(f"{op} expects (B, C, H, W), got {x.data.shape}")
    bsz, ch, h, w = x.data.shape
    if h * w < 1:
        raise ShapeError(f"{op}: empty spatial extent {h}x{w}")
    return bsz, ch, h, w


def spatial_mean(x: Tensor) -> Tensor:
    """Per-sample, per-channel mean over H and W: (B, C, H, W) -> (B, C)."""
    _, _, h, w = _spatial_guard(x, "spatial_mean")
    data = x.data.mean(axis=(2, 3))

    def bw(g: Array):
        return (np.broadcast_to(g[:, :, None, None], x.data.shape) / (h * w),)

    return _node("spatial_mean", data, (x,), bw)


def channel_std(x: Tensor) -> Tensor:
    """Per-sample, per-channel population std over H and W: -> (B, C).

    The backward pass floors sigma at ``STD_FLOOR`` in its denominator so
    constant channels stay differentiable.
    """
    _, _, h, w = _spatial_guard(x, "channel_std")
    mu = x.data.mean(axis=(2, 3), keepdims=True)
    diff = x.data - mu
    var = np.einsum("bchw,bchw->bc", diff, diff) / (h * w)
    sigma = np.sqrt(var)

    def bw(g: Array):
        denom = np.maximum(sigma, STD_FLOOR) * (h * w)
        return (g[:, :, None, None] * diff / denom[:, :, None, None],)

    return _node("channel_std", sigma, (x,), bw)


@dataclass
class ChannelStats:
    """Per-sample channel moments of a feature map, both of shape (B, C)."""

    mu: Tensor
    sigma: Tensor

    def __iter__(self):
        return iter((self.mu, self.sigma))


def channel_stats(x: Tensor) -> ChannelStats:
    """Both channel moments of a (B, C, H, W) map, each differentiable."""
    return ChannelStats(mu=spatial_mean(x), sigma=channel_std(x))


def broadcast_spatial(v: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Expand a (B, C) statistic over the spatial extent of ``shape``."""
    if v.data.ndim != 2 or len(shape) != 4 or shape[:2] != v.data.shape:
        raise ShapeError(f"broadcast_spatial: {v.data.shape} onto {shape}")
    data = np.broadcast_to(v.data[:, :, None, None], shape).copy()

    def bw(g: Array):
        return (g.sum(axis=(2, 3)),)

    return _node("broadcast_spatial", data, (v,), bw)


# -- softmax family -----------------------------------------------------------


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilized by max subtraction."""
    if x.data.ndim < 1:
        raise ShapeError("softmax expects at least one axis")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def bw(g: Array):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _node("softmax", p, (x,), bw)


def topk_softmax(x: Tensor, k: int) -> Tensor:
    """Sparse softmax over the top-k entries of the last axis.

    Selection keeps the k largest values with ties broken toward the lower
    index; non-selected positions get exactly zero. The backward pass is
    the softmax Jacobian restricted to the selected entries.
    """
    if x.data.ndim < 1:
        raise ShapeError("topk_softmax expects at least one axis")
    n = x.data.shape[-1]
    if not 1 <= k <= n:
        raise ShapeError(f"topk_softmax: k={k} outside [1, {n}]")
    flat = x.data.reshape(-1, n)
    order = np.argsort(-flat, axis=1, kind="stable")
    sel = order[:, :k]
    vals = np.take_along_axis(flat, sel, axis=1)
    z = vals - vals.max(axis=1, keepdims=True)
    e = np.exp(z)
    wts = e / e.sum(axis=1, keepdims=True)
    p = np.zeros_like(flat)
    np.put_along_axis(p, sel, wts, axis=1)

    def bw(g: Array):
        gsel = np.take_along_axis(g.reshape(-1, n), sel, axis=1)
        inner = (gsel * wts).sum(axis=1, keepdims=True)
        gx = np.zeros_like(flat)
        np.put_along_axis(gx, sel, wts * (gsel - inner), axis=1)
        return (gx.reshape(x.data.shape),)

    return _node("topk_softmax", p.reshape(x.data.shape), (x,), bw)


def cross_entropy(logits: Tensor, labels: Array) -> Tensor:
    """Mean negative log-likelihood of integer labels under row softmax."""
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy expects (B, K) logits, got {logits.data.shape}")
    y = np.asarray(labels)
    bsz, k = logits.data.shape
    if y.shape != (bsz,):
        raise ShapeError(f"cross_entropy: labels shape {y.shape} != ({bsz},)")
    if y.min() < 0 or y.max() >= k:
        raise ShapeError(f"cross_entropy: labels outside [0, {k})")
    zmax = logits.data.max(axis=1, keepdims=True)
    z = logits.data - zmax
    lse = np.log(np.exp(z).sum(axis=1)) + zmax[:, 0]
    data = np.asarray((lse - logits.data[np.arange(bsz), y]).mean())

    def bw(g: Array):
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(bsz), y] -= 1.0
        return (g * p / bsz,)

    return _node("cross_entropy", data, (logits,), bw)


# -- reductions and reshaping -------------------------------------------------


def sum_axis0(x: Tensor) -> Tensor:
    """Column sums of a (B, n) matrix: -> (n,)."""
    if x.data.ndim != 2:
        raise ShapeError(f"sum_axis0 expects a matrix, got {x.data.shape}")
    data = x.data.sum(axis=0)

    def bw(g: Array):
        return (np.broadcast_to(g, x.data.shape).copy(),)

    return _node("sum_axis0", data, (x,), bw)


def mean_all(x: Tensor) -> Tensor:
    data = np.asarray(x.data.mean())
    scale = 1.0 / x.data.size

    def bw(g: Array):
        return (np.full_like(x.data, g * scale),)

    return _node("mean_all", data, (x,), bw)


def sum_all(x: Tensor) -> Tensor:
    data = np.asarray(x.data.sum())

    def bw(g: Array):
        return (np.full_like(x.data, g),)

    return _node("sum_all", data, (x,), bw)


def scale_rows(x: Tensor, s: Tensor) -> Tensor:
    """Multiply each sample x[b] by the scalar s[b]."""
    if s.data.ndim != 1 or x.data.ndim < 1 or x.data.shape[0] != s.data.shape[0]:
        raise ShapeError(f"scale_rows: x {x.data.shape} vs s {s.data.shape}")
    srow = s.data.reshape((-1,) + (1,) * (x.data.ndim - 1))
    data = x.data * srow

    def bw(g: Array):
        gx = g * srow if x.requires_grad else None
        gs = (
            (g * x.data).sum(axis=tuple(range(1, x.data.ndim)))
            if s.requires_grad
            else None
        )
        return (gx, gs)

    return _node("scale_rows", data, (x, s), bw)


def take_col(x: Tensor, idx: int) -> Tensor:
    """Extract column ``idx`` of a (B, n) matrix as a (B,) vector."""
    if x.data.ndim != 2:
        raise ShapeError(f"take_col expects a matrix, got {x.data.shape}")
    if not 0 <= idx < x.data.shape[1]:
        raise ShapeError(f"take_col: column {idx} outside matrix {x.data.shape}")
    data = x.data[:, idx].copy()

    def bw(g: Array):
        gx = np.zeros_like(x.data)
        gx[:, idx] = g
        return (gx,)

    return _node("take_col", data, (x,), bw)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two matrices along axis 1."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[0] != b.data.shape[0]:
        raise ShapeError(f"concat_cols: {a.data.shape} vs {b.data.shape}")
    na = a.data.shape[1]
    data = np.concatenate([a.data, b.data], axis=1)

    def bw(g: Array):
        ga = g[:, :na].copy() if a.requires_grad else None
        gb = g[:, na:].copy() if b.requires_grad else None
        return (ga, gb)

    return _node("concat_cols", data, (a, b), bw)


# -- finite-difference checking -------------------------------------------------


@dataclass
class GradCheckReport:
    """Outcome of one finite-difference comparison."""

    name: str
    max_rel_error: float
    worst_coordinate: int


def grad_check(
    fn: Callable[[Tensor], Tensor],
    point,
    h: float = 1e-5,
    name: str = "fn",
) -> GradCheckReport:
    """Compare analytic gradients of ``fn`` against central differences.

    ``fn`` must map one tensor to a scalar tensor. The relative error at
    each coordinate is |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    base = np.array(point.data if isinstance(point, Tensor) else point, dtype=np.float64)
    x = Tensor(base.copy(), requires_grad=True)
    out = fn(x)
    if not isinstance(out, Tensor) or out.data.ndim != 0:
        raise ContractError("grad_check requires fn to return a scalar tensor")
    out.backward()
    analytic = x.grad_or_zero().reshape(-1)

    numeric = np.zeros(base.size, dtype=np.float64)
    for i in range(base.size):
        bumped = base.copy()
        bumped.flat[i] += h
        fp = fn(Tensor(bumped)).item()
        bumped.flat[i] -= 2 * h
        fm = fn(Tensor(bumped)).item()
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"grad_check({name}): non-finite function value")
        numeric[i] = (fp - fm) / (2 * h)

    rel = np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    worst = int(np.argmax(rel)) if rel.size else 0
    worst_err = float(rel[worst]) if rel.size else 0.0
    return GradCheckReport(name=name, max_rel_error=worst_err, worst_coordinate=worst)
