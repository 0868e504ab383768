"""Reverse-mode differentiation over numpy arrays.

Every primitive builds a node holding its output array, its parent nodes and a
closure mapping the output gradient to parent gradients. ``backward`` walks the
graph in reverse topological order and accumulates into ``Param.grad``.

Training runs in float32; gradient checks switch to float64 with
``precision(64)``.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DimensionError, UsageError

LEAKY_SLOPE = 0.01
LN_EPS = 1e-5

_dtype: type = np.float32
_grad_enabled = True
# When a list, leaky_relu appends its sign pattern (used by finite_diff_check).
_kink_log: list | None = None


def default_dtype():
    return _dtype


def set_default_dtype(bits: int) -> None:
    global _dtype
    if bits == 32:
        _dtype = np.float32
    elif bits == 64:
        _dtype = np.float64
    else:
        raise ConfigError(f"precision must be 32 or 64, got {bits}")


@contextlib.contextmanager
def precision(bits: int):
    """Temporarily switch the dtype used for new tensors and parameters."""
    global _dtype
    old = _dtype
    set_default_dtype(bits)
    try:
        yield
    finally:
        _dtype = old


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    old = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = old


class Tensor:
    """Dense array node in the differentiation graph."""

    __slots__ = ("data", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            self.data = data
        else:
            self.data = np.asarray(data, dtype=_dtype)
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Callable | None = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / other)
        return mul(self, reciprocal(as_tensor(other)))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def backward(self):
        backward(self)


class Param(Tensor):
    """Trainable leaf. ``decay_eligible`` is False for biases and norm gain/shift."""

    __slots__ = ("grad", "decay_eligible", "name")

    def __init__(self, data, decay_eligible: bool = True, name: str = ""):
        super().__init__(np.array(data, dtype=_dtype), requires_grad=True)
        self.grad = np.zeros_like(self.data)
        self.decay_eligible = decay_eligible
        self.name = name

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def astype(self, dtype) -> None:
        self.data = self.data.astype(dtype)
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=_dtype))


def _node(data: np.ndarray, parents: tuple, backward_fn: Callable, op: str) -> Tensor:
    if not np.isfinite(data).all():
        raise FloatingPointError(f"non-finite values produced by {op}")
    out = Tensor(data)
    out.op = op
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    if lead > 0:
        grad = grad.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _node(a.data + b.data, (a, b), bw, "add")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _node(ad * bd, (a, b), bw, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    return _node(a.data * c, (a,), lambda g: (g * c,), "scale")


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def reciprocal(a: Tensor) -> Tensor:
    out = 1.0 / a.data
    return _node(out, (a,), lambda g: (-g * out * out,), "reciprocal")


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):  # overflow is reported by the finite check
        out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    ad = a.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(ad)
    return _node(out, (a,), lambda g: (g / ad,), "log")


def leaky_relu(a: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ConfigError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    pos = a.data >= 0
    if _kink_log is not None:
        _kink_log.append(np.packbits(pos))
    d = np.where(pos, 1.0, slope).astype(a.data.dtype)
    return _node(a.data * d, (a,), lambda g: (g * d,), "leaky_relu")


def dropout(a: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; the mask is drawn once per call. Identity when not training."""
    if not training or p <= 0.0:
        return a
    if rng is None:
        raise UsageError("dropout in training mode needs a random generator")
    keep = (rng.random(a.shape) >= p).astype(a.data.dtype) / (1.0 - p)
    return _node(a.data * keep, (a,), lambda g: (g * keep,), "dropout")


# ---------------------------------------------------------------- linear algebra


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul needs operands of rank >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        ga = _unbroadcast(g @ _swap(bd), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(_swap(ad) @ g, bd.shape) if b.requires_grad else None
        return ga, gb

    return _node(ad @ bd, (a, b), bw, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight (+ bias); weight is stored [in, out]."""
    if x.ndim == 1:
        y = reshape(matmul(reshape(x, (1, x.shape[0])), weight), (weight.shape[1],))
    else:
        y = matmul(x, weight)
    return add(y, bias) if bias is not None else y


# ---------------------------------------------------------------- reductions / shape


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.shape
    axes = _norm_axis(axis, a.ndim)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(np.asarray(a.data.sum(axis=axes, keepdims=keepdims)), (a,), bw, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    count = math.prod(a.shape[ax] for ax in axes)
    return scale(tsum(a, axes, keepdims), 1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _node(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def swapaxes(a: Tensor, i: int, j: int) -> Tensor:
    return _node(np.swapaxes(a.data, i, j), (a,), lambda g: (np.swapaxes(g, i, j),), "swapaxes")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if len(tensors) == 1:
        return tensors[0]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(str(exc)) from None

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _node(data, tuple(tensors), bw, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = [reshape(t, t.shape[:axis % (t.ndim + 1)] + (1,) + t.shape[axis % (t.ndim + 1):])
                for t in tensors]
    return concat(expanded, axis=axis)


def _is_fancy(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (np.ndarray, list)) for i in items)


def getitem(a: Tensor, idx) -> Tensor:
    shape, dtype = a.shape, a.data.dtype
    fancy = _is_fancy(idx)

    def bw(g):
        full = np.zeros(shape, dtype=dtype)
        if fancy:
            np.add.at(full, idx, g)
        else:
            full[idx] += g
        return (full,)

    return _node(np.asarray(a.data[idx]), (a,), bw, "getitem")


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup; ``ids`` is an integer array of any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    return getitem(table, ids)


# ---------------------------------------------------------------- normalisations


def softmax_rows(a: Tensor, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` with max subtraction."""
    a = as_tensor(a)
    if a.shape[axis] < 1:
        raise DimensionError("softmax over an empty axis")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _node(out, (a,), bw, "softmax")


def logsumexp(a: Tensor, axis: int = -1) -> Tensor:
    """log(sum(exp(a))) along ``axis``; the axis is removed."""
    a = as_tensor(a)
    if a.shape[axis] < 1:
        raise DimensionError("logsumexp over an empty axis")
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (np.log(s) + m).squeeze(axis)
    p = e / s

    def bw(g):
        return (np.expand_dims(g, axis) * p,)

    return _node(np.asarray(out), (a,), bw, "logsumexp")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    z = a.data - m
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def bw(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _node(out, (a,), bw, "log_softmax")


def layer_norm(a: Tensor, gain: Tensor, shift: Tensor, eps: float = LN_EPS) -> Tensor:
    """Normalise the last axis to zero mean / unit variance, then scale and shift."""
    d = a.shape[-1]
    if d < 2:
        raise DimensionError("layer_norm needs a last axis of width >= 2")
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gain.data

    def bw(g):
        dxhat = g * gd
        dx = inv / d * (d * dxhat - dxhat.sum(-1, keepdims=True)
                        - xhat * (dxhat * xhat).sum(-1, keepdims=True))
        dg = _unbroadcast(g * xhat, gain.shape)
        db = _unbroadcast(g, shift.shape)
        return dx, dg, db

    return _node(xhat * gd + shift.data, (a, gain, shift), bw, "layer_norm")


# ---------------------------------------------------------------- convolution / pooling


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None,
           stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation. ``x`` is [C,H,W] or [N,C,H,W]; kernel [O,C,k,k]."""
    x = as_tensor(x)
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"conv2d expects [N,C,H,W] input and [O,C,k,k] kernel, "
                             f"got {x.shape} and {kernel.shape}")
    n, c, h, w = xd.shape
    o, ck, k, k2 = kernel.shape
    if ck != c or k != k2:
        raise DimensionError(f"conv2d channel/kernel mismatch: input C={c}, kernel {kernel.shape}")
    if stride < 1 or h + 2 * pad < k or w + 2 * pad < k:
        raise DimensionError(f"conv2d window does not fit: H={h}, W={w}, k={k}, pad={pad}")
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else xd
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    wmat = kernel.data.reshape(o, c * k * k)
    out = cols @ wmat.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    if squeeze:
        out = out[0]
    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def bw(g):
        g4 = g[None] if squeeze else g
        g2 = g4.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        gk = (g2.T @ cols).reshape(kernel.shape)
        gx = None
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(n, ho, wo, c, k, k)
            gxp = np.zeros(xp.shape, dtype=xp.dtype)
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, pad:pad + h, pad:pad + w] if pad else gxp
            if squeeze:
                gx = gx[0]
        if bias is None:
            return gx, gk
        return gx, gk, g2.sum(axis=0)

    return _node(np.ascontiguousarray(out), parents, bw, "conv2d")


def avg_pool2d(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Adaptive average pooling over the last two axes with equal windows."""
    *lead, h, w = x.shape
    if out_h < 1 or out_w < 1 or h % out_h or w % out_w:
        raise ConfigError(f"cannot pool {h}x{w} to {out_h}x{out_w} with equal windows")
    kh, kw = h // out_h, w // out_w
    out = x.data.reshape(*lead, out_h, kh, out_w, kw).mean(axis=(-3, -1))

    def bw(g):
        g6 = np.expand_dims(np.expand_dims(g, -1), -3) / (kh * kw)
        return (np.broadcast_to(g6, (*lead, out_h, kh, out_w, kw)).reshape(x.shape).copy(),)

    return _node(out, (x,), bw, "avg_pool2d")


# ---------------------------------------------------------------- backward


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, done = stack_.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into ``grad`` of every reachable Param."""
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_toposort(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Param):
            node.grad += g
            continue
        if node._backward is None:
            continue
        pgrads = node._backward(g)
        for p, pg in zip(node._parents, pgrads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def zero_grad(params: Iterable[Param]) -> None:
    for p in params:
        p.zero_grad()


# ---------------------------------------------------------------- finite differences


class GradCheckError(AssertionError):
    pass


def _signature(fn: Callable[[], Tensor]) -> tuple[float, list]:
    global _kink_log
    _kink_log = []
    try:
        val = float(fn().data)
        return val, _kink_log
    finally:
        _kink_log = None


def _same_side(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def finite_diff_check(model_forward: Callable[[], Tensor], params: dict[str, Param] | Sequence[Param],
                      eps: float = 1e-4, per_group: int = 32, seed: int = 0,
                      report: dict | None = None, max_kink_retries: int = 64) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``model_forward`` must rebuild the loss from the current parameter values
    and be deterministic (dropout off). Every parameter group is sampled at
    ``per_group`` coordinates, or all of them if it has fewer.
    Relative error is |a - n| / max(|a|, |n|, 1e-8).

    A coordinate whose +/- eps perturbation moves any leaky_relu input across
    zero straddles a kink, where the central difference does not estimate the
    derivative. Such a coordinate is retried with eps/10 and eps/100; if it
    still straddles a kink it is replaced by a fresh sample from the same
    group. ``report`` receives per-group worst errors and, under ``"_kinks"``,
    per-group counts of coordinates that needed a smaller step or replacement.
    """
    if isinstance(params, dict):
        named = list(params.items())
    else:
        named = [(p.name or f"param{i}", p) for i, p in enumerate(params)]
    if any(p.data.dtype != np.float64 for _, p in named):
        raise UsageError("finite_diff_check needs 64-bit parameters")
    rng = np.random.default_rng(seed)

    for _, p in named:
        p.zero_grad()
    loss = model_forward()
    if not np.isfinite(loss.data).all():
        raise GradCheckError("model produced a non-finite loss before any perturbation")
    backward(loss)
    analytic = {name: p.grad.copy() for name, p in named}
    _, base_sig = _signature(model_forward)

    kinks: dict[str, int] = {}
    worst = 0.0
    for name, p in named:
        flat = p.data.reshape(-1)
        size = flat.size
        order = rng.permutation(size)
        target = min(size, per_group)
        checked = skipped = 0
        group_worst = 0.0
        for idx in order:
            if checked == target:
                break
            orig = flat[idx]
            result = None
            for step in (eps, eps / 10, eps / 100):
                try:
                    flat[idx] = orig + step
                    up, up_sig = _signature(model_forward)
                    flat[idx] = orig - step
                    down, down_sig = _signature(model_forward)
                except FloatingPointError as exc:
                    raise GradCheckError(f"non-finite forward while perturbing {name}: {exc}") from None
                finally:
                    flat[idx] = orig
                if _same_side(base_sig, up_sig) and _same_side(base_sig, down_sig):
                    result = (up - down) / (2 * step)
                    break
            if result is None or step != eps:
                skipped += 1
            if result is None:
                if skipped > max_kink_retries:
                    raise GradCheckError(f"group {name}: more than {max_kink_retries} samples "
                                         "straddle a leaky_relu kink")
                continue
            num = result
            ana = float(analytic[name].reshape(-1)[idx])
            if not (math.isfinite(num) and math.isfinite(ana)):
                raise GradCheckError(f"non-finite gradient in group {name}")
            err = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            group_worst = max(group_worst, err)
            checked += 1
        if checked < target:
            raise GradCheckError(f"group {name}: only {checked} of {target} coordinates "
                                 "are free of kink crossings")
        kinks[name] = skipped
        if report is not None:
            report[name] = group_worst
        worst = max(worst, group_worst)
    if report is not None:
        report["_kinks"] = kinks
    return worst


# ---------------------------------------------------------------- parameter containers


class Module:
    """Attribute-based parameter container; names are dotted attribute paths."""

    def named_params(self, prefix: str = "") -> dict[str, Param]:
        out: dict[str, Param] = {}
        for key, val in vars(self).items():
            if key.startswith("_"):
                continue
            name = f"{prefix}{key}"
            if isinstance(val, Param):
                out[name] = val
            elif isinstance(val, Module):
                out.update(val.named_params(name + "."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Param):
                        out[f"{name}.{i}"] = item
                    elif isinstance(item, Module):
                        out.update(item.named_params(f"{name}.{i}."))
        return out

    def name_params(self) -> None:
        for name, p in self.named_params().items():
            p.name = name

    def astype(self, dtype) -> None:
        for p in self.named_params().values():
            p.astype(dtype)

    def zero_grad(self) -> None:
        for p in self.named_params().values():
            p.zero_grad()


def init_normal(rng: np.random.Generator, shape, std: float = 0.02, name: str = "") -> Param:
    return Param(rng.normal(0.0, std, size=shape), decay_eligible=True, name=name)


def init_kaiming(rng: np.random.Generator, shape, name: str = "") -> Param:
    """He-normal for conv kernels [O, C, k, k] (fan-in = C*k*k)."""
    fan_in = math.prod(shape[1:])
    return Param(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape), decay_eligible=True, name=name)


def init_zeros(shape, name: str = "") -> Param:
    return Param(np.zeros(shape), decay_eligible=False, name=name)


def init_ones(shape, name: str = "") -> Param:
    return Param(np.ones(shape), decay_eligible=False, name=name)
