"""Rank-4 tensor algebra with reverse-mode differentiation.

Everything is a dense float64 array of shape (N, C, H, W); scalars are
(1, 1, 1, 1). Operations record a define-by-run tape: each result keeps its
parents and a closure that pushes the incoming gradient one step back.
``backward`` topologically sorts the tape from the loss and runs the closures
once each. The tape is rebuilt every step, which keeps the engine small and
the execution deterministic (single-threaded contract; no shared mutable
state between independent graphs).

Gradients are only materialized on tensors whose ``needs_grad`` is set
(parameters) or that lie on a path to one.
"""

from __future__ import annotations

import struct
from typing import Callable, Optional, Sequence

import numpy as np

SCALAR_SHAPE = (1, 1, 1, 1)


class Tensor4:
    """Dense (N, C, H, W) value node of the computation graph."""

    __slots__ = ("data", "grad", "needs_grad", "name", "_parents", "_backward")

    def __init__(self, data, needs_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 4:
            raise ValueError(f"Tensor4 requires rank-4 data, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"Tensor4 {name or ''} contains non-finite values")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.needs_grad = needs_grad
        self.name = name
        self._parents: tuple = ()
        self._backward: Optional[Callable[[], None]] = None

    @classmethod
    def _op(cls, data: np.ndarray, parents: Sequence["Tensor4"],
            backward: Callable[[], None]) -> "Tensor4":
        """Internal node; inherits needs_grad from its parents."""
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.needs_grad = any(p.needs_grad for p in parents)
        out.name = None
        out._parents = tuple(parents)
        out._backward = backward if out.needs_grad else None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.shape != SCALAR_SHAPE:
            raise ValueError(f"item() requires scalar shape {SCALAR_SHAPE}, got {self.shape}")
        return float(self.data[0, 0, 0, 0])

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor4(shape={self.shape}{tag}, needs_grad={self.needs_grad})"

    # operator sugar; scalars stay plain floats inside the closures
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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def scalar(value: float) -> Tensor4:
    return Tensor4(np.full(SCALAR_SHAPE, float(value)))


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient over axes that were broadcast up from size 1."""
    axes = tuple(i for i, (s, gs) in enumerate(zip(shape, g.shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a_shape, b_shape):
    for sa, sb in zip(a_shape, b_shape):
        if sa != sb and sa != 1 and sb != 1:
            raise ValueError(f"shapes {a_shape} and {b_shape} do not broadcast")


def add(a, b) -> Tensor4:
    if not isinstance(a, Tensor4):
        a, b = b, a
    if isinstance(b, Tensor4):
        _check_broadcast(a.shape, b.shape)
        out_data = a.data + b.data
        out = Tensor4._op(out_data, (a, b), None)

        def backward():
            if a.needs_grad:
                a.accumulate_grad(_unbroadcast(out.grad, a.shape))
            if b.needs_grad:
                b.accumulate_grad(_unbroadcast(out.grad, b.shape))

        out._backward = backward if out.needs_grad else None
        return out

    c = float(b)
    out = Tensor4._op(a.data + c, (a,), None)

    def backward_scalar():
        a.accumulate_grad(out.grad)

    out._backward = backward_scalar if out.needs_grad else None
    return out


def sub(a, b) -> Tensor4:
    if isinstance(a, Tensor4) and isinstance(b, Tensor4):
        _check_broadcast(a.shape, b.shape)
        out = Tensor4._op(a.data - b.data, (a, b), None)

        def backward():
            if a.needs_grad:
                a.accumulate_grad(_unbroadcast(out.grad, a.shape))
            if b.needs_grad:
                b.accumulate_grad(_unbroadcast(-out.grad, b.shape))

        out._backward = backward if out.needs_grad else None
        return out
    if isinstance(a, Tensor4):
        return add(a, -float(b))
    return add(mul(b, -1.0), float(a))


def mul(a, b) -> Tensor4:
    if not isinstance(a, Tensor4):
        a, b = b, a
    if isinstance(b, Tensor4):
        _check_broadcast(a.shape, b.shape)
        out = Tensor4._op(a.data * b.data, (a, b), None)

        def backward():
            if a.needs_grad:
                a.accumulate_grad(_unbroadcast(out.grad * b.data, a.shape))
            if b.needs_grad:
                b.accumulate_grad(_unbroadcast(out.grad * a.data, b.shape))

        out._backward = backward if out.needs_grad else None
        return out

    c = float(b)
    out = Tensor4._op(a.data * c, (a,), None)

    def backward_scalar():
        a.accumulate_grad(out.grad * c)

    out._backward = backward_scalar if out.needs_grad else None
    return out


def div(a, b) -> Tensor4:
    if isinstance(a, Tensor4) and isinstance(b, Tensor4):
        _check_broadcast(a.shape, b.shape)
        out = Tensor4._op(a.data / b.data, (a, b), None)

        def backward():
            if a.needs_grad:
                a.accumulate_grad(_unbroadcast(out.grad / b.data, a.shape))
            if b.needs_grad:
                b.accumulate_grad(_unbroadcast(-out.grad * a.data / (b.data * b.data), b.shape))

        out._backward = backward if out.needs_grad else None
        return out
    if isinstance(a, Tensor4):
        return mul(a, 1.0 / float(b))
    raise TypeError("scalar / Tensor4 is not supported; wrap the scalar with scalar()")


def relu(x: Tensor4) -> Tensor4:
    mask = x.data > 0
    out = Tensor4._op(np.where(mask, x.data, 0.0), (x,), None)

    def backward():
        x.accumulate_grad(out.grad * mask)

    out._backward = backward if out.needs_grad else None
    return out


def sqrt(x: Tensor4) -> Tensor4:
    """Elementwise square root; inputs must be strictly positive."""
    s = np.sqrt(x.data)
    out = Tensor4._op(s, (x,), None)

    def backward():
        x.accumulate_grad(out.grad * 0.5 / s)

    out._backward = backward if out.needs_grad else None
    return out


def sum_all(x: Tensor4) -> Tensor4:
    out = Tensor4._op(np.full(SCALAR_SHAPE, x.data.sum()), (x,), None)

    def backward():
        x.accumulate_grad(np.full(x.shape, out.grad[0, 0, 0, 0]))

    out._backward = backward if out.needs_grad else None
    return out


def mean_all(x: Tensor4) -> Tensor4:
    n = x.size
    if n == 0:
        raise ValueError("mean of an empty tensor")
    out = Tensor4._op(np.full(SCALAR_SHAPE, x.data.sum() / n), (x,), None)

    def backward():
        x.accumulate_grad(np.full(x.shape, out.grad[0, 0, 0, 0] / n))

    out._backward = backward if out.needs_grad else None
    return out


def global_avg_pool(x: Tensor4) -> Tensor4:
    """Spatial mean per instance and channel: (N, C, H, W) -> (N, C, 1, 1)."""
    _, _, h, w = x.shape
    if h * w == 0:
        raise ValueError("global_avg_pool on empty spatial extent")
    out = Tensor4._op(x.data.mean(axis=(2, 3), keepdims=True), (x,), None)

    def backward():
        x.accumulate_grad(np.broadcast_to(out.grad / (h * w), x.shape))

    out._backward = backward if out.needs_grad else None
    return out


def channel_stats(x: Tensor4):
    """Per-(instance, channel) spatial mean and biased variance, differentiable."""
    mean = global_avg_pool(x)
    centered = sub(x, mean)
    var = global_avg_pool(mul(centered, centered))
    return mean, var


def mean_square(a: Tensor4, b: Tensor4) -> Tensor4:
    """Mean squared difference over every element, as a graph scalar."""
    if a.shape != b.shape:
        raise ValueError(f"mean_square shapes differ: {a.shape} vs {b.shape}")
    d = sub(a, b)
    return mean_all(mul(d, d))


def conv2d(x: Tensor4, kernel: Tensor4, stride: int = 1, padding: int = 0) -> Tensor4:
    """2-D cross-correlation of (N, Cin, H, W) with (Cout, Cin, kH, kW).

    Output spatial dims are floor((H + 2*padding - kH) / stride) + 1 and the
    analogue for W. Differentiable w.r.t. both the input and the kernel.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"padding must be >= 0, got {padding}")
    n, cin, h, w = x.shape
    cout, cin_k, kh, kw = kernel.shape
    if cin != cin_k:
        raise ValueError(
            f"conv2d channel mismatch: input has {cin} channels, kernel expects {cin_k}")
    hp, wp = h + 2 * padding, w + 2 * padding
    if hp < kh or wp < kw:
        raise ValueError(
            f"conv2d kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]          # (N, Cin, Ho, Wo, kH, kW)
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, cin * kh * kw)
    wmat = kernel.data.reshape(cout, cin * kh * kw)
    out_data = (cols @ wmat.T).reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)
    out = Tensor4._op(np.ascontiguousarray(out_data), (x, kernel), None)

    def backward():
        gout = out.grad.transpose(0, 2, 3, 1).reshape(n * ho * wo, cout)
        if kernel.needs_grad:
            kernel.accumulate_grad((gout.T @ cols).reshape(kernel.shape))
        if x.needs_grad:
            dcols = (gout @ wmat).reshape(n, ho, wo, cin, kh, kw).transpose(0, 3, 4, 5, 1, 2)
            dxp = np.zeros((n, cin, hp, wp))
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[:, :, i, j]
            if padding:
                dxp = dxp[:, :, padding:hp - padding, padding:wp - padding]
            x.accumulate_grad(dxp)

    out._backward = backward if out.needs_grad else None
    return out


def dense(x: Tensor4, weight: Tensor4, bias: Optional[Tensor4] = None) -> Tensor4:
    """Fully-connected layer over the channel axis, realized as a 1x1 conv.

    x: (N, Cin, 1, 1); weight: (Cout, Cin, 1, 1); bias: (1, Cout, 1, 1).
    """
    out = conv2d(x, weight, stride=1, padding=0)
    if bias is not None:
        out = add(out, bias)
    return out


def backward(loss: Tensor4):
    """Populate .grad for every needs_grad tensor reachable from the loss.

    The loss must be scalar-shaped. Each tape node's closure runs exactly
    once, in reverse topological order. Parent links are fixed at
    construction, so a cycle indicates graph tampering and is reported.
    """
    if loss.shape != SCALAR_SHAPE:
        raise ValueError(f"backward requires a scalar loss {SCALAR_SHAPE}, got {loss.shape}")
    order = _topo_order(loss)
    loss.grad = np.ones(SCALAR_SHAPE)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward()


def _topo_order(root: Tensor4):
    order = []
    visited = set()
    on_stack = set()
    stack = [(root, iter(root._parents))]
    visited.add(id(root))
    on_stack.add(id(root))
    while stack:
        node, parents = stack[-1]
        advanced = False
        for p in parents:
            if id(p) in on_stack:
                raise ValueError("cyclic graph detected during backward")
            if id(p) not in visited:
                visited.add(id(p))
                on_stack.add(id(p))
                stack.append((p, iter(p._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            on_stack.discard(id(node))
            stack.pop()
    return order


def uniform_fan_in(shape, rng: np.random.Generator) -> np.ndarray:
    """Weight init: uniform on +-1/sqrt(fan_in), fan_in = prod of non-leading dims."""
    fan_in = int(np.prod(shape[1:]))
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# --- T4F raw tensor file format -------------------------------------------
# magic "T4F1", four u32 LE dims (N, C, H, W), then N*C*H*W f64 LE row-major.

T4F_MAGIC = b"T4F1"


def save_t4f(path, array: np.ndarray):
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim != 4:
        raise ValueError(f"T4F stores rank-4 tensors, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(t4f_bytes(arr))


def t4f_bytes(array: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(array, dtype=np.float64)
    header = T4F_MAGIC + struct.pack("<4I", *arr.shape)
    return header + arr.astype("<f8").tobytes()


def load_t4f(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    arr, rest = t4f_from_bytes(data)
    if rest:
        raise ValueError(f"{path}: trailing bytes after T4F payload")
    return arr


def t4f_from_bytes(data: bytes):
    """Parse one T4F block; returns (array, remaining bytes)."""
    if len(data) < 20 or data[:4] != T4F_MAGIC:
        raise ValueError("not a T4F block (bad magic)")
    dims = struct.unpack("<4I", data[4:20])
    count = int(np.prod(dims))
    end = 20 + 8 * count
    if len(data) < end:
        raise ValueError("truncated T4F block")
    arr = np.frombuffer(data[20:end], dtype="<f8").reshape(dims).astype(np.float64)
    return arr, data[end:]
