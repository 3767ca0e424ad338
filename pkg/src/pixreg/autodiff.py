"""Dense-tensor arithmetic with reverse-mode automatic differentiation.

A Tensor wraps a numpy float array. Operations build a small tape: each
result remembers its parent tensors and a closure that scatters the
upstream gradient back to them. Calling ``backward()`` on a scalar runs
the tape in reverse topological order.

Design constraints honored here:
  * operations never mutate their inputs' data; only ``grad`` buffers
    change during a backward pass,
  * any NaN/Inf produced in a forward or backward pass raises
    NonFiniteError immediately,
  * gradients accumulate on every node flagged ``requires_grad``, so
    intermediate activations stay inspectable (the class-activation
    mapping in faultcam relies on this).
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ArgumentError, NonFiniteError, ShapeError

Array = np.ndarray

_FLOAT_TYPES = (np.float32, np.float64)


def _check_finite(arr: Array, what: str) -> None:
    # cheap single-pass screen; the exact scan only runs on suspicion, so a
    # float32 sum that overflows legitimately cannot raise a false alarm
    if not np.isfinite(arr.sum()):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"non-finite values in {what}")


def _as_float_array(data, dtype=None) -> Array:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype.type not in _FLOAT_TYPES:
        arr = arr.astype(np.float32)
    return arr


class Tensor:
    """A dense array plus an optional gradient accumulator.

    ``data`` is row-major and either float32 (model state) or float64
    (oracles and metrics). ``grad`` is lazily allocated with the same
    shape and dtype as ``data``.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = _as_float_array(data, dtype)
        _check_finite(arr, "tensor data")
        self.data = arr
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[Array], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, gradient: Array | None = None) -> None:
        """Accumulate d(self)/d(node) into every reachable node's grad."""
        if gradient is None:
            if self.data.size != 1:
                raise ShapeError("backward() without an explicit gradient needs a scalar tensor")
            gradient = np.ones_like(self.data)
        else:
            # private copy: the caller may reuse its seed array
            gradient = np.array(gradient, dtype=self.data.dtype)
            if gradient.shape != self.data.shape:
                raise ShapeError("seed gradient shape must match tensor shape")

        topo: list[Tensor] = []
        seen: set[int] = set()

        def visit(node: Tensor) -> None:
            if id(node) in seen:
                return
            seen.add(id(node))
            for parent in node._parents:
                visit(parent)
            topo.append(node)

        visit(self)
        _accumulate(self, gradient)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in topo:
            if node.grad is not None:
                _check_finite(node.grad, "gradient")


def _accumulate(t: Tensor, g: Array) -> None:
    # stored grads are never mutated in place, so aliasing the closure's
    # array (or a sibling's grad) is safe and saves a copy per node
    if not t.requires_grad:
        return
    g = g.astype(t.data.dtype, copy=False)
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _result(data: Array, parents: Sequence[Tensor], backward: Callable[[Array], None]) -> Tensor:
    _check_finite(data, "operation result")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: operand shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# elementwise ops


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "add")

    def backward(g: Array) -> None:
        _accumulate(a, g)
        _accumulate(b, g)

    return _result(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "sub")

    def backward(g: Array) -> None:
        _accumulate(a, g)
        _accumulate(b, -g)

    return _result(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "mul")

    def backward(g: Array) -> None:
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _result(a.data * b.data, (a, b), backward)


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)

    def backward(g: Array) -> None:
        _accumulate(a, g * factor)

    return _result(a.data * factor, (a,), backward)


def relu(a: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0, hence the strict comparison
    mask = a.data > 0

    def backward(g: Array) -> None:
        _accumulate(a, g * mask)

    return _result(np.maximum(a.data, 0), (a,), backward)


def square(a: Tensor) -> Tensor:
    def backward(g: Array) -> None:
        _accumulate(a, g * (2.0 * a.data))

    return _result(a.data * a.data, (a,), backward)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions {a.shape} x {b.shape} do not agree")

    def backward(g: Array) -> None:
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x @ weight + bias with the bias broadcast over rows."""
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise ShapeError("linear expects 2-D input and weight")
    if x.shape[1] != weight.shape[0]:
        raise ShapeError(f"linear: input width {x.shape[1]} != weight rows {weight.shape[0]}")
    if bias.shape != (weight.shape[1],):
        raise ShapeError("linear: bias must have one entry per output column")

    def backward(g: Array) -> None:
        if x.requires_grad:
            _accumulate(x, g @ weight.data.T)
        if weight.requires_grad:
            _accumulate(weight, x.data.T @ g)
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=0))

    return _result(x.data @ weight.data + bias.data, (x, weight, bias), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def backward(g: Array) -> None:
        _accumulate(a, g.reshape(a.shape))

    return _result(a.data.reshape(shape), (a,), backward)


def add_channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a per-channel bias vector to an (n, c, h, w) tensor."""
    if x.data.ndim != 4 or bias.data.ndim != 1 or bias.shape[0] != x.shape[1]:
        raise ShapeError("add_channel_bias: need (n,c,h,w) input and (c,) bias")

    def backward(g: Array) -> None:
        _accumulate(x, g)
        _accumulate(bias, g.sum(axis=(0, 2, 3)))

    return _result(x.data + bias.data[None, :, None, None], (x, bias), backward)


# ---------------------------------------------------------------------------
# reductions


def sum_all(a: Tensor) -> Tensor:
    def backward(g: Array) -> None:
        _accumulate(a, np.full_like(a.data, g.item()))

    return _result(np.asarray(a.data.sum(), dtype=a.data.dtype), (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    if a.data.size == 0:
        raise ArgumentError("mean of an empty tensor is undefined")
    n = a.data.size

    def backward(g: Array) -> None:
        _accumulate(a, np.full_like(a.data, g.item() / n))

    return _result(np.asarray(a.data.mean(), dtype=a.data.dtype), (a,), backward)


# ---------------------------------------------------------------------------
# convolution and pooling


def _conv_geometry(h: int, w: int, kh: int, kw: int, stride: int, padding: int) -> tuple[int, int]:
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if kh > h + 2 * padding or kw > w + 2 * padding or oh < 1 or ow < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}")
    return oh, ow


def _im2col(xp: Array, kh: int, kw: int, stride: int, oh: int, ow: int) -> Array:
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols


def conv2d(x: Tensor, kernels: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation (no kernel flip) over a batch of images.

    ``x`` may be (c_in, h, w) for a single image or (n, c_in, h, w) for a
    batch; the result keeps the same rank. Kernels are
    (c_out, c_in, kh, kw).
    """
    if stride < 1:
        raise ArgumentError("conv2d: stride must be >= 1")
    if kernels.data.ndim != 4:
        raise ShapeError("conv2d: kernels must be (c_out, c_in, kh, kw)")
    single = x.data.ndim == 3
    if x.data.ndim not in (3, 4):
        raise ShapeError("conv2d: input must be (c,h,w) or (n,c,h,w)")
    xd = x.data[None] if single else x.data
    n, c_in, h, w = xd.shape
    c_out, kc, kh, kw = kernels.shape
    if kc != c_in:
        raise ShapeError(f"conv2d: input channels {c_in} != kernel channels {kc}")
    oh, ow = _conv_geometry(h, w, kh, kw, stride, padding)

    if padding:
        xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = xd
    cols = _im2col(xp, kh, kw, stride, oh, ow)
    cols_mat = cols.reshape(n, c_in * kh * kw, oh * ow)
    w_mat = kernels.data.reshape(c_out, c_in * kh * kw)
    out = np.matmul(w_mat, cols_mat).reshape(n, c_out, oh, ow)

    def backward(g: Array) -> None:
        gb = (g[None] if single else g).reshape(n, c_out, oh * ow)
        if kernels.requires_grad:
            gw = np.matmul(gb, cols_mat.transpose(0, 2, 1)).sum(axis=0)
            _accumulate(kernels, gw.reshape(kernels.shape))
        if x.requires_grad:
            gcols = np.matmul(w_mat.T, gb).reshape(n, c_in, kh, kw, oh, ow)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += gcols[:, :, i, j]
            gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
            _accumulate(x, gx[0] if single else gx)

    return _result(out[0] if single else out, (x, kernels), backward)


def maxpool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping max pooling; trailing rows/cols that do not fill a
    window are dropped. Ties route the gradient to the first maximum."""
    if size < 1:
        raise ArgumentError("maxpool2d: window size must be >= 1")
    single = x.data.ndim == 3
    xd = x.data[None] if single else x.data
    n, c, h, w = xd.shape
    oh, ow = h // size, w // size
    if oh < 1 or ow < 1:
        raise ShapeError("maxpool2d: input smaller than the pooling window")
    cropped = xd[:, :, : oh * size, : ow * size]
    windows = cropped.reshape(n, c, oh, size, ow, size).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, size * size)
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]

    def backward(g: Array) -> None:
        if not x.requires_grad:
            return
        gb = g[None] if single else g
        gwin = np.zeros_like(windows)
        np.put_along_axis(gwin, idx[..., None], gb[..., None], axis=-1)
        gcrop = gwin.reshape(n, c, oh, ow, size, size).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh * size, ow * size)
        gx = np.zeros_like(xd)
        gx[:, :, : oh * size, : ow * size] = gcrop
        _accumulate(x, gx[0] if single else gx)

    return _result(out[0] if single else out, (x,), backward)


# ---------------------------------------------------------------------------
# classification head


def softmax(logits: Array) -> Array:
    """Plain numpy softmax over the last axis (inference helper)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels: Array) -> Tensor:
    """Mean cross-entropy of integer ``labels`` under softmax(logits)."""
    if logits.data.ndim != 2:
        raise ShapeError("softmax_cross_entropy expects (n, classes) logits")
    labels = np.asarray(labels)
    n = logits.shape[0]
    if labels.shape != (n,):
        raise ShapeError("labels must be a vector with one entry per row")
    z = logits.data.astype(np.float64)
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    picked = z[np.arange(n), labels]
    loss = np.asarray((lse - picked).mean(), dtype=logits.data.dtype)
    probs = np.exp(z - lse[:, None])

    def backward(g: Array) -> None:
        gl = probs.copy()
        gl[np.arange(n), labels] -= 1.0
        _accumulate(logits, gl * (g.item() / n))

    return _result(loss, (logits,), backward)


# ---------------------------------------------------------------------------
# utilities


def parameters_finite(tensors: Iterable[Tensor]) -> bool:
    return all(np.all(np.isfinite(t.data)) for t in tensors)
