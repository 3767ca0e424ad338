"""Residual feed-forward network mapping (x, y, parameters) -> intensity.

Layer plan: an input projection, two residual blocks, one more hidden
layer, and a scalar head,

    t = relu(W_in x + b_in)
    t = relu(t + W2 relu(W1 t + b1) + b2)     (x2 residual blocks)
    t = relu(W_mid t + b_mid)
    y = W_out t + b_out

All activations are ReLU and the output is raw; clamping to [0, 255]
happens only at inference.

Three stock widths reproduce the published size classes (rounded
parameter totals for 7 inputs): small 430 (~0.93 M), medium 840 (~3.5 M),
large 1160 (~6.7 M).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ArgumentError, ConfigError, ShapeError

SIZE_CLASS_WIDTHS = {"small": 430, "medium": 840, "large": 1160}


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    hidden_width: int
    n_residual_blocks: int = 2
    size_class: str | None = None

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_width < 1 or self.n_residual_blocks < 0:
            raise ConfigError("ModelSpec: dimensions must be positive")

    @classmethod
    def from_size_class(cls, size_class: str, input_dim: int) -> "ModelSpec":
        key = size_class.lower()
        if key not in SIZE_CLASS_WIDTHS:
            raise ConfigError(f"unknown size class {size_class!r}")
        return cls(input_dim=input_dim, hidden_width=SIZE_CLASS_WIDTHS[key], size_class=key)


def parameter_count(spec: ModelSpec) -> int:
    """Closed-form trainable parameter total for the layer plan."""
    h, d, r = spec.hidden_width, spec.input_dim, spec.n_residual_blocks
    return (d * h + h) + r * 2 * (h * h + h) + (h * h + h) + (h + 1)


class ModelState:
    """Ordered, named weight and bias tensors for one ModelSpec."""

    def __init__(self, spec: ModelSpec, params: list[Tensor], names: list[str]):
        self.spec = spec
        self.params = params
        self.names = names
        by_name = dict(zip(names, params))
        self._in = (by_name["in.w"], by_name["in.b"])
        self._blocks = [
            (by_name[f"rb{i}.w1"], by_name[f"rb{i}.b1"], by_name[f"rb{i}.w2"], by_name[f"rb{i}.b2"])
            for i in range(spec.n_residual_blocks)
        ]
        self._mid = (by_name["mid.w"], by_name["mid.b"])
        self._out = (by_name["out.w"], by_name["out.b"])

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params)

    def astype(self, dtype) -> "ModelState":
        clones = [Tensor(p.data.astype(dtype), requires_grad=True) for p in self.params]
        return ModelState(self.spec, clones, list(self.names))


def _init_layer(rng: np.random.Generator, fan_in: int, fan_out: int) -> tuple[np.ndarray, np.ndarray]:
    limit = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(np.float32)
    b = np.zeros(fan_out, dtype=np.float32)
    return w, b


def build(spec: ModelSpec, init_seed: int) -> ModelState:
    """Fan-in scaled uniform weights, zero biases, deterministic under seed."""
    rng = np.random.default_rng(init_seed)
    h, d = spec.hidden_width, spec.input_dim
    params: list[Tensor] = []
    names: list[str] = []

    def dense(fan_in: int, fan_out: int, wname: str, bname: str) -> None:
        w, b = _init_layer(rng, fan_in, fan_out)
        params.append(Tensor(w, requires_grad=True))
        names.append(wname)
        params.append(Tensor(b, requires_grad=True))
        names.append(bname)

    dense(d, h, "in.w", "in.b")
    for i in range(spec.n_residual_blocks):
        dense(h, h, f"rb{i}.w1", f"rb{i}.b1")
        dense(h, h, f"rb{i}.w2", f"rb{i}.b2")
    dense(h, h, "mid.w", "mid.b")
    dense(h, 1, "out.w", "out.b")
    return ModelState(spec, params, names)


def forward(state: ModelState, batch: Tensor) -> Tensor:
    """Differentiable forward pass; raw (unclipped) predictions."""
    if batch.data.ndim != 2 or batch.shape[1] != state.spec.input_dim:
        raise ShapeError(f"forward: batch width must be {state.spec.input_dim}")
    w, b = state._in
    t = ad.relu(ad.linear(batch, w, b))
    for w1, b1, w2, b2 in state._blocks:
        u = ad.relu(ad.linear(t, w1, b1))
        u = ad.linear(u, w2, b2)
        t = ad.relu(ad.add(t, u))
    w, b = state._mid
    t = ad.relu(ad.linear(t, w, b))
    w, b = state._out
    return ad.linear(t, w, b)


def forward_array(state: ModelState, X: np.ndarray) -> np.ndarray:
    """Graph-free forward pass with identical arithmetic, for inference."""
    if X.ndim != 2 or X.shape[1] != state.spec.input_dim:
        raise ShapeError(f"forward_array: batch width must be {state.spec.input_dim}")
    X = X.astype(state.params[0].data.dtype, copy=False)
    w, b = state._in
    t = np.maximum(X @ w.data + b.data, 0)
    for w1, b1, w2, b2 in state._blocks:
        u = np.maximum(t @ w1.data + b1.data, 0)
        u = u @ w2.data + b2.data
        t = np.maximum(t + u, 0)
    w, b = state._mid
    t = np.maximum(t @ w.data + b.data, 0)
    w, b = state._out
    return t @ w.data + b.data


def predict_clipped(state: ModelState, X) -> np.ndarray:
    """Inference-only predictions clamped to the valid intensity range."""
    arr = X.data if isinstance(X, Tensor) else np.asarray(X)
    return np.clip(forward_array(state, arr), 0.0, 255.0)


# ---------------------------------------------------------------------------
# checkpoints: versioned binary container, bit-exact round trip

_MAGIC = b"PXRCKPT1"


def save_checkpoint(state: ModelState, path: str | Path, meta: dict | None = None) -> None:
    header = {
        "kind": "model",
        "spec": {
            "input_dim": state.spec.input_dim,
            "hidden_width": state.spec.hidden_width,
            "n_residual_blocks": state.spec.n_residual_blocks,
            "size_class": state.spec.size_class,
        },
        "arrays": [
            {"name": n, "shape": list(p.data.shape), "dtype": str(p.data.dtype)}
            for n, p in zip(state.names, state.params)
        ],
        "meta": meta or {},
    }
    _write_container(path, header, [p.data for p in state.params])


def load_checkpoint(path: str | Path) -> tuple[ModelState, dict]:
    header, arrays = _read_container(path)
    if header.get("kind") != "model":
        raise ArgumentError(f"{path}: not a model checkpoint")
    spec = ModelSpec(**header["spec"])
    names = [a["name"] for a in header["arrays"]]
    params = [Tensor(arr, requires_grad=True) for arr in arrays]
    return ModelState(spec, params, names), header.get("meta", {})


def _write_container(path: str | Path, header: dict, arrays: list[np.ndarray]) -> None:
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr).tobytes())


def _read_container(path: str | Path) -> tuple[dict, list[np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ArgumentError(f"{path}: not a pixreg checkpoint")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    arrays = []
    offset = 12 + hlen
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * dtype.itemsize
        arr = np.frombuffer(raw[offset : offset + nbytes], dtype=dtype).reshape(entry["shape"]).copy()
        arrays.append(arr)
        offset += nbytes
    return header, arrays
