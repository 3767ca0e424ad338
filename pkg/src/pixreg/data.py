"""Operating points, pixel-level decomposition, splits and batch streams.

Training never sees whole images: every labeled image is decomposed into
per-pixel records of (normalized coordinates, normalized parameters,
target intensity). Splits are made over operating points, not images, so
repeated recordings of one point can never leak across subsets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ArgumentError, ConfigError, RangeError
from .image import ImageGrid


@dataclass(frozen=True)
class OperatingPoint:
    """One concrete combination of physical control parameters."""

    id: int
    params: dict[str, float]

    def __post_init__(self):
        for name, value in self.params.items():
            if not np.isfinite(value):
                raise RangeError(f"operating point {self.id}: parameter {name} is not finite")


class ParamBounds:
    """Ordered per-parameter min/max used for affine [0, 1] normalization."""

    def __init__(self, bounds: dict[str, tuple[float, float]]):
        self.names: tuple[str, ...] = tuple(bounds)
        self.lo = np.array([bounds[n][0] for n in self.names], dtype=np.float64)
        self.hi = np.array([bounds[n][1] for n in self.names], dtype=np.float64)
        if not np.all(self.hi > self.lo):
            raise ConfigError("ParamBounds: every parameter needs max > min")

    def __len__(self) -> int:
        return len(self.names)

    def as_dict(self) -> dict[str, tuple[float, float]]:
        return {n: (float(lo), float(hi)) for n, lo, hi in zip(self.names, self.lo, self.hi)}

    def normalize(self, params: dict[str, float]) -> np.ndarray:
        values = np.array([params[n] for n in self.names], dtype=np.float64)
        if np.any(values < self.lo) or np.any(values > self.hi):
            bad = [n for n, v, lo, hi in zip(self.names, values, self.lo, self.hi) if v < lo or v > hi]
            raise RangeError(
                f"parameters outside bounds: {', '.join(bad)} "
                "(extrapolation requests must widen the bounds explicitly)"
            )
        return (values - self.lo) / (self.hi - self.lo)

    def denormalize(self, vec: np.ndarray) -> dict[str, float]:
        vec = np.asarray(vec, dtype=np.float64)
        values = self.lo + vec * (self.hi - self.lo)
        return dict(zip(self.names, map(float, values)))


def normalize_params(op: OperatingPoint, bounds: ParamBounds) -> np.ndarray:
    return bounds.normalize(op.params)


@dataclass(frozen=True)
class PixelSample:
    """One training record: where, under which conditions, how bright."""

    x_norm: float
    y_norm: float
    params_norm: tuple[float, ...]
    target: float


def _axis_coords(n: int) -> np.ndarray:
    # both edges hit 0 and 1 exactly; a single row/column sits at 0
    return np.zeros(1) if n == 1 else np.arange(n) / (n - 1)


def decompose(image: ImageGrid, op: OperatingPoint, bounds: ParamBounds) -> list[PixelSample]:
    """Split an image into width*height pixel samples (row-major)."""
    pn = tuple(map(float, bounds.normalize(op.params)))
    xs = _axis_coords(image.width)
    ys = _axis_coords(image.height)
    out = []
    for r in range(image.height):
        y = float(ys[r])
        for c in range(image.width):
            out.append(PixelSample(float(xs[c]), y, pn, float(image.pixels[r, c])))
    return out


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.7
    val_frac: float = 0.2
    test_frac: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fracs):
            raise ConfigError("SplitSpec: fractions must be positive")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError("SplitSpec: fractions must sum to 1")


def split_by_operating_point(point_ids: Sequence[int], spec: SplitSpec) -> tuple[set[int], set[int], set[int]]:
    """Disjoint, exhaustive partition of ids; rounding remainder goes to train."""
    ids = sorted(set(point_ids))
    if not ids:
        raise ArgumentError("split_by_operating_point: no operating points given")
    n = len(ids)
    n_val = int(np.floor(spec.val_frac * n + 0.5))  # round half up, like quantize
    n_test = int(np.floor(spec.test_frac * n + 0.5))
    if n_val + n_test > n:
        raise ConfigError("split fractions leave no training points")
    perm = np.random.default_rng(spec.seed).permutation(n)
    shuffled = [ids[i] for i in perm]
    test = set(shuffled[:n_test])
    val = set(shuffled[n_test : n_test + n_val])
    train = set(shuffled[n_test + n_val :])
    return train, val, test


# ---------------------------------------------------------------------------
# batch streaming


def batch_indices(n: int, batch_size: int, seed: int, epoch: int) -> Iterator[np.ndarray]:
    """Index batches of one epoch's uniform shuffle, short tail included."""
    if batch_size < 1:
        raise ArgumentError("batch_size must be >= 1")
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def batch_stream(samples: Sequence[PixelSample], batch_size: int, seed: int,
                 epoch: int = 0) -> Iterator[list[PixelSample]]:
    """Shuffled batches of samples, deterministic under (seed, epoch)."""
    for idx in batch_indices(len(samples), batch_size, seed, epoch):
        yield [samples[i] for i in idx]


# ---------------------------------------------------------------------------
# vectorized sample storage for training


class SampleStore:
    """Column-oriented pixel samples: inputs, targets and provenance.

    ``X`` rows are (x_norm, y_norm, *params_norm) in float32; ``y`` holds raw
    targets in [0, 255]. ``op_ids``/``rows``/``cols`` keep enough provenance
    to look up per-pixel fault masks during informed training.
    """

    def __init__(self, X: np.ndarray, y: np.ndarray, op_ids: np.ndarray,
                 rows: np.ndarray, cols: np.ndarray, bounds: ParamBounds):
        self.X = X
        self.y = y
        self.op_ids = op_ids
        self.rows = rows
        self.cols = cols
        self.bounds = bounds

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def input_dim(self) -> int:
        return self.X.shape[1]

    @classmethod
    def build(cls, entries: Iterable[tuple[ImageGrid, dict[str, float], int]],
              bounds: ParamBounds) -> "SampleStore":
        """Assemble a store from (image, label parameters, op id) entries."""
        xs, ys, ops, rr, cc = [], [], [], [], []
        for image, label, op_id in entries:
            h, w = image.height, image.width
            pn = bounds.normalize(label)
            cx = _axis_coords(w)
            cy = _axis_coords(h)
            gx, gy = np.meshgrid(cx, cy)
            n = h * w
            block = np.empty((n, 2 + len(bounds)), dtype=np.float32)
            block[:, 0] = gx.ravel()
            block[:, 1] = gy.ravel()
            block[:, 2:] = pn.astype(np.float32)
            xs.append(block)
            ys.append(image.pixels.reshape(n, 1).astype(np.float32))
            ops.append(np.full(n, op_id, dtype=np.int32))
            gr, gc = np.divmod(np.arange(n, dtype=np.int32), w)
            rr.append(gr)
            cc.append(gc)
        if not xs:
            raise ArgumentError("SampleStore.build: no entries")
        return cls(np.concatenate(xs), np.concatenate(ys), np.concatenate(ops),
                   np.concatenate(rr), np.concatenate(cc), bounds)

    def subset(self, op_id_set: set[int]) -> "SampleStore":
        mask = np.isin(self.op_ids, sorted(op_id_set))
        return SampleStore(self.X[mask], self.y[mask], self.op_ids[mask],
                           self.rows[mask], self.cols[mask], self.bounds)
