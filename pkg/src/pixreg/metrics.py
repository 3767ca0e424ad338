"""Image similarity metrics and the error-contribution decomposition.

All metrics run in float64 regardless of model precision:

  * rmse      - root mean squared difference normalized by the 255 range,
  * psnr      - 10*log10(255^2 / MSE) in dB, +inf for identical images,
  * ssim      - mean local structural similarity over 7x7 uniform windows,
  * cosine    - angle between the flattened intensity vectors,
  * phash     - Hamming distance between 64-bit average hashes.

The error histogram bins absolute differences into intensity classes of
width 10 and reports each class's contribution to the squared error, next
to the exact per-pixel identity sum that binning approximates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ShapeError, UndefinedInputError
from .image import ImageGrid, box_resample

RANGE = 255.0
SSIM_WINDOW = 7
SSIM_C1 = (0.01 * RANGE) ** 2
SSIM_C2 = (0.03 * RANGE) ** 2


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    ax = x.pixels if isinstance(x, ImageGrid) else np.asarray(x, dtype=np.float64)
    ay = y.pixels if isinstance(y, ImageGrid) else np.asarray(y, dtype=np.float64)
    if ax.shape != ay.shape:
        raise ShapeError(f"metric operands differ in shape: {ax.shape} vs {ay.shape}")
    return ax.astype(np.float64, copy=False), ay.astype(np.float64, copy=False)


def rmse(x, y) -> float:
    """Eq.-style normalized RMSE: sqrt(mean(((y - x) / 255)^2))."""
    ax, ay = _pair(x, y)
    return float(np.sqrt(np.mean(np.square((ay - ax) / RANGE))))


def psnr(x, y) -> float:
    """Peak signal-to-noise ratio in dB over raw intensities."""
    ax, ay = _pair(x, y)
    mse = float(np.mean(np.square(ay - ax)))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(RANGE * RANGE / mse)


def _window_means(arr: np.ndarray, w: int) -> np.ndarray:
    view = np.lib.stride_tricks.sliding_window_view(arr, (w, w))
    return view.mean(axis=(2, 3))


def ssim(x, y, window: int = SSIM_WINDOW) -> float:
    """Mean local SSIM, uniform window, windows fully inside the image.

    Local statistics are population moments over each window; c1/c2 are the
    standard stabilizers for an 8-bit range.
    """
    ax, ay = _pair(x, y)
    if min(ax.shape) < window:
        raise ArgumentError(f"ssim: image smaller than the {window}x{window} window")
    mx = _window_means(ax, window)
    my = _window_means(ay, window)
    mxx = _window_means(ax * ax, window)
    myy = _window_means(ay * ay, window)
    mxy = _window_means(ax * ay, window)
    vx = mxx - mx * mx
    vy = myy - my * my
    cov = mxy - mx * my
    num = (2 * mx * my + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2)
    return float(np.mean(num / den))


def cosine_similarity(x, y) -> float:
    ax, ay = _pair(x, y)
    vx, vy = ax.ravel(), ay.ravel()
    nx, ny = np.linalg.norm(vx), np.linalg.norm(vy)
    if nx == 0.0 or ny == 0.0:
        raise UndefinedInputError("cosine similarity is undefined for an all-zero image")
    return float(np.dot(vx, vy) / (nx * ny))


def average_hash(x) -> np.ndarray:
    """64-bit average hash: 8x8 box means thresholded at their mean."""
    arr = x.pixels if isinstance(x, ImageGrid) else np.asarray(x, dtype=np.float64)
    cells = box_resample(arr, 8, 8)
    return (cells > cells.mean()).ravel()


def phash_distance(x, y) -> int:
    return int(np.sum(average_hash(x) != average_hash(y)))


# ---------------------------------------------------------------------------
# error decomposition

N_BINS = 26  # 25 classes of width 10 plus the final 250..255 class


@dataclass
class ErrorHistogram:
    """Absolute-difference intensity classes and their squared-error share."""

    bin_edges: np.ndarray        # (N_BINS + 1,), last edge 255
    frequencies: np.ndarray      # (N_BINS,) pixel counts
    contributions: np.ndarray    # frequency * (upper edge / 255)^2 per class
    exact_identity_sum: float    # sum((y - x)^2) / 255^2 == NM * rmse^2


def error_histogram(x, y) -> ErrorHistogram:
    ax, ay = _pair(x, y)
    diff = np.abs(ay - ax).ravel()
    edges = np.concatenate([np.arange(0, 260, 10.0)[:N_BINS], [RANGE]])
    idx = np.minimum(diff // 10, N_BINS - 1).astype(int)
    freq = np.bincount(idx, minlength=N_BINS).astype(np.int64)
    uppers = edges[1:]
    contributions = freq * np.square(uppers / RANGE)
    exact = float(np.sum(np.square((ay - ax) / RANGE)))
    return ErrorHistogram(edges, freq, contributions, exact)


# ---------------------------------------------------------------------------
# report plumbing

METRIC_NAMES = ("rmse", "psnr", "ssim", "cosine", "phash_distance")


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    psnr: float
    ssim: float
    cosine: float
    phash_distance: int

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def evaluate_pair(x, y) -> MetricsReport:
    return MetricsReport(
        rmse=rmse(x, y),
        psnr=psnr(x, y),
        ssim=ssim(x, y),
        cosine=cosine_similarity(x, y),
        phash_distance=phash_distance(x, y),
    )


def aggregate(reports: list[MetricsReport]) -> dict[str, tuple[float, float]]:
    """Mean and sample standard deviation per metric (std 0 for n = 1)."""
    if not reports:
        raise ArgumentError("aggregate: no reports")
    out = {}
    for name in METRIC_NAMES:
        vals = np.array([getattr(r, name) for r in reports], dtype=np.float64)
        with np.errstate(invalid="ignore"):
            # identical images make PSNR +inf; its spread is then undefined
            std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        out[name] = (float(np.mean(vals)), std)
    return out
