"""Grayscale image container plus deterministic file I/O and resampling.

Pixels are kept as float64 in [0, 255] for the whole pipeline; quantization
to 8 bits (round half up) happens only when a file is written, so metrics
always see full precision.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import ArgumentError, RangeError, ShapeError


class ImageGrid:
    """Dense 2-D grid of intensities in [0, 255]."""

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = np.ascontiguousarray(pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ShapeError("ImageGrid needs a non-empty 2-D array")
        if not np.all(np.isfinite(arr)):
            raise RangeError("ImageGrid pixels must be finite")
        if arr.min() < 0.0 or arr.max() > 255.0:
            raise RangeError("ImageGrid pixels must lie in [0, 255]")
        self.pixels = arr

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def copy(self) -> "ImageGrid":
        return ImageGrid(self.pixels.copy())

    def __eq__(self, other) -> bool:
        return isinstance(other, ImageGrid) and np.array_equal(self.pixels, other.pixels)

    def __repr__(self) -> str:
        return f"ImageGrid({self.width}x{self.height})"


def quantize(image: ImageGrid | np.ndarray) -> np.ndarray:
    """Round half up to uint8; used only at file-write time."""
    arr = image.pixels if isinstance(image, ImageGrid) else np.asarray(image, dtype=np.float64)
    return np.clip(np.floor(arr + 0.5), 0, 255).astype(np.uint8)


def write_pgm(image: ImageGrid, path: str | Path) -> None:
    arr = quantize(image)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + arr.tobytes())


def read_pgm(path: str | Path) -> ImageGrid:
    raw = Path(path).read_bytes()
    stream = io.BytesIO(raw)

    def token() -> bytes:
        out = b""
        while True:
            ch = stream.read(1)
            if not ch:
                break
            if ch.isspace():
                if out:
                    break
                continue
            if ch == b"#":  # comment to end of line
                stream.readline()
                continue
            out += ch
        return out

    magic = token()
    if magic != b"P5":
        raise ArgumentError(f"{path}: not a binary PGM file")
    width, height, maxval = int(token()), int(token()), int(token())
    if maxval != 255:
        raise ArgumentError(f"{path}: only 8-bit PGM supported")
    data = stream.read(width * height)
    arr = np.frombuffer(data, dtype=np.uint8).reshape(height, width)
    return ImageGrid(arr.astype(np.float64))


def write_png(image: ImageGrid, path: str | Path) -> None:
    PILImage.fromarray(quantize(image), mode="L").save(str(path), format="PNG")


def read_image(path: str | Path) -> ImageGrid:
    """Read PGM directly, anything else through Pillow as 8-bit grayscale."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    with PILImage.open(str(path)) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return ImageGrid(arr)


def write_image(image: ImageGrid, path: str | Path) -> None:
    if Path(path).suffix.lower() == ".pgm":
        write_pgm(image, path)
    else:
        write_png(image, path)


# ---------------------------------------------------------------------------
# resampling


def _overlap_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) row-stochastic matrix of interval overlaps."""
    w = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / w.sum(axis=1, keepdims=True)


def box_resample(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Area-weighted box resampling of a 2-D array.

    Integer downsampling factors reduce to an exact block mean, so constant
    images keep their value bit for bit.
    """
    if out_h < 1 or out_w < 1:
        raise ArgumentError("box_resample: output size must be >= 1")
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape
    if (h, w) == (out_h, out_w):
        return arr.copy()
    if h % out_h == 0 and w % out_w == 0:
        fh, fw = h // out_h, w // out_w
        return arr.reshape(out_h, fh, out_w, fw).mean(axis=(1, 3))
    wy = _overlap_weights(h, out_h)
    wx = _overlap_weights(w, out_w)
    return wy @ arr @ wx.T


def bilinear_resize(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear interpolation with half-pixel centers (edges clamped)."""
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys), 0, h - 1).astype(int)
    x0 = np.clip(np.floor(xs), 0, w - 1).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    top = arr[np.ix_(y0, x0)] * (1 - fx) + arr[np.ix_(y0, x1)] * fx
    bot = arr[np.ix_(y1, x0)] * (1 - fx) + arr[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy
