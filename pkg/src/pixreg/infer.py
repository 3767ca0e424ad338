"""Full-image reconstruction by sweeping every pixel through the model.

Per-pixel evaluation is a pure function of (coordinates, parameters), so
row batching is free to change without changing the result.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage, ImageDraw

from .data import OperatingPoint, ParamBounds
from .errors import ArgumentError
from .image import ImageGrid, quantize
from .model import ModelState, forward_array


def _coord_axis(n: int) -> np.ndarray:
    return np.zeros(1, dtype=np.float64) if n == 1 else np.arange(n) / (n - 1)


def generate(state: ModelState, op: OperatingPoint | dict, bounds: ParamBounds,
             width: int, height: int) -> ImageGrid:
    """Predict all width*height intensities for one operating point.

    Pixels are forwarded one image row at a time; the chunk shape is fixed
    by the width, so every pixel's value is independent of how the sweep is
    scheduled (identical to a sequential per-pixel evaluation).
    """
    if width < 1 or height < 1:
        raise ArgumentError("generate: width and height must be >= 1")
    params = op.params if isinstance(op, OperatingPoint) else op
    pn = bounds.normalize(params).astype(np.float32)
    xs = _coord_axis(width).astype(np.float32)
    ys = _coord_axis(height).astype(np.float32)

    out = np.empty((height, width), dtype=np.float64)
    block = np.empty((width, 2 + len(bounds)), dtype=np.float32)
    block[:, 0] = xs
    block[:, 2:] = pn
    for r in range(height):
        block[:, 1] = ys[r]
        pred = forward_array(state, block)
        out[r] = np.clip(pred.astype(np.float64).ravel(), 0.0, 255.0)
    return ImageGrid(out)


def generate_sweep(state: ModelState, base_op: OperatingPoint | dict, varied_param: str,
                   values: list[float], bounds: ParamBounds,
                   width: int, height: int) -> list[ImageGrid]:
    """One image per value, all other parameters held at the base point."""
    params = dict(base_op.params if isinstance(base_op, OperatingPoint) else base_op)
    if varied_param not in bounds.names:
        raise ArgumentError(f"generate_sweep: unknown parameter {varied_param!r}")
    images = []
    for v in values:
        swept = dict(params)
        swept[varied_param] = float(v)
        images.append(generate(state, swept, bounds, width, height))
    return images


def write_montage(images: list[ImageGrid], path: str | Path,
                  labels: list[str] | None = None,
                  train_flags: list[bool] | None = None,
                  gap: int = 4, border: int = 2) -> None:
    """Tile a sweep into one labeled strip; training frames get a red border."""
    if not images:
        raise ArgumentError("write_montage: no images")
    train_flags = train_flags or [False] * len(images)
    labels = labels or [""] * len(images)
    h, w = images[0].height, images[0].width
    label_h = 12 if any(labels) else 0
    tile_w, tile_h = w + 2 * border, h + 2 * border + label_h
    total_w = len(images) * tile_w + gap * (len(images) + 1)
    total_h = tile_h + 2 * gap

    canvas = PILImage.new("RGB", (total_w, total_h), (255, 255, 255))
    draw = ImageDraw.Draw(canvas)
    for i, (img, flag, label) in enumerate(zip(images, train_flags, labels)):
        x0 = gap + i * (tile_w + gap)
        y0 = gap
        frame = (200, 30, 30) if flag else (90, 90, 90)
        draw.rectangle([x0, y0, x0 + tile_w - 1, y0 + h + 2 * border - 1], fill=frame)
        tile = PILImage.fromarray(quantize(img), mode="L").convert("RGB")
        canvas.paste(tile, (x0 + border, y0 + border))
        if label:
            draw.text((x0 + border, y0 + h + 2 * border + 1), str(label), fill=(0, 0, 0))
    canvas.save(str(path), format="PNG")
