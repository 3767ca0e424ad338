"""Preprocessing for chamber images: unwarping, denoising, segmentation.

The semi-cylindrical chamber appears in camera images as a band bounded by
two elliptical arcs. Unwarping lays that band out flat: arc-length-uniform
columns are interpolated between the arcs, and every quadrilateral grid
cell is mapped onto a rectangular output cell with its own perspective
(homography) transform and bilinear sampling. A flat chamber (semi-axis
b = 0) degenerates to an axis-aligned crop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ArgumentError, GeometryError, ShapeError
from .image import ImageGrid, box_resample

_EIGHT_CONN = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class ChamberGeometry:
    """Two boundary arcs plus the sampling grid between them.

    Each arc is the upper half of an ellipse (bulging toward smaller y),
    parameterized as x = a*cos(phi), y = -b*sin(phi), rotated by
    ``rotation`` and shifted to its center. b = 0 encodes a flat surface.
    """

    center_x: float
    upper_center_y: float
    lower_center_y: float
    a_upper: float
    b_upper: float
    a_lower: float
    b_lower: float
    rotation: float = 0.0
    grid_cols: int = 32
    grid_rows: int = 8
    cell_w: int = 4
    cell_h: int = 4

    def __post_init__(self):
        if min(self.a_upper, self.a_lower) <= 0 or min(self.b_upper, self.b_lower) < 0:
            raise GeometryError("ChamberGeometry: semi-axes must be positive (b may be 0)")
        if min(self.grid_cols, self.grid_rows, self.cell_w, self.cell_h) < 1:
            raise GeometryError("ChamberGeometry: grid resolution must be >= 1")

    @property
    def out_width(self) -> int:
        return self.grid_cols * self.cell_w

    @property
    def out_height(self) -> int:
        return self.grid_rows * self.cell_h


def _arc_points(a: float, b: float, cx: float, cy: float, rotation: float, n: int) -> np.ndarray:
    """n points on the arc, uniformly spaced in arc length, left to right.

    Coordinates are interpolated directly against cumulative arc length, so
    the flat case (b = 0) yields exactly uniform x spacing.
    """
    fine = np.linspace(np.pi, 0.0, 2048)
    xs = a * np.cos(fine)
    ys = -b * np.sin(fine)
    seg = np.hypot(np.diff(xs), np.diff(ys))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, s[-1], n)
    px = np.interp(targets, s, xs)
    py = np.interp(targets, s, ys)
    cos_r, sin_r = np.cos(rotation), np.sin(rotation)
    return np.stack([cx + cos_r * px - sin_r * py, cy + sin_r * px + cos_r * py], axis=1)


def _source_grid(geom: ChamberGeometry) -> np.ndarray:
    """(grid_rows+1, grid_cols+1, 2) source coordinates across the band."""
    top = _arc_points(geom.a_upper, geom.b_upper, geom.center_x, geom.upper_center_y,
                      geom.rotation, geom.grid_cols + 1)
    bot = _arc_points(geom.a_lower, geom.b_lower, geom.center_x, geom.lower_center_y,
                      geom.rotation, geom.grid_cols + 1)
    fractions = np.linspace(0.0, 1.0, geom.grid_rows + 1)[:, None, None]
    return top[None] * (1.0 - fractions) + bot[None] * fractions


def _homography(src_quad: np.ndarray, dst_quad: np.ndarray) -> np.ndarray:
    """3x3 perspective transform taking dst points onto src points."""
    A = np.zeros((8, 8))
    rhs = np.zeros(8)
    for i, ((xd, yd), (xs, ys)) in enumerate(zip(dst_quad, src_quad)):
        A[2 * i] = [xd, yd, 1, 0, 0, 0, -xd * xs, -yd * xs]
        A[2 * i + 1] = [0, 0, 0, xd, yd, 1, -xd * ys, -yd * ys]
        rhs[2 * i] = xs
        rhs[2 * i + 1] = ys
    try:
        h = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise GeometryError(f"degenerate grid cell: {exc}") from exc
    return np.concatenate([h, [1.0]]).reshape(3, 3)


def _check_convex(quad: np.ndarray) -> None:
    signs = []
    for i in range(4):
        a, b, c = quad[i], quad[(i + 1) % 4], quad[(i + 2) % 4]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        signs.append(np.sign(cross))
    nonzero = [s for s in signs if s != 0]
    if nonzero and (min(nonzero) < 0 < max(nonzero)):
        raise GeometryError("self-intersecting grid cell")


def _bilinear_sample(arr: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w = arr.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    top = arr[y0, x0] * (1 - fx) + arr[y0, x1] * fx
    bot = arr[y1, x0] * (1 - fx) + arr[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def unwarp(image: ImageGrid, geom: ChamberGeometry) -> ImageGrid:
    """Flatten the arc-bounded band to a grid_cols*cell_w x grid_rows*cell_h image."""
    grid = _source_grid(geom)
    h, w = image.pixels.shape
    if grid[..., 0].min() < -0.5 or grid[..., 0].max() > w - 0.5 or \
       grid[..., 1].min() < -0.5 or grid[..., 1].max() > h - 0.5:
        raise GeometryError("geometry arcs extend outside the image")

    cw, ch = geom.cell_w, geom.cell_h
    out = np.empty((geom.out_height, geom.out_width), dtype=np.float64)
    yy, xx = np.mgrid[0:ch, 0:cw]
    ones = np.ones_like(xx, dtype=np.float64)
    for gj in range(geom.grid_rows):
        for gi in range(geom.grid_cols):
            src_quad = np.array([grid[gj, gi], grid[gj, gi + 1], grid[gj + 1, gi + 1], grid[gj + 1, gi]])
            _check_convex(src_quad)
            x0, y0 = gi * cw, gj * ch
            dst_quad = np.array([[x0, y0], [x0 + cw, y0], [x0 + cw, y0 + ch], [x0, y0 + ch]], dtype=np.float64)
            H = _homography(src_quad, dst_quad)
            px = x0 + xx + 0.5
            py = y0 + yy + 0.5
            denom = H[2, 0] * px + H[2, 1] * py + H[2, 2]
            sx = (H[0, 0] * px + H[0, 1] * py + H[0, 2] * ones) / denom
            sy = (H[1, 0] * px + H[1, 1] * py + H[1, 2] * ones) / denom
            # homography maps pixel centers; convert to array indices
            out[y0 : y0 + ch, x0 : x0 + cw] = _bilinear_sample(image.pixels, sx - 0.5, sy - 0.5)
    return ImageGrid(np.clip(out, 0.0, 255.0))


def warp_into(flat: ImageGrid, geom: ChamberGeometry, out_h: int, out_w: int,
              background: float = 0.0) -> ImageGrid:
    """Inverse of unwarp for fixtures: paint a flat image into the band.

    For each grid cell, camera pixels inside the cell's source quadrilateral
    sample the flat image through the inverted cell homography.
    """
    if flat.width != geom.out_width or flat.height != geom.out_height:
        raise ShapeError("warp_into: flat image must match the geometry's output size")
    grid = _source_grid(geom)
    cw, ch = geom.cell_w, geom.cell_h
    out = np.full((out_h, out_w), float(background), dtype=np.float64)
    for gj in range(geom.grid_rows):
        for gi in range(geom.grid_cols):
            src_quad = np.array([grid[gj, gi], grid[gj, gi + 1], grid[gj + 1, gi + 1], grid[gj + 1, gi]])
            x0, y0 = gi * cw, gj * ch
            dst_quad = np.array([[x0, y0], [x0 + cw, y0], [x0 + cw, y0 + ch], [x0, y0 + ch]], dtype=np.float64)
            H_inv = np.linalg.inv(_homography(src_quad, dst_quad))

            bx0 = max(int(np.floor(src_quad[:, 0].min())), 0)
            bx1 = min(int(np.ceil(src_quad[:, 0].max())) + 1, out_w)
            by0 = max(int(np.floor(src_quad[:, 1].min())), 0)
            by1 = min(int(np.ceil(src_quad[:, 1].max())) + 1, out_h)
            if bx0 >= bx1 or by0 >= by1:
                continue
            yy, xx = np.mgrid[by0:by1, bx0:bx1]
            px = xx + 0.5
            py = yy + 0.5
            denom = H_inv[2, 0] * px + H_inv[2, 1] * py + H_inv[2, 2]
            fx = (H_inv[0, 0] * px + H_inv[0, 1] * py + H_inv[0, 2]) / denom
            fy = (H_inv[1, 0] * px + H_inv[1, 1] * py + H_inv[1, 2]) / denom
            inside = (fx >= x0) & (fx <= x0 + cw) & (fy >= y0) & (fy <= y0 + ch)
            if not inside.any():
                continue
            vals = _bilinear_sample(flat.pixels, fx - 0.5, fy - 0.5)
            region = out[by0:by1, bx0:bx1]
            region[inside] = vals[inside]
    return ImageGrid(np.clip(out, 0.0, 255.0))


# ---------------------------------------------------------------------------
# denoising, segmentation, resolution


def temporal_mean(stack: list[ImageGrid]) -> ImageGrid:
    """Per-pixel arithmetic mean over a stack of equally sized frames."""
    if not stack:
        raise ArgumentError("temporal_mean: empty stack")
    shape = stack[0].pixels.shape
    for frame in stack:
        if frame.pixels.shape != shape:
            raise ShapeError("temporal_mean: frame dimensions differ")
    return ImageGrid(np.mean([f.pixels for f in stack], axis=0))


@dataclass(frozen=True)
class SegmentationConfig:
    background: ImageGrid
    diff_threshold: float = 30.0
    adaptive_block: int = 15
    adaptive_offset: float = 10.0
    min_artifact_area: int = 8

    def __post_init__(self):
        if self.adaptive_block < 3 or self.adaptive_block % 2 == 0:
            raise ArgumentError("SegmentationConfig: adaptive block size must be odd and >= 3")
        if self.diff_threshold < 0 or self.min_artifact_area < 0:
            raise ArgumentError("SegmentationConfig: thresholds must be >= 0")


def _largest_component(mask: np.ndarray) -> np.ndarray:
    labels, count = ndimage.label(mask, structure=_EIGHT_CONN)
    if count == 0:
        return np.zeros_like(mask)
    sizes = ndimage.sum_labels(np.ones_like(mask, dtype=np.int64), labels, index=np.arange(1, count + 1))
    return labels == (1 + int(np.argmax(sizes)))


def _drop_small_components(mask: np.ndarray, min_area: int) -> np.ndarray:
    if min_area <= 1:
        return mask
    labels, count = ndimage.label(mask, structure=_EIGHT_CONN)
    if count == 0:
        return mask
    sizes = ndimage.sum_labels(np.ones_like(mask, dtype=np.int64), labels, index=np.arange(1, count + 1))
    keep = np.flatnonzero(sizes >= min_area) + 1
    return np.isin(labels, keep)


def segment(image: ImageGrid, cfg: SegmentationConfig) -> ImageGrid:
    """Two-route film segmentation fused with a logical OR.

    Route A subtracts a static background and thresholds the absolute
    difference. Route B marks pixels exceeding their local (block) mean by
    the configured offset and keeps only its largest connected region.
    Components of the fused mask below the minimum artifact area are
    discarded. Output is strictly {0, 255}.
    """
    if image.pixels.shape != cfg.background.pixels.shape:
        raise ShapeError("segment: background dimensions differ from the image")
    diff_mask = np.abs(image.pixels - cfg.background.pixels) > cfg.diff_threshold

    local_mean = ndimage.uniform_filter(image.pixels, size=cfg.adaptive_block, mode="nearest")
    adaptive = image.pixels > (local_mean + cfg.adaptive_offset)
    adaptive = _largest_component(adaptive)

    fused = _drop_small_components(diff_mask | adaptive, cfg.min_artifact_area)
    return ImageGrid(np.where(fused, 255.0, 0.0))


def pad_width(image: ImageGrid, target_width: int, background: float = 0.0) -> ImageGrid:
    """Symmetric horizontal padding; the extra column goes to the right."""
    w = image.width
    if target_width < w:
        raise ArgumentError("pad_width: target narrower than the image")
    if target_width == w:
        return image.copy()
    left = (target_width - w) // 2
    right = target_width - w - left
    return ImageGrid(np.pad(image.pixels, ((0, 0), (left, right)), constant_values=background))


def normalize_resolution(image: ImageGrid, target_w: int, target_h: int,
                         pad_to_width: int | None = None,
                         binary_output: bool = False) -> ImageGrid:
    """Optional symmetric padding, then box-average resampling to target.

    With ``binary_output`` the result is re-thresholded at 128 so binary
    masks stay binary after downsampling.
    """
    if target_w < 1 or target_h < 1:
        raise ArgumentError("normalize_resolution: target must be >= 1 in both dimensions")
    work = pad_width(image, pad_to_width) if pad_to_width and pad_to_width > image.width else image
    arr = box_resample(work.pixels, target_h, target_w)
    if binary_output:
        arr = np.where(arr >= 128.0, 255.0, 0.0)
    return ImageGrid(np.clip(arr, 0.0, 255.0))
