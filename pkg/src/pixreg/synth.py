"""Synthetic benchmark image generator.

Images visualize the parametric curve

    f(x) = u1 * exp(-(u2 * (x - u3))^2) * cos(u4 * x) + u5

over the fixed domain x in [-0.4, 0.6], rendered in one of three styles:
the bare curve, the region between curve and zero baseline filled in, or
that region shaded with a vertical grayscale ramp.

Images are always rendered from the clean parameter setpoint; the recorded
label is the setpoint perturbed by uniform relative noise, mimicking noisy
test-bench metadata.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import ArgumentError, ConfigError
from .image import ImageGrid

X_DOMAIN = (-0.4, 0.6)
VALUE_RANGE = (-9.0, 9.0)

# ranges actually varied in the default study; u4 and u5 stay fixed
DEFAULT_RANGES: dict[str, tuple[float, float]] = {
    "u1": (1.5, 8.5),
    "u2": (1.7, 3.1),
    "u3": (1.0, 1.3),
}
U4_FIXED = 0.9
U5_FIXED = 0.0


@dataclass(frozen=True)
class SynthParams:
    u1: float
    u2: float
    u3: float
    u4: float = U4_FIXED
    u5: float = U5_FIXED

    def as_dict(self) -> dict[str, float]:
        return {"u1": self.u1, "u2": self.u2, "u3": self.u3, "u4": self.u4, "u5": self.u5}

    def label_dict(self) -> dict[str, float]:
        """The varied parameters, i.e. what conditions the model."""
        return {"u1": self.u1, "u2": self.u2, "u3": self.u3}


class RenderStyle(Enum):
    BINARY_PLOT = "binary"
    FILLED_INTEGRAL = "filled"
    GRADIENT_INTEGRAL = "gradient"

    @classmethod
    def parse(cls, name: str) -> "RenderStyle":
        for style in cls:
            if name.lower() in (style.value, style.name.lower()):
                return style
        raise ConfigError(f"unknown render style {name!r}")


def eval_f(p: SynthParams, x):
    """Evaluate the curve at scalar or array ``x``."""
    x = np.asarray(x, dtype=np.float64)
    g = np.exp(-np.square(p.u2 * (x - p.u3)))
    out = p.u1 * g * np.cos(p.u4 * x) + p.u5
    return float(out) if out.ndim == 0 else out


def _round_half_up(v):
    return np.floor(v + 0.5)


def value_to_row(v, height: int, value_range: tuple[float, float] = VALUE_RANGE) -> np.ndarray:
    """Map curve values to pixel rows; the top row holds the range maximum."""
    vmin, vmax = value_range
    rows = (vmax - v) / (vmax - vmin) * (height - 1)
    return np.clip(_round_half_up(rows), 0, height - 1).astype(int)


def baseline_row(height: int, value_range: tuple[float, float] = VALUE_RANGE) -> int:
    return int(value_to_row(np.float64(0.0), height, value_range))


def curve_rows(p: SynthParams, width: int, height: int,
               value_range: tuple[float, float] = VALUE_RANGE) -> np.ndarray:
    """Rasterized curve row per pixel column (columns sampled at centers)."""
    x0, x1 = X_DOMAIN
    xs = x0 + (np.arange(width) + 0.5) * (x1 - x0) / width
    return value_to_row(eval_f(p, xs), height, value_range)


def render(p: SynthParams, style: RenderStyle, width: int = 50, height: int = 50,
           value_range: tuple[float, float] = VALUE_RANGE) -> ImageGrid:
    """Deterministic rasterization of the curve in the requested style.

    Column samples are connected vertically so the drawn curve has no gaps;
    the filled styles cover everything between the zero baseline and the
    drawn span of each column.
    """
    if width < 2 or height < 2:
        raise ArgumentError("render: width and height must be >= 2")
    vmin, vmax = value_range
    if not vmax > vmin:
        raise ConfigError("render: degenerate value range (max <= min)")

    rows = curve_rows(p, width, height, value_range)
    base = baseline_row(height, value_range)
    img = np.zeros((height, width), dtype=np.float64)

    for j in range(width):
        prev = rows[j - 1] if j > 0 else rows[j]
        span_lo, span_hi = min(prev, rows[j]), max(prev, rows[j])
        if style is RenderStyle.BINARY_PLOT:
            img[span_lo : span_hi + 1, j] = 255.0
            continue
        lo, hi = min(base, span_lo), max(base, span_hi)
        if style is RenderStyle.FILLED_INTEGRAL:
            img[lo : hi + 1, j] = 255.0
        else:  # gradient: ramp away from the baseline, 255 at the curve
            d_above = base - lo
            d_below = hi - base
            for i in range(lo, hi + 1):
                d = abs(base - i)
                extent = d_above if i < base else d_below if i > base else max(d_above, d_below)
                img[i, j] = _round_half_up(255.0 * (d + 1) / (extent + 1))
    return ImageGrid(img)


@dataclass(frozen=True)
class SynthRecord:
    """One dataset entry: an image plus its clean and noisy parameters."""

    op_id: int
    replicate: int
    setpoint: SynthParams
    label: SynthParams
    style: RenderStyle
    image: ImageGrid = field(compare=False)


def label_bounds(levels_per_param: dict[str, list[float]], noise_pct: float) -> dict[str, tuple[float, float]]:
    """Normalization bounds wide enough for every noisy label.

    Labels are setpoint * (1 + u) with |u| <= noise_pct, so the bounds use
    the same multiplicative form (bit-exact coverage of extreme draws).
    """
    bounds = {}
    for name, levels in levels_per_param.items():
        lo = min(min(v * (1 - noise_pct), v * (1 + noise_pct)) for v in levels)
        hi = max(max(v * (1 - noise_pct), v * (1 + noise_pct)) for v in levels)
        if not hi > lo:
            # constant parameter: widen symmetrically so min-max stays valid
            pad = max(abs(lo) * 0.5, 0.5)
            lo, hi = lo - pad, hi + pad
        bounds[name] = (lo, hi)
    return bounds


def sample_dataset(levels_per_param: dict[str, list[float]], n_per_point: int,
                   noise_pct: float, seed: int, style: RenderStyle = RenderStyle.FILLED_INTEGRAL,
                   width: int = 50, height: int = 50) -> list[SynthRecord]:
    """Render the cartesian grid of setpoints, one clean image per point.

    Each of the ``n_per_point`` records of a setpoint shares the image but
    carries its own noisy label, drawn uniformly in +-noise_pct relative.
    Noise draws are seeded per operating point, so the records of a point
    are identical no matter which other points the grid contains.
    """
    if noise_pct < 0:
        raise ArgumentError("sample_dataset: noise_pct must be >= 0")
    names = list(levels_per_param)
    for name in names:
        if name not in ("u1", "u2", "u3"):
            raise ConfigError(f"sample_dataset: unknown parameter {name!r}")
    grids = [levels_per_param[n] for n in names]

    records: list[SynthRecord] = []
    for op_id, combo in enumerate(itertools.product(*grids)):
        values = dict(zip(names, combo))
        setpoint = SynthParams(
            u1=values.get("u1", sum(DEFAULT_RANGES["u1"]) / 2),
            u2=values.get("u2", sum(DEFAULT_RANGES["u2"]) / 2),
            u3=values.get("u3", sum(DEFAULT_RANGES["u3"]) / 2),
        )
        image = render(setpoint, style, width, height)
        rng = np.random.default_rng([seed, *(_level_key(v) for v in combo)])
        for k in range(n_per_point):
            factors = 1.0 + rng.uniform(-noise_pct, noise_pct, size=3)
            label = replace(
                setpoint,
                u1=setpoint.u1 * factors[0],
                u2=setpoint.u2 * factors[1],
                u3=setpoint.u3 * factors[2],
            )
            records.append(SynthRecord(op_id, k, setpoint, label, style, image))
    return records


def _level_key(value: float) -> int:
    # stable non-negative integer key for seeding; micro-unit resolution is plenty
    return int(round(value * 1_000_000)) % (2**63)
