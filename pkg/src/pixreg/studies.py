"""Study harnesses: interpolation/extrapolation, dataset reduction, fault
adaptation.

Each study trains one model per data configuration on the synthetic
benchmark, evaluates every configuration against clean renders on a shared
set of operating points, and returns a report object that serializes
deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ParamBounds, SampleStore
from .errors import ArgumentError
from .faultcam import ClassifierConfig, assess_and_map, fixture_corpus, train_classifier
from .image import ImageGrid
from .infer import generate
from .metrics import MetricsReport, aggregate, evaluate_pair, rmse
from .model import ModelSpec, ModelState, build
from .synth import RenderStyle, SynthParams, label_bounds, render, sample_dataset
from .train import TrainConfig, TrainLog, train

VARIED_PARAMS = ("u1", "u2", "u3")


def _canonical_grid(varied: str, levels: tuple[float, ...], fixed: dict[str, float]) -> dict[str, list[float]]:
    grid: dict[str, list[float]] = {}
    for name in VARIED_PARAMS:
        if name == varied:
            grid[name] = [float(v) for v in levels]
        else:
            grid[name] = [float(fixed[name])]
    return grid


def _clean_params(varied: str, value: float, fixed: dict[str, float]) -> dict[str, float]:
    params = {name: float(fixed[name]) for name in VARIED_PARAMS if name != varied}
    params[varied] = float(value)
    return {name: params[name] for name in VARIED_PARAMS}


@dataclass(frozen=True)
class SynthStudyBase:
    """Knobs shared by the synthetic studies."""

    varied_param: str = "u3"
    fixed: tuple[tuple[str, float], ...] = (("u1", 6.0), ("u2", 1.7))
    style: str = "filled"
    n_per_point: int = 5
    noise_pct: float = 0.05
    width: int = 50
    height: int = 50
    model_size: str = "small"
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-4
    seed: int = 0

    def fixed_dict(self) -> dict[str, float]:
        return dict(self.fixed)

    def render_style(self) -> RenderStyle:
        return RenderStyle.parse(self.style)


def _train_on_levels(base: SynthStudyBase, grid: dict[str, list[float]],
                     bounds: ParamBounds, keep_levels: set[float]) -> tuple[ModelState, TrainLog, dict[int, float]]:
    """Train one model on the subset of grid points whose varied level is kept."""
    records = sample_dataset(grid, base.n_per_point, base.noise_pct, base.seed,
                             style=base.render_style(), width=base.width, height=base.height)
    varied = base.varied_param
    level_of_op: dict[int, float] = {}
    entries = []
    for rec in records:
        level = getattr(rec.setpoint, varied)
        level_of_op[rec.op_id] = level
        if any(abs(level - k) < 1e-12 for k in keep_levels):
            entries.append((rec.image, rec.label.label_dict(), rec.op_id))
    if not entries:
        raise ArgumentError("no training data left after level selection")

    store = SampleStore.build(entries, bounds)
    spec = ModelSpec.from_size_class(base.model_size, input_dim=2 + len(bounds))
    state = build(spec, init_seed=base.seed)
    cfg = TrainConfig(
        epochs=base.epochs, batch_size=base.batch_size,
        learning_rate=base.learning_rate, seed=base.seed,
    )
    log = train(state, store, cfg)
    return state, log, level_of_op


def _eval_rmse_at_level(state: ModelState, base: SynthStudyBase, bounds: ParamBounds,
                        level: float) -> float:
    params = _clean_params(base.varied_param, level, base.fixed_dict())
    truth = render(SynthParams(**params), base.render_style(), base.width, base.height)
    predicted = generate(state, params, bounds, base.width, base.height)
    return rmse(truth, predicted)


# ---------------------------------------------------------------------------
# interpolation / extrapolation study


@dataclass(frozen=True)
class InterpStudyConfig(SynthStudyBase):
    levels: tuple[float, ...] = (1.00, 1.15, 1.30)


@dataclass
class InterpStudyReport:
    param: str
    levels: list[float]
    trained_levels: dict[str, list[float]]
    rmse_table: dict[str, list[float]]  # configuration -> per-level RMSE

    def as_dict(self) -> dict:
        return {
            "param": self.param,
            "levels": self.levels,
            "trained_levels": self.trained_levels,
            "rmse_table": self.rmse_table,
        }

    def text_table(self) -> str:
        head = f"{'level of ' + self.param:<16}" + "".join(f"{c:>16}" for c in self.rmse_table)
        rows = [head]
        for i, level in enumerate(self.levels):
            cells = "".join(f"{self.rmse_table[c][i]:>16.4f}" for c in self.rmse_table)
            rows.append(f"{level:<16.4g}" + cells)
        return "\n".join(rows)


def study_interp(cfg: InterpStudyConfig) -> InterpStudyReport:
    """Reference vs middle-level-held-out vs boundary-level-held-out.

    Trains three models: on all levels, on all but the middle level
    (interpolation) and on all but the first level (extrapolation), then
    reports per-level RMSE against clean renders for each.
    """
    levels = sorted(cfg.levels)
    if len(levels) < 3:
        raise ArgumentError("study_interp needs at least 3 levels")
    mid = levels[len(levels) // 2]
    grid = _canonical_grid(cfg.varied_param, tuple(levels), cfg.fixed_dict())
    bounds = ParamBounds(label_bounds(grid, cfg.noise_pct))

    configurations = {
        "reference": set(levels),
        "interpolation": set(levels) - {mid},
        "extrapolation": set(levels) - {levels[0]},
    }
    table: dict[str, list[float]] = {}
    trained: dict[str, list[float]] = {}
    for name, keep in configurations.items():
        state, _, _ = _train_on_levels(cfg, grid, bounds, keep)
        table[name] = [_eval_rmse_at_level(state, cfg, bounds, lv) for lv in levels]
        trained[name] = sorted(keep)
    return InterpStudyReport(cfg.varied_param, levels, trained, table)


# ---------------------------------------------------------------------------
# dataset reduction study


@dataclass(frozen=True)
class ReduceStudyConfig(SynthStudyBase):
    varied_param: str = "u1"
    fixed: tuple[tuple[str, float], ...] = (("u2", 1.7), ("u3", 1.15))
    levels: tuple[float, ...] = (1.5, 3.25, 5.0, 6.75, 8.5)
    test_values: tuple[float, ...] = (2.375, 4.125, 5.875, 7.625)
    # each reduction: (name, kept levels) or (name, fraction) for random drops
    reductions: tuple = (
        ("3-settings", (1.5, 5.0, 8.5)),
        ("2-settings", (1.5, 8.5)),
    )


@dataclass
class ReduceStudyReport:
    param: str
    test_values: list[float]
    configurations: dict[str, list[float]]  # name -> trained levels
    per_point: dict[str, list[dict]]        # name -> rows (one per test value)
    summary: dict[str, dict[str, tuple[float, float]]]  # name -> metric -> (mean, std)

    def as_dict(self) -> dict:
        return {
            "param": self.param,
            "test_values": self.test_values,
            "configurations": self.configurations,
            "per_point": self.per_point,
            "summary": {
                name: {m: [v[0], v[1]] for m, v in metrics.items()}
                for name, metrics in self.summary.items()
            },
        }

    def text_table(self) -> str:
        names = list(self.summary)
        lines = [f"{'metric':<18}" + "".join(f"{n:>26}" for n in names)]
        for metric in next(iter(self.summary.values())):
            cells = "".join(
                f"{self.summary[n][metric][0]:>16.4f} ± {self.summary[n][metric][1]:<7.4f}"
                for n in names
            )
            lines.append(f"{metric:<18}" + cells)
        return "\n".join(lines)


def study_reduce(cfg: ReduceStudyConfig) -> ReduceStudyReport:
    """Baseline vs systematically or randomly reduced training grids.

    Every configuration is evaluated with the full metric suite on the same
    held-out test values (never part of any training grid).
    """
    levels = sorted(cfg.levels)
    grid = _canonical_grid(cfg.varied_param, tuple(levels), cfg.fixed_dict())
    bounds = ParamBounds(label_bounds(grid, cfg.noise_pct))
    for v in cfg.test_values:
        lo, hi = min(levels), max(levels)
        if not lo <= v <= hi:
            raise ArgumentError(f"test value {v} outside the training range [{lo}, {hi}]")

    configurations: dict[str, set[float]] = {"baseline": set(levels)}
    for name, selector in cfg.reductions:
        if isinstance(selector, (int, float)) and not isinstance(selector, bool):
            frac = float(selector)
            if not 0.0 < frac < 1.0:
                raise ArgumentError(f"reduction {name}: fraction must lie in (0, 1)")
            rng = np.random.default_rng([cfg.seed, 17])
            n_drop = int(round(frac * len(levels)))
            dropped = rng.choice(len(levels), size=n_drop, replace=False)
            keep = {lv for i, lv in enumerate(levels) if i not in set(dropped.tolist())}
        else:
            keep = {float(v) for v in selector}
            unknown = keep - set(levels)
            if unknown:
                raise ArgumentError(f"reduction {name} references unknown levels {sorted(unknown)}")
        configurations[name] = keep

    per_point: dict[str, list[dict]] = {}
    summary: dict[str, dict[str, tuple[float, float]]] = {}
    trained: dict[str, list[float]] = {}
    for name, keep in configurations.items():
        state, _, _ = _train_on_levels(cfg, grid, bounds, keep)
        rows = []
        reports: list[MetricsReport] = []
        for v in cfg.test_values:
            params = _clean_params(cfg.varied_param, v, cfg.fixed_dict())
            truth = render(SynthParams(**params), cfg.render_style(), cfg.width, cfg.height)
            predicted = generate(state, params, bounds, cfg.width, cfg.height)
            report = evaluate_pair(truth, predicted)
            reports.append(report)
            rows.append({"value": v, **report.as_dict()})
        per_point[name] = rows
        summary[name] = aggregate(reports)
        trained[name] = sorted(keep)
    return ReduceStudyReport(cfg.varied_param, list(cfg.test_values), trained, per_point, summary)


# ---------------------------------------------------------------------------
# fault-guided adaptation study


@dataclass(frozen=True)
class FaultStudyConfig(SynthStudyBase):
    varied_param: str = "u1"
    fixed: tuple[tuple[str, float], ...] = (("u2", 1.7), ("u3", 1.0))
    levels: tuple[float, ...] = (4.0, 6.0, 8.0)
    # rectangle (row0, row1, col0, col1) zeroed in every ground-truth image
    fault_region: tuple[int, int, int, int] = (20, 25, 40, 50)
    epochs: int = 24
    iml_start_epoch: int = 6
    iml_threshold: float = 0.5
    reference_intensity: float = 255.0
    classifier_n_faulty: int = 60
    classifier_n_clean: int = 120
    classifier_epochs: int = 8


@dataclass
class FaultStudyReport:
    region: tuple[int, int, int, int]
    baseline_region_mean: float
    adapted_region_mean: float
    baseline_outside_rmse: float
    adapted_outside_rmse: float
    classifier_holdout_accuracy: float

    def as_dict(self) -> dict:
        return {
            "region": list(self.region),
            "baseline_region_mean": self.baseline_region_mean,
            "adapted_region_mean": self.adapted_region_mean,
            "baseline_outside_rmse": self.baseline_outside_rmse,
            "adapted_outside_rmse": self.adapted_outside_rmse,
            "classifier_holdout_accuracy": self.classifier_holdout_accuracy,
        }


def _zero_region(arr: np.ndarray, region: tuple[int, int, int, int]) -> np.ndarray:
    r0, r1, c0, c1 = region
    arr[r0:r1, c0:c1] = 0.0
    return arr


def _outside_rmse(a: ImageGrid, b: ImageGrid, region: tuple[int, int, int, int]) -> float:
    r0, r1, c0, c1 = region
    mask = np.ones(a.pixels.shape, dtype=bool)
    mask[r0:r1, c0:c1] = False
    diff = (a.pixels - b.pixels)[mask] / 255.0
    return float(np.sqrt(np.mean(diff * diff)))


def study_fault_adaptation(cfg: FaultStudyConfig) -> FaultStudyReport:
    """Ground truth with a zeroed rectangle; informed training must fill it.

    Trains twice on the damaged dataset, without and with the extension,
    and compares mean generated intensity inside the damaged region plus
    RMSE against the damaged truth outside it.
    """
    varied = cfg.varied_param
    fixed = cfg.fixed_dict()
    style = cfg.render_style()
    grid = _canonical_grid(varied, tuple(cfg.levels), fixed)
    bounds = ParamBounds(label_bounds(grid, cfg.noise_pct))
    region = cfg.fault_region

    # damaged ground truth: clean render with the fault region zeroed
    records = sample_dataset(grid, cfg.n_per_point, cfg.noise_pct, cfg.seed,
                             style=style, width=cfg.width, height=cfg.height)
    entries = []
    level_of_op: dict[int, float] = {}
    for rec in records:
        damaged = ImageGrid(_zero_region(rec.image.pixels.copy(), region))
        entries.append((damaged, rec.label.label_dict(), rec.op_id))
        level_of_op[rec.op_id] = getattr(rec.setpoint, varied)
    store = SampleStore.build(entries, bounds)

    # classifier corpus: clean renders vs renders with the region zeroed
    rng_levels = (min(cfg.levels), max(cfg.levels))

    def render_clean(rng):
        params = _clean_params(varied, rng.uniform(*rng_levels), fixed)
        return render(SynthParams(**params), style, cfg.width, cfg.height)

    faulty, clean = fixture_corpus(render_clean, lambda arr: _zero_region(arr, region),
                                   cfg.classifier_n_faulty, cfg.classifier_n_clean,
                                   seed=cfg.seed + 1)
    clf = train_classifier(faulty, clean, ClassifierConfig(
        input_height=cfg.height, input_width=cfg.width,
        epochs=cfg.classifier_epochs, seed=cfg.seed + 2,
    ))

    spec = ModelSpec.from_size_class(cfg.model_size, input_dim=2 + len(bounds))
    op_params = {op: _clean_params(varied, lvl, fixed) for op, lvl in level_of_op.items()}

    def run(iml: bool) -> ModelState:
        state = build(spec, init_seed=cfg.seed)
        train_cfg = TrainConfig(
            epochs=cfg.epochs, batch_size=cfg.batch_size, learning_rate=cfg.learning_rate,
            seed=cfg.seed, iml_enabled=iml, iml_start_epoch=cfg.iml_start_epoch,
            reference_intensity=cfg.reference_intensity,
        )
        hook = None
        if iml:
            def hook(current: ModelState, op_id: int):
                image = generate(current, op_params[op_id], bounds, cfg.width, cfg.height)
                fm = assess_and_map(clf, image, threshold=cfg.iml_threshold)
                return None if fm is None else fm.bits
        train(state, store, train_cfg, fault_hook=hook)
        return state

    baseline = run(iml=False)
    adapted = run(iml=True)

    r0, r1, c0, c1 = region
    base_means, adapt_means, base_out, adapt_out = [], [], [], []
    for op_id, params in sorted(op_params.items()):
        truth = ImageGrid(_zero_region(
            render(SynthParams(**params), style, cfg.width, cfg.height).pixels, region))
        img_base = generate(baseline, params, bounds, cfg.width, cfg.height)
        img_adapt = generate(adapted, params, bounds, cfg.width, cfg.height)
        base_means.append(img_base.pixels[r0:r1, c0:c1].mean())
        adapt_means.append(img_adapt.pixels[r0:r1, c0:c1].mean())
        base_out.append(_outside_rmse(truth, img_base, region))
        adapt_out.append(_outside_rmse(truth, img_adapt, region))

    return FaultStudyReport(
        region=region,
        baseline_region_mean=float(np.mean(base_means)),
        adapted_region_mean=float(np.mean(adapt_means)),
        baseline_outside_rmse=float(np.mean(base_out)),
        adapted_outside_rmse=float(np.mean(adapt_out)),
        classifier_holdout_accuracy=float(clf.holdout_accuracy),
    )
