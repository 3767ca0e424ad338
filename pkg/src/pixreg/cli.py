"""Command-line harness.

Subcommands: synth, preproc, train, infer, eval, study-interp,
study-reduce. Configuration comes from an optional JSON/YAML file merged
with per-flag overrides (flags win); every run directory receives a
provenance record (config snapshot, seed, package version) sufficient to
reproduce the run byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import yaml

from . import __version__
from .data import ParamBounds, SampleStore, SplitSpec, split_by_operating_point
from .errors import ArgumentError, ConfigError, PixregError
from .faultcam import load_classifier
from .image import read_image, write_image
from .infer import generate, generate_sweep, write_montage
from .metrics import aggregate, evaluate_pair
from .model import ModelSpec, build, load_checkpoint, save_checkpoint
from .preproc import ChamberGeometry, SegmentationConfig, normalize_resolution, segment, temporal_mean, unwarp
from .studies import (
    InterpStudyConfig,
    ReduceStudyConfig,
    study_interp,
    study_reduce,
)
from .synth import RenderStyle, label_bounds, sample_dataset
from .train import TrainConfig, train, write_train_log


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    text = p.read_text()
    if p.suffix.lower() in (".yaml", ".yml"):
        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    return data


def _apply_overrides(config: dict, overrides: list[str]) -> dict:
    """Apply ``--set dotted.key=value`` overrides; values parse as JSON."""
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {key}: {part} is not a mapping")
        node[parts[-1]] = value
    return config


def _prepare_out(args, command: str, config: dict) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    provenance = {
        "command": command,
        "config": config,
        "seed": config.get("seed", 0),
        "version": __version__,
    }
    _write_json(out / "provenance.json", provenance)
    return out


# ---------------------------------------------------------------------------
# synth


SYNTH_DEFAULTS = {
    "seed": 0,
    "style": "filled",
    "levels": {"u1": [1.5, 3.25, 5.0, 6.75, 8.5], "u2": [1.7], "u3": [1.15]},
    "n_per_point": 5,
    "noise_pct": 0.05,
    "width": 50,
    "height": 50,
    "split": {"train": 0.7, "val": 0.2, "test": 0.1},
    "image_format": "png",
}


def cmd_synth(args) -> int:
    config = {**SYNTH_DEFAULTS, **_load_config_file(args.config)}
    _apply_overrides(config, args.set)
    if args.seed is not None:
        config["seed"] = args.seed
    out = _prepare_out(args, "synth", config)

    style = RenderStyle.parse(config["style"])
    levels = {k: [float(v) for v in vs] for k, vs in config["levels"].items()}
    records = sample_dataset(levels, int(config["n_per_point"]), float(config["noise_pct"]),
                             int(config["seed"]), style=style,
                             width=int(config["width"]), height=int(config["height"]))
    bounds = label_bounds(levels, float(config["noise_pct"]))

    op_ids = sorted({r.op_id for r in records})
    if len(op_ids) >= 3:
        split_cfg = config["split"]
        spec = SplitSpec(split_cfg["train"], split_cfg["val"], split_cfg["test"], int(config["seed"]))
        train_ids, val_ids, test_ids = split_by_operating_point(op_ids, spec)
    else:
        train_ids, val_ids, test_ids = set(op_ids), set(), set()

    img_dir = out / "images"
    img_dir.mkdir(exist_ok=True)
    ext = config["image_format"]
    rows = []
    for rec in records:
        name = f"op{rec.op_id:03d}_r{rec.replicate}.{ext}"
        write_image(rec.image, img_dir / name)
        rows.append({
            "path": f"images/{name}",
            "op_id": rec.op_id,
            "replicate": rec.replicate,
            "setpoint": rec.setpoint.label_dict(),
            "label": rec.label.label_dict(),
        })
    manifest = {
        "format": "pixreg-dataset-v1",
        "style": style.value,
        "seed": int(config["seed"]),
        "noise_pct": float(config["noise_pct"]),
        "width": int(config["width"]),
        "height": int(config["height"]),
        "bounds": {k: list(v) for k, v in bounds.items()},
        "split": {
            "train": sorted(train_ids),
            "val": sorted(val_ids),
            "test": sorted(test_ids),
        },
        "records": rows,
    }
    _write_json(out / "manifest.json", manifest)
    print(f"synth: wrote {len(rows)} images and manifest to {out}")
    return 0


def load_dataset(manifest_path: str | Path):
    """Read a dataset manifest; returns (manifest dict, records with images)."""
    path = Path(manifest_path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise ArgumentError(f"dataset manifest not found: {path}")
    manifest = json.loads(path.read_text())
    base = path.parent
    records = []
    for row in manifest["records"]:
        image = read_image(base / row["path"])
        records.append({**row, "image": image})
    return manifest, records


# ---------------------------------------------------------------------------
# train


TRAIN_DEFAULTS = {
    "seed": 0,
    "model": "small",
    "epochs": 50,
    "batch_size": 64,
    "learning_rate": 1e-4,
    "iml": {"enabled": False, "classifier": None, "start_epoch": 6,
            "threshold": 0.5, "reference_intensity": 255.0},
    "checkpoint": "model.ckpt",
}


def cmd_train(args) -> int:
    config = {**TRAIN_DEFAULTS, **_load_config_file(args.config)}
    _apply_overrides(config, args.set)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.epochs is not None:
        config["epochs"] = args.epochs
    if args.model is not None:
        config["model"] = args.model
    config["data"] = args.data
    out = _prepare_out(args, "train", config)

    manifest, records = load_dataset(args.data)
    bounds = ParamBounds({k: tuple(v) for k, v in manifest["bounds"].items()})
    train_ids = set(manifest["split"]["train"])
    val_ids = set(manifest["split"]["val"])

    entries = [(r["image"], r["label"], r["op_id"]) for r in records if r["op_id"] in train_ids]
    if not entries:
        raise ArgumentError("training split is empty")
    store = SampleStore.build(entries, bounds)
    val_entries = [(r["image"], r["label"], r["op_id"]) for r in records if r["op_id"] in val_ids]
    val_store = SampleStore.build(val_entries, bounds) if val_entries else None

    spec = ModelSpec.from_size_class(str(config["model"]), input_dim=2 + len(bounds))
    state = build(spec, init_seed=int(config["seed"]))

    iml = config["iml"]
    fault_hook = None
    if iml.get("enabled"):
        if not iml.get("classifier"):
            raise ConfigError("iml.enabled requires iml.classifier (checkpoint path)")
        clf = load_classifier(iml["classifier"])
        from .faultcam import assess_and_map

        setpoints = {r["op_id"]: r["setpoint"] for r in records}
        w, h = manifest["width"], manifest["height"]

        def fault_hook(current, op_id):
            img = generate(current, setpoints[op_id], bounds, w, h)
            fm = assess_and_map(clf, img, threshold=float(iml.get("threshold", 0.5)))
            return None if fm is None else fm.bits

    train_cfg = TrainConfig(
        epochs=int(config["epochs"]),
        batch_size=int(config["batch_size"]),
        learning_rate=float(config["learning_rate"]),
        seed=int(config["seed"]),
        iml_enabled=bool(iml.get("enabled")),
        iml_start_epoch=int(iml.get("start_epoch", 6)),
        reference_intensity=float(iml.get("reference_intensity", 255.0)),
    )
    log = train(state, store, train_cfg, val_store=val_store, fault_hook=fault_hook)

    levels = {}
    for r in records:
        if r["op_id"] in train_ids:
            for k, v in r["setpoint"].items():
                levels.setdefault(k, set()).add(v)
    meta = {
        "bounds": {k: list(v) for k, v in bounds.as_dict().items()},
        "param_names": list(bounds.names),
        "width": manifest["width"],
        "height": manifest["height"],
        "train_levels": {k: sorted(v) for k, v in levels.items()},
        "seed": int(config["seed"]),
    }
    save_checkpoint(state, out / config["checkpoint"], meta=meta)
    write_train_log(log, out / "train_log.csv")
    print(f"train: {len(store)} samples, {train_cfg.epochs} epochs, "
          f"final loss {log.entries[-1].train_loss:.4f} -> {out / config['checkpoint']}")
    return 0


# ---------------------------------------------------------------------------
# infer


def _parse_params(text: str) -> dict[str, float]:
    params = {}
    for part in text.split(","):
        if not part:
            continue
        if "=" not in part:
            raise ArgumentError(f"--params expects name=value pairs, got {part!r}")
        k, v = part.split("=", 1)
        params[k.strip()] = float(v)
    return params


def cmd_infer(args) -> int:
    config = {"checkpoint": args.checkpoint, "params": args.params, "sweep": args.sweep,
              "seed": args.seed or 0}
    out = _prepare_out(args, "infer", config)
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise ArgumentError(f"checkpoint not found: {ckpt}")
    state, meta = load_checkpoint(ckpt)
    bounds = ParamBounds({k: tuple(v) for k, v in meta["bounds"].items()})
    width, height = int(meta["width"]), int(meta["height"])

    base = _parse_params(args.params) if args.params else {
        k: (lo + hi) / 2 for k, (lo, hi) in bounds.as_dict().items()
    }
    if args.sweep:
        name, _, values_text = args.sweep.partition("=")
        values = [float(v) for v in values_text.split(",") if v]
        if not values:
            raise ArgumentError("--sweep expects param=v1,v2,...")
        images = generate_sweep(state, base, name, values, bounds, width, height)
        train_levels = set(meta.get("train_levels", {}).get(name, []))
        flags = [any(abs(v - t) < 1e-9 for t in train_levels) for v in values]
        for img, value in zip(images, values):
            write_image(img, out / f"sweep_{name}_{value:g}.png")
        write_montage(images, out / "montage.png",
                      labels=[f"{name}={v:g}" for v in values], train_flags=flags)
        print(f"infer: wrote {len(images)} sweep images and montage to {out}")
    else:
        img = generate(state, base, bounds, width, height)
        write_image(img, out / "generated.png")
        print(f"infer: wrote generated.png to {out}")
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    config = {"generated": args.generated, "reference": args.reference}
    out = _prepare_out(args, "eval", config)
    gen_dir, ref_dir = Path(args.generated), Path(args.reference)
    for d in (gen_dir, ref_dir):
        if not d.is_dir():
            raise ArgumentError(f"not a directory: {d}")
    names = sorted(p.name for p in gen_dir.iterdir() if p.suffix.lower() in (".png", ".pgm"))
    if not names:
        raise ArgumentError(f"no images in {gen_dir}")
    rows = []
    reports = []
    for name in names:
        ref_path = ref_dir / name
        if not ref_path.exists():
            raise ArgumentError(f"reference image missing: {ref_path}")
        report = evaluate_pair(read_image(ref_path), read_image(gen_dir / name))
        reports.append(report)
        rows.append({"image": name, **report.as_dict()})

    agg = aggregate(reports)
    lines = ["image,rmse,psnr,ssim,cosine,phash_distance"]
    for row in rows:
        lines.append(f"{row['image']},{row['rmse']!r},{row['psnr']!r},"
                     f"{row['ssim']!r},{row['cosine']!r},{row['phash_distance']}")
    (out / "pairs.csv").write_text("\n".join(lines) + "\n")
    _write_json(out / "summary.json", {m: [v[0], v[1]] for m, v in agg.items()})
    table = "\n".join(f"{m:<16} {v[0]:.4f} ± {v[1]:.4f}" for m, v in agg.items())
    (out / "summary.txt").write_text(table + "\n")
    print(table)
    return 0


# ---------------------------------------------------------------------------
# preproc


def cmd_preproc(args) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        raise ArgumentError(f"preproc manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    config = {"manifest": str(manifest_path)}
    out = _prepare_out(args, "preproc", config)
    base = manifest_path.parent

    provenance_rows = []
    for entry in manifest["records"]:
        stack = [read_image(base / p) for p in entry["stack"]]
        if "geometry" in entry and entry["geometry"]:
            geom = ChamberGeometry(**entry["geometry"])
            stack = [unwarp(img, geom) for img in stack]
        image = temporal_mean(stack)
        if entry.get("background"):
            seg_cfg = SegmentationConfig(
                background=read_image(base / entry["background"]),
                **entry.get("segmentation", {}),
            )
            image = segment(image, seg_cfg)
        target = entry.get("target", [120, 84])
        image = normalize_resolution(
            image, int(target[0]), int(target[1]),
            pad_to_width=entry.get("pad_to_width"),
            binary_output=bool(entry.get("binary_output", False)),
        )
        out_name = entry["output"]
        write_image(image, out / out_name)
        config_hash = hashlib.sha256(_canonical_json(entry).encode()).hexdigest()
        provenance_rows.append({"output": out_name, "inputs": entry["stack"],
                                "config_sha256": config_hash})
    _write_json(out / "preproc_log.json", {"records": provenance_rows})
    print(f"preproc: wrote {len(provenance_rows)} images to {out}")
    return 0


# ---------------------------------------------------------------------------
# studies


def _study_config(cls, args, defaults_extra: dict | None = None):
    config = _load_config_file(args.config)
    _apply_overrides(config, args.set)
    if args.seed is not None:
        config["seed"] = args.seed
    merged = {**(defaults_extra or {}), **config}
    known = {f for f in cls.__dataclass_fields__}
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown study options: {sorted(unknown)}")
    if "fixed" in merged and isinstance(merged["fixed"], dict):
        merged["fixed"] = tuple(sorted(merged["fixed"].items()))
    for key in ("levels", "test_values"):
        if key in merged and isinstance(merged[key], list):
            merged[key] = tuple(merged[key])
    if "reductions" in merged and isinstance(merged["reductions"], list):
        merged["reductions"] = tuple(
            (name, tuple(sel) if isinstance(sel, list) else sel) for name, sel in merged["reductions"]
        )
    return cls(**merged), merged


def cmd_study_interp(args) -> int:
    cfg, merged = _study_config(InterpStudyConfig, args)
    out = _prepare_out(args, "study-interp", merged)
    report = study_interp(cfg)
    _write_json(out / "report.json", report.as_dict())
    (out / "report.txt").write_text(report.text_table() + "\n")
    print(report.text_table())
    return 0


def cmd_study_reduce(args) -> int:
    cfg, merged = _study_config(ReduceStudyConfig, args)
    out = _prepare_out(args, "study-reduce", merged)
    report = study_reduce(cfg)
    _write_json(out / "report.json", report.as_dict())
    (out / "report.txt").write_text(report.text_table() + "\n")
    print(report.text_table())
    return 0


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pixreg",
                                     description="Conditional pixel-wise image regression engine")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="JSON or YAML config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry (dotted keys, JSON values)")
        p.add_argument("--seed", type=int, default=None)
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train a model on a dataset manifest")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory or manifest path")
    p.add_argument("--model", choices=["small", "medium", "large"], default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("infer", help="reconstruct images from a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--params", help="comma-separated name=value pairs")
    p.add_argument("--sweep", help="param=v1,v2,... one image per value plus montage")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("eval", help="compare generated images against references")
    common(p)
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("preproc", help="run the preprocessing pipeline over a manifest")
    common(p)
    p.add_argument("--manifest", required=True)
    p.set_defaults(fn=cmd_preproc)

    p = sub.add_parser("study-interp", help="interpolation/extrapolation study")
    common(p)
    p.set_defaults(fn=cmd_study_interp)

    p = sub.add_parser("study-reduce", help="dataset reduction study")
    common(p)
    p.set_defaults(fn=cmd_study_reduce)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except PixregError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
