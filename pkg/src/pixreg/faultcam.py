"""Fault detection and localization for generated images.

A small CNN (4 conv layers, 2 fully connected) classifies an image as
correctly or faultily segmented. When it flags a fault, class-activation
mapping on the final convolutional layer localizes the evidence; the
normalized heatmap, binarized at a conservative threshold, becomes the
per-pixel fault map that drives the trainer's reference-value loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ArgumentError, ShapeError
from .image import ImageGrid, bilinear_resize
from .model import _read_container, _write_container
from .optim import adam_step, init_adam

CONV_CHANNELS = (8, 16, 32, 32)
KERNEL = 3
FC_HIDDEN = 64
N_CLASSES = 2
FAULT_CLASS = 1


@dataclass(frozen=True)
class ClassifierConfig:
    input_height: int
    input_width: int
    learning_rate: float = 1e-3
    epochs: int = 12
    batch_size: int = 16
    holdout_frac: float = 0.2
    seed: int = 0


@dataclass(frozen=True)
class FaultMap:
    """Binary per-pixel mask; set bits are trained toward the reference value."""

    bits: np.ndarray

    def __post_init__(self):
        if self.bits.ndim != 2 or self.bits.dtype != bool:
            raise ShapeError("FaultMap needs a 2-D boolean array")

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def count(self) -> int:
        return int(self.bits.sum())


class FaultClassifier:
    """4 conv (stride 1, pad 1, ReLU, 2x2 max-pool) + 2 dense, softmax out."""

    def __init__(self, config: ClassifierConfig, params: list[Tensor], names: list[str],
                 holdout_accuracy: float | None = None):
        self.config = config
        self.params = params
        self.names = names
        self.holdout_accuracy = holdout_accuracy
        by_name = dict(zip(names, params))
        self._convs = [(by_name[f"conv{i}.w"], by_name[f"conv{i}.b"]) for i in range(len(CONV_CHANNELS))]
        self._fc1 = (by_name["fc1.w"], by_name["fc1.b"])
        self._fc2 = (by_name["fc2.w"], by_name["fc2.b"])

    # -- shape plumbing ------------------------------------------------

    @staticmethod
    def _feature_hw(h: int, w: int) -> tuple[int, int]:
        for _ in CONV_CHANNELS:
            h, w = h // 2, w // 2
        return h, w

    @classmethod
    def build(cls, config: ClassifierConfig, seed: int) -> "FaultClassifier":
        fh, fw = cls._feature_hw(config.input_height, config.input_width)
        if fh < 1 or fw < 1:
            raise ArgumentError("classifier input too small for four pooling stages")
        rng = np.random.default_rng(seed)
        params, names = [], []

        def register(name: str, shape: tuple[int, ...], fan_in: int) -> None:
            limit = 1.0 / np.sqrt(fan_in)
            params.append(Tensor(rng.uniform(-limit, limit, size=shape).astype(np.float32), requires_grad=True))
            names.append(f"{name}.w")
            params.append(Tensor(np.zeros(shape[0] if len(shape) == 4 else shape[1], dtype=np.float32),
                                 requires_grad=True))
            names.append(f"{name}.b")

        c_prev = 1
        for i, c in enumerate(CONV_CHANNELS):
            register(f"conv{i}", (c, c_prev, KERNEL, KERNEL), c_prev * KERNEL * KERNEL)
            c_prev = c
        flat = CONV_CHANNELS[-1] * fh * fw
        register("fc1", (flat, FC_HIDDEN), flat)
        register("fc2", (FC_HIDDEN, N_CLASSES), FC_HIDDEN)
        return cls(config, params, names)

    # -- forward -------------------------------------------------------

    def _prepare(self, images: "list[ImageGrid] | np.ndarray") -> np.ndarray:
        if isinstance(images, np.ndarray):
            arr = images
        else:
            arr = np.stack([im.pixels for im in images])
        if arr.ndim == 2:
            arr = arr[None]
        cfg = self.config
        if arr.shape[-2:] != (cfg.input_height, cfg.input_width):
            raise ShapeError(f"classifier expects {cfg.input_height}x{cfg.input_width} images")
        return (arr[:, None, :, :] / 255.0).astype(np.float32)

    def forward_with_features(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Logits plus the post-ReLU feature maps of the last conv layer."""
        t = x
        last = None
        for w, b in self._convs:
            t = ad.conv2d(t, w, stride=1, padding=1)
            t = ad.relu(ad.add_channel_bias(t, b))
            last = t
            t = ad.maxpool2d(t, 2)
        n = t.shape[0]
        t = ad.reshape(t, (n, int(np.prod(t.shape[1:]))))
        w, b = self._fc1
        t = ad.relu(ad.linear(t, w, b))
        w, b = self._fc2
        return ad.linear(t, w, b), last

    def logits(self, images) -> np.ndarray:
        x = Tensor(self._prepare(images))
        out, _ = self.forward_with_features(x)
        return out.data

    def predict_proba(self, images) -> np.ndarray:
        """Probability pairs (clean, faulty), rows summing to 1."""
        return ad.softmax(self.logits(images).astype(np.float64))


# ---------------------------------------------------------------------------
# training


def train_classifier(faulty: list[ImageGrid], clean: list[ImageGrid],
                     config: ClassifierConfig) -> FaultClassifier:
    """Cross-entropy training with Adam; holdout accuracy is recorded.

    Class 1 marks faulty segmentations, class 0 clean ones.
    """
    if not faulty or not clean:
        raise ArgumentError("train_classifier: both classes must be non-empty")
    clf = FaultClassifier.build(config, seed=config.seed)
    X = clf._prepare(list(faulty) + list(clean))
    y = np.array([FAULT_CLASS] * len(faulty) + [0] * len(clean), dtype=np.int64)

    rng = np.random.default_rng([config.seed, 1])
    perm = rng.permutation(len(y))
    X, y = X[perm], y[perm]
    n_hold = max(1, int(round(config.holdout_frac * len(y))))
    X_hold, y_hold = X[:n_hold], y[:n_hold]
    X_tr, y_tr = X[n_hold:], y[n_hold:]

    adam = init_adam(clf.params, learning_rate=config.learning_rate)
    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng([config.seed, 2, epoch]).permutation(len(y_tr))
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            logits, _ = clf.forward_with_features(Tensor(X_tr[idx]))
            loss = ad.softmax_cross_entropy(logits, y_tr[idx])
            loss.backward()
            adam_step(clf.params, adam)

    probs = clf.predict_proba(_unprepare(X_hold))
    acc = float(np.mean(probs.argmax(axis=1) == y_hold))
    clf.holdout_accuracy = acc
    return clf


def _unprepare(x: np.ndarray) -> np.ndarray:
    return x[:, 0, :, :] * 255.0


# ---------------------------------------------------------------------------
# localization


def gradcam(classifier: FaultClassifier, image: ImageGrid, target_class: int) -> np.ndarray:
    """Class-activation heatmap in [0, 1] at full image resolution.

    Channel weights are the spatial means of the target logit's gradient on
    the final conv feature maps; the weighted sum is rectified, bilinearly
    upsampled, and min-max normalized (an all-zero map stays all-zero).
    """
    if not 0 <= target_class < N_CLASSES:
        raise ArgumentError(f"gradcam: class index {target_class} out of range")
    x = Tensor(classifier._prepare([image]))
    logits, features = classifier.forward_with_features(x)
    onehot = np.zeros((1, N_CLASSES), dtype=logits.data.dtype)
    onehot[0, target_class] = 1.0
    score = ad.sum_all(ad.mul(logits, Tensor(onehot)))
    score.backward()

    acts = features.data[0].astype(np.float64)
    grads = features.grad[0].astype(np.float64)
    weights = grads.mean(axis=(1, 2))
    cam = np.maximum(np.tensordot(weights, acts, axes=1), 0.0)
    up = bilinear_resize(cam, image.height, image.width)
    lo, hi = up.min(), up.max()
    if hi > lo:
        return (up - lo) / (hi - lo)
    return np.zeros_like(up)


def binarize(heatmap: np.ndarray, threshold: float) -> FaultMap:
    """Bits set wherever the normalized heatmap reaches the threshold."""
    if not 0.0 < threshold < 1.0:
        raise ArgumentError("binarize: threshold must lie in (0, 1)")
    return FaultMap(np.asarray(heatmap) >= threshold)


def assess_and_map(classifier: FaultClassifier, generated: ImageGrid,
                   threshold: float = 0.5) -> FaultMap | None:
    """Fault map for a generated image, or None if it looks clean."""
    probs = classifier.predict_proba([generated])[0]
    if probs[FAULT_CLASS] <= 0.5:
        return None
    return binarize(gradcam(classifier, generated, FAULT_CLASS), threshold)


# ---------------------------------------------------------------------------
# checkpoints and fixtures


def save_classifier(clf: FaultClassifier, path: str | Path) -> None:
    header = {
        "kind": "fault_classifier",
        "config": {
            "input_height": clf.config.input_height,
            "input_width": clf.config.input_width,
            "learning_rate": clf.config.learning_rate,
            "epochs": clf.config.epochs,
            "batch_size": clf.config.batch_size,
            "holdout_frac": clf.config.holdout_frac,
            "seed": clf.config.seed,
        },
        "holdout_accuracy": clf.holdout_accuracy,
        "arrays": [{"name": n, "shape": list(p.data.shape), "dtype": str(p.data.dtype)}
                   for n, p in zip(clf.names, clf.params)],
    }
    _write_container(path, header, [p.data for p in clf.params])


def load_classifier(path: str | Path) -> FaultClassifier:
    header, arrays = _read_container(path)
    if header.get("kind") != "fault_classifier":
        raise ArgumentError(f"{path}: not a classifier checkpoint")
    config = ClassifierConfig(**header["config"])
    params = [Tensor(a, requires_grad=True) for a in arrays]
    names = [a["name"] for a in header["arrays"]]
    return FaultClassifier(config, params, names, header.get("holdout_accuracy"))


def box_blur(arr: np.ndarray, radius: int) -> np.ndarray:
    """Small separable box blur used to roughen classifier fixtures."""
    if radius < 1:
        return arr.copy()
    k = 2 * radius + 1
    padded = np.pad(arr, radius, mode="edge")
    kern = np.ones(k) / k
    tmp = np.apply_along_axis(lambda m: np.convolve(m, kern, mode="valid"), 0, padded)
    return np.apply_along_axis(lambda m: np.convolve(m, kern, mode="valid"), 1, tmp)


def fixture_corpus(render_clean, apply_fault, n_faulty: int, n_clean: int, seed: int,
                   blur_radii: tuple[int, ...] = (0, 1, 2)) -> tuple[list[ImageGrid], list[ImageGrid]]:
    """Desk-scale classifier corpus built from caller-supplied callables.

    ``render_clean(rng)`` must return an ImageGrid; ``apply_fault(pixels)``
    injects the fault into a pixel array. Blur augmentation makes the
    corpus resemble partially trained generator output.
    """
    rng = np.random.default_rng(seed)
    faulty, clean = [], []
    for bucket, n, faulted in ((faulty, n_faulty, True), (clean, n_clean, False)):
        for _ in range(n):
            img = render_clean(rng)
            arr = img.pixels.copy()
            if faulted:
                arr = apply_fault(arr)
            radius = int(rng.choice(blur_radii))
            arr = box_blur(arr, radius)
            bucket.append(ImageGrid(np.clip(arr, 0.0, 255.0)))
    return faulty, clean
