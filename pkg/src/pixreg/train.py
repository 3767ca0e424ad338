"""Training loop: MSE over shuffled pixel batches with Adam.

The informed extension hooks in here: once per epoch (from a configurable
start epoch) the trainer asks a caller-supplied hook for a per-pixel fault
map of each training operating point. Pixels flagged faulty are trained
against a fixed reference intensity instead of their ground-truth value.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import SampleStore, batch_indices
from .errors import ArgumentError, ConfigError, NonFiniteError, ShapeError, TrainingError
from .model import ModelState, forward, forward_array
from .optim import adam_step, init_adam

# hook signature: (current model, operating point id) -> bool mask (h, w) or None
FaultHook = Callable[[ModelState, int], "np.ndarray | None"]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-4
    seed: int = 0
    iml_enabled: bool = False
    iml_start_epoch: int = 6
    reference_intensity: float = 255.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("TrainConfig: epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("TrainConfig: learning_rate must be > 0")
        if self.iml_enabled and not (1 <= self.iml_start_epoch <= self.epochs + 1):
            raise ConfigError("TrainConfig: iml_start_epoch must lie in [1, epochs + 1]")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float | None
    wall_time_s: float


@dataclass
class TrainLog:
    entries: list[EpochStats] = field(default_factory=list)

    def train_losses(self) -> list[float]:
        return [e.train_loss for e in self.entries]

    def val_losses(self) -> list[float]:
        return [e.val_loss for e in self.entries]


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error, differentiable w.r.t. the predictions."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: shapes {pred.shape} and {target.shape} differ")
    if pred.size == 0:
        raise ArgumentError("mse_loss: empty prediction batch")
    return ad.mean_all(ad.square(ad.sub(pred, target)))


def masked_loss(pred: Tensor, target: Tensor, fault_mask: np.ndarray, r: float) -> Tensor:
    """MSE against targets with fault-flagged entries replaced by ``r``."""
    mask = np.asarray(fault_mask)
    if mask.shape != pred.shape and mask.shape != (pred.shape[0],):
        raise ShapeError("masked_loss: mask length must match the batch")
    mask = mask.reshape(pred.shape[0], 1).astype(bool)
    blended = np.where(mask, np.asarray(r, dtype=target.data.dtype), target.data)
    return mse_loss(pred, Tensor(blended))


def _epoch_fault_bits(store: SampleStore, maps: dict[int, np.ndarray]) -> np.ndarray | None:
    """Per-sample fault bits resolved through (op id, row, col) provenance."""
    if not maps:
        return None
    bits = np.zeros(len(store), dtype=bool)
    for op_id, mask in maps.items():
        sel = store.op_ids == op_id
        if not np.any(sel):
            continue
        bits[sel] = mask[store.rows[sel], store.cols[sel]]
    return bits if bits.any() else None


def _validation_loss(state: ModelState, store: SampleStore, chunk: int = 8192) -> float:
    sse = 0.0
    for start in range(0, len(store), chunk):
        pred = forward_array(state, store.X[start : start + chunk])
        diff = pred.astype(np.float64) - store.y[start : start + chunk].astype(np.float64)
        sse += float(np.sum(diff * diff))
    return sse / len(store)


def train(state: ModelState, store: SampleStore, config: TrainConfig,
          val_store: SampleStore | None = None,
          fault_hook: FaultHook | None = None) -> TrainLog:
    """Run the configured number of epochs in place on ``state``.

    Deterministic under ``config.seed``: batch shuffles derive from
    (seed, epoch) and validation never touches the training RNG stream.
    """
    if len(store) == 0:
        raise ArgumentError("train: empty training store")
    if config.iml_enabled and fault_hook is None:
        raise ConfigError("train: iml_enabled requires a fault hook")

    adam = init_adam(state.params, learning_rate=config.learning_rate)
    log = TrainLog()
    r = config.reference_intensity

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()

        fault_bits = None
        if config.iml_enabled and epoch >= config.iml_start_epoch:
            maps: dict[int, np.ndarray] = {}
            for op_id in np.unique(store.op_ids):
                mask = fault_hook(state, int(op_id))
                if mask is not None:
                    maps[int(op_id)] = np.asarray(mask, dtype=bool)
            fault_bits = _epoch_fault_bits(store, maps)

        sse = 0.0
        for batch_no, idx in enumerate(batch_indices(len(store), config.batch_size, config.seed, epoch)):
            xb = Tensor(store.X[idx])
            yb = store.y[idx]
            try:
                pred = forward(state, xb)
                if fault_bits is None:
                    loss = mse_loss(pred, Tensor(yb))
                else:
                    loss = masked_loss(pred, Tensor(yb), fault_bits[idx], r)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise NonFiniteError("loss is not finite")
                loss.backward()
                adam_step(state.params, adam)
            except NonFiniteError as exc:
                raise TrainingError(f"training diverged at epoch {epoch}, batch {batch_no}: {exc}") from exc
            sse += value * len(idx)

        val = _validation_loss(state, val_store) if val_store is not None and len(val_store) else None
        log.entries.append(EpochStats(epoch, sse / len(store), val, time.perf_counter() - t0))
    return log


def write_train_log(log: TrainLog, path) -> None:
    """Deterministic per-epoch record; wall times go to a sidecar file."""
    lines = ["epoch,train_loss,val_loss"]
    for e in log.entries:
        val = "" if e.val_loss is None else repr(e.val_loss)
        lines.append(f"{e.epoch},{repr(e.train_loss)},{val}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(str(path) + ".timing", "w") as fh:
        fh.write("\n".join(f"{e.epoch},{e.wall_time_s:.3f}" for e in log.entries) + "\n")
