"""MSE loss, Adam, min-max scaling and the mini-batch training loop."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError, TrainingDivergence
from .numeric import as_tensor, fork_rng

logger = logging.getLogger(__name__)


def mse_loss(pred, target):
    """Returns ``(loss, dloss/dpred)``."""
    pred = as_tensor(pred)
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} differ")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState):
    """One bias-corrected Adam update. Mutates ``params`` and ``state`` in place
    and returns them."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDivergence(f"non-finite gradient for parameter {name!r}")
        if g.shape != params[name].shape:
            raise DimensionError(f"gradient for {name!r} has shape {g.shape}, "
                                 f"parameter has {params[name].shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        params[name] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


@dataclass
class Scaler:
    min: float
    max: float

    def __post_init__(self):
        if not self.max > self.min:
            raise DataError(f"degenerate scaler: max ({self.max}) must exceed min ({self.min})")

    @property
    def span(self) -> float:
        return self.max - self.min

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self.min) / self.span

    def invert(self, y):
        return np.asarray(y, dtype=np.float64) * self.span + self.min


def scaler_fit(series) -> Scaler:
    values = np.asarray(getattr(series, "values", series), dtype=np.float64)
    if values.size == 0:
        raise DataError("cannot fit a scaler on an empty series")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        raise DataError(f"constant series (value {lo}) cannot be min-max scaled")
    return Scaler(lo, hi)


def scaler_apply(scaler: Scaler, x):
    return scaler.apply(x)


def scaler_invert(scaler: Scaler, y):
    return scaler.invert(y)


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 128
    validation_split: float = 0.1
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if not 0.0 <= self.validation_split < 1.0:
            raise ValueError("validation_split must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    seconds: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def train_loss(self) -> list[float]:
        return [r.train_loss for r in self.records]

    @property
    def val_loss(self) -> list[float]:
        return [r.val_loss for r in self.records]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss", "seconds"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), f"{r.seconds:.6f}"])


def split_validation(num_windows: int, validation_split: float) -> int:
    """Number of leading (chronologically earliest) windows kept for training."""
    return int(num_windows * (1.0 - validation_split))


def evaluate_loss(model, inputs, targets, batch_size: int = 1024) -> float:
    total = 0.0
    n = inputs.shape[0]
    for s in range(0, n, batch_size):
        pred = model.predict(inputs[s:s + batch_size])
        d = pred - targets[s:s + batch_size]
        total += float(np.sum(d * d))
    return total / (n * targets.shape[1])


def train(model, dataset, config: TrainConfig, adam: AdamState | None = None):
    """Fit ``model`` on ``dataset`` (a :class:`~doforecast.data.WindowedDataset`).

    The last ``validation_split`` fraction of windows is held out unshuffled;
    training windows are reshuffled each epoch from a seeded stream. The
    reported training loss is the size-weighted mean of the epoch's batch losses.
    """
    inputs = as_tensor(dataset.inputs, rank=3)
    targets = as_tensor(dataset.targets, rank=2)
    n = inputs.shape[0]
    if n == 0:
        raise DataError("cannot train on an empty dataset")
    if inputs.shape[1] != model.in_len or targets.shape[1] != model.out_len:
        raise DimensionError(
            f"dataset windows ({inputs.shape[1]} -> {targets.shape[1]}) do not match "
            f"model ({model.in_len} -> {model.out_len})")
    n_train = split_validation(n, config.validation_split)
    if n_train == 0:
        raise DataError("validation split leaves no training windows")
    x_tr, y_tr = inputs[:n_train], targets[:n_train]
    x_va, y_va = inputs[n_train:], targets[n_train:]

    shuffle_rng = fork_rng(config.seed, "shuffle")
    dropout_rng = fork_rng(config.seed, "dropout")
    if adam is None:
        adam = AdamState(config.lr, config.beta1, config.beta2, config.eps)
    history = TrainHistory()

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(n_train) if config.shuffle else np.arange(n_train)
        total = 0.0
        for s in range(0, n_train, config.batch_size):
            idx = order[s:s + config.batch_size]
            pred, cache = model.forward(x_tr[idx], training=True, rng=dropout_rng)
            loss, dpred = mse_loss(pred, y_tr[idx])
            if not np.isfinite(loss):
                raise TrainingDivergence(f"non-finite training loss at epoch {epoch}")
            adam_step(model.params, model.backward(cache, dpred), adam)
            total += loss * len(idx)
        train_loss = total / n_train
        val_loss = evaluate_loss(model, x_va, y_va) if len(x_va) else float("nan")
        history.records.append(EpochRecord(epoch, train_loss, val_loss,
                                           time.perf_counter() - t0))
        logger.debug("epoch %d train=%.6g val=%.6g", epoch, train_loss, val_loss)
    return model, history
