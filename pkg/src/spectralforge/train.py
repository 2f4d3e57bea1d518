"""Training loop: target scaling, mini-batching, early stopping."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import SpectralMatrix, TargetMatrix, derive_rng
from .nn import (
    AdamWState,
    ModelSpec,
    ModelState,
    adamw_step,
    backward,
    flat_grads,
    forward,
    huber_loss,
    init_state,
)


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during optimization."""


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 38
    initial_lr: float = 0.0015
    max_epochs: int = 1500
    patience: int = 55
    weight_decay: float = 0.001
    dropout: float = 0.10
    huber_delta: float = 1.0
    val_fraction: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.patience < 1 or self.initial_lr <= 0:
            raise ValueError("batch_size >= 1, patience >= 1, lr > 0 required")


def heuristic_lr(batch_size: int) -> float:
    """Linear-scaling starting point: 0.01 * batch_size / 256."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    return 0.01 * batch_size / 256


@dataclass(frozen=True)
class TargetScaler:
    """Per-target z-scoring fitted on training targets (sample std)."""

    mean: np.ndarray
    std: np.ndarray

    @staticmethod
    def fit(y: np.ndarray) -> "TargetScaler":
        y = np.asarray(y, dtype=np.float64)
        mean = y.mean(axis=0)
        std = y.std(axis=0, ddof=1)
        if np.any(std <= 0):
            raise ValueError("constant target column: z-scoring is undefined")
        return TargetScaler(mean, std)

    def transform(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.mean) / self.std

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.std + self.mean


class EarlyStopper:
    """Stop after `patience` consecutive epochs without a new best loss."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch = 0
        self.best_params: Optional[ModelState] = None
        self._since_best = 0

    def update(self, epoch: int, loss: float, state: ModelState) -> None:
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = epoch
            self.best_params = state.copy()
            self._since_best = 0
        else:
            self._since_best += 1

    @property
    def should_stop(self) -> bool:
        return self._since_best >= self.patience


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False
    wall_time_s: float = 0.0

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)

    def to_json_dict(self) -> dict:
        return {
            "epochs": self.epochs_run,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
        }


def inner_split(
    train_x: SpectralMatrix,
    train_y: TargetMatrix,
    val_fraction: float,
    seed: int,
) -> tuple[tuple[SpectralMatrix, TargetMatrix], tuple[SpectralMatrix, TargetMatrix]]:
    """Hold out ceil(val_fraction * n) original samples for early stopping.

    Must run on original (pre-augmentation) samples; only the returned
    training part should subsequently be augmented.
    """
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    n = train_x.n_samples
    n_val = math.ceil(val_fraction * n)
    if n_val == 0 or n_val >= n:
        raise ValueError(f"val_fraction {val_fraction} leaves an empty part for n={n}")
    perm = derive_rng(seed, "inner-split").permutation(n)
    val_idx = np.sort(perm[:n_val])
    tr_idx = np.sort(perm[n_val:])
    return (
        (train_x.take(tr_idx), train_y.take(tr_idx)),
        (train_x.take(val_idx), train_y.take(val_idx)),
    )


def _eval_loss(spec: ModelSpec, state: ModelState, x: np.ndarray, y: np.ndarray, delta: float) -> float:
    pred, _ = forward(spec, state, x, mode="eval")
    loss, _ = huber_loss(pred, y, delta)
    return loss


def train_model(
    spec: ModelSpec,
    train_x: np.ndarray,
    train_y: np.ndarray,
    val_x: np.ndarray,
    val_y: np.ndarray,
    cfg: TrainConfig,
) -> tuple[ModelState, TrainReport]:
    """Mini-batch AdamW on Huber loss with best-validation-epoch restore.

    Targets are expected already z-scored by a TargetScaler fitted on the
    training targets.  One epoch is one seeded shuffle pass; validation loss
    is evaluated in eval mode (dropout off) after every epoch.  Returns the
    parameters of the best-validation epoch.
    """
    if len(train_x) == 0 or len(val_x) == 0:
        raise ValueError("training and validation sets must be nonempty")
    t0 = time.perf_counter()
    state = init_state(spec, derive_rng(cfg.seed, "init").integers(2**63))
    opt = AdamWState(lr=cfg.initial_lr, weight_decay=cfg.weight_decay)
    stopper = EarlyStopper(cfg.patience)
    rng = derive_rng(cfg.seed, "train-loop")
    report = TrainReport()
    n = len(train_x)

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = train_x[idx], train_y[idx]
            pred, caches = forward(spec, state, xb, mode="train", rng=rng)
            loss, grad = huber_loss(pred, yb, cfg.huber_delta)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            loss_sum += loss * len(idx)
            _, grads = backward(spec, state, caches, grad)
            adamw_step(opt, state.flat(), flat_grads(spec, grads))
        report.train_loss.append(loss_sum / n)

        val_loss = _eval_loss(spec, state, val_x, val_y, cfg.huber_delta)
        if not math.isfinite(val_loss):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
        report.val_loss.append(val_loss)
        stopper.update(epoch, val_loss, state)
        if stopper.should_stop:
            report.stopped_early = True
            break

    report.best_epoch = stopper.best_epoch
    report.wall_time_s = time.perf_counter() - t0
    best = stopper.best_params if stopper.best_params is not None else state
    return best, report


def predict(
    state: ModelState,
    spec: ModelSpec,
    x: SpectralMatrix,
    scaler: TargetScaler,
) -> TargetMatrix:
    """Eval-mode forward pass followed by inverse target scaling."""
    if x.n_features != spec.input_len:
        raise ValueError(f"input width {x.n_features} != model input_len {spec.input_len}")
    pred, _ = forward(spec, state, x.rows, mode="eval")
    return TargetMatrix(scaler.inverse(pred))
