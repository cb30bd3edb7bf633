"""ADAM optimization loop with test-loss early stopping.

Any ansatz exposing ``get_parameters``/``set_parameters``, ``prepare_epoch``,
``loss_and_gradient``, ``loss``, ``to_dense`` and ``copy`` can be trained.
Each epoch (1) lets a neural ansatz draw its sample support, (2) evaluates
training loss and gradient, test loss and optionally ground-truth fidelity,
all at the current parameters, (3) updates the best-test-loss checkpoint and
(4) takes one ADAM step.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .core import fidelity
from .measurement import MeasurementDataset, Records, split

log = logging.getLogger(__name__)

CURVE_COLUMNS = ("epoch", "train_loss", "test_loss", "fidelity", "seconds")


class TrainingError(RuntimeError):
    """Non-finite or diverging loss during optimization."""


class Trainable(Protocol):
    kind: str

    def get_parameters(self) -> np.ndarray: ...
    def set_parameters(self, x: np.ndarray) -> None: ...
    def prepare_epoch(self, samples: int) -> None: ...
    def loss_and_gradient(self, records: Records, floor: float = 0.0): ...
    def loss(self, records: Records, floor: float = 0.0) -> float: ...
    def to_dense(self) -> np.ndarray: ...
    def copy(self): ...
    def save(self, path) -> None: ...


@dataclass
class TrainConfig:
    ansatz: str = "mps"
    learning_rate: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 2000
    patience: int = 50
    samples_per_epoch: int = 3000
    seed: int = 0
    checkpoint_every: int = 0  # 0 disables periodic checkpoints
    checkpoint_dir: str | None = None
    prob_floor: float = 1e-12
    batch_size: int | None = None  # None: full-batch gradients
    divergence_factor: float = 10.0
    target_fidelity: float | None = None  # fidelity training only

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.ansatz in ("rbm", "arn") and self.samples_per_epoch < 1:
            raise ValueError("neural ansaetze need samples_per_epoch >= 1")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> AdamState:
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState,
              config: TrainConfig) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected ADAM update; returns new parameters and moments."""
    if params.shape != grads.shape:
        raise ValueError(f"parameter/gradient size mismatch: {params.shape} vs {grads.shape}")
    bad = np.flatnonzero(~np.isfinite(grads))
    if len(bad):
        raise TrainingError(f"non-finite gradient in {len(bad)} components (first at index {bad[0]})")
    t = state.t + 1
    m = config.beta1 * state.m + (1.0 - config.beta1) * grads
    v = config.beta2 * state.v + (1.0 - config.beta2) * grads * grads
    m_hat = m / (1.0 - config.beta1**t)
    v_hat = v / (1.0 - config.beta2**t)
    new = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return new, AdamState(m, v, t)


@dataclass
class LearningCurve:
    epoch: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    test_loss: list[float] = field(default_factory=list)
    fidelity: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def append(self, epoch, train_loss, test_loss, fid, seconds) -> None:
        if self.epoch and epoch <= self.epoch[-1]:
            raise ValueError("epochs must be strictly increasing")
        if not (np.isfinite(train_loss) and np.isfinite(test_loss)):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        self.epoch.append(epoch)
        self.train_loss.append(float(train_loss))
        self.test_loss.append(float(test_loss))
        self.fidelity.append(float("nan") if fid is None else float(fid))
        self.seconds.append(float(seconds))

    def __len__(self) -> int:
        return len(self.epoch)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CURVE_COLUMNS)
            for row in zip(self.epoch, self.train_loss, self.test_loss, self.fidelity, self.seconds):
                w.writerow([row[0], repr(row[1]), repr(row[2]), "" if np.isnan(row[3]) else repr(row[3]),
                            f"{row[4]:.3f}"])


@dataclass
class TrainResult:
    best: Trainable
    best_epoch: int
    curve: LearningCurve
    stopped_epoch: int

    @property
    def best_test_loss(self) -> float:
        return self.curve.test_loss[self.curve.epoch.index(self.best_epoch)]

    @property
    def best_fidelity(self) -> float:
        return self.curve.fidelity[self.curve.epoch.index(self.best_epoch)]


def _as_records(data) -> tuple[Records, Records]:
    if isinstance(data, MeasurementDataset):
        tr, te = split(data)
        return tr.records(), te.records()
    tr, te = data
    if isinstance(tr, MeasurementDataset):
        return tr.records(), te.records()
    return tr, te


def train(ansatz: Trainable, data, config: TrainConfig,
          ground_truth: np.ndarray | None = None) -> TrainResult:
    """Minimize the training negative log-likelihood, stopping on the test-loss minimum.

    ``data`` is a full dataset (split 4:1 here) or a ``(train, test)`` pair of
    datasets or record sets. Returns the checkpoint with the lowest test loss.
    """
    train_rec, test_rec = _as_records(data)
    if len(train_rec) == 0:
        raise ValueError("no training records")
    batch_rng = np.random.default_rng([config.seed, 1])
    x = ansatz.get_parameters()
    adam = AdamState.zeros(len(x))
    curve = LearningCurve()
    best, best_epoch, best_test = ansatz.copy(), 0, np.inf
    initial = None
    start = time.perf_counter()
    epoch = 0
    for epoch in range(config.max_epochs):
        ansatz.prepare_epoch(config.samples_per_epoch)
        batch = train_rec if config.batch_size is None else train_rec.subsample(config.batch_size, batch_rng)
        loss, grad = ansatz.loss_and_gradient(batch, config.prob_floor)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite training loss at epoch {epoch}")
        if initial is None:
            initial = loss
        elif initial > 0 and loss > config.divergence_factor * initial:
            raise TrainingError(f"training loss {loss:.6g} exceeds {config.divergence_factor}x its initial value")
        test = ansatz.loss(test_rec, config.prob_floor)
        fid = fidelity(ground_truth, ansatz.to_dense()) if ground_truth is not None else None
        curve.append(epoch, loss, test, fid, time.perf_counter() - start)
        if test < best_test:
            best, best_epoch, best_test = ansatz.copy(), epoch, test
        elif epoch - best_epoch >= config.patience:
            break
        if config.checkpoint_every and config.checkpoint_dir and epoch % config.checkpoint_every == 0:
            ansatz.save(Path(config.checkpoint_dir) / f"epoch_{epoch:06d}.npz")
        x, adam = adam_step(x, grad, adam, config)
        ansatz.set_parameters(x)
    log.info("%s stopped at epoch %d, best epoch %d (test loss %.6g)",
             getattr(ansatz, "kind", "ansatz"), epoch, best_epoch, best_test)
    return TrainResult(best, best_epoch, curve, epoch)


def train_fidelity(ansatz: Trainable, target: np.ndarray, config: TrainConfig) -> TrainResult:
    """Diagnostic: maximize ``|<target|psi>|^2`` directly with ADAM.

    Stops at ``config.target_fidelity`` (or fidelity 1 to 1e-12), after
    ``patience`` epochs without improvement, or at ``max_epochs``.
    """
    if not hasattr(ansatz, "fidelity_objective"):
        raise TypeError(f"{type(ansatz).__name__} does not support fidelity training")
    stop_at = config.target_fidelity if config.target_fidelity is not None else 1.0 - 1e-12
    x = ansatz.get_parameters()
    adam = AdamState.zeros(len(x))
    curve = LearningCurve()
    best, best_epoch, best_obj = ansatz.copy(), 0, np.inf
    start = time.perf_counter()
    epoch = 0
    for epoch in range(config.max_epochs):
        obj, grad = ansatz.fidelity_objective(target)
        curve.append(epoch, obj, obj, -obj, time.perf_counter() - start)
        if obj < best_obj:
            best, best_epoch, best_obj = ansatz.copy(), epoch, obj
        elif epoch - best_epoch >= config.patience:
            break
        if -obj >= stop_at:
            break
        x, adam = adam_step(x, grad, adam, config)
        ansatz.set_parameters(x)
    return TrainResult(best, best_epoch, curve, epoch)


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
