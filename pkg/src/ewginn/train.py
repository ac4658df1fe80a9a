"""Adam + MSE training with plateau LR decay and early stopping."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .model import Network
from .numerics import seeded_rng

__all__ = [
    "TrainConfig",
    "AdamState",
    "TrainHistory",
    "TrainingDiverged",
    "adam_step",
    "mse_loss",
    "split_indices",
    "split_dataset",
    "train",
]

log = logging.getLogger(__name__)

SHUFFLE_STREAM = 1
SPLIT_STREAM = 2


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, message: str):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    es_patience: int = 550
    es_start_epoch: int = 200
    early_stopping: bool = True
    restore_best: bool = True
    plateau_factor: float = 0.5
    plateau_patience: int = 50
    min_lr: float = 1e-6
    max_epochs: int = 5000
    batch_size: int = 32
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.plateau_factor < 1.0:
            raise ValueError("plateau_factor must lie in (0, 1)")
        if self.min_lr > self.lr:
            raise ValueError("min_lr must not exceed lr")
        if self.es_patience < 1 or self.plateau_patience < 1:
            raise ValueError("patience values must be positive")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size must be positive and max_epochs nonnegative")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")

    @classmethod
    def from_dict(cls, data: dict) -> TrainConfig:
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> AdamState:
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(
    state: AdamState,
    theta: np.ndarray,
    grad: np.ndarray,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> np.ndarray:
    """One Adam update; mutates ``state`` and returns the new parameters."""
    if theta.shape != grad.shape or state.m.shape != theta.shape:
        raise ValueError("parameter, gradient and moment shapes differ")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient")
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1**state.t)
    v_hat = state.v / (1.0 - beta2**state.t)
    return theta - lr * m_hat / (np.sqrt(v_hat) + eps)


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean squared error over batch and components, with its gradient."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def split_indices(n: int, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seed-shuffled ``(train, val)`` index split."""
    if not 0.0 < val_fraction < 1.0:
        raise ValueError("val_fraction must lie in (0, 1)")
    n_val = int(round(n * val_fraction))
    if n_val < 1 or n_val >= n:
        raise ValueError(f"split of {n} rows with val_fraction={val_fraction} leaves an empty part")
    perm = seeded_rng(seed, SPLIT_STREAM).permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = "max_epochs"

    @property
    def epochs(self) -> int:
        return len(self.val_loss)

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch - 1] if self.best_epoch else float("nan")

    def to_jsonl(self) -> str:
        lines = [
            json.dumps({"epoch": i + 1, "train_loss": tl, "val_loss": vl, "lr": lr})
            for i, (tl, vl, lr) in enumerate(zip(self.train_loss, self.val_loss, self.lr))
        ]
        return "".join(line + "\n" for line in lines)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())


def _dataset_loss(net: Network, C: np.ndarray, T: np.ndarray) -> float:
    return mse_loss(net.predict(C), T)[0]


def train(
    net: Network,
    C_train: np.ndarray,
    T_train: np.ndarray,
    C_val: np.ndarray,
    T_val: np.ndarray,
    cfg: TrainConfig,
) -> TrainHistory:
    """Train ``net`` in place and return its history.

    Validation loss "improves" only when strictly below the best so far. The
    plateau counter runs from epoch 1 and resets after each decay. The
    early-stopping counter starts at ``es_start_epoch`` with its own best, so
    it cannot fire earlier. Restoration uses the best epoch overall.
    """
    if len(C_train) == 0 or len(C_val) == 0:
        raise ValueError("train and validation sets must be nonempty")
    history = TrainHistory()
    rng = seeded_rng(cfg.seed, SHUFFLE_STREAM)
    theta = net.get_params()
    state = AdamState.zeros(theta.size)
    lr = cfg.lr
    best_vl = np.inf
    best_theta = theta.copy()
    plateau_best, plateau_wait = np.inf, 0
    es_best, es_wait = np.inf, 0
    n_train = len(C_train)

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n_train)
        total = 0.0
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, d_pred = mse_loss(net.forward(C_train[idx]), T_train[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, "non-finite training loss")
            try:
                theta = adam_step(
                    state, theta, net.backward(d_pred), lr, cfg.beta1, cfg.beta2, cfg.adam_eps
                )
            except FloatingPointError as exc:
                raise TrainingDiverged(epoch, str(exc)) from exc
            net.set_params(theta)
            total += loss * idx.size
        vl = _dataset_loss(net, C_val, T_val)
        if not np.isfinite(vl):
            raise TrainingDiverged(epoch, "non-finite validation loss")
        history.train_loss.append(total / n_train)
        history.val_loss.append(vl)
        history.lr.append(lr)

        if vl < best_vl:
            best_vl, best_theta, history.best_epoch = vl, theta.copy(), epoch

        if vl < plateau_best:
            plateau_best, plateau_wait = vl, 0
        else:
            plateau_wait += 1
            if plateau_wait >= cfg.plateau_patience:
                new_lr = max(lr * cfg.plateau_factor, cfg.min_lr)
                if new_lr < lr:
                    log.debug("epoch %d: lr %.3g -> %.3g", epoch, lr, new_lr)
                lr, plateau_wait = new_lr, 0

        if cfg.early_stopping and epoch >= cfg.es_start_epoch:
            if vl < es_best:
                es_best, es_wait = vl, 0
            else:
                es_wait += 1
                if es_wait >= cfg.es_patience:
                    history.stop_reason = "early_stopping"
                    break

    if cfg.restore_best and history.best_epoch:
        net.set_params(best_theta)
    return history


def split_dataset(data, val_fraction: float, seed: int):
    """Split a :class:`~ewginn.flownet.Dataset` into ``(train, val)`` datasets."""
    tr, va = split_indices(len(data), val_fraction, seed)
    return data.subset(tr), data.subset(va)
