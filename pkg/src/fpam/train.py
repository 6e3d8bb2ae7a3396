"""Training loop: seeded SGD with momentum, step-decayed learning rate,
optional mixup, per-epoch evaluation, and best/final checkpoints per fold.

Everything is deterministic in (config, seed): shuffles, mixup draws, and
parameter init all derive from named child seeds.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from .checkpoint import save_checkpoint
from .data import DatasetIndex, make_cv_splits
from .errors import ConfigError, ContractError, NumericError
from .featurize import load_feature_matrix
from .model import build_model, network_input
from .ops import softmax_cross_entropy
from .optim import sgd_momentum_step
from .tensor import Tensor, no_grad, precision


@dataclass(frozen=True)
class TrainConfig:
    preset: str = "tiny"
    head: str = "fpam"
    epochs: int = 60
    batch_size: int = 32
    lr0: float = 0.01
    lr_decay_every: int = 20
    lr_decay_factor: float = 0.1
    momentum: float = 0.9
    mixup_alpha: float | None = None  # None means mixup off
    seed: int = 1
    precision: str = "f32"
    folds: tuple[int, ...] = (1, 2, 3, 4, 5)

    def validate(self) -> None:
        for name in ("epochs", "batch_size", "lr0", "lr_decay_every", "lr_decay_factor"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.momentum < 0:
            raise ConfigError(f"momentum must be non-negative, got {self.momentum}")
        if self.mixup_alpha is not None and self.mixup_alpha <= 0:
            raise ConfigError(f"mixup alpha must be positive when enabled, got {self.mixup_alpha}")
        if self.head not in ("fpam", "baseline"):
            raise ConfigError(f"head must be 'fpam' or 'baseline', got {self.head!r}")
        if not self.folds or any(not 1 <= f <= 5 for f in self.folds):
            raise ConfigError(f"folds must be within 1..5, got {self.folds}")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float


@dataclass
class FoldResult:
    fold: int
    epochs: list[EpochStats]
    final_accuracy: float
    best_accuracy: float
    best_epoch: int
    confusion: np.ndarray  # K x K ints, rows = true class


@dataclass
class TrainReport:
    config: TrainConfig
    folds: list[FoldResult] = field(default_factory=list)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean([f.final_accuracy for f in self.folds]))


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Piecewise-constant schedule: lr0 scaled by the decay factor every N epochs."""
    if epoch < 0 or epoch >= config.epochs:
        raise ContractError(f"epoch {epoch} outside the configured 0..{config.epochs - 1}")
    return config.lr0 * config.lr_decay_factor ** (epoch // config.lr_decay_every)


def one_hot(targets: np.ndarray, n_classes: int, dtype) -> np.ndarray:
    out = np.zeros((len(targets), n_classes), dtype=dtype)
    out[np.arange(len(targets)), targets] = 1
    return out


def mixup(batch_x: np.ndarray, batch_y: np.ndarray, alpha: float,
          rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, float]:
    """Convex combination of the batch with a seeded permutation of itself."""
    lam = float(rng.beta(alpha, alpha))
    perm = rng.permutation(len(batch_x))
    mixed_x = lam * batch_x + (1.0 - lam) * batch_x[perm]
    mixed_y = lam * batch_y + (1.0 - lam) * batch_y[perm]
    return mixed_x, mixed_y, lam


def evaluate(model, features: np.ndarray, targets: np.ndarray, n_classes: int,
             batch_size: int = 32) -> tuple[float, np.ndarray, float]:
    """Accuracy, confusion matrix (rows = true class), and mean loss on a split.

    ``features`` are raw log-Mel values; the input normalization is applied
    here. Argmax ties break toward the lower class id.
    """
    if len(features) == 0:
        raise ContractError("evaluate on an empty split")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    total_loss = 0.0
    normalized = network_input(features)
    store = getattr(model, "store", None)
    if store is not None and len(store):
        normalized = normalized.astype(store[store.names()[0]].dtype)
    with no_grad():
        for start in range(0, len(features), batch_size):
            xb = normalized[start : start + batch_size]
            yb = targets[start : start + batch_size]
            logits = model(Tensor(xb))
            onehot = one_hot(yb, n_classes, logits.dtype)
            total_loss += softmax_cross_entropy(logits, onehot).item() * len(xb)
            pred = logits.data.argmax(axis=1)
            np.add.at(confusion, (yb, pred), 1)
    accuracy = float(np.trace(confusion) / confusion.sum())
    return accuracy, confusion, total_loss / len(features)


def train_fold(config: TrainConfig, fold: int, train_x, train_y, test_x, test_y,
               n_classes: int, out_dir=None):
    """Train one CV split; returns the FoldResult and the trained model."""
    model = build_model(config.head, config.preset, n_classes, seed=config.seed * 1000 + fold)
    n_train = len(train_x)
    dtype = model.store[model.store.names()[0]].dtype
    train_x = network_input(train_x).astype(dtype)
    test_x = test_x.astype(dtype)  # evaluate() normalizes on its own

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    stats: list[EpochStats] = []
    best_acc, best_epoch = -1.0, -1
    for epoch in range(config.epochs):
        lr = lr_at(epoch, config)
        rng = np.random.default_rng([config.seed, fold, epoch])
        order = rng.permutation(n_train)
        epoch_loss = 0.0
        epoch_hits = 0
        for batch_no, start in enumerate(range(0, n_train, config.batch_size)):
            idx = order[start : start + config.batch_size]
            xb = train_x[idx]
            yb = one_hot(train_y[idx], n_classes, dtype)
            if config.mixup_alpha is not None:
                xb, yb, _ = mixup(xb, yb, config.mixup_alpha, rng)
            logits = model(Tensor(xb))
            loss = softmax_cross_entropy(logits, yb)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise NumericError(
                    f"non-finite loss at fold {fold}, epoch {epoch}, batch {batch_no}"
                )
            model.store.zero_grad()
            loss.backward()
            sgd_momentum_step(model.store, lr, config.momentum)
            epoch_loss += loss_value * len(idx)
            epoch_hits += int((logits.data.argmax(axis=1) == yb.argmax(axis=1)).sum())

        test_acc, confusion, test_loss = evaluate(model, test_x, test_y, n_classes, config.batch_size)
        stats.append(EpochStats(epoch, epoch_loss / n_train, epoch_hits / n_train, test_loss, test_acc))
        if test_acc > best_acc:
            best_acc, best_epoch = test_acc, epoch
            if out_dir is not None:
                save_checkpoint(os.path.join(out_dir, "best.ckpt"), model.store)

    if out_dir is not None:
        save_checkpoint(os.path.join(out_dir, "final.ckpt"), model.store)
    result = FoldResult(fold, stats, stats[-1].test_acc, best_acc, best_epoch, confusion)
    return result, model


def train(config: TrainConfig, index: DatasetIndex, cache_dir, out_dir=None):
    """Run the configured folds over cached features; returns the TrainReport."""
    config.validate()
    with precision(config.precision):
        splits = make_cv_splits(index)
        report = TrainReport(config)
        models = []
        for fold in config.folds:
            train_entries, test_entries = splits[fold - 1]
            train_x = load_feature_matrix(index, train_entries, cache_dir)
            test_x = load_feature_matrix(index, test_entries, cache_dir)
            train_y = np.array([e.target for e in train_entries])
            test_y = np.array([e.target for e in test_entries])
            fold_dir = None if out_dir is None else os.path.join(os.fspath(out_dir), f"fold{fold}")
            result, model = train_fold(
                config, fold, train_x, train_y, test_x, test_y, index.n_classes, fold_dir
            )
            report.folds.append(result)
            models.append(model)
    return report, models


def mixup_ablation(config: TrainConfig, index: DatasetIndex, cache_dir, alpha: float,
                   heads: tuple[str, ...] = ("fpam",), out_dir=None):
    """Two-arm (or four-arm, with both heads) with/without-mixup comparison."""
    rows = []
    for head in heads:
        for arm_alpha in (None, alpha):
            arm_cfg = replace(config, head=head, mixup_alpha=arm_alpha)
            arm_name = f"{head}_{'mixup' if arm_alpha is not None else 'nomix'}"
            arm_dir = None if out_dir is None else os.path.join(os.fspath(out_dir), arm_name)
            report, _ = train(arm_cfg, index, cache_dir, arm_dir)
            rows.append((head, arm_alpha is not None, report.mean_accuracy))
    return rows
