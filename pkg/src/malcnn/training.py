"""Training loop: per-mini-batch Adam, best-validation checkpointing.

The protocol is fixed: shuffle the training samples differently every
epoch (seeded), update after every mini-batch including the final
partial one, evaluate validation loss/accuracy after each epoch, and
keep the checkpoint from the epoch with the highest validation accuracy
(earliest epoch on ties).  No early stopping and no schedules: the best
epoch is selected after the fact from the full history.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import (
    ConfigurationError,
    NonFiniteGradientError,
    TrainingDivergedError,
    ValidationError,
)
from .validation import check_binary_labels, check_sample_array
from .zoo import Checkpoint, GraphNet, build_network


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs: int = 100
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        # 0 is allowed as the zero-step diagnostic setting
        if self.learning_rate < 0.0:
            raise ConfigurationError("learning_rate must be non-negative")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ConfigurationError("adam betas must be in [0, 1)")
        if self.eps <= 0.0:
            raise ConfigurationError("eps must be positive")


@dataclass
class AdamState:
    """First/second moment estimates plus the shared step counter."""

    step: int
    m: dict[str, torch.Tensor]
    v: dict[str, torch.Tensor]

    @classmethod
    def for_params(cls, params: dict[str, torch.Tensor]) -> "AdamState":
        return cls(
            step=0,
            m={k: torch.zeros_like(p) for k, p in params.items()},
            v={k: torch.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, torch.Tensor],
    grads: dict[str, torch.Tensor],
    state: AdamState,
    cfg: TrainConfig,
) -> tuple[dict[str, torch.Tensor], AdamState]:
    """One bias-corrected Adam update, applied in place.

    Returns the updated (params, state) pair; tensors are shared with
    the inputs.
    """
    if set(params) != set(grads):
        raise ValidationError("params and grads must cover the same tensors")
    t = state.step + 1
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    with torch.no_grad():
        for key, p in params.items():
            g = grads[key]
            if g.shape != p.shape:
                raise ValidationError(f"gradient shape mismatch for {key!r}")
            if not torch.isfinite(g).all():
                raise NonFiniteGradientError(key)
            m, v = state.m[key], state.v[key]
            m.mul_(cfg.beta1).add_(g, alpha=1.0 - cfg.beta1)
            v.mul_(cfg.beta2).addcmul_(g, g, value=1.0 - cfg.beta2)
            denom = (v / bc2).sqrt_().add_(cfg.eps)
            p.addcdiv_(m / bc1, denom, value=-cfg.learning_rate)
    state.step = t
    return params, state


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    elapsed_s: float  # cumulative wall-clock since training started


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    @property
    def best_epoch(self) -> int:
        best = max(r.val_accuracy for r in self.records)
        return next(r.epoch for r in self.records if r.val_accuracy == best)

    @property
    def best_validation_accuracy(self) -> float:
        return max(r.val_accuracy for r in self.records)

    def validate(self):
        if not self.records:
            raise ValidationError("history is empty")
        elapsed = [r.elapsed_s for r in self.records]
        if any(b <= a for a, b in zip(elapsed, elapsed[1:])):
            raise ValidationError("cumulative elapsed time must be strictly increasing")


def record_time_to_best(history: TrainHistory) -> tuple[float, int, float]:
    """(best validation accuracy, epoch it was reached, seconds to get there)."""
    history.validate()
    best_epoch = history.best_epoch
    record = next(r for r in history.records if r.epoch == best_epoch)
    return history.best_validation_accuracy, best_epoch, record.elapsed_s


def _as_input_tensor(X: np.ndarray, channels: int) -> torch.Tensor:
    """(n, 120, 45) float32 -> (n, 1, 120, 45) tensor; channel replication
    to 3 happens lazily per batch via expand (all channels identical)."""
    X = check_sample_array(X, channels=None)
    if X.shape[1] not in (1, channels):
        raise ValidationError(
            f"dataset has {X.shape[1]} channels but the model expects {channels}"
        )
    return torch.from_numpy(X)


def _expand(batch: torch.Tensor, channels: int) -> torch.Tensor:
    if batch.shape[1] == channels:
        return batch
    return batch.expand(-1, channels, -1, -1)


def predict_logits(
    net: GraphNet, X: np.ndarray | torch.Tensor, batch_size: int = 64
) -> np.ndarray:
    """Two-class logits over ``X`` in order, computed in eval mode."""
    channels = net.spec.input_shape[0]
    if isinstance(X, np.ndarray):
        X = _as_input_tensor(X, channels)
    was_training = net.training
    net.eval()
    outs = []
    with torch.no_grad():
        for i in range(0, len(X), batch_size):
            outs.append(net(_expand(X[i : i + batch_size], channels)))
    if was_training:
        net.train()
    return torch.cat(outs).numpy()


def _eval_loss_acc(net, X, y, batch_size, channels):
    was_training = net.training
    net.eval()
    total_loss, correct = 0.0, 0
    with torch.no_grad():
        for i in range(0, len(X), batch_size):
            xb = _expand(X[i : i + batch_size], channels)
            yb = y[i : i + batch_size]
            logits = net(xb)
            total_loss += F.cross_entropy(logits, yb, reduction="sum").item()
            # malicious iff positive-class probability >= 0.5, same rule as predict()
            preds = (logits[:, 1] >= logits[:, 0]).long()
            correct += int((preds == yb).sum())
    if was_training:
        net.train()
    return total_loss / len(X), correct / len(X)


def train(
    model: GraphNet | str,
    split,
    cfg: TrainConfig,
    verbose: bool = False,
) -> tuple[Checkpoint, TrainHistory]:
    """Train ``model`` on a dataset split and return the checkpoint from
    the best-validation epoch together with the full epoch history.

    ``split`` is anything with X_train/y_train/X_val/y_val/X_test/y_test
    arrays (a :class:`~malcnn.encoding.DatasetSplit` in the pipeline).
    """
    net = build_network(model, seed=cfg.seed) if isinstance(model, str) else model
    for part in ("X_train", "y_train", "X_val", "y_val", "X_test", "y_test"):
        value = getattr(split, part)
        if value is None or len(value) == 0:
            raise ConfigurationError(f"dataset split part {part!r} is empty")

    channels = net.spec.input_shape[0]
    X_train = _as_input_tensor(split.X_train, channels)
    y_train = torch.from_numpy(check_binary_labels(split.y_train, len(X_train)))
    X_val = _as_input_tensor(split.X_val, channels)
    y_val = torch.from_numpy(check_binary_labels(split.y_val, len(X_val)))

    params = dict(net.named_parameters())
    state = AdamState.for_params(params)
    rng = np.random.default_rng(cfg.seed)

    history = TrainHistory()
    best_acc = -1.0
    best_ckpt: Checkpoint | None = None
    net.train()
    t0 = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(X_train))
        loss_sum = 0.0
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = torch.from_numpy(order[start : start + cfg.batch_size])
            xb = _expand(X_train[idx], channels)
            yb = y_train[idx]
            logits = net(xb)
            loss = F.cross_entropy(logits, yb)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(epoch, b)
            net.zero_grad(set_to_none=False)
            loss.backward()
            grads = {k: p.grad for k, p in params.items()}
            adam_step(params, grads, state, cfg)
            loss_sum += loss.item() * len(idx)
        train_loss = loss_sum / len(order)
        val_loss, val_acc = _eval_loss_acc(net, X_val, y_val, cfg.batch_size, channels)
        history.records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=train_loss,
                val_loss=val_loss,
                val_accuracy=val_acc,
                elapsed_s=time.perf_counter() - t0,
            )
        )
        if val_acc > best_acc:
            best_acc = val_acc
            best_ckpt = Checkpoint.from_network(net, epoch=epoch)
        if verbose:
            print(
                f"epoch {epoch:3d}  train_loss {train_loss:.4f}  "
                f"val_loss {val_loss:.4f}  val_acc {val_acc:.4f}"
            )
    history.validate()
    return best_ckpt, history


# ---------------------------------------------------------------------------
# history persistence (line-oriented, one record per epoch)
# ---------------------------------------------------------------------------

HISTORY_HEADER = "epoch,train_loss,val_loss,val_acc,cumulative_s"


def save_history(history: TrainHistory, path: str | Path) -> Path:
    path = Path(path)
    lines = [HISTORY_HEADER]
    for r in history.records:
        lines.append(
            f"{r.epoch},{r.train_loss!r},{r.val_loss!r},{r.val_accuracy!r},{r.elapsed_s!r}"
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def load_history(path: str | Path) -> TrainHistory:
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0] != HISTORY_HEADER:
        raise ValidationError(f"{path} is not a history file")
    records = []
    for line in lines[1:]:
        epoch, train_loss, val_loss, val_acc, elapsed = line.split(",")
        records.append(
            EpochRecord(
                epoch=int(epoch),
                train_loss=float(train_loss),
                val_loss=float(val_loss),
                val_accuracy=float(val_acc),
                elapsed_s=float(elapsed),
            )
        )
    return TrainHistory(records=records)


class ConvNetClassifier(BaseEstimator, ClassifierMixin):
    """Sklearn-style front door to the CNN detectors.

    Wraps architecture construction and the training protocol behind
    ``fit``/``predict``/``predict_proba``.  Validation data drives
    best-epoch selection: pass it explicitly, otherwise the trailing
    ``validation_fraction`` of the training samples is held out.
    """

    def __init__(
        self,
        architecture: str = "lenet5",
        epochs: int = 100,
        batch_size: int = 64,
        learning_rate: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        seed: int = 0,
        validation_fraction: float = 0.2,
        verbose: bool = False,
    ):
        self.architecture = architecture
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.seed = seed
        self.validation_fraction = validation_fraction
        self.verbose = verbose

    def _config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            seed=self.seed,
        )

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_sample_array(X)
        y = check_binary_labels(y, len(X))
        if X_val is None:
            n_val = max(1, int(round(len(X) * self.validation_fraction)))
            if n_val >= len(X):
                raise ValidationError("not enough samples to hold out validation data")
            X, X_val = X[:-n_val], X[-n_val:]
            y, y_val = y[:-n_val], y[-n_val:]
        else:
            X_val = check_sample_array(X_val)
            y_val = check_binary_labels(y_val, len(X_val))

        parts = SimpleNamespace(
            X_train=X, y_train=y, X_val=X_val, y_val=y_val,
            X_test=X_val, y_test=y_val,  # estimator API has no separate test part
        )
        net = build_network(self.architecture, seed=self.seed)
        ckpt, history = train(net, parts, self._config(), verbose=self.verbose)
        self.network_ = ckpt.apply_to(net)
        self.checkpoint_ = ckpt
        self.history_ = history
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X) -> np.ndarray:
        if not hasattr(self, "network_"):
            raise ValidationError("classifier must be fitted before predicting")
        logits = torch.from_numpy(predict_logits(self.network_, check_sample_array(X)))
        return torch.softmax(logits, dim=1).numpy()

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)
