"""Cross-entropy objective, Adam, and the mini-batch training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, TrainingError
from .network import ModelParams, hybrid_backward, hybrid_forward
from .tensor import ShapeError, make_rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    patience: int = 10
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    bce_clamp: float = 1e-7
    clip_norm: float | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("adam betas must lie in (0, 1)")
        if not self.adam_epsilon > 0:
            raise ValueError(f"adam_epsilon must be > 0, got {self.adam_epsilon}")
        if not 0 < self.bce_clamp < 0.5:
            raise ValueError(f"bce_clamp must lie in (0, 0.5), got {self.bce_clamp}")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError(f"clip_norm must be > 0 when set, got {self.clip_norm}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


def bce_loss(y_hat, y, clamp: float = 1e-7):
    """Binary cross-entropy and its derivative w.r.t. the probability.

    Both are evaluated at ``y_hat`` clamped to ``[clamp, 1 - clamp]``.
    Works elementwise on arrays.
    """
    y = np.asarray(y, dtype=np.float64)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    p = np.clip(np.asarray(y_hat, dtype=np.float64), clamp, 1.0 - clamp)
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    grad = (p - y) / (p * (1.0 - p))
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


@dataclass
class OptimizerState:
    m: ModelParams
    v: ModelParams
    step: int = 0


def init_optimizer(params: ModelParams) -> OptimizerState:
    return OptimizerState(params.zeros_like(), params.zeros_like(), 0)


def adam_step(params: ModelParams, grads: ModelParams, state: OptimizerState, cfg: TrainConfig):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    names = [n for n, _ in params.tensors()]
    if [n for n, _ in grads.tensors()] != names:
        raise ShapeError("gradient structure does not match parameters")
    b1, b2, eps, lr = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon, cfg.learning_rate
    t = state.step + 1
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_p, new_m, new_v = [], [], []
    for (_, p), (_, g), (_, m), (_, v) in zip(
        params.tensors(), grads.tensors(), state.m.tensors(), state.v.tensors()
    ):
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_p.append(p - lr * (m / bc1) / (np.sqrt(v / bc2) + eps))
        new_m.append(m)
        new_v.append(v)
    return params.with_tensors(new_p), OptimizerState(
        state.m.with_tensors(new_m), state.v.with_tensors(new_v), t
    )


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    def __len__(self):
        return len(self.records)

    @property
    def best(self) -> EpochRecord | None:
        return self.records[self.best_epoch - 1] if self.best_epoch else None

    def append(self, rec: EpochRecord) -> None:
        if rec.epoch != len(self.records) + 1:
            raise ValueError(f"epoch {rec.epoch} breaks contiguity after {len(self.records)}")
        self.records.append(rec)
        if self.best is None or rec.val_loss < self.best.val_loss:
            self.best_epoch = rec.epoch


def early_stop_check(history: TrainHistory, patience: int) -> bool:
    """True when ``patience`` epochs have passed without a new best val loss."""
    if not history.records:
        raise ValueError("early_stop_check needs a non-empty history")
    return history.records[-1].epoch - history.best_epoch >= patience


def fisher_yates(n: int, rng: np.random.Generator) -> np.ndarray:
    """Permutation of ``range(n)``: swap slot i with a uniform j in [0, i], i = n-1..1."""
    order = np.arange(n)
    if n < 2:
        return order
    u = rng.random(n - 1)
    for k, i in enumerate(range(n - 1, 0, -1)):
        j = int(u[k] * (i + 1))
        order[i], order[j] = order[j], order[i]
    return order


def evaluate_loss(params: ModelParams, X: np.ndarray, y: np.ndarray, clamp: float = 1e-7,
                  threshold: float = 0.5, chunk: int = 256):
    """Mean BCE and accuracy of ``params`` on ``(X, y)``."""
    total = 0.0
    correct = 0
    for s in range(0, len(X), chunk):
        p, _ = hybrid_forward(X[s : s + chunk], params)
        loss, _ = bce_loss(p, y[s : s + chunk], clamp)
        total += float(loss.sum())
        correct += int(((p >= threshold) == (y[s : s + chunk] == 1)).sum())
    return total / len(X), correct / len(X)


def _clip(grads: ModelParams, max_norm: float) -> ModelParams:
    norm = np.sqrt(sum(float(np.sum(g * g)) for _, g in grads.tensors()))
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return grads.map(lambda g: g * scale)


def _check_split(name, data):
    X, y = data
    if len(X) == 0:
        raise DataError(f"{name} split is empty")
    if len(X) != len(y):
        raise DataError(f"{name} split has {len(X)} windows but {len(y)} labels")
    return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64)


def train(model: ModelParams, train_set, val_set, cfg: TrainConfig):
    """Mini-batch Adam training with validation-loss early stopping.

    ``train_set`` and ``val_set`` are ``(X, y)`` pairs with ``X`` shaped
    ``(N, T, F)``. Returns the validation-best parameters and the history.
    """
    history = TrainHistory()
    if cfg.epochs == 0:
        return model, history
    X, y = _check_split("train", train_set)
    Xv, yv = _check_split("validation", val_set)
    if X.shape[1:] != Xv.shape[1:]:
        raise DataError(f"train windows {X.shape[1:]} and validation windows {Xv.shape[1:]} differ")
    rng = make_rng(cfg.seed)
    state = init_optimizer(model)
    params = model
    best = model
    n = len(X)
    for epoch in range(1, cfg.epochs + 1):
        order = fisher_yates(n, rng)
        total = 0.0
        for b, s in enumerate(range(0, n, cfg.batch_size), start=1):
            idx = order[s : s + cfg.batch_size]
            p, cache = hybrid_forward(X[idx], params)
            loss, dp = bce_loss(p, y[idx], cfg.bce_clamp)
            batch_loss = float(loss.sum())
            if not np.isfinite(batch_loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            total += batch_loss
            grads = hybrid_backward(cache, params, dp / len(idx))
            if cfg.clip_norm is not None:
                grads = _clip(grads, cfg.clip_norm)
            params, state = adam_step(params, grads, state, cfg)
        val_loss, val_acc = evaluate_loss(params, Xv, yv, cfg.bce_clamp)
        if not np.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        history.append(EpochRecord(epoch, total / n, val_loss, val_acc))
        if history.best_epoch == epoch:
            best = params
        log.info(
            "epoch %d train_loss=%.6f val_loss=%.6f val_acc=%.4f",
            epoch, total / n, val_loss, val_acc,
        )
        if early_stop_check(history, cfg.patience):
            log.info("early stop at epoch %d (best %d)", epoch, history.best_epoch)
            break
    return best, history
