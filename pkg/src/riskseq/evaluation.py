"""Confusion-matrix metrics and the hybrid-vs-ablation comparison."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace

import numpy as np

from .datapipe import PreparedData
from .errors import RiskSeqError
from .network import HybridConfig, ModelParams, init_params, predict_proba
from .tensor import make_rng
from .training import TrainConfig, TrainHistory, evaluate_loss, train

log = logging.getLogger(__name__)

# ACC, Recall, F1 as published; shown for context only.
REPORTED_TABLE = {
    "BILSTM": (0.84, 0.82, 0.83),
    "CNN": (0.81, 0.79, 0.80),
    "Transformer": (0.86, 0.85, 0.85),
    "TCN": (0.85, 0.83, 0.84),
    "BILSTM+CNN(Ours)": (0.89, 0.87, 0.88),
}


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    recall: float
    precision: float
    f1: float
    counts: ConfusionCounts
    threshold: float = 0.5

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "recall": self.recall,
            "precision": self.precision,
            "f1": self.f1,
            **asdict(self.counts),
            "threshold": self.threshold,
        }


def confusion(predictions, labels, threshold: float = 0.5) -> ConfusionCounts:
    """Tally counts, calling a prediction positive iff it is >= ``threshold``."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels)
    if p.shape != y.shape or p.ndim != 1:
        raise ValueError(f"predictions {p.shape} and labels {y.shape} must be equal-length vectors")
    if p.size == 0:
        raise ValueError("confusion needs at least one prediction")
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    pos = p >= threshold
    actual = y == 1
    return ConfusionCounts(
        tp=int(np.sum(pos & actual)),
        fp=int(np.sum(pos & ~actual)),
        tn=int(np.sum(~pos & ~actual)),
        fn=int(np.sum(~pos & actual)),
    )


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def metrics(c: ConfusionCounts, threshold: float = 0.5) -> EvalReport:
    """Positive-class metrics; any zero denominator yields 0."""
    if c.total <= 0:
        raise ValueError("metrics need at least one counted sample")
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = _ratio(c.tp, c.tp + c.fn)
    return EvalReport(
        accuracy=(c.tp + c.tn) / c.total,
        recall=recall,
        precision=precision,
        f1=_ratio(2 * precision * recall, precision + recall),
        counts=c,
        threshold=threshold,
    )


def evaluate(params: ModelParams, X: np.ndarray, y: np.ndarray, threshold: float = 0.5) -> EvalReport:
    return metrics(confusion(predict_proba(X, params), y, threshold), threshold)


@dataclass
class ModelRun:
    kind: str
    params: ModelParams | None
    history: TrainHistory
    report: EvalReport | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def train_and_evaluate(data: PreparedData, model_cfg: HybridConfig, train_cfg: TrainConfig,
                       seed: int, threshold: float = 0.5) -> ModelRun:
    """Initialise from ``seed``, train on data.train, early-stop on data.val, score data.test."""
    train_cfg = replace(train_cfg, seed=seed)
    X, y = data.arrays("train")
    params = init_params(model_cfg, X.shape[2], make_rng(seed))
    best, history = train(params, (X, y), data.arrays("val"), train_cfg)
    report = evaluate(best, *data.arrays("test"), threshold=threshold)
    return ModelRun(model_cfg.kind, best, history, report)


def compare_models(data: PreparedData, base: HybridConfig, train_cfg: TrainConfig,
                   kinds=("hybrid", "cnn_only", "bilstm_only"), seed: int = 0,
                   threshold: float = 0.5) -> list[ModelRun]:
    """Train each kind on identical splits, seed and budget; failures are recorded per row."""
    if not kinds:
        raise ValueError("compare_models needs at least one model kind")
    rows = []
    for kind in kinds:
        log.info("training %s", kind)
        try:
            rows.append(train_and_evaluate(data, base.with_kind(kind), train_cfg, seed, threshold))
        except (RiskSeqError, ValueError, FloatingPointError) as exc:
            log.error("%s failed: %s", kind, exc)
            rows.append(ModelRun(kind, None, TrainHistory(), None, f"{type(exc).__name__}: {exc}"))
    return rows


def comparison_json(rows: list[ModelRun]) -> dict:
    out = []
    for r in rows:
        entry = {"model": r.kind, "status": "ok" if r.ok else "failed"}
        if r.ok:
            entry.update(r.report.to_dict())
            entry["epochs"] = len(r.history)
            entry["best_epoch"] = r.history.best_epoch
            entry["best_val_loss"] = r.history.best.val_loss if r.history.best else None
        else:
            entry["error"] = r.error
        out.append(entry)
    reference = [
        {"model": name, "accuracy": a, "recall": rc, "f1": f}
        for name, (a, rc, f) in REPORTED_TABLE.items()
    ]
    return {"models": out, "reported_reference": {"note": "reported in paper, not reproduced",
                                                  "rows": reference}}


def comparison_text(rows: list[ModelRun]) -> str:
    lines = [f"{'model':<18}{'ACC':>8}{'Recall':>8}{'Prec':>8}{'F1':>8}  status"]
    for r in rows:
        if r.ok:
            m = r.report
            lines.append(
                f"{r.kind:<18}{m.accuracy:>8.4f}{m.recall:>8.4f}{m.precision:>8.4f}{m.f1:>8.4f}  ok"
            )
        else:
            lines.append(f"{r.kind:<18}{'-':>8}{'-':>8}{'-':>8}{'-':>8}  FAILED ({r.error})")
    lines.append("")
    lines.append("Reference (reported in paper, not reproduced):")
    lines.append(f"{'model':<18}{'ACC':>8}{'Recall':>8}{'F1':>8}")
    for name, (a, rc, f) in REPORTED_TABLE.items():
        lines.append(f"{name:<18}{a:>8.2f}{rc:>8.2f}{f:>8.2f}")
    return "\n".join(lines)


def validation_loss(run: ModelRun, data: PreparedData, clamp: float = 1e-7) -> float:
    return evaluate_loss(run.params, *data.arrays("val"), clamp)[0]
