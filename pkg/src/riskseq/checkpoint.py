"""JSON checkpoints with bit-exact float round-trips.

Floats are written with Python's shortest round-trip ``repr``, so
``load(save(m))`` reproduces every parameter exactly.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig, config_from_dict
from .datapipe import Normalizer
from .errors import CheckpointError, ConfigError
from .network import ModelParams, init_params
from .tensor import make_rng
from .training import TrainHistory

FORMAT_VERSION = 1


def atomic_write(path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class Checkpoint:
    config: RunConfig
    params: ModelParams
    normalizer: Normalizer
    history: dict
    format_version: int = FORMAT_VERSION


def history_summary(history: TrainHistory) -> dict:
    best = history.best
    return {
        "epochs": len(history),
        "best_epoch": history.best_epoch,
        "best_val_loss": None if best is None else best.val_loss,
        "best_train_loss": None if best is None else best.train_loss,
    }


def checkpoint_to_json(ckpt: Checkpoint) -> str:
    doc = {
        "format_version": ckpt.format_version,
        "config": ckpt.config.to_dict(),
        "n_features": ckpt.params.n_features,
        "params": {name: a.tolist() for name, a in ckpt.params.tensors()},
        "normalizer": {
            "mean": ckpt.normalizer.mean.tolist(),
            "std": ckpt.normalizer.std.tolist(),
        },
        "history": ckpt.history,
    }
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    atomic_write(path, checkpoint_to_json(ckpt))


def load_checkpoint(path) -> Checkpoint:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: invalid JSON: {exc}") from None
    try:
        version = doc["format_version"]
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format_version {version}")
        config = config_from_dict(doc["config"])
        n_features = doc["n_features"]
        skeleton = init_params(config.model, n_features, make_rng(0))
        stored = doc["params"]
        names = [n for n, _ in skeleton.tensors()]
        if sorted(stored) != sorted(names):
            raise CheckpointError(f"{path}: parameter tensors do not match the stored architecture")
        params = skeleton.with_tensors(np.array(stored[n], dtype=np.float64) for n in names)
        norm = Normalizer(
            np.array(doc["normalizer"]["mean"], dtype=np.float64),
            np.array(doc["normalizer"]["std"], dtype=np.float64),
        )
        if norm.mean.shape != (n_features,) or norm.std.shape != (n_features,):
            raise CheckpointError(f"{path}: normalizer does not have {n_features} features")
        return Checkpoint(config, params, norm, doc.get("history", {}), version)
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint ({exc})") from None
    except ConfigError as exc:
        raise CheckpointError(f"{path}: bad config snapshot: {exc}") from None
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
