"""Run configuration: JSON in, validated dataclasses out.

Unknown keys and out-of-range values are rejected with :class:`ConfigError`
before anything is computed.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .datapipe import SplitSpec
from .errors import ConfigError
from .network import ConvBlock, HybridConfig
from .training import TrainConfig


@dataclass(frozen=True)
class WindowConfig:
    length: int = 32
    stride: int = 1

    def __post_init__(self):
        if self.length < 1 or self.stride < 1:
            raise ValueError(f"window length and stride must be >= 1, got {self.length}, {self.stride}")


@dataclass(frozen=True)
class SyntheticConfig:
    n_rows: int = 2000
    n_features: int = 6
    regime_strength: float = 1.0
    noise_std: float = 1.0
    ar_coef: float = 0.5
    episode_len: tuple[int, int] | None = None

    def __post_init__(self):
        if self.n_features < 2:
            raise ValueError(f"n_features must be >= 2, got {self.n_features}")
        if self.noise_std < 0 or self.regime_strength < 0:
            raise ValueError("noise_std and regime_strength must be >= 0")
        if not -1 < self.ar_coef < 1:
            raise ValueError(f"ar_coef must lie in (-1, 1), got {self.ar_coef}")
        if self.episode_len is not None:
            lo, hi = self.episode_len
            if not 1 <= lo <= hi:
                raise ValueError(f"invalid episode_len {self.episode_len}")
            object.__setattr__(self, "episode_len", (int(lo), int(hi)))


@dataclass(frozen=True)
class DataConfig:
    path: str | None = None
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    model: HybridConfig = field(default_factory=HybridConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    window: WindowConfig = field(default_factory=WindowConfig)
    data: DataConfig = field(default_factory=DataConfig)
    threshold: float = 0.5

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if not 0 < self.threshold < 1:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.train.seed != self.seed:
            object.__setattr__(self, "train", dataclasses.replace(self.train, seed=self.seed))

    def with_seed(self, seed: int | None) -> "RunConfig":
        if seed is None:
            return self
        return _validated(dataclasses.replace, self, seed=seed)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["train"].pop("seed")
        d["model"]["conv_blocks"] = [dict(b) for b in d["model"]["conv_blocks"]]
        syn = d["data"]["synthetic"]
        if syn["episode_len"] is not None:
            syn["episode_len"] = list(syn["episode_len"])
        return d


def _validated(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _check_value(section: str, name: str, value, default):
    where = f"{section}.{name}" if section else name
    if isinstance(default, bool) or isinstance(value, bool):
        raise ConfigError(f"{where}: booleans are not accepted")
    if isinstance(default, int):
        if not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
    elif isinstance(default, float) or (default is None and name == "clip_norm"):
        if value is None and default is None:
            return
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")


def _section(cls, raw, section: str, skip=(), nested=None):
    if not isinstance(raw, dict):
        raise ConfigError(f"{section or 'config'}: expected an object, got {type(raw).__name__}")
    nested = nested or {}
    fields = {f.name: f for f in dataclasses.fields(cls) if f.name not in skip}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"{section or 'config'}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for name, value in raw.items():
        if name in nested:
            kwargs[name] = nested[name](value)
            continue
        f = fields[name]
        default = f.default if f.default is not dataclasses.MISSING else None
        _check_value(section, name, value, default)
        kwargs[name] = value
    return _validated(cls, **kwargs)


def _conv_blocks(raw):
    if not isinstance(raw, list):
        raise ConfigError("model.conv_blocks: expected a list")
    return tuple(_section(ConvBlock, b, f"model.conv_blocks[{i}]") for i, b in enumerate(raw))


def _episode_len(raw):
    if raw is None:
        return None
    if not (isinstance(raw, list) and len(raw) == 2 and all(isinstance(v, int) for v in raw)):
        raise ConfigError("data.synthetic.episode_len: expected [min, max] integers")
    return tuple(raw)


def _path(raw):
    if raw is not None and not isinstance(raw, str):
        raise ConfigError("data.path: expected a string or null")
    return raw


def config_from_dict(raw: dict) -> RunConfig:
    return _section(
        RunConfig,
        raw,
        "",
        nested={
            "model": lambda r: _section(HybridConfig, r, "model", nested={"conv_blocks": _conv_blocks}),
            "train": lambda r: _section(TrainConfig, r, "train", skip=("seed",)),
            "split": lambda r: _section(SplitSpec, r, "split"),
            "window": lambda r: _section(WindowConfig, r, "window"),
            "data": lambda r: _section(
                DataConfig,
                r,
                "data",
                nested={
                    "path": _path,
                    "synthetic": lambda s: _section(
                        SyntheticConfig, s, "data.synthetic", nested={"episode_len": _episode_len}
                    ),
                },
            ),
        },
    )


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return config_from_dict(raw)
