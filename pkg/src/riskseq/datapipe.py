"""CSV ingestion, train-only standardisation, windowing, chronological splits,
and seeded synthetic data."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError
from .tensor import make_rng

STD_FLOOR = 1e-12


@dataclass(frozen=True)
class FeatureFrame:
    timestamps: np.ndarray  # (N,) int64, strictly increasing
    feature_names: tuple[str, ...]
    values: np.ndarray  # (N, F) float64
    labels: np.ndarray | None = None  # (N,) int64 in {0, 1}

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if vals.ndim != 2 or vals.shape[0] != ts.shape[0]:
            raise DataError(f"values shape {vals.shape} does not match {ts.shape[0]} timestamps")
        if vals.shape[1] != len(self.feature_names):
            raise DataError(f"{vals.shape[1]} value columns but {len(self.feature_names)} names")
        if ts.size > 1 and not np.all(np.diff(ts) > 0):
            raise DataError("timestamps must be strictly increasing")
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != ts.shape:
                raise DataError(f"labels shape {lab.shape} does not match {ts.shape[0]} rows")
            if not np.all((lab == 0) | (lab == 1)):
                raise DataError("labels must be 0 or 1")
            object.__setattr__(self, "labels", lab)

    def __len__(self):
        return len(self.timestamps)

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def rows(self, stop: int) -> "FeatureFrame":
        lab = None if self.labels is None else self.labels[:stop]
        return FeatureFrame(self.timestamps[:stop], self.feature_names, self.values[:stop], lab)


def load_csv(path) -> FeatureFrame:
    """Parse ``timestamp,<features...>[,label]``; rows must already be sorted."""
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataError(f"{path}: missing header row")
        header = [h.strip() for h in header]
        if header[0] != "timestamp":
            raise DataError(f"{path}: first column must be 'timestamp', got {header[0]!r}")
        has_label = header[-1] == "label"
        names = header[1:-1] if has_label else header[1:]
        if not names:
            raise DataError(f"{path}: no feature columns")
        ts, vals, labels = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
            cell = row[0].strip()
            if not cell:
                raise DataError(f"{path}: row {lineno} missing timestamp")
            try:
                t = int(cell)
            except ValueError:
                raise DataError(f"{path}: row {lineno} column 'timestamp': not an integer: {cell!r}") from None
            if ts and t == ts[-1]:
                raise DataError(f"{path}: row {lineno} duplicate timestamp {t}")
            if ts and t < ts[-1]:
                raise DataError(f"{path}: row {lineno} timestamp {t} out of order")
            ts.append(t)
            feats = []
            for name, cell in zip(names, row[1 : 1 + len(names)]):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: row {lineno} column {name!r}: not numeric: {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {lineno} column {name!r}: non-finite value {cell!r}")
                feats.append(v)
            vals.append(feats)
            if has_label:
                cell = row[-1].strip()
                if cell not in ("0", "1"):
                    raise DataError(f"{path}: row {lineno} column 'label': must be 0 or 1, got {cell!r}")
                labels.append(int(cell))
    if not ts:
        raise DataError(f"{path}: no data rows")
    return FeatureFrame(
        np.array(ts, dtype=np.int64),
        names,
        np.array(vals, dtype=np.float64).reshape(len(ts), len(names)),
        np.array(labels, dtype=np.int64) if has_label else None,
    )


def write_csv(frame: FeatureFrame, dest) -> None:
    """Write a frame in the layout :func:`load_csv` reads (LF line endings).

    ``dest`` is a path or an open text stream.
    """
    if hasattr(dest, "write"):
        _write_rows(frame, dest)
        return
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        _write_rows(frame, fh)


def _write_rows(frame: FeatureFrame, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    header = ["timestamp", *frame.feature_names]
    if frame.labels is not None:
        header.append("label")
    w.writerow(header)
    for i in range(len(frame)):
        row = [str(int(frame.timestamps[i]))] + [repr(float(v)) for v in frame.values[i]]
        if frame.labels is not None:
            row.append(str(int(frame.labels[i])))
        w.writerow(row)


# ------------------------------------------------------------ normalisation


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    @property
    def fitted(self) -> bool:
        return self.mean is not None

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return values * self.std + self.mean


def fit_normalizer(frame: FeatureFrame) -> Normalizer:
    """Per-feature mean and population std; std floored for constant columns."""
    if len(frame) < 2:
        raise DataError(f"normalizer needs at least 2 rows, got {len(frame)}")
    mean = frame.values.mean(axis=0)
    std = np.maximum(frame.values.std(axis=0), STD_FLOOR)
    return Normalizer(mean, std)


def apply_normalizer(frame: FeatureFrame, norm: Normalizer) -> FeatureFrame:
    if not norm.fitted:
        raise DataError("normalizer has not been fitted")
    if norm.mean.shape[0] != frame.n_features:
        raise DataError(
            f"normalizer has {norm.mean.shape[0]} features, frame has {frame.n_features}"
        )
    return replace(frame, values=(frame.values - norm.mean) / norm.std)


# ---------------------------------------------------------------- windows


@dataclass(frozen=True)
class WindowSample:
    x: np.ndarray  # (T, F)
    label: int
    end_timestamp: int
    end_row: int


def window_count(n: int, T: int, stride: int) -> int:
    return (n - T) // stride + 1


def _window_ends(n: int, T: int, stride: int) -> range:
    if T < 1 or stride < 1:
        raise DataError(f"window length and stride must be >= 1, got T={T}, stride={stride}")
    if n < T:
        raise DataError(f"frame has {n} rows, fewer than the window length {T}")
    return range(T - 1, n, stride)


def window_matrices(frame: FeatureFrame, T: int, stride: int = 1):
    """``(X, end_rows)`` for every window, labels not required."""
    ends = np.array(_window_ends(len(frame), T, stride))
    X = np.stack([frame.values[e - T + 1 : e + 1] for e in ends])
    return X, ends


def make_windows(frame: FeatureFrame, T: int, stride: int = 1) -> list[WindowSample]:
    """Windows of ``T`` consecutive rows labelled by their last row."""
    if frame.labels is None:
        raise DataError("make_windows needs a labelled frame")
    return [
        WindowSample(
            frame.values[e - T + 1 : e + 1], int(frame.labels[e]), int(frame.timestamps[e]), e
        )
        for e in _window_ends(len(frame), T, stride)
    ]


def to_arrays(samples: list[WindowSample]) -> tuple[np.ndarray, np.ndarray]:
    X = np.stack([s.x for s in samples])
    y = np.array([s.label for s in samples], dtype=np.float64)
    return X, y


# ----------------------------------------------------------------- splits


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.6
    val_fraction: float = 0.2
    test_fraction: float = 0.2

    def __post_init__(self):
        fr = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(not f > 0 for f in fr):
            raise ValueError(f"split fractions must all be > 0, got {fr}")
        if abs(sum(fr) - 1.0) > 1e-12:
            raise ValueError(f"split fractions must sum to 1, got {sum(fr)!r}")

    def counts(self, total: int) -> tuple[int, int, int]:
        n_val = math.floor(self.val_fraction * total)
        n_test = math.floor(self.test_fraction * total)
        n_train = total - n_val - n_test
        return n_train, n_val, n_test


def chrono_split(samples: list[WindowSample], spec: SplitSpec):
    """Contiguous train/val/test by end timestamp; the floor remainder goes to train."""
    ends = [s.end_timestamp for s in samples]
    if any(b <= a for a, b in zip(ends, ends[1:])):
        raise DataError("samples must be strictly ordered by end_timestamp")
    n_train, n_val, n_test = spec.counts(len(samples))
    if min(n_train, n_val, n_test) < 1:
        raise DataError(
            f"split of {len(samples)} samples gives an empty set ({n_train}/{n_val}/{n_test})"
        )
    return (
        samples[:n_train],
        samples[n_train : n_train + n_val],
        samples[n_train + n_val :],
    )


@dataclass
class PreparedData:
    train: list[WindowSample]
    val: list[WindowSample]
    test: list[WindowSample]
    normalizer: Normalizer
    frame: FeatureFrame = field(repr=False)

    def arrays(self, name: str):
        return to_arrays(getattr(self, name))


def prepare(frame: FeatureFrame, T: int, stride: int, spec: SplitSpec,
            normalizer: Normalizer | None = None) -> PreparedData:
    """Window, split, and standardise with statistics from training rows only.

    Training rows are every frame row up to the end of the last training
    window. Pass ``normalizer`` to reuse stored statistics instead of fitting.
    """
    raw_train, _, _ = chrono_split(make_windows(frame, T, stride), spec)
    if normalizer is None:
        normalizer = fit_normalizer(frame.rows(raw_train[-1].end_row + 1))
    scaled = apply_normalizer(frame, normalizer)
    train, val, test = chrono_split(make_windows(scaled, T, stride), spec)
    return PreparedData(train, val, test, normalizer, scaled)


# -------------------------------------------------------------- synthetic


def _episodes(rng, n_rows: int, min_len: int, max_len: int) -> np.ndarray:
    """Binary mask of non-overlapping episodes covering 20-40% of rows."""
    frac = rng.uniform(0.25, 0.35)
    n_pos = int(round(frac * n_rows))
    lengths = []
    while sum(lengths) < n_pos:
        lengths.append(int(rng.integers(min_len, max_len + 1)))
    lengths[-1] -= sum(lengths) - n_pos
    if lengths[-1] < 1:
        lengths.pop()
    k = len(lengths)
    # gaps: k + 1 nonnegative parts summing to the negative rows, inner gaps >= 1
    n_neg = n_rows - n_pos
    cuts = np.sort(rng.integers(0, n_neg - (k - 1) + 1, size=k))
    gaps = np.diff(np.concatenate([[0], cuts, [n_neg - (k - 1)]]))
    gaps[1:-1] += 1
    mask = np.zeros(n_rows, dtype=np.int64)
    pos = 0
    for g, length in zip(gaps[:-1], lengths):
        pos += int(g)
        mask[pos : pos + length] = 1
        pos += length
    return mask


def gen_synthetic(seed: int, n_rows: int, F: int, T: int, regime_strength: float = 1.0,
                  noise_std: float = 1.0, ar_coef: float = 0.5,
                  episode_len: tuple[int, int] | None = None) -> FeatureFrame:
    """AR(1) multivariate series with injected stress regimes.

    Inside an episode a random subset of features gets its innovation scale
    multiplied by ``1 + 2 * regime_strength`` and a drift of
    ``regime_strength * noise_std`` per step. The label marks episode rows;
    episode lengths are drawn uniformly from ``episode_len``, by default
    ``[T // 2, 2 * T]``.
    """
    if n_rows <= T:
        raise ValueError(f"n_rows ({n_rows}) must exceed T ({T})")
    if F < 2:
        raise ValueError(f"need at least 2 features, got {F}")
    rng = make_rng(seed)
    lo, hi = episode_len or (max(2, T // 2), max(3, 2 * T))
    if not 1 <= lo <= hi:
        raise ValueError(f"invalid episode length range {episode_len}")
    labels = _episodes(rng, n_rows, lo, hi)
    values = np.zeros((n_rows, F))
    state = np.zeros(F)
    n_affected = max(1, F // 2)
    affected = np.zeros(F, dtype=bool)
    eps = rng.standard_normal((n_rows, F)) * noise_std
    for t in range(n_rows):
        if labels[t] and (t == 0 or not labels[t - 1]):
            affected[:] = False
            affected[rng.choice(F, size=n_affected, replace=False)] = True
        shock = eps[t].copy()
        if labels[t]:
            shock[affected] *= 1.0 + 2.0 * regime_strength
            shock[affected] += regime_strength * noise_std
        state = ar_coef * state + shock
        values[t] = state
    names = tuple(f"f{j}" for j in range(F))
    return FeatureFrame(np.arange(n_rows, dtype=np.int64), names, values, labels)


def gen_separable(seed: int, n: int = 32, T: int = 16, F: int = 4, margin: float = 2.0):
    """``(X, y)`` with class 1 shifted by ``margin`` on feature 0 over the last half.

    The shift sits far outside the unit-noise spread, so the classes are
    linearly separable by the mean of that slice.
    """
    rng = make_rng(seed)
    y = np.zeros(n)
    y[rng.permutation(n)[: n // 2]] = 1.0
    X = 0.3 * rng.standard_normal((n, T, F))
    X[:, T // 2 :, 0] += margin * (2.0 * y[:, None] - 1.0)
    return X, y
