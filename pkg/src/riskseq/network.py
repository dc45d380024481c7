"""The full CNN -> BiLSTM -> attention -> sigmoid stack and its ablations."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from . import layers as L
from .tensor import ShapeError, glorot_init

KINDS = ("hybrid", "cnn_only", "bilstm_only")
HEADS = ("attention", "last_step")


@dataclass(frozen=True)
class ConvBlock:
    channels: int
    kernel_size: int = 3
    pool_width: int = 2

    def __post_init__(self):
        if self.channels < 1:
            raise ValueError(f"conv channels must be >= 1, got {self.channels}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be a positive odd number, got {self.kernel_size}")
        if self.pool_width < 1:
            raise ValueError(f"pool_width must be >= 1, got {self.pool_width}")


@dataclass(frozen=True)
class HybridConfig:
    """Architecture hyperparameters.

    ``kind`` selects the full model or one of the two ablations: ``cnn_only``
    mean-pools the last conv features into the head, ``bilstm_only`` feeds
    raw features straight into the BiLSTM.
    """

    conv_blocks: tuple[ConvBlock, ...] = (ConvBlock(16), ConvBlock(32))
    hidden: int = 32
    head: str = "attention"
    kind: str = "hybrid"

    def __post_init__(self):
        object.__setattr__(self, "conv_blocks", tuple(self.conv_blocks))
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {self.head!r}")
        if self.hidden < 1:
            raise ValueError(f"hidden must be >= 1, got {self.hidden}")
        if self.kind == "cnn_only" and not self.conv_blocks:
            raise ValueError("cnn_only needs at least one conv block")

    def with_kind(self, kind: str) -> "HybridConfig":
        return replace(self, kind=kind)

    def output_length(self, T: int) -> int:
        if self.kind == "bilstm_only":
            return T
        for block in self.conv_blocks:
            T = -(-T // block.pool_width)
        return T


@dataclass(frozen=True)
class ModelParams:
    """Learnable tensors plus the structural switches forward needs.

    Gradients are represented by the same class.
    """

    conv: tuple[L.Conv1DParams, ...]
    pool_widths: tuple[int, ...]
    bilstm: L.BiLSTMParams | None
    attention: L.AttentionParams | None
    dense: L.DenseParams
    head: str = "attention"
    n_features: int = field(default=0)

    @property
    def pooling(self) -> str:
        return "mean" if self.bilstm is None else self.head

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for k, c in enumerate(self.conv):
            out.append((f"conv{k}.kernels", c.kernels))
            out.append((f"conv{k}.biases", c.biases))
        if self.bilstm is not None:
            for d in ("forward", "backward"):
                lp = getattr(self.bilstm, d)
                out += [(f"bilstm.{d}.W", lp.W), (f"bilstm.{d}.U", lp.U), (f"bilstm.{d}.b", lp.b)]
        if self.attention is not None:
            out.append(("attention.query", self.attention.query))
        out.append(("dense.weights", self.dense.weights))
        out.append(("dense.bias", self.dense.bias))
        return out

    def with_tensors(self, arrays) -> "ModelParams":
        """Rebuild with new arrays given in :meth:`tensors` order."""
        it: Iterator[np.ndarray] = iter(arrays)
        expected = self.tensors()

        def take(shape):
            a = np.asarray(next(it), dtype=np.float64)
            if a.shape != shape:
                raise ShapeError(f"tensor shape {a.shape} does not match {shape}")
            return a

        conv = tuple(
            L.Conv1DParams(take(c.kernels.shape), take(c.biases.shape)) for c in self.conv
        )
        bilstm = None
        if self.bilstm is not None:
            dirs = []
            for d in (self.bilstm.forward, self.bilstm.backward):
                dirs.append(L.LSTMParams(take(d.W.shape), take(d.U.shape), take(d.b.shape)))
            bilstm = L.BiLSTMParams(*dirs)
        attention = None
        if self.attention is not None:
            attention = L.AttentionParams(take(self.attention.query.shape))
        dense = L.DenseParams(take(self.dense.weights.shape), take(self.dense.bias.shape))
        if next(it, None) is not None:
            raise ShapeError(f"too many tensors; expected {len(expected)}")
        return replace(self, conv=conv, bilstm=bilstm, attention=attention, dense=dense)

    def map(self, fn) -> "ModelParams":
        return self.with_tensors(fn(a) for _, a in self.tensors())

    def zeros_like(self) -> "ModelParams":
        return self.map(np.zeros_like)

    def copy(self) -> "ModelParams":
        return self.map(np.array)

    def num_parameters(self) -> int:
        return sum(a.size for _, a in self.tensors())


def _lstm_init(rng, in_size: int, hidden: int) -> L.LSTMParams:
    W = np.concatenate([glorot_init(rng, in_size, hidden, hidden, in_size) for _ in range(4)])
    U = np.concatenate([glorot_init(rng, hidden, hidden, hidden, hidden) for _ in range(4)])
    b = np.zeros(4 * hidden)
    b[hidden : 2 * hidden] = 1.0
    return L.LSTMParams(W, U, b)


def init_params(config: HybridConfig, n_features: int, rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights, zero biases except the forget gate (1.0)."""
    if n_features < 1:
        raise ValueError(f"n_features must be >= 1, got {n_features}")
    conv = []
    pool_widths = []
    width = n_features
    if config.kind != "bilstm_only":
        for block in config.conv_blocks:
            K = block.kernel_size
            kernels = glorot_init(rng, K * width, K * block.channels, block.channels, K, width)
            conv.append(L.Conv1DParams(kernels, np.zeros(block.channels)))
            pool_widths.append(block.pool_width)
            width = block.channels
    bilstm = attention = None
    if config.kind != "cnn_only":
        H = config.hidden
        bilstm = L.BiLSTMParams(_lstm_init(rng, width, H), _lstm_init(rng, width, H))
        if config.head == "attention":
            attention = L.AttentionParams(glorot_init(rng, H, 1, H))
        width = H
    dense = L.DenseParams(glorot_init(rng, width, 1, width), np.zeros(()))
    return ModelParams(
        tuple(conv), tuple(pool_widths), bilstm, attention, dense, config.head, n_features
    )


@dataclass
class NetworkCache:
    params: ModelParams
    conv: list = field(default_factory=list)
    pool: list = field(default_factory=list)
    bilstm: L.LayerCache | None = None
    pooling: L.LayerCache | None = None
    dense: L.LayerCache | None = None
    attention_weights: np.ndarray | None = None
    squeeze: bool = False


def hybrid_forward(x: np.ndarray, params: ModelParams):
    """Probability for one ``(T, F)`` window (float) or a batch (``(B,)``)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (2, 3):
        raise ShapeError(f"expected (T, F) or (B, T, F) input, got shape {x.shape}")
    if params.n_features and x.shape[-1] != params.n_features:
        raise ShapeError(
            f"input has {x.shape[-1]} features, model was built for {params.n_features}"
        )
    cache = NetworkCache(params, squeeze=x.ndim == 2)
    h = x if x.ndim == 3 else x[None]
    for conv_p, width in zip(params.conv, params.pool_widths):
        h, c = L.conv1d_forward(h, conv_p)
        cache.conv.append(c)
        h, c = L.maxpool1d_forward(h, width)
        cache.pool.append(c)
    pooling = params.pooling
    if params.bilstm is not None:
        h, cache.bilstm = L.bilstm_forward(h, params.bilstm)
    if pooling == "attention":
        h, cache.attention_weights, cache.pooling = L.attention_pool(h, params.attention)
    elif pooling == "last_step":
        h, cache.pooling = L.last_step_pool(h)
    else:
        h, cache.pooling = L.mean_pool(h)
    y, cache.dense = L.dense_sigmoid(h, params.dense)
    if cache.squeeze:
        if cache.attention_weights is not None:
            cache.attention_weights = cache.attention_weights[0]
        return float(y[0]), cache
    return y, cache


def hybrid_backward(cache: NetworkCache, params: ModelParams, dy) -> ModelParams:
    """Reverse-mode gradients summed over the batch, as a ModelParams."""
    if cache.params is not params:
        raise ValueError("cache was produced by a different ModelParams instance")
    dy = np.atleast_1d(np.asarray(dy, dtype=np.float64))
    n = cache.dense.data["y"].shape[0]
    if dy.shape != (n,):
        raise ShapeError(f"dL/dy has shape {dy.shape}, forward batch size is {n}")
    dh, g_dense = L.dense_sigmoid_backward(dy, cache.dense, params.dense)
    g_attention = None
    pooling = params.pooling
    if pooling == "attention":
        dh, g_attention = L.attention_backward(dh, cache.pooling, params.attention)
    elif pooling == "last_step":
        dh = L.last_step_backward(dh, cache.pooling)
    else:
        dh = L.mean_pool_backward(dh, cache.pooling)
    g_bilstm = None
    if params.bilstm is not None:
        dh, g_bilstm = L.bilstm_backward(dh, cache.bilstm, params.bilstm)
    g_conv = []
    for conv_p, cc, pc in reversed(list(zip(params.conv, cache.conv, cache.pool))):
        dh = L.maxpool1d_backward(dh, pc)
        dh, g = L.conv1d_backward(dh, cc, conv_p)
        g_conv.append(g)
    return replace(
        params,
        conv=tuple(reversed(g_conv)),
        bilstm=g_bilstm,
        attention=g_attention,
        dense=g_dense,
    )


def predict_proba(x: np.ndarray, params: ModelParams, chunk: int = 256) -> np.ndarray:
    """Batched inference over ``(N, T, F)`` windows."""
    x = np.asarray(x, dtype=np.float64)
    out = [hybrid_forward(x[s : s + chunk], params)[0] for s in range(0, len(x), chunk)]
    return np.concatenate(out) if out else np.zeros(0)
