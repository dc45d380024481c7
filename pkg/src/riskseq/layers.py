"""Forward and backward passes for the network blocks.

Every block accepts a single sequence ``(T, F)`` or a batch ``(B, T, F)``;
the batch axis is carried through the cache so backward returns gradients
in the same layout the forward pass was given. Parameter gradients are
summed over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, sigmoid, softmax


def _batch3(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[None], True
    if x.ndim == 3:
        return x, False
    raise ShapeError(f"expected (T, F) or (B, T, F) input, got shape {x.shape}")


def _unbatch(x: np.ndarray, squeeze: bool) -> np.ndarray:
    return x[0] if squeeze else x


@dataclass
class LayerCache:
    kind: str
    data: dict[str, Any] = field(default_factory=dict)
    squeeze: bool = False


# ---------------------------------------------------------------- parameters


@dataclass(frozen=True)
class Conv1DParams:
    kernels: np.ndarray  # (out_channels, kernel_size, in_channels)
    biases: np.ndarray  # (out_channels,)

    def __post_init__(self):
        if self.kernels.ndim != 3:
            raise ShapeError(f"kernels must be 3-D, got shape {self.kernels.shape}")
        if self.kernels.shape[1] % 2 == 0:
            raise ShapeError(f"kernel_size must be odd, got {self.kernels.shape[1]}")
        if self.biases.shape != (self.kernels.shape[0],):
            raise ShapeError(
                f"biases shape {self.biases.shape} does not match {self.kernels.shape[0]} kernels"
            )

    @property
    def kernel_size(self) -> int:
        return self.kernels.shape[1]

    @property
    def in_channels(self) -> int:
        return self.kernels.shape[2]

    @property
    def out_channels(self) -> int:
        return self.kernels.shape[0]


@dataclass(frozen=True)
class LSTMParams:
    """Gate blocks stacked in the order input, forget, output, candidate.

    ``W`` is ``(4H, in)``, ``U`` is ``(4H, H)`` and ``b`` is ``(4H,)``.
    """

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        h4 = self.U.shape[0]
        if h4 % 4 or self.U.shape != (h4, h4 // 4):
            raise ShapeError(f"U must be (4H, H), got {self.U.shape}")
        if self.W.ndim != 2 or self.W.shape[0] != h4:
            raise ShapeError(f"W must be (4H, in) with 4H={h4}, got {self.W.shape}")
        if self.b.shape != (h4,):
            raise ShapeError(f"b must be ({h4},), got {self.b.shape}")

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    @property
    def in_size(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class BiLSTMParams:
    forward: LSTMParams
    backward: LSTMParams

    def __post_init__(self):
        if self.forward.hidden != self.backward.hidden:
            raise ShapeError(
                f"forward hidden {self.forward.hidden} != backward hidden {self.backward.hidden}"
            )
        if self.forward.in_size != self.backward.in_size:
            raise ShapeError("forward and backward LSTMs must share the input size")

    @property
    def hidden(self) -> int:
        return self.forward.hidden


@dataclass(frozen=True)
class AttentionParams:
    query: np.ndarray  # (H,)


@dataclass(frozen=True)
class DenseParams:
    weights: np.ndarray  # (D,)
    bias: np.ndarray  # 0-d


# --------------------------------------------------------------- convolution


def conv1d_forward(x: np.ndarray, p: Conv1DParams) -> tuple[np.ndarray, LayerCache]:
    """Zero-padded "same" convolution followed by ReLU.

    The kernel is applied as a true convolution:
    ``pre[t, o] = sum_k sum_c W[o, k, c] * x[t + pad - k, c] + b[o]``.
    """
    x3, squeeze = _batch3(x)
    B, T, C = x3.shape
    if T < 1:
        raise ShapeError("conv1d needs at least one timestep")
    if C != p.in_channels:
        raise ShapeError(f"input has {C} channels, kernels expect {p.in_channels}")
    K, O = p.kernel_size, p.out_channels
    pad = (K - 1) // 2
    xp = np.pad(x3, ((0, 0), (pad, pad), (0, 0)))
    # cols[b, t, c, j] = xp[b, t + j, c]
    cols = sliding_window_view(xp, K, axis=1).reshape(B * T, C * K)
    # window slot j pairs with kernel tap K-1-j
    wmat = p.kernels[:, ::-1, :].transpose(0, 2, 1).reshape(O, C * K)
    pre = (cols @ wmat.T + p.biases).reshape(B, T, O)
    out = np.maximum(pre, 0.0)
    cache = LayerCache("conv1d", {"cols": cols, "wmat": wmat, "pre": pre, "shape": x3.shape}, squeeze)
    return _unbatch(out, squeeze), cache


def conv1d_backward(dout: np.ndarray, cache: LayerCache, p: Conv1DParams):
    """Returns ``(dx, Conv1DParams-shaped gradient)``."""
    B, T, C = cache.data["shape"]
    K, O = p.kernel_size, p.out_channels
    pad = (K - 1) // 2
    dout3 = dout[None] if cache.squeeze else dout
    dpre = (dout3 * (cache.data["pre"] > 0)).reshape(B * T, O)
    dwmat = dpre.T @ cache.data["cols"]
    dkernels = dwmat.reshape(O, C, K).transpose(0, 2, 1)[:, ::-1, :].copy()
    dbiases = dpre.sum(axis=0)
    dcols = (dpre @ cache.data["wmat"]).reshape(B, T, C, K)
    dxp = np.zeros((B, T + 2 * pad, C))
    for j in range(K):
        dxp[:, j : j + T, :] += dcols[..., j]
    dx = dxp[:, pad : pad + T, :]
    return _unbatch(dx, cache.squeeze), Conv1DParams(dkernels, dbiases)


def maxpool1d_forward(x: np.ndarray, width: int) -> tuple[np.ndarray, LayerCache]:
    """Non-overlapping max pooling over time; the last window may be short."""
    if width < 1:
        raise ValueError(f"pool width must be >= 1, got {width}")
    x3, squeeze = _batch3(x)
    B, T, C = x3.shape
    n_out = -(-T // width)
    padded = np.full((B, n_out * width, C), -np.inf)
    padded[:, :T] = x3
    windows = padded.reshape(B, n_out, width, C)
    idx = windows.argmax(axis=2)  # first maximal index on ties
    out = np.take_along_axis(windows, idx[:, :, None, :], axis=2)[:, :, 0, :]
    cache = LayerCache("maxpool1d", {"argmax": idx, "shape": x3.shape, "width": width}, squeeze)
    return _unbatch(out, squeeze), cache


def maxpool1d_backward(dout: np.ndarray, cache: LayerCache) -> np.ndarray:
    B, T, C = cache.data["shape"]
    width = cache.data["width"]
    idx = cache.data["argmax"]
    dout3 = dout[None] if cache.squeeze else dout
    n_out = idx.shape[1]
    dw = np.zeros((B, n_out, width, C))
    np.put_along_axis(dw, idx[:, :, None, :], dout3[:, :, None, :], axis=2)
    dx = dw.reshape(B, n_out * width, C)[:, :T]
    return _unbatch(dx, cache.squeeze)


# --------------------------------------------------------------------- LSTM


def _cell(zx, h_prev, c_prev, p: LSTMParams):
    H = p.hidden
    z = zx + h_prev @ p.U.T + p.b
    i = sigmoid(z[:, :H])
    f = sigmoid(z[:, H : 2 * H])
    o = sigmoid(z[:, 2 * H : 3 * H])
    g = np.tanh(z[:, 3 * H :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (i, f, o, g, tc, h_prev, c_prev)


def _cell_backward(dh, dc, step, p: LSTMParams):
    """Backprop one step; returns ``(dz, dh_prev, dc_prev)``."""
    i, f, o, g, tc, h_prev, c_prev = step
    dct = dc + dh * o * (1.0 - tc * tc)
    dz = np.concatenate(
        [
            dct * g * i * (1.0 - i),
            dct * c_prev * f * (1.0 - f),
            dh * tc * o * (1.0 - o),
            dct * i * (1.0 - g * g),
        ],
        axis=1,
    )
    return dz, dz @ p.U, dct * f


def lstm_cell_step(x_t, h_prev, c_prev, p: LSTMParams):
    """One LSTM step; vectors may be 1-D or batched ``(B, n)``."""
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    squeeze = x_t.ndim == 1
    x2, h2, c2 = (np.atleast_2d(v) for v in (x_t, h_prev, c_prev))
    if x2.shape[1] != p.in_size:
        raise ShapeError(f"x_t has length {x2.shape[1]}, LSTM expects {p.in_size}")
    if h2.shape[1] != p.hidden or c2.shape[1] != p.hidden:
        raise ShapeError(
            f"h_prev {h2.shape} / c_prev {c2.shape} do not match hidden size {p.hidden}"
        )
    h, c, step = _cell(x2 @ p.W.T, h2, c2, p)
    cache = LayerCache("lstm_step", {"x": x2, "step": step}, squeeze)
    if squeeze:
        return h[0], c[0], cache
    return h, c, cache


def lstm_cell_step_backward(dh, dc, cache: LayerCache, p: LSTMParams):
    """Returns ``(dx, dh_prev, dc_prev, LSTMParams-shaped gradient)``."""
    dh2, dc2 = np.atleast_2d(dh), np.atleast_2d(dc)
    dz, dh_prev, dc_prev = _cell_backward(dh2, dc2, cache.data["step"], p)
    step = cache.data["step"]
    grads = LSTMParams(dz.T @ cache.data["x"], dz.T @ step[5], dz.sum(axis=0))
    dx = dz @ p.W
    if cache.squeeze:
        return dx[0], dh_prev[0], dc_prev[0], grads
    return dx, dh_prev, dc_prev, grads


def lstm_forward(x: np.ndarray, p: LSTMParams) -> tuple[np.ndarray, LayerCache]:
    """Run a unidirectional LSTM from t=0 to T-1 with zero initial state."""
    x3, squeeze = _batch3(x)
    B, T, F = x3.shape
    if F != p.in_size:
        raise ShapeError(f"input has {F} features, LSTM expects {p.in_size}")
    H = p.hidden
    zx = x3 @ p.W.T
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((B, T, H))
    steps = []
    for t in range(T):
        h, c, step = _cell(zx[:, t], h, c, p)
        hs[:, t] = h
        steps.append(step)
    cache = LayerCache("lstm", {"x": x3, "steps": steps}, squeeze)
    return _unbatch(hs, squeeze), cache


def lstm_backward(dhs: np.ndarray, cache: LayerCache, p: LSTMParams):
    x3 = cache.data["x"]
    steps = cache.data["steps"]
    B, T, _ = x3.shape
    H = p.hidden
    dhs3 = dhs[None] if cache.squeeze else dhs
    dZ = np.empty((B, T, 4 * H))
    dU = np.zeros_like(p.U)
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    for t in reversed(range(T)):
        dz, dh, dc = _cell_backward(dhs3[:, t] + dh, dc, steps[t], p)
        dZ[:, t] = dz
        dU += dz.T @ steps[t][5]
    dZ2 = dZ.reshape(B * T, 4 * H)
    grads = LSTMParams(dZ2.T @ x3.reshape(B * T, -1), dU, dZ2.sum(axis=0))
    dx = dZ @ p.W
    return _unbatch(dx, cache.squeeze), grads


def bilstm_forward(x: np.ndarray, p: BiLSTMParams) -> tuple[np.ndarray, LayerCache]:
    """Bidirectional LSTM whose output row t is ``h_fwd[t] + h_bwd[t]``."""
    x3, squeeze = _batch3(x)
    if x3.shape[1] < 1:
        raise ShapeError("BiLSTM needs at least one timestep")
    hf, cf = lstm_forward(x3, p.forward)
    hb, cb = lstm_forward(x3[:, ::-1], p.backward)
    out = hf + hb[:, ::-1]
    return _unbatch(out, squeeze), LayerCache("bilstm", {"fwd": cf, "bwd": cb}, squeeze)


def bilstm_backward(dout: np.ndarray, cache: LayerCache, p: BiLSTMParams):
    dout3 = dout[None] if cache.squeeze else dout
    dxf, gf = lstm_backward(dout3, cache.data["fwd"], p.forward)
    dxb, gb = lstm_backward(dout3[:, ::-1], cache.data["bwd"], p.backward)
    dx = dxf + dxb[:, ::-1]
    return _unbatch(dx, cache.squeeze), BiLSTMParams(gf, gb)


# ----------------------------------------------------------- pooling heads


def attention_pool(h: np.ndarray, p: AttentionParams):
    """Softmax-weighted average of the rows of ``h`` scored against a query.

    Returns ``(context, weights, cache)``.
    """
    h3, squeeze = _batch3(h)
    if h3.shape[1] < 1:
        raise ShapeError("attention needs at least one timestep")
    if h3.shape[2] != p.query.shape[0]:
        raise ShapeError(f"hidden width {h3.shape[2]} != query length {p.query.shape[0]}")
    weights = softmax(h3 @ p.query, axis=1)
    context = np.einsum("bt,bth->bh", weights, h3)
    cache = LayerCache("attention", {"h": h3, "weights": weights}, squeeze)
    return _unbatch(context, squeeze), _unbatch(weights, squeeze), cache


def attention_backward(dcontext: np.ndarray, cache: LayerCache, p: AttentionParams):
    h3 = cache.data["h"]
    w = cache.data["weights"]
    dctx = np.atleast_2d(dcontext)
    dh = w[:, :, None] * dctx[:, None, :]
    dw = np.einsum("bth,bh->bt", h3, dctx)
    dscore = w * (dw - (w * dw).sum(axis=1, keepdims=True))
    dh += dscore[:, :, None] * p.query
    dquery = np.einsum("bt,bth->h", dscore, h3)
    return _unbatch(dh, cache.squeeze), AttentionParams(dquery)


def last_step_pool(h: np.ndarray) -> tuple[np.ndarray, LayerCache]:
    h3, squeeze = _batch3(h)
    return _unbatch(h3[:, -1], squeeze), LayerCache("last_step", {"shape": h3.shape}, squeeze)


def last_step_backward(dcontext: np.ndarray, cache: LayerCache) -> np.ndarray:
    dh = np.zeros(cache.data["shape"])
    dh[:, -1] = np.atleast_2d(dcontext)
    return _unbatch(dh, cache.squeeze)


def mean_pool(h: np.ndarray) -> tuple[np.ndarray, LayerCache]:
    h3, squeeze = _batch3(h)
    return _unbatch(h3.mean(axis=1), squeeze), LayerCache("mean", {"shape": h3.shape}, squeeze)


def mean_pool_backward(dcontext: np.ndarray, cache: LayerCache) -> np.ndarray:
    B, T, D = cache.data["shape"]
    dh = np.broadcast_to(np.atleast_2d(dcontext)[:, None, :] / T, (B, T, D)).copy()
    return _unbatch(dh, cache.squeeze)


# -------------------------------------------------------------------- head


def dense_sigmoid(h: np.ndarray, p: DenseParams):
    """Probability ``sigmoid(W_o . h + b_o)``; returns ``(prob, cache)``."""
    h = np.asarray(h, dtype=np.float64)
    squeeze = h.ndim == 1
    h2 = np.atleast_2d(h)
    if h2.shape[1] != p.weights.shape[0]:
        raise ShapeError(f"input length {h2.shape[1]} != weight length {p.weights.shape[0]}")
    y = sigmoid(h2 @ p.weights + p.bias)
    cache = LayerCache("dense", {"h": h2, "y": y}, squeeze)
    if squeeze:
        return float(y[0]), cache
    return y, cache


def dense_sigmoid_backward(dy, cache: LayerCache, p: DenseParams):
    y = cache.data["y"]
    dz = np.atleast_1d(np.asarray(dy, dtype=np.float64)) * y * (1.0 - y)
    h2 = cache.data["h"]
    grads = DenseParams(h2.T @ dz, np.asarray(dz.sum()))
    dh = dz[:, None] * p.weights
    return _unbatch(dh, cache.squeeze), grads
