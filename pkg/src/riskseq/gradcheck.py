"""Central finite differences as an independent check on backprop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import network
from .network import ConvBlock, HybridConfig, ModelParams
from .tensor import make_rng
from .training import bce_loss


def central_difference(f, theta: float, h: float = 1e-5) -> float:
    if not h > 0:
        raise ValueError(f"step must be > 0, got {h}")
    return (f(theta + h) - f(theta - h)) / (2.0 * h)


def sample_loss(x, label, params: ModelParams, clamp: float = 1e-7) -> float:
    y_hat, _ = network.hybrid_forward(x, params)
    return bce_loss(y_hat, label, clamp)[0]


def analytic_gradient(x, label, params: ModelParams, clamp: float = 1e-7) -> ModelParams:
    y_hat, cache = network.hybrid_forward(x, params)
    _, dy = bce_loss(y_hat, label, clamp)
    return network.hybrid_backward(cache, params, dy)


def finite_difference_gradient(x, label, params: ModelParams, index: tuple[str, int],
                               h: float = 1e-5, clamp: float = 1e-7) -> float:
    """``(L(theta + h e_i) - L(theta - h e_i)) / 2h`` for one scalar parameter.

    ``index`` is ``(tensor name, flat position)`` in :meth:`ModelParams.tensors`.
    """
    name, pos = index
    names = [n for n, _ in params.tensors()]
    k = names.index(name)

    def loss_at(value: float) -> float:
        arrays = [a.copy() for _, a in params.tensors()]
        arrays[k].reshape(-1)[pos] = value
        return sample_loss(x, label, params.with_tensors(arrays), clamp)

    theta = float(params.tensors()[k][1].reshape(-1)[pos])
    return central_difference(loss_at, theta, h)


def relative_error(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


@dataclass(frozen=True)
class TensorCheck:
    name: str
    size: int
    worst: float


def check_gradients(x, label, params: ModelParams, h: float = 1e-5,
                    gradient_fn=analytic_gradient) -> list[TensorCheck]:
    """Worst relative error per tensor between ``gradient_fn`` and finite differences."""
    grads = dict(gradient_fn(x, label, params).tensors())
    out = []
    for name, arr in params.tensors():
        fd = np.array(
            [finite_difference_gradient(x, label, params, (name, i), h) for i in range(arr.size)]
        )
        err = relative_error(grads[name].reshape(-1), fd)
        out.append(TensorCheck(name, arr.size, float(err.max())))
    return out


def small_network(seed: int = 0, T: int = 8, F: int = 4, hidden: int = 6,
                  channels: int = 3, blocks: int = 2, head: str = "attention"):
    """A seeded ``(x, label, params)`` instance for gradient checking."""
    rng = make_rng(seed)
    config = HybridConfig(
        conv_blocks=tuple(ConvBlock(channels, 3, 2) for _ in range(blocks)),
        hidden=hidden,
        head=head,
    )
    params = network.init_params(config, F, rng)
    # jitter everything so zero-initialised biases sit at a generic point
    params = params.map(lambda a: a + 0.1 * rng.standard_normal(a.shape))
    x = rng.standard_normal((T, F))
    label = int(rng.integers(0, 2))
    return x, label, params
