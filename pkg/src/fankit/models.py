"""Small differentiable building blocks with hand-written reverse-mode gradients.

Everything here operates on plain numpy arrays.  Layers carry their own
gradient buffers; ``*_backward`` functions accumulate into them, so callers
zero the buffers between optimization steps.  Inputs may carry arbitrary
leading batch axes; the trailing axis is the feature dimension.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "DenseLayer",
    "PredictorParams",
    "BackboneParams",
    "dense_forward",
    "dense_backward",
    "relu",
    "relu_backward",
    "init_predictor",
    "predictor_forward",
    "predictor_backward",
    "init_backbone",
    "backbone_forward",
    "backbone_backward",
    "save_checkpoint",
    "load_checkpoint",
]

BACKBONE_KINDS = ("dlinear", "naive", "zero")


# ---------------------------------------------------------------------------
# Dense layer
# ---------------------------------------------------------------------------


@dataclass
class DenseLayer:
    """Affine map ``y = W x + b`` with gradient accumulators."""

    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    grad_weight: np.ndarray = field(repr=False, default=None)
    grad_bias: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ValueError("weight must be (out, in) and bias (out,)")
        if self.bias.shape[0] != self.weight.shape[0]:
            raise ValueError(
                f"bias size {self.bias.shape[0]} != output size {self.weight.shape[0]}"
            )
        if self.grad_weight is None:
            self.grad_weight = np.zeros_like(self.weight)
        if self.grad_bias is None:
            self.grad_bias = np.zeros_like(self.bias)

    @classmethod
    def create(cls, n_in: int, n_out: int, rng: np.random.Generator) -> "DenseLayer":
        """Weights uniform in +-1/sqrt(n_in), biases zero."""
        bound = 1.0 / np.sqrt(n_in)
        return cls(weight=rng.uniform(-bound, bound, size=(n_out, n_in)), bias=np.zeros(n_out))

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]

    def zero_grad(self) -> None:
        self.grad_weight.fill(0.0)
        self.grad_bias.fill(0.0)


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.n_in:
        raise ValueError(f"input size {x.shape[-1]} != layer input size {layer.n_in}")
    return x @ layer.weight.T + layer.bias


def dense_backward(layer: DenseLayer, x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Accumulate parameter gradients and return the gradient w.r.t. ``x``."""
    x = np.asarray(x, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if x.shape[-1] != layer.n_in:
        raise ValueError(f"input size {x.shape[-1]} != layer input size {layer.n_in}")
    if grad_out.shape[-1] != layer.n_out:
        raise ValueError(f"grad size {grad_out.shape[-1]} != layer output size {layer.n_out}")
    if grad_out.shape[:-1] != x.shape[:-1]:
        raise ValueError("grad_out batch shape does not match input batch shape")
    g2 = grad_out.reshape(-1, layer.n_out)
    x2 = x.reshape(-1, layer.n_in)
    layer.grad_weight += g2.T @ x2
    layer.grad_bias += g2.sum(axis=0)
    return grad_out @ layer.weight


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # Subgradient 0 at x == 0.
    return np.where(x > 0.0, grad_out, 0.0)


# ---------------------------------------------------------------------------
# Horizon predictor for the removed frequency components
# ---------------------------------------------------------------------------


@dataclass
class PredictorParams:
    """MLP that maps (principal components, raw window) to their horizon values.

    The first layer embeds the principal components; its activation is then
    concatenated with the raw window before the remaining layers.  Parameters
    are shared across channels.  ``layers`` holds the dense maps in order; the
    default depth is three (two hidden activations).
    """

    layers: list
    lookback: int
    horizon: int

    @property
    def layer1(self) -> DenseLayer:
        return self.layers[0]

    @property
    def layer2(self) -> DenseLayer:
        return self.layers[1]

    @property
    def layer3(self) -> DenseLayer:
        return self.layers[2]

    def trainable_layers(self) -> list:
        return list(self.layers)

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()


def init_predictor(
    lookback: int,
    horizon: int,
    hidden_sizes=(64, 128),
    rng: np.random.Generator | None = None,
) -> PredictorParams:
    if rng is None:
        rng = np.random.default_rng(0)
    if len(hidden_sizes) < 2:
        raise ValueError("predictor needs at least two hidden sizes")
    layers = [DenseLayer.create(lookback, hidden_sizes[0], rng)]
    layers.append(DenseLayer.create(hidden_sizes[0] + lookback, hidden_sizes[1], rng))
    for h_prev, h_next in zip(hidden_sizes[1:], hidden_sizes[2:]):
        layers.append(DenseLayer.create(h_prev, h_next, rng))
    layers.append(DenseLayer.create(hidden_sizes[-1], horizon, rng))
    return PredictorParams(layers=layers, lookback=lookback, horizon=horizon)


def predictor_forward(
    params: PredictorParams,
    x_non: np.ndarray,
    x: np.ndarray,
    cache: dict | None = None,
) -> np.ndarray:
    """Per-channel horizon estimate of the removed components.

    ``x_non`` and ``x`` are (..., lookback) arrays of matching batch shape;
    pass a dict as ``cache`` to retain activations for the backward pass.
    """
    x_non = np.asarray(x_non, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_non.shape != x.shape:
        raise ValueError(f"x_non shape {x_non.shape} != x shape {x.shape}")
    if x.shape[-1] != params.lookback:
        raise ValueError(f"window length {x.shape[-1]} != configured {params.lookback}")

    pre1 = dense_forward(params.layers[0], x_non)
    h1 = relu(pre1)
    concat = np.concatenate([h1, x], axis=-1)

    inputs = [x_non, concat]
    pres = [pre1]
    h = concat
    for layer in params.layers[1:-1]:
        pre = dense_forward(layer, h)
        pres.append(pre)
        h = relu(pre)
        inputs.append(h)
    out = dense_forward(params.layers[-1], h)

    if cache is not None:
        cache["inputs"] = inputs
        cache["pres"] = pres
        cache["x"] = x
    return out


def predictor_backward(
    params: PredictorParams, cache: dict, grad_out: np.ndarray
):
    """Accumulate parameter gradients; returns ``(grad_x_non, grad_x)``."""
    if not cache or "inputs" not in cache:
        raise RuntimeError("predictor_backward requires the cache of a prior forward pass")
    inputs, pres = cache["inputs"], cache["pres"]
    grad = np.asarray(grad_out, dtype=np.float64)

    grad = dense_backward(params.layers[-1], inputs[-1], grad)
    for layer, inp, pre in zip(params.layers[-2:0:-1], inputs[-2:0:-1], pres[:0:-1]):
        grad = relu_backward(pre, grad)
        grad = dense_backward(layer, inp, grad)

    h1_size = params.layers[0].n_out
    grad_h1 = grad[..., :h1_size]
    grad_x = grad[..., h1_size:].copy()
    grad_pre1 = relu_backward(pres[0], grad_h1)
    grad_x_non = dense_backward(params.layers[0], inputs[0], grad_pre1)
    return grad_x_non, grad_x


# ---------------------------------------------------------------------------
# Forecasting backbones
# ---------------------------------------------------------------------------


@dataclass
class BackboneParams:
    """Residual forecaster: linear trend/remainder maps, persistence, or zero."""

    kind: str
    lookback: int
    horizon: int
    trend_linear: DenseLayer | None = None
    seasonal_linear: DenseLayer | None = None
    kernel: int = 25

    def trainable_layers(self) -> list:
        if self.kind == "dlinear":
            return [self.trend_linear, self.seasonal_linear]
        return []

    def zero_grad(self) -> None:
        for layer in self.trainable_layers():
            layer.zero_grad()


@lru_cache(maxsize=16)
def _moving_average_matrix(length: int, kernel: int) -> np.ndarray:
    """Row i averages the kernel-wide neighborhood of i with replicated ends."""
    half = (kernel - 1) // 2
    mat = np.zeros((length, length))
    for i in range(length):
        idx = np.clip(np.arange(i - half, i + half + 1), 0, length - 1)
        np.add.at(mat[i], idx, 1.0 / kernel)
    return mat


def init_backbone(
    kind: str,
    lookback: int,
    horizon: int,
    kernel: int = 25,
    rng: np.random.Generator | None = None,
) -> BackboneParams:
    if kind not in BACKBONE_KINDS:
        raise ValueError(f"unknown backbone kind {kind!r}; choose from {BACKBONE_KINDS}")
    if kind != "dlinear":
        return BackboneParams(kind=kind, lookback=lookback, horizon=horizon)
    if kernel % 2 == 0 or kernel < 1 or kernel > lookback:
        raise ValueError(f"moving-average kernel must be odd and <= lookback, got {kernel}")
    if rng is None:
        rng = np.random.default_rng(0)
    return BackboneParams(
        kind="dlinear",
        lookback=lookback,
        horizon=horizon,
        trend_linear=DenseLayer.create(lookback, horizon, rng),
        seasonal_linear=DenseLayer.create(lookback, horizon, rng),
        kernel=kernel,
    )


def _to_channel_rows(X: np.ndarray):
    """(..., L, D) -> (rows, L) with a function to undo the reshape."""
    lead = X.shape[:-2]
    length, channels = X.shape[-2], X.shape[-1]
    rows = np.moveaxis(X, -1, -2).reshape(-1, length)

    def restore(rows_out: np.ndarray, out_len: int) -> np.ndarray:
        return np.moveaxis(rows_out.reshape(lead + (channels, out_len)), -1, -2)

    return rows, restore


def backbone_forward(
    params: BackboneParams, x_res: np.ndarray, cache: dict | None = None
) -> np.ndarray:
    """Map a (..., L, D) residual window to its (..., H, D) forecast."""
    x_res = np.asarray(x_res, dtype=np.float64)
    if x_res.shape[-2] != params.lookback:
        raise ValueError(f"window length {x_res.shape[-2]} != configured {params.lookback}")

    if params.kind == "zero":
        return np.zeros(x_res.shape[:-2] + (params.horizon, x_res.shape[-1]))
    if params.kind == "naive":
        last = x_res[..., -1:, :]
        return np.repeat(last, params.horizon, axis=-2)

    rows, restore = _to_channel_rows(x_res)
    ma = _moving_average_matrix(params.lookback, params.kernel)
    trend = rows @ ma.T
    seasonal = rows - trend
    out_rows = dense_forward(params.trend_linear, trend) + dense_forward(
        params.seasonal_linear, seasonal
    )
    if cache is not None:
        cache["trend"] = trend
        cache["seasonal"] = seasonal
        cache["restore_info"] = (x_res.shape, rows.shape)
    return restore(out_rows, params.horizon)


def backbone_backward(
    params: BackboneParams, cache: dict, grad_out: np.ndarray
) -> np.ndarray:
    """Accumulate backbone gradients; returns the gradient w.r.t. the input."""
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if params.kind == "zero":
        return np.zeros(grad_out.shape[:-2] + (params.lookback, grad_out.shape[-1]))
    if params.kind == "naive":
        grad_in = np.zeros(grad_out.shape[:-2] + (params.lookback, grad_out.shape[-1]))
        grad_in[..., -1, :] = grad_out.sum(axis=-2)
        return grad_in

    if not cache or "trend" not in cache:
        raise RuntimeError("backbone_backward requires the cache of a prior forward pass")
    g_rows, restore = _to_channel_rows(grad_out)
    g_trend = dense_backward(params.trend_linear, cache["trend"], g_rows)
    g_seasonal = dense_backward(params.seasonal_linear, cache["seasonal"], g_rows)
    ma = _moving_average_matrix(params.lookback, params.kernel)
    grad_rows = g_trend @ ma + g_seasonal - g_seasonal @ ma
    return restore(grad_rows, params.lookback)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, arrays: dict, meta: dict | None = None) -> None:
    """Write a key -> float64 tensor map (plus JSON metadata) to ``path``.

    The npz container stores raw IEEE-754 bytes, so a save/load round trip is
    bitwise exact.
    """
    payload = {name: np.asarray(arr) for name, arr in arrays.items()}
    payload["__meta__"] = np.frombuffer(
        json.dumps(meta or {}, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(arrays, meta)``."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        arrays = {name: data[name] for name in data.files if name != "__meta__"}
    return arrays, meta
