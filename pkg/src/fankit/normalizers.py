"""Reversible instance normalizers wrapped around a forecasting backbone.

Four interchangeable strategies:

* frequency-adaptive: remove each window's own top-K Fourier components,
  forecast the residual, and add back an MLP prediction of how the removed
  components evolve over the horizon,
* frequency-fixed: same reconstruction but with one global bin set fitted on
  training data (ablation for the instance-wise selection),
* per-instance z-score (mean/std removed and reinstated),
* identity (backbone alone).

``normalize`` never mutates its input; all state needed to invert the
transform travels in the returned state object.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import PredictorParams, predictor_backward, predictor_forward
from .spectral import _topk_bins_batch, frl_decompose_batch

__all__ = [
    "FanState",
    "RevinState",
    "ReversibleNormalizer",
    "FanNormalizer",
    "FanFixedNormalizer",
    "RevinNormalizer",
    "IdentityNormalizer",
    "fan_normalize",
    "fan_fixed_normalize",
    "fan_denormalize",
    "compute_y_non",
    "fit_global_mask",
    "revin_normalize",
    "revin_denormalize",
    "identity_normalize",
    "identity_denormalize",
    "make_normalizer",
]

NORMALIZER_KINDS = ("fan", "fan-fixed", "revin", "none")


@dataclass
class FanState:
    """Carries the removed components from normalize to denormalize.

    ``mask`` holds the selected bin indices as an int array: ``(D, K)`` for a
    single window, ``(n, D, K)`` for a batch (``(D, K)`` shared by all
    instances in the fixed-mask variant).  ``y_non_hat`` is filled by
    denormalize so the prior loss can read it.
    """

    x_non: np.ndarray
    x: np.ndarray
    mask: np.ndarray
    y_non_hat: np.ndarray | None = None
    pred_cache: dict | None = field(default=None, repr=False)


@dataclass
class RevinState:
    mean: np.ndarray  # (..., 1, D)
    std: np.ndarray  # (..., 1, D), floored at eps


def _check_window_array(X: np.ndarray, name: str = "X") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim not in (2, 3):
        raise ValueError(f"{name} must be (time, channels) or (batch, time, channels)")
    if X.shape[-2] < 2:
        raise ValueError(f"{name} needs at least 2 time steps, got {X.shape[-2]}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} must be finite")
    return X


# ---------------------------------------------------------------------------
# Frequency-adaptive normalization
# ---------------------------------------------------------------------------


def fan_normalize(X: np.ndarray, k: int):
    """Split ``X`` into residual and top-K reconstruction; returns (X_res, state)."""
    X = _check_window_array(X)
    single = X.ndim == 2
    x_non, x_res, bins = frl_decompose_batch(X[None] if single else X, k)
    if single:
        x_non, x_res, bins = x_non[0], x_res[0], bins[0]
    return x_res, FanState(x_non=x_non, x=X.copy(), mask=bins)


def fit_global_mask(train_windows, k: int) -> np.ndarray:
    """Per-channel top-K bins of the training-set-average amplitude, shape (D, K)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    stack = _check_window_array(np.asarray(train_windows, dtype=np.float64), "train_windows")
    if stack.ndim != 3 or stack.shape[0] < 1:
        raise ValueError("train_windows must be a nonempty stack of (time, channels) windows")
    length = stack.shape[1]
    mean_amp = np.abs(np.fft.rfft(stack, axis=1)).mean(axis=0) / length  # (B, D)
    return _topk_bins_batch(mean_amp.T, k)


def fan_fixed_normalize(X: np.ndarray, global_mask: np.ndarray):
    """Like :func:`fan_normalize` but every instance keeps the same fixed bins."""
    X = _check_window_array(X)
    mask = np.asarray(global_mask, dtype=np.int64)
    if mask.ndim != 2:
        raise ValueError("global_mask must have shape (channels, k)")
    single = X.ndim == 2
    batch = X[None] if single else X
    n, length, channels = batch.shape
    if mask.shape[0] != channels:
        raise ValueError(f"global_mask has {mask.shape[0]} channels, window has {channels}")
    bins = length // 2 + 1
    if mask.size and (mask.min() < 0 or mask.max() >= bins):
        raise IndexError(f"global_mask indices out of range [0, {bins})")
    keep = np.zeros((channels, bins), dtype=bool)
    np.put_along_axis(keep, mask, True, axis=-1)
    Z = np.fft.rfft(batch, axis=1)
    x_non = np.fft.irfft(np.where(keep.T[None], Z, 0.0), n=length, axis=1)
    x_res = batch - x_non
    if single:
        x_non, x_res = x_non[0], x_res[0]
    return x_res, FanState(x_non=x_non, x=X.copy(), mask=mask)


def _tile_to_horizon(rows: np.ndarray, horizon: int) -> np.ndarray:
    """Periodically extend (..., L) rows to (..., H)."""
    length = rows.shape[-1]
    reps = -(-horizon // length)
    return np.concatenate([rows] * reps, axis=-1)[..., :horizon]


def fan_denormalize(
    y_res_hat: np.ndarray,
    state: FanState,
    predictor: PredictorParams | None,
    horizon: int | None = None,
    training: bool = False,
) -> np.ndarray:
    """Add the predicted horizon components back onto the residual forecast.

    With a predictor, the horizon estimate comes from the MLP applied per
    channel (shared weights).  Without one (the "reconstruct directly"
    ablation) the input's own components are periodically tiled to the
    horizon.  The estimate is cached on ``state.y_non_hat``.
    """
    y_res_hat = np.asarray(y_res_hat, dtype=np.float64)
    if y_res_hat.ndim != state.x.ndim:
        raise ValueError(
            f"y_res_hat is {y_res_hat.ndim}-d but the normalized input was {state.x.ndim}-d"
        )
    if y_res_hat.shape[-1] != state.x.shape[-1]:
        raise ValueError(
            f"channel count {y_res_hat.shape[-1]} != normalized input {state.x.shape[-1]}"
        )
    x_non_cf = np.moveaxis(state.x_non, -1, -2)  # (..., D, L)
    if predictor is None:
        if horizon is None:
            horizon = y_res_hat.shape[-2]
        y_non_cf = _tile_to_horizon(x_non_cf, horizon)
    else:
        cache: dict | None = {} if training else None
        x_cf = np.moveaxis(state.x, -1, -2)
        y_non_cf = predictor_forward(predictor, x_non_cf, x_cf, cache)
        state.pred_cache = cache
    y_non_hat = np.moveaxis(y_non_cf, -1, -2)
    if y_non_hat.shape != y_res_hat.shape:
        raise ValueError(
            f"horizon estimate shape {y_non_hat.shape} != y_res_hat shape {y_res_hat.shape}"
        )
    state.y_non_hat = y_non_hat
    return y_res_hat + y_non_hat


def compute_y_non(Y: np.ndarray, k: int) -> np.ndarray:
    """Ground-truth horizon components: the horizon window's own top-K part."""
    Y = _check_window_array(Y, "Y")
    single = Y.ndim == 2
    y_non, _, _ = frl_decompose_batch(Y[None] if single else Y, k)
    return y_non[0] if single else y_non


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def revin_normalize(X: np.ndarray, eps: float = 1e-5):
    """Per-instance, per-channel z-score over the window; returns (X_norm, state)."""
    X = _check_window_array(X)
    mean = X.mean(axis=-2, keepdims=True)
    std = np.maximum(X.std(axis=-2, keepdims=True), eps)
    return (X - mean) / std, RevinState(mean=mean, std=std)


def revin_denormalize(y_norm_hat: np.ndarray, state: RevinState) -> np.ndarray:
    y_norm_hat = np.asarray(y_norm_hat, dtype=np.float64)
    return y_norm_hat * state.std + state.mean


def identity_normalize(X: np.ndarray):
    X = _check_window_array(X)
    return X.copy(), None


def identity_denormalize(y_hat: np.ndarray, state=None) -> np.ndarray:
    return np.asarray(y_hat, dtype=np.float64)


# ---------------------------------------------------------------------------
# Class wrappers used by the training pipeline
# ---------------------------------------------------------------------------


class ReversibleNormalizer:
    """Contract: ``normalize`` then ``denormalize`` bracket the backbone."""

    has_predictor = False

    def normalize(self, X: np.ndarray):
        raise NotImplementedError

    def denormalize(self, y_res_hat: np.ndarray, state, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_y_hat: np.ndarray, grad_y_non_extra, state) -> np.ndarray:
        """Route output gradients to the normalizer's parameters (if any).

        Returns the gradient w.r.t. the backbone output.
        """
        return grad_y_hat

    def component_target(self, Y: np.ndarray) -> np.ndarray:
        """Ground truth for the horizon-component loss (predictor variants only)."""
        raise NotImplementedError

    def trainable_parameters(self) -> list:
        return []


class FanNormalizer(ReversibleNormalizer):
    """Instance-wise top-K removal with a learned horizon predictor.

    ``predictor=None`` selects the ablation that tiles the input components
    to the horizon instead of predicting them.
    """

    def __init__(self, k: int, predictor: PredictorParams | None, horizon: int | None = None):
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        self.k = k
        self.predictor = predictor
        self.horizon = horizon if predictor is None else predictor.horizon

    @property
    def has_predictor(self) -> bool:
        return self.predictor is not None

    def normalize(self, X):
        return fan_normalize(X, self.k)

    def denormalize(self, y_res_hat, state, training=False):
        return fan_denormalize(
            y_res_hat, state, self.predictor, horizon=self.horizon, training=training
        )

    def backward(self, grad_y_hat, grad_y_non_extra, state):
        if self.predictor is not None:
            if state.pred_cache is None:
                raise RuntimeError("backward requires denormalize(training=True)")
            grad = grad_y_hat if grad_y_non_extra is None else grad_y_hat + grad_y_non_extra
            predictor_backward(self.predictor, state.pred_cache, np.moveaxis(grad, -1, -2))
        return grad_y_hat

    def component_target(self, Y):
        return compute_y_non(Y, self.k)

    def trainable_parameters(self):
        return self.predictor.trainable_layers() if self.predictor else []


class FanFixedNormalizer(FanNormalizer):
    """Frequency removal with one global mask for every instance."""

    def __init__(self, global_mask: np.ndarray, predictor, horizon: int | None = None):
        super().__init__(k=max(1, int(np.asarray(global_mask).shape[-1])), predictor=predictor,
                         horizon=horizon)
        self.global_mask = np.asarray(global_mask, dtype=np.int64)

    def normalize(self, X):
        return fan_fixed_normalize(X, self.global_mask)

    def component_target(self, Y):
        # Consistent with what denormalize adds back: the fixed-mask part of Y.
        _, state = fan_fixed_normalize(Y, self.global_mask)
        return state.x_non


class RevinNormalizer(ReversibleNormalizer):
    def __init__(self, eps: float = 1e-5):
        self.eps = eps

    def normalize(self, X):
        return revin_normalize(X, self.eps)

    def denormalize(self, y_norm_hat, state, training=False):
        return revin_denormalize(y_norm_hat, state)

    def backward(self, grad_y_hat, grad_y_non_extra, state):
        return grad_y_hat * state.std


class IdentityNormalizer(ReversibleNormalizer):
    def normalize(self, X):
        return identity_normalize(X)

    def denormalize(self, y_hat, state, training=False):
        return identity_denormalize(y_hat, state)


def make_normalizer(kind: str, **kwargs) -> ReversibleNormalizer:
    if kind == "fan":
        return FanNormalizer(kwargs["k"], kwargs.get("predictor"), kwargs.get("horizon"))
    if kind == "fan-fixed":
        return FanFixedNormalizer(
            kwargs["global_mask"], kwargs.get("predictor"), kwargs.get("horizon")
        )
    if kind == "revin":
        return RevinNormalizer(kwargs.get("eps", 1e-5))
    if kind == "none":
        return IdentityNormalizer()
    raise ValueError(f"unknown normalizer kind {kind!r}; choose from {NORMALIZER_KINDS}")
