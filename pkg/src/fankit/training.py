"""Windowed datasets, the dual loss, Adam, the training loop, and evaluation.

The raw index range splits chronologically by ratio; windows never straddle a
split boundary, and the z-score scaler is fitted on the training region only.
Training minimizes the forecast error plus, when a component predictor is
present, the error of the predicted horizon components (both mean squared,
summed unweighted).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import (
    BackboneParams,
    backbone_backward,
    backbone_forward,
    init_backbone,
    init_predictor,
)
from .normalizers import (
    ReversibleNormalizer,
    fit_global_mask,
    make_normalizer,
)
from .spectral import select_k_by_amplitude_rule

__all__ = [
    "TrainConfig",
    "WindowPair",
    "WindowSet",
    "Scaler",
    "AdamState",
    "Metrics",
    "Pipeline",
    "split_bounds",
    "make_windows",
    "dual_loss",
    "adam_step",
    "train",
    "evaluate",
]


@dataclass
class TrainConfig:
    """Run settings; defaults follow the package's standard protocol."""

    lookback: int = 96
    horizon: int = 96
    k: int | str = "auto"  # "auto" applies the 10%-of-peak amplitude rule
    k_ratio: float = 0.1
    batch_size: int = 32
    learning_rate: float = 3e-4
    max_epochs: int = 100
    patience: int = 5
    seed: int = 1
    normalizer: str = "fan"  # fan | fan-fixed | revin | none
    backbone: str = "dlinear"  # dlinear | naive | zero
    predict_components: bool = True  # False tiles input components (ablation)
    hidden_sizes: tuple = (64, 128)
    ma_kernel: int = 25
    split_ratios: tuple = (0.7, 0.2, 0.1)

    def validate(self) -> None:
        if self.lookback < 2:
            raise ValueError(f"lookback must be >= 2, got {self.lookback}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")
        if not 0 < self.patience <= self.max_epochs:
            raise ValueError("patience must lie in [1, max_epochs]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.k != "auto" and (not isinstance(self.k, int) or self.k < 1):
            raise ValueError(f"k must be 'auto' or a positive integer, got {self.k!r}")

    def to_dict(self) -> dict:
        return {
            "lookback": self.lookback,
            "horizon": self.horizon,
            "k": self.k,
            "k_ratio": self.k_ratio,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "seed": self.seed,
            "normalizer": self.normalizer,
            "backbone": self.backbone,
            "predict_components": self.predict_components,
            "hidden_sizes": list(self.hidden_sizes),
            "ma_kernel": self.ma_kernel,
            "split_ratios": list(self.split_ratios),
        }


# ---------------------------------------------------------------------------
# Windowing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowPair:
    """One supervised example: ``x`` precedes the anchor, ``y`` starts at it."""

    x: np.ndarray  # (L, D)
    y: np.ndarray  # (H, D)
    t: int  # first forecast index in the source frame


class WindowSet:
    """Stride-1 windows confined to one chronological region of a frame."""

    def __init__(self, values: np.ndarray, anchors: np.ndarray, lookback: int, horizon: int):
        self.values = values
        self.anchors = np.asarray(anchors, dtype=np.int64)
        self.lookback = lookback
        self.horizon = horizon

    def __len__(self) -> int:
        return self.anchors.shape[0]

    def __getitem__(self, i: int) -> WindowPair:
        t = int(self.anchors[i])
        return WindowPair(
            x=self.values[t - self.lookback : t].copy(),
            y=self.values[t : t + self.horizon].copy(),
            t=t,
        )

    def batch(self, idx) -> tuple:
        """Gather (X, Y) arrays of shape (n, L, D) / (n, H, D) for anchor rows ``idx``."""
        a = self.anchors[idx]
        x = self.values[a[:, None] + np.arange(-self.lookback, 0)[None, :]]
        y = self.values[a[:, None] + np.arange(self.horizon)[None, :]]
        return x, y

    def x_stack(self) -> np.ndarray:
        """All input windows as one (n, L, D) array."""
        x, _ = self.batch(np.arange(len(self)))
        return x


def split_bounds(n: int, split_ratios=(0.7, 0.2, 0.1)) -> tuple:
    """Indices (train_end, val_end) of the chronological ratio split."""
    ratios = tuple(float(r) for r in split_ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"split_ratios must be 3 positive numbers, got {split_ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split_ratios must sum to 1, got {split_ratios}")
    n_train = int(n * ratios[0])
    n_val = int(n * ratios[1])
    if n_train < 1 or n_val < 1 or n - n_train - n_val < 1:
        raise ValueError(f"series of {n} rows leaves an empty split under {split_ratios}")
    return n_train, n_train + n_val


def make_windows(frame, lookback: int, horizon: int, split_ratios=(0.7, 0.2, 0.1)):
    """Chronological train/val/test window sets with no cross-split leakage.

    A window anchored at ``t`` uses rows ``[t-L, t)`` as input and ``[t, t+H)``
    as target; both must lie inside the window's own split region.
    """
    values = np.asarray(getattr(frame, "values", frame), dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("frame values must be a 2-d (time, channels) matrix")
    if not np.all(np.isfinite(values)):
        raise ValueError("frame values must be finite")
    n = values.shape[0]
    if n < lookback + horizon + 10:
        raise ValueError(
            f"series too short: N={n} rows cannot support lookback L={lookback} "
            f"plus horizon H={horizon} (need N >= L + H + 10)"
        )
    train_end, val_end = split_bounds(n, split_ratios)
    sets = []
    for name, (a, b) in (
        ("train", (0, train_end)),
        ("val", (train_end, val_end)),
        ("test", (val_end, n)),
    ):
        anchors = np.arange(a + lookback, b - horizon + 1)
        # Evaluation splits may come out empty (callers decide whether that is
        # fatal); training cannot proceed without training windows.
        if anchors.size == 0 and name == "train":
            raise ValueError(
                f"train split [{a}, {b}) is too short for lookback {lookback} "
                f"and horizon {horizon}"
            )
        sets.append(WindowSet(values, anchors, lookback, horizon))
    return tuple(sets)


@dataclass
class Scaler:
    """Per-channel z-score statistics fitted on the training region only."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, train_values: np.ndarray, floor: float = 1e-8) -> "Scaler":
        train_values = np.asarray(train_values, dtype=np.float64)
        return cls(
            mean=train_values.mean(axis=0),
            std=np.maximum(train_values.std(axis=0), floor),
        )

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse_transform(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


# ---------------------------------------------------------------------------
# Loss and optimizer
# ---------------------------------------------------------------------------


def dual_loss(y_hat, y, y_non_hat, y_non):
    """Forecast MSE plus horizon-component MSE, summed unweighted.

    Each term is the mean over every entry of its pair.  Returns
    ``(total, {"forecast": ..., "nonstat": ...})``.
    """
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    y_non_hat = np.asarray(y_non_hat, dtype=np.float64)
    y_non = np.asarray(y_non, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ValueError(f"forecast shapes differ: {y_hat.shape} vs {y.shape}")
    if y_non_hat.shape != y_non.shape:
        raise ValueError(f"component shapes differ: {y_non_hat.shape} vs {y_non.shape}")
    forecast = float(np.mean((y_hat - y) ** 2))
    nonstat = float(np.mean((y_non_hat - y_non) ** 2))
    return forecast + nonstat, {"forecast": forecast, "nonstat": nonstat}


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_arrays(cls, arrays) -> "AdamState":
        return cls(m=[np.zeros_like(a) for a in arrays], v=[np.zeros_like(a) for a in arrays])


def adam_step(params, grads, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter, gradient, and state lists must align")
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter tensor {i}")
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


@dataclass
class Metrics:
    mae: float
    mse: float


class Pipeline:
    """A normalizer/backbone pair with its scaler and resolved K."""

    def __init__(
        self,
        config: TrainConfig,
        normalizer: ReversibleNormalizer,
        backbone: BackboneParams,
        k: int,
        scaler: Scaler,
    ):
        self.config = config
        self.normalizer = normalizer
        self.backbone = backbone
        self.k = k
        self.scaler = scaler

    # -- forward paths ------------------------------------------------------

    def predict(self, X: np.ndarray) -> np.ndarray:
        x_res, state = self.normalizer.normalize(X)
        y_res = backbone_forward(self.backbone, x_res)
        return self.normalizer.denormalize(y_res, state)

    def train_batch(self, X: np.ndarray, Y: np.ndarray):
        """Forward, loss, and gradient accumulation for one minibatch."""
        self.zero_grad()
        x_res, state = self.normalizer.normalize(X)
        cache: dict = {}
        y_res = backbone_forward(self.backbone, x_res, cache)
        y_hat = self.normalizer.denormalize(y_res, state, training=True)

        if self.normalizer.has_predictor:
            y_non_true = self.normalizer.component_target(Y)
            total, parts = dual_loss(y_hat, Y, state.y_non_hat, y_non_true)
            grad_f = 2.0 * (y_hat - Y) / Y.size
            grad_n = 2.0 * (state.y_non_hat - y_non_true) / Y.size
        else:
            err = y_hat - Y
            forecast = float(np.mean(err**2))
            total, parts = forecast, {"forecast": forecast, "nonstat": 0.0}
            grad_f = 2.0 * err / Y.size
            grad_n = None

        if not np.isfinite(total):
            raise FloatingPointError(f"non-finite training loss {total!r}")
        grad_res = self.normalizer.backward(grad_f, grad_n, state)
        backbone_backward(self.backbone, cache, grad_res)
        return total, parts

    # -- parameter plumbing --------------------------------------------------

    def parameter_layers(self) -> list:
        return self.normalizer.trainable_parameters() + self.backbone.trainable_layers()

    def parameter_arrays(self) -> list:
        out = []
        for layer in self.parameter_layers():
            out.extend([layer.weight, layer.bias])
        return out

    def grad_arrays(self) -> list:
        out = []
        for layer in self.parameter_layers():
            out.extend([layer.grad_weight, layer.grad_bias])
        return out

    def zero_grad(self) -> None:
        for layer in self.parameter_layers():
            layer.zero_grad()

    def state_dict(self) -> dict:
        arrays = {}
        pred = getattr(self.normalizer, "predictor", None)
        if pred is not None:
            for i, layer in enumerate(pred.layers, start=1):
                arrays[f"predictor.layer{i}.weight"] = layer.weight
                arrays[f"predictor.layer{i}.bias"] = layer.bias
        mask = getattr(self.normalizer, "global_mask", None)
        if mask is not None:
            arrays["normalizer.global_mask"] = mask
        if self.backbone.kind == "dlinear":
            arrays["backbone.trend.weight"] = self.backbone.trend_linear.weight
            arrays["backbone.trend.bias"] = self.backbone.trend_linear.bias
            arrays["backbone.seasonal.weight"] = self.backbone.seasonal_linear.weight
            arrays["backbone.seasonal.bias"] = self.backbone.seasonal_linear.bias
        arrays["scaler.mean"] = self.scaler.mean
        arrays["scaler.std"] = self.scaler.std
        return arrays

    def load_state_dict(self, arrays: dict) -> None:
        current = self.state_dict()
        missing = set(current) - set(arrays)
        if missing:
            raise ValueError(f"checkpoint is missing keys: {sorted(missing)}")
        for name, target in current.items():
            source = np.asarray(arrays[name])
            if source.shape != target.shape:
                raise ValueError(
                    f"checkpoint key {name!r} has shape {source.shape}, expected {target.shape}"
                )
            np.copyto(target, source)

    def make_window_sets(self, frame):
        """Window sets of ``frame`` under this pipeline's scaler and split."""
        values = np.asarray(getattr(frame, "values", frame), dtype=np.float64)
        scaled = self.scaler.transform(values)
        return make_windows(
            scaled, self.config.lookback, self.config.horizon, self.config.split_ratios
        )


def _build_pipeline(config: TrainConfig, scaler: Scaler, k: int, train_x) -> Pipeline:
    rng = np.random.default_rng([config.seed, 0xFA17])
    predictor = None
    wants_predictor = config.normalizer in ("fan", "fan-fixed") and config.predict_components
    if wants_predictor:
        predictor = init_predictor(
            config.lookback, config.horizon, tuple(config.hidden_sizes), rng
        )
    backbone = init_backbone(
        config.backbone, config.lookback, config.horizon, config.ma_kernel, rng
    )
    if config.normalizer == "fan-fixed":
        normalizer = make_normalizer(
            "fan-fixed",
            global_mask=fit_global_mask(train_x, k),
            predictor=predictor,
            horizon=config.horizon,
        )
    else:
        kwargs = {"k": k, "predictor": predictor, "horizon": config.horizon}
        normalizer = make_normalizer(
            config.normalizer, **(kwargs if config.normalizer == "fan" else {})
        )
    return Pipeline(config, normalizer, backbone, k, scaler)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def resolve_k(config: TrainConfig, train_x: np.ndarray) -> int:
    if config.k == "auto":
        return select_k_by_amplitude_rule(train_x, config.k_ratio)
    return int(config.k)


def train(config: TrainConfig, frame):
    """Fit a pipeline on ``frame`` and return it with the per-epoch history.

    Per epoch: seeded shuffle of the training windows, minibatch updates with
    Adam, then the validation forecast MSE.  Stops once validation has not
    improved for ``patience`` consecutive epochs and restores the parameters
    of the best validation epoch.
    """
    config.validate()
    values = np.asarray(getattr(frame, "values", frame), dtype=np.float64)
    n = values.shape[0]
    if n < config.lookback + config.horizon + 10:
        raise ValueError(
            f"series too short: N={n} rows cannot support lookback L={config.lookback} "
            f"plus horizon H={config.horizon} (need N >= L + H + 10)"
        )
    train_end, _ = split_bounds(n, config.split_ratios)
    scaler = Scaler.fit(values[:train_end])
    scaled = scaler.transform(values)
    train_set, val_set, _ = make_windows(
        scaled, config.lookback, config.horizon, config.split_ratios
    )
    if len(val_set) == 0:
        raise ValueError(
            f"validation split holds no window of lookback {config.lookback} "
            f"and horizon {config.horizon}; early stopping needs one"
        )

    needs_stack = config.k == "auto" or config.normalizer == "fan-fixed"
    train_x = train_set.x_stack() if needs_stack else None
    k = resolve_k(config, train_x)
    pipeline = _build_pipeline(config, scaler, k, train_x)

    params = pipeline.parameter_arrays()
    grads = pipeline.grad_arrays()
    adam = AdamState.for_arrays(params)
    shuffle_rng = np.random.default_rng([config.seed, 0x5EED])

    history = []
    best_val = np.inf
    best_params = [p.copy() for p in params]
    since_best = 0
    for epoch in range(config.max_epochs):
        order = shuffle_rng.permutation(len(train_set))
        loss_sum = 0.0
        seen = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            X, Y = train_set.batch(idx)
            try:
                total, _ = pipeline.train_batch(X, Y)
                adam_step(params, grads, adam, config.learning_rate)
            except FloatingPointError as exc:
                raise RuntimeError(
                    f"training aborted at epoch {epoch}, batch {start // config.batch_size}: {exc}"
                ) from exc
            loss_sum += total * len(idx)
            seen += len(idx)
        val_mse = evaluate(pipeline, val_set).mse
        history.append(
            {"epoch": epoch, "train_loss": loss_sum / seen, "val_mse": val_mse}
        )
        if val_mse < best_val:
            best_val = val_mse
            best_params = [p.copy() for p in params]
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    for target, source in zip(params, best_params):
        np.copyto(target, source)
    return pipeline, history


def evaluate(pipeline: Pipeline, windows: WindowSet, batch_size: int = 256) -> Metrics:
    """Forecast MAE/MSE over every window, step, and channel, in stable order."""
    if len(windows) == 0:
        raise ValueError("cannot evaluate an empty window set")
    abs_sum = 0.0
    sq_sum = 0.0
    count = 0
    for start in range(0, len(windows), batch_size):
        idx = np.arange(start, min(start + batch_size, len(windows)))
        X, Y = windows.batch(idx)
        err = pipeline.predict(X) - Y
        abs_sum += float(np.abs(err).sum())
        sq_sum += float(np.square(err).sum())
        count += err.size
    return Metrics(mae=abs_sum / count, mse=sq_sum / count)
