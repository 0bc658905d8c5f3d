"""CSV ingestion, the composite-sinusoid benchmark generator, and dataset stats.

CSV format: UTF-8, comma separated, mandatory header row, ``.`` decimal
separator, LF or CRLF line endings.  A leading non-numeric column (dates,
timestamps) is skipped on read.  The writer emits LF endings and 12
significant digits, so a write/read round trip preserves values to 12
significant digits.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .spectral import _amplitudes
from .training import split_bounds

__all__ = [
    "SeriesFrame",
    "SignalSpec",
    "SyntheticSpec",
    "DatasetStats",
    "load_csv",
    "write_csv",
    "piecewise_amplitude",
    "generate_synthetic",
    "synthetic_preset",
    "PRESET_NAMES",
    "dataset_stats",
]


@dataclass
class SeriesFrame:
    """An (N, D) real-valued multivariate series with named channels."""

    values: np.ndarray
    channel_names: list
    source: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"values must be 2-d (time, channels), got {self.values.ndim}-d")
        if self.values.shape[0] < 2:
            raise ValueError(f"series needs at least 2 rows, got {self.values.shape[0]}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("series values must be finite")
        self.channel_names = [str(n) for n in self.channel_names]
        if len(self.channel_names) != self.values.shape[1]:
            raise ValueError(
                f"{len(self.channel_names)} channel names for {self.values.shape[1]} channels"
            )
        if len(set(self.channel_names)) != len(self.channel_names):
            raise ValueError("channel names must be unique")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _parse_cell(cell: str, row: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise ValueError(
            f"row {row}, column {column!r}: cannot parse {cell!r} as a number"
        ) from None
    if not np.isfinite(value):
        raise ValueError(f"row {row}, column {column!r}: non-finite value {cell!r}")
    return value


def load_csv(path) -> SeriesFrame:
    """Read a header-first CSV into a frame, skipping a leading date column."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: file is empty")
    header, data = rows[0], rows[1:]
    if not header:
        raise ValueError(f"{path}: header row is empty")
    if not data:
        raise ValueError(f"{path}: no data rows")
    width = len(header)
    for i, row in enumerate(data, start=2):
        if len(row) != width:
            raise ValueError(f"{path}: row {i} has {len(row)} fields, header has {width}")
    # A leading date/label column is identified by its content, not its name.
    skip = 0
    try:
        float(data[0][0])
    except ValueError:
        skip = 1
    names = header[skip:]
    if not names:
        raise ValueError(f"{path}: no numeric data columns")
    values = np.empty((len(data), len(names)), dtype=np.float64)
    for i, row in enumerate(data):
        for j, name in enumerate(names):
            values[i, j] = _parse_cell(row[skip + j], i + 2, name)
    return SeriesFrame(values=values, channel_names=names, source=str(path))


def write_csv(path, frame: SeriesFrame) -> None:
    """Write a frame with LF endings and 12 significant digits per value."""
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(frame.channel_names) + "\n")
        for row in frame.values:
            fh.write(",".join(f"{v:.12g}" for v in row) + "\n")


# ---------------------------------------------------------------------------
# Synthetic benchmark generator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SignalSpec:
    """One sinusoid: its periodicity (in samples) and 4 amplitude anchors."""

    periodicity: float
    amplitude_anchors: tuple

    def __post_init__(self):
        if self.periodicity <= 0:
            raise ValueError(f"periodicity must be positive, got {self.periodicity}")
        anchors = tuple(float(a) for a in self.amplitude_anchors)
        if len(anchors) != 4:
            raise ValueError(f"need exactly 4 amplitude anchors, got {len(anchors)}")
        object.__setattr__(self, "amplitude_anchors", anchors)


@dataclass(frozen=True)
class SyntheticSpec:
    """Composite-sinusoid dataset: channel ``i`` sums the first ``i`` signals."""

    signals: tuple
    dims: int
    length: int
    noise_std: float = 0.0

    def __post_init__(self):
        signals = tuple(
            s if isinstance(s, SignalSpec) else SignalSpec(*s) for s in self.signals
        )
        object.__setattr__(self, "signals", signals)
        if not 1 <= self.dims <= len(signals):
            raise ValueError(
                f"dims must lie in [1, {len(signals)}] (one signal per channel tier), "
                f"got {self.dims}"
            )
        if self.length < 4:
            raise ValueError(f"length must be >= 4, got {self.length}")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")


# Benchmark presets: nine sinusoids with sample-domain periodicities and
# amplitude anchor tuples; syn<k> stacks the first k into k channels.
_PRESET_PERIODICITIES = (12, 16, 24, 36, 48, 60, 72, 84, 96)
_PRESET_ANCHORS = (
    (0, 1, 2, 4),
    (1, 3, 5, 6),
    (3, 4, 6, 8),
    (1, 2, 4, 5),
    (1, 3, 5, 6),
    (1, 3, 5, 6),
    (1, 3, 5, 6),
    (1, 3, 5, 6),
    (1, 3, 5, 6),
)
PRESET_NAMES = ("syn5", "syn6", "syn7", "syn8", "syn9")


def synthetic_preset(name: str, length: int = 10000, noise_std: float = 0.0) -> SyntheticSpec:
    if name not in PRESET_NAMES:
        raise ValueError(f"unknown preset {name!r}; valid presets: {', '.join(PRESET_NAMES)}")
    dims = int(name[3:])
    signals = tuple(
        SignalSpec(p, a) for p, a in zip(_PRESET_PERIODICITIES[:dims], _PRESET_ANCHORS[:dims])
    )
    return SyntheticSpec(signals=signals, dims=dims, length=length, noise_std=noise_std)


def piecewise_amplitude(anchors, length: int, split_ratios=(0.7, 0.2, 0.1)) -> np.ndarray:
    """Linear interpolation through 4 anchors pinned to the split boundaries.

    Anchors sit at sample 0, the train/val boundary, the val/test boundary,
    and the last sample, so the amplitude ramps linearly within each split.
    """
    anchors = tuple(float(a) for a in anchors)
    if len(anchors) != 4:
        raise ValueError(f"need exactly 4 amplitude anchors, got {len(anchors)}")
    train_end, val_end = split_bounds(length, split_ratios)
    positions = (0, train_end, val_end, length - 1)
    if any(b <= a for a, b in zip(positions, positions[1:])):
        raise ValueError(f"length {length} is too short to place 4 distinct anchors")
    return np.interp(np.arange(length), positions, anchors)


def generate_synthetic(
    spec: SyntheticSpec, split_ratios=(0.7, 0.2, 0.1), seed: int = 0
) -> SeriesFrame:
    """Deterministic composite-sinusoid frame for the given spec and seed.

    Signal ``j`` contributes ``a_t * sin(2*pi*t / T_j)`` with its own
    piecewise-linear amplitude envelope; channel ``i`` is the running sum of
    the first ``i`` signals.  Optional Gaussian noise is drawn from the seeded
    generator.
    """
    t = np.arange(spec.length, dtype=np.float64)
    contributions = np.empty((len(spec.signals), spec.length))
    for j, sig in enumerate(spec.signals):
        envelope = piecewise_amplitude(sig.amplitude_anchors, spec.length, split_ratios)
        contributions[j] = envelope * np.sin(2.0 * np.pi * t / sig.periodicity)
    values = np.cumsum(contributions, axis=0)[: spec.dims].T.copy()
    if spec.noise_std > 0:
        rng = np.random.default_rng(seed)
        values = values + rng.normal(0.0, spec.noise_std, size=values.shape)
    names = [f"ch{i}" for i in range(1, spec.dims + 1)]
    return SeriesFrame(values=values, channel_names=names, source=f"synthetic(seed={seed})")


# ---------------------------------------------------------------------------
# Dataset characterization
# ---------------------------------------------------------------------------


@dataclass
class DatasetStats:
    """Trend shift per channel and the aggregate seasonal-variation score."""

    trend_variation: np.ndarray  # (D,)
    seasonality_variation: float


def dataset_stats(frame, split_ratios=(0.7, 0.2, 0.1), lookback: int = 96) -> DatasetStats:
    """Distribution-shift summary of a series.

    Trend variation per channel is ``|mean(train) - mean(val+test)| /
    |mean(train)|`` (infinite, with a warning, when the train mean is zero).
    Seasonality variation sums, over channels, the cross-window variance of
    the length-``lookback`` amplitude spectra normalized by the channel's mean
    amplitude.
    """
    values = np.asarray(getattr(frame, "values", frame), dtype=np.float64)
    n, d = values.shape
    train_end, val_end = split_bounds(n, split_ratios)
    for name, size in (("train", train_end), ("val", val_end - train_end), ("test", n - val_end)):
        if size - lookback + 1 < 2:
            raise ValueError(
                f"{name} split has {size} rows; need at least {lookback + 1} "
                f"for 2 windows of length {lookback}"
            )

    mean_train = values[:train_end].mean(axis=0)
    mean_rest = values[train_end:].mean(axis=0)
    trend = np.empty(d)
    for j in range(d):
        if mean_train[j] == 0.0:
            warnings.warn(
                f"channel {j}: train mean is zero, trend variation reported as inf",
                RuntimeWarning,
                stacklevel=2,
            )
            trend[j] = np.inf
        else:
            trend[j] = abs(mean_train[j] - mean_rest[j]) / abs(mean_train[j])

    windows = np.lib.stride_tricks.sliding_window_view(values, lookback, axis=0)
    amps = _amplitudes(windows.transpose(0, 2, 1))  # (n_windows, B, D)
    var_per_bin = np.var(amps, axis=0)  # (B, D)
    mean_amp = amps.mean(axis=(0, 1))  # (D,)
    seasonal = 0.0
    for j in range(d):
        num = float(var_per_bin[:, j].sum())
        if num > 0.0:
            seasonal += num / float(mean_amp[j])
    return DatasetStats(trend_variation=trend, seasonality_variation=float(seasonal))
