"""Real-DFT primitives, top-K component selection, and frequency residual learning.

Conventions (fixed across the package):

* forward transform is unnormalized, ``z[w] = sum_t x[t] * exp(-2i*pi*w*t/L)``;
  the inverse carries the ``1/L`` factor,
* real signals are stored as half-spectra with ``B = L//2 + 1`` bins; keeping a
  bin implicitly keeps its conjugate pair,
* amplitude is ``|z[w]| / L``,
* top-K ties break toward the lower bin index so masks are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Spectrum",
    "FrequencyMask",
    "Decomposition",
    "rdft",
    "irdft",
    "amplitude",
    "phase",
    "top_k_indices",
    "filter_spectrum",
    "frl_decompose",
    "frl_decompose_batch",
    "spectrum_of",
    "select_k_by_amplitude_rule",
    "spectral_variance",
    "frequency_selection_density",
]

# Imaginary mass tolerated (and truncated) on the DC / Nyquist bins.
_HERMITIAN_TOL = 1e-9


def _num_bins(length: int) -> int:
    return length // 2 + 1


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Spectrum:
    """Half-spectrum of a real multichannel window.

    ``coeffs`` has shape ``(channels, bins)`` with ``bins = origin_len//2 + 1``.
    """

    coeffs: np.ndarray
    origin_len: int

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if coeffs.ndim != 2:
            raise ValueError(f"coeffs must be 2-d (channels, bins), got {coeffs.ndim}-d")
        if self.origin_len < 2:
            raise ValueError(f"origin_len must be >= 2, got {self.origin_len}")
        if coeffs.shape[1] != _num_bins(self.origin_len):
            raise ValueError(
                f"expected {_num_bins(self.origin_len)} bins for length "
                f"{self.origin_len}, got {coeffs.shape[1]}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("spectrum coefficients must be finite")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def channels(self) -> int:
        return self.coeffs.shape[0]

    @property
    def bins(self) -> int:
        return self.coeffs.shape[1]


@dataclass(frozen=True)
class FrequencyMask:
    """Per-channel sets of selected bin indices, stored sorted ascending.

    ``indices[d]`` holds the bins kept for channel ``d``; ``k`` is the number
    of bins that was requested (each channel holds ``min(k, bins)`` of them).
    """

    indices: tuple
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        canon = []
        for d, channel in enumerate(self.indices):
            idx = tuple(int(i) for i in channel)
            if any(i < 0 for i in idx):
                raise IndexError(f"channel {d}: negative bin index in mask")
            if any(b <= a for a, b in zip(idx, idx[1:])):
                raise ValueError(f"channel {d}: mask indices must be strictly ascending")
            canon.append(idx)
        object.__setattr__(self, "indices", tuple(canon))

    @property
    def channels(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class Decomposition:
    """Split of a window into its principal components and the residual."""

    x_non: np.ndarray  # (L, D) reconstruction of the kept bins
    x_res: np.ndarray  # (L, D) remainder, x - x_non
    mask: FrequencyMask


# ---------------------------------------------------------------------------
# Transform primitives
# ---------------------------------------------------------------------------


def rdft(x: np.ndarray) -> np.ndarray:
    """Unnormalized half-spectrum of a real vector (bin 0 is the plain sum)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"rdft expects a 1-d vector, got {x.ndim}-d")
    if x.shape[0] < 2:
        raise ValueError(f"rdft needs at least 2 samples, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("rdft input must be finite")
    return np.fft.rfft(x)


def irdft(z: np.ndarray, length: int) -> np.ndarray:
    """Inverse of :func:`rdft`; applies the 1/L factor.

    The DC bin (and the Nyquist bin for even ``length``) must be real up to
    1e-9; any smaller imaginary residue is truncated.
    """
    z = np.asarray(z, dtype=np.complex128)
    if z.ndim != 1:
        raise ValueError(f"irdft expects a 1-d spectrum, got {z.ndim}-d")
    if length < 2:
        raise ValueError(f"irdft target length must be >= 2, got {length}")
    if z.shape[0] != _num_bins(length):
        raise ValueError(
            f"spectrum has {z.shape[0]} bins, length {length} needs {_num_bins(length)}"
        )
    if abs(z[0].imag) > _HERMITIAN_TOL:
        raise ValueError(f"DC bin must be real, imaginary part {z[0].imag!r}")
    if length % 2 == 0 and abs(z[-1].imag) > _HERMITIAN_TOL:
        raise ValueError(f"Nyquist bin must be real, imaginary part {z[-1].imag!r}")
    return np.fft.irfft(z, n=length)


def amplitude(z: np.ndarray, length: int) -> np.ndarray:
    """Per-bin amplitude ``|z[w]| / L`` of a half-spectrum."""
    z = np.asarray(z, dtype=np.complex128)
    if z.ndim != 1:
        raise ValueError(f"amplitude expects a 1-d spectrum, got {z.ndim}-d")
    if z.shape[0] != _num_bins(length):
        raise ValueError(
            f"spectrum has {z.shape[0]} bins, length {length} needs {_num_bins(length)}"
        )
    return np.abs(z) / float(length)


def phase(z: np.ndarray) -> np.ndarray:
    """Per-bin phase in (-pi, pi]; the phase of a zero coefficient is 0."""
    z = np.asarray(z, dtype=np.complex128)
    p = np.arctan2(z.imag, z.real)
    # atan2(-0.0, negative) lands on -pi; fold it onto +pi for a unique form.
    p = np.where(p == -np.pi, np.pi, p)
    return p


def top_k_indices(amp: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``min(k, bins)`` largest amplitudes, sorted ascending.

    Ties break toward the lower bin index, which makes the selection a total
    deterministic rule.
    """
    amp = np.asarray(amp, dtype=np.float64)
    if amp.ndim != 1:
        raise ValueError(f"top_k_indices expects a 1-d amplitude vector, got {amp.ndim}-d")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not np.all(np.isfinite(amp)):
        raise ValueError("amplitudes must be finite")
    if np.any(amp < 0):
        raise ValueError("amplitudes must be nonnegative")
    kk = min(k, amp.shape[0])
    # Stable sort on the negated values keeps equal amplitudes in index order.
    order = np.argsort(-amp, kind="stable")[:kk]
    return np.sort(order)


def filter_spectrum(z: np.ndarray, indices) -> np.ndarray:
    """Copy of ``z`` that is zero at every bin not listed in ``indices``."""
    z = np.asarray(z, dtype=np.complex128)
    if z.ndim != 1:
        raise ValueError(f"filter_spectrum expects a 1-d spectrum, got {z.ndim}-d")
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= z.shape[0]):
        raise IndexError(f"mask indices out of range [0, {z.shape[0]})")
    kept = np.zeros_like(z)
    kept[idx] = z[idx]
    return kept


# ---------------------------------------------------------------------------
# Frequency residual learning
# ---------------------------------------------------------------------------


def _check_window_matrix(X: np.ndarray, name: str = "X") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-d (time, channels) matrix, got {X.ndim}-d")
    if X.shape[0] < 2:
        raise ValueError(f"{name} needs at least 2 time steps, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} must be finite")
    return X


def _topk_bins_batch(amp: np.ndarray, k: int) -> np.ndarray:
    """Row-wise top-k of ``amp`` (..., bins): ascending bins, lower index wins ties."""
    kk = min(k, amp.shape[-1])
    order = np.argsort(-amp, axis=-1, kind="stable")[..., :kk]
    return np.sort(order, axis=-1)


def frl_decompose_batch(X: np.ndarray, k: int):
    """Vectorized frequency residual learning over a stack of windows.

    Args:
        X: array of shape (n, L, D).
        k: number of bins to keep per channel.

    Returns:
        ``(x_non, x_res, mask_bins)`` where the first two match ``X`` in shape
        and ``mask_bins`` is an int array of shape (n, D, min(k, B)).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    n, length, channels = X.shape
    Z = np.fft.rfft(X, axis=1)  # (n, B, D)
    amp = np.abs(Z).transpose(0, 2, 1) / float(length)  # (n, D, B)
    bins = _topk_bins_batch(amp, k)  # (n, D, kk)
    keep = np.zeros(amp.shape, dtype=bool)
    np.put_along_axis(keep, bins, True, axis=-1)
    z_kept = np.where(keep.transpose(0, 2, 1), Z, 0.0)
    x_non = np.fft.irfft(z_kept, n=length, axis=1)
    return x_non, X - x_non, bins


def frl_decompose(X: np.ndarray, k: int) -> Decomposition:
    """Remove the top-K amplitude bins of every channel of one window.

    Each channel ranks its own amplitudes, so the selection is instance-wise
    and channel-wise.  ``x_non`` is the inverse transform of the kept bins and
    ``x_res = X - x_non`` is what a forecasting backbone sees.
    """
    X = _check_window_matrix(X)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    x_non, x_res, bins = frl_decompose_batch(X[None], k)
    mask = FrequencyMask(indices=tuple(tuple(row) for row in bins[0]), k=k)
    return Decomposition(x_non=x_non[0], x_res=x_res[0], mask=mask)


def spectrum_of(X: np.ndarray) -> Spectrum:
    """Half-spectrum of a (time, channels) window, channels first."""
    X = _check_window_matrix(X)
    return Spectrum(coeffs=np.fft.rfft(X, axis=0).T, origin_len=X.shape[0])


# ---------------------------------------------------------------------------
# Dataset-level statistics
# ---------------------------------------------------------------------------


def _window_stack(windows, min_windows: int = 1) -> np.ndarray:
    stack = np.asarray(windows, dtype=np.float64)
    if stack.ndim != 3:
        raise ValueError("expected a sequence of (time, channels) windows")
    if stack.shape[0] < min_windows:
        raise ValueError(f"need at least {min_windows} windows, got {stack.shape[0]}")
    if stack.shape[1] < 2:
        raise ValueError("windows need at least 2 time steps")
    if not np.all(np.isfinite(stack)):
        raise ValueError("windows must be finite")
    return stack


def _amplitudes(stack: np.ndarray, chunk: int = 1024) -> np.ndarray:
    """Amplitudes of every window, shape (n, B, D)."""
    n, length, channels = stack.shape
    out = np.empty((n, _num_bins(length), channels), dtype=np.float64)
    for start in range(0, n, chunk):
        block = stack[start : start + chunk]
        out[start : start + block.shape[0]] = np.abs(np.fft.rfft(block, axis=1)) / length
    return out


def select_k_by_amplitude_rule(windows, ratio: float = 0.1) -> int:
    """Number of bins whose mean amplitude reaches ``ratio`` of the peak mean.

    Amplitudes are averaged over every window and channel; a bin counts when
    its average is at least ``ratio`` times the largest average.  The peak bin
    always qualifies, so the result is at least 1.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    stack = _window_stack(windows, min_windows=1)
    mean_amp = _amplitudes(stack).mean(axis=(0, 2))
    return int(np.count_nonzero(mean_amp >= ratio * mean_amp.max()))


def spectral_variance(windows) -> float:
    """Cross-window variance of the amplitude spectrum (lower = more stationary).

    Population variance of each bin's amplitude across windows, summed over
    bins and averaged over channels.
    """
    stack = _window_stack(windows, min_windows=2)
    amps = _amplitudes(stack)
    # Shifting by one row leaves the variance unchanged but makes the
    # all-identical case come out exactly zero.
    per_bin = np.var(amps - amps[0], axis=0)  # (B, D)
    return float(np.maximum(per_bin, 0.0).sum(axis=0).mean())


def frequency_selection_density(windows, k: int) -> np.ndarray:
    """Fraction of windows in which each bin enters the top-K mask.

    Returns a (channels, bins) array with values in [0, 1]; each channel row
    sums to ``min(k, bins)`` because every window contributes that many picks.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    stack = _window_stack(windows, min_windows=1)
    n, length, channels = stack.shape
    counts = np.zeros((channels, _num_bins(length)), dtype=np.float64)
    chunk = 1024
    for start in range(0, n, chunk):
        block = stack[start : start + chunk]
        _, _, bins = frl_decompose_batch(block, k)
        for d in range(channels):
            counts[d] += np.bincount(bins[:, d, :].ravel(), minlength=counts.shape[1])
    return counts / n
