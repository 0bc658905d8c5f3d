"""Transform correctness against brute-force oracles, plus spectral invariants."""

import numpy as np
import pytest

from fankit.spectral import (
    Decomposition,
    FrequencyMask,
    Spectrum,
    amplitude,
    filter_spectrum,
    frequency_selection_density,
    frl_decompose,
    irdft,
    phase,
    rdft,
    select_k_by_amplitude_rule,
    spectral_variance,
    spectrum_of,
    top_k_indices,
)

# ---------------------------------------------------------------------------
# Independent oracles (no FFT library; direct evaluation of the definitions)
# ---------------------------------------------------------------------------


def dft_direct(x):
    """O(L^2) evaluation of z[w] = sum_t x[t] exp(-2i*pi*w*t/L), half spectrum."""
    length = len(x)
    out = []
    for w in range(length // 2 + 1):
        acc = 0.0 + 0.0j
        for t in range(length):
            acc += x[t] * np.exp(-2j * np.pi * w * t / length)
        out.append(acc)
    return np.array(out)


def topk_by_full_sort(amp, k):
    """Greedy pick from a full sort, ties resolved toward the lower index."""
    order = sorted(range(len(amp)), key=lambda i: (-amp[i], i))
    return sorted(order[: min(k, len(amp))])


# ---------------------------------------------------------------------------
# rdft / irdft
# ---------------------------------------------------------------------------


def test_rdft_constant_signal():
    z = rdft(np.full(8, 3.5))
    assert z[0] == pytest.approx(8 * 3.5)
    assert np.allclose(z[1:], 0.0, atol=1e-12)


def test_rdft_unit_sine_matches_direct_sum():
    x = np.sin(2 * np.pi * np.arange(8) / 8)
    z = rdft(x)
    expected = dft_direct(x)
    assert np.allclose(z, expected, atol=1e-9)
    assert abs(z[1]) == pytest.approx(4.0, abs=1e-9)
    mags = np.abs(z)
    mags[1] = 0.0
    assert np.all(mags < 1e-9)


def test_round_trip_identity():
    rng = np.random.default_rng(7)
    x = rng.normal(size=96)
    assert np.allclose(irdft(rdft(x), 96), x, atol=1e-9)


@pytest.mark.parametrize("length", [8, 95, 96, 97])
def test_round_trip_odd_and_even(length):
    rng = np.random.default_rng(length)
    for _ in range(5):
        x = rng.normal(size=length)
        assert np.allclose(irdft(rdft(x), length), x, atol=1e-9)


def test_rdft_rejects_bad_input():
    with pytest.raises(ValueError):
        rdft(np.array([1.0]))
    with pytest.raises(ValueError):
        rdft(np.array([1.0, np.nan, 2.0]))


def test_irdft_zero_spectrum():
    assert np.allclose(irdft(np.zeros(49, dtype=complex), 96), 0.0)


def test_irdft_dc_bin_reconstructs_mean():
    z = np.zeros(49, dtype=complex)
    z[0] = 96 * 2.25
    assert np.allclose(irdft(z, 96), 2.25, atol=1e-12)


def test_irdft_then_rdft_round_trip():
    rng = np.random.default_rng(3)
    z = rng.normal(size=49) + 1j * rng.normal(size=49)
    z[0] = z[0].real
    z[-1] = z[-1].real  # L=96 is even, the Nyquist bin must be real
    assert np.allclose(rdft(irdft(z, 96)), z, atol=1e-9)


def test_irdft_shape_and_hermitian_errors():
    with pytest.raises(ValueError):
        irdft(np.zeros(48, dtype=complex), 96)
    bad = np.zeros(49, dtype=complex)
    bad[0] = 1j
    with pytest.raises(ValueError):
        irdft(bad, 96)


def test_irdft_truncates_tiny_imaginary_residue():
    z = np.zeros(49, dtype=complex)
    z[0] = 96.0 + 1e-12j
    assert np.allclose(irdft(z, 96), 1.0, atol=1e-9)


# ---------------------------------------------------------------------------
# amplitude / phase
# ---------------------------------------------------------------------------


def test_amplitude_constant_and_sine():
    c = 1.7
    z = rdft(np.full(8, c))
    assert amplitude(z, 8)[0] == pytest.approx(c)
    x = np.sin(2 * np.pi * np.arange(8) / 8)
    a = amplitude(rdft(x), 8)
    expected = np.abs(dft_direct(x)) / 8
    assert np.allclose(a, expected, atol=1e-12)
    assert a[1] == pytest.approx(0.5, abs=1e-9)
    assert np.all(np.delete(a, 1) < 1e-9)


def test_amplitude_zero_spectrum():
    assert np.allclose(amplitude(np.zeros(5, dtype=complex), 8), 0.0)


def test_phase_reference_points():
    z = np.array([2.0 + 0j, 3j, -1.0 + 0j, 0.0 + 0j])
    p = phase(z)
    assert p[0] == pytest.approx(0.0)
    assert p[1] == pytest.approx(np.pi / 2)
    assert p[2] == pytest.approx(np.pi)
    assert p[3] == 0.0


def test_phase_range_is_half_open():
    # A -0.0 imaginary part must not flip the branch onto -pi.
    z = np.array([complex(-1.0, -0.0)])
    assert phase(z)[0] == pytest.approx(np.pi)


# ---------------------------------------------------------------------------
# top-k and filtering
# ---------------------------------------------------------------------------


def test_top_k_tie_breaks_toward_lower_index():
    assert top_k_indices(np.array([5.0, 1, 9, 9, 2]), 2).tolist() == [2, 3]


def test_top_k_clamps_to_available_bins():
    assert top_k_indices(np.array([5.0, 1, 9, 9, 2]), 10).tolist() == [0, 1, 2, 3, 4]


def test_top_k_matches_full_sort_oracle():
    rng = np.random.default_rng(11)
    for _ in range(50):
        amp = rng.integers(0, 6, size=rng.integers(3, 30)).astype(float)
        k = int(rng.integers(1, len(amp) + 3))
        assert top_k_indices(amp, k).tolist() == topk_by_full_sort(amp, k)


def test_top_k_rejects_bad_k():
    with pytest.raises(ValueError):
        top_k_indices(np.array([1.0, 2.0]), 0)


def test_filter_identity_and_bounds():
    rng = np.random.default_rng(5)
    z = rng.normal(size=9) + 1j * rng.normal(size=9)
    assert np.array_equal(filter_spectrum(z, np.arange(9)), z)
    with pytest.raises(IndexError):
        filter_spectrum(z, [9])


def test_filter_is_pure():
    z = np.ones(5, dtype=complex)
    before = z.copy()
    filter_spectrum(z, [2])
    assert np.array_equal(z, before)


def test_filter_constant_through_dc_bin():
    z = rdft(np.full(16, -4.0))
    kept = filter_spectrum(z, [0])
    assert np.allclose(irdft(kept, 16), -4.0, atol=1e-12)


def test_filter_isolates_dominant_tone():
    t = np.arange(96)
    strong = 3.0 * np.sin(2 * np.pi * 4 * t / 96)
    weak = 0.5 * np.sin(2 * np.pi * 9 * t / 96)
    z = rdft(strong + weak)
    kept = filter_spectrum(z, [4])
    assert np.allclose(irdft(kept, 96), strong, atol=1e-8)


# ---------------------------------------------------------------------------
# frequency residual learning
# ---------------------------------------------------------------------------


def test_frl_pure_tone_fully_captured():
    t = np.arange(96)
    X = np.sin(2 * np.pi * 3 * t / 96).reshape(-1, 1)
    d = frl_decompose(X, 1)
    assert np.max(np.abs(d.x_res)) < 1e-8
    assert d.mask.indices == ((3,),)


def test_frl_full_spectrum_leaves_nothing():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(24, 2))
    d = frl_decompose(X, 13)  # B = 13 for L = 24
    assert np.max(np.abs(d.x_res)) < 1e-9


def test_frl_detrends_when_dc_selected():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(96, 3)) + 50.0  # large mean makes bin 0 dominate
    d = frl_decompose(X, 2)
    assert all(0 in ch for ch in d.mask.indices)
    assert np.all(np.abs(d.x_res.mean(axis=0)) < 1e-9)


def test_frl_decomposition_invariants():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(96, 2))
    d = frl_decompose(X, 5)
    assert np.allclose(d.x_non + d.x_res, X, atol=1e-9)
    # Off-mask bins of x_non carry no energy.
    for ch in range(2):
        z = rdft(d.x_non[:, ch])
        off = np.setdiff1d(np.arange(z.shape[0]), d.mask.indices[ch])
        assert np.all(np.abs(z[off]) < 1e-9 * 96)


def test_frl_linearity_under_scaling():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(48, 2))
    base = frl_decompose(X, 4)
    for alpha in (2.0, 0.25, 3.7):
        scaled = frl_decompose(alpha * X, 4)
        assert scaled.mask == base.mask
        assert np.allclose(scaled.x_non, alpha * base.x_non, atol=1e-9)


def test_frl_mask_determinism():
    X = np.tile(np.array([[1.0, -1.0]]), (8, 1))
    masks = {frl_decompose(X.copy(), 3).mask for _ in range(5)}
    assert len(masks) == 1


# ---------------------------------------------------------------------------
# K selection rule
# ---------------------------------------------------------------------------


def _tone_window(length, bin_idx, amp=1.0, channels=1, phase_shift=0.0):
    t = np.arange(length)
    x = amp * np.sin(2 * np.pi * bin_idx * t / length + phase_shift)
    return np.tile(x.reshape(-1, 1), (1, channels))


def test_select_k_single_tone():
    windows = [_tone_window(96, 5)]
    assert select_k_by_amplitude_rule(windows, 0.1) == 1


def test_select_k_two_equal_tones():
    t = np.arange(96)
    x = np.sin(2 * np.pi * 3 * t / 96) + np.sin(2 * np.pi * 7 * t / 96)
    windows = [x.reshape(-1, 1)] * 4
    for ratio in (0.1, 0.5, 0.9):
        assert select_k_by_amplitude_rule(windows, ratio) == 2


def test_select_k_matches_independent_accumulation():
    rng = np.random.default_rng(20)
    windows = []
    for _ in range(30):
        w = sum(
            rng.uniform(0.2, 2.0) * np.sin(2 * np.pi * b * np.arange(96) / 96)
            for b in (2, 5, 11)
        )
        windows.append(np.column_stack([w, rng.normal(scale=0.05, size=96)]))
    windows = np.array(windows)

    # Oracle: accumulate per-bin means independently, one window at a time.
    sums = np.zeros(49)
    count = 0
    for w in windows:
        for ch in range(w.shape[1]):
            sums += np.abs(dft_direct(w[:, ch])) / 96
            count += 1
    mean_amp = sums / count
    expected = int(np.sum(mean_amp >= 0.1 * mean_amp.max()))
    assert select_k_by_amplitude_rule(windows, 0.1) == expected


def test_select_k_validates_inputs():
    with pytest.raises(ValueError):
        select_k_by_amplitude_rule(np.empty((0, 8, 1)), 0.1)
    with pytest.raises(ValueError):
        select_k_by_amplitude_rule([_tone_window(8, 1)], 1.5)


# ---------------------------------------------------------------------------
# spectral variance
# ---------------------------------------------------------------------------


def test_spectral_variance_identical_windows_is_zero():
    w = _tone_window(32, 3)
    assert spectral_variance([w, w, w]) == 0.0


def test_spectral_variance_single_varying_tone():
    amps = [0.5, 1.0, 1.5, 3.0]
    windows = [_tone_window(32, 4, amp=a) for a in amps]
    # Bin amplitude of a unit bin-aligned sine is 0.5, so the spectrum varies
    # only at bin 4 with values amp/2.
    expected = np.var([a / 2 for a in amps])
    assert spectral_variance(windows) == pytest.approx(expected, rel=1e-9)


def test_spectral_variance_requires_two_windows():
    with pytest.raises(ValueError):
        spectral_variance([_tone_window(16, 2)])


def test_frl_residuals_never_increase_spectral_variance():
    rng = np.random.default_rng(33)
    for _ in range(20):
        bins = rng.choice(np.arange(1, 16), size=3, replace=False)
        windows = np.array(
            [
                sum(
                    rng.uniform(0.5, 2.0) * np.sin(2 * np.pi * b * np.arange(64) / 64)
                    for b in bins
                ).reshape(-1, 1)
                for _ in range(8)
            ]
        )
        d = [frl_decompose(w, 3).x_res for w in windows]
        before = spectral_variance(windows)
        after = spectral_variance(np.array(d))
        assert after <= before
        assert after < before  # selected bins vary across windows here


# ---------------------------------------------------------------------------
# selection density
# ---------------------------------------------------------------------------


def test_density_identical_windows_is_indicator():
    windows = [_tone_window(32, 3, channels=2)] * 6
    density = frequency_selection_density(windows, 2)
    assert set(np.unique(density)) <= {0.0, 1.0}
    assert np.allclose(density.sum(axis=1), 2.0)


def test_density_alternating_tones_split_evenly():
    a = _tone_window(32, 3)
    b = _tone_window(32, 9)
    density = frequency_selection_density([a, b, a, b], 1)
    assert density[0, 3] == pytest.approx(0.5)
    assert density[0, 9] == pytest.approx(0.5)


def test_density_sums_to_k():
    rng = np.random.default_rng(40)
    windows = rng.normal(size=(12, 48, 3))
    for k in (1, 4, 11):
        density = frequency_selection_density(windows, k)
        assert np.allclose(density.sum(axis=1), k, atol=1e-12)


# ---------------------------------------------------------------------------
# Parseval and domain types
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("length", [8, 95, 96, 97])
def test_parseval_energy_identity(length):
    rng = np.random.default_rng(length + 1)
    x = rng.normal(size=length)
    z = rdft(x)
    # Reassemble the full symmetric spectrum energy from the half spectrum:
    # interior bins count twice, DC (and Nyquist when L is even) once.
    energy = np.abs(z[0]) ** 2
    interior_end = length // 2 + 1 if length % 2 else length // 2
    energy += 2 * np.sum(np.abs(z[1:interior_end]) ** 2)
    if length % 2 == 0:
        energy += np.abs(z[-1]) ** 2
    assert np.sum(x**2) == pytest.approx(energy / length, rel=1e-6)


def test_spectrum_round_trip_invariant():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(97, 2))
    spec = spectrum_of(X)
    rebuilt = np.stack([irdft(spec.coeffs[d], spec.origin_len) for d in range(2)], axis=1)
    again = spectrum_of(rebuilt)
    assert np.allclose(again.coeffs, spec.coeffs, rtol=1e-9, atol=1e-12)
    assert spec.channels == 2 and spec.bins == 49


def test_spectrum_validates_bin_count():
    with pytest.raises(ValueError):
        Spectrum(coeffs=np.zeros((1, 40), dtype=complex), origin_len=96)


def test_frequency_mask_canonical_form():
    mask = FrequencyMask(indices=((0, 3, 5),), k=3)
    assert mask.indices == ((0, 3, 5),)
    with pytest.raises(ValueError):
        FrequencyMask(indices=((3, 3),), k=2)
    with pytest.raises(ValueError):
        FrequencyMask(indices=((5, 2),), k=2)
    with pytest.raises(ValueError):
        FrequencyMask(indices=((1,),), k=0)


def test_decomposition_holds_inputs():
    X = _tone_window(16, 2, channels=2)
    d = frl_decompose(X, 1)
    assert isinstance(d, Decomposition)
    assert d.x_non.shape == X.shape and d.x_res.shape == X.shape
