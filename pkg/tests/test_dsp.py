import numpy as np
import pytest

import hrtfspace as hs
from hrtfspace.dsp import PreprocessConfig, band_bin_range, fft_band_magnitudes


def naive_dft_magnitude(x, n):
    """O(N^2) direct DFT of a real signal zero-padded to n (oracle)."""
    padded = np.zeros(n)
    padded[: len(x)] = x
    k = np.arange(n // 2 + 1)
    basis = np.exp(-2j * np.pi * np.outer(k, np.arange(n)) / n)
    return np.abs(basis @ padded)


def sde_loop(a, b):
    """Triple-loop reference for the spectral difference error (oracle)."""
    n_dirs, n_bins, _ = a.shape
    per_bin = []
    for k in range(n_bins):
        total = 0.0
        for l in range(n_dirs):
            for e in range(2):
                total += abs(20.0 * np.log10(a[l, k, e] / b[l, k, e]))
        per_bin.append(total / (n_dirs * 2))
    return float(np.median(per_bin))


def make_hrirs(rng, grid, taps=256, fs=48000.0):
    return hs.HrirSet("h", fs, grid, rng.normal(size=(grid.count, 2, taps)))


def test_band_yields_85_bins_for_paper_settings():
    cfg = PreprocessConfig()
    k_low, k_high = band_bin_range(48000.0, cfg)
    assert (k_low, k_high) == (2, 86)
    assert k_high - k_low + 1 == 85


def test_fft_magnitude_bin_frequencies(small_grid):
    rng = np.random.default_rng(0)
    ms = hs.fft_magnitude(make_hrirs(rng, small_grid))
    assert ms.num_bins == 85
    assert ms.freq_bins_hz[0] == pytest.approx(375.0)
    assert ms.freq_bins_hz[-1] == pytest.approx(16125.0)


def test_unit_impulse_is_flat(small_grid):
    data = np.zeros((small_grid.count, 2, 64))
    data[:, :, 0] = 1.0
    ms = hs.fft_magnitude(hs.HrirSet("imp", 48000.0, small_grid, data))
    assert np.all(ms.data == 1.0)


def test_pure_cosine_concentrates_at_its_bin(small_grid):
    t = np.arange(256)
    tone = np.cos(2 * np.pi * 10 * t / 256)
    data = np.broadcast_to(tone, (small_grid.count, 2, 256))
    ms = hs.fft_magnitude(hs.HrirSet("tone", 48000.0, small_grid, data))
    k_low, _ = band_bin_range(48000.0, PreprocessConfig())
    bin10 = 10 - k_low
    assert ms.data[0, bin10, 0] == pytest.approx(128.0, rel=1e-6)
    others = np.delete(ms.data[0, :, 0], bin10)
    assert (others <= 1e-5 + 1e-12).all()  # floored leakage


def test_fft_agrees_with_naive_dft(small_grid):
    cfg = PreprocessConfig()
    rng = np.random.default_rng(42)
    hrirs = make_hrirs(rng, small_grid)
    _, mags = fft_band_magnitudes(hrirs, cfg)
    k_low, k_high = band_bin_range(48000.0, cfg)
    for l in (0, 5):
        for e in (0, 1):
            oracle = naive_dft_magnitude(hrirs.data[l, e].astype(np.float64), 256)
            oracle = np.maximum(oracle[k_low : k_high + 1], cfg.magnitude_floor)
            np.testing.assert_allclose(mags[l, :, e], oracle, rtol=1e-9)


def test_parseval_on_full_band(small_grid):
    # run our pipeline with the band opened to [0, fs/2] and check energy
    cfg = PreprocessConfig(f_low_hz=0.0, f_high_hz=24000.0, magnitude_floor=1e-300)
    rng = np.random.default_rng(7)
    hrirs = make_hrirs(rng, small_grid)
    _, mags = fft_band_magnitudes(hrirs, cfg)
    x = hrirs.data[3, 1].astype(np.float64)
    m = mags[3, :, 1]
    spectral = m[0] ** 2 + m[-1] ** 2 + 2 * (m[1:-1] ** 2).sum()
    np.testing.assert_allclose(spectral, 256 * (x * x).sum(), rtol=1e-9)


def test_preprocess_validation(small_grid):
    with pytest.raises(hs.ValidationError):
        PreprocessConfig(fft_size=100)
    with pytest.raises(hs.ValidationError):
        PreprocessConfig(f_low_hz=2000.0, f_high_hz=100.0)
    rng = np.random.default_rng(1)
    with pytest.raises(hs.ValidationError, match="too low"):
        hs.fft_magnitude(make_hrirs(rng, small_grid, fs=24000.0))
    with pytest.raises(hs.ValidationError, match="taps"):
        hs.fft_magnitude(make_hrirs(rng, small_grid, taps=512))


def test_to_db_values():
    np.testing.assert_allclose(hs.to_db(np.array([1.0, 10.0, 1e-5])), [0.0, 20.0, -100.0])
    with pytest.raises(hs.ValidationError):
        hs.to_db(np.array([0.0]))


def test_sde_identity_and_constant_ratio(synth_pair):
    a, _ = synth_pair
    assert hs.sde(a, a) == 0.0
    doubled = hs.MagnitudeSet(
        a.subject_id, a.grid, a.freq_bins_hz, a.data.astype(np.float64) * 2.0
    )
    assert hs.sde(a, doubled) == pytest.approx(20.0 * np.log10(2.0), abs=1e-5)


def test_sde_matches_loop_oracle_and_symmetry():
    rng = np.random.default_rng(3)
    pairs = np.column_stack([rng.uniform(0, 359, 4), rng.uniform(-80, 80, 4)])
    grid = hs.SphericalGrid(pairs)
    bins = np.sort(rng.uniform(300, 12000, 8))
    a = hs.MagnitudeSet("a", grid, bins, 10 ** rng.uniform(-1, 1, (4, 8, 2)))
    b = hs.MagnitudeSet("b", grid, bins, 10 ** rng.uniform(-1, 1, (4, 8, 2)))
    oracle = sde_loop(a.data.astype(np.float64), b.data.astype(np.float64))
    assert hs.sde(a, b) == pytest.approx(oracle, abs=1e-9)
    assert hs.sde(a, b) == hs.sde(b, a)


def test_sde_shape_mismatch(synth_pair, small_grid):
    a, _ = synth_pair
    other = hs.MagnitudeSet(
        "c", small_grid, np.linspace(300, 9000, 5), np.full((16, 5, 2), 1.0)
    )
    with pytest.raises(hs.ValidationError):
        hs.sde(a, other)


def test_erb_values_and_monotonicity():
    assert hs.erb_bandwidth(0.0) == pytest.approx(24.7)
    assert hs.erb_bandwidth(1000.0) == pytest.approx(132.639)
    f = np.linspace(0, 20000, 200)
    assert (np.diff(hs.erb_bandwidth(f)) > 0).all()
