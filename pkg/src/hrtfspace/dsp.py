"""HRIR -> magnitude preprocessing and spectral error metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .containers import HrirSet, MagnitudeSet, ValidationError


@dataclass(frozen=True)
class PreprocessConfig:
    fft_size: int = 256
    f_low_hz: float = 200.0
    f_high_hz: float = 16000.0
    magnitude_floor: float = 1e-5

    def __post_init__(self):
        n = self.fft_size
        if n < 2 or (n & (n - 1)) != 0:
            raise ValidationError("fft_size must be a power of two >= 2")
        if not (0 <= self.f_low_hz < self.f_high_hz):
            raise ValidationError("need 0 <= f_low_hz < f_high_hz")
        if not (self.magnitude_floor > 0):
            raise ValidationError("magnitude_floor must be positive")


def band_bin_range(sample_rate_hz: float, cfg: PreprocessConfig) -> tuple[int, int]:
    """Inclusive FFT bin index range covering [f_low, f_high].

    The band runs from the first bin at or above f_low through the first bin
    at or above f_high, so the retained bins always span the requested band
    (fs = 48 kHz, N = 256, [200, 16000] Hz -> bins 2..86, i.e. K = 85).
    """
    if not (cfg.f_high_hz <= sample_rate_hz / 2):
        raise ValidationError(
            f"sample rate {sample_rate_hz} Hz too low for f_high {cfg.f_high_hz} Hz"
        )
    df = sample_rate_hz / cfg.fft_size
    k_low = int(np.ceil(cfg.f_low_hz / df))
    k_high = int(np.ceil(cfg.f_high_hz / df))
    return k_low, k_high


def fft_band_magnitudes(
    hrirs: HrirSet, cfg: PreprocessConfig = PreprocessConfig()
) -> tuple[np.ndarray, np.ndarray]:
    """Full-precision banded magnitudes: (bin frequencies, float64 (L, K, 2)).

    FFT per (location, ear), modulus, in-band bins kept, floor applied.
    """
    if hrirs.taps > cfg.fft_size:
        raise ValidationError(
            f"HRIR has {hrirs.taps} taps > fft_size {cfg.fft_size}; refusing to truncate"
        )
    k_low, k_high = band_bin_range(hrirs.sample_rate_hz, cfg)
    spectrum = np.fft.rfft(hrirs.data.astype(np.float64), n=cfg.fft_size, axis=2)
    magnitude = np.abs(spectrum[:, :, k_low : k_high + 1])
    magnitude = np.maximum(magnitude, cfg.magnitude_floor)
    df = hrirs.sample_rate_hz / cfg.fft_size
    bins = np.arange(k_low, k_high + 1, dtype=np.float64) * df
    return bins, np.transpose(magnitude, (0, 2, 1))


def fft_magnitude(hrirs: HrirSet, cfg: PreprocessConfig = PreprocessConfig()) -> MagnitudeSet:
    """FFT each (location, ear) HRIR, keep the in-band bins, floor magnitudes."""
    bins, magnitude = fft_band_magnitudes(hrirs, cfg)
    return MagnitudeSet(
        subject_id=hrirs.subject_id,
        grid=hrirs.grid,
        freq_bins_hz=bins,
        data=magnitude,
    )


def to_db(magnitude) -> np.ndarray:
    """Elementwise 20*log10; rejects non-positive entries."""
    arr = np.asarray(magnitude, dtype=np.float64)
    if (arr <= 0).any():
        raise ValidationError("non-positive entry in to_db input")
    return 20.0 * np.log10(arr)


def _require_compatible(a: MagnitudeSet, b: MagnitudeSet) -> None:
    if a.data.shape != b.data.shape:
        raise ValidationError("magnitude sets have different shapes")
    if not np.array_equal(a.grid.directions, b.grid.directions):
        raise ValidationError("magnitude sets have different grids")
    if not np.array_equal(a.freq_bins_hz, b.freq_bins_hz):
        raise ValidationError("magnitude sets have different frequency bins")


def sde(reference: MagnitudeSet, estimate: MagnitudeSet) -> float:
    """Spectral difference error in dB.

    Per frequency bin, mean absolute dB ratio over directions, averaged over
    the two ears; returns the median over bins. Symmetric and >= 0.
    """
    _require_compatible(reference, estimate)
    ratio_db = np.abs(
        20.0
        * np.log10(reference.data.astype(np.float64) / estimate.data.astype(np.float64))
    )
    per_bin = ratio_db.mean(axis=(0, 2))  # direction average, then ear average
    return float(np.median(per_bin))


def erb_bandwidth(f_hz):
    """Equivalent rectangular bandwidth in Hz (Glasberg & Moore linear fit)."""
    f = np.asarray(f_hz, dtype=np.float64)
    if (f < 0).any():
        raise ValidationError("frequency must be non-negative")
    out = 24.7 * (4.37 * f / 1000.0 + 1.0)
    if np.isscalar(f_hz):
        return float(out)
    return out
