"""Equal-loudness weighting tables for the coloration metric.

The embedded contour is the 60-phon equal-loudness curve evaluated from the
ISO 226:2003 analytic form at the 29 standard frequencies, rounded to 0.01 dB.
Inverse weighting offsets are 60 - contour(f), interpolated piecewise-linearly
in log-frequency (clamped outside 20 Hz .. 12.5 kHz).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .containers import ValidationError

CONTOUR_PHON = 60.0

_CONTOUR_FREQ_HZ = np.array(
    [20.0, 25.0, 31.5, 40.0, 50.0, 63.0, 80.0, 100.0, 125.0, 160.0,
     200.0, 250.0, 315.0, 400.0, 500.0, 630.0, 800.0, 1000.0, 1250.0, 1600.0,
     2000.0, 2500.0, 3150.0, 4000.0, 5000.0, 6300.0, 8000.0, 10000.0, 12500.0]
)

_CONTOUR_SPL_DB = np.array(
    [109.51, 104.23, 99.08, 94.18, 89.96, 85.94, 82.05, 78.65, 75.56, 72.47,
     69.86, 67.53, 65.39, 63.45, 62.05, 60.81, 59.89, 60.01, 62.15, 63.19,
     59.96, 57.26, 56.42, 57.57, 60.89, 66.36, 71.66, 73.16, 68.63]
)


def contour_spl(f_hz) -> np.ndarray:
    """60-phon equal-loudness SPL at arbitrary frequencies (log-f interpolation)."""
    f = np.asarray(f_hz, dtype=np.float64)
    if (f <= 0).any():
        raise ValidationError("contour frequencies must be positive")
    return np.interp(np.log(f), np.log(_CONTOUR_FREQ_HZ), _CONTOUR_SPL_DB)


@dataclass(frozen=True)
class LoudnessTables:
    """Per-bin inverse equal-loudness offsets plus the reference listening level."""

    freq_bins_hz: np.ndarray
    offsets_db: np.ndarray
    ref_level_db: float = 75.0

    def __post_init__(self):
        bins = np.asarray(self.freq_bins_hz, dtype=np.float64)
        offsets = np.asarray(self.offsets_db, dtype=np.float64)
        if bins.shape != offsets.shape or bins.ndim != 1:
            raise ValidationError("offsets and bins must be matching 1-D arrays")
        if not np.isfinite(offsets).all():
            raise ValidationError("non-finite loudness offset")
        object.__setattr__(self, "freq_bins_hz", bins)
        object.__setattr__(self, "offsets_db", offsets)

    @classmethod
    def for_bins(cls, freq_bins_hz, ref_level_db: float = 75.0) -> "LoudnessTables":
        bins = np.asarray(freq_bins_hz, dtype=np.float64)
        return cls(
            freq_bins_hz=bins,
            offsets_db=CONTOUR_PHON - contour_spl(bins),
            ref_level_db=ref_level_db,
        )
