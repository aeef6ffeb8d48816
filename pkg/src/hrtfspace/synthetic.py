"""Deterministic synthetic HRTF magnitude generator.

Desk-scale stand-in for a measured database: each subject is a smooth
parametric family (head-shadow slope, one elevation-dependent pinna notch,
low-order spectral ripple) with parameters drawn from a seeded generator.
Inter-subject coloration distances land in the same order of magnitude as
measured-data values without claiming acoustic realism.
"""

from __future__ import annotations

import numpy as np

from .containers import MagnitudeSet, SphericalGrid, ValidationError
from .coords import interaural_coords

MAGNITUDE_FLOOR = 1e-5

# per-subject parameter ranges: head radius [m], notch centre [Hz],
# notch depth [dB], notch log2-frequency width, ripple coefficients [dB]
_HEAD_RADIUS = (0.07, 0.10)
_NOTCH_FREQ = (6000.0, 9000.0)
_NOTCH_DEPTH = (8.0, 20.0)
_NOTCH_WIDTH = (0.08, 0.15)
_RIPPLE = (-1.5, 1.5)


def default_grid(n_azimuths: int = 12, n_elevations: int = 6) -> SphericalGrid:
    """Equiangular grid: n_azimuths x n_elevations directions, poles avoided."""
    azimuths = np.arange(n_azimuths) * (360.0 / n_azimuths)
    elevations = np.linspace(-75.0, 75.0, n_elevations)
    pairs = [(az, el) for az in azimuths for el in elevations]
    return SphericalGrid(np.array(pairs))


def default_bins(count: int = 85, f_low_hz: float = 200.0, f_high_hz: float = 16000.0) -> np.ndarray:
    """Evenly spaced synthetic bin frequencies covering [f_low, f_high]."""
    return np.linspace(f_low_hz, f_high_hz, count)


def synth_population(
    seed: int, n_subjects: int, grid: SphericalGrid, freq_bins_hz
) -> tuple[list, list, list]:
    """Seeded subject population with an 80/20 train/test split.

    Returns (sets, train_ids, test_ids); subject seeds are drawn without
    replacement so ids are unique.
    """
    if n_subjects < 2:
        raise ValidationError("need at least 2 subjects")
    rng = np.random.default_rng(seed)
    subject_seeds = rng.choice(2**31 - 1, size=n_subjects, replace=False)
    sets = [synth_subject(int(s), grid, freq_bins_hz) for s in subject_seeds]
    order = rng.permutation(n_subjects)
    n_train = int(round(n_subjects * 0.8))
    ids = [s.subject_id for s in sets]
    train_ids = [ids[i] for i in order[:n_train]]
    test_ids = [ids[i] for i in order[n_train:]]
    return sets, train_ids, test_ids


def synth_subject(seed: int, grid: SphericalGrid, freq_bins_hz) -> MagnitudeSet:
    """Generate one subject's MagnitudeSet as a pure function of (seed, grid, bins).

    dB gain = head shadow + pinna notch + ripple:
      shadow: -(a/0.0875) * 12 * (f/16k)^0.8 * max(0, -sin(lateral toward ear))
      notch:  -d * exp(-(log2(f / f0*2^(el/120)))^2 / (2 sigma^2))
      ripple: sum_m c_m cos(2 pi m f/16k + m el pi/180), m = 1..4
    Linear magnitudes are floored at 1e-5.
    """
    bins = np.asarray(freq_bins_hz, dtype=np.float64)
    if bins.ndim != 1 or bins.size == 0:
        raise ValidationError("freq_bins_hz must be a non-empty 1-D array")
    if (bins < 200.0).any() or (bins > 16000.0).any():
        raise ValidationError("synthetic bins must lie within [200, 16000] Hz")

    rng = np.random.default_rng(seed)
    radius = rng.uniform(*_HEAD_RADIUS)
    notch_f0 = rng.uniform(*_NOTCH_FREQ)
    notch_depth = rng.uniform(*_NOTCH_DEPTH)
    notch_width = rng.uniform(*_NOTCH_WIDTH)
    ripple_coef = rng.uniform(*_RIPPLE, size=4)

    az = grid.azimuth_deg.astype(np.float64)
    el = grid.elevation_deg.astype(np.float64)
    lateral, _ = interaural_coords(az, el)
    lateral_rad = np.deg2rad(lateral)

    f_rel = bins / 16000.0  # (K,)
    # head shadow, ear axis: [left, right]; lateral is positive toward left
    signed = np.stack([lateral_rad, -lateral_rad], axis=1)  # (L, 2)
    shadow = np.maximum(0.0, -np.sin(signed))  # (L, 2)
    hs = -(radius / 0.0875) * 12.0 * f_rel[None, :, None] ** 0.8 * shadow[:, None, :]

    notch_centre = notch_f0 * 2.0 ** (el / 120.0)  # (L,)
    log_offset = np.log2(bins[None, :] / notch_centre[:, None])  # (L, K)
    notch = -notch_depth * np.exp(-(log_offset**2) / (2.0 * notch_width**2))

    phase = np.deg2rad(el)  # (L,)
    ripple = np.zeros_like(notch)
    for m, c in enumerate(ripple_coef, start=1):
        ripple += c * np.cos(2.0 * np.pi * m * f_rel[None, :] + m * phase[:, None])

    gain_db = hs + (notch + ripple)[:, :, None]  # (L, K, 2)
    linear = np.maximum(10.0 ** (gain_db / 20.0), MAGNITUDE_FLOOR)
    return MagnitudeSet(
        subject_id=f"synth-{seed:06d}",
        grid=grid,
        freq_bins_hz=bins,
        data=linear,
    )
