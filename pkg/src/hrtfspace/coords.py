"""Interaural-polar coordinate transforms.

Vertical-polar directions (azimuth, elevation) map to an interaural-polar
pair (lateral, polar): lateral is the angle out of the median plane (positive
toward the left ear), polar parameterizes position within the sagittal plane.
Polar convention: -90 = below-front, 0 = front, 90 = above, 180 = behind,
range [-90, 270).
"""

from __future__ import annotations

import numpy as np


def interaural_coords(azimuth_deg, elevation_deg):
    """Convert vertical-polar angles (degrees) to (lateral_deg, polar_deg).

    Accepts scalars or broadcastable arrays. lateral = arcsin(sin az * cos el),
    polar = atan2(sin el, cos az * cos el) folded into [-90, 270).
    """
    az_deg = np.asarray(azimuth_deg, dtype=np.float64)
    az = np.deg2rad(az_deg)
    el = np.deg2rad(np.asarray(elevation_deg, dtype=np.float64))
    # sin(180 deg) in floats is ~1e-16; pin the median plane to exactly zero
    sin_az = np.where(np.mod(az_deg, 180.0) == 0.0, 0.0, np.sin(az))
    lateral = np.rad2deg(np.arcsin(np.clip(sin_az * np.cos(el), -1.0, 1.0)))
    polar = np.rad2deg(np.arctan2(np.sin(el), np.cos(az) * np.cos(el)))
    polar = np.where(polar < -90.0, polar + 360.0, polar)
    if np.isscalar(azimuth_deg) and np.isscalar(elevation_deg):
        return float(lateral), float(polar)
    return lateral, polar


def wrap_degrees(delta):
    """Wrap an angular difference (degrees) into (-180, 180]."""
    wrapped = 180.0 - np.mod(180.0 - np.asarray(delta, dtype=np.float64), 360.0)
    if np.isscalar(delta):
        return float(wrapped)
    return wrapped
