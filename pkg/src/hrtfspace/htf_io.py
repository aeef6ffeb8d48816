"""Reader/writer for the HTF container format.

Layout (little-endian):

    magic       4 bytes, ASCII "HTF1"
    version     u32, currently 1
    domain      u8, 0 = time-domain HRIR, 1 = linear magnitude
    id_len      u32, then id_len bytes of UTF-8 subject id
    sample_rate f32 (0 permitted for magnitude sets)
    L           u32 number of directions
    T_or_K      u32 taps (HRIR) or frequency bins (magnitude)
    grid        L pairs of f32 (azimuth_deg, elevation_deg)
    bins        K f32 bin frequencies (magnitude sets only)
    data        L x 2 x T_or_K f32, row-major (location, ear, sample/bin)

Payloads are float32 end to end, so write -> read is bit-identical.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .containers import HrirSet, MagnitudeSet, SphericalGrid, ValidationError

MAGIC = b"HTF1"
VERSION = 1
_DOMAIN_HRIR = 0
_DOMAIN_MAGNITUDE = 1


class HtfError(ValueError):
    """Base class for HTF format errors."""


class BadMagicError(HtfError):
    pass


class UnsupportedVersionError(HtfError):
    pass


class TruncatedPayloadError(HtfError):
    pass


def write_htf(dataset, path) -> None:
    """Serialize an HrirSet or MagnitudeSet to `path` in the HTF format."""
    if isinstance(dataset, HrirSet):
        domain = _DOMAIN_HRIR
        sample_rate = float(dataset.sample_rate_hz)
        payload = dataset.data  # already (L, 2, T)
        bins = None
    elif isinstance(dataset, MagnitudeSet):
        domain = _DOMAIN_MAGNITUDE
        sample_rate = 0.0
        payload = np.transpose(dataset.data, (0, 2, 1))  # (L, K, 2) -> (L, 2, K)
        bins = dataset.freq_bins_hz
    else:
        raise ValidationError(f"cannot write object of type {type(dataset).__name__}")

    id_bytes = dataset.subject_id.encode("utf-8")
    parts = [
        MAGIC,
        struct.pack("<IB", VERSION, domain),
        struct.pack("<I", len(id_bytes)),
        id_bytes,
        struct.pack("<fII", sample_rate, dataset.grid.count, payload.shape[2]),
        np.ascontiguousarray(dataset.grid.directions, dtype="<f4").tobytes(),
    ]
    if bins is not None:
        parts.append(np.ascontiguousarray(bins, dtype="<f4").tobytes())
    parts.append(np.ascontiguousarray(payload, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Cursor:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise TruncatedPayloadError(f"truncated payload while reading {what}")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, count: int, what: str) -> np.ndarray:
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").copy()


def read_htf(path):
    """Read an HTF file; returns an HrirSet or MagnitudeSet per its domain flag.

    Raises BadMagicError, UnsupportedVersionError, TruncatedPayloadError or
    ValidationError (invariants are re-checked on load).
    """
    cur = _Cursor(Path(path).read_bytes())
    if cur.take(4, "magic") != MAGIC:
        raise BadMagicError("bad magic")
    (version,) = cur.unpack("<I", "version")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    (domain,) = cur.unpack("<B", "domain flag")
    if domain not in (_DOMAIN_HRIR, _DOMAIN_MAGNITUDE):
        raise ValidationError(f"unknown domain flag {domain}")
    (id_len,) = cur.unpack("<I", "subject id length")
    subject_id = cur.take(id_len, "subject id").decode("utf-8")
    sample_rate, num_locations, t_or_k = cur.unpack("<fII", "header")

    grid = SphericalGrid(cur.array(2 * num_locations, "grid").reshape(num_locations, 2))
    bins = None
    if domain == _DOMAIN_MAGNITUDE:
        bins = cur.array(t_or_k, "bin frequencies")
    data = cur.array(num_locations * 2 * t_or_k, "data").reshape(num_locations, 2, t_or_k)
    if cur.pos != len(cur.blob):
        raise ValidationError("trailing bytes after payload")

    if domain == _DOMAIN_HRIR:
        return HrirSet(subject_id=subject_id, sample_rate_hz=sample_rate, grid=grid, data=data)
    return MagnitudeSet(
        subject_id=subject_id,
        grid=grid,
        freq_bins_hz=bins,
        data=np.transpose(data, (0, 2, 1)),
    )
