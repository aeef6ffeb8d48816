"""Core containers: spherical grids, HRIR/magnitude sets, dataset manifests.

All tensors are stored as float32, matching the on-disk HTF payload, so a
container written to disk and read back is bit-identical. Containers are
frozen after construction (arrays are marked read-only) and safe to share
across threads. Numeric kernels elsewhere upcast to float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ValidationError(ValueError):
    """An invariant of a container or file format was violated."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (non-convergence, NaN divergence)."""


def _frozen_f32(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float32)
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite values")
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class SphericalGrid:
    """Measurement directions as (azimuth_deg, elevation_deg) pairs.

    Azimuth is in [0, 360) with 0 = front and positive toward the left ear;
    elevation is in [-90, +90]. Pairs must be unique.
    """

    directions: np.ndarray

    def __post_init__(self):
        arr = _frozen_f32(self.directions, "grid directions")
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
            raise ValidationError("grid directions must have shape (L, 2) with L >= 1")
        az, el = arr[:, 0], arr[:, 1]
        if (az < 0).any() or (az >= 360).any():
            raise ValidationError("azimuth out of range [0, 360)")
        if (el < -90).any() or (el > 90).any():
            raise ValidationError("elevation out of range [-90, 90]")
        if np.unique(arr, axis=0).shape[0] != arr.shape[0]:
            raise ValidationError("duplicate (azimuth, elevation) pairs in grid")
        object.__setattr__(self, "directions", arr)

    @property
    def count(self) -> int:
        return self.directions.shape[0]

    @property
    def azimuth_deg(self) -> np.ndarray:
        return self.directions[:, 0]

    @property
    def elevation_deg(self) -> np.ndarray:
        return self.directions[:, 1]


@dataclass(frozen=True)
class HrirSet:
    """Time-domain HRIRs for one subject: data shape (L, 2, T), ears [left, right]."""

    subject_id: str
    sample_rate_hz: float
    grid: SphericalGrid
    data: np.ndarray

    def __post_init__(self):
        if not self.subject_id:
            raise ValidationError("empty subject_id")
        if not (self.sample_rate_hz > 0):
            raise ValidationError("sample_rate_hz must be positive")
        arr = _frozen_f32(self.data, "HRIR data")
        if arr.ndim != 3 or arr.shape[1] != 2 or arr.shape[2] < 1:
            raise ValidationError("HRIR data must have shape (L, 2, T) with T >= 1")
        if arr.shape[0] != self.grid.count:
            raise ValidationError("HRIR data location count does not match grid")
        object.__setattr__(self, "data", arr)

    @property
    def taps(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class MagnitudeSet:
    """Linear-scale HRTF magnitudes for one subject: data shape (L, K, 2).

    Magnitudes must be strictly positive (floored upstream); freq_bins_hz is
    strictly increasing with K entries.
    """

    subject_id: str
    grid: SphericalGrid
    freq_bins_hz: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        if not self.subject_id:
            raise ValidationError("empty subject_id")
        bins = _frozen_f32(self.freq_bins_hz, "freq_bins_hz")
        if bins.ndim != 1 or bins.shape[0] < 1:
            raise ValidationError("freq_bins_hz must be a non-empty 1-D array")
        if not (np.diff(bins.astype(np.float64)) > 0).all():
            raise ValidationError("freq_bins_hz must be strictly increasing")
        arr = _frozen_f32(self.data, "magnitude data")
        if arr.ndim != 3 or arr.shape[2] != 2:
            raise ValidationError("magnitude data must have shape (L, K, 2)")
        if arr.shape[0] != self.grid.count:
            raise ValidationError("magnitude data location count does not match grid")
        if arr.shape[1] != bins.shape[0]:
            raise ValidationError("magnitude data bin count does not match freq_bins_hz")
        if (arr <= 0).any():
            raise ValidationError("non-positive magnitude")
        object.__setattr__(self, "freq_bins_hz", bins)
        object.__setattr__(self, "data", arr)

    @property
    def num_bins(self) -> int:
        return self.freq_bins_hz.shape[0]


@dataclass(frozen=True)
class DatasetManifest:
    """Named collection of per-subject HTF files with a train/test split."""

    name: str
    subjects: tuple  # of (subject_id, path) pairs
    split: dict = field(default_factory=lambda: {"train": [], "test": []})

    def __post_init__(self):
        subjects = tuple((str(i), str(p)) for i, p in self.subjects)
        ids = [i for i, _ in subjects]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate subject ids in manifest")
        train = list(self.split.get("train", []))
        test = list(self.split.get("test", []))
        if set(train) & set(test):
            raise ValidationError("train and test splits overlap")
        known = set(ids)
        for sid in train + test:
            if sid not in known:
                raise ValidationError(f"split references unknown subject id {sid!r}")
        object.__setattr__(self, "subjects", subjects)
        object.__setattr__(self, "split", {"train": train, "test": test})

    @property
    def ids(self) -> list:
        return [i for i, _ in self.subjects]

    def path_of(self, subject_id: str) -> str:
        for sid, path in self.subjects:
            if sid == subject_id:
                return path
        raise KeyError(subject_id)

    def resolve(self, subject_id: str, base_dir=None) -> Path:
        path = Path(self.path_of(subject_id))
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        return path


def save_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "name": manifest.name,
        "subjects": [{"id": i, "path": p} for i, p in manifest.subjects],
        "split": {"train": manifest.split["train"], "test": manifest.split["test"]},
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Load and validate a manifest; relative subject paths resolve against the
    manifest's own directory."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"malformed manifest JSON: {e}") from e
    try:
        manifest = DatasetManifest(
            name=doc["name"],
            subjects=[(s["id"], s["path"]) for s in doc["subjects"]],
            split=doc.get("split", {"train": [], "test": []}),
        )
    except (KeyError, TypeError) as e:
        raise ValidationError(f"manifest missing required field: {e}") from e
    if check_files:
        for sid, _ in manifest.subjects:
            resolved = manifest.resolve(sid, base_dir=path.parent)
            if not resolved.is_file():
                raise ValidationError(f"subject {sid!r} file not found: {resolved}")
    return manifest
