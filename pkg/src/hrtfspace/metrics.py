"""Objective perceptual dissimilarities between HRTF magnitude sets.

Three metrics:

* pbc  — predicted binaural coloration: loudness-weighted dB spectra mapped
  to sones, ERB-weighted absolute sone differences, averaged over directions
  and ears. Differentiable; `pbc_grad` is its exact analytic gradient.
* aep  — externalization proxy: 60/40 blend of monaural spectral similarity
  and interaural-level-difference similarity (both Pearson-based), converted
  to a distance. A documented stand-in, not the full decision model.
* drmsp — sagittal localization proxy: noiseless template matching in the
  |lateral| <= 30 degree band, RMS of wrapped polar-angle errors, symmetrized.

Faithful externally-computed matrices can be ingested via `load_matrix`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .containers import MagnitudeSet, ValidationError
from .coords import interaural_coords, wrap_degrees
from .dsp import _require_compatible, erb_bandwidth, to_db
from .loudness import LoudnessTables

logger = logging.getLogger(__name__)

SAGITTAL_LATERAL_MAX_DEG = 30.0
_SONE_EXP_SCALE = np.log(2.0) / 10.0


def erb_weights(freq_bins_hz) -> np.ndarray:
    """ERB values normalized to sum to one."""
    w = erb_bandwidth(np.asarray(freq_bins_hz, dtype=np.float64))
    return w / w.sum()


def _check_tables(x: MagnitudeSet, tables: LoudnessTables) -> None:
    bins = x.freq_bins_hz.astype(np.float64)
    if tables.freq_bins_hz.shape != bins.shape or not np.allclose(
        tables.freq_bins_hz, bins, rtol=1e-4, atol=1e-6
    ):
        raise ValidationError("loudness tables were built for different frequency bins")


def sone_map(magnitudes: np.ndarray, tables: LoudnessTables) -> np.ndarray:
    """Map linear magnitudes (L, K, 2) to sones at the reference level."""
    phon = (
        to_db(magnitudes)
        + tables.ref_level_db
        + tables.offsets_db[np.newaxis, :, np.newaxis]
    )
    return 2.0 ** ((phon - 40.0) / 10.0)


def pbc_arrays(x: np.ndarray, y: np.ndarray, weights: np.ndarray, tables: LoudnessTables) -> float:
    """pbc on raw (L, K, 2) float arrays with precomputed ERB weights."""
    diff = np.abs(sone_map(x, tables) - sone_map(y, tables))
    per_location_ear = (weights[np.newaxis, :, np.newaxis] * diff).sum(axis=1)
    return float(per_location_ear.mean())


def pbc_grad_arrays(
    x: np.ndarray, y: np.ndarray, weights: np.ndarray, tables: LoudnessTables
) -> np.ndarray:
    """Gradient of pbc_arrays w.r.t. y, same shape as y."""
    s_x = sone_map(x, tables)
    s_y = sone_map(y, tables)
    # d sone / d linear magnitude = sone * 2 ln2 / (m ln10)
    dsone = s_y * (2.0 * np.log(2.0) / np.log(10.0)) / np.asarray(y, dtype=np.float64)
    count = y.shape[0] * 2  # (location, ear) cells averaged by pbc
    return np.sign(s_y - s_x) * weights[np.newaxis, :, np.newaxis] * dsone / count


def pbc(x: MagnitudeSet, y: MagnitudeSet, tables: LoudnessTables) -> float:
    """Predicted binaural coloration between two magnitude sets, in sones."""
    _require_compatible(x, y)
    _check_tables(x, tables)
    weights = erb_weights(x.freq_bins_hz)
    return pbc_arrays(x.data.astype(np.float64), y.data.astype(np.float64), weights, tables)


def pbc_grad(x: MagnitudeSet, y: MagnitudeSet, tables: LoudnessTables) -> np.ndarray:
    """Exact gradient of pbc(x, y, tables) w.r.t. y's linear magnitudes.

    Chain rule through dB -> phon -> sone -> ERB-weighted absolute difference;
    subgradient 0 where the sone values coincide. Shape (L, K, 2).
    """
    _require_compatible(x, y)
    _check_tables(x, tables)
    weights = erb_weights(x.freq_bins_hz)
    return pbc_grad_arrays(
        x.data.astype(np.float64), y.data.astype(np.float64), weights, tables
    )


def _row_similarity(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise (pearson + 1)/2 similarity with the degenerate-spectrum rule:
    constant rows give 1 when both sides are constant and equal, else 0.5."""
    const_a = np.all(a == a[:, :1], axis=1)
    const_b = np.all(b == b[:, :1], axis=1)
    ac = a - a.mean(axis=1, keepdims=True)
    bc = b - b.mean(axis=1, keepdims=True)
    denom = np.sqrt((ac * ac).mean(axis=1) * (bc * bc).mean(axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.clip((ac * bc).mean(axis=1) / denom, -1.0, 1.0)
    sim = (r + 1.0) / 2.0
    degenerate = const_a | const_b
    sim[degenerate] = 0.5
    sim[degenerate & const_a & const_b & (a[:, 0] == b[:, 0])] = 1.0
    return sim


def aep(x: MagnitudeSet, y: MagnitudeSet) -> float:
    """Externalization-perception proxy distance in [0, 1].

    Per location: 1 - (0.6 * monaural dB-spectrum similarity + 0.4 * ILD
    profile similarity), averaged over locations.
    """
    _require_compatible(x, y)
    db_x = to_db(x.data)
    db_y = to_db(y.data)
    sim_mon = 0.5 * (
        _row_similarity(db_x[:, :, 0], db_y[:, :, 0])
        + _row_similarity(db_x[:, :, 1], db_y[:, :, 1])
    )
    sim_ild = _row_similarity(
        db_x[:, :, 0] - db_x[:, :, 1], db_y[:, :, 0] - db_y[:, :, 1]
    )
    distance = 1.0 - (0.6 * sim_mon + 0.4 * sim_ild)
    return float(distance.mean())


def sagittal_band(x: MagnitudeSet) -> np.ndarray:
    """Indices of grid directions with |lateral| <= 30 degrees."""
    lateral, _ = interaural_coords(
        x.grid.azimuth_deg.astype(np.float64), x.grid.elevation_deg.astype(np.float64)
    )
    return np.flatnonzero(np.abs(lateral) <= SAGITTAL_LATERAL_MAX_DEG)


def _rmsp_cross(own_db: np.ndarray, other_db: np.ndarray, polar: np.ndarray) -> float:
    """RMS wrapped polar error when template-matching other_db against own_db.

    own_db/other_db: (S, K, 2) dB spectra on the sagittal directions. An exact
    tie with the rendered direction's own template resolves to that direction
    (so self-localization is error-free); other ties go to the lowest index.
    """
    n = own_db.shape[0]
    errors = np.empty(n)
    flat_own = own_db.reshape(n, -1)
    flat_other = other_db.reshape(n, -1)
    for i in range(n):
        sq_mean = ((flat_other[i][np.newaxis, :] - flat_own) ** 2).mean(axis=1)
        best = int(np.argmin(sq_mean))
        if sq_mean[i] == sq_mean[best]:
            best = i
        errors[i] = wrap_degrees(polar[best] - polar[i])
    return float(np.sqrt(np.mean(errors**2)))


def drmsp(a: MagnitudeSet, b: MagnitudeSet) -> float:
    """Sagittal localization proxy: increase in RMS polar error (degrees).

    Noiseless template matching makes the own-HRTF condition exactly zero, so
    the returned value is the symmetrized cross-listener RMS polar error.
    """
    _require_compatible(a, b)
    band = sagittal_band(a)
    if band.size < 2:
        raise ValidationError("grid has fewer than 2 directions with |lateral| <= 30 degrees")
    _, polar = interaural_coords(
        a.grid.azimuth_deg.astype(np.float64)[band],
        a.grid.elevation_deg.astype(np.float64)[band],
    )
    db_a = to_db(a.data[band])
    db_b = to_db(b.data[band])
    return 0.5 * (_rmsp_cross(db_a, db_b, polar) + _rmsp_cross(db_b, db_a, polar))


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric pairwise perceptual dissimilarities with subject identifiers."""

    subject_ids: list
    values: np.ndarray
    metric_name: str

    def __post_init__(self):
        ids = [str(s) for s in self.subject_ids]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate subject ids in distance matrix")
        v = np.asarray(self.values, dtype=np.float64)
        n = len(ids)
        if v.shape != (n, n):
            raise ValidationError("distance matrix shape does not match subject ids")
        if not np.isfinite(v).all():
            raise ValidationError("non-finite distance")
        if (v < 0).any():
            raise ValidationError("negative distance")
        if np.abs(v - v.T).max(initial=0.0) > 1e-9:
            raise ValidationError("distance matrix asymmetric beyond 1e-9")
        if (np.diag(v) != 0).any():
            raise ValidationError("distance matrix diagonal must be zero")
        v = np.ascontiguousarray(v)
        v.flags.writeable = False
        object.__setattr__(self, "subject_ids", ids)
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return len(self.subject_ids)

    def index_of(self, subject_id: str) -> int:
        return self.subject_ids.index(subject_id)

    def value(self, id_a: str, id_b: str) -> float:
        return float(self.values[self.index_of(id_a), self.index_of(id_b)])

    def submatrix(self, ids) -> "DistanceMatrix":
        idx = [self.index_of(i) for i in ids]
        return DistanceMatrix(
            subject_ids=list(ids),
            values=self.values[np.ix_(idx, idx)],
            metric_name=self.metric_name,
        )


METRIC_NAMES = ("pbc", "aep", "drmsp")


def pairwise_matrix(
    sets,
    metric: str = "pbc",
    tables: LoudnessTables | None = None,
) -> DistanceMatrix:
    """Assemble the N x N dissimilarity matrix for a list of MagnitudeSets.

    `metric` is one of pbc / aep / drmsp; proxy metrics are labeled as such
    in the result's metric_name.
    """
    sets = list(sets)
    if len(sets) < 2:
        raise ValidationError("pairwise_matrix needs at least 2 subjects")
    for other in sets[1:]:
        _require_compatible(sets[0], other)
    if metric == "pbc":
        if tables is None:
            tables = LoudnessTables.for_bins(sets[0].freq_bins_hz.astype(np.float64))

        def func(u, v, _tables=tables):
            return pbc(u, v, _tables)

        name = "pbc"
    elif metric == "aep":
        func = aep
        name = "aep-proxy"
    elif metric == "drmsp":
        func = drmsp
        name = "drmsp-proxy"
    else:
        raise ValidationError(f"unknown metric {metric!r}")

    n = len(sets)
    values = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            values[i, j] = values[j, i] = func(sets[i], sets[j])
    return DistanceMatrix(
        subject_ids=[s.subject_id for s in sets], values=values, metric_name=name
    )


def store_matrix(matrix: DistanceMatrix, path) -> None:
    """Write the DistanceMatrix CSV (metric line, id line, then N value rows)."""
    lines = [f"metric,{matrix.metric_name}", ",".join(matrix.subject_ids)]
    for row in matrix.values:
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_matrix(path) -> DistanceMatrix:
    """Read a DistanceMatrix CSV; asymmetry <= 1e-6 is symmetrized with a warning."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln != ""]
    if len(lines) < 2 or not lines[0].startswith("metric,"):
        raise ValidationError("malformed distance CSV: missing metric line")
    metric_name = lines[0].split(",", 1)[1]
    ids = lines[1].split(",")
    n = len(ids)
    if len(lines) != 2 + n:
        raise ValidationError(f"malformed distance CSV: expected {n} value rows")
    try:
        values = np.array(
            [[float(v) for v in ln.split(",")] for ln in lines[2:]], dtype=np.float64
        )
    except ValueError as e:
        raise ValidationError(f"malformed distance CSV: {e}") from e
    if values.shape != (n, n):
        raise ValidationError("malformed distance CSV: ragged value rows")
    if (values < 0).any():
        raise ValidationError("negative distance")
    asymmetry = float(np.abs(values - values.T).max(initial=0.0))
    if asymmetry > 1e-6:
        raise ValidationError(f"distance matrix asymmetric ({asymmetry:.3e} > 1e-6)")
    if asymmetry > 0:
        logger.warning("symmetrizing distance matrix (asymmetry %.3e)", asymmetry)
        values = (values + values.T) / 2.0
    return DistanceMatrix(subject_ids=ids, values=values, metric_name=metric_name)
