"""Anchored correlation evaluation, reconstruction error reporting, and
personalization-by-selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .containers import MagnitudeSet, ValidationError
from .dsp import sde
from .metrics import DistanceMatrix, pbc
from .training import LatentTable, ModelCheckpoint, invert_latent, predict_magnitudes


def pearson(a, b) -> float:
    """Pearson correlation with population moments; constant series are an error."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("series must be 1-D and equally long")
    if a.size < 2:
        raise ValidationError("series too short")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise ValidationError("degenerate series")
    ac = a - a.mean()
    bc = b - b.mean()
    denom = np.sqrt((ac * ac).mean() * (bc * bc).mean())
    if denom == 0.0:
        raise ValidationError("degenerate series")
    return float((ac * bc).mean() / denom)


@dataclass(frozen=True)
class CorrelationReport:
    metric_name: str
    anchor_ids: list
    rho: np.ndarray
    partition: str
    target: str

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=np.float64)
        if rho.shape != (len(self.anchor_ids),):
            raise ValidationError("one rho per anchor required")
        if (np.abs(rho) > 1.0 + 1e-12).any():
            raise ValidationError("correlation outside [-1, 1]")
        rho = np.ascontiguousarray(rho)
        rho.flags.writeable = False
        object.__setattr__(self, "rho", rho)

    @property
    def mean(self) -> float:
        return float(self.rho.mean())

    @property
    def std(self) -> float:
        return float(self.rho.std())

    def as_dict(self) -> dict:
        return {
            "metric": self.metric_name,
            "partition": self.partition,
            "target": self.target,
            "anchor_ids": list(self.anchor_ids),
            "rho": [float(v) for v in self.rho],
            "mean": self.mean,
            "std": self.std,
        }


def anchored_correlation(
    anchors: LatentTable,
    targets: LatentTable,
    matrix: DistanceMatrix,
    partition: str = "train",
    target_label: str = "GT",
) -> CorrelationReport:
    """Per anchor: correlate latent distances to the targets with the matrix row.

    Anchors come from the training latent table; target latents may be
    training rows or inverted test latents. The anchor itself is excluded
    from its own trial.
    """
    known = set(matrix.subject_ids)
    for sid in list(anchors.subject_ids) + list(targets.subject_ids):
        if sid not in known:
            raise ValidationError(f"subject {sid!r} missing from distance matrix")
    rhos = []
    for i, anchor_id in enumerate(anchors.subject_ids):
        others = [j for j, sid in enumerate(targets.subject_ids) if sid != anchor_id]
        if len(others) < 3:
            raise ValidationError("fewer than 3 targets per anchor")
        z_anchor = anchors.z[i]
        latent_dist = np.sqrt(
            ((targets.z[others] - z_anchor) ** 2).sum(axis=1)
        )
        metric_dist = np.array(
            [matrix.value(anchor_id, targets.subject_ids[j]) for j in others]
        )
        rhos.append(pearson(latent_dist, metric_dist))
    return CorrelationReport(
        metric_name=matrix.metric_name,
        anchor_ids=list(anchors.subject_ids),
        rho=np.array(rhos),
        partition=partition,
        target=target_label,
    )


def paired_t_test(a, b) -> tuple[float, float]:
    """Two-sided paired t-test; returns (statistic, p-value)."""
    result = stats.ttest_rel(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    return float(result.statistic), float(result.pvalue)


def latent_for(checkpoint: ModelCheckpoint, subject: MagnitudeSet,
               invert_steps: int = 500, invert_lr: float = 1e-2):
    """Subject latent: training-table row when known, otherwise inversion."""
    if subject.subject_id in checkpoint.latents.subject_ids:
        return checkpoint.latents.row_of(subject.subject_id).copy(), "table"
    z = invert_latent(checkpoint, subject, steps=invert_steps, lr=invert_lr)
    return z, "inversion"


def reconstruct_all(checkpoint: ModelCheckpoint, sets,
                    invert_steps: int = 500, invert_lr: float = 1e-2):
    """Reconstructed MagnitudeSets (full grid) plus each latent's provenance."""
    out = []
    for subject in sets:
        z, source = latent_for(checkpoint, subject, invert_steps, invert_lr)
        recon = predict_magnitudes(
            checkpoint, z, subject.grid, subject_id=subject.subject_id
        )
        out.append((recon, source))
    return out


def reconstruction_report(
    checkpoint: ModelCheckpoint, sets, invert_steps: int = 500, invert_lr: float = 1e-2
) -> dict:
    """Per-subject SDE and PBC of reconstructions against ground truth."""
    sets = list(sets)
    tables = checkpoint.loudness_tables()
    rows = []
    for subject, (recon, source) in zip(sets, reconstruct_all(checkpoint, sets, invert_steps, invert_lr)):
        rows.append(
            {
                "subject_id": subject.subject_id,
                "latent_source": source,
                "sde_db": sde(subject, recon),
                "pbc": pbc(subject, recon, tables),
            }
        )
    return {
        "per_subject": rows,
        "mean_sde_db": float(np.mean([r["sde_db"] for r in rows])),
        "mean_pbc": float(np.mean([r["pbc"] for r in rows])),
    }


def rank_pool(z_query: np.ndarray, latents: LatentTable, pool_ids) -> list:
    """Pool ids sorted by ascending latent distance to z_query, ties by id."""
    ranked = sorted(
        (float(np.linalg.norm(z_query - latents.row_of(pid))), pid) for pid in pool_ids
    )
    return [pid for _, pid in ranked]


def personalization_select(
    checkpoint: ModelCheckpoint,
    test_subject: MagnitudeSet,
    pool_ids,
    k: int,
    invert_steps: int = 500,
    invert_lr: float = 1e-2,
) -> list:
    """Top-k training subjects nearest to the test subject in latent space."""
    pool_ids = list(pool_ids)
    if not pool_ids:
        raise ValidationError("empty candidate pool")
    if k > len(pool_ids) or k < 1:
        raise ValidationError("k out of range for candidate pool")
    z_test = invert_latent(checkpoint, test_subject, steps=invert_steps, lr=invert_lr)
    return rank_pool(z_test, checkpoint.latents, pool_ids)[:k]


def selection_report(
    checkpoint: ModelCheckpoint,
    test_subject: MagnitudeSet,
    pool_sets,
    k: int,
    metric: str = "pbc",
    invert_steps: int = 500,
    invert_lr: float = 1e-2,
) -> dict:
    """Select top-k candidates and score them against the test subject's GT.

    Reports the enforced metric and SDE for the best candidate and the mean
    over the top k.
    """
    from .metrics import aep, drmsp  # local import keeps module load light

    pool = {s.subject_id: s for s in pool_sets}
    selected = personalization_select(
        checkpoint, test_subject, list(pool.keys()), k, invert_steps, invert_lr
    )
    if metric == "pbc":
        tables = checkpoint.loudness_tables()

        def metric_fn(a, b):
            return pbc(a, b, tables)

    elif metric == "aep":
        metric_fn = aep
    elif metric == "drmsp":
        metric_fn = drmsp
    else:
        raise ValidationError(f"unknown metric {metric!r}")

    metric_values = [metric_fn(pool[sid], test_subject) for sid in selected]
    sde_values = [sde(pool[sid], test_subject) for sid in selected]
    return {
        "subject_id": test_subject.subject_id,
        "selected": selected,
        "metric": metric,
        "best_metric": metric_values[0],
        "best_sde_db": sde_values[0],
        "topk_metric": float(np.mean(metric_values)),
        "topk_sde_db": float(np.mean(sde_values)),
    }
