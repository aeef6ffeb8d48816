"""Metric multidimensional scaling via double centering + Jacobi eigensolver.

Classical (Torgerson) MDS: square the dissimilarities, double-center into a
cross-product matrix, eigendecompose, and scale the top eigenvectors by the
square roots of their eigenvalues. The eigensolver is a cyclic Jacobi sweep,
chosen for determinism and full accuracy at the subject counts involved
(N up to a few hundred).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .containers import NumericalError, ValidationError
from .metrics import DistanceMatrix

logger = logging.getLogger(__name__)


def double_center(matrix: DistanceMatrix) -> np.ndarray:
    """Cross-product matrix B = -1/2 J (M o M) J with J = I - 11^T/N."""
    squared = matrix.values.astype(np.float64) ** 2
    n = squared.shape[0]
    centering = np.eye(n) - np.full((n, n), 1.0 / n)
    return -0.5 * centering @ squared @ centering


def _jacobi_rotate(a: np.ndarray, vecs: np.ndarray, p: int, q: int) -> None:
    apq = a[p, q]
    if apq == 0.0:
        return
    diff = a[q, q] - a[p, p]
    if abs(apq) < 1e-36 * abs(diff):
        t = apq / diff
    else:
        phi = diff / (2.0 * apq)
        if phi == 0.0:
            t = 1.0
        else:
            t = np.sign(phi) / (abs(phi) + np.sqrt(phi * phi + 1.0))
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c

    col_p, col_q = a[:, p].copy(), a[:, q].copy()
    a[:, p] = c * col_p - s * col_q
    a[:, q] = s * col_p + c * col_q
    row_p, row_q = a[p, :].copy(), a[q, :].copy()
    a[p, :] = c * row_p - s * row_q
    a[q, :] = s * row_p + c * row_q
    a[p, q] = a[q, p] = 0.0

    col_p, col_q = vecs[:, p].copy(), vecs[:, q].copy()
    vecs[:, p] = c * col_p - s * col_q
    vecs[:, q] = s * col_p + c * col_q


def _off_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.sqrt((off * off).sum()))


def symmetric_eigh(
    b: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm is <= tol * ||B||_F or
    max_sweeps is reached (NumericalError reporting the residual). Returns
    (eigenvalues descending, orthonormal eigenvectors as columns).
    """
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ValidationError("symmetric_eigh needs a square matrix")
    norm = float(np.sqrt((b * b).sum()))
    if np.abs(b - b.T).max(initial=0.0) > 1e-9 * max(1.0, norm):
        raise ValidationError("matrix is not symmetric")

    n = b.shape[0]
    a = (b + b.T) / 2.0
    vecs = np.eye(n)
    threshold = tol * norm
    for _ in range(max_sweeps):
        if _off_norm(a) <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                _jacobi_rotate(a, vecs, p, q)
    residual = _off_norm(a)
    if residual > threshold:
        raise NumericalError(
            f"Jacobi sweep did not converge: off-diagonal {residual:.3e} > {threshold:.3e}"
        )

    eigenvalues = np.diag(a).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    return eigenvalues[order], vecs[:, order]


@dataclass(frozen=True)
class MmdsEmbedding:
    """Subject coordinates whose Euclidean distances approximate a DistanceMatrix."""

    subject_ids: list
    coords: np.ndarray
    eigenvalues: np.ndarray
    fidelity: float

    def __post_init__(self):
        ids = [str(s) for s in self.subject_ids]
        coords = np.asarray(self.coords, dtype=np.float64)
        eig = np.asarray(self.eigenvalues, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[0] != len(ids):
            raise ValidationError("coords must be (N, D) matching subject ids")
        if eig.shape != (coords.shape[1],):
            raise ValidationError("need one eigenvalue per embedding dimension")
        if (np.diff(eig) > 0).any():
            raise ValidationError("eigenvalues must be nonincreasing")
        if not np.isfinite(coords).all():
            raise ValidationError("non-finite embedding coordinates")
        if not (-1.0 - 1e-12 <= self.fidelity <= 1.0 + 1e-12):
            raise ValidationError("fidelity outside [-1, 1]")
        coords = np.ascontiguousarray(coords)
        coords.flags.writeable = False
        eig = np.ascontiguousarray(eig)
        eig.flags.writeable = False
        object.__setattr__(self, "subject_ids", ids)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "eigenvalues", eig)

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def coord_of(self, subject_id: str) -> np.ndarray:
        return self.coords[self.subject_ids.index(subject_id)]


def pairwise_euclidean(coords: np.ndarray) -> np.ndarray:
    """Condensed (upper-triangle, row-major) Euclidean distances."""
    diff = coords[:, np.newaxis, :] - coords[np.newaxis, :, :]
    full = np.sqrt((diff * diff).sum(axis=2))
    iu = np.triu_indices(coords.shape[0], k=1)
    return full[iu]


def _distance_correlation(embedded: np.ndarray, original: np.ndarray) -> float:
    """Pearson correlation of distance vectors; degenerate pairs -> 1 by convention."""
    if embedded.size < 2 or np.ptp(embedded) == 0 or np.ptp(original) == 0:
        return 1.0
    return float(np.corrcoef(embedded, original)[0, 1])


def embed(matrix: DistanceMatrix, dim: int) -> MmdsEmbedding:
    """Embed a DistanceMatrix into `dim` Euclidean coordinates.

    Uses the top min(dim, #positive-eigenvalue) eigenpairs, zero-padding the
    rest; negative eigenvalues (non-Euclidean structure) are dropped with a
    warning. Each eigenvector's first nonzero component is made positive so
    the embedding is deterministic. fidelity is the Pearson correlation
    between embedded and original pairwise distances (1 for the degenerate
    all-zero matrix).
    """
    n = matrix.size
    if not (1 <= dim <= n):
        raise ValidationError(f"embedding dimension {dim} out of range [1, {n}]")
    if not matrix.values.any():
        return MmdsEmbedding(
            subject_ids=matrix.subject_ids,
            coords=np.zeros((n, dim)),
            eigenvalues=np.zeros(dim),
            fidelity=1.0,
        )

    eigenvalues, vectors = symmetric_eigh(double_center(matrix))
    scale = max(float(eigenvalues[0]), 0.0)
    if scale <= 0.0:
        raise ValidationError("no positive eigenvalues; matrix has no Euclidean part")
    positive = int((eigenvalues > 1e-12 * scale).sum())
    keep = min(dim, positive)
    if keep < dim:
        logger.warning(
            "only %d positive eigenvalues for %d requested dimensions; zero-padding",
            positive,
            dim,
        )

    basis = vectors[:, :keep].copy()
    for j in range(keep):
        nonzero = np.flatnonzero(np.abs(basis[:, j]) > 1e-12)
        if nonzero.size and basis[nonzero[0], j] < 0:
            basis[:, j] = -basis[:, j]
    coords = np.zeros((n, dim))
    coords[:, :keep] = basis * np.sqrt(eigenvalues[:keep])

    iu = np.triu_indices(n, k=1)
    fidelity = _distance_correlation(pairwise_euclidean(coords), matrix.values[iu])
    return MmdsEmbedding(
        subject_ids=matrix.subject_ids,
        coords=coords,
        eigenvalues=eigenvalues[:dim],
        fidelity=fidelity,
    )


def save_embedding(embedding: MmdsEmbedding, path) -> None:
    """CSV export for inspection: id, c1..cD, eig1..eigD, fidelity per row."""
    d = embedding.dim
    header = (
        ["id"]
        + [f"c{j + 1}" for j in range(d)]
        + [f"eig{j + 1}" for j in range(d)]
        + ["fidelity"]
    )
    lines = [",".join(header)]
    for i, sid in enumerate(embedding.subject_ids):
        row = (
            [sid]
            + [repr(float(v)) for v in embedding.coords[i]]
            + [repr(float(v)) for v in embedding.eigenvalues]
            + [repr(float(embedding.fidelity))]
        )
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_embedding(path) -> MmdsEmbedding:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").split("\n") if ln]
    if len(lines) < 2:
        raise ValidationError("malformed embedding CSV")
    header = lines[0].split(",")
    d = sum(1 for h in header if h.startswith("c") and h[1:].isdigit())
    ids, coords = [], []
    eigenvalues, fidelity = None, None
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != 2 * d + 2:
            raise ValidationError("malformed embedding CSV row")
        ids.append(cells[0])
        coords.append([float(v) for v in cells[1 : 1 + d]])
        eigenvalues = [float(v) for v in cells[1 + d : 1 + 2 * d]]
        fidelity = float(cells[-1])
    return MmdsEmbedding(
        subject_ids=ids,
        coords=np.array(coords),
        eigenvalues=np.array(eigenvalues),
        fidelity=fidelity,
    )
