"""Generative latent optimization: per-subject latents trained jointly with
the network, plus inference-time latent inversion.

Each training step touches one subject: sample a batch of directions, run the
network, and take Adam steps on the weights and on that subject's latent row.
The loss is reconstruction MSE plus (optionally) an alignment pull toward the
MMDS coordinates and the differentiable coloration metric:

    total = L2 + align_weight * ||z - z_mds||  + pbc_weight * PBC(target, prediction)
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .adam import AdamState, adam_step
from .containers import MagnitudeSet, NumericalError, ValidationError
from .dsp import PreprocessConfig, _require_compatible
from .loudness import LoudnessTables
from .metrics import erb_weights, pbc_arrays, pbc_grad_arrays
from .mmds import MmdsEmbedding
from .network import (
    ModelParams,
    PosEncoding,
    backward_from_magnitudes,
    forward,
    init_params,
)

LOSS_FLAGS = ("align", "pbc")


@dataclass(frozen=True)
class TrainConfig:
    latent_dim: int = 32
    epochs: int = 300
    locations_per_step: int = 256
    lr_weights: float = 1e-4
    lr_latents: float = 1e-2
    align_weight: float = 0.3
    pbc_weight: float = 0.2
    seed: int = 0
    loss_flags: tuple = ("align", "pbc")
    hidden_units: int = 2048
    num_octaves: int = 4
    ref_level_db: float = 75.0
    holdout_every: int = 10
    holdout_steps: int = 50

    def __post_init__(self):
        object.__setattr__(self, "loss_flags", tuple(sorted(set(self.loss_flags))))
        for flag in self.loss_flags:
            if flag not in LOSS_FLAGS:
                raise ValidationError(f"unknown loss flag {flag!r}")
        positive = {
            "latent_dim": self.latent_dim,
            "epochs": self.epochs,
            "locations_per_step": self.locations_per_step,
            "lr_weights": self.lr_weights,
            "lr_latents": self.lr_latents,
            "hidden_units": self.hidden_units,
            "holdout_every": self.holdout_every,
            "holdout_steps": self.holdout_steps,
        }
        for name, value in positive.items():
            if not (value > 0):
                raise ValidationError(f"{name} must be positive")
        if self.align_weight < 0 or self.pbc_weight < 0:
            raise ValidationError("loss weights must be non-negative")
        if self.num_octaves < 0:
            raise ValidationError("num_octaves must be >= 0")

    @property
    def align_enabled(self) -> bool:
        return "align" in self.loss_flags

    @property
    def pbc_enabled(self) -> bool:
        return "pbc" in self.loss_flags

    def encoding(self) -> PosEncoding:
        return PosEncoding(self.num_octaves)


@dataclass(frozen=True)
class LatentTable:
    """One latent row per training subject."""

    subject_ids: list
    z: np.ndarray

    def __post_init__(self):
        ids = [str(s) for s in self.subject_ids]
        z = np.asarray(self.z, dtype=np.float64)
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate subject ids in latent table")
        if z.ndim != 2 or z.shape[0] != len(ids):
            raise ValidationError("latent table must be (N, D) matching ids")
        if not np.isfinite(z).all():
            raise ValidationError("non-finite latent")
        z = np.ascontiguousarray(z)
        z.flags.writeable = False
        object.__setattr__(self, "subject_ids", ids)
        object.__setattr__(self, "z", z)

    @property
    def dim(self) -> int:
        return self.z.shape[1]

    def row_of(self, subject_id: str) -> np.ndarray:
        return self.z[self.subject_ids.index(subject_id)]

    def mean_latent(self) -> np.ndarray:
        return self.z.mean(axis=0)


@dataclass(frozen=True)
class StepBatch:
    """One subject's sampled locations: targets are linear magnitudes (B, K, 2)."""

    subject_index: int
    location_indices: np.ndarray
    directions: np.ndarray
    targets: np.ndarray


@dataclass(frozen=True)
class ModelCheckpoint:
    params: ModelParams
    latents: LatentTable
    mmds: MmdsEmbedding | None
    preprocess: PreprocessConfig
    train_config: TrainConfig
    trace: tuple
    freq_bins_hz: np.ndarray
    selected_epoch: int

    def __post_init__(self):
        bins = np.asarray(self.freq_bins_hz, dtype=np.float64)
        if bins.ndim != 1 or bins.size * 2 != self.params.w_out.shape[0]:
            raise ValidationError("freq bins inconsistent with network output size")
        if self.latents.dim != self.train_config.latent_dim:
            raise ValidationError("latent table dim inconsistent with config")
        bins = np.ascontiguousarray(bins)
        bins.flags.writeable = False
        object.__setattr__(self, "freq_bins_hz", bins)
        object.__setattr__(self, "trace", tuple(self.trace))

    def loudness_tables(self) -> LoudnessTables:
        return LoudnessTables.for_bins(
            self.freq_bins_hz, ref_level_db=self.train_config.ref_level_db
        )


def _align_term(z: np.ndarray, z_mds: np.ndarray) -> tuple[float, np.ndarray]:
    diff = z - z_mds
    norm = float(np.sqrt((diff * diff).sum()))
    grad = diff / norm if norm > 0 else np.zeros_like(diff)
    return norm, grad


def _mds_row(mmds: MmdsEmbedding, latents: LatentTable, subject_index: int) -> np.ndarray:
    return mmds.coord_of(latents.subject_ids[subject_index])


def _loss_pieces(params, latents, batch, mmds, cfg, tables, want_grads):
    z = latents.z[batch.subject_index]
    prediction, cache = forward(params, z, batch.directions, cfg.encoding())
    residual = prediction - batch.targets
    l2 = float((residual * residual).mean())

    align = 0.0
    align_grad = None
    if cfg.align_enabled:
        if mmds is None:
            raise ValidationError("align flag set but no MMDS embedding given")
        align, align_grad = _align_term(z, _mds_row(mmds, latents, batch.subject_index))

    pbc_term = 0.0
    weights = None
    if cfg.pbc_enabled:
        if tables is None:
            raise ValidationError("pbc flag set but no loudness tables given")
        weights = erb_weights(tables.freq_bins_hz)
        pbc_term = pbc_arrays(batch.targets, prediction, weights, tables)

    total = l2 + cfg.align_weight * align + cfg.pbc_weight * pbc_term
    breakdown = {"l2": l2, "align": align, "pbc": pbc_term, "total": total}
    if not want_grads:
        return total, breakdown, None, None

    d_mag = 2.0 * residual / residual.size
    if cfg.pbc_enabled:
        d_mag = d_mag + cfg.pbc_weight * pbc_grad_arrays(
            batch.targets, prediction, weights, tables
        )
    param_grads, d_inputs = backward_from_magnitudes(params, cache, d_mag)
    z_grad = d_inputs[:, cfg.encoding().feature_size :].sum(axis=0)
    if cfg.align_enabled:
        z_grad = z_grad + cfg.align_weight * align_grad
    return total, breakdown, param_grads, z_grad


def loss_total(
    params: ModelParams,
    latents: LatentTable,
    batch: StepBatch,
    mmds: MmdsEmbedding | None,
    cfg: TrainConfig,
    tables: LoudnessTables | None = None,
) -> tuple[float, dict]:
    """Total loss and per-term breakdown for one subject batch."""
    total, breakdown, _, _ = _loss_pieces(params, latents, batch, mmds, cfg, tables, False)
    return total, breakdown


def backward(
    params: ModelParams,
    latents: LatentTable,
    batch: StepBatch,
    mmds: MmdsEmbedding | None,
    cfg: TrainConfig,
    tables: LoudnessTables | None = None,
) -> tuple[dict, np.ndarray, dict]:
    """Exact gradients of the total loss: (param gradient dict keyed like
    ModelParams.tensors(), grad for the batch's latent row, loss breakdown)."""
    _, breakdown, param_grads, z_grad = _loss_pieces(
        params, latents, batch, mmds, cfg, tables, True
    )
    return param_grads, z_grad, breakdown


def _optimize_latent(params, encoding, z0, directions, targets, steps, lr,
                     pbc_weight=0.0, tables=None, weights=None):
    """Adam on a single latent against fixed weights; full-batch, deterministic."""
    state = AdamState(value=z0)
    size = targets.size
    for _ in range(steps):
        prediction, cache = forward(params, state.value, directions, encoding)
        d_mag = 2.0 * (prediction - targets) / size
        if pbc_weight > 0.0:
            d_mag = d_mag + pbc_weight * pbc_grad_arrays(targets, prediction, weights, tables)
        _, d_inputs = backward_from_magnitudes(params, cache, d_mag)
        z_grad = d_inputs[:, encoding.feature_size :].sum(axis=0)
        adam_step(state, z_grad, lr)
    return state.value


def _reconstruction_l2(params, encoding, z, directions, targets) -> float:
    prediction, _ = forward(params, z, directions, encoding)
    residual = prediction - targets
    return float((residual * residual).mean())


def train_glo(
    train_sets,
    mmds: MmdsEmbedding | None,
    cfg: TrainConfig,
    preprocess: PreprocessConfig = PreprocessConfig(),
    holdout=None,
) -> ModelCheckpoint:
    """Jointly optimize network weights and per-subject latents.

    Latents start from seeded normal(0, 0.01^2), weights He-uniform; every
    epoch visits the subjects in a fresh shuffled order, sampling
    locations_per_step directions per subject. When `holdout` sets are given,
    held-out reconstruction L2 (via short inversions) is measured every
    holdout_every epochs and the best snapshot is kept; otherwise the final
    epoch is returned. Loss trace is recorded per epoch.
    """
    train_sets = list(train_sets)
    if not train_sets:
        raise ValidationError("no training subjects")
    for other in train_sets[1:]:
        _require_compatible(train_sets[0], other)
    subject_ids = [s.subject_id for s in train_sets]
    if len(set(subject_ids)) != len(subject_ids):
        raise ValidationError("duplicate subject ids in training set")
    bins = train_sets[0].freq_bins_hz.astype(np.float64)
    if cfg.align_enabled:
        if mmds is None:
            raise ValidationError("align flag set but no MMDS embedding given")
        if mmds.dim != cfg.latent_dim:
            raise ValidationError(
                f"MMDS dim {mmds.dim} != latent dim {cfg.latent_dim}"
            )
        missing = set(subject_ids) - set(mmds.subject_ids)
        if missing:
            raise ValidationError(f"MMDS embedding missing subjects: {sorted(missing)}")

    encoding = cfg.encoding()
    tables = None
    if cfg.pbc_enabled:
        tables = LoudnessTables.for_bins(bins, ref_level_db=cfg.ref_level_db)

    n = len(train_sets)
    num_locations = train_sets[0].grid.count
    batch_size = min(cfg.locations_per_step, num_locations)
    directions = train_sets[0].grid.directions.astype(np.float64)
    targets = [s.data.astype(np.float64) for s in train_sets]

    seed_root = np.random.SeedSequence(cfg.seed)
    z_seed, w_seed, order_seed = seed_root.spawn(3)
    z_values = np.random.default_rng(z_seed).normal(0.0, 0.01, size=(n, cfg.latent_dim))
    params = init_params(
        np.random.default_rng(w_seed),
        input_size=encoding.feature_size + cfg.latent_dim,
        hidden_units=cfg.hidden_units,
        num_bins=bins.size,
    )
    order_rng = np.random.default_rng(order_seed)

    weight_states = {name: AdamState(value=t) for name, t in params.tensors().items()}
    latent_states = [AdamState(value=z_values[i]) for i in range(n)]

    def current_params() -> ModelParams:
        return ModelParams(**{name: st.value for name, st in weight_states.items()})

    def current_latents() -> LatentTable:
        return LatentTable(
            subject_ids=subject_ids, z=np.stack([st.value for st in latent_states])
        )

    holdout_data = None
    if holdout:
        holdout = list(holdout)
        for h in holdout:
            _require_compatible(train_sets[0], h)
        holdout_data = [
            (h.grid.directions.astype(np.float64), h.data.astype(np.float64))
            for h in holdout
        ]

    def holdout_l2(p: ModelParams, z_mean: np.ndarray) -> float:
        values = []
        for dirs, tgt in holdout_data:
            z_inv = _optimize_latent(
                p, encoding, z_mean.copy(), dirs, tgt, cfg.holdout_steps, cfg.lr_latents
            )
            values.append(_reconstruction_l2(p, encoding, z_inv, dirs, tgt))
        return float(np.mean(values))

    trace = []
    best = None  # (holdout_l2, epoch, params, latents)
    for epoch in range(cfg.epochs):
        sums = {"l2": 0.0, "align": 0.0, "pbc": 0.0, "total": 0.0}
        for subject in order_rng.permutation(n):
            loc_idx = order_rng.choice(num_locations, size=batch_size, replace=False)
            batch = StepBatch(
                subject_index=int(subject),
                location_indices=loc_idx,
                directions=directions[loc_idx],
                targets=targets[subject][loc_idx],
            )
            params = current_params()
            latents = current_latents()
            param_grads, z_grad, breakdown = backward(
                params, latents, batch, mmds, cfg, tables
            )
            if not np.isfinite(breakdown["total"]):
                err = NumericalError(
                    f"training diverged at epoch {epoch} (loss NaN/Inf)"
                )
                err.trace = tuple(trace)
                raise err
            for name, st in weight_states.items():
                adam_step(st, param_grads[name], cfg.lr_weights)
            adam_step(latent_states[subject], z_grad, cfg.lr_latents)
            for key in sums:
                sums[key] += breakdown[key]

        record = {"epoch": epoch, **{k: v / n for k, v in sums.items()}}
        if not np.isfinite(record["total"]):
            err = NumericalError(f"training diverged at epoch {epoch} (loss NaN/Inf)")
            err.trace = tuple(trace) + (record,)
            raise err
        if holdout_data and ((epoch + 1) % cfg.holdout_every == 0 or epoch == cfg.epochs - 1):
            p = current_params()
            score = holdout_l2(p, np.stack([st.value for st in latent_states]).mean(axis=0))
            record["holdout_l2"] = score
            if best is None or score < best[0]:
                best = (score, epoch, p, current_latents())
        trace.append(record)

    if best is not None:
        _, selected_epoch, params, latents = best
    else:
        selected_epoch = cfg.epochs - 1
        params = current_params()
        latents = current_latents()
    return ModelCheckpoint(
        params=params,
        latents=latents,
        mmds=mmds,
        preprocess=preprocess,
        train_config=cfg,
        trace=tuple(trace),
        freq_bins_hz=bins,
        selected_epoch=selected_epoch,
    )


def invert_latent(
    checkpoint: ModelCheckpoint,
    target: MagnitudeSet,
    steps: int = 500,
    lr: float = 1e-2,
    use_pbc: bool | None = None,
) -> np.ndarray:
    """Recover a latent for an unseen subject with the weights held fixed.

    Starts from the mean training latent and runs full-batch Adam on the
    reconstruction loss (plus the coloration term when the checkpoint was
    trained with it; override with use_pbc). steps=0 returns the mean latent.
    The alignment term never applies: unseen subjects have no MMDS row.
    """
    bins = np.asarray(target.freq_bins_hz, dtype=np.float64)
    if bins.shape != checkpoint.freq_bins_hz.shape or not np.allclose(
        bins, checkpoint.freq_bins_hz, rtol=1e-4, atol=1e-6
    ):
        raise ValidationError("target bins incompatible with checkpoint")
    if steps < 0:
        raise ValidationError("steps must be >= 0")
    cfg = checkpoint.train_config
    with_pbc = cfg.pbc_enabled if use_pbc is None else use_pbc
    tables = checkpoint.loudness_tables() if with_pbc else None
    weights = erb_weights(checkpoint.freq_bins_hz) if with_pbc else None
    return _optimize_latent(
        checkpoint.params,
        cfg.encoding(),
        checkpoint.latents.mean_latent().copy(),
        target.grid.directions.astype(np.float64),
        target.data.astype(np.float64),
        steps,
        lr,
        pbc_weight=cfg.pbc_weight if with_pbc else 0.0,
        tables=tables,
        weights=weights,
    )


def predict_magnitudes(
    checkpoint: ModelCheckpoint, z: np.ndarray, grid, subject_id: str = "reconstruction"
) -> MagnitudeSet:
    """Run the network over a whole grid and wrap the result as a MagnitudeSet."""
    prediction, _ = forward(
        checkpoint.params,
        z,
        grid.directions.astype(np.float64),
        checkpoint.train_config.encoding(),
    )
    return MagnitudeSet(
        subject_id=subject_id,
        grid=grid,
        freq_bins_hz=checkpoint.freq_bins_hz,
        data=prediction,
    )


def baseline_config(cfg: TrainConfig) -> TrainConfig:
    """The reconstruction-only ablation of a config (no align/pbc terms)."""
    return replace(cfg, loss_flags=())
