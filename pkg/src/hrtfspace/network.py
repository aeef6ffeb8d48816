"""Coordinate network mapping (direction, latent) -> magnitudes, by hand.

Two ReLU layers on a sinusoidally encoded direction concatenated with the
subject latent; the head predicts a dB spectrum for both ears which is
exponentiated to linear magnitudes and floored. Forward caches every
activation so the reverse pass is exact (ReLU and floor use subgradient 0
at their kinks).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .containers import ValidationError

LN10_OVER_20 = np.log(10.0) / 20.0
DEFAULT_MAGNITUDE_FLOOR = 1e-5


@dataclass(frozen=True)
class PosEncoding:
    """Sinusoidal direction featurization with octave-doubling frequencies."""

    num_octaves: int = 4

    def __post_init__(self):
        if self.num_octaves < 0:
            raise ValidationError("num_octaves must be >= 0")

    @property
    def feature_size(self) -> int:
        return 4 * self.num_octaves


def encode_direction(azimuth_deg, elevation_deg, encoding: PosEncoding) -> np.ndarray:
    """Features [sin(2^m az), cos(2^m az), sin(2^m el), cos(2^m el)] for each octave."""
    return encode_directions(
        np.array([[azimuth_deg, elevation_deg]], dtype=np.float64), encoding
    )[0]


def encode_directions(directions: np.ndarray, encoding: PosEncoding) -> np.ndarray:
    """Batch version: (B, 2) degrees -> (B, 4 * num_octaves)."""
    angles = np.deg2rad(np.asarray(directions, dtype=np.float64))
    feats = np.empty((angles.shape[0], encoding.feature_size))
    for m in range(encoding.num_octaves):
        scaled = (2.0**m) * angles
        feats[:, 4 * m] = np.sin(scaled[:, 0])
        feats[:, 4 * m + 1] = np.cos(scaled[:, 0])
        feats[:, 4 * m + 2] = np.sin(scaled[:, 1])
        feats[:, 4 * m + 3] = np.cos(scaled[:, 1])
    return feats


@dataclass(frozen=True)
class ModelParams:
    """Weights of the two-layer network; w_out rows cover 2K outputs (K bins x 2 ears)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2", "w_out", "b_out"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.isfinite(arr).all():
                raise ValidationError(f"non-finite values in {name}")
            object.__setattr__(self, name, arr)
        hidden, f_in = self.w1.shape
        if self.b1.shape != (hidden,) or self.w2.shape != (hidden, hidden):
            raise ValidationError("layer-1/2 shapes inconsistent")
        if self.b2.shape != (hidden,):
            raise ValidationError("b2 shape inconsistent")
        out_dim = self.w_out.shape[0]
        if self.w_out.shape != (out_dim, hidden) or self.b_out.shape != (out_dim,):
            raise ValidationError("output layer shapes inconsistent")
        if out_dim % 2 != 0:
            raise ValidationError("output dimension must be 2K")
        del f_in

    @property
    def hidden_units(self) -> int:
        return self.w1.shape[0]

    @property
    def input_size(self) -> int:
        return self.w1.shape[1]

    @property
    def num_bins(self) -> int:
        return self.w_out.shape[0] // 2

    def tensors(self) -> dict:
        return {
            "w1": self.w1,
            "b1": self.b1,
            "w2": self.w2,
            "b2": self.b2,
            "w_out": self.w_out,
            "b_out": self.b_out,
        }


def init_params(
    rng: np.random.Generator, input_size: int, hidden_units: int, num_bins: int
) -> ModelParams:
    """He-uniform weight init, zero biases; draw order is fixed for determinism."""

    def he(fan_in, shape):
        limit = np.sqrt(6.0 / fan_in)
        return rng.uniform(-limit, limit, size=shape)

    return ModelParams(
        w1=he(input_size, (hidden_units, input_size)),
        b1=np.zeros(hidden_units),
        w2=he(hidden_units, (hidden_units, hidden_units)),
        b2=np.zeros(hidden_units),
        w_out=he(hidden_units, (2 * num_bins, hidden_units)),
        b_out=np.zeros(2 * num_bins),
    )


@dataclass
class ForwardCache:
    inputs: np.ndarray       # (B, F_in)
    h1_pre: np.ndarray
    h1: np.ndarray
    h2_pre: np.ndarray
    h2: np.ndarray
    out_db: np.ndarray       # (B, 2K)
    magnitudes: np.ndarray   # (B, K, 2), floored
    floored: np.ndarray      # bool (B, 2K)


def forward(
    params: ModelParams,
    z: np.ndarray,
    directions: np.ndarray,
    encoding: PosEncoding = PosEncoding(),
    magnitude_floor: float = DEFAULT_MAGNITUDE_FLOOR,
) -> tuple[np.ndarray, ForwardCache]:
    """Predict linear magnitudes (B, K, 2) for a batch of directions (B, 2).

    The head output is interpreted as dB and mapped through 10^(out/20) with
    a hard floor; out[:, 2k + e] is (bin k, ear e).
    """
    z = np.asarray(z, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    if directions.ndim != 2 or directions.shape[1] != 2:
        raise ValidationError("directions must have shape (B, 2)")
    feats = encode_directions(directions, encoding)
    if feats.shape[1] + z.shape[0] != params.input_size:
        raise ValidationError(
            f"encoded size {feats.shape[1]} + latent {z.shape[0]} != input {params.input_size}"
        )
    inputs = np.concatenate(
        [feats, np.broadcast_to(z, (feats.shape[0], z.shape[0]))], axis=1
    )
    h1_pre = inputs @ params.w1.T + params.b1
    h1 = np.maximum(h1_pre, 0.0)
    h2_pre = h1 @ params.w2.T + params.b2
    h2 = np.maximum(h2_pre, 0.0)
    out_db = h2 @ params.w_out.T + params.b_out
    linear = 10.0 ** (out_db / 20.0)
    floored = linear < magnitude_floor
    clipped = np.maximum(linear, magnitude_floor)
    magnitudes = clipped.reshape(directions.shape[0], params.num_bins, 2)
    return magnitudes, ForwardCache(
        inputs=inputs,
        h1_pre=h1_pre,
        h1=h1,
        h2_pre=h2_pre,
        h2=h2,
        out_db=out_db,
        magnitudes=magnitudes,
        floored=floored,
    )


def backward_from_magnitudes(
    params: ModelParams, cache: ForwardCache, d_magnitudes: np.ndarray
) -> tuple[dict, np.ndarray]:
    """Reverse pass from dLoss/dMagnitudes.

    Returns (gradient dict keyed like ModelParams.tensors(), dLoss/dInputs).
    Gradients for floored outputs are zero (subgradient of the hard max);
    grads stay plain arrays so divergence surfaces as a loss check, not a
    container validation error.
    """
    batch = cache.inputs.shape[0]
    d_flat = np.asarray(d_magnitudes, dtype=np.float64).reshape(batch, -1)
    d_out = d_flat * cache.magnitudes.reshape(batch, -1) * LN10_OVER_20
    d_out[cache.floored] = 0.0

    d_w_out = d_out.T @ cache.h2
    d_b_out = d_out.sum(axis=0)
    d_h2 = d_out @ params.w_out
    d_h2 *= cache.h2_pre > 0
    d_w2 = d_h2.T @ cache.h1
    d_b2 = d_h2.sum(axis=0)
    d_h1 = d_h2 @ params.w2
    d_h1 *= cache.h1_pre > 0
    d_w1 = d_h1.T @ cache.inputs
    d_b1 = d_h1.sum(axis=0)
    d_inputs = d_h1 @ params.w1
    grads = {
        "w1": d_w1,
        "b1": d_b1,
        "w2": d_w2,
        "b2": d_b2,
        "w_out": d_w_out,
        "b_out": d_b_out,
    }
    return grads, d_inputs
