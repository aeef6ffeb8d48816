"""Perception-informed latent representations of HRTF magnitude sets.

A numpy library for computing objective perceptual dissimilarities between
HRTF sets (binaural coloration, externalization and sagittal-localization
proxies), embedding them with metric multidimensional scaling, training a
coordinate-network generator with per-subject latent codes, and using the
learned latent space to select personalized HRTFs.
"""

__version__ = "0.1.0"

from .containers import (
    DatasetManifest,
    HrirSet,
    MagnitudeSet,
    SphericalGrid,
    ValidationError,
)
from .coords import interaural_coords, wrap_degrees
from .dsp import PreprocessConfig, erb_bandwidth, fft_magnitude, sde, to_db
from .htf_io import read_htf, write_htf
from .loudness import LoudnessTables
from .metrics import (
    DistanceMatrix,
    aep,
    drmsp,
    load_matrix,
    pairwise_matrix,
    pbc,
    pbc_grad,
    store_matrix,
)
from .mmds import MmdsEmbedding, double_center, embed, symmetric_eigh
from .network import ModelParams, PosEncoding, encode_direction, forward
from .synthetic import default_grid, synth_subject
from .training import (
    LatentTable,
    ModelCheckpoint,
    TrainConfig,
    invert_latent,
    train_glo,
)
from .evaluation import (
    CorrelationReport,
    anchored_correlation,
    pearson,
    personalization_select,
    reconstruction_report,
)

__all__ = [
    "CorrelationReport",
    "DatasetManifest",
    "DistanceMatrix",
    "HrirSet",
    "LatentTable",
    "LoudnessTables",
    "MagnitudeSet",
    "MmdsEmbedding",
    "ModelCheckpoint",
    "ModelParams",
    "PosEncoding",
    "PreprocessConfig",
    "SphericalGrid",
    "TrainConfig",
    "ValidationError",
    "aep",
    "anchored_correlation",
    "default_grid",
    "double_center",
    "drmsp",
    "embed",
    "encode_direction",
    "erb_bandwidth",
    "fft_magnitude",
    "forward",
    "interaural_coords",
    "invert_latent",
    "load_matrix",
    "pairwise_matrix",
    "pbc",
    "pbc_grad",
    "pearson",
    "personalization_select",
    "read_htf",
    "reconstruction_report",
    "sde",
    "store_matrix",
    "symmetric_eigh",
    "synth_subject",
    "to_db",
    "train_glo",
    "wrap_degrees",
    "write_htf",
]
