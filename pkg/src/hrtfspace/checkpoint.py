"""Binary model checkpoints: "PHCK" magic and length-prefixed sections.

Section layout (little-endian): u32 name length, UTF-8 name, u64 payload
length, payload. JSON payloads (config, trace) are canonical (sorted keys,
compact separators); tensor payloads are u32 rank, u32 dims, float64 data.
Everything is deterministic, so identical runs produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .containers import ValidationError
from .dsp import PreprocessConfig
from .mmds import MmdsEmbedding
from .network import ModelParams
from .training import LatentTable, ModelCheckpoint, TrainConfig
from . import __version__

MAGIC = b"PHCK"
VERSION = 1

_TENSOR_ORDER = ("w1", "b1", "w2", "b2", "w_out", "b_out", "z", "freq_bins")


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _tensor_payload(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype=np.float64)
    header = struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype="<f8").tobytes()


def _parse_tensor(payload: bytes) -> np.ndarray:
    (rank,) = struct.unpack_from("<I", payload, 0)
    dims = struct.unpack_from(f"<{rank}I", payload, 4)
    data = np.frombuffer(payload, dtype="<f8", offset=4 + 4 * rank).copy()
    expected = int(np.prod(dims)) if rank else 1
    if data.size != expected:
        raise ValidationError("tensor payload length mismatch")
    return data.reshape(dims)


def _sections(checkpoint: ModelCheckpoint):
    cfg = asdict(checkpoint.train_config)
    cfg["loss_flags"] = list(checkpoint.train_config.loss_flags)
    config = {
        "package_version": __version__,
        "preprocess": asdict(checkpoint.preprocess),
        "selected_epoch": checkpoint.selected_epoch,
        "subject_ids": checkpoint.latents.subject_ids,
        "train": cfg,
    }
    if checkpoint.mmds is not None:
        config["mmds"] = {
            "fidelity": checkpoint.mmds.fidelity,
            "subject_ids": checkpoint.mmds.subject_ids,
        }
    else:
        config["mmds"] = None

    yield "config", _canonical_json(config)
    tensors = dict(checkpoint.params.tensors())
    tensors["z"] = checkpoint.latents.z
    tensors["freq_bins"] = checkpoint.freq_bins_hz
    for name in _TENSOR_ORDER:
        yield name, _tensor_payload(tensors[name])
    if checkpoint.mmds is not None:
        yield "mmds_coords", _tensor_payload(checkpoint.mmds.coords)
        yield "mmds_eigenvalues", _tensor_payload(checkpoint.mmds.eigenvalues)
    yield "trace", _canonical_json(list(checkpoint.trace))


def save_checkpoint(checkpoint: ModelCheckpoint, path) -> None:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    for name, payload in _sections(checkpoint):
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<Q", len(payload)))
        parts.append(payload)
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> ModelCheckpoint:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ValidationError("bad checkpoint magic")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise ValidationError(f"unsupported checkpoint version {version}")
    pos = 8
    sections = {}
    while pos < len(blob):
        if pos + 4 > len(blob):
            raise ValidationError("truncated checkpoint section header")
        (name_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (payload_len,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        if pos + payload_len > len(blob):
            raise ValidationError(f"truncated checkpoint payload for {name!r}")
        sections[name] = blob[pos : pos + payload_len]
        pos += payload_len

    try:
        config = json.loads(sections["config"])
        trace = json.loads(sections["trace"])
        tensors = {name: _parse_tensor(sections[name]) for name in _TENSOR_ORDER}
    except KeyError as e:
        raise ValidationError(f"checkpoint missing section {e}") from e

    train_cfg = dict(config["train"])
    train_cfg["loss_flags"] = tuple(train_cfg["loss_flags"])
    mmds = None
    if config["mmds"] is not None:
        mmds = MmdsEmbedding(
            subject_ids=config["mmds"]["subject_ids"],
            coords=_parse_tensor(sections["mmds_coords"]),
            eigenvalues=_parse_tensor(sections["mmds_eigenvalues"]),
            fidelity=config["mmds"]["fidelity"],
        )
    return ModelCheckpoint(
        params=ModelParams(
            w1=tensors["w1"],
            b1=tensors["b1"],
            w2=tensors["w2"],
            b2=tensors["b2"],
            w_out=tensors["w_out"],
            b_out=tensors["b_out"],
        ),
        latents=LatentTable(subject_ids=config["subject_ids"], z=tensors["z"]),
        mmds=mmds,
        preprocess=PreprocessConfig(**config["preprocess"]),
        train_config=TrainConfig(**train_cfg),
        trace=tuple(trace),
        freq_bins_hz=tensors["freq_bins"],
        selected_epoch=config["selected_epoch"],
    )
