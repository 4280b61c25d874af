"""Binary checkpoint format.

Layout::

    b"OMRF" | uint32 version | uint64 metadata length | metadata (UTF-8 JSON)
    | float32 little-endian payloads, one per tensor, in metadata order

The metadata lists every tensor's name, shape and kind (``param``,
``buffer``, ``adam_m``, ``adam_v``) plus the model config, iteration and
Adam step counter.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ModelConfig, OmrModel
from .optim import AdamState

MAGIC = b"OMRF"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQ")
_LE_F32 = np.dtype("<f4")


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict
    buffers: dict = field(default_factory=dict)
    adam: AdamState | None = None
    iteration: int = 0
    version: int = FORMAT_VERSION

    @classmethod
    def from_model(cls, model: OmrModel, adam: AdamState | None = None, iteration=0):
        return cls(model.cfg,
                   {k: v.copy() for k, v in model.parameters().items()},
                   {k: v.copy() for k, v in model.buffers().items()},
                   adam, iteration)

    def build_model(self) -> OmrModel:
        model = OmrModel(self.config)
        model.load_arrays(self.params, self.buffers)
        return model


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    entries = [(n, a, "param") for n, a in ckpt.params.items()]
    entries += [(n, a, "buffer") for n, a in ckpt.buffers.items()]
    adam_t = 0
    if ckpt.adam is not None:
        adam_t = ckpt.adam.t
        entries += [(n, a, "adam_m") for n, a in ckpt.adam.m.items()]
        entries += [(n, a, "adam_v") for n, a in ckpt.adam.v.items()]
    meta = {
        "config": ckpt.config.to_dict(),
        "iteration": int(ckpt.iteration),
        "adam": None if ckpt.adam is None else {
            "t": adam_t, "beta1": ckpt.adam.beta1, "beta2": ckpt.adam.beta2, "eps": ckpt.adam.eps},
        "tensors": [{"name": n, "shape": list(np.shape(a)), "kind": k} for n, a, k in entries],
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(blob)))
        f.write(blob)
        for _, a, _ in entries:
            f.write(np.ascontiguousarray(a, dtype=_LE_F32).tobytes())
    tmp.replace(path)


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"{path}: file too short for a checkpoint header")
    magic, version, meta_len = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointVersionError(f"{path}: bad magic {magic!r}, not an OMRF checkpoint")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version} unsupported (expected {FORMAT_VERSION})")
    start = _HEADER.size
    if len(raw) < start + meta_len:
        raise CheckpointError(f"{path}: truncated metadata")
    try:
        meta = json.loads(raw[start:start + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable metadata ({e})") from None
    offset = start + meta_len
    groups = {"param": {}, "buffer": {}, "adam_m": {}, "adam_v": {}}
    for t in meta["tensors"]:
        count = math.prod(t["shape"])
        nbytes = 4 * count
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated payload at tensor {t['name']}")
        arr = np.frombuffer(raw, dtype=_LE_F32, count=count, offset=offset)
        groups[t["kind"]][t["name"]] = arr.astype(np.float32).reshape(t["shape"])
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    cfg = ModelConfig.from_dict(meta["config"])
    adam = None
    if meta["adam"] is not None:
        a = meta["adam"]
        adam = AdamState(a["beta1"], a["beta2"], a["eps"], a["t"],
                         {k: v.astype(np.float64) for k, v in groups["adam_m"].items()},
                         {k: v.astype(np.float64) for k, v in groups["adam_v"].items()})
    return Checkpoint(cfg, groups["param"], groups["buffer"], adam, meta["iteration"], version)
