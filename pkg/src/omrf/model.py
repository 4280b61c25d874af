"""Full recognizer: encoder -> stacked BiGRU -> shared linear -> log-softmax."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .nn import Encoder, EncoderConfig, Linear, log_softmax
from .optim import CosineSchedule
from .rnn import BiGRU
from .tensor import DimensionError


class ShapeMismatchError(ValueError):
    pass


@dataclass
class ModelConfig:
    vocab_size: int
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    gru_layers: int = 2
    hidden: int = 256
    lr0: float = 1e-4
    lr_min: float = 1e-6
    max_iters: int = 64_000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 16
    augment: bool = True
    seed: int = 0
    shuffle_seed: int = 1
    augment_seed: int = 2
    eval_every: int = 500
    dtype: str = "float32"

    def __post_init__(self):
        if isinstance(self.encoder, dict):
            self.encoder = EncoderConfig(**self.encoder)

    @property
    def num_classes(self) -> int:
        return self.vocab_size + 1

    @property
    def blank_id(self) -> int:
        return self.vocab_size

    @property
    def schedule(self) -> CosineSchedule:
        return CosineSchedule(self.lr0, self.lr_min, self.max_iters)

    def to_dict(self) -> dict:
        d = asdict(self)
        enc = d["encoder"]
        enc["dilations"] = [list(x) for x in enc["dilations"]]
        enc["pools"] = [list(x) for x in enc["pools"]]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "ModelConfig":
        return cls.from_dict(json.loads(s))


class OmrModel:
    def __init__(self, cfg: ModelConfig, rng=None):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed) if rng is None else rng
        dtype = np.dtype(cfg.dtype)
        self.encoder = Encoder(cfg.encoder, rng=rng, dtype=dtype)
        self.rnn = BiGRU(cfg.encoder.feature_dim, cfg.hidden, cfg.gru_layers, rng=rng, dtype=dtype)
        self.out = Linear(2 * cfg.hidden, cfg.num_classes, rng=rng, dtype=dtype)
        self._parts = {"encoder": self.encoder, "rnn": self.rnn, "out": self.out}

    # parameters ---------------------------------------------------------

    def parameters(self) -> dict:
        return {n: p for name, part in self._parts.items()
                for n, p in part.named_parameters(name + ".")}

    def grads(self) -> dict:
        return {n: g for name, part in self._parts.items()
                for n, g in part.named_grads(name + ".")}

    def buffers(self) -> dict:
        return {n: b for name, part in self._parts.items()
                for n, b in part.named_buffers(name + ".")}

    def load_arrays(self, params: dict, buffers: dict | None = None):
        """Copy arrays into the model after auditing names and shapes."""
        for own, given, what in ((self.parameters(), params, "parameter"),
                                 (self.buffers(), buffers or {}, "buffer")):
            if buffers is None and what == "buffer":
                continue
            missing = set(own) - set(given)
            extra = set(given) - set(own)
            if missing or extra:
                raise ShapeMismatchError(
                    f"{what} names differ: missing {sorted(missing)[:3]}, unexpected {sorted(extra)[:3]}")
            for name, arr in own.items():
                if tuple(given[name].shape) != arr.shape:
                    raise ShapeMismatchError(
                        f"{what} {name}: checkpoint shape {tuple(given[name].shape)} != model {arr.shape}")
            for name, arr in own.items():
                arr[...] = given[name]

    # forward / backward --------------------------------------------------

    def frame_lengths(self, widths) -> list:
        return [self.cfg.encoder.frames(w) for w in widths]

    def forward(self, images, widths=None, train=True):
        """Returns ``(log_probs (N, T_max, V+1), valid frame counts)``.

        Frames at or beyond an item's count are computed from padding and
        must be ignored by the caller.
        """
        images = np.asarray(images, dtype=self.cfg.dtype)
        if widths is None:
            widths = [images.shape[-1]] * images.shape[0]
        lengths = self.frame_lengths(widths)
        seq = self.encoder.forward(images, train)
        if min(lengths) < 1 or max(lengths) > seq.shape[1]:
            raise DimensionError(f"frame lengths {lengths} do not fit {seq.shape[1]} frames")
        h = self.rnn.forward(seq, lengths)
        logits = self.out.forward(h)
        return log_softmax(logits), lengths

    def backward(self, d_logits):
        """Backpropagate a gradient w.r.t. the pre-softmax scores."""
        d = self.out.backward(np.asarray(d_logits, dtype=self.cfg.dtype))
        d = self.rnn.backward(d)
        return self.encoder.backward(d)
