"""Optical music recognition toolkit: residual CNN + BiGRU + CTC in numpy."""

from .augment import AugmentConfig, apply_pipeline, augment_op
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .ctc import ctc_brute_force, ctc_greedy_decode, ctc_loss
from .data import DataError, Vocabulary, load_corpus, make_batch, synth_generate
from .metrics import MetricsReport, edit_distance, evaluate_pairs, omr_ned_report
from .model import ModelConfig, OmrModel
from .nn import Encoder, EncoderConfig
from .optim import AdamState, CosineSchedule, adam_step, cosine_lr
from .rnn import GRU, BiGRU
from .tensor import DimensionError, Tensor, matmul, reshape
from .train import evaluate, fit, train_step

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AugmentConfig",
    "BiGRU",
    "Checkpoint",
    "CheckpointError",
    "CosineSchedule",
    "DataError",
    "DimensionError",
    "Encoder",
    "EncoderConfig",
    "GRU",
    "MetricsReport",
    "ModelConfig",
    "OmrModel",
    "Tensor",
    "Vocabulary",
    "adam_step",
    "apply_pipeline",
    "augment_op",
    "cosine_lr",
    "ctc_brute_force",
    "ctc_greedy_decode",
    "ctc_loss",
    "edit_distance",
    "evaluate",
    "evaluate_pairs",
    "fit",
    "load_checkpoint",
    "load_corpus",
    "make_batch",
    "matmul",
    "omr_ned_report",
    "reshape",
    "save_checkpoint",
    "synth_generate",
    "train_step",
]
