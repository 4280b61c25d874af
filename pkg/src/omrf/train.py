"""Training step, training loop and evaluation."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .augment import AugmentConfig, apply_pipeline, sample_rng
from .checkpoint import Checkpoint, save_checkpoint
from .ctc import batch_ctc_loss, ctc_greedy_decode
from .data import Sample, Vocabulary, make_batch
from .metrics import MetricsReport, evaluate_pairs
from .model import ModelConfig, OmrModel
from .optim import AdamState, adam_step, cosine_lr

log = logging.getLogger(__name__)


class NumericError(FloatingPointError):
    pass


def worker_threads() -> int:
    """``OMRF_THREADS``: 0 (default) means strictly single-threaded."""
    try:
        return max(0, int(os.environ.get("OMRF_THREADS", "0")))
    except ValueError:
        return 0


def new_adam(cfg: ModelConfig) -> AdamState:
    return AdamState(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)


def train_step(model: OmrModel, batch, opt: AdamState, iteration: int, lr=None):
    """Forward, CTC, backward and one Adam update.  Returns ``(loss, lr, skipped)``."""
    cfg = model.cfg
    lr = cosine_lr(iteration, cfg.schedule) if lr is None else lr
    log_probs, lengths = model.forward(batch.images, batch.widths, train=True)
    loss, d_logits, skipped = batch_ctc_loss(log_probs, lengths, batch.targets, cfg.blank_id)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss {loss} on batch {batch.sources}")
    if skipped:
        log.warning("%d CTC-infeasible items in batch: %s",
                    len(skipped), [batch.sources[i] for i in skipped])
    model.backward(d_logits)
    adam_step(model.parameters(), model.grads(), opt, lr)
    return loss, lr, skipped


def decode_batch(model: OmrModel, images, widths) -> list[list[int]]:
    log_probs, lengths = model.forward(images, widths, train=False)
    return [ctc_greedy_decode(log_probs[i, :t], model.cfg.blank_id)
            for i, t in enumerate(lengths)]


def predict(model: OmrModel, samples, batch_size=16) -> list[list[int]]:
    out = []
    for k in range(0, len(samples), batch_size):
        b = make_batch(samples[k:k + batch_size], max_n=batch_size, dtype=model.cfg.dtype)
        out.extend(decode_batch(model, b.images, b.widths))
    return out


def evaluate(model: OmrModel, samples, vocab: Vocabulary, batch_size=16) -> MetricsReport:
    """Greedy-decode every sample and score against its target."""
    if not samples:
        raise ValueError("cannot evaluate an empty split")
    t0 = time.perf_counter()
    preds = predict(model, samples, batch_size)
    pairs = [(vocab.decode(s.target), vocab.decode(p)) for s, p in zip(samples, preds)]
    report = evaluate_pairs(pairs, vocab.encoding)
    report.seconds = time.perf_counter() - t0
    return report


def augment_samples(samples, cfg: AugmentConfig, seed, epoch, pool=None):
    def one(s: Sample):
        img = apply_pipeline(s.image, cfg, sample_rng(seed, s.source, epoch))
        return Sample(img.astype(s.image.dtype), s.target, s.source)

    if pool is None:
        return [one(s) for s in samples]
    return list(pool.map(one, samples))


@dataclass
class TrainResult:
    losses: list = field(default_factory=list)
    evals: list = field(default_factory=list)     # (iteration, MetricsReport)
    best_syer: float = float("inf")
    best_iteration: int = -1
    infeasible: int = 0
    seconds: float = 0.0


def fit(model: OmrModel, train: list, vocab: Vocabulary, val: list | None = None,
        iters: int | None = None, augment_cfg: AugmentConfig | None = None,
        checkpoint_path=None, log_file=None, opt: AdamState | None = None,
        start_iteration: int = 0) -> TrainResult:
    """Iteration-based training with periodic validation.

    Writes ``iter loss lr seconds`` lines to ``log_file`` if given and keeps
    the checkpoint with the lowest validation SyER at ``checkpoint_path``.
    """
    cfg = model.cfg
    iters = cfg.max_iters if iters is None else iters
    opt = new_adam(cfg) if opt is None else opt
    augment_cfg = augment_cfg or AugmentConfig()
    shuffle = np.random.default_rng(cfg.shuffle_seed)
    result = TrainResult()
    threads = worker_threads()
    pool = ThreadPoolExecutor(threads) if threads > 0 else None
    t0 = time.perf_counter()
    order, pos, epoch = shuffle.permutation(len(train)), 0, 0
    try:
        for it in range(start_iteration, start_iteration + iters):
            if pos >= len(order):
                order, pos, epoch = shuffle.permutation(len(train)), 0, epoch + 1
            items = [train[i] for i in order[pos:pos + cfg.batch_size]]
            pos += cfg.batch_size
            if cfg.augment:
                items = augment_samples(items, augment_cfg, cfg.augment_seed, epoch, pool)
            batch = make_batch(items, max_n=cfg.batch_size, dtype=cfg.dtype)
            loss, lr, skipped = train_step(model, batch, opt, it)
            result.losses.append(loss)
            result.infeasible += len(skipped)
            elapsed = time.perf_counter() - t0
            if log_file is not None:
                log_file.write(f"{it + 1} {loss:.6f} {lr:.6e} {elapsed:.3f}\n")
                log_file.flush()
            done = it + 1
            if val and (done % cfg.eval_every == 0 or done == start_iteration + iters):
                report = evaluate(model, val, vocab, cfg.batch_size)
                result.evals.append((done, report))
                log.info("iter %d val SeER %.2f SyER %.2f", done, report.seer, report.syer)
                if report.syer < result.best_syer:
                    result.best_syer, result.best_iteration = report.syer, done
                    if checkpoint_path is not None:
                        save_checkpoint(checkpoint_path, Checkpoint.from_model(model, opt, done))
        if checkpoint_path is not None and not val:
            save_checkpoint(checkpoint_path,
                            Checkpoint.from_model(model, opt, start_iteration + iters))
    finally:
        if pool is not None:
            pool.shutdown()
    result.seconds = time.perf_counter() - t0
    return result
