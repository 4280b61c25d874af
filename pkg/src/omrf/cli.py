"""Command-line entry point.

Subcommands: ``synth``, ``train``, ``evaluate``, ``predict``,
``augment-preview`` and ``score``.  Settings resolve as defaults, then the
JSON ``--config`` file, then explicit flags (last one wins).  The resolved
settings are logged before any work starts.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

Config file layout (every key optional)::

    {"encoding": "semantic", "seed": 0, "split": [0.8, 0.1, 0.1],
     "augment": true, "iters": 64000, "batch": 16,
     "model": {"hidden": 256, "lr0": 1e-4, "encoder": {"channels": [...]}},
     "augmentation": {"probabilities": {"blur": 0.5}, "ranges": {"blur_sigma": [0.3, 1.2]}}}
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, UnknownOpError, apply_pipeline, sample_rng
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .data import (ENCODINGS, IMAGE_SUFFIXES, DataError, Sample, Vocabulary, build_vocab,
                   load_corpus, load_samples, preprocess_image, read_image, read_tokens,
                   split_ids, synth_generate, write_image)
from .metrics import evaluate_pairs
from .model import ModelConfig, OmrModel
from .optim import NonFiniteGradientError
from .train import NumericError, evaluate, fit, new_adam, predict

log = logging.getLogger("omrf.cli")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("synth", "train", "evaluate", "predict", "augment-preview", "score")
VOCAB_FILE = "vocab.txt"


class UsageError(Exception):
    pass


@dataclass
class CliConfig:
    command: str
    corpus: str | None = None
    encoding: str = "semantic"
    config: str | None = None
    seed: int = 0
    out: str | None = None
    split: tuple = (0.8, 0.1, 0.1)
    augment: bool = True
    iters: int | None = None
    batch: int = 16
    checkpoint: str | None = None
    n: int = 50
    vocab_size: int = 16
    subset: str = "test"
    gt: str | None = None
    pred: str | None = None
    model: dict = field(default_factory=dict)
    augmentation: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# argument parsing and config resolution

def _split_arg(text):
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad split {text!r}") from None
    if len(parts) != 3 or min(parts) < 0 or abs(sum(parts) - 1.0) > 1e-6:
        raise argparse.ArgumentTypeError(f"split {text!r} must be three fractions summing to 1")
    return parts


def _on_off(text):
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # defaults are None so that unset flags never override the config file
    common.add_argument("--corpus", help="corpus root directory")
    common.add_argument("--encoding", choices=ENCODINGS)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--split", type=_split_arg, help="train,val,test fractions")
    common.add_argument("--augment", type=_on_off, help="on|off")
    common.add_argument("--iters", type=int)
    common.add_argument("--batch", type=int)
    common.add_argument("--checkpoint", help="checkpoint file")

    parser = argparse.ArgumentParser(prog="omrf", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", parents=[common], help="write a synthetic toy corpus")
    p.add_argument("--n", type=int, help="number of samples")
    p.add_argument("--vocab-size", type=int, dest="vocab_size")
    sub.add_parser("train", parents=[common], help="train a model on a corpus")
    p = sub.add_parser("evaluate", parents=[common], help="score a checkpoint on a corpus split")
    p.add_argument("--subset", choices=("train", "val", "test", "all"))
    sub.add_parser("predict", parents=[common], help="decode every image under --corpus")
    p = sub.add_parser("augment-preview", parents=[common], help="write before/after image pairs")
    p.add_argument("--n", type=int, help="number of pairs")
    p = sub.add_parser("score", parents=[common], help="compare two token-sequence sets")
    p.add_argument("gt", help="ground-truth directory or manifest")
    p.add_argument("pred", help="prediction directory or manifest")
    return parser


def resolve_config(args: argparse.Namespace) -> CliConfig:
    """Defaults, overridden by the config file, overridden by flags."""
    cfg = CliConfig(command=args.command)
    known = set(CliConfig.__dataclass_fields__) - {"command", "config"}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as e:
            raise DataError(f"cannot read config {args.config}: {e}") from None
        except json.JSONDecodeError as e:
            raise UsageError(f"config {args.config} is not valid JSON: {e}") from None
        if not isinstance(data, dict):
            raise UsageError(f"config {args.config} must hold a JSON object")
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        for k, v in data.items():
            if k == "split":
                v = _split_arg(",".join(str(x) for x in v))
            setattr(cfg, k, v)
        cfg.config = args.config
    for k, v in vars(args).items():
        if k in known and v is not None:
            setattr(cfg, k, v)
    if cfg.encoding not in ENCODINGS:
        raise UsageError(f"unknown encoding {cfg.encoding!r}")
    return cfg


def model_config(cfg: CliConfig, vocab_size: int) -> ModelConfig:
    d = dict(cfg.model)
    d.update(vocab_size=vocab_size, seed=cfg.seed, batch_size=cfg.batch, augment=cfg.augment)
    if cfg.iters is not None:
        d["max_iters"] = cfg.iters
    try:
        return ModelConfig.from_dict(d)
    except (TypeError, ValueError) as e:
        raise UsageError(f"bad model config: {e}") from None


def augment_config(cfg: CliConfig) -> AugmentConfig:
    try:
        return AugmentConfig().override(cfg.augmentation)
    except (KeyError, UnknownOpError) as e:
        raise UsageError(f"bad augmentation config: {e}") from None


def _require(cfg: CliConfig, *names):
    for n in names:
        if getattr(cfg, n) is None:
            raise UsageError(f"{cfg.command} needs --{n}")


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(cfg: CliConfig, stdout) -> int:
    _require(cfg, "out")
    try:
        corpus = synth_generate(cfg.n, cfg.seed, cfg.vocab_size, out_dir=cfg.out,
                                encoding=cfg.encoding)
    except ValueError as e:
        raise UsageError(str(e)) from None
    print(f"wrote {len(corpus)} samples to {cfg.out}", file=stdout)
    return EXIT_OK


def _split_samples(cfg: CliConfig, samples):
    parts = split_ids([s.source for s in samples], cfg.split)
    by_id = {s.source: s for s in samples}
    return [[by_id[i] for i in ids] for ids in parts]


def _vocab_path(checkpoint) -> Path:
    return Path(checkpoint).with_name(VOCAB_FILE)


def cmd_train(cfg: CliConfig, stdout) -> int:
    _require(cfg, "corpus", "out")
    pairs = load_corpus(cfg.corpus, cfg.encoding)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    opt, start = None, 0
    if cfg.checkpoint:
        ckpt = load_checkpoint(cfg.checkpoint)
        vocab = Vocabulary.load(_vocab_path(cfg.checkpoint), cfg.encoding)
        model = ckpt.build_model()
        opt, start = ckpt.adam, ckpt.iteration
        log.info("resuming from %s at iteration %d", cfg.checkpoint, start)
    else:
        vocab = build_vocab([t for _, t in pairs], cfg.encoding)
        model = OmrModel(model_config(cfg, vocab.size))
        opt = new_adam(model.cfg)
    samples = load_samples(pairs, vocab, model.cfg.encoder.width_divisor)
    train, val, _ = _split_samples(cfg, samples)
    if not train:
        raise DataError(f"no training samples under {cfg.corpus} after splitting")
    log.info("train %d / val %d samples, vocabulary %d", len(train), len(val), vocab.size)
    vocab.save(out / VOCAB_FILE)
    (out / "config.json").write_text(model.cfg.to_json() + "\n", encoding="utf-8")
    with open(out / "train.log", "a", encoding="utf-8") as log_file:
        result = fit(model, train, vocab, val=val or None, iters=cfg.iters,
                     augment_cfg=augment_config(cfg), checkpoint_path=out / "best.omrf",
                     log_file=log_file, opt=opt, start_iteration=start)
    save_checkpoint(out / "last.omrf",
                    Checkpoint.from_model(model, opt, start + len(result.losses)))
    print(f"trained {len(result.losses)} iterations in {result.seconds:.1f}s; "
          f"final loss {result.losses[-1]:.4f}; best val SyER {result.best_syer:.2f}", file=stdout)
    return EXIT_OK


def _load_model(cfg: CliConfig):
    _require(cfg, "checkpoint")
    model = load_checkpoint(cfg.checkpoint).build_model()
    vocab = Vocabulary.load(_vocab_path(cfg.checkpoint), cfg.encoding)
    if vocab.size != model.cfg.vocab_size:
        raise DataError(f"{_vocab_path(cfg.checkpoint)} has {vocab.size} tokens, "
                        f"checkpoint expects {model.cfg.vocab_size}")
    return model, vocab


def cmd_evaluate(cfg: CliConfig, stdout) -> int:
    _require(cfg, "corpus")
    model, vocab = _load_model(cfg)
    pairs = load_corpus(cfg.corpus, cfg.encoding)
    samples = load_samples(pairs, vocab, model.cfg.encoder.width_divisor)
    if cfg.subset != "all":
        samples = _split_samples(cfg, samples)[("train", "val", "test").index(cfg.subset)]
    if not samples:
        raise DataError(f"{cfg.subset} split of {cfg.corpus} is empty")
    report = evaluate(model, samples, vocab, cfg.batch)
    text = report.machine_readable() + "\n" + report.table()
    stdout.write(text)
    if cfg.out:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        (Path(cfg.out) / "report.txt").write_text(text, encoding="utf-8")
    return EXIT_OK


def _images(root):
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"corpus root {root} does not exist")
    paths = sorted(p for p in root.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise DataError(f"no images under {root}")
    return paths


def cmd_predict(cfg: CliConfig, stdout) -> int:
    _require(cfg, "corpus", "out")
    model, vocab = _load_model(cfg)
    samples = []
    for path in _images(cfg.corpus):
        try:
            samples.append(Sample(preprocess_image(read_image(path)).astype(np.float32), [],
                                  path.stem))
        except (DataError, OSError) as e:
            log.warning("skipping %s: %s", path, e)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for s, ids in zip(samples, predict(model, samples, cfg.batch)):
        (out / f"{s.source}.{cfg.encoding}").write_text(" ".join(vocab.decode(ids)) + "\n",
                                                        encoding="utf-8")
    print(f"wrote {len(samples)} predictions to {out}", file=stdout)
    return EXIT_OK


def cmd_augment_preview(cfg: CliConfig, stdout) -> int:
    _require(cfg, "corpus", "out")
    aug = augment_config(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    for path in _images(cfg.corpus):
        if written >= cfg.n:
            break
        try:
            img = preprocess_image(read_image(path))
        except DataError as e:
            log.warning("skipping %s: %s", path, e)
            continue
        trace = []
        after = apply_pipeline(img, aug, sample_rng(cfg.seed, path.stem, 0), trace)
        write_image(out / f"{path.stem}_before.png", img)
        write_image(out / f"{path.stem}_after.png", after)
        log.info("%s: %s", path.stem, ", ".join(trace) or "no ops fired")
        written += 1
    print(f"wrote {written} before/after pairs to {out}", file=stdout)
    return EXIT_OK


def read_token_set(source, encoding) -> dict:
    """``{sample_id: tokens}`` from a directory of token files or a manifest.

    A manifest has one sample per line: the id, then its tokens, separated
    by whitespace.
    """
    path = Path(source)
    if path.is_dir():
        files = sorted(path.rglob(f"*.{encoding}"))
        return {f.stem: read_tokens(f) for f in files}
    if path.is_file():
        out = {}
        for line in path.read_text(encoding="utf-8").splitlines():
            parts = line.split()
            if parts:
                out[parts[0]] = parts[1:]
        return out
    raise DataError(f"{source} is neither a directory nor a manifest file")


def cmd_score(cfg: CliConfig, stdout) -> int:
    gt = read_token_set(cfg.gt, cfg.encoding)
    pred = read_token_set(cfg.pred, cfg.encoding)
    if not gt:
        raise DataError(f"no ground-truth sequences in {cfg.gt}")
    missing = sorted(set(gt) - set(pred))
    extra = sorted(set(pred) - set(gt))
    if missing:
        log.warning("%d ids have no prediction and count as empty: %s", len(missing), missing[:5])
    if extra:
        log.warning("%d predictions have no ground truth and are ignored", len(extra))
    pairs = [(gt[k], pred.get(k, [])) for k in sorted(gt)]
    report = evaluate_pairs(pairs, cfg.encoding)
    stdout.write(report.machine_readable() + "\n" + report.table())
    return EXIT_OK


HANDLERS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "augment-preview": cmd_augment_preview,
    "score": cmd_score,
}


def run(argv=None, stdout=None) -> int:
    """Parse ``argv``, run the subcommand and return its exit code."""
    stdout = sys.stdout if stdout is None else stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    try:
        cfg = resolve_config(args)
        log.info("resolved config: %s", json.dumps(asdict(cfg), sort_keys=True))
        return HANDLERS[cfg.command](cfg, stdout)
    except UsageError as e:
        log.error("usage error: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, OSError) as e:
        log.error("data error: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, NonFiniteGradientError, FloatingPointError) as e:
        log.error("numeric failure: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s",
                        stream=sys.stderr)
    sys.exit(run())


if __name__ == "__main__":
    main()
