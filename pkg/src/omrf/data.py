"""Corpus loading, vocabulary, preprocessing, batching and a toy score renderer.

Corpus layout: ``<root>/<id>.png`` (or ``.pgm``) next to
``<root>/<id>.semantic`` or ``<root>/<id>.agnostic``; token files hold one
whitespace-separated line.  Sample directories (PrIMuS style,
``<root>/<id>/<id>.png``) are found too, since the scan is recursive.
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

IMAGE_HEIGHT = 128
MIN_WIDTH = 16
IMAGE_SUFFIXES = (".png", ".pgm")
ENCODINGS = ("semantic", "agnostic")
BLANK_TOKEN = "<blank>"


class DataError(Exception):
    """Unusable corpus or sample."""


# ---------------------------------------------------------------------------
# vocabulary

class Vocabulary:
    """Dense token ids ``0..size-1`` in sorted token order; blank id = size."""

    def __init__(self, tokens, encoding="semantic"):
        tokens = sorted(set(tokens))
        if BLANK_TOKEN in tokens:
            raise DataError(f"reserved token {BLANK_TOKEN!r} found in corpus")
        self.encoding = encoding
        self.id_to_token = tokens
        self.token_to_id = {t: i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self.id_to_token)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    @property
    def blank_id(self) -> int:
        return len(self.id_to_token)

    def encode(self, tokens) -> list[int]:
        try:
            return [self.token_to_id[t] for t in tokens]
        except KeyError as e:
            raise DataError(f"token {e.args[0]!r} not in vocabulary") from None

    def decode(self, ids) -> list[str]:
        return [self.id_to_token[i] for i in ids if i != self.blank_id]

    def save(self, path):
        Path(path).write_text("".join(t + "\n" for t in self.id_to_token), encoding="utf-8")

    @classmethod
    def load(cls, path, encoding="semantic"):
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        vocab = cls(lines, encoding)
        if vocab.id_to_token != lines:
            raise DataError(f"vocabulary file {path} is not sorted and unique")
        return vocab


def build_vocab(token_lists, encoding="semantic") -> Vocabulary:
    token_lists = list(token_lists)
    if not token_lists:
        raise DataError("cannot build a vocabulary from an empty corpus")
    return Vocabulary((t for toks in token_lists for t in toks), encoding)


# ---------------------------------------------------------------------------
# corpus

def read_tokens(path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").split()


def load_corpus(root, encoding="semantic"):
    """Sorted ``(image_path, tokens)`` pairs found under ``root``.

    Images without a readable, non-empty token file are skipped with a
    warning and the skip count is logged.
    """
    if encoding not in ENCODINGS:
        raise DataError(f"unknown encoding {encoding!r}")
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"corpus root {root} does not exist")
    images = sorted(p for p in root.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES)
    pairs, skipped = [], 0
    for img in images:
        tok_path = img.with_suffix("." + encoding)
        try:
            tokens = read_tokens(tok_path)
        except (OSError, UnicodeDecodeError):
            log.warning("skipping %s: no readable %s file", img, tok_path.name)
            skipped += 1
            continue
        if not tokens:
            log.warning("skipping %s: empty token file", img)
            skipped += 1
            continue
        pairs.append((img, tokens))
    if skipped:
        log.warning("%d malformed samples skipped under %s", skipped, root)
    if not pairs:
        raise DataError(f"no usable samples under {root}")
    return pairs


def split_ids(ids, fractions=(0.8, 0.1, 0.1)):
    """Deterministic train/val/test split by a hash of each sample id."""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-6:
        raise ValueError(f"split fractions must be three numbers summing to 1, got {fractions}")
    cut1 = fractions[0]
    cut2 = fractions[0] + fractions[1]
    out = ([], [], [])
    for i in ids:
        u = zlib.crc32(str(i).encode()) / 2**32
        out[0 if u < cut1 else 1 if u < cut2 else 2].append(i)
    return out


# ---------------------------------------------------------------------------
# images

def read_image(path) -> np.ndarray:
    """Grayscale image as float64 in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0


def write_image(path, img):
    arr = np.asarray(img)
    if arr.ndim == 3:
        arr = arr[0]
    Image.fromarray(np.round(np.clip(arr, 0, 1) * 255).astype(np.uint8)).save(path)


def resize_bilinear(img, out_h, out_w):
    """Bilinear resampling with half-pixel centres (no antialiasing)."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape

    def coords(n_out, n_in):
        c = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        c = np.clip(c, 0, n_in - 1)
        lo = np.floor(c).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, c - lo

    y0, y1, fy = coords(out_h, h)
    x0, x1, fx = coords(out_w, w)
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy)[:, None] + bot * fy[:, None]


def preprocess_image(raw, height=IMAGE_HEIGHT, min_width=MIN_WIDTH) -> np.ndarray:
    """Resize to a fixed height keeping aspect ratio; returns (1, height, W').

    Integer inputs are taken as 8-bit and scaled to [0, 1].
    """
    raw = np.asarray(raw)
    if raw.ndim == 3:
        raw = raw.mean(axis=-1) if raw.shape[-1] in (3, 4) else raw[0]
    if raw.ndim != 2 or raw.shape[0] < 1 or raw.shape[1] < 1:
        raise DataError(f"expected a 2-D grayscale image, got shape {raw.shape}")
    img = raw / 255.0 if np.issubdtype(raw.dtype, np.integer) else raw.astype(np.float64)
    h, w = img.shape
    new_w = int(round(w * height / h))
    if new_w < min_width:
        raise DataError(f"resized width {new_w} below minimum {min_width}")
    if (h, w) != (height, new_w):
        img = resize_bilinear(img, height, new_w)
    return np.clip(img, 0.0, 1.0)[None]


@dataclass
class Sample:
    image: np.ndarray      # (1, 128, W), white background = 1.0
    target: list           # token ids, blank excluded
    source: str = ""

    @property
    def width(self) -> int:
        return self.image.shape[-1]


@dataclass
class Batch:
    images: np.ndarray     # (N, 1, 128, W_max), padded with 1.0
    widths: list
    targets: list          # per-item id lists
    sources: list

    @property
    def flat_targets(self) -> np.ndarray:
        return np.array([t for tgt in self.targets for t in tgt], dtype=np.int64)

    @property
    def target_lengths(self) -> list:
        return [len(t) for t in self.targets]

    def frame_lengths(self, width_divisor=4) -> list:
        return [w // width_divisor for w in self.widths]


def make_batch(samples, max_n=16, dtype=np.float32) -> Batch:
    samples = list(samples)
    if not samples:
        raise DataError("empty batch")
    if len(samples) > max_n:
        raise DataError(f"batch of {len(samples)} exceeds limit {max_n}")
    widths = [s.width for s in samples]
    h = samples[0].image.shape[1]
    images = np.ones((len(samples), 1, h, max(widths)), dtype=dtype)
    for i, s in enumerate(samples):
        images[i, :, :, :s.width] = s.image
    return Batch(images, widths, [list(s.target) for s in samples],
                 [s.source for s in samples])


def load_samples(pairs, vocab: Vocabulary, width_divisor=4):
    """Read and preprocess images; drop those that can't emit their target.

    Each sample's ``source`` is the file stem, which doubles as its id.
    """
    from .ctc import min_frames

    samples = []
    for path, tokens in pairs:
        try:
            img = preprocess_image(read_image(path))
        except (DataError, OSError) as e:
            log.warning("skipping %s: %s", path, e)
            continue
        ids = vocab.encode(tokens)
        if img.shape[-1] // width_divisor < min_frames(ids):
            log.warning("skipping %s: %d frames too few for %d tokens",
                        path, img.shape[-1] // width_divisor, len(ids))
            continue
        samples.append(Sample(img.astype(np.float32), ids, Path(path).stem))
    return samples


# ---------------------------------------------------------------------------
# synthetic corpus

STAFF_TOP = 44
STAFF_GAP = 10
LINE_YS = [STAFF_TOP + k * STAFF_GAP for k in range(5)]

# token -> (glyph kind, vertical centre).  Order matters: a vocabulary of
# size k uses the first k entries.
SYNTH_GLYPHS = [
    ("note-E4_quarter", "filled", 84), ("note-G4_quarter", "filled", 74),
    ("note-B4_quarter", "filled", 64), ("note-D5_quarter", "filled", 54),
    ("note-E4_half", "hollow", 84), ("note-G4_half", "hollow", 74),
    ("note-B4_half", "hollow", 64), ("note-D5_half", "hollow", 54),
    ("rest-quarter", "wedge", 64), ("rest-half", "block", 62),
    ("barline", "bar", 64), ("clef-G2", "clef", 64),
    ("timeSignature-4/4", "stack", 64), ("keySignature-DM", "cross", 49),
    ("tie", "arc", 94), ("gracenote-C5_eighth", "small", 59),
    ("note-F4_quarter", "filled", 79), ("note-A4_quarter", "filled", 69),
    ("note-C5_quarter", "filled", 59), ("note-F5_quarter", "filled", 44),
    ("note-F4_half", "hollow", 79), ("note-A4_half", "hollow", 69),
    ("note-C5_half", "hollow", 59), ("note-F5_half", "hollow", 44),
    ("rest-eighth", "wedge", 54), ("multirest-2", "block", 54),
    ("timeSignature-3/4", "stack", 54), ("keySignature-FM", "cross", 64),
    ("gracenote-E5_eighth", "small", 49), ("note-D4_quarter", "filled", 89),
    ("note-D4_half", "hollow", 89), ("clef-F4", "clef", 54),
]
MAX_SYNTH_VOCAB = len(SYNTH_GLYPHS)
GLYPH_WIDTH = 12


def _draw_glyph(canvas, kind, x0, yc):
    """Ink (value 0) a glyph whose box starts at column ``x0``."""
    h, _ = canvas.shape
    ys, xs = np.mgrid[0:h, x0:x0 + GLYPH_WIDTH]
    cx = x0 + GLYPH_WIDTH / 2 - 0.5
    dx, dy = xs - cx, ys - yc
    r2 = dx * dx + dy * dy
    if kind == "filled":
        mask = r2 <= 4.5 ** 2
        mask |= (np.abs(xs - (cx + 4)) < 1) & (dy <= 0) & (dy > -24)
    elif kind == "hollow":
        mask = (r2 <= 4.5 ** 2) & (r2 >= 2.5 ** 2)
        mask |= (np.abs(xs - (cx + 4)) < 1) & (dy <= 0) & (dy > -24)
    elif kind == "small":
        mask = r2 <= 2.5 ** 2
        mask |= (np.abs(xs - (cx + 2)) < 1) & (dy <= 0) & (dy > -12)
    elif kind == "wedge":
        mask = (np.abs(dx) <= (dy + 8) / 2.5) & (dy >= -8) & (dy <= 8)
    elif kind == "block":
        mask = (np.abs(dx) <= 4) & (np.abs(dy) <= 2)
    elif kind == "bar":
        mask = (np.abs(dx) < 1) & (ys >= LINE_YS[0]) & (ys <= LINE_YS[-1])
    elif kind == "clef":
        mask = (np.abs(np.hypot(dx, dy / 2.5) - 4) < 1.2) | ((np.abs(dx) < 1) & (np.abs(dy) <= 26))
    elif kind == "stack":
        mask = ((np.abs(dx) <= 3) & (np.abs(np.abs(dy) - 5) <= 3)) & ~((np.abs(dx) <= 1) & (np.abs(np.abs(dy) - 5) <= 1))
    elif kind == "cross":
        mask = ((np.abs(dx - dy) < 1.2) | (np.abs(dx + dy) < 1.2)) & (np.abs(dx) <= 4) & (np.abs(dy) <= 4)
    elif kind == "arc":
        mask = (np.abs(np.hypot(dx, dy + 6) - 8) < 1.0) & (dy > -2)
    else:
        raise ValueError(f"unknown glyph kind {kind!r}")
    region = canvas[:, x0:x0 + GLYPH_WIDTH]
    region[mask] = 0.0


def render_staff(token_indices, rng, height=IMAGE_HEIGHT, gaps=(4, 10), margin=8):
    """Render glyphs left to right over a five-line staff; returns (H, W) in [0, 1]."""
    gap_list = [int(rng.integers(gaps[0], gaps[1] + 1)) for _ in token_indices]
    width = 2 * margin + sum(GLYPH_WIDTH + g for g in gap_list)
    width = max(width, MIN_WIDTH)
    canvas = np.ones((height, width))
    canvas[LINE_YS, :] = 0.35
    x = margin
    for idx, g in zip(token_indices, gap_list):
        _, kind, yc = SYNTH_GLYPHS[idx]
        _draw_glyph(canvas, kind, x, yc)
        x += GLYPH_WIDTH + g
    # quantize so in-memory samples equal their 8-bit PNG round trip
    return np.round(canvas * 255) / 255


def synth_sequences(n, vocab_size, rng, min_len=3, max_len=7):
    if not 1 <= vocab_size <= MAX_SYNTH_VOCAB:
        raise ValueError(f"vocab_size must be in [1, {MAX_SYNTH_VOCAB}]")
    seqs = [list(rng.integers(0, vocab_size, size=int(rng.integers(min_len, max_len + 1))))
            for _ in range(n)]
    # every token must occur somewhere so the vocabulary comes out complete
    cover = list(rng.permutation(vocab_size))
    pos = 0
    for s in seqs:
        for k in range(len(s)):
            if pos == len(cover):
                return seqs
            s[k] = int(cover[pos])
            pos += 1
    if pos < len(cover):
        raise ValueError(f"{n} samples too few to cover {vocab_size} tokens")
    return seqs


def synth_generate(n, seed, vocab_size=16, out_dir=None, encoding="semantic",
                   min_len=3, max_len=7):
    """Deterministic toy corpus of single-staff images.

    Returns a list of ``(sample_id, image (H, W), tokens)``.  With
    ``out_dir`` the images and token files are also written there.
    """
    rng = np.random.default_rng(seed)
    seqs = synth_sequences(n, vocab_size, rng, min_len, max_len)
    digits = max(4, len(str(n - 1)))
    corpus = []
    for i, seq in enumerate(seqs):
        img = render_staff(seq, rng)
        tokens = [SYNTH_GLYPHS[k][0] for k in seq]
        corpus.append((f"synth_{i:0{digits}d}", img, tokens))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for sid, img, tokens in corpus:
            write_image(out / f"{sid}.png", img)
            (out / f"{sid}.{encoding}").write_text(" ".join(tokens) + "\n", encoding="utf-8")
    return corpus


def synth_samples(corpus, vocab: Vocabulary):
    """In-memory samples from :func:`synth_generate` output (no disk round trip)."""
    return [Sample(preprocess_image(img).astype(np.float32), vocab.encode(tokens), sid)
            for sid, img, tokens in corpus]
