"""Stochastic degradation pipeline for score images.

Ten operations, each fired independently with its own probability and
composed in a fixed order on the running image.  Images are white
background (1.0) with dark ink (0.0); every op preserves the shape and
clamps to [0, 1].  Labels never pass through here.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage
from scipy.fft import dctn, idctn

OP_KINDS = (
    "brightness_contrast_gamma",
    "blur",
    "compression",
    "erosion",
    "dilation",
    "rotation_shear",
    "coherent_noise",
    "gaussian_noise",
    "elastic",
    "scratches",
)

DEFAULT_PROBABILITIES = {
    "brightness_contrast_gamma": 0.9,
    "blur": 0.5,
    "compression": 0.5,
    "erosion": 0.08,
    "dilation": 0.08,
    "rotation_shear": 0.6,
    "coherent_noise": 0.25,
    "gaussian_noise": 0.25,
    "elastic": 0.15,
    "scratches": 0.05,
}

DEFAULT_RANGES = {
    "brightness": (-0.15, 0.15),
    "contrast": (0.7, 1.3),
    "gamma": (0.7, 1.4),
    "blur_sigma": (0.3, 1.2),
    "jpeg_quality": (40, 90),
    "morph_strength": (0.3, 0.7),
    "angle_deg": (-2.0, 2.0),
    "shear": (-0.05, 0.05),
    "coherent_amplitude": (0.05, 0.15),
    "coherent_octaves": (2, 3),
    "noise_sigma": (0.01, 0.05),
    "elastic_alpha": (4.0, 10.0),
    "elastic_sigma": (4.0, 8.0),
    "scratch_count": (1, 3),
    "scratch_thickness": (1, 2),
}


class UnknownOpError(KeyError):
    pass


@dataclass
class AugmentConfig:
    probabilities: dict = field(default_factory=lambda: dict(DEFAULT_PROBABILITIES))
    ranges: dict = field(default_factory=lambda: dict(DEFAULT_RANGES))
    order: tuple = OP_KINDS

    def ops(self):
        return [(k, self.probabilities[k]) for k in self.order]

    def with_all(self, p: float) -> "AugmentConfig":
        return replace(self, probabilities={k: p for k in self.probabilities})

    def override(self, section: dict) -> "AugmentConfig":
        """Apply a config-file section: ``{"probabilities": {...}, "ranges": {...}}``."""
        probs = dict(self.probabilities)
        ranges = dict(self.ranges)
        for k, v in section.get("probabilities", {}).items():
            if k not in probs:
                raise UnknownOpError(k)
            probs[k] = float(v)
        for k, v in section.get("ranges", {}).items():
            if k not in ranges:
                raise KeyError(f"unknown augmentation range {k!r}")
            ranges[k] = tuple(v)
        return replace(self, probabilities=probs, ranges=ranges)


# ---------------------------------------------------------------------------
# individual transforms on a 2-D image

def brightness_contrast_gamma(img, brightness=0.0, contrast=1.0, gamma=1.0):
    out = np.clip((img - 0.5) * contrast + 0.5 + brightness, 0.0, 1.0)
    return out if gamma == 1.0 else out ** gamma


def blur(img, sigma):
    if sigma <= 0:
        return img.copy()
    return ndimage.gaussian_filter(img, sigma, mode="nearest", radius=2)


_JPEG_LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


def compression(img, quality):
    """Blockwise 8x8 DCT quantization with the JPEG luminance table."""
    quality = float(np.clip(quality, 1, 100))
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    q = np.maximum(np.floor((_JPEG_LUMA * scale + 50.0) / 100.0), 1.0)
    h, w = img.shape
    ph, pw = -h % 8, -w % 8
    x = np.pad(img * 255.0 - 128.0, ((0, ph), (0, pw)), mode="edge")
    blocks = x.reshape(x.shape[0] // 8, 8, x.shape[1] // 8, 8).transpose(0, 2, 1, 3)
    coef = dctn(blocks, axes=(2, 3), norm="ortho")
    coef = np.round(coef / q) * q
    rec = idctn(coef, axes=(2, 3), norm="ortho").transpose(0, 2, 1, 3).reshape(x.shape)
    return np.clip((rec[:h, :w] + 128.0) / 255.0, 0.0, 1.0)


def erosion(img, strength=1.0):
    """Thin the ink: 3x3 erosion of the inverted image, blended by ``strength``.

    A full-strength pass deletes one-pixel strokes, so the pipeline draws
    a partial strength.
    """
    eroded = 1.0 - ndimage.grey_erosion(1.0 - img, size=(3, 3), mode="nearest")
    return img + strength * (eroded - img)


def dilation(img, strength=1.0):
    """Thicken the ink: 3x3 dilation of the inverted image, blended by ``strength``."""
    dilated = 1.0 - ndimage.grey_dilation(1.0 - img, size=(3, 3), mode="nearest")
    return img + strength * (dilated - img)


def rotation_shear(img, angle_deg=0.0, shear=0.0):
    """Rotate about the image centre and shear horizontally; fills with white."""
    if angle_deg == 0.0 and shear == 0.0:
        return img.copy()
    a = np.deg2rad(angle_deg)
    rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    sh = np.array([[1.0, 0.0], [shear, 1.0]])  # (row, col): col += shear * row
    fwd = sh @ rot
    inv = np.linalg.inv(fwd)
    centre = (np.array(img.shape) - 1) / 2.0
    offset = centre - inv @ centre
    return ndimage.affine_transform(img, inv, offset=offset, order=1,
                                    mode="constant", cval=1.0)


def coherent_noise(img, rng, amplitude, octaves=2):
    """Additive multi-octave value noise (smooth random grids, bilinearly upsampled)."""
    h, w = img.shape
    field_ = np.zeros((h, w))
    weight = 1.0
    cell = 32
    for _ in range(int(octaves)):
        gh, gw = h // cell + 2, w // cell + 2
        grid = rng.uniform(-1.0, 1.0, (gh, gw))
        ys = np.arange(h) / cell
        xs = np.arange(w) / cell
        field_ += weight * ndimage.map_coordinates(
            grid, np.meshgrid(ys, xs, indexing="ij"), order=1, mode="nearest")
        weight *= 0.5
        cell = max(cell // 2, 2)
    peak = np.abs(field_).max()
    if peak > 0:
        field_ /= peak
    return np.clip(img + amplitude * field_, 0.0, 1.0)


def gaussian_noise(img, rng, sigma):
    if sigma <= 0:
        return img.copy()
    return np.clip(img + rng.normal(0.0, sigma, img.shape), 0.0, 1.0)


def elastic(img, rng, alpha, sigma):
    """Simard-style warp: uniform noise smoothed with ``sigma``, scaled by ``alpha``."""
    h, w = img.shape
    dy = alpha * ndimage.gaussian_filter(rng.uniform(-1, 1, (h, w)), sigma, mode="constant")
    dx = alpha * ndimage.gaussian_filter(rng.uniform(-1, 1, (h, w)), sigma, mode="constant")
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return ndimage.map_coordinates(img, [yy + dy, xx + dx], order=1, mode="nearest")


def scratches(img, rng, count, thickness_range=(1, 2)):
    out = img.copy()
    h, w = img.shape
    for _ in range(int(count)):
        thick = int(rng.integers(thickness_range[0], thickness_range[1] + 1))
        value = rng.uniform(0.0, 0.3) if rng.random() < 0.5 else rng.uniform(0.85, 1.0)
        y0, y1 = rng.uniform(0, h, 2)
        x0, x1 = rng.uniform(0, w, 2)
        n = int(max(abs(y1 - y0), abs(x1 - x0))) + 1
        ys = np.linspace(y0, y1, n)
        xs = np.linspace(x0, x1, n)
        for o in range(thick):
            yi = np.clip(np.round(ys + o).astype(int), 0, h - 1)
            xi = np.clip(np.round(xs).astype(int), 0, w - 1)
            out[yi, xi] = value
    return out


def _uniform(rng, bounds):
    return float(rng.uniform(bounds[0], bounds[1]))


def _randint(rng, bounds):
    return int(rng.integers(bounds[0], bounds[1] + 1))


def augment_op(kind, image, rng, cfg: AugmentConfig | None = None, **params):
    """Apply one operation; parameters not given are drawn from ``cfg.ranges``."""
    cfg = cfg or AugmentConfig()
    r = cfg.ranges
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 3
    x = img[0] if squeeze else img

    def p(name, draw):
        return params[name] if name in params else draw()

    if kind == "brightness_contrast_gamma":
        out = brightness_contrast_gamma(
            x,
            p("brightness", lambda: _uniform(rng, r["brightness"])),
            p("contrast", lambda: _uniform(rng, r["contrast"])),
            p("gamma", lambda: _uniform(rng, r["gamma"])))
    elif kind == "blur":
        out = blur(x, p("sigma", lambda: _uniform(rng, r["blur_sigma"])))
    elif kind == "compression":
        out = compression(x, p("quality", lambda: _uniform(rng, r["jpeg_quality"])))
    elif kind == "erosion":
        out = erosion(x, p("strength", lambda: _uniform(rng, r["morph_strength"])))
    elif kind == "dilation":
        out = dilation(x, p("strength", lambda: _uniform(rng, r["morph_strength"])))
    elif kind == "rotation_shear":
        out = rotation_shear(x, p("angle_deg", lambda: _uniform(rng, r["angle_deg"])),
                             p("shear", lambda: _uniform(rng, r["shear"])))
    elif kind == "coherent_noise":
        out = coherent_noise(x, rng,
                             p("amplitude", lambda: _uniform(rng, r["coherent_amplitude"])),
                             p("octaves", lambda: _randint(rng, r["coherent_octaves"])))
    elif kind == "gaussian_noise":
        out = gaussian_noise(x, rng, p("sigma", lambda: _uniform(rng, r["noise_sigma"])))
    elif kind == "elastic":
        out = elastic(x, rng, p("alpha", lambda: _uniform(rng, r["elastic_alpha"])),
                      p("sigma", lambda: _uniform(rng, r["elastic_sigma"])))
    elif kind == "scratches":
        out = scratches(x, rng, p("count", lambda: _randint(rng, r["scratch_count"])),
                        r["scratch_thickness"])
    else:
        raise UnknownOpError(kind)
    out = np.clip(out, 0.0, 1.0)
    return out[None] if squeeze else out


def apply_pipeline(image, cfg: AugmentConfig | None = None, rng=None, trace=None):
    """Run every op in order, each firing iff a fresh uniform draw < its probability.

    If ``trace`` is a list, the names of fired ops are appended to it.
    """
    cfg = cfg or AugmentConfig()
    rng = np.random.default_rng() if rng is None else rng
    out = np.asarray(image, dtype=np.float64)
    for kind, prob in cfg.ops():
        if rng.random() < prob:
            out = augment_op(kind, out, rng, cfg)
            if trace is not None:
                trace.append(kind)
    return out


def sample_rng(global_seed: int, sample_id, epoch: int) -> np.random.Generator:
    """Per-sample generator so parallel augmentation never changes results."""
    sid = zlib.crc32(str(sample_id).encode())
    return np.random.default_rng(np.random.SeedSequence([int(global_seed), sid, int(epoch)]))
