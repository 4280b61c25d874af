"""Convolutional encoder layers with hand-written backward passes.

Every layer follows the same protocol: ``forward`` caches what it needs,
``backward(d_out)`` returns the gradient with respect to its input and
fills ``self.grads`` with gradients keyed like ``self.params``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import DimensionError, feature_map_from_sequence, sequence_from_feature_map


class Layer:
    """Container for parameters, running buffers and child layers."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.children: dict[str, Layer] = {}

    def named_parameters(self, prefix: str = ""):
        for k, v in self.params.items():
            yield prefix + k, v
        for name, child in self.children.items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_grads(self, prefix: str = ""):
        for k in self.params:
            yield prefix + k, self.grads[k]
        for name, child in self.children.items():
            yield from child.named_grads(f"{prefix}{name}.")

    def named_buffers(self, prefix: str = ""):
        for k, v in self.buffers.items():
            yield prefix + k, v
        for name, child in self.children.items():
            yield from child.named_buffers(f"{prefix}{name}.")


# ---------------------------------------------------------------------------
# convolution

def same_padding(kernel: tuple[int, int], dilation: tuple[int, int]) -> tuple[int, int]:
    kh, kw = kernel
    dh, dw = dilation
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("same padding needs odd kernels")
    return (kh - 1) * dh // 2, (kw - 1) * dw // 2


def _im2col(x, kernel, dilation):
    n, c, h, w = x.shape
    kh, kw = kernel
    dh, dw = dilation
    ph, pw = same_padding(kernel, dilation)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = np.empty((n, c, kh * kw, h, w), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i * kw + j] = xp[:, :, i * dh:i * dh + h, j * dw:j * dw + w]
    return cols.reshape(n, c * kh * kw, h * w)


def _col2im(dcols, x_shape, kernel, dilation):
    n, c, h, w = x_shape
    kh, kw = kernel
    dh, dw = dilation
    ph, pw = same_padding(kernel, dilation)
    dcols = dcols.reshape(n, c, kh * kw, h, w)
    dxp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i * dh:i * dh + h, j * dw:j * dw + w] += dcols[:, :, i * kw + j]
    return dxp[:, :, ph:ph + h, pw:pw + w]


def conv2d(x, w, b, dilation=(1, 1)):
    """Stride-1 dilated cross-correlation with "same" zero padding.

    ``x`` is (N, C_in, H, W) and ``w`` is (C_out, C_in, k_h, k_w).
    Returns the output and a cache for :func:`conv2d_backward`.
    """
    x = np.asarray(x)
    n, c, h, wd = x.shape
    co, ci, kh, kw = w.shape
    if c != ci:
        raise DimensionError(f"input has {c} channels, kernel expects {ci}")
    dilation = tuple(dilation)
    if min(dilation) < 1:
        raise ValueError(f"dilation must be >= 1, got {dilation}")
    if kh == kw == 1:
        cols = x.reshape(n, c, h * wd)
    else:
        cols = _im2col(x, (kh, kw), dilation)
    y = np.matmul(w.reshape(co, -1), cols)
    y += b[None, :, None]
    return y.reshape(n, co, h, wd), (x.shape, cols, w, dilation)


def conv2d_backward(dy, cache):
    """Returns ``(dx, dw, db)``."""
    x_shape, cols, w, dilation = cache
    n, c, h, wd = x_shape
    co, ci, kh, kw = w.shape
    dy2 = dy.reshape(n, co, h * wd)
    db = dy2.sum(axis=(0, 2))
    dw = np.matmul(dy2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    dcols = np.matmul(w.reshape(co, -1).T, dy2)
    if kh == kw == 1:
        dx = dcols.reshape(x_shape)
    else:
        dx = _col2im(dcols, x_shape, (kh, kw), dilation)
    return dx, dw, db


class Conv2d(Layer):
    def __init__(self, c_in, c_out, kernel=3, dilation=(1, 1), rng=None, dtype=np.float32):
        super().__init__()
        rng = np.random.default_rng() if rng is None else rng
        kernel = (kernel, kernel) if isinstance(kernel, int) else tuple(kernel)
        fan_in = c_in * kernel[0] * kernel[1]
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(c_out, c_in, *kernel))
        self.params = {"w": w.astype(dtype), "b": np.zeros(c_out, dtype=dtype)}
        self.dilation = tuple(dilation)
        self._cache = None

    def forward(self, x):
        y, self._cache = conv2d(x, self.params["w"], self.params["b"], self.dilation)
        return y

    def backward(self, dy):
        dx, dw, db = conv2d_backward(dy, self._cache)
        self.grads = {"w": dw, "b": db}
        return dx


# ---------------------------------------------------------------------------
# normalization, activation, pooling

def batchnorm2d(x, gamma, beta, running_mean, running_var, train=True,
                eps=1e-5, momentum=0.9):
    """Per-channel batch norm over (N, H, W).

    In train mode the running statistics are updated in place as
    ``running = momentum * running + (1 - momentum) * batch``.
    """
    n, c, h, w = x.shape
    if n * h * w == 0:
        raise DimensionError("batch norm needs at least one element per channel")
    if train:
        mu = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu[None, :, None, None]) * inv_std[None, :, None, None]
    y = xhat * gamma[None, :, None, None] + beta[None, :, None, None]
    return y, (xhat, inv_std, gamma, train)


def batchnorm2d_backward(dy, cache):
    """Returns ``(dx, dgamma, dbeta)``."""
    xhat, inv_std, gamma, train = cache
    dbeta = dy.sum(axis=(0, 2, 3))
    dgamma = (dy * xhat).sum(axis=(0, 2, 3))
    dxhat = dy * gamma[None, :, None, None]
    if not train:
        return dxhat * inv_std[None, :, None, None], dgamma, dbeta
    m = xhat.shape[0] * xhat.shape[2] * xhat.shape[3]
    dx = (dxhat - (dbeta * gamma / m)[None, :, None, None]
          - xhat * (dgamma * gamma / m)[None, :, None, None])
    return dx * inv_std[None, :, None, None], dgamma, dbeta


class BatchNorm2d(Layer):
    def __init__(self, channels, eps=1e-5, momentum=0.9, dtype=np.float32):
        super().__init__()
        self.params = {"gamma": np.ones(channels, dtype=dtype),
                       "beta": np.zeros(channels, dtype=dtype)}
        self.buffers = {"running_mean": np.zeros(channels, dtype=dtype),
                        "running_var": np.ones(channels, dtype=dtype)}
        self.eps = eps
        self.momentum = momentum
        self._cache = None

    def forward(self, x, train=True):
        y, self._cache = batchnorm2d(
            x, self.params["gamma"], self.params["beta"],
            self.buffers["running_mean"], self.buffers["running_var"],
            train=train, eps=self.eps, momentum=self.momentum)
        return y.astype(x.dtype, copy=False)

    def backward(self, dy):
        dx, dg, db = batchnorm2d_backward(dy, self._cache)
        self.grads = {"gamma": dg, "beta": db}
        return dx


def relu(x):
    return np.maximum(x, 0)


def relu_backward(dy, x):
    return dy * (x > 0)


def maxpool2d(x, window):
    """Non-overlapping max pooling, stride equal to the window.

    Trailing rows/columns that do not fill a whole window are dropped, so
    the output extent is ``floor(H / p_h) x floor(W / p_w)``.  Within a
    window, ties go to the first element in row-major order.
    """
    ph, pw = window
    n, c, h, w = x.shape
    if (ph, pw) == (1, 1):
        return x.copy(), (x.shape, window, None)
    ho, wo = h // ph, w // pw
    if ho == 0 or wo == 0:
        raise DimensionError(f"pool window {window} larger than input {h}x{w}")
    best = x[:, :, 0:ho * ph:ph, 0:wo * pw:pw].copy()
    arg = np.zeros(best.shape, dtype=np.int8)
    for k in range(1, ph * pw):
        i, j = divmod(k, pw)
        cand = x[:, :, i:ho * ph:ph, j:wo * pw:pw]
        # strict comparison keeps the earliest maximum
        better = cand > best
        np.copyto(best, cand, where=better)
        arg[better] = k
    return best, (x.shape, window, arg)


def maxpool2d_backward(dy, cache):
    x_shape, (ph, pw), arg = cache
    if arg is None:
        return dy.copy()
    ho, wo = arg.shape[2:]
    dx = np.zeros(x_shape, dtype=dy.dtype)
    for k in range(ph * pw):
        i, j = divmod(k, pw)
        dx[:, :, i:ho * ph:ph, j:wo * pw:pw] = np.where(arg == k, dy, 0)
    return dx


# ---------------------------------------------------------------------------
# residual bottleneck block and encoder

class BottleneckBlock(Layer):
    """Pre-activation bottleneck: three (BN, ReLU, conv) stages plus a shortcut.

    reduce 1x1 (c_in -> c_out/ratio), dilated 3x3, restore 1x1 (-> c_out).
    The shortcut is the identity when channel counts match and an
    un-normalized 1x1 projection otherwise.
    """

    def __init__(self, c_in, c_out, dilation=(1, 1), ratio=4, rng=None, dtype=np.float32):
        super().__init__()
        mid = max(1, c_out // ratio)
        self.c_in, self.c_out = c_in, c_out
        self.children = {
            "bn1": BatchNorm2d(c_in, dtype=dtype),
            "conv1": Conv2d(c_in, mid, 1, rng=rng, dtype=dtype),
            "bn2": BatchNorm2d(mid, dtype=dtype),
            "conv2": Conv2d(mid, mid, 3, dilation=dilation, rng=rng, dtype=dtype),
            "bn3": BatchNorm2d(mid, dtype=dtype),
            "conv3": Conv2d(mid, c_out, 1, rng=rng, dtype=dtype),
        }
        if c_in != c_out:
            self.children["shortcut"] = Conv2d(c_in, c_out, 1, rng=rng, dtype=dtype)
        self._pre = None

    def forward(self, x, train=True):
        ch = self.children
        pre = []
        h = x
        for bn, conv in (("bn1", "conv1"), ("bn2", "conv2"), ("bn3", "conv3")):
            a = ch[bn].forward(h, train)
            pre.append(a)
            h = ch[conv].forward(relu(a))
        self._pre = pre
        if "shortcut" in ch:
            return ch["shortcut"].forward(x) + h
        return x + h

    def backward(self, dy):
        ch = self.children
        d = dy
        for (bn, conv), a in zip((("bn3", "conv3"), ("bn2", "conv2"), ("bn1", "conv1")),
                                 reversed(self._pre)):
            d = ch[conv].backward(d)
            d = ch[bn].backward(relu_backward(d, a))
        if "shortcut" in ch:
            return d + ch["shortcut"].backward(dy)
        return d + dy


@dataclass
class EncoderConfig:
    channels: list = field(default_factory=lambda: [32, 64, 128, 256, 256])
    dilations: list = field(default_factory=lambda: [(1, 1), (2, 1), (4, 1), (8, 1), (1, 1)])
    pools: list = field(default_factory=lambda: [(2, 2), (2, 2), (2, 1), (2, 1), (1, 1)])
    bottleneck_ratio: int = 4
    input_height: int = 128
    input_channels: int = 1

    def __post_init__(self):
        self.dilations = [tuple(d) for d in self.dilations]
        self.pools = [tuple(p) for p in self.pools]
        if not (len(self.channels) == len(self.dilations) == len(self.pools)):
            raise ValueError("channels, dilations and pools must have equal length")

    @property
    def height_divisor(self) -> int:
        return int(np.prod([p[0] for p in self.pools]))

    @property
    def width_divisor(self) -> int:
        return int(np.prod([p[1] for p in self.pools]))

    @property
    def feature_height(self) -> int:
        return self.input_height // self.height_divisor

    @property
    def feature_dim(self) -> int:
        return self.channels[-1] * self.feature_height

    def frames(self, width: int) -> int:
        t = width
        for _, pw in self.pools:
            t //= pw
        return t

    @property
    def min_width(self) -> int:
        return 4 * self.width_divisor


class Encoder(Layer):
    """Five bottleneck blocks, each followed by its pool, then map -> sequence."""

    def __init__(self, cfg: EncoderConfig | None = None, rng=None, dtype=np.float32):
        super().__init__()
        self.cfg = cfg = cfg or EncoderConfig()
        c_in = cfg.input_channels
        for i, (c, d) in enumerate(zip(cfg.channels, cfg.dilations)):
            self.children[f"block{i}"] = BottleneckBlock(
                c_in, c, dilation=d, ratio=cfg.bottleneck_ratio, rng=rng, dtype=dtype)
            c_in = c
        self._pool_caches = []
        self._map_shape = None

    def forward(self, x, train=True):
        x = np.asarray(x)
        if x.ndim != 4 or x.shape[1] != self.cfg.input_channels:
            raise DimensionError(f"expected (N, {self.cfg.input_channels}, H, W), got {x.shape}")
        if x.shape[2] != self.cfg.input_height:
            raise DimensionError(f"image height {x.shape[2]} != {self.cfg.input_height}")
        if x.shape[3] < self.cfg.min_width:
            raise DimensionError(f"image width {x.shape[3]} below minimum {self.cfg.min_width}")
        self._pool_caches = []
        h = x
        for i, pool in enumerate(self.cfg.pools):
            h = self.children[f"block{i}"].forward(h, train)
            h, cache = maxpool2d(h, pool)
            self._pool_caches.append(cache)
        self._map_shape = h.shape
        return sequence_from_feature_map(h)

    def backward(self, dseq):
        _, c, hh, _ = self._map_shape
        d = feature_map_from_sequence(dseq, c, hh)
        for i in reversed(range(len(self.cfg.pools))):
            d = maxpool2d_backward(d, self._pool_caches[i])
            d = self.children[f"block{i}"].backward(d)
        return d


# ---------------------------------------------------------------------------
# output head

def linear(x, w, b):
    """Affine map over the last axis; ``w`` is (D_in, D_out)."""
    if x.shape[-1] != w.shape[0]:
        raise DimensionError(f"input dim {x.shape[-1]} != weight rows {w.shape[0]}")
    return x @ w + b


def linear_backward(dy, x, w):
    d_in = w.shape[0]
    dw = x.reshape(-1, d_in).T @ dy.reshape(-1, w.shape[1])
    db = dy.reshape(-1, w.shape[1]).sum(axis=0)
    return dy @ w.T, dw, db


class Linear(Layer):
    def __init__(self, d_in, d_out, rng=None, dtype=np.float32):
        super().__init__()
        rng = np.random.default_rng() if rng is None else rng
        bound = np.sqrt(1.0 / d_in)
        self.params = {"w": rng.uniform(-bound, bound, (d_in, d_out)).astype(dtype),
                       "b": rng.uniform(-bound, bound, d_out).astype(dtype)}
        self._x = None

    def forward(self, x):
        self._x = x
        return linear(x, self.params["w"], self.params["b"])

    def backward(self, dy):
        dx, dw, db = linear_backward(dy, self._x, self.params["w"])
        self.grads = {"w": dw, "b": db}
        return dx


def log_softmax(x, axis=-1):
    x = np.asarray(x)
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def log_softmax_backward(dy, out, axis=-1):
    return dy - np.exp(out) * dy.sum(axis=axis, keepdims=True)
