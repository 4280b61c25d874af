"""GRU cell, unidirectional GRU layer and the stacked bidirectional GRU.

Gate convention (reset applied to the hidden state before ``U_h``)::

    z  = sigmoid(x W_z + h U_z + b_z)
    r  = sigmoid(x W_r + h U_r + b_r)
    hc = tanh(x W_h + (r * h) U_h + b_h)
    h' = (1 - z) * h + z * hc

Sequences are batched as (N, T, D).  The initial state is always zero.
"""

from __future__ import annotations

import numpy as np

from .nn import Layer
from .tensor import DimensionError

GATE_KEYS = ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")


def sigmoid(x):
    # split by sign so neither branch overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def init_gru_params(d_in, hidden, rng=None, dtype=np.float32):
    rng = np.random.default_rng() if rng is None else rng
    bound = 1.0 / np.sqrt(hidden)
    p = {}
    for g in "zrh":
        p[f"W_{g}"] = rng.uniform(-bound, bound, (d_in, hidden)).astype(dtype)
        p[f"U_{g}"] = rng.uniform(-bound, bound, (hidden, hidden)).astype(dtype)
        p[f"b_{g}"] = np.zeros(hidden, dtype=dtype)
    return p


def _cell(xz, xr, xh, h, p):
    """One step given precomputed input projections ``x W_*``."""
    z = sigmoid(xz + h @ p["U_z"] + p["b_z"])
    r = sigmoid(xr + h @ p["U_r"] + p["b_r"])
    rh = r * h
    hc = np.tanh(xh + rh @ p["U_h"] + p["b_h"])
    h_new = (1.0 - z) * h + z * hc
    return h_new, (h, z, r, rh, hc)


def _cell_backward(dh, cache, p, grads):
    """Accumulates U/b gradients into ``grads``; returns (daz, dar, dah, dh_prev)."""
    h, z, r, rh, hc = cache
    dhc = dh * z
    dz = dh * (hc - h)
    dh_prev = dh * (1.0 - z)
    dah = dhc * (1.0 - hc * hc)
    drh = dah @ p["U_h"].T
    dh_prev += drh * r
    dar = drh * h * r * (1.0 - r)
    daz = dz * z * (1.0 - z)
    dh_prev += daz @ p["U_z"].T + dar @ p["U_r"].T
    grads["U_h"] += rh.T @ dah
    grads["U_z"] += h.T @ daz
    grads["U_r"] += h.T @ dar
    grads["b_h"] += dah.sum(axis=0)
    grads["b_z"] += daz.sum(axis=0)
    grads["b_r"] += dar.sum(axis=0)
    return daz, dar, dah, dh_prev


def gru_step(x, h_prev, p):
    """Single GRU update for a vector or a (N, D) batch.

    Returns ``(h_t, cache)``; pass the cache to :func:`gru_step_backward`.
    """
    vector = np.ndim(x) == 1
    x2, h2 = np.atleast_2d(x), np.atleast_2d(h_prev)
    h_new, cache = _cell(x2 @ p["W_z"], x2 @ p["W_r"], x2 @ p["W_h"], h2, p)
    return (h_new[0] if vector else h_new), (x2, cache, vector)


def gru_step_backward(dh, cache, p):
    """Returns ``(dx, dh_prev, grads)`` for one step."""
    x2, cell_cache, vector = cache
    grads = {k: np.zeros_like(p[k]) for k in GATE_KEYS}
    daz, dar, dah, dh_prev = _cell_backward(np.atleast_2d(dh), cell_cache, p, grads)
    grads["W_z"] = x2.T @ daz
    grads["W_r"] = x2.T @ dar
    grads["W_h"] = x2.T @ dah
    dx = daz @ p["W_z"].T + dar @ p["W_r"].T + dah @ p["W_h"].T
    if vector:
        return dx[0], dh_prev[0], grads
    return dx, dh_prev, grads


class GRU(Layer):
    """Left-to-right GRU over (N, T, D) or (T, D) input."""

    def __init__(self, d_in, hidden, rng=None, dtype=np.float32):
        super().__init__()
        self.d_in, self.hidden = d_in, hidden
        self.params = init_gru_params(d_in, hidden, rng=rng, dtype=dtype)
        self._caches = None
        self._xs = None
        self._time_index = None

    def forward(self, xs, time_index=None):
        """``time_index`` (N, T), if given, is an involutive per-item time
        permutation: the recurrence runs over the permuted order and the
        output is returned in the original order."""
        xs = np.asarray(xs)
        squeeze = xs.ndim == 2
        if squeeze:
            xs = xs[None]
        n, t, d = xs.shape
        if t == 0:
            raise DimensionError("GRU needs at least one time step")
        if d != self.d_in:
            raise DimensionError(f"input dim {d} != {self.d_in}")
        p = self.params
        flat = xs.reshape(n * t, d)
        xz = (flat @ p["W_z"]).reshape(n, t, -1)
        xr = (flat @ p["W_r"]).reshape(n, t, -1)
        xh = (flat @ p["W_h"]).reshape(n, t, -1)
        if time_index is not None:
            # permuting the hidden-size projections is cheaper than the inputs
            xz, xr, xh = (_gather_time(a, time_index) for a in (xz, xr, xh))
        h = np.zeros((n, self.hidden), dtype=xz.dtype)
        out = np.empty((n, t, self.hidden), dtype=xz.dtype)
        caches = []
        for i in range(t):
            h, c = _cell(xz[:, i], xr[:, i], xh[:, i], h, p)
            caches.append(c)
            out[:, i] = h
        if time_index is not None:
            out = _gather_time(out, time_index)
        self._caches, self._xs, self._squeeze = caches, xs, squeeze
        self._time_index = time_index
        return out[0] if squeeze else out

    def backward(self, dhs):
        """Backpropagation through time; returns d(xs)."""
        if self._squeeze:
            dhs = dhs[None]
        p = self.params
        xs = self._xs
        n, t, d = xs.shape
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        daz = np.empty((n, t, self.hidden), dtype=dhs.dtype)
        dar = np.empty_like(daz)
        dah = np.empty_like(daz)
        dh_next = np.zeros((n, self.hidden), dtype=dhs.dtype)
        idx = self._time_index
        if idx is not None:
            dhs = _gather_time(dhs, idx)
        for i in reversed(range(t)):
            daz[:, i], dar[:, i], dah[:, i], dh_next = _cell_backward(
                dhs[:, i] + dh_next, self._caches[i], p, grads)
        if idx is not None:
            daz, dar, dah = (_gather_time(a, idx) for a in (daz, dar, dah))
        flat = xs.reshape(n * t, d)
        for g, da in (("z", daz), ("r", dar), ("h", dah)):
            grads[f"W_{g}"] = flat.T @ da.reshape(n * t, -1)
        dxs = daz @ p["W_z"].T + dar @ p["W_r"].T + dah @ p["W_h"].T
        self.grads = grads
        return dxs[0] if self._squeeze else dxs


def reversal_index(lengths, t_max):
    """Per-item index that reverses the valid prefix and keeps padding in place.

    The permutation is its own inverse.
    """
    idx = np.tile(np.arange(t_max), (len(lengths), 1))
    for n, length in enumerate(lengths):
        if not 0 < length <= t_max:
            raise DimensionError(f"length {length} outside (0, {t_max}]")
        idx[n, :length] = np.arange(length - 1, -1, -1)
    return idx


def _gather_time(x, idx):
    return np.take_along_axis(x, idx[..., None], axis=1)


class BiGRULayer(Layer):
    """Forward and backward GRU halves, outputs concatenated (fwd first)."""

    def __init__(self, d_in, hidden, rng=None, dtype=np.float32):
        super().__init__()
        self.hidden = hidden
        self.children = {"fwd": GRU(d_in, hidden, rng=rng, dtype=dtype),
                         "bwd": GRU(d_in, hidden, rng=rng, dtype=dtype)}
        self._idx = None

    def forward(self, xs, lengths=None):
        n, t, _ = xs.shape
        lengths = [t] * n if lengths is None else lengths
        self._idx = idx = reversal_index(lengths, t)
        fwd = self.children["fwd"].forward(xs)
        bwd = self.children["bwd"].forward(xs, time_index=idx)
        return np.concatenate([fwd, bwd], axis=-1)

    def backward(self, dout):
        h = self.hidden
        dx = self.children["fwd"].backward(np.ascontiguousarray(dout[..., :h]))
        return dx + self.children["bwd"].backward(np.ascontiguousarray(dout[..., h:]))


class BiGRU(Layer):
    """Stack of bidirectional layers; layer k>0 consumes 2*hidden features."""

    def __init__(self, d_in, hidden=256, num_layers=2, rng=None, dtype=np.float32):
        super().__init__()
        self.hidden = hidden
        for i in range(num_layers):
            self.children[f"layer{i}"] = BiGRULayer(
                d_in if i == 0 else 2 * hidden, hidden, rng=rng, dtype=dtype)

    def forward(self, xs, lengths=None):
        xs = np.asarray(xs)
        squeeze = xs.ndim == 2
        h = xs[None] if squeeze else xs
        for layer in self.children.values():
            h = layer.forward(h, lengths)
        self._squeeze = squeeze
        return h[0] if squeeze else h

    def backward(self, dout):
        d = dout[None] if self._squeeze else dout
        for layer in reversed(list(self.children.values())):
            d = layer.backward(d)
        return d[0] if self._squeeze else d
