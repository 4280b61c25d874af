"""Central finite differences for checking analytic gradients."""

from __future__ import annotations

import numpy as np


def numerical_grad(f, x, eps=1e-6, indices=None):
    """d f / d x by central differences, perturbing ``x`` in place.

    ``f`` takes no arguments and returns a scalar computed from the current
    contents of ``x``.  If ``indices`` (flat positions) is given only those
    entries are estimated and the rest are left at zero.
    """
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in (range(flat.size) if indices is None else indices):
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


def rel_error(analytic, numeric, floor=1e-12):
    """``||a - n|| / max(||a||, ||n||)``; tiny gradients fall back to absolute error."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    diff = np.linalg.norm(a - n)
    return diff if scale < floor else diff / scale
