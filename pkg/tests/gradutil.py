"""Helpers for finite-difference checks of layers with a forward/backward pair."""

import numpy as np

from omrf.gradcheck import numerical_grad, rel_error


def sample_indices(size, limit, rng):
    if limit is None or size <= limit:
        return None
    return rng.choice(size, limit, replace=False)


def check_arrays(loss, arrays, analytic, rng, eps=1e-6, limit=60, floor=1e-7):
    """Largest relative error between ``analytic[name]`` and central
    differences of ``loss()`` with respect to ``arrays[name]``.

    Gradients whose norm is below ``floor`` (e.g. a conv bias feeding a
    batch norm, which is exactly zero) are compared in absolute terms.
    """
    worst = {}
    for name, arr in arrays.items():
        idx = sample_indices(arr.size, limit, rng)
        num = numerical_grad(loss, arr, eps=eps, indices=idx)
        ana = np.asarray(analytic[name], dtype=np.float64)
        if idx is not None:
            num, ana = num.reshape(-1)[idx], ana.reshape(-1)[idx]
        worst[name] = rel_error(ana, num, floor=floor)
    return worst


def check_layer(layer, x, rng, forward=None, limit=60, eps=1e-6):
    """Gradient check of ``sum(forward(x) * R)`` w.r.t. x and every parameter."""
    forward = forward or layer.forward
    probe = rng.standard_normal(np.shape(forward(x)))

    def loss():
        return float(np.sum(forward(x) * probe))

    loss()
    dx = layer.backward(probe.copy())
    params = dict(layer.named_parameters())
    grads = dict(layer.named_grads())
    arrays = {"x": x, **params}
    analytic = {"x": dx, **grads}
    return check_arrays(loss, arrays, analytic, rng, eps=eps, limit=limit)
