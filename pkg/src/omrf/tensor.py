"""Small shape-checked dense tensor on top of numpy.

The layers in :mod:`omrf.nn` and :mod:`omrf.rnn` work on plain ndarrays for
speed; :class:`Tensor` is the strict front door used where shape discipline
matters more than throughput (element access, explicit reshapes, matmul
with dimension errors instead of broadcasting).
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when tensor shapes are incompatible."""


class Tensor:
    """Row-major dense array with an explicit shape.

    ``data`` is always the flat row-major view of the values.  Arithmetic
    only broadcasts a Python/numpy scalar against a tensor; any other shape
    mismatch raises :class:`DimensionError`.
    """

    __slots__ = ("_a",)

    def __init__(self, values, shape: Sequence[int] | None = None, dtype=np.float64):
        a = np.array(values, dtype=dtype)
        if shape is not None:
            shape = tuple(int(s) for s in shape)
            if any(s < 0 for s in shape):
                raise DimensionError(f"negative extent in shape {shape}")
            if math.prod(shape) != a.size:
                raise DimensionError(
                    f"{a.size} values cannot fill shape {shape}")
            a = a.reshape(shape)
        self._a = np.ascontiguousarray(a)

    @classmethod
    def zeros(cls, shape: Sequence[int], dtype=np.float64) -> "Tensor":
        return cls(np.zeros(tuple(shape), dtype=dtype))

    @classmethod
    def wrap(cls, array: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t._a = np.ascontiguousarray(array)
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self._a.shape

    @property
    def data(self) -> np.ndarray:
        return self._a.reshape(-1)

    @property
    def dtype(self):
        return self._a.dtype

    def numpy(self) -> np.ndarray:
        return self._a

    def __array__(self, dtype=None, copy=None):
        return self._a if dtype is None else self._a.astype(dtype)

    def __len__(self) -> int:
        return self._a.shape[0]

    def __getitem__(self, idx):
        return self._a[idx]

    def __setitem__(self, idx, value):
        self._a[idx] = value

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._a, other._a))

    __hash__ = None

    def _binary(self, other, op) -> "Tensor":
        if isinstance(other, Tensor):
            if other.shape != self.shape:
                raise DimensionError(
                    f"shape mismatch {self.shape} vs {other.shape}")
            return Tensor.wrap(op(self._a, other._a))
        if np.ndim(other) == 0:
            return Tensor.wrap(op(self._a, other))
        raise DimensionError("only scalar broadcasting is supported")

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: np.subtract(b, a))

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return Tensor.wrap(-self._a)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *new_shape) -> "Tensor":
        return reshape(self, new_shape[0] if len(new_shape) == 1 else new_shape)

    def transpose(self, *axes) -> "Tensor":
        return Tensor.wrap(self._a.transpose(*axes))

    def flatten(self) -> "Tensor":
        return Tensor.wrap(self.data.copy())

    def tolist(self):
        return self._a.tolist()


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``c[i, j] = sum_k a[i, k] * b[k, j]`` for 2-D tensors."""
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = b if isinstance(b, Tensor) else Tensor(b)
    if len(a.shape) != 2 or len(b.shape) != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return Tensor.wrap(a.numpy() @ b.numpy())


def reshape(t: Tensor, new_shape: Iterable[int] | int) -> Tensor:
    if isinstance(new_shape, int):
        new_shape = (new_shape,)
    new_shape = tuple(int(s) for s in new_shape)
    if math.prod(new_shape) != math.prod(t.shape):
        raise DimensionError(f"cannot reshape {t.shape} into {new_shape}")
    return Tensor.wrap(t.numpy().reshape(new_shape))


def sequence_from_feature_map(fmap) -> np.ndarray:
    """Turn an (N, C, H, W) map into an (N, W, C*H) sequence.

    Width becomes time; feature index is ``channel * H + row``.
    """
    fmap = np.asarray(fmap)
    if fmap.ndim != 4:
        raise DimensionError(f"expected (N, C, H, W), got {fmap.shape}")
    n, c, h, w = fmap.shape
    return np.ascontiguousarray(fmap.transpose(0, 3, 1, 2)).reshape(n, w, c * h)


def feature_map_from_sequence(seq, channels: int, height: int) -> np.ndarray:
    """Inverse of :func:`sequence_from_feature_map`."""
    seq = np.asarray(seq)
    n, w, f = seq.shape
    if f != channels * height:
        raise DimensionError(f"feature dim {f} != {channels}*{height}")
    return np.ascontiguousarray(seq.reshape(n, w, channels, height).transpose(0, 2, 3, 1))
