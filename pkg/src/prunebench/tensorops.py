"""Dense tensor primitives shared by the whole toolkit.

A tensor here is a C-contiguous ``numpy.ndarray`` of ``float32`` with 1 to 4
dimensions.  All operations are pure: inputs are never mutated.  Norm and
matmul reductions may accumulate in float64 internally; results are float
(norms) or float32 arrays.
"""

from __future__ import annotations

import math

import numpy as np

DTYPE = np.float32
MAX_RANK = 4


def tensor(data, shape=None) -> np.ndarray:
    """Build a float32 tensor from nested lists or an array, optionally reshaped."""
    t = np.asarray(data, dtype=DTYPE)
    if shape is not None:
        t = t.reshape(shape)
    if t.ndim < 1 or t.ndim > MAX_RANK:
        raise ValueError(f"tensor rank must be 1..{MAX_RANK}, got {t.ndim}")
    if 0 in t.shape:
        raise ValueError(f"tensor dimensions must be positive, got shape {t.shape}")
    return np.ascontiguousarray(t)


def _check_axis(t: np.ndarray, axis: int) -> None:
    if not 0 <= axis < t.ndim:
        raise ValueError(f"axis {axis} out of range for rank-{t.ndim} tensor")


def slice_norm(t: np.ndarray, axis: int, coord: int) -> float:
    """L2 norm of the sub-tensor obtained by fixing ``axis`` at ``coord``.

    Accumulates in float64 for stability.
    """
    _check_axis(t, axis)
    if not 0 <= coord < t.shape[axis]:
        raise ValueError(
            f"coordinate {coord} out of range for axis {axis} of length {t.shape[axis]}"
        )
    sl = np.take(t, coord, axis=axis)
    return math.sqrt(float(np.sum(np.square(sl, dtype=np.float64))))


def take_along_axis(t: np.ndarray, axis: int, indices) -> np.ndarray:
    """Keep only ``indices`` (strictly ascending) along ``axis``.

    Surviving entries are preserved bit-exactly and keep their relative order.
    """
    _check_axis(t, axis)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("indices must be a non-empty 1-D sequence")
    if idx[0] < 0 or idx[-1] >= t.shape[axis]:
        raise ValueError(
            f"indices out of range for axis {axis} of length {t.shape[axis]}"
        )
    if idx.size > 1 and not np.all(np.diff(idx) > 0):
        raise ValueError("indices must be strictly ascending and unique")
    return np.ascontiguousarray(np.take(t, idx, axis=axis))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense matrix product; also supports matrix @ vector."""
    if a.ndim != 2 or b.ndim not in (1, 2):
        raise ValueError(f"matmul expects 2-D @ 1-D/2-D, got {a.ndim}-D @ {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return np.dot(a, b).astype(DTYPE, copy=False)


def _binary_shapes(a: np.ndarray, b) -> None:
    # scalars broadcast; anything else must match exactly
    if np.isscalar(b) or getattr(b, "ndim", None) == 0:
        return
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def add(a: np.ndarray, b) -> np.ndarray:
    _binary_shapes(a, b)
    return np.add(a, b, dtype=DTYPE)


def multiply(a: np.ndarray, b) -> np.ndarray:
    _binary_shapes(a, b)
    return np.multiply(a, b, dtype=DTYPE)


def sigmoid(t):
    """Elementwise logistic function; accepts scalars or tensors.

    exp may overflow float32 for large negative inputs; the result still
    saturates to exactly 0, so the overflow warning is suppressed.
    """
    x = np.asarray(t, dtype=DTYPE)
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-x, dtype=DTYPE))
    return out.astype(DTYPE, copy=False)


def tanh(t):
    x = np.asarray(t, dtype=DTYPE)
    return np.tanh(x).astype(DTYPE, copy=False)
