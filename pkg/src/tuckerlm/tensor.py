"""Dense tensor helpers: validation, mode unfolding/folding, n-mode products.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 and order 1-4.
``as_tensor`` returns a read-only C-contiguous copy so that values handed to
the decomposition routines cannot be mutated behind their back.

Unfolding convention: the mode-``m`` unfolding has ``shape[m]`` rows; the
remaining dimensions are flattened in ascending order, row-major (last index
fastest).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

MAX_ORDER = 4


def as_tensor(data, shape: Sequence[int] | None = None) -> np.ndarray:
    """Validate ``data`` as a dense float64 tensor of order 1..4.

    If ``shape`` is given, ``data`` is treated as a flat row-major buffer and
    reshaped; its length must equal ``prod(shape)``.
    """
    arr = np.array(data, dtype=np.float64, order="C", copy=True)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s < 1 for s in shape):
            raise ValueError(f"shape entries must be >= 1, got {shape}")
        if arr.size != int(np.prod(shape)):
            raise ValueError(
                f"buffer of length {arr.size} does not match shape {shape}")
        arr = arr.reshape(shape)
    if not 1 <= arr.ndim <= MAX_ORDER:
        raise ValueError(f"tensor order must be in 1..{MAX_ORDER}, got {arr.ndim}")
    if any(s < 1 for s in arr.shape):
        raise ValueError(f"shape entries must be >= 1, got {arr.shape}")
    arr.flags.writeable = False
    return arr


def _check_mode(order: int, mode: int) -> int:
    if not 0 <= mode < order:
        raise IndexError(f"mode {mode} out of range for order-{order} tensor")
    return mode


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization, shape ``(t.shape[mode], prod(rest))``."""
    t = np.asarray(t, dtype=np.float64)
    _check_mode(t.ndim, mode)
    return np.ascontiguousarray(np.moveaxis(t, mode, 0)).reshape(t.shape[mode], -1)


def fold(m: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    m = np.asarray(m, dtype=np.float64)
    shape = tuple(int(s) for s in shape)
    _check_mode(len(shape), mode)
    rest = shape[:mode] + shape[mode + 1:]
    expected = (shape[mode], int(np.prod(rest)) if rest else 1)
    if m.ndim != 2 or m.shape != expected:
        raise ValueError(
            f"matrix of shape {m.shape} cannot fold to {shape} along mode {mode}"
            f" (expected {expected})")
    return np.ascontiguousarray(np.moveaxis(m.reshape((shape[mode],) + rest), 0, mode))


def mode_product(t: np.ndarray, u: np.ndarray, mode: int,
                 transpose: bool = False) -> np.ndarray:
    """n-mode product of tensor ``t`` with matrix ``u``.

    With ``transpose=False`` the result is::

        out[..., j, ...] = sum_i t[..., i, ...] * u[j, i]

    so ``u`` must have ``t.shape[mode]`` columns.  With ``transpose=True`` the
    contraction runs over the rows of ``u`` instead (``u[i, j]``), which is the
    reconstruction direction for factors stored as ``r x n``: the core times
    an ``r_i x n_i`` factor lifts mode ``i`` from ``r_i`` back to ``n_i``.
    Projecting a tensor onto a factor's row space is the default direction.
    """
    t = np.asarray(t, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    _check_mode(t.ndim, mode)
    if u.ndim != 2:
        raise ValueError(f"factor must be a matrix, got shape {u.shape}")
    mat = u.T if transpose else u
    if mat.shape[1] != t.shape[mode]:
        side = "rows" if transpose else "columns"
        raise ValueError(
            f"mode-{mode} size {t.shape[mode]} does not match factor {side} "
            f"({u.shape})")
    out = np.tensordot(mat, t, axes=([1], [mode]))
    return np.ascontiguousarray(np.moveaxis(out, 0, mode))


def frobenius_norm(t: np.ndarray) -> float:
    t = np.asarray(t, dtype=np.float64)
    scale = np.max(np.abs(t)) if t.size else 0.0
    if scale == 0.0:
        return 0.0
    # scaled to avoid overflow on huge entries
    return float(scale * np.sqrt(np.sum((t / scale) ** 2)))
