"""Catmull-Rom cubic interpolation with replicate boundary extension."""

from __future__ import annotations

import numpy as np

A = -0.5


def cubic_weights(t: np.ndarray) -> tuple[np.ndarray, ...]:
    """Weights of the samples at offsets -1, 0, 1, 2 for fractional part t."""
    t2 = t * t
    t3 = t2 * t
    w0 = A * (t3 - 2.0 * t2 + t)
    w1 = (A + 2.0) * t3 - (A + 3.0) * t2 + 1.0
    w2 = -(A + 2.0) * t3 + (2.0 * A + 3.0) * t2 - A * t
    w3 = -A * (t3 - t2)
    return w0, w1, w2, w3


def sample_last_axis(arr: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Interpolate ``arr`` along its last axis at fractional positions.

    ``pos`` must broadcast against ``arr.shape[:-1] + (m,)``; the result has
    that shape. Positions outside ``[0, n-1]`` read replicated edge samples.
    Integer positions return the stored sample exactly.
    """
    arr = np.asarray(arr)
    n = arr.shape[-1]
    pos = np.asarray(pos, dtype=np.float64)
    base = np.floor(pos)
    t = pos - base
    base = base.astype(np.int64)
    out_shape = np.broadcast_shapes(arr.shape[:-1] + (1,), pos.shape)
    out_shape = arr.shape[:-1] + out_shape[-1:]
    full_arr = np.broadcast_to(arr, out_shape[:-1] + (n,))
    result = np.zeros(out_shape, dtype=np.result_type(arr.dtype, np.float64))
    for offset, w in zip((-1, 0, 1, 2), cubic_weights(t)):
        idx = np.broadcast_to(np.clip(base + offset, 0, n - 1), out_shape)
        result += np.broadcast_to(w, out_shape) * np.take_along_axis(full_arr, idx, axis=-1)
    return result


def sample_axis(arr: np.ndarray, pos: np.ndarray, axis: int) -> np.ndarray:
    """Interpolate along ``axis`` at the 1D positions ``pos`` (same for all lanes)."""
    moved = np.moveaxis(np.asarray(arr), axis, -1)
    out = sample_last_axis(moved, np.asarray(pos, dtype=np.float64))
    return np.moveaxis(out, -1, axis)


def shift_rows(arr: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Read ``out[..., a, x] = arr[..., a, x + offsets[a]]`` with cubic sampling."""
    arr = np.asarray(arr)
    width = arr.shape[-1]
    offsets = np.asarray(offsets, dtype=np.float64)
    pos = np.arange(width, dtype=np.float64)[None, :] + offsets[:, None]
    return sample_last_axis(arr, pos)
