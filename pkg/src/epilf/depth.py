"""Depth-assisted rendering of large-disparity EPIs.

The input EPI is sheared once per discretized disparity level so that content
at that level becomes vertical, reconstructed with the regular pipeline,
sheared back at the output sampling rate and blended with binary masks.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lightfield import shear_epi
from .netpbm import read_netpbm, write_netpbm
from .pipeline import PipelineConfig, reconstruct_epi


@dataclass
class DisparityMap:
    """Per-pixel disparity (pixels per input view step) for an (A, W) EPI.

    A 1D row is taken as the reference-view map and broadcast to all views.
    """

    values: np.ndarray
    d_min: float | None = None
    d_max: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("disparity map contains non-finite values")
        if self.d_min is None:
            self.d_min = float(self.values.min())
        if self.d_max is None:
            self.d_max = float(self.values.max())
        if self.d_min > self.d_max:
            raise ValueError("d_min exceeds d_max")
        if self.values.min() < self.d_min - 1e-9 or self.values.max() > self.d_max + 1e-9:
            raise ValueError("disparity values outside [d_min, d_max]")

    def for_views(self, n_views: int) -> np.ndarray:
        """Per-view (n_views, W) disparities.

        A 1D map belongs to the central view. Every pixel is forward-warped to
        view ``a`` at ``x + d (a - centre)``; where two pixels land together the
        larger disparity (nearer surface) wins. Uncovered pixels are
        disocclusions and take the smaller (farther) of the nearest covered
        values to their left and right.
        """
        if self.values.ndim == 2:
            if self.values.shape[0] != n_views:
                raise ValueError(f"disparity map has {self.values.shape[0]} rows, EPI has {n_views}")
            return self.values
        width = self.values.size
        center = (n_views - 1) / 2.0
        order = np.argsort(self.values, kind="stable")  # ascending: nearer written last
        out = np.zeros((n_views, width))
        claimed = np.zeros((n_views, width), dtype=bool)
        for a in range(n_views):
            dst = np.rint(order + self.values[order] * (a - center)).astype(np.int64)
            valid = (dst >= 0) & (dst < width)
            out[a, dst[valid]] = self.values[order][valid]
            claimed[a, dst[valid]] = True
        return _background_fill_rows(claimed, out)


def discretize_disparity(dmap: DisparityMap, n_levels: int):
    """Uniform levels over ``[d_min, d_max]`` and the nearest-level label of every pixel."""
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    if n_levels == 1:
        return [(dmap.d_min + dmap.d_max) / 2.0], np.zeros(dmap.values.shape, dtype=np.int64)
    if dmap.d_max == dmap.d_min:
        return [dmap.d_min] * n_levels, np.zeros(dmap.values.shape, dtype=np.int64)
    levels = np.linspace(dmap.d_min, dmap.d_max, n_levels)
    step = levels[1] - levels[0]
    labels = np.clip(np.rint((dmap.values - dmap.d_min) / step), 0, n_levels - 1).astype(np.int64)
    return list(levels), labels


def _nearest_fill_rows(claimed: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Assign unclaimed pixels (-1) the nearest claimed label along each row."""
    out = labels.copy()
    width = labels.shape[1]
    cols = np.arange(width)
    for j in range(labels.shape[0]):
        have = np.nonzero(claimed[j])[0]
        if have.size == 0:
            out[j] = 0
            continue
        pos = np.searchsorted(have, cols)
        left = have[np.clip(pos - 1, 0, have.size - 1)]
        right = have[np.clip(pos, 0, have.size - 1)]
        pick = np.where(np.abs(cols - left) <= np.abs(right - cols), left, right)
        out[j] = labels[j, pick]
    return out


def _background_fill_rows(claimed: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Fill unclaimed pixels with the smaller of the nearest claimed values on either side."""
    out = values.copy()
    width = values.shape[1]
    cols = np.arange(width)
    for j in range(values.shape[0]):
        have = np.nonzero(claimed[j])[0]
        if have.size == 0:
            continue
        pos = np.searchsorted(have, cols)
        left = values[j, have[np.clip(pos - 1, 0, have.size - 1)]]
        right = values[j, have[np.clip(pos, 0, have.size - 1)]]
        left = np.where(pos == 0, right, left)
        right = np.where(pos == have.size, left, right)
        holes = ~claimed[j]
        out[j, holes] = np.minimum(left, right)[holes]
    return out


def _level_occupancy(labels: np.ndarray, level_index: int, shear: float) -> np.ndarray:
    """Columns of the sheared EPI that carry content of the given level in any view."""
    n_in, width = labels.shape
    center = (n_in - 1) / 2.0
    occ = np.zeros(width, dtype=bool)
    cols = np.arange(width)
    for a in range(n_in):
        src = np.rint(cols + shear * (a - center)).astype(np.int64)
        valid = (src >= 0) & (src < width)
        hit = np.zeros(width, dtype=bool)
        hit[valid] = labels[a, src[valid]] == level_index
        occ |= hit
    return occ


def build_masks(label_map: np.ndarray, out_views: int, levels) -> list:
    """Binary output-domain masks, one per level, that partition the (out_views, W) grid.

    A level claims every output pixel lying on the trajectory of one of its
    labelled input pixels. Overlaps go to the larger disparity; unclaimed
    pixels take the nearest claimed label along x.
    """
    label_map = np.atleast_2d(np.asarray(label_map))
    levels = list(levels)
    n_in, width = label_map.shape
    if label_map.size and (label_map.min() < 0 or label_map.max() >= len(levels)):
        raise ValueError("labels reference unknown levels")
    alpha = (out_views - 1) / (n_in - 1) if n_in > 1 else 1.0
    j_center = (out_views - 1) / 2.0
    owner = np.full((out_views, width), -1, dtype=np.int64)
    cols = np.arange(width)
    for i in sorted(range(len(levels)), key=lambda k: levels[k]):
        occ = _level_occupancy(label_map, i, levels[i])
        for j in range(out_views):
            src = np.rint(cols - levels[i] / alpha * (j - j_center)).astype(np.int64)
            valid = (src >= 0) & (src < width)
            claim = np.zeros(width, dtype=bool)
            claim[valid] = occ[src[valid]]
            owner[j, claim] = i  # later (larger) disparities overwrite
    claimed = owner >= 0
    owner = _nearest_fill_rows(claimed, owner)
    return [(owner == i).astype(np.uint8) for i in range(len(levels))]


def isolate_level(sheared: np.ndarray, sheared_labels: np.ndarray, level_index: int) -> np.ndarray:
    """Replace pixels of other levels by same-level content from the same column.

    In the sheared EPI the level's content is vertical, so a pixel hidden in
    one view is taken from the nearest view that sees it. Columns without any
    such view are filled from the nearest column that has one.
    """
    own = sheared_labels == level_index
    if own.all() or not own.any():
        return sheared
    out = sheared.copy()
    n, width = sheared.shape
    rows = np.arange(n)
    has = own.any(axis=0)
    for x in np.nonzero(has & ~own.all(axis=0))[0]:
        good = np.nonzero(own[:, x])[0]
        nearest = good[np.argmin(np.abs(rows[:, None] - good[None, :]), axis=1)]
        out[:, x] = sheared[nearest, x]
    if not has.all():
        good_cols = np.nonzero(has)[0]
        cols = np.arange(width)
        nearest = good_cols[np.argmin(np.abs(cols[:, None] - good_cols[None, :]), axis=1)]
        out[:, ~has] = out[:, nearest[~has]]
    return out


def _shear_labels(labels: np.ndarray, shear: float) -> np.ndarray:
    n, width = labels.shape
    center = (n - 1) / 2.0
    cols = np.arange(width)
    out = np.empty_like(labels)
    for a in range(n):
        src = np.clip(np.rint(cols + shear * (a - center)).astype(np.int64), 0, width - 1)
        out[a] = labels[a, src]
    return out


def depth_assisted_render(epi_L: np.ndarray, dmap: DisparityMap, cfg: PipelineConfig,
                          n_levels: int, out_views: int, isolate: bool = True,
                          return_stack: bool = False):
    """Render a dense (out_views, W) EPI from a sparse EPI and its disparity map.

    With ``isolate`` each sheared EPI has the pixels of other levels replaced
    by :func:`isolate_level` before reconstruction.
    """
    epi_L = np.asarray(epi_L, dtype=np.float64)
    if epi_L.ndim != 2:
        raise ValueError("expected a single-channel (A, W) EPI")
    n_in, width = epi_L.shape
    if n_in < 3:
        raise ValueError("need at least 3 input views")
    if out_views < n_in:
        raise ValueError("out_views must be >= the input view count")
    values = dmap.for_views(n_in)
    if values.shape[1] != width:
        raise ValueError("disparity map width does not match the EPI")
    levels, labels = discretize_disparity(DisparityMap(values, dmap.d_min, dmap.d_max), n_levels)
    if not levels:
        raise ValueError("empty level set")
    alpha = (out_views - 1) / (n_in - 1)
    masks = build_masks(labels, out_views, levels)
    out = np.zeros((out_views, width))
    stack = []
    for i, level in enumerate(levels):
        if not masks[i].any():
            continue
        sheared = shear_epi(epi_L, level)
        if isolate:
            sheared = isolate_level(sheared, _shear_labels(labels, level), i)
        dense = reconstruct_epi(sheared, cfg, out_views)
        back = shear_epi(dense, -level / alpha)
        out += back * masks[i]
        stack.append({"level": level, "sheared_epi": sheared, "mask": masks[i]})
    if return_stack:
        return out, stack
    return out


# ---------------------------------------------------------------------------
# Disparity PGM files with a JSON sidecar holding {d_min, d_max}


def save_disparity(dmap: DisparityMap, path: str | os.PathLike) -> None:
    values = np.atleast_2d(dmap.values)
    span = dmap.d_max - dmap.d_min
    scaled = np.zeros(values.shape) if span == 0 else (values - dmap.d_min) / span
    write_netpbm(path, np.rint(scaled * 65535).astype(np.uint16), 65535)
    Path(path).with_suffix(".json").write_text(
        json.dumps({"d_min": dmap.d_min, "d_max": dmap.d_max}, sort_keys=True) + "\n")


def load_disparity(path: str | os.PathLike, d_min: float | None = None,
                   d_max: float | None = None) -> DisparityMap:
    """Read a 16-bit PGM disparity map; gray 0 maps to d_min, full scale to d_max.

    A single-row image is returned as a 1D central-view map.
    """
    pixels, maxval = read_netpbm(path)
    if pixels.ndim != 2:
        raise ValueError(f"{path}: disparity maps must be grayscale")
    sidecar = Path(path).with_suffix(".json")
    if d_min is None or d_max is None:
        if not sidecar.exists():
            raise ValueError(f"{path}: no d_min/d_max given and no {sidecar.name}")
        meta = json.loads(sidecar.read_text())
        d_min = float(meta["d_min"]) if d_min is None else d_min
        d_max = float(meta["d_max"]) if d_max is None else d_max
    values = d_min + pixels.astype(np.float64) / maxval * (d_max - d_min)
    if values.shape[0] == 1:
        values = values[0]
    return DisparityMap(values, d_min, d_max)
