"""4D light-field container, EPI slicing, color conversion and angular resampling.

Samples are stored as a float array indexed ``(t, s, y, x, channel)``. An EPI
is a plain 2D array indexed ``(angular, spatial)``: horizontal EPIs fix
``(y, t)`` and vary ``(s, x)``; vertical EPIs fix ``(x, s)`` and vary ``(t, y)``.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import interp
from .netpbm import NetpbmError, dequantize, quantize, read_netpbm, write_netpbm


class ChannelSpace(str, enum.Enum):
    RGB = "RGB"
    YCBCR = "YCbCr"
    LUMA = "LUMA"


class Orientation(str, enum.Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"


class ColorDirection(str, enum.Enum):
    RGB_TO_YCBCR = "rgb_to_ycbcr"
    YCBCR_TO_RGB = "ycbcr_to_rgb"


class LightFieldFormatError(ValueError):
    """Raised when a light-field directory cannot be parsed."""


@dataclass
class LightField4D:
    """Light-field samples indexed ``(t, s, y, x, channel)``."""

    samples: np.ndarray
    channel_space: ChannelSpace = ChannelSpace.LUMA
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim == 4:
            self.samples = self.samples[..., None]
        if self.samples.ndim != 5 or min(self.samples.shape) < 1:
            raise ValueError(f"expected (T, S, H, W, C) samples, got {self.samples.shape}")
        if self.samples.shape[-1] not in (1, 3):
            raise ValueError("channel count must be 1 or 3")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("light field contains non-finite samples")
        self.channel_space = ChannelSpace(self.channel_space)
        if self.samples.shape[-1] == 1 and self.channel_space is not ChannelSpace.LUMA:
            raise ValueError("single-channel light fields must use LUMA")

    @property
    def dims(self) -> tuple[int, int, int, int, int]:
        return tuple(int(n) for n in self.samples.shape)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[-1]

    def copy(self) -> "LightField4D":
        return LightField4D(self.samples.copy(), self.channel_space, dict(self.meta))

    def view(self, t: int, s: int) -> np.ndarray:
        return self.samples[t, s]


# ---------------------------------------------------------------------------
# Directory I/O


def _view_name(t: int, s: int, channels: int) -> str:
    return f"view_{t:02d}_{s:02d}.{'ppm' if channels == 3 else 'pgm'}"


def save_lightfield(lf: LightField4D, dir_path: str | os.PathLike, bitdepth: int = 16) -> None:
    """Write ``manifest.json`` plus one Netpbm file per view."""
    if bitdepth not in (8, 16):
        raise ValueError("bitdepth must be 8 or 16")
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    T, S, H, W, C = lf.dims
    manifest = {
        "T": T, "S": S, "H": H, "W": W, "C": C,
        "bitdepth": bitdepth,
        "channel_space": lf.channel_space.value,
    }
    maxval = (1 << bitdepth) - 1
    for t in range(T):
        for s in range(S):
            view = lf.samples[t, s]
            pixels = quantize(view[..., 0] if C == 1 else view, bitdepth)
            write_netpbm(root / _view_name(t, s, C), pixels, maxval)
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_lightfield(dir_path: str | os.PathLike) -> LightField4D:
    """Read a light-field directory written by :func:`save_lightfield`."""
    root = Path(dir_path)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
    except FileNotFoundError as exc:
        raise LightFieldFormatError(f"{root}: missing manifest.json") from exc
    except json.JSONDecodeError as exc:
        raise LightFieldFormatError(f"{root}: malformed manifest: {exc}") from exc
    if not isinstance(manifest, dict):
        raise LightFieldFormatError(f"{root}: manifest must be a JSON object")
    dims = {}
    for key in ("T", "S", "H", "W", "C"):
        value = manifest.get(key)
        if not isinstance(value, int) or value < 1:
            raise LightFieldFormatError(f"{root}: manifest field {key!r} invalid: {value!r}")
        dims[key] = value
    if dims["C"] not in (1, 3):
        raise LightFieldFormatError(f"{root}: manifest field 'C' must be 1 or 3")
    bitdepth = manifest.get("bitdepth")
    if bitdepth not in (8, 16):
        raise LightFieldFormatError(f"{root}: manifest field 'bitdepth' invalid: {bitdepth!r}")
    try:
        space = ChannelSpace(manifest.get("channel_space", "LUMA" if dims["C"] == 1 else "RGB"))
    except ValueError as exc:
        raise LightFieldFormatError(f"{root}: manifest field 'channel_space' invalid") from exc

    T, S, H, W, C = (dims[k] for k in ("T", "S", "H", "W", "C"))
    samples = np.empty((T, S, H, W, C))
    for t in range(T):
        for s in range(S):
            path = root / _view_name(t, s, C)
            if not path.exists():
                raise LightFieldFormatError(f"{root}: missing view (t={t}, s={s}): {path.name}")
            try:
                pixels, maxval = read_netpbm(path)
            except NetpbmError as exc:
                raise LightFieldFormatError(f"view (t={t}, s={s}): {exc}") from exc
            if pixels.ndim == 2:
                pixels = pixels[..., None]
            if pixels.shape != (H, W, C):
                raise LightFieldFormatError(
                    f"{root}: view (t={t}, s={s}) has shape {pixels.shape}, expected {(H, W, C)}"
                )
            samples[t, s] = dequantize(pixels, maxval)
    return LightField4D(np.clip(samples, 0.0, 1.0), space)


# ---------------------------------------------------------------------------
# EPI slicing


def _check_index(name: str, value: int, size: int) -> None:
    if not 0 <= value < size:
        raise IndexError(f"{name}={value} out of range [0, {size})")


def _epi_slice(lf: LightField4D, orientation, fixed_spatial, fixed_angular, channel):
    T, S, H, W, C = lf.dims
    orientation = Orientation(orientation)
    _check_index("channel", channel, C)
    if orientation is Orientation.HORIZONTAL:
        _check_index("y", fixed_spatial, H)
        _check_index("t", fixed_angular, T)
        return (fixed_angular, slice(None), fixed_spatial, slice(None), channel)
    _check_index("x", fixed_spatial, W)
    _check_index("s", fixed_angular, S)
    return (slice(None), fixed_angular, slice(None), fixed_spatial, channel)


def extract_epi(lf: LightField4D, orientation, fixed_spatial: int, fixed_angular: int,
                channel: int = 0) -> np.ndarray:
    """Copy out an EPI.

    Horizontal EPIs fix ``(y, t) = (fixed_spatial, fixed_angular)`` and have
    shape (S, W); vertical EPIs fix ``(x, s)`` and have shape (T, H).
    """
    return lf.samples[_epi_slice(lf, orientation, fixed_spatial, fixed_angular, channel)].copy()


def insert_epi(lf: LightField4D, epi: np.ndarray, orientation, fixed_spatial: int,
               fixed_angular: int, channel: int = 0) -> None:
    """Overwrite the slice that :func:`extract_epi` would return."""
    index = _epi_slice(lf, orientation, fixed_spatial, fixed_angular, channel)
    target = lf.samples[index]
    epi = np.asarray(epi)
    if epi.shape != target.shape:
        raise ValueError(f"EPI shape {epi.shape} does not match slice shape {target.shape}")
    lf.samples[index] = epi


def horizontal_epis(samples: np.ndarray) -> np.ndarray:
    """All horizontal EPIs of a (T, S, H, W) array as (T, H, S, W)."""
    return samples.transpose(0, 2, 1, 3)


def vertical_epis(samples: np.ndarray) -> np.ndarray:
    """All vertical EPIs of a (T, S, H, W) array as (S, W, T, H)."""
    return samples.transpose(1, 3, 0, 2)


# ---------------------------------------------------------------------------
# Color

# BT.601 full range
_RGB_TO_YCBCR = np.array([
    [0.299, 0.587, 0.114],
    [-0.299 / 1.772, -0.587 / 1.772, 0.886 / 1.772],
    [0.701 / 1.402, -0.587 / 1.402, -0.114 / 1.402],
])
_YCBCR_TO_RGB = np.linalg.inv(_RGB_TO_YCBCR)
_CHROMA_OFFSET = np.array([0.0, 0.5, 0.5])


def rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    return rgb @ _RGB_TO_YCBCR.T + _CHROMA_OFFSET


def ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    return (ycc - _CHROMA_OFFSET) @ _YCBCR_TO_RGB.T


def convert_color(lf: LightField4D, direction) -> LightField4D:
    direction = ColorDirection(direction)
    if lf.n_channels != 3:
        raise ValueError("color conversion needs three channels")
    if direction is ColorDirection.RGB_TO_YCBCR:
        if lf.channel_space is not ChannelSpace.RGB:
            raise ValueError(f"expected RGB input, got {lf.channel_space.value}")
        return LightField4D(rgb_to_ycbcr(lf.samples), ChannelSpace.YCBCR, dict(lf.meta))
    if lf.channel_space is not ChannelSpace.YCBCR:
        raise ValueError(f"expected YCbCr input, got {lf.channel_space.value}")
    return LightField4D(ycbcr_to_rgb(lf.samples), ChannelSpace.RGB, dict(lf.meta))


def luma(lf: LightField4D) -> np.ndarray:
    """Luminance samples (T, S, H, W) of any light field."""
    if lf.channel_space is ChannelSpace.RGB:
        return lf.samples @ _RGB_TO_YCBCR[0]
    return lf.samples[..., 0].copy()


# ---------------------------------------------------------------------------
# Angular sampling


def downsample_angular(lf: LightField4D, step: int) -> LightField4D:
    """Keep views at angular indices ``0, step, 2*step, ...`` on both axes.

    A light field with T = 1 is only subsampled along s.
    """
    if step < 1:
        raise ValueError("step must be >= 1")
    T, S = lf.dims[:2]
    for name, n in (("T", T), ("S", S)):
        if n > 1 and (n - 1) % step:
            raise ValueError(f"{name}-1={n - 1} is not divisible by step {step}")
    return LightField4D(lf.samples[::step, ::step].copy(), lf.channel_space, dict(lf.meta))


def angular_positions(n_in: int, n_out: int) -> np.ndarray:
    """Align-corners input coordinates sampled by each of ``n_out`` outputs."""
    if n_out == 1:
        return np.zeros(1)
    return np.arange(n_out) * ((n_in - 1) / (n_out - 1))


def resample_angular(epi: np.ndarray, out_views: int, axis: int = -2) -> np.ndarray:
    """Cubic angular upsampling with align-corners sampling.

    Works on a single (A, W) EPI or any stack whose angular axis is ``axis``.
    """
    epi = np.asarray(epi, dtype=np.float64)
    n_in = epi.shape[axis]
    if n_in < 3:
        raise ValueError(f"need at least 3 views, got {n_in}")
    if out_views < n_in:
        raise ValueError(f"out_views={out_views} is smaller than input view count {n_in}")
    if out_views == n_in:
        return epi.copy()
    return interp.sample_axis(epi, angular_positions(n_in, out_views), axis)


def shear_epi(epi: np.ndarray, shear_px: float) -> np.ndarray:
    """Shear so that content of disparity ``shear_px`` becomes vertical.

    Row ``a`` is translated by ``-shear_px * (a - a_center)`` with
    ``a_center = (A - 1) / 2``. Works on stacks with angular axis -2.
    """
    epi = np.asarray(epi, dtype=np.float64)
    if shear_px == 0:
        return epi.copy()
    n = epi.shape[-2]
    offsets = shear_px * (np.arange(n) - (n - 1) / 2.0)
    return interp.shift_rows(epi, offsets)


# ---------------------------------------------------------------------------
# Hierarchical view roles


class ViewRole(str, enum.Enum):
    INPUT = "input"
    STEP1_H = "step1_h"
    STEP1_V = "step1_v"
    STEP2 = "step2"


def lattice_positions(n_in: int, n_out: int) -> np.ndarray:
    """Output indices where the sparse input views land (integer factors only)."""
    if n_in == 1:
        return np.zeros(1, dtype=int)
    if (n_out - 1) % (n_in - 1):
        raise ValueError(f"{n_in} views do not sit on a {n_out}-view grid")
    return np.arange(n_in) * ((n_out - 1) // (n_in - 1))


def view_grid(in_t: int, in_s: int, out_t: int, out_s: int) -> np.ndarray:
    """Role of every output view in the two-step hierarchical reconstruction."""
    rows = np.zeros(out_t, bool)
    cols = np.zeros(out_s, bool)
    rows[lattice_positions(in_t, out_t)] = True
    cols[lattice_positions(in_s, out_s)] = True
    grid = np.empty((out_t, out_s), dtype=object)
    grid.fill(ViewRole.STEP2)
    grid[rows, :] = ViewRole.STEP1_H
    grid[:, cols] = ViewRole.STEP1_V
    grid[np.ix_(rows, cols)] = ViewRole.INPUT
    return grid
