"""Binary Netpbm (P5 grayscale / P6 color) reading and writing.

Samples are unsigned integers in ``[0, maxval]``. Files with ``maxval > 255``
store two bytes per sample, most significant byte first.
"""

from __future__ import annotations

import os

import numpy as np


class NetpbmError(ValueError):
    """Raised for malformed or unsupported Netpbm files."""


def _tokens(data: bytes, count: int):
    """Return the first ``count`` header tokens and the offset of the raster."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise NetpbmError("truncated header")
        if data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    return tokens, pos + 1


def read_netpbm(path: str | os.PathLike) -> tuple[np.ndarray, int]:
    """Read a P5 or P6 file.

    Returns:
        ``(pixels, maxval)`` where pixels has shape (H, W) for P5 and
        (H, W, 3) for P6, dtype uint8 or uint16.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, offset = _tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise NetpbmError(f"{path}: unsupported magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise NetpbmError(f"{path}: malformed header") from exc
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise NetpbmError(f"{path}: invalid header values")
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    if len(data) - offset < count * dtype.itemsize:
        raise NetpbmError(f"{path}: truncated raster")
    pixels = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    pixels = pixels.astype(np.uint16 if maxval > 255 else np.uint8)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return pixels.reshape(shape), maxval


def write_netpbm(path: str | os.PathLike, pixels: np.ndarray, maxval: int) -> None:
    """Write integer samples as P5 (2D array) or P6 (H, W, 3 array)."""
    pixels = np.asarray(pixels)
    if pixels.ndim == 2:
        magic = b"P5"
    elif pixels.ndim == 3 and pixels.shape[2] == 3:
        magic = b"P6"
    else:
        raise NetpbmError(f"cannot store array of shape {pixels.shape}")
    if not 0 < maxval < 65536:
        raise NetpbmError(f"invalid maxval {maxval}")
    if pixels.size and (pixels.min() < 0 or pixels.max() > maxval):
        raise NetpbmError("sample values outside [0, maxval]")
    dtype = ">u2" if maxval > 255 else "u1"
    height, width = pixels.shape[:2]
    header = b"%s\n%d %d\n%d\n" % (magic, width, height, maxval)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pixels.astype(dtype).tobytes())


def quantize(values: np.ndarray, bitdepth: int) -> np.ndarray:
    """Map values in [0, 1] onto the integer grid of the given bit depth."""
    maxval = (1 << bitdepth) - 1
    q = np.rint(np.clip(values, 0.0, 1.0) * maxval)
    return q.astype(np.uint16 if bitdepth > 8 else np.uint8)


def dequantize(pixels: np.ndarray, maxval: int) -> np.ndarray:
    return pixels.astype(np.float64) / maxval
