"""Three-layer residual restoration network on single-channel EPIs.

Layers are zero-padded 2D cross-correlations: 9x9 (1 -> 64 channels), ReLU,
5x5 (64 -> 32), ReLU, 5x5 (32 -> 1). The network predicts a residual that is
added to its input by :func:`restore`.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

DEFAULT_FILTERS = (64, 32)
DEFAULT_KERNEL_SIZES = (9, 5, 5)

MAGIC = b"EPICNN\x01"
VERSION = 1


@dataclass
class Network:
    """Filter banks ``(out, in, kh, kw)`` and biases for each of the three layers."""

    weights: list
    biases: list

    def __post_init__(self):
        if len(self.weights) != 3 or len(self.biases) != 3:
            raise ValueError("network needs exactly three layers")
        in_ch = 1
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 4 or w.shape[1] != in_ch or w.shape[2] != w.shape[3] or w.shape[2] % 2 == 0:
                raise ValueError(f"bad filter bank shape {w.shape}")
            if b.shape != (w.shape[0],):
                raise ValueError(f"bias shape {b.shape} does not match {w.shape[0]} filters")
            in_ch = w.shape[0]
        if in_ch != 1:
            raise ValueError("last layer must have a single filter")

    @property
    def dtype(self):
        return self.weights[0].dtype

    def params(self) -> list:
        """Parameters in the fixed order w1, b1, w2, b2, w3, b3."""
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "Network":
        return Network([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def astype(self, dtype) -> "Network":
        return Network([w.astype(dtype) for w in self.weights],
                       [b.astype(dtype) for b in self.biases])


def init_network(seed: int = 0, init_std: float = 1e-3, filters=DEFAULT_FILTERS,
                 kernel_sizes=DEFAULT_KERNEL_SIZES, dtype=np.float64) -> Network:
    """Gaussian(0, init_std^2) filters from a seeded generator, zero biases."""
    if not init_std > 0:
        raise ValueError("init_std must be positive")
    rng = np.random.default_rng(seed)
    channels = (1, *filters, 1)
    weights, biases = [], []
    for cin, cout, k in zip(channels[:-1], channels[1:], kernel_sizes):
        weights.append(rng.normal(0.0, init_std, (cout, cin, k, k)).astype(dtype))
        biases.append(np.zeros(cout, dtype=dtype))
    return Network(weights, biases)


def zero_network(filters=DEFAULT_FILTERS, kernel_sizes=DEFAULT_KERNEL_SIZES, dtype=np.float64) -> Network:
    channels = (1, *filters, 1)
    return Network(
        [np.zeros((co, ci, k, k), dtype) for ci, co, k in zip(channels[:-1], channels[1:], kernel_sizes)],
        [np.zeros(co, dtype) for co in channels[1:]],
    )


# ---------------------------------------------------------------------------
# Convolution primitives. Activations are channels-last (N, H, W, C). A layer
# pads its input, flattens it to rows of C values and accumulates one matrix
# product per filter tap: tap (u, v) reads the contiguous row range starting
# at u * Wp + v. Outputs are computed on the padded grid and cropped.


class _Padded:
    """Zero-padded, flattened layer input."""

    def __init__(self, x: np.ndarray, k: int):
        n, h, w, c = x.shape
        p = k // 2
        self.shape = x.shape
        self.k = k
        self.hp, self.wp = h + 2 * p, w + 2 * p
        xp = np.zeros((n, self.hp, self.wp, c), dtype=x.dtype)
        xp[:, p:p + h, p:p + w] = x
        self.flat = xp.reshape(-1, c)
        self.rows = self.flat.shape[0] - (k - 1) * (self.wp + 1)

    def offsets(self):
        for u in range(self.k):
            for v in range(self.k):
                yield u, v, u * self.wp + v

    def crop(self, full: np.ndarray) -> np.ndarray:
        n, h, w, _ = self.shape
        return full.reshape(n, self.hp, self.wp, -1)[:, :h, :w]

    def embed(self, grad: np.ndarray) -> np.ndarray:
        """Place an (N, H, W, C) output gradient on the padded output grid."""
        n, h, w, _ = self.shape
        full = np.zeros((n, self.hp, self.wp, grad.shape[-1]), dtype=grad.dtype)
        full[:, :h, :w] = grad
        return full.reshape(-1, grad.shape[-1])


def _conv(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None):
    """Zero-padded cross-correlation; returns (output, padded input)."""
    pad = _Padded(x, w.shape[-1])
    taps = np.ascontiguousarray(w.transpose(2, 3, 1, 0))  # (k, k, Cin, Cout)
    full = np.zeros((pad.flat.shape[0], w.shape[0]), dtype=x.dtype)
    if x.shape[-1] == 1:
        # single input channel: one product against explicit columns
        pad.cols = np.stack([pad.flat[off:off + pad.rows, 0] for _, _, off in pad.offsets()], axis=1)
        full[:pad.rows] = pad.cols @ taps.reshape(-1, w.shape[0])
    else:
        for u, v, off in pad.offsets():
            full[:pad.rows] += pad.flat[off:off + pad.rows] @ taps[u, v]
    out = pad.crop(full)
    if b is not None:
        out += b
    return out, pad


def _conv_backward(pad: _Padded, w: np.ndarray, dout: np.ndarray, need_input: bool):
    """Weight gradient (Cout, Cin, k, k) and, optionally, input gradient (N, H, W, Cin)."""
    d = pad.embed(dout)[:pad.rows]
    k = pad.k
    if getattr(pad, "cols", None) is not None:
        gw = (pad.cols.T @ d).reshape(k, k, 1, -1)
    else:
        gw = np.empty((k, k) + w.shape[1::-1], dtype=w.dtype)
        for u, v, off in pad.offsets():
            gw[u, v] = pad.flat[off:off + pad.rows].T @ d
    gw = np.ascontiguousarray(gw.transpose(3, 2, 0, 1))
    if not need_input:
        return gw, None
    # input gradient = same-padded correlation with the flipped, transposed bank
    flipped = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    dx, _ = _conv(dout, flipped)
    return gw, dx


# ---------------------------------------------------------------------------


def _as_batch(x: np.ndarray, dtype) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 3:
        raise ValueError(f"expected a (N, H, W) stack of single-channel EPIs, got shape {x.shape}")
    return x.astype(dtype, copy=False)[..., None]


def _forward(net: Network, x: np.ndarray):
    (w1, w2, w3), (b1, b2, b3) = net.weights, net.biases
    z1, p1 = _conv(x, w1, b1)
    a1 = np.maximum(z1, 0)
    z2, p2 = _conv(a1, w2, b2)
    a2 = np.maximum(z2, 0)
    out, p3 = _conv(a2, w3, b3)
    return out, (a1, a2), (p1, p2, p3)


def forward_batch(net: Network, x: np.ndarray, keep_activations: bool = False):
    """Residual prediction for a (N, H, W) stack; returns (N, H, W).

    With ``keep_activations`` the hidden ReLU outputs (N, H, W, C) of the
    first two layers are returned as well.
    """
    out, acts, _ = _forward(net, _as_batch(x, net.dtype))
    if keep_activations:
        return out[..., 0], acts
    return out[..., 0]


def forward(net: Network, epi: np.ndarray, keep_activations: bool = False):
    """Residual prediction for one single-channel (H, W) EPI."""
    epi = np.asarray(epi)
    if epi.ndim != 2:
        raise ValueError(f"expected a single-channel (H, W) EPI, got shape {epi.shape}")
    if keep_activations:
        out, acts = forward_batch(net, epi[None], True)
        return out[0], [a[0] for a in acts]
    return forward_batch(net, epi[None])[0]


def restore(net: Network, epi: np.ndarray) -> np.ndarray:
    """``epi + forward(net, epi)``; no clamping."""
    epi = np.asarray(epi)
    return epi + forward(net, epi)


def restore_batch(net: Network, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    return x + forward_batch(net, x)


def loss_and_gradients(net: Network, inputs: np.ndarray, targets: np.ndarray):
    """Loss ``mean_i sum_px (target_i - R(input_i))^2`` and its parameter gradients.

    Args:
        inputs, targets: (N, H, W) stacks of network inputs and residual targets.

    Returns:
        ``(loss, grads)`` with grads ordered like :meth:`Network.params`.
    """
    inputs = np.asarray(inputs)
    if inputs.ndim != 3 or inputs.shape[0] == 0:
        raise ValueError("need a non-empty (N, H, W) batch")
    targets = np.asarray(targets)
    if targets.shape != inputs.shape:
        raise ValueError("input and target shapes differ")
    w1, w2, w3 = net.weights
    n = inputs.shape[0]
    out, (a1, a2), (p1, p2, p3) = _forward(net, _as_batch(inputs, net.dtype))
    diff = out[..., 0] - targets.astype(net.dtype, copy=False)
    loss = float(np.sum(diff.astype(np.float64) ** 2) / n)

    d3 = ((2.0 / n) * diff)[..., None].astype(net.dtype, copy=False)
    gw3, dx = _conv_backward(p3, w3, d3, True)
    d2 = dx * (a2 > 0)
    gw2, dx = _conv_backward(p2, w2, d2, True)
    d1 = dx * (a1 > 0)
    gw1, _ = _conv_backward(p1, w1, d1, False)
    sums = [d.sum(axis=(0, 1, 2)) for d in (d1, d2, d3)]
    return loss, [gw1, sums[0], gw2, sums[1], gw3, sums[2]]


# ---------------------------------------------------------------------------
# Weights file


class WeightsFileError(ValueError):
    """Base class for unreadable weights files."""


class BadMagicError(WeightsFileError):
    pass


class VersionMismatchError(WeightsFileError):
    pass


class TruncatedFileError(WeightsFileError):
    pass


def save_weights(net: Network, path: str | os.PathLike) -> None:
    """Write the versioned little-endian float32 weights file."""
    chunks = [MAGIC, struct.pack("<II", VERSION, len(net.weights))]
    for w, b in zip(net.weights, net.biases):
        chunks.append(struct.pack("<4I", *w.shape))
        chunks.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        chunks.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_weights(path: str | os.PathLike, dtype=np.float32) -> Network:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path}: not an EPICNN weights file")
    pos = len(MAGIC)

    def take(nbytes):
        nonlocal pos
        if pos + nbytes > len(data):
            raise TruncatedFileError(f"{path}: file ends early at byte {len(data)}")
        chunk = data[pos:pos + nbytes]
        pos += nbytes
        return chunk

    version, n_layers = struct.unpack("<II", take(8))
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    if n_layers != 3:
        raise WeightsFileError(f"{path}: expected 3 layers, found {n_layers}")
    weights, biases = [], []
    for _ in range(n_layers):
        shape = struct.unpack("<4I", take(16))
        count = int(np.prod(shape))
        weights.append(np.frombuffer(take(4 * count), "<f4").reshape(shape).astype(dtype))
        biases.append(np.frombuffer(take(4 * shape[0]), "<f4").astype(dtype))
    if pos != len(data):
        raise WeightsFileError(f"{path}: {len(data) - pos} trailing bytes")
    return Network(weights, biases)
