"""1D spatial blur kernels for EPIs and the matching non-blind deblur."""

from __future__ import annotations

import enum
import functools
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .lightfield import resample_angular


class KernelKind(str, enum.Enum):
    SINC = "sinc"
    BUTTERWORTH = "butterworth"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class BlurKernel:
    """Normalized, symmetric, odd-length kernel sampled at integer offsets."""

    kind: KernelKind
    sigma: float
    taps: np.ndarray
    scale: float

    @property
    def radius(self) -> int:
        return len(self.taps) // 2


def kernel_radius(sigma: float) -> int:
    # round first so 4 * 1.5 lands on 6, not 6.000000001
    return int(math.ceil(round(4.0 * sigma, 9)))


def _profile(kind: KernelKind, x: np.ndarray, sigma: float) -> np.ndarray:
    if kind is KernelKind.SINC:
        return np.sinc(x / (2.0 * sigma))
    if kind is KernelKind.BUTTERWORTH:
        u = np.abs(x / sigma)
        return np.exp(-u) * (np.cos(u) + np.sin(u))
    return np.exp(-x * x / (2.0 * sigma * sigma))


def make_kernel(kind, sigma: float) -> BlurKernel:
    """Sample a kernel profile on ``[-ceil(4 sigma), ceil(4 sigma)]`` and normalize it."""
    kind = KernelKind(kind)
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    r = kernel_radius(sigma)
    half = _profile(kind, np.arange(r + 1, dtype=np.float64), sigma)
    raw = np.concatenate([half[:0:-1], half])
    scale = 1.0 / raw.sum()
    taps = raw * scale
    taps.setflags(write=False)
    return BlurKernel(kind, float(sigma), taps, float(scale))


def sigma_for_disparity(d_max: float) -> float:
    """Shape parameter scaled linearly from sigma = 1.5 at 4 px disparity."""
    if not d_max > 0:
        raise ValueError("d_max must be positive")
    return 1.5 * d_max / 4.0


def dump_kernel(kernel: BlurKernel, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        for tap in kernel.taps:
            fh.write(f"{tap:.17g}\n")


def read_kernel_taps(path: str | os.PathLike) -> np.ndarray:
    with open(path) as fh:
        return np.array([float(line) for line in fh if line.strip()])


def blur_epi(epi: np.ndarray, kernel: BlurKernel) -> np.ndarray:
    """Convolve every row along the spatial (last) axis, replicating edges."""
    return ndimage.correlate1d(np.asarray(epi, dtype=np.float64), kernel.taps,
                               axis=-1, mode="nearest")


def _next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


# Rows up to this width are deblurred with an exact dense solve; wider rows
# use the frequency-domain approximation.
EXACT_DEBLUR_MAX_WIDTH = 2048


@functools.lru_cache(maxsize=32)
def _deblur_matrix(width: int, taps: bytes, reg_eps: float) -> np.ndarray:
    """Matrix ``M`` with ``x = y @ M`` minimizing ``|Bx - y|^2 + eps |Dx|^2``.

    ``B`` is the replicate-edge blur of :func:`blur_epi` and ``D`` the
    first-difference operator.
    """
    kernel_taps = np.frombuffer(taps, dtype=np.float64)
    blur = ndimage.correlate1d(np.eye(width), kernel_taps, axis=-1, mode="nearest").T
    diff = np.diff(np.eye(width), axis=0)
    normal = blur.T @ blur + reg_eps * (diff.T @ diff)
    return np.linalg.solve(normal, blur.T).T


def _deblur_fft(epi: np.ndarray, kernel: BlurKernel, reg_eps: float) -> np.ndarray:
    width = epi.shape[-1]
    margin = max(2 * kernel.radius, 8)
    n = _next_pow2(width + 2 * margin)
    left = (n - width) // 2
    pad = [(0, 0)] * (epi.ndim - 1) + [(left, n - width - left)]
    padded = np.pad(epi, pad, mode="edge")

    k = np.zeros(n)
    r = kernel.radius
    k[: r + 1] = kernel.taps[r:]
    k[n - r:] = kernel.taps[:r]
    K = np.fft.rfft(k)
    omega = 2.0 * np.pi * np.fft.rfftfreq(n)
    G2 = 2.0 - 2.0 * np.cos(omega)
    gain = np.conj(K) / (np.abs(K) ** 2 + reg_eps * G2)
    out = np.fft.irfft(np.fft.rfft(padded, axis=-1) * gain, n=n, axis=-1)
    return out[..., left:left + width]


def deblur_epi(epi: np.ndarray, kernel: BlurKernel, reg_eps: float = 1e-3) -> np.ndarray:
    """Tikhonov-regularized inverse of :func:`blur_epi` along the spatial axis.

    Every row ``y`` is mapped to the minimizer of
    ``|B x - y|^2 + reg_eps |D x|^2`` where ``B`` is the replicate-edge blur
    and ``D`` the first difference. Using the exact boundary operator keeps
    the edge columns as accurate as the interior. Rows wider than
    ``EXACT_DEBLUR_MAX_WIDTH`` fall back to a replicate-padded
    frequency-domain division.
    """
    if not reg_eps > 0:
        raise ValueError(f"reg_eps must be positive, got {reg_eps}")
    epi = np.asarray(epi, dtype=np.float64)
    width = epi.shape[-1]
    if width > EXACT_DEBLUR_MAX_WIDTH:
        return _deblur_fft(epi, kernel, reg_eps)
    m = _deblur_matrix(width, np.ascontiguousarray(kernel.taps, dtype=np.float64).tobytes(), float(reg_eps))
    return epi @ m


def kernel_selection_error(epis_sparse, epis_dense, kernel: BlurKernel, out_views: int) -> float:
    """Mean over EPI pairs of the per-pixel squared error between the blurred,
    angularly upsampled sparse EPI and the blurred dense EPI."""
    epis_sparse = list(epis_sparse)
    epis_dense = list(epis_dense)
    if len(epis_sparse) != len(epis_dense):
        raise ValueError("sparse and dense EPI lists differ in length")
    if not epis_sparse:
        raise ValueError("no EPIs given")
    total = 0.0
    for sparse, dense in zip(epis_sparse, epis_dense):
        up = resample_angular(blur_epi(sparse, kernel), out_views)
        ref = blur_epi(dense, kernel)
        if up.shape != ref.shape:
            raise ValueError(f"upsampled shape {up.shape} does not match dense shape {ref.shape}")
        total += float(np.mean((up - ref) ** 2))
    return total / len(epis_sparse)
