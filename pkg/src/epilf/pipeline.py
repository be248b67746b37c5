"""Blur, restore, deblur reconstruction of EPIs and of whole light fields."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .kernels import BlurKernel, blur_epi, deblur_epi
from .lightfield import (
    ChannelSpace,
    LightField4D,
    angular_positions,
    lattice_positions,
    resample_angular,
    rgb_to_ycbcr,
    ycbcr_to_rgb,
)
from .network import Network, restore_batch

# EPIs per chunk; fixed so results do not depend on the thread count
CHUNK = 256


@dataclass
class PipelineConfig:
    """Settings of the reconstruction chain.

    ``net=None`` replaces the learned restoration with the identity, which
    gives the bicubic-only baseline.
    """

    kernel: BlurKernel
    net: Network | None = None
    out_views_s: int = 9
    out_views_t: int = 9
    cascade_threshold: float = 2
    deblur_reg_eps: float = 1e-3
    chroma_mode: str = "bicubic_only"
    threads: int = 1

    def __post_init__(self):
        if self.cascade_threshold < 1:
            raise ValueError("cascade_threshold must be >= 1")
        if self.chroma_mode != "bicubic_only":
            raise ValueError(f"unsupported chroma mode {self.chroma_mode!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


def cascade_ladder(n_in: int, n_out: int, threshold: float = 2) -> list:
    """View counts visited by the cascade, ending at ``n_out``.

    A stage whose factor ``(n_out - 1) / (n_in - 1)`` exceeds the threshold is
    split at the geometric midpoint and each half is split again as needed.
    """
    if n_out <= n_in or (n_out - 1) / (n_in - 1) <= threshold:
        return [n_out]
    factor = (n_out - 1) / (n_in - 1)
    mid = int(round((n_in - 1) * math.sqrt(factor))) + 1
    mid = min(max(mid, n_in + 1), n_out - 1)
    return cascade_ladder(n_in, mid, threshold) + cascade_ladder(mid, n_out, threshold)


def _stage(stack: np.ndarray, cfg: PipelineConfig, out_views: int) -> np.ndarray:
    up = resample_angular(blur_epi(stack, cfg.kernel), out_views)
    if cfg.net is not None:
        up = restore_batch(cfg.net, up).astype(np.float64)
    return deblur_epi(up, cfg.kernel, cfg.deblur_reg_eps)


def _chain(stack: np.ndarray, cfg: PipelineConfig, out_views: int) -> np.ndarray:
    for n in cascade_ladder(stack.shape[-2], out_views, cfg.cascade_threshold):
        stack = _stage(stack, cfg, n)
    return stack


def keep_input_rows(out: np.ndarray, source: np.ndarray) -> np.ndarray:
    """Copy input rows into the output rows that sample them exactly."""
    n_in, n_out = source.shape[-2], out.shape[-2]
    pos = angular_positions(n_in, n_out)
    hits = np.nonzero(np.abs(pos - np.round(pos)) < 1e-9)[0]
    out[..., hits, :] = source[..., np.round(pos[hits]).astype(int), :]
    return out


def reconstruct_stack(stack: np.ndarray, cfg: PipelineConfig, out_views: int,
                      keep_inputs: bool = True) -> np.ndarray:
    """Reconstruct a (N, A, W) stack of single-channel EPIs to ``out_views`` rows."""
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim != 3:
        raise ValueError(f"expected (N, A, W) stack, got {stack.shape}")
    if stack.shape[1] < 3:
        raise ValueError(f"need at least 3 views, got {stack.shape[1]}")
    if out_views < stack.shape[1]:
        raise ValueError("out_views is smaller than the input view count")
    chunks = [stack[i:i + CHUNK] for i in range(0, len(stack), CHUNK)]
    if cfg.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            parts = list(pool.map(lambda c: _chain(c, cfg, out_views), chunks))
    else:
        parts = [_chain(c, cfg, out_views) for c in chunks]
    out = np.concatenate(parts) if parts else np.empty((0, out_views, stack.shape[2]))
    return keep_input_rows(out, stack) if keep_inputs else out


def reconstruct_epi(epi_L: np.ndarray, cfg: PipelineConfig, out_views: int,
                    keep_inputs: bool = True) -> np.ndarray:
    """Reconstruct one (A, W) luminance EPI to (out_views, W).

    With ``keep_inputs`` the output rows that coincide with input views are
    replaced by those views.
    """
    epi_L = np.asarray(epi_L)
    if epi_L.ndim != 2:
        raise ValueError(f"expected a single-channel (A, W) EPI, got shape {epi_L.shape}")
    return reconstruct_stack(epi_L[None], cfg, out_views, keep_inputs)[0]


def bicubic_stack(stack: np.ndarray, out_views: int) -> np.ndarray:
    return resample_angular(stack, out_views)


# ---------------------------------------------------------------------------
# Light fields


def _split_channels(lf: LightField4D):
    """(T, S, H, W) luminance plus optional (T, S, H, W, 2) chroma."""
    if lf.channel_space is ChannelSpace.LUMA:
        return lf.samples[..., 0], None
    ycc = rgb_to_ycbcr(lf.samples) if lf.channel_space is ChannelSpace.RGB else lf.samples
    return ycc[..., 0], ycc[..., 1:]


def _merge_channels(y: np.ndarray, chroma, space: ChannelSpace) -> LightField4D:
    if chroma is None:
        samples = y[..., None]
    else:
        samples = np.concatenate([y[..., None], chroma], axis=-1)
        if space is ChannelSpace.RGB:
            samples = ycbcr_to_rgb(samples)
    return LightField4D(np.clip(samples, 0.0, 1.0), space)


def _pass_rows(views: np.ndarray, out_s: int, fn) -> np.ndarray:
    """Apply ``fn`` to all horizontal EPIs of (T, S, H, W) views -> (T, out_s, H, W)."""
    T, S, H, W = views.shape
    stack = views.transpose(0, 2, 1, 3).reshape(T * H, S, W)
    out = fn(stack, out_s)
    return out.reshape(T, H, out_s, W).transpose(0, 2, 1, 3)


def _pass_cols(views: np.ndarray, out_t: int, fn) -> np.ndarray:
    """Apply ``fn`` to all vertical EPIs of (T, S, H, W) views -> (out_t, S, H, W)."""
    T, S, H, W = views.shape
    stack = views.transpose(1, 3, 0, 2).reshape(S * W, T, H)
    out = fn(stack, out_t)
    return out.reshape(S, W, out_t, H).transpose(2, 0, 3, 1)


def hierarchical(samples: np.ndarray, out_t: int, out_s: int, fn) -> np.ndarray:
    """Two-step assembly of a dense (out_t, out_s, H, W) grid.

    Step 1 reconstructs the input rows horizontally and the input columns
    vertically. Step 2 fills the remaining rows horizontally from the views
    of the vertical pass. When the view counts are not integer multiples of
    the input lattice, no output row coincides with an input row and every
    row comes from the vertical-pass views.
    """
    T, S, H, W = samples.shape
    if (out_t - 1) % (T - 1) or (out_s - 1) % (S - 1):
        return _pass_rows(_pass_cols(samples, out_t, fn), out_s, fn)
    rows = lattice_positions(T, out_t)
    cols = lattice_positions(S, out_s)
    out = np.zeros((out_t, out_s, H, W))
    out[rows] = _pass_rows(samples, out_s, fn)
    vertical = _pass_cols(samples, out_t, fn)
    out[:, cols] = vertical
    others = np.setdiff1d(np.arange(out_t), rows)
    if len(others):
        out[others] = _pass_rows(vertical[others], out_s, fn)
    out[np.ix_(rows, cols)] = samples
    return out


def reconstruct_lightfield(lf_sparse: LightField4D, cfg: PipelineConfig) -> LightField4D:
    """Dense (out_views_t, out_views_s) light field from a sparse view lattice.

    Luminance goes through the full chain; chroma is only resampled. Input
    views are copied unchanged to their lattice positions.
    """
    T, S = lf_sparse.dims[:2]
    if T < 3 or S < 3:
        raise ValueError(f"lattice too sparse: {T}x{S} views, need at least 3 per axis")
    y, chroma = _split_channels(lf_sparse)
    fn = lambda stack, n: reconstruct_stack(stack, cfg, n)  # noqa: E731
    y_out = hierarchical(y, cfg.out_views_t, cfg.out_views_s, fn)
    c_out = None
    if chroma is not None:
        c_out = np.stack([
            hierarchical(chroma[..., c], cfg.out_views_t, cfg.out_views_s, bicubic_stack)
            for c in range(chroma.shape[-1])
        ], axis=-1)
    return _merge_channels(y_out, c_out, lf_sparse.channel_space)


def reconstruct_view_sequence(lf_3d: LightField4D, cfg: PipelineConfig) -> LightField4D:
    """Horizontal-only reconstruction of a T = 1 view sequence to ``out_views_s`` views."""
    T, S = lf_3d.dims[:2]
    if T != 1:
        raise ValueError(f"view sequences need T = 1, got T = {T}")
    if S < 3:
        raise ValueError(f"need at least 3 views, got {S}")
    y, chroma = _split_channels(lf_3d)
    y_out = _pass_rows(y, cfg.out_views_s, lambda st, n: reconstruct_stack(st, cfg, n))
    c_out = None
    if chroma is not None:
        c_out = np.stack([_pass_rows(chroma[..., c], cfg.out_views_s, bicubic_stack)
                          for c in range(chroma.shape[-1])], axis=-1)
    return _merge_channels(y_out, c_out, lf_3d.channel_space)
