"""Fourier diagnostics of EPIs: log power spectra and high-band energy."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .netpbm import write_netpbm

LOG_FLOOR = 1e-12


@dataclass
class Spectrum:
    """DC-centred spectrum; rows are angular frequency, columns spatial frequency."""

    log_power: np.ndarray
    power: np.ndarray
    freq_angular: np.ndarray
    freq_spatial: np.ndarray


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def default_pad(epi: np.ndarray) -> int:
    return 1 << (max(np.shape(epi)) - 1).bit_length()


def epi_power_spectrum(epi: np.ndarray, pad: int | None = None) -> Spectrum:
    """Power of the zero-padded 2D DFT of the mean-subtracted EPI."""
    epi = np.asarray(epi, dtype=np.float64)
    if epi.ndim != 2:
        raise ValueError("expected a 2D EPI")
    if pad is None:
        pad = default_pad(epi)
    if not _is_pow2(pad) or pad < max(epi.shape):
        raise ValueError(f"pad must be a power of two >= {max(epi.shape)}, got {pad}")
    centered = epi - epi.mean()
    power = np.abs(np.fft.fft2(centered, s=(pad, pad))) ** 2
    power = np.fft.fftshift(power)
    freqs = np.fft.fftshift(np.fft.fftfreq(pad))
    return Spectrum(np.log10(power + LOG_FLOOR), power, freqs, freqs.copy())


def highband_energy_ratio(epi: np.ndarray, cutoff: float = 0.25, pad: int | None = None) -> float:
    """Fraction of spectral power at ``|spatial frequency| > cutoff`` cycles/sample."""
    if not 0 < cutoff < 0.5:
        raise ValueError("cutoff must lie in (0, 0.5)")
    spec = epi_power_spectrum(epi, pad)
    total = spec.power.sum()
    if total <= 0:
        return 0.0
    high = spec.power[:, np.abs(spec.freq_spatial) > cutoff].sum()
    return float(min(max(high / total, 0.0), 1.0))


def export_spectrum(spec: Spectrum, path: str | os.PathLike) -> tuple[Path, Path]:
    """Write the log spectrum as a 16-bit PGM and the raw grid as CSV.

    The CSV path is ``path`` with suffix ``.csv``. Returns both paths.
    """
    pgm = Path(path)
    csv = pgm.with_suffix(".csv")
    lp = spec.log_power
    lo, hi = float(lp.min()), float(lp.max())
    scaled = np.zeros(lp.shape) if hi == lo else (lp - lo) / (hi - lo)
    write_netpbm(pgm, np.rint(scaled * 65535).astype(np.uint16), 65535)
    np.savetxt(csv, lp, delimiter=",", fmt="%.17g")
    return pgm, csv


def read_spectrum_csv(path: str | os.PathLike) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
