"""Fourier-domain helpers: random initial conditions and spectral derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import fft


@dataclass(frozen=True)
class FourierIC:
    """Random Fourier series sum_p A_p sin(2 pi l_p x / L + phi_p)."""

    amplitudes: np.ndarray
    wavenumbers: np.ndarray
    phases: np.ndarray

    @property
    def n_modes(self) -> int:
        return int(self.amplitudes.size)

    def sample(self, x: np.ndarray, length: float) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        arg = 2.0 * np.pi * np.outer(x, self.wavenumbers) / length + self.phases
        return np.sin(arg) @ self.amplitudes


def check_even(n_x: int) -> None:
    if n_x < 2 or n_x % 2:
        raise ValueError(f"N_x must be even and at least 2, got {n_x}")


def uniform_x_grid(n_x: int, length: float) -> np.ndarray:
    return np.arange(n_x, dtype=np.float64) * (length / n_x)


def draw_fourier_ic(
    rng: np.random.Generator,
    n_modes: int = 10,
    amplitude_range: Tuple[float, float] = (-0.5, 0.5),
    wavenumber_range: Tuple[int, int] = (1, 8),
) -> FourierIC:
    lo_a, hi_a = amplitude_range
    lo_l, hi_l = wavenumber_range
    if n_modes < 1:
        raise ValueError(f"need at least one mode, got {n_modes}")
    if hi_a < lo_a or hi_l < lo_l or lo_l < 1:
        raise ValueError(
            f"empty or invalid ranges: amplitudes {amplitude_range}, wavenumbers {wavenumber_range}"
        )
    amplitudes = rng.uniform(lo_a, hi_a, size=n_modes)
    wavenumbers = rng.integers(lo_l, hi_l + 1, size=n_modes)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_modes)
    return FourierIC(amplitudes, wavenumbers.astype(np.int64), phases)


def random_fourier_ic(
    seed: int,
    n_x: int,
    length: float,
    n_modes: int = 10,
    amplitude_range: Tuple[float, float] = (-0.5, 0.5),
    wavenumber_range: Tuple[int, int] = (1, 8),
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Sample a random Fourier series on the periodic grid x_j = j L / N_x.

    Parameters
    ----------
    seed:
        Seed for ``numpy.random.default_rng``; ignored when ``rng`` is given.
    n_x:
        Even grid size. The highest wavenumber must not exceed ``n_x / 8``.
    """
    check_even(n_x)
    if wavenumber_range[1] > n_x // 8:
        raise ValueError(
            f"wavenumber {wavenumber_range[1]} is above N_x/8 = {n_x // 8}; refine the grid"
        )
    rng = np.random.default_rng(seed) if rng is None else rng
    ic = draw_fourier_ic(rng, n_modes, amplitude_range, wavenumber_range)
    return ic.sample(uniform_x_grid(n_x, length), length)


def wavenumbers(n_x: int, length: float) -> np.ndarray:
    """Angular wavenumbers 2 pi n / L of the real-FFT bins."""
    return 2.0 * np.pi * fft.rfftfreq(n_x, d=length / n_x)


def spectral_derivative(row: np.ndarray, order: int, length: float) -> np.ndarray:
    """``order``-th x-derivative along the last axis.

    The Nyquist bin is dropped for odd orders, where its derivative is not real.
    """
    row = np.asarray(row, dtype=np.float64)
    n_x = row.shape[-1]
    check_even(n_x)
    if order < 0:
        raise ValueError(f"derivative order must be non-negative, got {order}")
    if order == 0:
        return row.copy()
    multiplier = (1j * wavenumbers(n_x, length)) ** order
    if order % 2:
        multiplier[-1] = 0.0
    return fft.irfft(fft.rfft(row, axis=-1) * multiplier, n=n_x, axis=-1)


def spectral_antiderivative(row: np.ndarray, length: float) -> np.ndarray:
    """Zero-mean periodic antiderivative; the mean of ``row`` is discarded."""
    row = np.asarray(row, dtype=np.float64)
    n_x = row.shape[-1]
    check_even(n_x)
    k = wavenumbers(n_x, length)
    coeffs = fft.rfft(row, axis=-1)
    inverse = np.zeros_like(k, dtype=np.complex128)
    inverse[1:-1] = 1.0 / (1j * k[1:-1])
    return fft.irfft(coeffs * inverse, n=n_x, axis=-1)
