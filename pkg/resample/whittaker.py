"""Periodic Whittaker-Shannon interpolation with the Dirichlet kernel."""

from __future__ import annotations

import numpy as np
from scipy import fft


def _check_period(n: int) -> None:
    if n < 2 or n % 2:
        raise ValueError(f"period N must be even and at least 2, got {n}")


def dirichlet_kernel(t, n: int) -> np.ndarray:
    """D_N(t) = sin(pi t) / (N tan(pi t / N)), with its removable singularities filled in.

    D_N is 1 at multiples of N and 0 at the other integers.
    """
    _check_period(n)
    t = np.asarray(t, dtype=np.float64)
    r = t - n * np.round(t / n)
    k = np.round(r)
    delta = r - k
    sign = np.where(np.mod(k, 2) == 0, 1.0, -1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = sign * np.sin(np.pi * delta) / (n * np.tan(np.pi * r / n))
    return np.where(delta == 0.0, np.where(k == 0.0, 1.0, 0.0), value)


def whittaker_shannon_periodic(samples, query) -> np.ndarray:
    """f(t) = sum_n f[n] D_N(t - n) for samples f[0..N-1] and query positions in sample units."""
    samples = np.asarray(samples, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    n = samples.shape[-1]
    kernel = dirichlet_kernel(query[..., None] - np.arange(n), n)
    return kernel @ samples


class PeriodicInterpolant:
    """The same interpolant in trigonometric form, with its derivative.

    f(t) = (1/N) [F_0 + 2 Re sum_{0<k<N/2} F_k e^{2 pi i k t / N} + F_{N/2} cos(pi t)],
    where F is the DFT of the samples.
    """

    def __init__(self, samples) -> None:
        samples = np.asarray(samples, dtype=np.float64)
        self.n = samples.shape[-1]
        _check_period(self.n)
        coeffs = fft.rfft(samples) / self.n
        self.mean = coeffs[0].real
        self.inner = coeffs[1:-1]
        self.nyquist = coeffs[-1].real
        self.k = np.arange(1, self.n // 2)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        phase = np.exp(2j * np.pi * t[..., None] * self.k / self.n)
        return self.mean + 2.0 * (phase @ self.inner).real + self.nyquist * np.cos(np.pi * t)

    def derivative(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        phase = np.exp(2j * np.pi * t[..., None] * self.k / self.n)
        inner = 2.0 * (phase @ (self.inner * (2j * np.pi * self.k / self.n))).real
        return inner - self.nyquist * np.pi * np.sin(np.pi * t)
