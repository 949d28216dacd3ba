import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from resample.whittaker import PeriodicInterpolant, dirichlet_kernel, whittaker_shannon_periodic


def test_kernel_at_integers():
    n = 8
    values = dirichlet_kernel(np.arange(-10, 11), n)
    expected = np.array([1.0 if k % n == 0 else 0.0 for k in range(-10, 11)])
    np.testing.assert_allclose(values, expected, atol=1e-15)


def test_kernel_rejects_odd_period():
    with pytest.raises(ValueError, match="even"):
        dirichlet_kernel(0.5, 7)


def test_samples_are_reproduced():
    samples = np.random.default_rng(0).normal(size=16)
    np.testing.assert_allclose(whittaker_shannon_periodic(samples, np.arange(16.0)), samples, atol=1e-12)


def test_band_limited_signal_between_samples():
    n = 32
    c = np.arange(n)
    signal = lambda t: np.sin(2 * np.pi * 3 * t / n) + 0.5 * np.cos(2 * np.pi * 7 * t / n + 0.3)  # noqa: E731
    query = np.linspace(-5.0, 40.0, 91) + 0.37
    np.testing.assert_allclose(whittaker_shannon_periodic(signal(c), query), signal(query), atol=1e-12)


def test_trigonometric_form_agrees_with_kernel_sum():
    samples = np.random.default_rng(1).normal(size=12)
    query = np.random.default_rng(2).uniform(-3.0, 15.0, size=40)
    interp = PeriodicInterpolant(samples)
    np.testing.assert_allclose(interp(query), whittaker_shannon_periodic(samples, query), atol=1e-12)


def test_derivative_matches_differences():
    interp = PeriodicInterpolant(np.random.default_rng(3).normal(size=10))
    t = np.linspace(0.1, 9.7, 13)
    h = 1e-6
    numeric = (interp(t + h) - interp(t - h)) / (2 * h)
    np.testing.assert_allclose(interp.derivative(t), numeric, atol=1e-6)
