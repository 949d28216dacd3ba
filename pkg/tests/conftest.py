import os
import sys

import numpy as np
import pytest

# Ensure project root is on sys.path for tests
PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from datagen.bundle_io import SolutionBundle  # noqa: E402


def make_bundle(seed=0, n_x=32, n_t=8, name="kdv", length=64.0, horizon=40.0, params=None):
    """Smooth periodic data with three Fourier modes drifting linearly in t."""
    rng = np.random.default_rng(seed)
    x = np.arange(n_x) * length / n_x
    t = np.linspace(0.0, horizon, n_t)
    u = np.zeros((n_t, n_x))
    for k in (1, 2, 3):
        a, b, p = rng.uniform(-0.5, 0.5, size=3)
        u += (a + b * t[:, None] / horizon) * np.cos(2.0 * np.pi * k * x[None, :] / length + p)
    return SolutionBundle(name, length, horizon, u, seed=seed, params=dict(params or {}))


@pytest.fixture
def tiny_bundle():
    return make_bundle()


@pytest.fixture
def tiny_dataset():
    return [make_bundle(seed) for seed in range(3)]
