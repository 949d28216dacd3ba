import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from tests.conftest import make_bundle
from training.normalization import (
    TARGET_U_STD,
    Normalization,
    denormalize,
    fit_normalization,
    normalize_coordinates,
    normalize_dataset,
)


def test_dataset_statistics_are_shared(tiny_dataset):
    normalized, norm = normalize_dataset(tiny_dataset)
    stacked = np.concatenate([n.u.reshape(-1) for n in normalized])
    assert stacked.mean() == pytest.approx(0.0, abs=1e-12)
    assert stacked.std() == pytest.approx(TARGET_U_STD)
    assert all(n.norm.u_scale == norm.u_scale for n in normalized)


def test_grid_lands_in_unit_square(tiny_bundle):
    normalized, _ = normalize_coordinates(tiny_bundle)
    assert normalized.x[0] == 0.0 and normalized.x[-1] < 1.0
    np.testing.assert_allclose(normalized.t[[0, -1]], [0.0, 1.0])
    assert normalized.points().shape == (tiny_bundle.n_t, tiny_bundle.n_x, 3)


def test_points_round_trip_through_physical_units(tiny_bundle):
    normalized, norm = normalize_coordinates(tiny_bundle)
    physical = norm.to_physical_points(normalized.points())
    np.testing.assert_allclose(physical[..., 2], tiny_bundle.u, atol=1e-12)
    np.testing.assert_allclose(norm.to_normalized_points(physical), normalized.points(), atol=1e-12)
    np.testing.assert_allclose(denormalize(normalized).u, tiny_bundle.u, atol=1e-12)


def test_shifted_window_keeps_its_origin():
    bundle = replace(make_bundle(n_t=5, horizon=8.0), provenance={"t_origin": 2.0})
    normalized, norm = normalize_coordinates(bundle)
    assert norm.t_origin == 2.0
    np.testing.assert_allclose(normalized.t, np.linspace(0.0, 1.0, 5))


def test_constant_data_is_flagged_degenerate():
    bundle = make_bundle().replace_u(np.full((8, 32), 3.0))
    norm = fit_normalization([bundle])
    assert norm.degenerate and norm.u_scale == 1.0 and norm.u_offset == 3.0


def test_mixed_equations_and_empty_sets_are_rejected():
    with pytest.raises(ValueError, match="disagree"):
        fit_normalization([make_bundle(name="kdv"), make_bundle(name="ks")])
    with pytest.raises(ValueError, match="empty"):
        fit_normalization([])
    with pytest.raises(ValueError):
        Normalization(length=0.0, horizon=1.0)
