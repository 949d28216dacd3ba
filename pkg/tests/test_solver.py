import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from datagen import solver
from datagen.bundle_io import SolutionBundle, read_bundle
from datagen.solver import (
    BlowUpError,
    cole_hopf,
    cole_hopf_field,
    dealias_mask,
    evolve,
    evolve_heat,
    generate_bundle,
    generate_dataset,
    output_times,
)
from datagen.spectral import spectral_derivative, uniform_x_grid
from pde_suite.equations import get_spec
from proptest.oracles import burgers_from_heat, heat_solution


def test_linear_kdv_mode_is_a_travelling_wave():
    length, n_x, k_index = 64.0, 32, 2
    x = uniform_x_grid(n_x, length)
    k = 2.0 * np.pi * k_index / length
    eps = 1e-6
    bundle = evolve(get_spec("kdv"), eps * np.cos(k * x), n_t=5, horizon=1.0, length=length)
    t = bundle.t_grid()
    exact = eps * np.cos(k * x[None, :] + k ** 3 * t[:, None])
    np.testing.assert_allclose(bundle.u, exact, atol=1e-10)


def test_linear_ks_mode_grows_at_the_dispersion_rate():
    length, n_x = 16.0 * np.pi, 64
    x = uniform_x_grid(n_x, length)
    k = 2.0 * np.pi * 4 / length
    eps = 1e-8
    bundle = evolve(get_spec("ks"), eps * np.cos(k * x), n_t=3, horizon=1.0, length=length)
    growth = np.exp((k ** 2 - k ** 4) * bundle.t_grid())
    np.testing.assert_allclose(bundle.u, eps * growth[:, None] * np.cos(k * x)[None, :], atol=1e-13)


def test_burgers_rejects_nonzero_mean():
    x = uniform_x_grid(32, 16.0)
    with pytest.raises(ValueError, match="zero mean"):
        evolve(get_spec("burgers"), 0.5 + 0.1 * np.sin(2 * np.pi * x / 16.0), n_t=3, horizon=0.1)


def test_heat_rk4_matches_closed_form():
    length, nu = 16.0, 0.05
    x = uniform_x_grid(32, length)
    t = np.linspace(0.0, 1.0, 4)
    modes = [(1, 0.6, 0.2), (3, -0.3, 1.0)]
    phi, _ = heat_solution(x, t, nu, length, modes)
    out = evolve_heat(phi[0], t, nu, length)
    np.testing.assert_allclose(out, phi, atol=1e-9)


def test_cole_hopf_matches_heat_oracle():
    length, nu = 16.0, 0.01
    x = uniform_x_grid(64, length)
    phi, phi_x = heat_solution(x, np.array([0.0, 0.5]), nu, length, [(2, 0.8, 0.0), (5, 0.4, 0.3)])
    np.testing.assert_allclose(cole_hopf_field(phi, nu, length), burgers_from_heat(phi, phi_x, nu), atol=1e-12)


def test_cole_hopf_needs_positive_heat_field():
    with pytest.raises(ValueError, match="positive"):
        cole_hopf_field(np.array([[1.0, 0.0, 1.0, 2.0]]), 0.01, 4.0)


def test_dealias_mask_keeps_lower_two_thirds():
    mask = dealias_mask(12)
    np.testing.assert_array_equal(mask, [1, 1, 1, 1, 0, 0, 0])


def test_blow_up_is_retried_with_halved_step(monkeypatch):
    seen = []

    def flaky(spec, u0, times, length, dt):
        seen.append(dt)
        if len(seen) < 3:
            raise BlowUpError(1.0)
        return np.zeros((times.size, u0.size))

    monkeypatch.setattr(solver, "_integrate", flaky)
    bundle = evolve(get_spec("kdv"), np.zeros(8), n_t=4, horizon=1.0, dt_max=0.02)
    assert seen == [0.02, 0.01, 0.005]
    assert bundle.u.shape == (4, 8)


def test_persistent_blow_up_is_raised(monkeypatch):
    calls = []

    def always(spec, u0, times, length, dt):
        calls.append(dt)
        raise BlowUpError(2.5)

    monkeypatch.setattr(solver, "_integrate", always)
    with pytest.raises(BlowUpError, match="t=2.5"):
        evolve(get_spec("kdv"), np.zeros(8), n_t=2)
    assert len(calls) == solver.MAX_ATTEMPTS


def test_nkdv_rows_sit_at_warped_times():
    spec = get_spec("nkdv")
    times = output_times(spec, 3, spec.horizon)
    t0 = spec.params["t0"]
    np.testing.assert_allclose(times, t0 * np.expm1(np.array([0.0, 0.5, 1.0]) * spec.horizon / t0))
    np.testing.assert_allclose(output_times(get_spec("kdv"), 3, 2.0), [0.0, 1.0, 2.0])


def test_generate_bundle_is_deterministic():
    a = generate_bundle("kdv", 3, 32, 5, horizon=1.0)
    b = generate_bundle("kdv", 3, 32, 5, horizon=1.0)
    assert a.u.shape == (5, 32)
    np.testing.assert_array_equal(a.u, b.u)
    assert (a.name, a.seed, a.horizon) == ("kdv", 3, 1.0)


def test_generated_burgers_bundle_goes_through_cole_hopf():
    bundle = generate_bundle("burgers", 1, 64, 3, horizon=0.5)
    assert bundle.u.shape == (3, 64)
    assert np.all(np.isfinite(bundle.u))
    assert bundle.params["nu"] == pytest.approx(0.01)


def test_generate_dataset_writes_consecutive_seeds(tmp_path):
    paths = generate_dataset("kdv", 2, 32, 3, tmp_path / "data", seed=10, horizon=0.5)
    assert [p.name for p in paths] == ["bundle_00000", "bundle_00001"]
    assert [read_bundle(p).seed for p in paths] == [10, 11]
    with pytest.raises(ValueError):
        generate_dataset("kdv", 0, 32, 3, tmp_path / "none")


def test_cole_hopf_relabels_heat_bundle_as_burgers():
    length, nu = 16.0, 0.05
    x = np.arange(32) * length / 32
    phi = 2.0 + np.cos(2.0 * np.pi * x / length)[None, :] * np.array([[1.0], [0.5]])
    heat = SolutionBundle("heat", length, 1.0, phi, seed=4)
    burgers = cole_hopf(heat, nu)
    assert burgers.name == "burgers"
    assert burgers.params["nu"] == nu
    assert burgers.seed == 4
    np.testing.assert_allclose(burgers.u, cole_hopf_field(phi, nu, length))


def test_kdv_conserves_the_mean():
    spec = get_spec("kdv")
    x = uniform_x_grid(64, spec.length)
    bundle = evolve(spec, 0.3 + 0.5 * np.sin(2.0 * np.pi * x / spec.length), n_t=3, horizon=1.0)
    means = bundle.u.mean(axis=1)
    assert np.max(np.abs(means - 0.3)) / 0.3 < 1e-8


def test_generated_ic_respects_amplitude_and_band():
    bundle = generate_bundle("kdv", 2, 64, 2, horizon=0.01, amplitude=0.25, max_wavenumber=4)
    spectrum = np.abs(np.fft.rfft(bundle.u[0]))
    assert np.all(spectrum[5:] < 1e-10 * spectrum.max())
    assert np.max(np.abs(bundle.u[0])) <= 10 * 0.25


def test_default_burgers_data_is_convection_dominated():
    bundle = generate_bundle("burgers", 0, 128, 2, horizon=0.01)
    u0, nu, length = bundle.u[0], bundle.params["nu"], bundle.length
    convection = np.sum(np.abs(u0 * spectral_derivative(u0, 1, length)))
    diffusion = np.sum(np.abs(nu * spectral_derivative(u0, 2, length)))
    assert convection > diffusion
    assert np.std(u0) > 0.04
