import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from autodiff.gradcheck import analytic_gradient, gradient_check
from autodiff import tape as ad
from weno.scheme import (
    GAMMA_CENTRAL,
    N_STENCILS,
    WenoError,
    build_stencils,
    nonlinear_weights,
    reconstruct_polynomial,
    smoothness_indicator,
    stencil_weights,
    weno_derivative,
    weno_derivatives,
)


def grid(n_rows=4, n_cols=16, horizon=0.3):
    x = np.arange(n_cols) / n_cols
    t = np.linspace(0.0, horizon, n_rows)
    tt, xx = np.meshgrid(t, x, indexing="ij")
    return xx, tt


def test_interior_node_has_ten_stencils():
    stencils = build_stencils(4, 16, 1, 6)
    assert len(stencils) == N_STENCILS == 10
    central = [s for s in stencils if s.gamma == GAMMA_CENTRAL]
    assert len(central) == 2
    cols = sorted({c for _, c in central[0].members})
    assert cols == [4, 5, 6, 7, 8]


def test_edge_rows_keep_one_side():
    assert len(build_stencils(4, 16, 0, 6)) == 5
    assert len(build_stencils(4, 16, 3, 6)) == 5
    wrapped = build_stencils(4, 16, 1, 0)
    assert min(c for s in wrapped for _, c in s.members) == -4


def test_stencils_need_enough_grid():
    with pytest.raises(ValueError):
        build_stencils(1, 16, 0, 0)
    with pytest.raises(ValueError):
        build_stencils(4, 4, 0, 0)
    with pytest.raises(IndexError):
        build_stencils(4, 16, 4, 0)


def test_polynomials_in_the_basis_are_exact():
    xx, tt = grid()
    u = 1.0 + 2.0 * xx - xx ** 2 + 0.5 * xx ** 3 + 0.1 * xx ** 4 + tt * (1.0 + xx)
    rows = np.array([1, 1, 2, 2])
    cols = np.array([4, 7, 8, 11])
    out = weno_derivatives(xx, tt, u, rows, cols, [(1, 0), (3, 0), (0, 1), (1, 1)])
    x = xx[rows, cols]
    t = tt[rows, cols]
    np.testing.assert_allclose(out[(1, 0)], 2.0 - 2.0 * x + 1.5 * x ** 2 + 0.4 * x ** 3 + t, atol=1e-8)
    np.testing.assert_allclose(out[(3, 0)], 3.0 + 2.4 * x, atol=1e-6)
    np.testing.assert_allclose(out[(0, 1)], 1.0 + x, atol=1e-8)
    np.testing.assert_allclose(out[(1, 1)], 1.0, atol=1e-7)


def test_periodic_wrap_on_smooth_data():
    xx, tt = grid(n_rows=3, n_cols=64)
    u = np.sin(2.0 * np.pi * xx)
    cols = np.array([0, 1, 62, 63])
    rows = np.ones(4, dtype=int)
    u_x = weno_derivatives(xx, tt, u, rows, cols, [(1, 0)])[(1, 0)]
    np.testing.assert_allclose(u_x, 2.0 * np.pi * np.cos(2.0 * np.pi * xx[1, cols]), atol=1e-3)


def test_single_node_helper_matches_batch():
    xx, tt = grid()
    u = np.cos(2.0 * np.pi * xx) * (1.0 + tt)
    batch = weno_derivatives(xx, tt, u, [2], [5], [(2, 0)])[(2, 0)]
    assert float(weno_derivative(xx, tt, u, 2, 5, (2, 0))) == pytest.approx(float(batch[0]))
    with pytest.raises(ValueError):
        weno_derivatives(xx, tt, u, [2], [5], [(0, 2)])


def test_weights_sum_to_one_and_skip_missing_sides():
    xx, tt = grid()
    u = np.sin(2.0 * np.pi * xx) + tt
    w = stencil_weights(xx, tt, u, [0, 1], [3, 9])
    np.testing.assert_allclose(w.sum(axis=-1), 1.0)
    assert np.all(w[0, :5] == 0.0)


def test_nonlinear_weights_favour_smooth_stencils():
    indicators = np.array([[1e-8, 1.0, 1.0]])
    w = nonlinear_weights(indicators, np.array([[1.0, 1.0, 1.0]]), np.array([[True, True, False]]))
    assert w[0, 0] > 0.99 and w[0, 2] == 0.0
    with pytest.raises(WenoError):
        nonlinear_weights(indicators, np.ones((1, 3)), np.zeros((1, 3), dtype=bool))


def test_folded_grid_is_refused():
    xx, tt = grid()
    xx = xx.copy()
    xx[1, 6] = xx[1, 4] - 0.01
    with pytest.raises(WenoError, match="folded"):
        weno_derivatives(xx, tt, np.zeros_like(xx), [1], [5], [(1, 0)])


def test_reconstruction_and_indicator():
    x = np.tile(np.arange(5) * 0.1, 2)
    t = np.repeat([0.0, 0.5], 5)
    constant = reconstruct_polynomial(x, t, np.full(10, 2.0), (0.2, 0.0))
    assert constant(0.33, 0.2) == pytest.approx(2.0)
    assert smoothness_indicator(constant, 0.1, 0.5) == pytest.approx(0.0, abs=1e-20)
    line = reconstruct_polynomial(x, t, x.copy(), (0.2, 0.0))
    assert line.derivative_at_center((1, 0)) == pytest.approx(1.0)
    assert smoothness_indicator(line, 0.1, 0.5) == pytest.approx(0.05)
    with pytest.raises(ValueError):
        reconstruct_polynomial(x[:9], t[:9], x[:9], (0.0, 0.0))


def test_derivatives_are_differentiable_in_u():
    xx, tt = grid()
    base = np.sin(2.0 * np.pi * xx) * (1.0 + tt)

    def objective(u):
        out = weno_derivatives(xx, tt, ad.reshape(u, base.shape), [1, 2], [5, 9], [(1, 0), (0, 1)])
        return ad.sum_(ad.power(out[(1, 0)], 2)) + ad.sum_(out[(0, 1)])

    params = base.reshape(-1)
    top = np.argsort(np.abs(analytic_gradient(objective, params)))[-8:]
    assert gradient_check(objective, params, indices=top) < 1e-4


@pytest.mark.parametrize("axis", ["x", "t"])
def test_derivatives_are_differentiable_in_node_positions(axis):
    xx, tt = grid()
    jitter = np.random.default_rng(5).uniform(-0.1, 0.1, size=xx.shape)
    xx = xx + jitter / xx.shape[1]
    tt = tt + 0.3 * jitter / (tt.shape[0] - 1) * (axis == "t")
    u = np.sin(2.0 * np.pi * xx) * (1.0 + tt)
    moving = xx if axis == "x" else tt

    def objective(pos):
        pos = ad.reshape(pos, moving.shape)
        x, t = (pos, tt) if axis == "x" else (xx, pos)
        out = weno_derivatives(x, t, u, [1, 2], [5, 9], [(1, 0), (0, 1), (2, 0)])
        return ad.sum_(ad.power(out[(1, 0)], 2)) + ad.sum_(out[(0, 1)]) + ad.sum_(out[(2, 0)])

    params = moving.reshape(-1)
    gradient = analytic_gradient(objective, params)
    assert np.any(gradient != 0.0)
    top = np.argsort(np.abs(gradient))[-8:]
    assert gradient_check(objective, params, indices=top) < 1e-4
