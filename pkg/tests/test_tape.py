import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from autodiff import tape as ad
from autodiff.gradcheck import gradient_check
from autodiff.tape import ShapeError, Tape, TapeError, Var


def test_plain_arrays_are_not_recorded():
    out = ad.swish(np.array([0.0, 1.0]))
    assert isinstance(out, np.ndarray)
    assert out[0] == 0.0


def test_node_ids_are_topological():
    tape = Tape()
    a = tape.leaf(np.ones(3))
    b = ad.sin(a) * a + 2.0
    tape_ids = [n.inputs for n in tape.nodes]
    for node_id, inputs in enumerate(tape_ids):
        assert all(i < node_id for i in inputs)
    assert isinstance(b, Var)


def test_backward_of_product_rule():
    tape = Tape()
    a = tape.leaf(np.array([1.0, 2.0, 3.0]))
    loss = ad.sum_(a * a * 3.0)
    grads = tape.backward(loss)
    np.testing.assert_allclose(grads[a], [6.0, 12.0, 18.0])


def test_reflected_numpy_operand_stays_on_tape():
    tape = Tape()
    a = tape.leaf(np.array([1.0, 2.0]))
    out = np.array([3.0, 4.0]) * a
    assert isinstance(out, Var)
    grads = tape.backward(ad.sum_(out))
    np.testing.assert_allclose(grads[a], [3.0, 4.0])


def test_second_backward_sweep_is_refused():
    tape = Tape()
    a = tape.leaf(2.0)
    loss = a * a
    tape.backward(loss)
    with pytest.raises(TapeError):
        tape.backward(loss)


def test_backward_needs_a_scalar_root():
    tape = Tape()
    a = tape.leaf(np.ones(2))
    with pytest.raises(TapeError):
        tape.backward(a * 2.0)


def test_power_accepts_integer_exponents_only():
    with pytest.raises(ShapeError):
        ad.power(np.ones(2), 0.5)
    np.testing.assert_allclose(ad.power(np.array([2.0]), -2), [0.25])


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        ad.matmul(np.ones((2, 3)), np.ones(2))


def test_hinge_gradient_is_zero_below_floor():
    tape = Tape()
    a = tape.leaf(np.array([-1.0, 2.0]))
    grads = tape.backward(ad.sum_(ad.maximum(a, 0.0)))
    np.testing.assert_allclose(grads[a], [0.0, 1.0])


def test_arcsin_derivative_is_floored_at_one():
    tape = Tape()
    a = tape.leaf(np.array(1.0))
    grads = tape.backward(ad.arcsin(a))
    assert np.isfinite(grads[a])
    assert grads[a] == pytest.approx(1.0 / np.sqrt(ad.ARCSIN_FLOOR))


def test_stop_gradient_blocks_flow():
    tape = Tape()
    a = tape.leaf(np.array([1.0, 2.0]))
    loss = ad.sum_(ad.stop_gradient(a) * a)
    grads = tape.backward(loss)
    np.testing.assert_allclose(grads[a], [1.0, 2.0])


def test_getitem_gather_accumulates_repeated_indices():
    tape = Tape()
    a = tape.leaf(np.arange(4.0))
    picked = ad.getitem(a, np.array([1, 1, 3]))
    grads = tape.backward(ad.sum_(picked))
    np.testing.assert_allclose(grads[a], [0.0, 2.0, 0.0, 1.0])


def test_norm_gradient_at_zero_is_zero():
    tape = Tape()
    a = tape.leaf(np.zeros(3))
    grads = tape.backward(ad.norm(a))
    np.testing.assert_allclose(grads[a], np.zeros(3))


def test_gradient_check_on_mixed_expression():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(3, 4))

    def f(p):
        h = ad.tanh(ad.matmul(ad.reshape(p[:12], (3, 4)), np.ones(4)))
        z = ad.concatenate([h, ad.sigmoid(p[12:])])
        return ad.mean(ad.log(ad.exp(z) + 1.0)) + ad.sum_(ad.abs_(p[12:] - 0.3))

    params = np.concatenate([w.reshape(-1), rng.normal(size=2)])
    assert gradient_check(f, params) < 1e-5


def test_solve_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    base = rng.normal(size=(3, 3)) + 3.0 * np.eye(3)
    rhs = rng.normal(size=3)

    def f(p):
        a = ad.reshape(p, (3, 3))
        return ad.sum_(ad.power(ad.solve(a, rhs), 2))

    assert gradient_check(f, base.reshape(-1)) < 1e-5
