"""Central-difference verification of tape gradients."""

from __future__ import annotations

from typing import Callable, Iterable, Optional

import numpy as np

from autodiff.tape import Tape, TapeError, Var

ScalarFn = Callable[[Var], Var]


def _evaluate(f: ScalarFn, params: np.ndarray) -> float:
    tape = Tape()
    out = f(tape.leaf(params))
    value = float(np.asarray(out.value if isinstance(out, Var) else out).reshape(()))
    if not np.isfinite(value):
        raise TapeError("objective is not finite at the probed parameters")
    return value


def analytic_gradient(f: ScalarFn, params: np.ndarray) -> np.ndarray:
    tape = Tape()
    leaf = tape.leaf(params)
    out = f(leaf)
    if not isinstance(out, Var):
        return np.zeros_like(np.asarray(params, dtype=np.float64))
    if not np.all(np.isfinite(out.value)):
        raise TapeError("objective is not finite at the probed parameters")
    return tape.backward(out)[leaf]


def gradient_check(
    f: ScalarFn,
    params: np.ndarray,
    h: float = 1e-5,
    indices: Optional[Iterable[int]] = None,
) -> float:
    """Max over coordinates of |analytic - central difference| / (|central difference| + 1e-8).

    ``f`` builds a scalar on the tape of the parameter leaf it is given.
    ``indices`` restricts the probe to a subset of coordinates.
    """
    params = np.array(params, dtype=np.float64).reshape(-1)
    grad = analytic_gradient(f, params).reshape(-1)
    probe = range(params.size) if indices is None else indices
    worst = 0.0
    for i in probe:
        shifted = params.copy()
        shifted[i] = params[i] + h
        f_plus = _evaluate(f, shifted)
        shifted[i] = params[i] - h
        f_minus = _evaluate(f, shifted)
        numeric = (f_plus - f_minus) / (2.0 * h)
        worst = max(worst, abs(grad[i] - numeric) / (abs(numeric) + 1e-8))
    return worst
