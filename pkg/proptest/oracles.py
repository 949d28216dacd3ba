"""Independent references for the property suite.

Nothing here calls into the code it checks: x-derivatives come from numpy's
FFT, t-derivatives from fixed finite-difference weights, reference flows from
scipy's adaptive integrator.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from datagen.bundle_io import SolutionBundle
from pde_suite.equations import PdeSpec, get_spec, residual_terms

# fourth-order central first derivative
_T_STENCIL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def fft_derivative(rows: np.ndarray, order: int, length: float) -> np.ndarray:
    """d^order/dx^order along the last axis of periodic samples on [0, length)."""
    rows = np.asarray(rows, dtype=np.float64)
    n = rows.shape[-1]
    k = 2.0 * np.pi * np.fft.rfftfreq(n, d=length / n)
    multiplier = (1j * k) ** order
    if order % 2 and n % 2 == 0:
        multiplier[-1] = 0.0
    return np.fft.irfft(np.fft.rfft(rows, axis=-1) * multiplier, n=n, axis=-1)


def time_derivative(u: np.ndarray, t: np.ndarray) -> np.ndarray:
    """u_t on rows 2..N_t-3 of a uniform t grid."""
    if u.shape[0] < 5:
        raise ValueError(f"fourth-order t differences need 5 rows, got {u.shape[0]}")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
        raise ValueError("time grid is not uniform")
    n = u.shape[0]
    out = sum(w * u[i : n - 4 + i] for i, w in enumerate(_T_STENCIL))
    return out / dt[0]


def spectral_terms(bundle: SolutionBundle, spec: Optional[PdeSpec] = None):
    """Residual terms of a physical bundle on rows 2..N_t-3."""
    spec = spec if spec is not None else get_spec(bundle.name, **dict(bundle.params))
    u = bundle.u
    t = bundle.t_grid()
    inner = u[2:-2]
    derivs = {(0, 1): time_derivative(u, t)}
    for order in range(1, spec.max_x_order + 1):
        derivs[(order, 0)] = fft_derivative(inner, order, bundle.length)
    x = np.broadcast_to(bundle.x_grid(), inner.shape)
    tt = np.broadcast_to(t[2:-2, None], inner.shape)
    return residual_terms(spec, inner, derivs, x, tt)


def spectral_residual(bundle: SolutionBundle, spec: Optional[PdeSpec] = None) -> np.ndarray:
    terms = spectral_terms(bundle, spec)
    return sum(terms.values())


def relative_residual(bundle: SolutionBundle, spec: Optional[PdeSpec] = None) -> float:
    """sum |residual| over the largest sum |term|."""
    terms = spectral_terms(bundle, spec)
    total = np.sum(np.abs(sum(terms.values())))
    scale = max(float(np.sum(np.abs(v))) for v in terms.values())
    return float(total / scale) if scale > 0 else float(total)


def mean_abs_residual(bundle: SolutionBundle, spec: Optional[PdeSpec] = None) -> float:
    return float(np.mean(np.abs(spectral_residual(bundle, spec))))


def finite_difference_gradient(
    f: Callable[[np.ndarray], float],
    params: np.ndarray,
    indices: Optional[Iterable[int]] = None,
    h: float = 1e-5,
) -> np.ndarray:
    params = np.array(params, dtype=np.float64).reshape(-1)
    indices = range(params.size) if indices is None else list(indices)
    grad = np.zeros(params.size)
    for i in indices:
        shifted = params.copy()
        shifted[i] += h
        upper = f(shifted)
        shifted[i] -= 2.0 * h
        lower = f(shifted)
        grad[i] = (upper - lower) / (2.0 * h)
    return grad


def heat_solution(
    x: np.ndarray, t: np.ndarray, nu: float, length: float, modes: Sequence[Tuple[int, float, float]]
) -> Tuple[np.ndarray, np.ndarray]:
    """phi and phi_x for phi = 2 + sum a cos(k x + p) exp(-nu k^2 t), k = 2 pi n / L.

    ``modes`` holds (n, a, p) with sum |a| < 2 so phi stays positive.
    """
    xx, tt = np.meshgrid(x, t, indexing="xy")
    phi = np.full(xx.shape, 2.0)
    phi_x = np.zeros(xx.shape)
    for n, a, p in modes:
        k = 2.0 * np.pi * n / length
        decay = np.exp(-nu * k * k * tt)
        phi += a * np.cos(k * xx + p) * decay
        phi_x -= a * k * np.sin(k * xx + p) * decay
    return phi, phi_x


def burgers_from_heat(phi: np.ndarray, phi_x: np.ndarray, nu: float) -> np.ndarray:
    return -2.0 * nu * phi_x / phi


def reference_flow(
    field: Callable[[np.ndarray], np.ndarray], points: np.ndarray, s: float, rtol: float = 1e-12
) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if s == 0.0:
        return points.copy()
    shape = points.shape

    def rhs(_, y):
        return np.asarray(field(y.reshape(shape)), dtype=np.float64).reshape(-1)

    sol = solve_ivp(rhs, (0.0, s), points.reshape(-1), method="DOP853", rtol=rtol, atol=1e-13)
    if not sol.success:
        raise RuntimeError(f"reference flow failed: {sol.message}")
    return sol.y[:, -1].reshape(shape)


def smooth_field(seed: int, width: int = 6, amplitude: float = 0.5) -> Callable[[np.ndarray], np.ndarray]:
    """A random bounded field amplitude * tanh(p A + b) C on (M, 3) arrays."""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, width)) / np.sqrt(3.0)
    b = rng.normal(size=width) * 0.3
    c = rng.normal(size=(width, 3)) / np.sqrt(width)

    def fn(points: np.ndarray) -> np.ndarray:
        return amplitude * np.tanh(np.asarray(points) @ a + b) @ c

    return fn
