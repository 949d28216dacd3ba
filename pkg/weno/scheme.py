"""WENO differentiation on deformed (x, t) grids.

Every evaluation node (r, c) gets up to ten 5x2 stencils: the five column
blocks that contain c, each paired with the row pair below (r-1, r) and
above (r, r+1). A stencil fits the bivariate polynomial with monomials
xi^i eta^j (i <= 4, j <= 1) in local coordinates xi = dx / hx,
eta = dt / ht, and the derivatives of the fits are blended with the
smoothness-indicator weights gamma / (eps + IS)^b.

Everything in :func:`weno_derivatives` is built from :mod:`autodiff.tape`
ops, so the same code runs on plain arrays and on tape variables.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from autodiff import tape as ad

logger = logging.getLogger(__name__)

X_DEGREE = 4
T_DEGREE = 1
# monomial k = i + 5 j  <->  xi^i eta^j
BASIS: Tuple[Tuple[int, int], ...] = tuple(
    (i, j) for j in range(T_DEGREE + 1) for i in range(X_DEGREE + 1)
)
N_BASIS = len(BASIS)
BLOCK_WIDTH = X_DEGREE + 1
CENTRAL_SHIFT = 2
GAMMA_CENTRAL = 100.0
GAMMA_OTHER = 1.0
WENO_EPS = 1e-6
WENO_POWER = 4
COND_LIMIT = 1e10

MultiIndex = Tuple[int, int]


class WenoError(RuntimeError):
    pass


@dataclass(frozen=True)
class Stencil:
    """Logical grid members (row, unwrapped column) of one reconstruction."""

    members: Tuple[Tuple[int, int], ...]
    eval_index: Tuple[int, int]
    gamma: float


@dataclass(frozen=True)
class ReconstructionPoly:
    """Coefficients of sum_k coeffs[k] dx^i dt^j about ``center`` = (x0, t0)."""

    coeffs: np.ndarray
    center: Tuple[float, float]

    def __call__(self, x: Any, t: Any) -> np.ndarray:
        dx = np.asarray(x, dtype=np.float64) - self.center[0]
        dt = np.asarray(t, dtype=np.float64) - self.center[1]
        return sum(c * dx ** i * dt ** j for c, (i, j) in zip(self.coeffs, BASIS))

    def derivative_at_center(self, order: MultiIndex) -> float:
        a, b = order
        if (a, b) not in BASIS:
            return 0.0
        return float(self.coeffs[BASIS.index((a, b))] * math.factorial(a) * math.factorial(b))


# stencil layout

def _stencil_offsets() -> List[Tuple[Tuple[int, int], Tuple[Tuple[int, int], ...], float]]:
    """(t-side, member offsets, gamma) for the ten candidate stencils."""
    table = []
    for side in (-1, 1):
        row_pair = (-1, 0) if side < 0 else (0, 1)
        for shift in range(BLOCK_WIDTH):
            cols = range(shift - X_DEGREE, shift + 1)
            members = tuple((dr, dc) for dr in row_pair for dc in cols)
            gamma = GAMMA_CENTRAL if shift == CENTRAL_SHIFT else GAMMA_OTHER
            table.append(((side, shift), members, gamma))
    return table


STENCIL_TABLE = _stencil_offsets()
N_STENCILS = len(STENCIL_TABLE)
_ROW_OFFSETS = np.array([[m[0] for m in members] for _, members, _ in STENCIL_TABLE])
_COL_OFFSETS = np.array([[m[1] for m in members] for _, members, _ in STENCIL_TABLE])
_GAMMAS = np.array([gamma for _, _, gamma in STENCIL_TABLE])
_SIDES = np.array([side for (side, _), _, _ in STENCIL_TABLE])


def build_stencils(n_rows: int, n_cols: int, row: int, col: int) -> List[Stencil]:
    """Stencils for node (row, col); columns are left unwrapped (may be < 0 or >= n_cols)."""
    if n_rows < 2:
        raise ValueError(f"WENO stencils need at least 2 rows, got {n_rows}")
    if n_cols < BLOCK_WIDTH:
        raise ValueError(f"WENO stencils need at least {BLOCK_WIDTH} columns, got {n_cols}")
    if not (0 <= row < n_rows and 0 <= col < n_cols):
        raise IndexError(f"node ({row}, {col}) outside a {n_rows}x{n_cols} grid")
    stencils = []
    for (side, _), members, gamma in STENCIL_TABLE:
        if (side < 0 and row == 0) or (side > 0 and row == n_rows - 1):
            continue
        stencils.append(
            Stencil(tuple((row + dr, col + dc) for dr, dc in members), (row, col), gamma)
        )
    return stencils


# polynomial algebra

def _interval_moment(n: int) -> float:
    """Integral of s^n over [-1/2, 1/2]."""
    return 0.0 if n % 2 else 2.0 * 0.5 ** (n + 1) / (n + 1)


def _derivative_factor(power: int, order: int) -> float:
    return math.factorial(power) / math.factorial(power - order) if power >= order else 0.0


def _smoothness_matrices() -> List[Tuple[MultiIndex, np.ndarray]]:
    """Gram matrices of d^alpha monomials over the unit cell, one per alpha with |alpha| >= 1."""
    out = []
    for ax in range(X_DEGREE + 1):
        for at in range(T_DEGREE + 1):
            if ax + at == 0:
                continue
            q = np.zeros((N_BASIS, N_BASIS))
            for k, (i1, j1) in enumerate(BASIS):
                f1 = _derivative_factor(i1, ax) * _derivative_factor(j1, at)
                if f1 == 0.0:
                    continue
                for l, (i2, j2) in enumerate(BASIS):
                    f2 = _derivative_factor(i2, ax) * _derivative_factor(j2, at)
                    if f2 == 0.0:
                        continue
                    q[k, l] = (
                        f1 * f2
                        * _interval_moment(i1 + i2 - 2 * ax)
                        * _interval_moment(j1 + j2 - 2 * at)
                    )
            out.append(((ax, at), q))
    return out


SMOOTHNESS_MATRICES = _smoothness_matrices()


def _vandermonde(xi: Any, eta: Any) -> Any:
    """(..., m) local coordinates -> (..., m, 10) monomial matrix."""
    ones = np.ones(ad.value_of(xi).shape)
    xi_powers = [ones, xi]
    for _ in range(2, X_DEGREE + 1):
        xi_powers.append(xi_powers[-1] * xi)
    columns = [xi_powers[i] if j == 0 else xi_powers[i] * eta for i, j in BASIS]
    return ad.stack(columns, axis=-1)


def _scaled_smoothness(coeffs: Any, ratio: Any) -> Any:
    """IS from scaled coefficients (..., 10) and ratio = ht / hx broadcastable to (...)."""
    shape = ad.value_of(coeffs).shape
    flat = ad.reshape(coeffs, (-1, N_BASIS))
    total = None
    for (ax, at), q in SMOOTHNESS_MATRICES:
        quad = ad.reshape(ad.sum_(ad.matmul(flat, q) * flat, axis=-1), shape[:-1])
        weight = ad.power(ratio, ax - at)
        term = quad * weight
        total = term if total is None else total + term
    return total


def nonlinear_weights(indicators: Any, gammas: Any, valid: np.ndarray) -> Any:
    """omega_m = alpha_m / sum alpha, alpha_m = gamma_m / (eps + IS_m)^b over valid stencils.

    Reduces over the last axis; raises when a node has no valid stencil.
    """
    valid = np.asarray(valid, dtype=bool)
    if np.any(~valid.any(axis=-1)):
        raise WenoError("every stencil at some node is degenerate or unavailable")
    alpha = ad.power(indicators + WENO_EPS, -WENO_POWER) * (np.asarray(gammas, dtype=np.float64) * valid)
    return alpha / ad.sum_(alpha, axis=-1, keepdims=True)


# single-stencil helpers

def reconstruct_polynomial(
    x: Sequence[float],
    t: Sequence[float],
    values: Sequence[float],
    center: Tuple[float, float],
    scales: Optional[Tuple[float, float]] = None,
) -> ReconstructionPoly:
    """Interpolate ten (x, t, u) samples by the stencil basis around ``center``."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if x.shape != (N_BASIS,) or t.shape != x.shape or values.shape != x.shape:
        raise ValueError(f"a stencil has exactly {N_BASIS} members")
    dx, dt = x - center[0], t - center[1]
    if scales is None:
        hx = (dx.max() - dx.min()) / X_DEGREE or 1.0
        ht = (dt.max() - dt.min()) or 1.0
    else:
        hx, ht = scales
    a = _vandermonde(dx / hx, dt / ht)
    if np.linalg.cond(a) >= COND_LIMIT:
        raise WenoError("stencil interpolation system is ill-conditioned")
    scaled = np.linalg.solve(a, values)
    unscaled = np.array([c / (hx ** i * ht ** j) for c, (i, j) in zip(scaled, BASIS)])
    return ReconstructionPoly(unscaled, (float(center[0]), float(center[1])))


def smoothness_indicator(poly: ReconstructionPoly, hx: float, ht: float) -> float:
    """Indicator over the cell [-hx/2, hx/2] x [-ht/2, ht/2] about the polynomial's center."""
    if not hx * ht > 0.0:
        raise WenoError(f"cell has zero volume (hx={hx}, ht={ht})")
    scaled = np.array([c * hx ** i * ht ** j for c, (i, j) in zip(poly.coeffs, BASIS)])
    return float(_scaled_smoothness(scaled, np.asarray(ht / hx)))


# batched, differentiable evaluation

def _gather(field: Any, rows: np.ndarray, cols: np.ndarray) -> Any:
    return ad.getitem(field, (rows, cols))


def _unwrapped_x(x: Any, rows: np.ndarray, cols: np.ndarray, n_cols: int, period: float) -> Any:
    return _gather(x, rows, cols % n_cols) + period * np.floor_divide(cols, n_cols)


@dataclass
class WenoFit:
    coeffs: Any
    weights: Any
    hx: Any
    ht: Any
    valid: np.ndarray


def weno_fit(
    x: Any,
    t: Any,
    u: Any,
    rows: Sequence[int],
    cols: Sequence[int],
    period: float = 1.0,
) -> WenoFit:
    """Stencil fits and nonlinear weights at nodes (rows[p], cols[p]).

    ``x``, ``t`` and ``u`` are (R, N) arrays or tape variables on the logical
    grid; ``x`` is unwrapped with the given ``period``.
    """
    n_rows, n_cols = ad.value_of(u).shape
    if n_rows < 2:
        raise ValueError(f"WENO needs at least 2 rows, got {n_rows}")
    if n_cols < BLOCK_WIDTH:
        raise ValueError(f"WENO needs at least {BLOCK_WIDTH} columns, got {n_cols}")
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)

    valid = np.where(_SIDES[None, :] < 0, rows[:, None] > 0, rows[:, None] < n_rows - 1)
    member_rows = np.clip(rows[:, None, None] + _ROW_OFFSETS[None], 0, n_rows - 1)
    member_cols = cols[:, None, None] + _COL_OFFSETS[None]

    x0 = _gather(x, rows, cols)
    t0 = _gather(t, rows, cols)
    hx = (_unwrapped_x(x, rows, cols + 1, n_cols, period) - _unwrapped_x(x, rows, cols - 1, n_cols, period)) * 0.5
    up = np.minimum(rows + 1, n_rows - 1)
    down = np.maximum(rows - 1, 0)
    ht = ad.abs_(_gather(t, up, cols) - _gather(t, down, cols)) / (up - down).astype(np.float64)
    if np.any(ad.value_of(hx) <= 0.0) or np.any(ad.value_of(ht) <= 0.0):
        raise WenoError("deformed grid folded: non-positive local spacing")

    xi = (_unwrapped_x(x, member_rows, member_cols, n_cols, period) - ad.reshape(x0, (-1, 1, 1))) / ad.reshape(hx, (-1, 1, 1))
    eta = (_gather(t, member_rows, member_cols % n_cols) - ad.reshape(t0, (-1, 1, 1))) / ad.reshape(ht, (-1, 1, 1))
    members_u = _gather(u, member_rows, member_cols % n_cols)

    a = _vandermonde(xi, eta)
    a_value = ad.value_of(a)
    eye = np.eye(N_BASIS)
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(np.where(valid[..., None, None], a_value, eye))
    degenerate = valid & ~(np.isfinite(cond) & (cond < COND_LIMIT))
    if degenerate.any():
        logger.warning("Dropped %d degenerate WENO stencils", int(degenerate.sum()))
    valid = valid & ~degenerate
    keep = valid.astype(np.float64)
    a = a * keep[..., None, None] + eye * (1.0 - keep)[..., None, None]
    coeffs = ad.solve(a, members_u * keep[..., None])

    indicators = _scaled_smoothness(coeffs, ad.reshape(ht / hx, (-1, 1)))
    weights = nonlinear_weights(indicators, _GAMMAS[None, :], valid)
    return WenoFit(coeffs, weights, hx, ht, valid)


def derivative_from_fit(fit: WenoFit, order: MultiIndex) -> Any:
    a, b = order
    if (a, b) not in BASIS:
        raise ValueError(f"derivative order {order} is outside the stencil basis")
    k = BASIS.index((a, b))
    scale = float(math.factorial(a) * math.factorial(b))
    per_stencil = ad.getitem(fit.coeffs, (Ellipsis, k)) * scale
    blended = ad.sum_(per_stencil * fit.weights, axis=-1)
    denominator = None
    if a:
        denominator = ad.power(fit.hx, a)
    if b:
        denominator = ad.power(fit.ht, b) if denominator is None else denominator * ad.power(fit.ht, b)
    return blended if denominator is None else blended / denominator


def weno_derivatives(
    x: Any,
    t: Any,
    u: Any,
    rows: Sequence[int],
    cols: Sequence[int],
    orders: Iterable[MultiIndex],
    period: float = 1.0,
) -> Dict[MultiIndex, Any]:
    """Derivatives of every requested order at the nodes, shape (P,) each."""
    fit = weno_fit(x, t, u, rows, cols, period)
    return {tuple(order): derivative_from_fit(fit, tuple(order)) for order in orders}


def weno_derivative(
    x: Any, t: Any, u: Any, row: int, col: int, order: MultiIndex, period: float = 1.0
) -> Any:
    out = weno_derivatives(x, t, u, [row], [col], [order], period)[tuple(order)]
    return ad.getitem(out, 0)


def stencil_weights(
    x: Any, t: Any, u: Any, rows: Sequence[int], cols: Sequence[int], period: float = 1.0
) -> np.ndarray:
    return ad.value_of(weno_fit(x, t, u, rows, cols, period).weights)
