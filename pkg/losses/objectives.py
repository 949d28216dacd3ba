"""Training objectives for the generator bank.

All functions accept plain arrays or tape variables and build their result
with :mod:`autodiff.tape` ops.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from autodiff import tape as ad
from flow.integrator import flow_grid
from pde_suite.equations import PdeSpec, residual
from weno.scheme import weno_derivatives

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-12


class ZeroNormFieldError(ValueError):
    pass


class LossWeights(BaseModel):
    w_sym: float = Field(1.0, ge=0.0)
    w_ortho: float = Field(3.0, ge=0.0)
    w_lips: float = Field(1.0, ge=0.0)
    w_sobolev: float = Field(1.0, ge=0.0)
    tau: float = Field(3.0, gt=0.0)
    sigma: float = Field(0.4, gt=0.0)
    n_sym: int = Field(4, ge=1)
    sobolev_epochs: int = Field(10, ge=0)
    log_floor: float = Field(LOG_FLOOR, gt=0.0)


@dataclass
class InnerProductContext:
    """Quadrature points Z_grid (M, 3) with weights omega (M,), omega = 1 by default."""

    points: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.points.shape[0] == 0:
            raise ValueError("inner-product grid is empty")
        if self.weights is None:
            self.weights = np.ones(self.points.shape[0])
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if self.weights.shape[0] != self.points.shape[0]:
            raise ValueError("one quadrature weight per grid point is required")
        if np.any(self.weights < 0) or not np.any(self.weights > 0):
            raise ValueError("quadrature weights must be non-negative and not all zero")

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    def sample(self, fn: Callable[[np.ndarray], Any]) -> Any:
        return fn(self.points)


@dataclass
class ResidualSample:
    """Tuples (R, N, 3) of one bundle with the nodes where the residual is scored."""

    points: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    norm: Any = None
    length: float = 1.0


# validity score

def score_points(
    spec: PdeSpec,
    points: Any,
    rows: Sequence[int],
    cols: Sequence[int],
    norm: Any = None,
    period: float = 1.0,
) -> Any:
    """Sum of |residual| at the given nodes of a (possibly deformed) tuple grid."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    x = ad.getitem(points, (Ellipsis, 0))
    t = ad.getitem(points, (Ellipsis, 1))
    u = ad.getitem(points, (Ellipsis, 2))
    derivs = weno_derivatives(x, t, u, rows, cols, spec.required_derivatives, period)
    res = residual(
        spec,
        ad.getitem(u, (rows, cols)),
        derivs,
        ad.getitem(x, (rows, cols)),
        ad.getitem(t, (rows, cols)),
        norm,
    )
    return ad.sum_(ad.abs_(res))


def interior_nodes(n_rows: int, n_cols: int) -> tuple:
    """Every node with both t-neighbours, as (rows, cols) index arrays."""
    rr, cc = np.meshgrid(np.arange(1, n_rows - 1), np.arange(n_cols), indexing="ij")
    return rr.reshape(-1), cc.reshape(-1)


def validity_score(spec: PdeSpec, cloud: Any, norm: Any = None, period: float = 1.0) -> Any:
    """S = sum over interior nodes of |residual| on a flowed point cloud."""
    points = cloud.points
    n_rows, n_cols = ad.value_of(points).shape[:2]
    if n_rows < 3:
        raise ValueError(f"validity score needs at least 3 rows, got {n_rows}")
    rows, cols = interior_nodes(n_rows, n_cols)
    if norm is None:
        norm = getattr(cloud.source, "norm", None)
    return score_points(spec, points, rows, cols, norm, period)


def symmetry_loss(
    spec: PdeSpec,
    fields: Sequence[Callable[[Any], Any]],
    samples: Sequence[ResidualSample],
    scales: np.ndarray,
    n_steps: int = 16,
    log_floor: float = LOG_FLOOR,
) -> Any:
    """sum_a mean_b log(S(flow_{s_ab}^a(sample_b)) + floor).

    ``scales`` has shape (n_slots, n_samples): one draw per slot per sample.
    """
    if not samples:
        raise ValueError("symmetry loss needs a nonempty batch")
    scales = np.asarray(scales, dtype=np.float64)
    if scales.shape != (len(fields), len(samples)):
        raise ValueError(f"scales shape {scales.shape}, expected {(len(fields), len(samples))}")
    total = None
    for a, field_fn in enumerate(fields):
        per_slot = None
        for b, sample in enumerate(samples):
            flowed = flow_grid(field_fn, sample.points, scales[a, b], n_steps)
            score = score_points(spec, flowed, sample.rows, sample.cols, sample.norm)
            term = ad.log(score + log_floor)
            per_slot = term if per_slot is None else per_slot + term
        slot_mean = per_slot * (1.0 / len(samples))
        total = slot_mean if total is None else total + slot_mean
    return total


# inner products and orthonormality

def inner_product(v1: Any, v2: Any, ctx: InnerProductContext) -> Any:
    """(1/|Z|) sum_z omega(z) V1(z).V2(z) for field values sampled on ``ctx``."""
    dots = ad.sum_(ad.reshape(v1, (-1, 3)) * ad.reshape(v2, (-1, 3)), axis=-1)
    return ad.sum_(dots * ctx.weights) * (1.0 / ctx.size)


def field_norm(v: Any, ctx: InnerProductContext, label: str = "vector field") -> Any:
    sq = inner_product(v, v, ctx)
    if not ad.value_of(sq) > 0.0:
        raise ZeroNormFieldError(f"{label} has zero norm on the quadrature grid")
    return ad.sqrt(sq)


def normalize_field(v: Any, ctx: InnerProductContext, label: str = "vector field") -> Any:
    """v / ||v|| so that <v_hat, v_hat> = 1 on ``ctx``."""
    return v / field_norm(v, ctx, label)


def orthonormality_loss(normalized: Sequence[Any], ctx: InnerProductContext) -> Any:
    """sum_{a<b} arcsin(|<sg(h_a), h_b>|) over already-normalized slot values."""
    total = None
    for b in range(1, len(normalized)):
        for a in range(b):
            ip = inner_product(ad.stop_gradient(normalized[a]), normalized[b], ctx)
            term = ad.arcsin(ad.abs_(ip))
            total = term if total is None else total + term
    return 0.0 if total is None else total


# regularizers

def lipschitz_loss(fields: Sequence[Any], points: np.ndarray, tau: float) -> Any:
    """sum_a sum over 4-neighbour pairs of max(|dV| / |dp| - tau, 0).

    ``fields[a]`` and ``points`` share the shape (..., R, N, 3); neighbours are
    taken along the last two grid axes without periodic wrap.
    """
    points = np.asarray(points, dtype=np.float64)
    pairs = (
        ((Ellipsis, slice(1, None), slice(None), slice(None)), (Ellipsis, slice(None, -1), slice(None), slice(None))),
        ((Ellipsis, slice(None), slice(1, None), slice(None)), (Ellipsis, slice(None), slice(None, -1), slice(None))),
    )
    total = None
    for v in fields:
        for hi, lo in pairs:
            dist = np.linalg.norm(points[hi] - points[lo], axis=-1)
            keep = dist > 0.0
            if not keep.any():
                continue
            safe = np.where(keep, dist, 1.0)
            slope = ad.norm(ad.getitem(v, hi) - ad.getitem(v, lo), axis=-1) / safe
            term = ad.sum_(ad.maximum(slope - tau, 0.0) * keep)
            total = term if total is None else total + term
    return 0.0 if total is None else total


def sobolev_weights(n_x: int, length: float) -> np.ndarray:
    n = np.arange(n_x)
    n_freq = np.minimum(n, n_x - n)
    return (1.0 + np.abs(n_freq / length)) ** 2 - 1.0


def _dft_matrices(n_x: int) -> tuple:
    j = np.arange(n_x)
    phase = 2.0 * np.pi * np.outer(j, j) / n_x
    return np.cos(phase) / n_x, np.sin(phase) / n_x


def sobolev_penalty(fields: Sequence[Any], length: float) -> Any:
    """sum over slots, rows and components of sum_n w_n |V_hat(n)|^2.

    ``fields[a]`` has shape (..., N_x, 3) sampled on uniform x-lines;
    V_hat is the forward-normalized DFT along x.
    """
    total = None
    for v in fields:
        shape = ad.value_of(v).shape
        n_x = shape[-2]
        cos_m, sin_m = _dft_matrices(n_x)
        weight = sobolev_weights(n_x, length)
        lines = ad.reshape(ad.transpose(ad.reshape(v, (-1, n_x, 3)), (0, 2, 1)), (-1, n_x))
        re = ad.matmul(lines, cos_m)
        im = ad.matmul(lines, sin_m)
        term = ad.sum_((re * re + im * im) * weight)
        total = term if total is None else total + term
    return 0.0 if total is None else total


def total_loss(
    components: Dict[str, Any], weights: LossWeights, sobolev_active: bool = False
) -> Any:
    total = (
        components["sym"] * weights.w_sym
        + components["ortho"] * weights.w_ortho
        + components["lips"] * weights.w_lips
    )
    if sobolev_active:
        total = total + components["sobolev"] * weights.w_sobolev
    return total
