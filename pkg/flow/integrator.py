"""Fixed-step RK4 transport of solution tuples along a vector field."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

import numpy as np

from autodiff import tape as ad
from flow.generator_bank import GeneratorBank

logger = logging.getLogger(__name__)

VectorField = Callable[[Any], Any]


class FlowError(RuntimeError):
    pass


def flow_points(field: VectorField, points: Any, s: float, n_steps: int = 16) -> Any:
    """Integrate gamma' = field(gamma) from ``points`` over scale ``s``.

    ``points`` has shape (M, 3) and may be a tape variable; a negative ``s``
    integrates the reversed field. ``s == 0`` returns ``points`` unchanged.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be at least 1, got {n_steps}")
    s = float(s)
    if s == 0.0:
        return points
    h = s / n_steps
    y = points
    for step in range(1, n_steps + 1):
        k1 = field(y)
        k2 = field(y + k1 * (h / 2.0))
        k3 = field(y + k2 * (h / 2.0))
        k4 = field(y + k3 * h)
        y = y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
        if not np.all(np.isfinite(ad.value_of(y))):
            raise FlowError(f"non-finite state after RK4 step {step} of {n_steps} (s={s})")
    return y


@dataclass
class PointCloudSolution:
    """Flowed grid tuples on the logical (row, column) grid of the source.

    ``points`` has shape (R, N_x, 3) where R = len(rows); x is kept unwrapped.
    """

    points: Any
    rows: np.ndarray
    source: Any
    slot: Optional[int]
    scale: float

    @property
    def values(self) -> np.ndarray:
        return ad.value_of(self.points)


def flow_grid(field: VectorField, grid: Any, s: float, n_steps: int = 16) -> Any:
    """Flow an (..., 3) block of tuples, preserving its leading shape."""
    shape = ad.value_of(grid).shape
    flat = ad.reshape(grid, (-1, 3))
    return ad.reshape(flow_points(field, flat, s, n_steps), shape)


def transform_solution(
    bank: GeneratorBank,
    theta: Any,
    slot: int,
    normalized: Any,
    s: float,
    n_steps: int = 16,
    rows: Optional[Sequence[int]] = None,
) -> PointCloudSolution:
    """Flow every tuple of a normalized bundle (or the given rows) by scale ``s``."""
    grid = normalized.points()
    rows = np.arange(grid.shape[0]) if rows is None else np.asarray(rows, dtype=np.int64)
    field = bank.field(bank.layers(theta), slot)
    flowed = flow_grid(field, grid[rows], s, n_steps)
    return PointCloudSolution(flowed, rows, normalized, slot, float(s))


def transform_with_field(
    field: VectorField,
    normalized: Any,
    s: float,
    n_steps: int = 16,
    rows: Optional[Sequence[int]] = None,
) -> PointCloudSolution:
    """Same as :func:`transform_solution` for a closed-form field."""
    grid = normalized.points()
    rows = np.arange(grid.shape[0]) if rows is None else np.asarray(rows, dtype=np.int64)
    flowed = flow_grid(field, grid[rows], s, n_steps)
    return PointCloudSolution(flowed, rows, normalized, None, float(s))
