"""Affine coordinate normalization shared by training, evaluation and resampling."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from datagen.bundle_io import SolutionBundle

logger = logging.getLogger(__name__)

# standard deviation of U[0, 1], the spread of normalized x and t
TARGET_U_STD = 1.0 / math.sqrt(12.0)


class Normalization(BaseModel):
    """Map physical (x, t, u) to the unit square and a u-range matching it.

    x_bar = x / length, t_bar = (t - t_origin) / horizon,
    u_bar = (u - u_offset) * u_scale.
    """

    model_config = ConfigDict(frozen=True)

    length: float
    horizon: float
    u_offset: float = 0.0
    u_scale: float = 1.0
    t_origin: float = 0.0
    degenerate: bool = False

    @field_validator("length", "horizon", "u_scale")
    @classmethod
    def _positive(cls, value: float) -> float:
        if not value > 0 or not math.isfinite(value):
            raise ValueError(f"must be positive and finite, got {value}")
        return value

    def for_bundle(self, bundle: SolutionBundle) -> "Normalization":
        """Same u-statistics, with the time window of ``bundle``."""
        horizon = bundle.horizon if bundle.horizon > 0 else 1.0
        return self.model_copy(update={"t_origin": float(bundle.t_origin), "horizon": float(horizon)})

    def to_physical_points(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        out = np.empty_like(points)
        out[..., 0] = points[..., 0] * self.length
        out[..., 1] = points[..., 1] * self.horizon + self.t_origin
        out[..., 2] = points[..., 2] / self.u_scale + self.u_offset
        return out

    def to_normalized_points(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        out = np.empty_like(points)
        out[..., 0] = points[..., 0] / self.length
        out[..., 1] = (points[..., 1] - self.t_origin) / self.horizon
        out[..., 2] = (points[..., 2] - self.u_offset) * self.u_scale
        return out


@dataclass(frozen=True)
class NormalizedBundle:
    """A bundle in normalized coordinates: x_bar (N_x,), t_bar (N_t,), u_bar (N_t, N_x)."""

    source: SolutionBundle
    x: np.ndarray
    t: np.ndarray
    u: np.ndarray
    norm: Normalization

    @property
    def shape(self) -> Tuple[int, int]:
        return self.u.shape

    def points(self) -> np.ndarray:
        """Grid tuples (N_t, N_x, 3) in normalized coordinates."""
        tt, xx = np.meshgrid(self.t, self.x, indexing="ij")
        return np.stack([xx, tt, self.u], axis=-1)


def fit_normalization(bundles: Iterable[SolutionBundle]) -> Normalization:
    """Dataset-wide normalization: one u-offset and u-scale for every bundle."""
    bundles = list(bundles)
    if not bundles:
        raise ValueError("cannot fit a normalization to an empty dataset")
    first = bundles[0]
    for b in bundles[1:]:
        if b.name != first.name or b.length != first.length:
            raise ValueError(
                f"bundles disagree on equation or domain: {first.name} vs {b.name}"
            )
    values = np.concatenate([b.u.reshape(-1) for b in bundles])
    if not np.all(np.isfinite(values)):
        raise ValueError("dataset contains non-finite values")
    offset = float(values.mean())
    std = float(values.std())
    degenerate = not std > 0.0
    if degenerate:
        logger.warning("u has zero variance across %d bundles; using u-scale 1", len(bundles))
    horizon = first.horizon if first.horizon > 0 else 1.0
    return Normalization(
        length=first.length,
        horizon=horizon,
        u_offset=offset,
        u_scale=1.0 if degenerate else TARGET_U_STD / std,
        t_origin=float(first.t_origin),
        degenerate=degenerate,
    )


def normalize_coordinates(
    bundle: SolutionBundle, norm: Normalization | None = None
) -> Tuple[NormalizedBundle, Normalization]:
    """Map ``bundle`` onto [0, 1]^2 with the dataset u-statistics in ``norm``.

    When ``norm`` is omitted it is fitted to this bundle alone.
    """
    if not np.all(np.isfinite(bundle.u)):
        raise ValueError(f"bundle {bundle.name} seed {bundle.seed} has non-finite values")
    if norm is None:
        norm = fit_normalization([bundle])
    norm = norm.for_bundle(bundle)
    x = bundle.x_grid() / norm.length
    t = (bundle.t_grid() - norm.t_origin) / norm.horizon
    u = (bundle.u - norm.u_offset) * norm.u_scale
    return NormalizedBundle(bundle, x, t, u, norm), norm


def denormalize(normalized: NormalizedBundle) -> SolutionBundle:
    norm = normalized.norm
    u = normalized.u / norm.u_scale + norm.u_offset
    return normalized.source.replace_u(u)


def normalize_dataset(
    bundles: Sequence[SolutionBundle],
) -> Tuple[list, Normalization]:
    norm = fit_normalization(bundles)
    return [normalize_coordinates(b, norm)[0] for b in bundles], norm
