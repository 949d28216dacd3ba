"""Resample flowed point clouds onto regular grids and write augmented datasets."""

from __future__ import annotations

import dataclasses
import functools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import PchipInterpolator

from datagen.bundle_io import SolutionBundle, read_dataset, write_bundle
from flow.checkpoint import load_checkpoint
from flow.integrator import FlowError, PointCloudSolution, flow_grid
from pde_suite.equations import get_spec, ground_truth_generators
from resample.whittaker import PeriodicInterpolant
from training.normalization import (
    NormalizedBundle,
    Normalization,
    fit_normalization,
    normalize_coordinates,
)

logger = logging.getLogger(__name__)

METHODS = ("whittaker_shannon", "bilinear")
NEWTON_ITERATIONS = 60
NEWTON_TOL = 1e-14
MONOTONE_PROBES = 4
T_TOLERANCE = 1e-12


class ResampleError(RuntimeError):
    pass


@dataclass
class ResampleResult:
    bundle: SolutionBundle
    clipped_rows: int


# stage 1: invert the x-deformation row by row

def _invert_row_spectral(x_row: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Continuous column positions c with X(c) = target (mod 1), X(c) = c/N + WS(x - c/N)(c)."""
    n = x_row.size
    base = np.arange(n) / n
    displacement = PeriodicInterpolant(x_row - base)

    def position(c):
        return c / n + displacement(c)

    def slope(c):
        return 1.0 / n + displacement.derivative(c)

    probes = np.arange(n * MONOTONE_PROBES + 1) / MONOTONE_PROBES
    if np.any(np.diff(position(probes)) <= 0.0) or np.any(slope(probes) <= 0.0):
        raise ResampleError("x-deformation is not monotone within a row")

    start = x_row[0]
    y = start + np.mod(targets - start, 1.0)
    # bracket between consecutive samples; X agrees with x_row at integer c
    samples = np.append(x_row, x_row[0] + 1.0)
    hi = np.clip(np.searchsorted(samples, y, side="right"), 1, n)
    lo_c = (hi - 1).astype(np.float64)
    hi_c = hi.astype(np.float64)
    span = samples[hi] - samples[hi - 1]
    c = lo_c + np.where(span > 0, (y - samples[hi - 1]) / np.where(span > 0, span, 1.0), 0.5)
    for _ in range(NEWTON_ITERATIONS):
        f = position(c) - y
        lo_c = np.where(f < 0, c, lo_c)
        hi_c = np.where(f > 0, c, hi_c)
        step = c - f / slope(c)
        c_next = np.where((step >= lo_c) & (step <= hi_c), step, 0.5 * (lo_c + hi_c))
        if np.max(np.abs(c_next - c)) < NEWTON_TOL * n:
            c = c_next
            break
        c = c_next
    return c


def _periodic_linear(values: np.ndarray, c: np.ndarray) -> np.ndarray:
    n = values.size
    ext = np.append(values, values[0])
    return np.interp(c, np.arange(n + 1), ext)


def _invert_row_linear(x_row: np.ndarray, targets: np.ndarray) -> np.ndarray:
    n = x_row.size
    samples = np.append(x_row, x_row[0] + 1.0)
    if np.any(np.diff(samples) <= 0.0):
        raise ResampleError("x-deformation is not monotone within a row")
    y = x_row[0] + np.mod(targets - x_row[0], 1.0)
    return np.interp(y, samples, np.arange(n + 1.0))


def _resample_rows(
    points: np.ndarray, x_targets: np.ndarray, method: str
) -> Tuple[np.ndarray, np.ndarray]:
    """Per logical row: (t, u) of the deformed surface at the regular x targets."""
    n_rows = points.shape[0]
    t_out = np.empty((n_rows, x_targets.size))
    u_out = np.empty((n_rows, x_targets.size))
    for r in range(n_rows):
        x_row, t_row, u_row = points[r, :, 0], points[r, :, 1], points[r, :, 2]
        if method == "whittaker_shannon":
            c = _invert_row_spectral(x_row, x_targets)
            t_out[r] = PeriodicInterpolant(t_row)(c)
            u_out[r] = PeriodicInterpolant(u_row)(c)
        else:
            c = _invert_row_linear(x_row, x_targets)
            t_out[r] = _periodic_linear(t_row, c)
            u_out[r] = _periodic_linear(u_row, c)
    return t_out, u_out


# stage 2: across rows in t

def _resample_columns(
    t_rows: np.ndarray, u_rows: np.ndarray, t_targets: np.ndarray, method: str
) -> np.ndarray:
    out = np.empty((t_targets.size, t_rows.shape[1]))
    for j in range(t_rows.shape[1]):
        t_col, u_col = t_rows[:, j], u_rows[:, j]
        if np.any(np.diff(t_col) <= 0.0):
            raise ResampleError(f"t is not increasing along column {j}")
        if method == "whittaker_shannon":
            out[:, j] = PchipInterpolator(t_col, u_col, extrapolate=True)(t_targets)
        else:
            out[:, j] = np.interp(t_targets, t_col, u_col)
    return out


def _time_targets(t_rows: np.ndarray, n_t: int, anchored: bool) -> np.ndarray:
    """Regular target times in [0, 1] with spacing 1 / (n_t - 1).

    An anchored grid is offset by the flowed first row modulo the spacing, so a
    uniform t-translation lands on the flowed rows themselves.
    """
    if n_t < 2:
        return np.zeros(1)
    step = 1.0 / (n_t - 1)
    offset = float(np.mod(np.max(t_rows[0]), step)) if anchored else 0.0
    if offset < T_TOLERANCE or step - offset < T_TOLERANCE:
        offset = 0.0
    count = int(np.floor((1.0 - offset) / step + 1e-9)) + 1
    return offset + step * np.arange(count)


def resample_to_grid(
    cloud: PointCloudSolution,
    n_x: Optional[int] = None,
    n_t: Optional[int] = None,
    method: str = "whittaker_shannon",
) -> ResampleResult:
    """Regular-grid bundle in physical units from a flowed normalized cloud.

    Whittaker-Shannon in x after inverting the deformation row by row,
    monotone cubic in t onto a regular grid anchored at the flowed first row.
    Target times that some column does not cover are dropped and counted in
    ``clipped_rows``; the first kept time becomes the bundle's ``t_origin``.
    The bilinear ablation keeps the source time grid.
    """
    if method not in METHODS:
        raise ValueError(f"unknown resampling method {method!r}; expected one of {METHODS}")
    normalized: NormalizedBundle = cloud.source
    norm = normalized.norm
    points = np.asarray(cloud.values, dtype=np.float64)
    if points.ndim != 3 or points.shape[-1] != 3:
        raise ResampleError(f"cloud points must be (R, N, 3), got {points.shape}")
    if not np.all(np.isfinite(points)):
        raise ResampleError("cloud holds non-finite points")
    src_rows, src_cols = normalized.shape
    n_x = src_cols if n_x is None else n_x
    n_t = src_rows if n_t is None else n_t
    if n_x % 2 or n_x < 2:
        raise ValueError(f"target N_x must be even, got {n_x}")

    x_targets = np.arange(n_x) / n_x
    t_rows, u_rows = _resample_rows(points, x_targets, method)

    t_grid = _time_targets(t_rows, n_t, anchored=method == "whittaker_shannon")
    t_lo = np.max(t_rows[0]) - T_TOLERANCE
    t_hi = np.min(t_rows[-1]) + T_TOLERANCE
    keep = (t_grid >= t_lo) & (t_grid <= t_hi)
    clipped = n_t - int(np.count_nonzero(keep))
    if np.count_nonzero(keep) < 2:
        raise ResampleError(f"flowed cloud covers fewer than 2 target rows ({clipped} clipped)")
    if clipped:
        logger.warning("Clipped %d of %d target rows outside the flowed time range", clipped, n_t)
    kept = np.clip(t_grid[keep], t_rows[0].max(), t_rows[-1].min())
    u_bar = _resample_columns(t_rows, u_rows, kept, method)

    u = u_bar / norm.u_scale + norm.u_offset
    t_origin = norm.t_origin + t_grid[keep][0] * norm.horizon
    horizon = (t_grid[keep][-1] - t_grid[keep][0]) * norm.horizon
    source = normalized.source
    provenance = dict(source.provenance or {})
    provenance["t_origin"] = float(t_origin)
    bundle = dataclasses.replace(source, horizon=float(horizon), u=u, provenance=provenance)
    return ResampleResult(bundle, clipped)


# augmentation

def _gt_fields(eq: str, params: Dict[str, float], norm: Normalization) -> List[Callable]:
    return list(ground_truth_generators(get_spec(eq, **params), norm))


@functools.lru_cache(maxsize=4)
def _checkpoint_fields(path: str) -> Tuple[List[Callable], Normalization]:
    bank, theta, header = load_checkpoint(path)
    if header.normalization is None:
        raise ValueError(f"checkpoint {path} carries no normalization")
    layers = bank.layers(theta)
    return [bank.field(layers, a) for a in range(bank.n_sym)], header.normalization


def resolve_generators(
    source: str, bundles: Sequence[SolutionBundle]
) -> Tuple[List[Callable], Normalization]:
    """Fields in normalized coordinates plus the normalization they expect.

    ``source`` is ``"gt"`` for the equation's ground truth or a checkpoint directory.
    """
    if source == "gt":
        norm = fit_normalization(bundles)
        first = bundles[0]
        return _gt_fields(first.name, dict(first.params), norm), norm
    return _checkpoint_fields(str(Path(source)))


@dataclass(frozen=True)
class AugmentJob:
    index: int
    source: str
    bundle: SolutionBundle
    slot: int
    scale: float
    norm: Normalization
    path: str
    method: str
    n_steps: int


def _run_job(job: AugmentJob) -> Optional[str]:
    normalized, _ = normalize_coordinates(job.bundle, job.norm)
    if job.source == "gt":
        # ground truth is pushed forward through this bundle's own time window
        fields = _gt_fields(job.bundle.name, dict(job.bundle.params), normalized.norm)
    else:
        fields, _ = _checkpoint_fields(job.source)
    try:
        flowed = flow_grid(fields[job.slot], normalized.points(), job.scale, job.n_steps)
        result = resample_to_grid(
            PointCloudSolution(flowed, np.arange(normalized.shape[0]), normalized, job.slot, job.scale),
            method=job.method,
        )
    except (FlowError, ResampleError) as exc:
        logger.warning("Skipped draw %d (seed %d, slot %d, s=%.3f): %s",
                       job.index, job.bundle.seed, job.slot, job.scale, exc)
        return None
    provenance = dict(result.bundle.provenance or {})
    provenance.update(
        source_seed=job.bundle.seed,
        slot=job.slot,
        scale=job.scale,
        generator=job.source,
        clipped_rows=result.clipped_rows,
    )
    write_bundle(dataclasses.replace(result.bundle, provenance=provenance), job.path)
    return job.path


@dataclass
class AugmentSummary:
    written: List[Path]
    skipped: int


def augment_dataset(
    bundles: Union[str, Path, Sequence[SolutionBundle]],
    source: str,
    out_dir: Union[str, Path],
    count: int = 1,
    sigma: float = 0.4,
    seed: int = 0,
    slots: Optional[Sequence[int]] = None,
    fixed_scale: Optional[float] = None,
    method: str = "whittaker_shannon",
    n_steps: int = 16,
    jobs: int = 1,
) -> AugmentSummary:
    """Write ``count`` transformed copies of every bundle as ``aug_{i:05d}``.

    Each draw picks a slot from ``slots`` (default: all) and a scale
    s ~ U[-sigma, sigma], or ``fixed_scale`` when given.
    """
    if not isinstance(bundles, (list, tuple)):
        bundles = read_dataset(bundles)
    bundles = list(bundles)
    if not bundles:
        raise ValueError("nothing to augment")
    fields, norm = resolve_generators(source, bundles)
    slots = list(range(len(fields))) if slots is None else list(slots)
    for a in slots:
        if not 0 <= a < len(fields):
            raise ValueError(f"slot {a} out of range for {len(fields)} generators")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    work = []
    for bundle in bundles:
        for _ in range(count):
            slot = int(slots[rng.integers(len(slots))])
            scale = float(fixed_scale) if fixed_scale is not None else float(rng.uniform(-sigma, sigma))
            index = len(work)
            work.append(AugmentJob(index, source, bundle, slot, scale, norm,
                                   str(out_dir / f"aug_{index:05d}"), method, n_steps))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_job, work))
    else:
        results = [_run_job(job) for job in work]
    written = [Path(p) for p in results if p is not None]
    skipped = len(results) - len(written)
    logger.info("Augmented %d bundles: %d written, %d skipped", len(bundles), len(written), skipped)
    return AugmentSummary(written, skipped)
