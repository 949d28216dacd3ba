"""Pseudospectral time integration of the registered equations.

KdV, KS, cKdV and nKdV use fourth-order exponential time differencing on the
real-FFT modes with 2/3 dealiasing of the quadratic term. Burgers goes through
its heat-equation backbone (classical RK4 in Fourier space) and Cole-Hopf.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import fft
from tenacity import (
    Retrying,
    before_sleep_log,
    retry_if_exception_type,
    stop_after_attempt,
)

from datagen.bundle_io import SolutionBundle, write_bundle
from datagen.spectral import (
    check_even,
    random_fourier_ic,
    spectral_antiderivative,
    spectral_derivative,
    wavenumbers,
)
from pde_suite.equations import PdeSpec, get_spec, nkdv_time_map

logger = logging.getLogger(__name__)

DEFAULT_DT = 0.01
IC_AMPLITUDE = 0.5
# half-range of the log(phi0) series; large enough for convection to steepen fronts
BURGERS_POTENTIAL_AMPLITUDE = 2.5
MAX_WAVENUMBER = 8
BLOW_UP = 1e6
CONTOUR_POINTS = 32
MAX_ATTEMPTS = 3


class BlowUpError(RuntimeError):
    def __init__(self, time_reached: float, reason: str = "|u| exceeded 1e6") -> None:
        super().__init__(f"solution blew up at t={time_reached:.6g}: {reason}")
        self.time_reached = time_reached


@dataclass(frozen=True)
class EtdCoefficients:
    e: np.ndarray
    e2: np.ndarray
    q: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray


def etdrk4_coefficients(linear: np.ndarray, h: float, n_points: int = CONTOUR_POINTS) -> EtdCoefficients:
    """ETDRK4 coefficients by contour averaging on a full unit circle around each h*L.

    The full circle keeps the averages correct for complex (dispersive) linear parts.
    """
    hl = h * np.asarray(linear, dtype=np.complex128)
    roots = np.exp(2j * np.pi * (np.arange(1, n_points + 1) - 0.5) / n_points)
    lr = hl[:, None] + roots[None, :]
    exp_lr = np.exp(lr)
    lr3 = lr ** 3
    q = h * np.mean((np.exp(lr / 2.0) - 1.0) / lr, axis=1)
    f1 = h * np.mean((-4.0 - lr + exp_lr * (4.0 - 3.0 * lr + lr * lr)) / lr3, axis=1)
    f2 = h * np.mean((2.0 + lr + exp_lr * (lr - 2.0)) / lr3, axis=1)
    f3 = h * np.mean((-4.0 - 3.0 * lr - lr * lr + exp_lr * (4.0 - lr)) / lr3, axis=1)
    return EtdCoefficients(np.exp(hl), np.exp(hl / 2.0), q, f1, f2, f3)


def dealias_mask(n_x: int) -> np.ndarray:
    modes = np.arange(n_x // 2 + 1)
    return (modes < n_x / 3.0).astype(np.float64)


def linear_operator(spec: PdeSpec, k: np.ndarray) -> np.ndarray:
    if spec.name in ("kdv", "nkdv", "ckdv"):
        return 1j * k ** 3
    if spec.name == "ks":
        return (k ** 2 - k ** 4).astype(np.complex128)
    raise ValueError(f"no stiff linear operator for {spec.name!r}")


class _SpectralRhs:
    """Explicit part of u_t = L u + N(u, t) on real-FFT coefficients."""

    def __init__(self, spec: PdeSpec, n_x: int, length: float) -> None:
        self.n_x = n_x
        self.k = wavenumbers(n_x, length)
        self.mask = dealias_mask(n_x)
        self.cylindrical = spec.name == "ckdv"

    def __call__(self, v: np.ndarray, t: float) -> np.ndarray:
        u = fft.irfft(v, n=self.n_x)
        out = -0.5j * self.k * fft.rfft(u * u) * self.mask
        if self.cylindrical:
            out = out - v / (2.0 * (t + 1.0))
        return out


def _etdrk4_interval(
    v: np.ndarray, t0: float, t1: float, rhs: _SpectralRhs, linear: np.ndarray,
    dt_max: float, cache: Dict[float, EtdCoefficients],
) -> np.ndarray:
    n_steps = max(1, math.ceil((t1 - t0) / dt_max - 1e-9))
    h = (t1 - t0) / n_steps
    coef = cache.get(h)
    if coef is None:
        coef = cache[h] = etdrk4_coefficients(linear, h)
    t = t0
    for _ in range(n_steps):
        nv = rhs(v, t)
        a = coef.e2 * v + coef.q * nv
        na = rhs(a, t + h / 2.0)
        b = coef.e2 * v + coef.q * na
        nb = rhs(b, t + h / 2.0)
        c = coef.e2 * a + coef.q * (2.0 * nb - nv)
        nc = rhs(c, t + h)
        v = coef.e * v + nv * coef.f1 + 2.0 * (na + nb) * coef.f2 + nc * coef.f3
        t += h
    return v


def _check_row(u: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(u)):
        raise BlowUpError(t, "non-finite values")
    if np.max(np.abs(u)) > BLOW_UP:
        raise BlowUpError(t)


def integrate_stiff(
    spec: PdeSpec, u0: np.ndarray, times: Sequence[float], length: float, dt_max: float = DEFAULT_DT
) -> np.ndarray:
    """Rows of u at each of ``times`` (ascending, starting at the initial time)."""
    u0 = np.asarray(u0, dtype=np.float64)
    n_x = u0.size
    rhs = _SpectralRhs(spec, n_x, length)
    linear = linear_operator(spec, rhs.k)
    cache: Dict[float, EtdCoefficients] = {}
    rows = [u0.copy()]
    v = fft.rfft(u0)
    for t0, t1 in zip(times[:-1], times[1:]):
        v = _etdrk4_interval(v, float(t0), float(t1), rhs, linear, dt_max, cache)
        row = fft.irfft(v, n=n_x)
        _check_row(row, float(t1))
        rows.append(row)
    return np.stack(rows)


def evolve_heat(
    phi0: np.ndarray, times: Sequence[float], nu: float, length: float, dt_max: float = DEFAULT_DT
) -> np.ndarray:
    """phi_t = nu phi_xx by classical RK4 on the Fourier coefficients."""
    phi0 = np.asarray(phi0, dtype=np.float64)
    n_x = phi0.size
    check_even(n_x)
    decay = -nu * wavenumbers(n_x, length) ** 2
    v = fft.rfft(phi0)
    rows = [phi0.copy()]
    for t0, t1 in zip(times[:-1], times[1:]):
        n_steps = max(1, math.ceil((t1 - t0) / dt_max - 1e-9))
        h = (t1 - t0) / n_steps
        for _ in range(n_steps):
            k1 = decay * v
            k2 = decay * (v + 0.5 * h * k1)
            k3 = decay * (v + 0.5 * h * k2)
            k4 = decay * (v + h * k3)
            v = v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        row = fft.irfft(v, n=n_x)
        _check_row(row, float(t1))
        rows.append(row)
    return np.stack(rows)


def cole_hopf_field(
    phi: np.ndarray, nu: float, length: float, phi_x: Optional[np.ndarray] = None
) -> np.ndarray:
    """u = -2 nu phi_x / phi, row-wise; ``phi_x`` defaults to the spectral derivative."""
    phi = np.asarray(phi, dtype=np.float64)
    if np.any(phi <= 0.0):
        raise ValueError("Cole-Hopf needs a strictly positive heat solution")
    if phi_x is None:
        phi_x = spectral_derivative(phi, 1, length)
    return -2.0 * nu * phi_x / phi


def cole_hopf(heat: SolutionBundle, nu: float) -> SolutionBundle:
    u = cole_hopf_field(heat.u, nu, heat.length)
    params = dict(heat.params)
    params["nu"] = nu
    return dataclasses.replace(heat, name="burgers", u=u, params=params)


def output_times(spec: PdeSpec, n_t: int, horizon: float) -> np.ndarray:
    """Integration times for the N_t output rows; nKdV rows sit at warped times."""
    if n_t < 1:
        raise ValueError(f"N_t must be at least 1, got {n_t}")
    grid = np.linspace(0.0, horizon, n_t) if n_t > 1 else np.zeros(1)
    if spec.name == "nkdv":
        return nkdv_time_map(grid, spec.params["t0"])
    return grid


def _integrate(spec: PdeSpec, u0: np.ndarray, times: np.ndarray, length: float, dt: float) -> np.ndarray:
    if spec.name == "burgers":
        nu = spec.params["nu"]
        if abs(u0.mean()) > 1e-10 * max(1.0, np.abs(u0).max()):
            raise ValueError("Burgers initial condition must have zero mean on the periodic domain")
        psi = -spectral_antiderivative(u0, length) / (2.0 * nu)
        phi = evolve_heat(np.exp(psi - psi.max()), times, nu, length, dt)
        return cole_hopf_field(phi, nu, length)
    return integrate_stiff(spec, u0, times, length, dt)


def evolve(
    spec: PdeSpec,
    u0: np.ndarray,
    n_t: int,
    horizon: Optional[float] = None,
    length: Optional[float] = None,
    seed: int = 0,
    dt_max: float = DEFAULT_DT,
) -> SolutionBundle:
    """Integrate ``u0`` and sample N_t uniform output rows over [0, horizon].

    A blow-up is retried with the time step halved, up to three attempts.
    """
    u0 = np.asarray(u0, dtype=np.float64)
    check_even(u0.size)
    horizon = spec.horizon if horizon is None else float(horizon)
    length = spec.length if length is None else float(length)
    times = output_times(spec, n_t, horizon)

    for attempt in Retrying(
        stop=stop_after_attempt(MAX_ATTEMPTS),
        retry=retry_if_exception_type(BlowUpError),
        before_sleep=before_sleep_log(logger, logging.WARNING),
        reraise=True,
    ):
        with attempt:
            dt = dt_max / 2 ** (attempt.retry_state.attempt_number - 1)
            rows = _integrate(spec, u0, times, length, dt)

    return SolutionBundle(
        name=spec.name,
        length=length,
        horizon=horizon,
        u=rows,
        seed=seed,
        params=dict(spec.params),
    )


def generate_bundle(
    eq: str,
    seed: int,
    n_x: int,
    n_t: int,
    length: Optional[float] = None,
    horizon: Optional[float] = None,
    params: Optional[Dict[str, float]] = None,
    n_modes: int = 10,
    dt_max: float = DEFAULT_DT,
    amplitude: Optional[float] = None,
    max_wavenumber: Optional[int] = None,
) -> SolutionBundle:
    """One bundle from a random Fourier initial condition.

    Mode amplitudes are drawn from [-amplitude, amplitude] and wavenumbers from
    1..max_wavenumber (capped at N_x/8). For Burgers the series is the log of
    the heat potential and ``amplitude`` defaults to BURGERS_POTENTIAL_AMPLITUDE.
    """
    spec = get_spec(eq, **(params or {}))
    length = spec.length if length is None else float(length)
    spec = dataclasses.replace(spec, length=length)
    if amplitude is None:
        amplitude = BURGERS_POTENTIAL_AMPLITUDE if spec.name == "burgers" else IC_AMPLITUDE
    max_l = min(MAX_WAVENUMBER if max_wavenumber is None else max_wavenumber, n_x // 8)
    rng = np.random.default_rng(seed)
    row = random_fourier_ic(
        seed,
        n_x,
        length,
        n_modes,
        amplitude_range=(-amplitude, amplitude),
        wavenumber_range=(1, max_l),
        rng=rng,
    )
    if spec.name == "burgers":
        # the random series is log(phi0); u0 follows from Cole-Hopf
        row = -2.0 * spec.params["nu"] * spectral_derivative(row, 1, length)
    bundle = evolve(spec, row, n_t, horizon=horizon, length=length, seed=seed, dt_max=dt_max)
    logger.info("Generated %s bundle seed=%d (%dx%d)", eq, seed, n_t, n_x)
    return bundle


def _generate_one(job: dict) -> str:
    path = job.pop("path")
    write_bundle(generate_bundle(**job), path)
    return path


def generate_dataset(
    eq: str,
    count: int,
    n_x: int,
    n_t: int,
    out_dir: Union[str, Path],
    seed: int = 0,
    jobs: int = 1,
    **kwargs,
) -> List[Path]:
    """Write bundles ``bundle_{i:05d}`` with seeds ``seed + i`` under ``out_dir``."""
    if count < 1:
        raise ValueError(f"bundle count must be positive, got {count}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    work = [
        dict(eq=eq, seed=seed + i, n_x=n_x, n_t=n_t, path=str(out_dir / f"bundle_{i:05d}"), **kwargs)
        for i in range(count)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            paths = list(pool.map(_generate_one, work))
    else:
        paths = [_generate_one(job) for job in work]
    logger.info("Wrote %d %s bundles to %s", count, eq, out_dir)
    return [Path(p) for p in paths]
