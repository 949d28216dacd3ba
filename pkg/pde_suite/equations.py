"""Equation registry for the 1D evolution equations.

Residuals, the derivative orders each one needs, the ground-truth Lie point
symmetry generators and the nKdV time warp all live here.
"""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from autodiff import tape as ad

if TYPE_CHECKING:
    from training.normalization import Normalization

logger = logging.getLogger(__name__)

# derivative multi-index: (order in x, order in t)
MultiIndex = Tuple[int, int]
U_T: MultiIndex = (0, 1)
U_X: MultiIndex = (1, 0)
U_XX: MultiIndex = (2, 0)
U_XXX: MultiIndex = (3, 0)
U_XXXX: MultiIndex = (4, 0)


class UnknownEquationError(ValueError):
    pass


class MissingDerivativeError(ValueError):
    pass


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class PdeSpec:
    name: str
    length: float
    horizon: float
    max_x_order: int
    gt_count: int
    params: Mapping[str, float] = field(default_factory=dict)

    @property
    def required_derivatives(self) -> Tuple[MultiIndex, ...]:
        return REQUIRED[self.name]

    def with_params(self, **overrides: float) -> "PdeSpec":
        merged = dict(self.params)
        merged.update(overrides)
        return PdeSpec(self.name, self.length, self.horizon, self.max_x_order, self.gt_count, merged)


@dataclass(frozen=True)
class GeneratorField:
    """Closed-form vector field (x, t, u) -> (xi_x, xi_t, mu) on (M, 3) point arrays."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.fn(np.asarray(points, dtype=np.float64))


BURGERS_NU = 0.01
KDV_LENGTH = 64.0
KDV_HORIZON = 40.0
NKDV_HORIZON = KDV_HORIZON / (math.e - 1.0)

EQUATIONS: Dict[str, PdeSpec] = {
    "kdv": PdeSpec("kdv", KDV_LENGTH, KDV_HORIZON, 3, 3),
    "ks": PdeSpec("ks", 64.0, 40.0, 4, 3),
    "burgers": PdeSpec("burgers", 16.0, 10.0, 2, 3, {"nu": BURGERS_NU}),
    # t0 = 1.0 in units of the nKdV horizon, so t(T_hat) equals the KdV horizon
    "nkdv": PdeSpec("nkdv", KDV_LENGTH, NKDV_HORIZON, 3, 3, {"t0": NKDV_HORIZON}),
    "ckdv": PdeSpec("ckdv", KDV_LENGTH, KDV_HORIZON, 3, 2),
}

REQUIRED: Dict[str, Tuple[MultiIndex, ...]] = {
    "kdv": (U_T, U_X, U_XXX),
    "nkdv": (U_T, U_X, U_XXX),
    "ckdv": (U_T, U_X, U_XXX),
    "ks": (U_T, U_X, U_XX, U_XXXX),
    "burgers": (U_T, U_X, U_XX),
}


def get_spec(name: str, **overrides: float) -> PdeSpec:
    try:
        spec = EQUATIONS[name]
    except KeyError:
        raise UnknownEquationError(
            f"unknown equation {name!r}; expected one of {sorted(EQUATIONS)}"
        ) from None
    return spec.with_params(**overrides) if overrides else spec


def nkdv_time_map(t_hat: Any, t0: float) -> Any:
    """Warped time t = t0 (exp(t_hat / t0) - 1)."""
    if t0 <= 0:
        raise DomainError(f"t0 must be positive, got {t0}")
    return t0 * np.expm1(np.asarray(t_hat, dtype=np.float64) / t0)


def nkdv_time_map_inverse(t: Any, t0: float) -> Any:
    """Inverse warp t_hat = t0 log(1 + t / t0), defined for t > -t0."""
    if t0 <= 0:
        raise DomainError(f"t0 must be positive, got {t0}")
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= -t0):
        raise DomainError(f"inverse time map needs t > -t0 = {-t0}")
    return t0 * np.log1p(t / t0)


def _to_physical(
    u: Any, derivs: Mapping[MultiIndex, Any], x: Any, t: Any, norm: Optional["Normalization"]
) -> Tuple[Any, Dict[MultiIndex, Any], Any, Any]:
    if norm is None:
        return u, dict(derivs), x, t
    amplitude = 1.0 / norm.u_scale
    physical = {
        (i, j): d * (amplitude / (norm.length ** i * norm.horizon ** j))
        for (i, j), d in derivs.items()
    }
    return (
        u * amplitude + norm.u_offset,
        physical,
        x * norm.length,
        t * norm.horizon + norm.t_origin,
    )


def _need(derivs: Mapping[MultiIndex, Any], key: MultiIndex) -> Any:
    try:
        return derivs[key]
    except KeyError:
        raise MissingDerivativeError(f"residual needs derivative {key} (x-order, t-order)") from None


def residual_terms(
    spec: PdeSpec,
    u: Any,
    derivs: Mapping[MultiIndex, Any],
    x: Any,
    t: Any,
    norm: Optional["Normalization"] = None,
) -> "OrderedDict[str, Any]":
    """Named additive terms of the residual, pointwise.

    With ``norm`` given, ``u``, ``derivs``, ``x`` and ``t`` are in normalized
    coordinates and the chain-rule factors are applied here. Works on plain
    arrays and on tape variables alike.
    """
    u, d, x, t = _to_physical(u, derivs, x, t, norm)
    terms: "OrderedDict[str, Any]" = OrderedDict()
    name = spec.name
    if name == "nkdv":
        terms["time"] = ad.exp(t * (-1.0 / spec.params["t0"])) * _need(d, U_T)
    elif name in EQUATIONS:
        terms["time"] = _need(d, U_T)
    else:
        raise UnknownEquationError(f"unknown equation {name!r}")
    terms["convection"] = u * _need(d, U_X)
    if name in ("kdv", "nkdv", "ckdv"):
        terms["dispersion"] = _need(d, U_XXX)
    if name == "ckdv":
        if np.any(ad.value_of(t) <= -1.0):
            raise DomainError("cKdV residual is undefined for t <= -1")
        terms["cylindrical"] = u / ((t + 1.0) * 2.0)
    if name == "ks":
        terms["diffusion"] = _need(d, U_XX)
        terms["hyperdiffusion"] = _need(d, U_XXXX)
    if name == "burgers":
        terms["diffusion"] = _need(d, U_XX) * (-spec.params["nu"])
    return terms


def residual(
    spec: PdeSpec,
    u: Any,
    derivs: Mapping[MultiIndex, Any],
    x: Any,
    t: Any,
    norm: Optional["Normalization"] = None,
) -> Any:
    total = None
    for term in residual_terms(spec, u, derivs, x, t, norm).values():
        total = term if total is None else total + term
    return total


# ground-truth generators, physical coordinates

def _columns(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    return points[:, 0], points[:, 1], points[:, 2]


def _field(xi_x: Callable, xi_t: Callable, mu: Callable) -> Callable[[np.ndarray], np.ndarray]:
    def fn(points: np.ndarray) -> np.ndarray:
        x, t, u = _columns(points)
        return np.stack(
            [np.broadcast_to(c(x, t, u), x.shape) for c in (xi_x, xi_t, mu)], axis=1
        ).astype(np.float64)

    return fn


_ZERO = lambda x, t, u: 0.0  # noqa: E731
_ONE = lambda x, t, u: 1.0  # noqa: E731

X_TRANSLATION = GeneratorField("x_translation", _field(_ONE, _ZERO, _ZERO))
T_TRANSLATION = GeneratorField("t_translation", _field(_ZERO, _ONE, _ZERO))
GALILEAN_BOOST = GeneratorField("galilean_boost", _field(lambda x, t, u: t, _ZERO, _ONE))
U_SHIFT = GeneratorField("u_shift", _field(_ZERO, _ZERO, _ONE))
U_SCALING = GeneratorField("u_scaling", _field(_ZERO, _ZERO, lambda x, t, u: u))

REFERENCE_FIELDS: Dict[str, GeneratorField] = {
    f.name: f for f in (X_TRANSLATION, T_TRANSLATION, GALILEAN_BOOST, U_SHIFT, U_SCALING)
}


def _physical_generators(spec: PdeSpec) -> List[GeneratorField]:
    name = spec.name
    if name in ("kdv", "ks", "burgers"):
        return [X_TRANSLATION, T_TRANSLATION, GALILEAN_BOOST]
    if name == "nkdv":
        t0 = spec.params["t0"]
        return [
            X_TRANSLATION,
            GeneratorField("t_translation", _field(_ZERO, lambda x, t, u: np.exp(-t / t0), _ZERO)),
            GeneratorField(
                "galilean_boost", _field(lambda x, t, u: t0 * np.expm1(t / t0), _ZERO, _ONE)
            ),
        ]
    if name == "ckdv":
        return [
            X_TRANSLATION,
            GeneratorField(
                "cylindrical_boost",
                _field(lambda x, t, u: np.sqrt(t + 1.0), _ZERO, lambda x, t, u: 0.5 / np.sqrt(t + 1.0)),
            ),
        ]
    raise UnknownEquationError(f"unknown equation {name!r}")


def push_forward(gen: GeneratorField, norm: Optional["Normalization"]) -> GeneratorField:
    """Express a physical-coordinate field in normalized coordinates."""
    if norm is None:
        return gen

    def fn(points: np.ndarray) -> np.ndarray:
        physical = norm.to_physical_points(points)
        v = gen(physical)
        return np.stack(
            [v[:, 0] / norm.length, v[:, 1] / norm.horizon, v[:, 2] * norm.u_scale], axis=1
        )

    return GeneratorField(gen.name, fn)


def ground_truth_generators(
    spec: PdeSpec, norm: Optional["Normalization"] = None
) -> List[GeneratorField]:
    """Lie point symmetry generators of ``spec`` in data coordinates."""
    return [push_forward(g, norm) for g in _physical_generators(spec)]
