"""Compare learned generators with the ground-truth symmetries of an equation."""

from __future__ import annotations

import logging
from collections import OrderedDict
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from autodiff import tape as ad
from flow.generator_bank import GeneratorBank
from flow.integrator import flow_grid
from losses.objectives import (
    InnerProductContext,
    ZeroNormFieldError,
    field_norm,
    inner_product,
    interior_nodes,
    normalize_field,
    score_points,
)
from pde_suite.equations import (
    PdeSpec,
    REFERENCE_FIELDS,
    ground_truth_generators,
    push_forward,
    residual_terms,
)
from training.normalization import NormalizedBundle, Normalization, normalize_coordinates
from weno.scheme import weno_derivatives

__all__ = [
    "ZeroNormFieldError",
    "inner_product_matrix",
    "span_recovery_score",
    "match_slots",
    "approximate_symmetry_report",
    "evaluate_bank",
    "unit_field",
]

logger = logging.getLogger(__name__)

MATCH_THRESHOLD = 0.8
AS_RATIO = 3.0
AS_SCALES = (-0.4, -0.2, -0.1, 0.1, 0.2, 0.4)
CONTEXT_BUNDLES = 8
GRAM_RIDGE = 1e-9

FieldLike = Any


def _values(fieldlike: FieldLike, ctx: InnerProductContext) -> np.ndarray:
    if callable(fieldlike):
        return np.asarray(fieldlike(ctx.points), dtype=np.float64)
    return np.asarray(fieldlike, dtype=np.float64).reshape(-1, 3)


def _normalized(fields: Sequence[FieldLike], ctx: InnerProductContext, label: str) -> List[np.ndarray]:
    return [normalize_field(_values(f, ctx), ctx, f"{label} {i}") for i, f in enumerate(fields)]


def _gram(left: Sequence[np.ndarray], right: Sequence[np.ndarray], ctx: InnerProductContext) -> np.ndarray:
    return np.array([[float(inner_product(a, b, ctx)) for b in right] for a in left])


def inner_product_matrix(
    learned: Sequence[FieldLike], gt: Sequence[FieldLike], ctx: InnerProductContext
) -> np.ndarray:
    """M[a, k] = <h_a / |h_a|, L_k / |L_k|>; fields are callables or sampled (M, 3) values."""
    return _gram(_normalized(learned, ctx, "slot"), _normalized(gt, ctx, "ground truth"), ctx)


def span_recovery_score(
    learned: Sequence[FieldLike], gt: Sequence[FieldLike], ctx: InnerProductContext
) -> np.ndarray:
    """Norm of the projection of each normalized ground-truth field onto span(learned)."""
    basis = []
    for a, f in enumerate(learned):
        try:
            basis.append(normalize_field(_values(f, ctx), ctx, f"slot {a}"))
        except ZeroNormFieldError:
            logger.warning("slot %d is identically zero and does not contribute to the span", a)
    targets = _normalized(gt, ctx, "ground truth")
    if not basis:
        return np.zeros(len(targets))
    gram = _gram(basis, basis, ctx) + GRAM_RIDGE * np.eye(len(basis))
    cross = _gram(basis, targets, ctx)
    coeffs = np.linalg.solve(gram, cross)
    sq = np.einsum("ak,ak->k", cross, coeffs)
    return np.clip(np.sqrt(np.maximum(sq, 0.0)), 0.0, 1.0)


def match_slots(matrix: np.ndarray, threshold: float = MATCH_THRESHOLD) -> List[Tuple[int, int, float]]:
    """Greedy one-to-one (slot, gt, M) matches by decreasing |M|, keeping |M| >= threshold."""
    magnitude = np.abs(matrix)
    order = zip(*np.unravel_index(np.argsort(-magnitude, axis=None, kind="stable"), magnitude.shape))
    used_slots, used_gt, matches = set(), set(), []
    for a, k in order:
        if magnitude[a, k] < threshold:
            break
        if a in used_slots or k in used_gt:
            continue
        used_slots.add(int(a))
        used_gt.add(int(k))
        matches.append((int(a), int(k), float(matrix[a, k])))
    return matches


# approximate symmetries

def _full_grid_score(spec: PdeSpec, nb: NormalizedBundle, points: Any) -> float:
    rows, cols = interior_nodes(*nb.shape)
    return float(score_points(spec, points, rows, cols, nb.norm))


def term_magnitudes(spec: PdeSpec, nb: NormalizedBundle, points: np.ndarray) -> "OrderedDict[str, float]":
    """Sum over interior nodes of |term| for each named residual term."""
    rows, cols = interior_nodes(*nb.shape)
    x, t, u = points[..., 0], points[..., 1], points[..., 2]
    derivs = weno_derivatives(x, t, u, rows, cols, spec.required_derivatives)
    terms = residual_terms(spec, u[rows, cols], derivs, x[rows, cols], t[rows, cols], nb.norm)
    return OrderedDict((name, float(np.sum(np.abs(v)))) for name, v in terms.items())


def dominant_term(before: Mapping[str, float], after: Mapping[str, float]) -> Optional[str]:
    """Term whose magnitude ratio departs most from the median ratio in log scale."""
    logs = {}
    for name, b in before.items():
        a = after[name]
        if b > 0.0 and a > 0.0:
            logs[name] = float(np.log(a / b))
        elif b == 0.0 and a == 0.0:
            logs[name] = 0.0
    if not logs:
        return None
    centre = float(np.median(list(logs.values())))
    return max(logs, key=lambda name: abs(logs[name] - centre))


def approximate_symmetry_report(
    spec: PdeSpec,
    fields: Mapping[str, Callable[[np.ndarray], np.ndarray]],
    bundles: Sequence[NormalizedBundle],
    scales: Sequence[float] = AS_SCALES,
    n_steps: int = 16,
    ratio_bound: float = AS_RATIO,
) -> Dict[str, Dict[str, Any]]:
    """Residual ratios S(flow_s)/S(id) and the most-changed term for each field.

    A field is labelled ``approximate-symmetry`` when the ratio stays within
    ``ratio_bound`` at every scale and ``non-symmetry`` otherwise.
    """
    if not bundles:
        raise ValueError("approximate-symmetry check needs at least one bundle")
    baseline = sum(_full_grid_score(spec, nb, nb.points()) for nb in bundles)
    largest = max(scales, key=abs)
    report: Dict[str, Dict[str, Any]] = {}
    for label, field_fn in fields.items():
        ratios = {}
        for s in scales:
            flowed = sum(
                _full_grid_score(spec, nb, flow_grid(field_fn, nb.points(), s, n_steps)) for nb in bundles
            )
            ratios[f"{s:+g}"] = flowed / baseline if baseline > 0 else float("inf")
        before: Dict[str, float] = {}
        after: Dict[str, float] = {}
        for nb in bundles:
            b = term_magnitudes(spec, nb, nb.points())
            a = term_magnitudes(spec, nb, flow_grid(field_fn, nb.points(), largest, n_steps))
            for name in b:
                before[name] = before.get(name, 0.0) + b[name]
                after[name] = after.get(name, 0.0) + a[name]
        worst = max(ratios.values())
        report[label] = {
            "label": "approximate-symmetry" if worst <= ratio_bound else "non-symmetry",
            "ratios": ratios,
            "max_ratio": worst,
            "dominant_term": dominant_term(before, after),
        }
        logger.info("%s: max residual ratio %.3g, dominant term %s", label, worst, report[label]["dominant_term"])
    return report


def reference_field(name: str, norm: Optional[Normalization]) -> Callable[[np.ndarray], np.ndarray]:
    """A named closed-form field (e.g. ``u_scaling``) in normalized coordinates."""
    try:
        return push_forward(REFERENCE_FIELDS[name], norm)
    except KeyError:
        raise ValueError(f"unknown reference field {name!r}; expected one of {sorted(REFERENCE_FIELDS)}") from None


def unit_field(
    fn: Callable[[np.ndarray], np.ndarray], ctx: InnerProductContext, label: str = "field"
) -> Callable[[np.ndarray], np.ndarray]:
    """``fn`` divided by its norm on ``ctx``.

    A flow of a unit field by s moves the normalized data by about s, whatever
    units the closed form was written in.
    """
    scale = float(ad.value_of(field_norm(_values(fn, ctx), ctx, label)))

    def scaled(points: np.ndarray) -> np.ndarray:
        return np.asarray(fn(points), dtype=np.float64) / scale

    return scaled


# whole-bank evaluation

def quadrature_context(bundles: Sequence[NormalizedBundle], count: int = CONTEXT_BUNDLES) -> InnerProductContext:
    return InnerProductContext(np.concatenate([nb.points().reshape(-1, 3) for nb in bundles[:count]]))


def evaluate_bank(
    spec: PdeSpec,
    bank: GeneratorBank,
    theta: np.ndarray,
    norm: Normalization,
    bundles: Sequence[Any],
    with_as: bool = True,
    scales: Sequence[float] = AS_SCALES,
) -> Dict[str, Any]:
    """Inner-product matrix, span recovery, matches and per-slot labels as a JSON-ready dict."""
    normalized = [
        b if isinstance(b, NormalizedBundle) else normalize_coordinates(b, norm)[0] for b in bundles
    ]
    ctx = quadrature_context(normalized)
    layers = bank.layers(np.asarray(theta, dtype=np.float64))
    learned = [bank.eval(layers, a, ctx.points) for a in range(bank.n_sym)]
    gt = ground_truth_generators(spec, normalized[0].norm)
    matrix = inner_product_matrix(learned, gt, ctx)
    span = span_recovery_score(learned, gt, ctx)
    matches = match_slots(matrix)
    matched = {a: k for a, k, _ in matches}

    slots: List[Dict[str, Any]] = []
    unmatched = {
        f"slot {a}": bank.field(layers, a) for a in range(bank.n_sym) if a not in matched
    }
    as_report = (
        approximate_symmetry_report(spec, unmatched, normalized[:CONTEXT_BUNDLES], scales)
        if with_as and unmatched
        else {}
    )
    for a in range(bank.n_sym):
        if a in matched:
            slots.append({"slot": a, "label": "lie-point-symmetry", "gt": gt[matched[a]].name})
            continue
        entry = {"slot": a, "label": "unclassified"}
        entry.update(as_report.get(f"slot {a}", {}))
        slots.append(entry)

    return {
        "equation": spec.name,
        "gt_names": [g.name for g in gt],
        "inner_product_matrix": matrix.tolist(),
        "span_recovery": span.tolist(),
        "matches": [{"slot": a, "gt": k, "value": v} for a, k, v in matches],
        "recovered_count": len(matches),
        "slots": slots,
    }
