"""Adam optimizer over flat parameter vectors."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

logger = logging.getLogger(__name__)


class OptimizerError(RuntimeError):
    """Raised when an update would consume a non-finite gradient."""


@dataclass(frozen=True)
class AdamState:
    step: int
    m: np.ndarray
    v: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(step=0, m=np.zeros(size), v=np.zeros(size))


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float
) -> Tuple[np.ndarray, AdamState]:
    """Return updated parameters and state; inputs are left untouched."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise OptimizerError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}"
        )
    bad = np.flatnonzero(~np.isfinite(grads))
    if bad.size:
        raise OptimizerError(f"non-finite gradient at parameter index {int(bad[0])}")

    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** step)
    v_hat = v / (1.0 - state.beta2 ** step)
    updated = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return updated, replace(state, step=step, m=m, v=v)
