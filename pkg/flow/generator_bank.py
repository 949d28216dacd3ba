"""Shared-trunk MLP producing N_sym candidate vector fields on (x, t, u)."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, Field

from autodiff import tape as ad

logger = logging.getLogger(__name__)


class FlowConfig(BaseModel):
    sigma: float = Field(0.4, gt=0.0)
    n_steps: int = Field(16, ge=1)


@dataclass(frozen=True)
class LayerSpec:
    name: str
    shape: Tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


class GeneratorBank:
    """Two shared swish layers, then a width-``head_width`` swish layer and a
    linear 3-output layer per slot.

    Parameters live in one flat vector ``theta`` laid out in ``self.layout``
    order; weights are stored (in, out).
    """

    def __init__(
        self,
        n_sym: int = 4,
        trunk_width: int = 256,
        head_width: int = 32,
        init_noise: float = 1e-3,
    ) -> None:
        if n_sym < 1:
            raise ValueError(f"need at least one slot, got n_sym={n_sym}")
        self.n_sym = n_sym
        self.trunk_width = trunk_width
        self.head_width = head_width
        self.init_noise = init_noise
        w, h = trunk_width, head_width
        layout = [
            LayerSpec("trunk.0.weight", (3, w)),
            LayerSpec("trunk.0.bias", (w,)),
            LayerSpec("trunk.1.weight", (w, w)),
            LayerSpec("trunk.1.bias", (w,)),
        ]
        for a in range(n_sym):
            layout += [
                LayerSpec(f"head.{a}.0.weight", (w, h)),
                LayerSpec(f"head.{a}.0.bias", (h,)),
                LayerSpec(f"head.{a}.1.weight", (h, 3)),
                LayerSpec(f"head.{a}.1.bias", (3,)),
            ]
        self.layout: List[LayerSpec] = layout
        self.offsets: Dict[str, Tuple[int, int]] = {}
        start = 0
        for spec in layout:
            self.offsets[spec.name] = (start, start + spec.size)
            start += spec.size
        self.size = start

    def init_params(self, seed: int = 0) -> np.ndarray:
        """Fan-in uniform init; each slot's output layer starts as ``init_noise`` noise."""
        rng = np.random.default_rng(seed)
        theta = np.empty(self.size)
        for spec in self.layout:
            lo, hi = self.offsets[spec.name]
            if spec.name.startswith("head") and ".1." in spec.name:
                theta[lo:hi] = rng.normal(0.0, 1.0, spec.size) * self.init_noise
                continue
            fan_in = spec.shape[0] if spec.name.endswith("weight") else self._fan_in_of_bias(spec.name)
            bound = 1.0 / np.sqrt(fan_in)
            theta[lo:hi] = rng.uniform(-bound, bound, spec.size)
        return theta

    def _fan_in_of_bias(self, name: str) -> int:
        return self.layer_shape(name.replace("bias", "weight"))[0]

    def layer_shape(self, name: str) -> Tuple[int, ...]:
        for spec in self.layout:
            if spec.name == name:
                return spec.shape
        raise KeyError(name)

    def layers(self, theta: Any) -> Dict[str, Any]:
        """Unpack ``theta`` (array or tape variable) into named layer views."""
        size = ad.value_of(theta).size
        if size != self.size:
            raise ValueError(f"parameter vector has {size} entries, bank expects {self.size}")
        return {
            spec.name: ad.reshape(ad.getitem(theta, slice(*self.offsets[spec.name])), spec.shape)
            for spec in self.layout
        }

    def trunk(self, layers: Dict[str, Any], points: Any) -> Any:
        hidden = ad.swish(ad.matmul(points, layers["trunk.0.weight"]) + layers["trunk.0.bias"])
        return ad.swish(ad.matmul(hidden, layers["trunk.1.weight"]) + layers["trunk.1.bias"])

    def head(self, layers: Dict[str, Any], slot: int, hidden: Any) -> Any:
        self._check_slot(slot)
        p = f"head.{slot}"
        inner = ad.swish(ad.matmul(hidden, layers[f"{p}.0.weight"]) + layers[f"{p}.0.bias"])
        return ad.matmul(inner, layers[f"{p}.1.weight"]) + layers[f"{p}.1.bias"]

    def eval(self, layers: Dict[str, Any], slot: int, points: Any) -> Any:
        return self.head(layers, slot, self.trunk(layers, points))

    def eval_all(self, layers: Dict[str, Any], points: Any) -> List[Any]:
        hidden = self.trunk(layers, points)
        return [self.head(layers, a, hidden) for a in range(self.n_sym)]

    def field(self, layers: Dict[str, Any], slot: int):
        self._check_slot(slot)
        return lambda points: self.eval(layers, slot, points)

    def _check_slot(self, slot: int) -> None:
        if not 0 <= slot < self.n_sym:
            raise IndexError(f"slot {slot} out of range for a bank with {self.n_sym} slots")


def eval_generator(bank: GeneratorBank, theta: Any, slot: int, points: Any) -> Any:
    """Evaluate slot ``slot`` on points of shape (..., 3); returns the same shape."""
    shape = ad.value_of(points).shape
    if shape[-1] != 3:
        raise ValueError(f"points must end in a length-3 axis, got shape {shape}")
    flat = ad.reshape(points, (-1, 3))
    out = bank.eval(bank.layers(theta), slot, flat)
    return ad.reshape(out, shape)
