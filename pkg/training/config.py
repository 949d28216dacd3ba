"""Training configuration and the ``paper`` / ``desk`` presets."""

from __future__ import annotations

from typing import Any, Dict, Optional

from pydantic import BaseModel, Field, model_validator

from flow.generator_bank import FlowConfig
from losses.objectives import LossWeights


class TrainConfig(BaseModel):
    equation: str = "kdv"
    epochs: int = Field(50, ge=1)
    batch_size: int = Field(4, ge=1)
    lr: float = Field(1e-4, gt=0.0)
    lr_decayed: float = Field(1e-5, gt=0.0)
    decay_epoch: int = Field(25, ge=0)
    dataset_size: int = Field(1024, ge=1)
    n_x: int = Field(256, ge=8)
    n_t: int = Field(140, ge=3)
    n_sym: int = Field(4, ge=1)
    sigma: float = Field(0.4, gt=0.0)
    tau: float = Field(3.0, gt=0.0)
    w_sym: float = Field(1.0, ge=0.0)
    w_ortho: float = Field(3.0, ge=0.0)
    w_lips: float = Field(1.0, ge=0.0)
    w_sobolev: float = Field(1.0, ge=0.0)
    sobolev_epochs: int = Field(10, ge=0)
    n_steps: int = Field(16, ge=1)
    # None scores every interior node; otherwise about this many per bundle per step
    residual_points: Optional[int] = Field(None, ge=1)
    trunk_width: int = Field(256, ge=1)
    head_width: int = Field(32, ge=1)
    init_noise: float = Field(1e-3, ge=0.0)
    seed: int = 0

    @model_validator(mode="after")
    def _schedule_covers_epochs(self) -> "TrainConfig":
        if self.decay_epoch > self.epochs:
            raise ValueError(
                f"decay_epoch {self.decay_epoch} is past the last epoch {self.epochs}"
            )
        return self

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 1-based ``epoch``."""
        return self.lr if epoch <= self.decay_epoch else self.lr_decayed

    def sobolev_active(self, epoch: int) -> bool:
        return epoch > self.epochs - self.sobolev_epochs

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            w_sym=self.w_sym,
            w_ortho=self.w_ortho,
            w_lips=self.w_lips,
            w_sobolev=self.w_sobolev,
            tau=self.tau,
            sigma=self.sigma,
            n_sym=self.n_sym,
            sobolev_epochs=self.sobolev_epochs,
        )

    def flow_config(self) -> FlowConfig:
        return FlowConfig(sigma=self.sigma, n_steps=self.n_steps)


PRESETS: Dict[str, TrainConfig] = {
    "paper": TrainConfig(),
    "desk": TrainConfig(
        dataset_size=64,
        n_x=128,
        n_t=70,
        epochs=30,
        # 10x the TrainConfig defaults; see "Desk learning rate" in DESIGN.md
        lr=1e-3,
        lr_decayed=1e-4,
        decay_epoch=15,
        residual_points=1024,
    ),
}


def preset(name: str, **overrides: Any) -> TrainConfig:
    """Preset ``name`` with ``overrides`` applied; ``None`` overrides are ignored.

    A changed epoch count moves the decay boundary to its midpoint unless
    ``decay_epoch`` is overridden as well.
    """
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None
    values = base.model_dump()
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if "epochs" in overrides and "decay_epoch" not in overrides:
        overrides["decay_epoch"] = overrides["epochs"] // 2
    values.update(overrides)
    return TrainConfig.model_validate(values)
