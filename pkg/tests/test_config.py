import sys
from pathlib import Path

import pytest
from pydantic import ValidationError

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from training.config import PRESETS, TrainConfig, preset


def test_paper_preset_defaults():
    cfg = PRESETS["paper"]
    assert (cfg.epochs, cfg.batch_size, cfg.n_sym) == (50, 4, 4)
    assert (cfg.lr, cfg.lr_decayed, cfg.decay_epoch) == (1e-4, 1e-5, 25)
    assert (cfg.sigma, cfg.tau) == (0.4, 3.0)
    assert (cfg.w_sym, cfg.w_ortho, cfg.w_lips) == (1.0, 3.0, 1.0)
    assert cfg.residual_points is None


def test_desk_preset_is_smaller():
    desk = PRESETS["desk"]
    assert desk.dataset_size < PRESETS["paper"].dataset_size
    assert desk.residual_points == 1024


def test_schedule():
    cfg = TrainConfig(epochs=50, decay_epoch=25, sobolev_epochs=10)
    assert cfg.lr_at(25) == 1e-4 and cfg.lr_at(26) == 1e-5
    assert not cfg.sobolev_active(40) and cfg.sobolev_active(41)


def test_overrides_move_decay_to_midpoint():
    cfg = preset("paper", epochs=10, lr=None)
    assert cfg.decay_epoch == 5 and cfg.lr == 1e-4
    assert preset("paper", epochs=10, decay_epoch=8).decay_epoch == 8


def test_invalid_configs():
    with pytest.raises(ValueError, match="unknown preset"):
        preset("huge")
    with pytest.raises(ValidationError):
        TrainConfig(epochs=4, decay_epoch=9)
    with pytest.raises(ValidationError):
        preset("desk", sigma=-1.0)


def test_derived_weight_and_flow_settings():
    cfg = preset("desk", w_sym=None, tau=2.0)
    assert cfg.loss_weights().tau == 2.0
    assert cfg.flow_config().n_steps == cfg.n_steps
