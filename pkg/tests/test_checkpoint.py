import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from flow.checkpoint import HEADER_NAME, WEIGHTS_NAME, CheckpointFormatError, load_checkpoint, save_checkpoint
from flow.generator_bank import GeneratorBank
from training.normalization import Normalization


@pytest.fixture
def saved(tmp_path):
    bank = GeneratorBank(n_sym=2, trunk_width=8, head_width=4)
    theta = bank.init_params(0)
    norm = Normalization(length=64.0, horizon=40.0, u_offset=0.1, u_scale=2.0)
    path = save_checkpoint(tmp_path / "ckpt", bank, theta, "kdv", normalization=norm, epoch=7)
    return path, bank, theta, norm


def test_save_then_load(saved):
    path, bank, theta, norm = saved
    loaded, weights, header = load_checkpoint(path)
    np.testing.assert_array_equal(weights, theta)
    assert loaded.size == bank.size and loaded.n_sym == 2
    assert header.equation == "kdv" and header.epoch == 7
    assert header.normalization == norm


def test_theta_shape_is_checked(tmp_path):
    bank = GeneratorBank(n_sym=1, trunk_width=4, head_width=2)
    with pytest.raises(CheckpointFormatError):
        save_checkpoint(tmp_path / "bad", bank, np.zeros(3), "kdv")


def test_truncated_weights_are_rejected(saved):
    path = saved[0]
    weights = path / WEIGHTS_NAME
    weights.write_bytes(weights.read_bytes()[:-16])
    with pytest.raises(CheckpointFormatError, match="bytes"):
        load_checkpoint(path)


def test_layer_table_must_match(saved):
    path = saved[0]
    header = json.loads((path / HEADER_NAME).read_text(encoding="utf-8"))
    header["layers"][0][1] = [3, 9]
    (path / HEADER_NAME).write_text(json.dumps(header), encoding="utf-8")
    with pytest.raises(CheckpointFormatError, match="layer table"):
        load_checkpoint(path)


def test_missing_header(tmp_path):
    with pytest.raises(CheckpointFormatError, match="does not exist"):
        load_checkpoint(tmp_path)
