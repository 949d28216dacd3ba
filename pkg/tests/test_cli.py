import json
import sys
from pathlib import Path
from unittest.mock import MagicMock

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from cli import settings
from cli.main import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main
from datagen import solver
from datagen.bundle_io import list_bundles, write_bundle
from flow.checkpoint import save_checkpoint
from flow.generator_bank import GeneratorBank
from proptest import properties
from training import trainer
from training.normalization import fit_normalization


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in (settings.ENV_CONFIG, settings.ENV_JOBS, settings.ENV_LOG_LEVEL):
        monkeypatch.delenv(name, raising=False)


def gen_args(out):
    return ["gen", "--eq", "kdv", "--n", "2", "--nx", "32", "--nt", "3", "--horizon", "0.5", "--out", str(out)]


def test_gen_writes_bundles(tmp_path, capsys):
    assert main(gen_args(tmp_path / "data")) == EXIT_OK
    assert [p.name for p in list_bundles(tmp_path / "data")] == ["bundle_00000", "bundle_00001"]
    assert "Wrote 2 bundles" in capsys.readouterr().out


def test_usage_errors_exit_one(tmp_path):
    assert main(["gen", "--n", "2", "--out", str(tmp_path)]) == EXIT_VALIDATION
    assert main(["gen", "--eq", "heat", "--out", str(tmp_path)]) == EXIT_VALIDATION
    assert main([]) == EXIT_VALIDATION


def test_invalid_values_exit_one(tmp_path):
    args = gen_args(tmp_path)
    args[args.index("--nx") + 1] = "33"
    assert main(args) == EXIT_VALIDATION


def test_unexpected_failures_exit_two(tmp_path, monkeypatch):
    monkeypatch.setattr(solver, "generate_dataset", MagicMock(side_effect=RuntimeError("disk on fire")))
    assert main(gen_args(tmp_path)) == EXIT_RUNTIME


def test_config_file_supplies_flags(tmp_path):
    conf = tmp_path / "gen.conf"
    conf.write_text(
        f"eq = kdv\nn = 1\nnx = 32\nnt = 3\nhorizon = 0.5\nout = {tmp_path / 'data'}\n", encoding="utf-8"
    )
    assert main(["gen", "--config", str(conf)]) == EXIT_OK
    assert len(list_bundles(tmp_path / "data")) == 1
    assert main(["gen", "--config", str(conf), "--n", "2"]) == EXIT_OK
    assert len(list_bundles(tmp_path / "data")) == 2


def test_config_file_unknown_key(tmp_path, monkeypatch):
    conf = tmp_path / "gen.conf"
    conf.write_text("eq = kdv\nlearning_rate = 3\n", encoding="utf-8")
    monkeypatch.setenv(settings.ENV_CONFIG, str(conf))
    assert main(gen_args(tmp_path / "data")) == EXIT_VALIDATION


def test_bad_jobs_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(settings.ENV_JOBS, "zero")
    assert main(gen_args(tmp_path)) == EXIT_VALIDATION


def test_train_passes_overrides(tmp_path, monkeypatch):
    fake = MagicMock(return_value=MagicMock(log=[{"total": 1.5}], checkpoint=tmp_path / "checkpoint"))
    monkeypatch.setattr(trainer, "train", fake)
    code = main([
        "train", "--eq", "kdv", "--data", str(tmp_path), "--out", str(tmp_path / "run"),
        "--preset", "desk", "--epochs", "4", "--nsym", "2", "--wortho", "10",
    ])
    assert code == EXIT_OK
    config, data, out = fake.call_args.args
    assert (config.epochs, config.decay_epoch, config.n_sym, config.w_ortho) == (4, 2, 2, 10.0)
    assert config.residual_points == 1024
    assert data == str(tmp_path) and out == str(tmp_path / "run")


@pytest.fixture
def eval_inputs(tmp_path, tiny_dataset):
    for i, b in enumerate(tiny_dataset):
        write_bundle(b, tmp_path / "data" / f"bundle_{i:05d}")
    bank = GeneratorBank(n_sym=2, trunk_width=8, head_width=4, init_noise=0.3)
    save_checkpoint(tmp_path / "ckpt", bank, bank.init_params(0), "kdv", fit_normalization(tiny_dataset))
    return tmp_path


def test_eval_then_plot(eval_inputs):
    root = eval_inputs
    code = main([
        "eval", "--ckpt", str(root / "ckpt"), "--eq", "kdv", "--data", str(root / "data"),
        "--out", str(root / "eval"), "--skip-as",
    ])
    assert code == EXIT_OK
    report = json.loads((root / "eval" / "report.json").read_text(encoding="utf-8"))
    assert report["equation"] == "kdv"
    assert main(["plot", "--report", str(root / "eval"), "--out", str(root / "figs")]) == EXIT_OK
    assert (root / "figs" / "heatmap.svg").exists() and (root / "figs" / "quiver.svg").exists()


def test_eval_refuses_other_equations(eval_inputs):
    root = eval_inputs
    code = main([
        "eval", "--ckpt", str(root / "ckpt"), "--eq", "ks", "--data", str(root / "data"),
        "--out", str(root / "eval"),
    ])
    assert code == EXIT_VALIDATION


def test_augment_with_ground_truth(eval_inputs):
    root = eval_inputs
    code = main([
        "augment", "--data", str(root / "data"), "--gen", "gt", "--eq", "kdv",
        "--out", str(root / "aug"), "--slots", "0", "--sigma", "0.1",
    ])
    assert code == EXIT_OK
    assert len(list_bundles(root / "aug")) == 3


def test_selftest_exit_code_follows_the_suite(tmp_path, monkeypatch):
    failing = properties.SuiteReport("fast", 0, [
        properties.PropertyResult("demo", "fast", False, 2.0, 1.0, "max", "too big"),
    ])
    monkeypatch.setattr(properties, "run_suite", MagicMock(return_value=failing))
    assert main(["selftest"]) == EXIT_RUNTIME
    passing = properties.SuiteReport("fast", 0, [
        properties.PropertyResult("demo", "fast", True, 0.5, 1.0, "max"),
    ])
    monkeypatch.setattr(properties, "run_suite", MagicMock(return_value=passing))
    assert main(["selftest", "--tier", "full", "--jobs", "2"]) == EXIT_OK
    assert properties.run_suite.call_args.kwargs == {"seed": 0, "out": None, "jobs": 2}
