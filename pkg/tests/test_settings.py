import logging
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from cli import settings
from cli.settings import ConfigFileError, configure_logging, default_jobs, read_config_file


def test_config_file_parsing(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text(
        "# desk run\n"
        "eq = kdv\n"
        "\n"
        "residual-points = 512   # per bundle\n"
        "out = \"runs/kdv\"\n",
        encoding="utf-8",
    )
    assert read_config_file(path) == {"eq": "kdv", "residual_points": "512", "out": "runs/kdv"}


def test_config_file_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.conf"
    path.write_text("eq = kdv\nepochs 10\n", encoding="utf-8")
    with pytest.raises(ConfigFileError, match="bad.conf:2"):
        read_config_file(path)
    with pytest.raises(ConfigFileError, match="does not exist"):
        read_config_file(tmp_path / "missing.conf")


def test_jobs_from_environment(monkeypatch):
    monkeypatch.delenv(settings.ENV_JOBS, raising=False)
    assert default_jobs() == 1
    monkeypatch.setenv(settings.ENV_JOBS, "4")
    assert default_jobs() == 4
    monkeypatch.setenv(settings.ENV_JOBS, "many")
    with pytest.raises(ConfigFileError, match="integer"):
        default_jobs()
    monkeypatch.setenv(settings.ENV_JOBS, "0")
    with pytest.raises(ConfigFileError):
        default_jobs()


def test_logging_levels(monkeypatch):
    monkeypatch.setenv(settings.ENV_LOG_LEVEL, "warning")
    configure_logging()
    assert logging.getLogger().level == logging.WARNING
    configure_logging("debug")
    assert logging.getLogger().level == logging.DEBUG
    with pytest.raises(ConfigFileError, match="log level"):
        configure_logging("chatty")
    configure_logging("INFO")


def test_config_path_from_environment(monkeypatch):
    monkeypatch.delenv(settings.ENV_CONFIG, raising=False)
    assert settings.default_config_path() is None
    monkeypatch.setenv(settings.ENV_CONFIG, "/tmp/run.conf")
    assert settings.default_config_path() == "/tmp/run.conf"
