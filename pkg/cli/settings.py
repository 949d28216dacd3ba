"""Process defaults from ``.env`` and ``key = value`` config files."""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Dict, Optional, Union

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
ENV_LOG_LEVEL = "SYMMFLOW_LOG_LEVEL"
ENV_JOBS = "SYMMFLOW_JOBS"
ENV_CONFIG = "SYMMFLOW_CONFIG"


class ConfigFileError(ValueError):
    pass


def load_environment() -> None:
    """Load ``.env`` from the working directory without overriding the real environment."""
    load_dotenv(override=False)


def default_log_level() -> str:
    return os.getenv(ENV_LOG_LEVEL, "INFO").upper()


def default_jobs() -> int:
    raw = os.getenv(ENV_JOBS, "1")
    try:
        jobs = int(raw)
    except ValueError:
        raise ConfigFileError(f"{ENV_JOBS} must be an integer, got {raw!r}") from None
    if jobs < 1:
        raise ConfigFileError(f"{ENV_JOBS} must be at least 1, got {jobs}")
    return jobs


def default_config_path() -> Optional[str]:
    return os.getenv(ENV_CONFIG) or None


def configure_logging(level: Optional[str] = None) -> None:
    level = (level or default_log_level()).upper()
    if not isinstance(logging.getLevelName(level), int):
        raise ConfigFileError(f"unknown log level {level!r}")
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, keys are long flag names without dashes.

    Values stay strings; argparse converts them with the flag's own type.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigFileError(f"config file {path} does not exist")
    values: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigFileError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise ConfigFileError(f"{path}:{lineno}: empty key")
            values[key.replace("-", "_")] = value.strip("\"'")
    logger.debug("Read %d settings from %s", len(values), path)
    return values
