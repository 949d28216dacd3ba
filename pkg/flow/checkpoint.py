"""Generator-bank checkpoints: ``header.json`` plus a flat ``weights.f64``."""

from __future__ import annotations

import json
import logging
import os
import shutil
import tempfile
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from flow.generator_bank import GeneratorBank
from training.normalization import Normalization

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
HEADER_NAME = "header.json"
WEIGHTS_NAME = "weights.f64"
WEIGHTS_DTYPE = np.dtype("<f8")


class CheckpointFormatError(ValueError):
    pass


class CheckpointHeader(BaseModel):
    format_version: int = CHECKPOINT_VERSION
    equation: str
    n_sym: int
    trunk_width: int
    head_width: int
    layers: List[Tuple[str, List[int]]]
    normalization: Optional[Normalization] = None
    epoch: int = 0


def save_checkpoint(
    path: Union[str, Path],
    bank: GeneratorBank,
    theta: np.ndarray,
    equation: str,
    normalization: Optional[Normalization] = None,
    epoch: int = 0,
) -> Path:
    path = Path(path)
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (bank.size,):
        raise CheckpointFormatError(f"theta has shape {theta.shape}, bank expects ({bank.size},)")
    header = CheckpointHeader(
        equation=equation,
        n_sym=bank.n_sym,
        trunk_width=bank.trunk_width,
        head_width=bank.head_width,
        layers=[(spec.name, list(spec.shape)) for spec in bank.layout],
        normalization=normalization,
        epoch=epoch,
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{path.name}.", dir=path.parent))
    try:
        (staging / HEADER_NAME).write_text(header.model_dump_json(indent=2), encoding="utf-8")
        (staging / WEIGHTS_NAME).write_bytes(theta.astype(WEIGHTS_DTYPE).tobytes())
        if path.exists():
            shutil.rmtree(path)
        os.replace(staging, path)
    except Exception:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    logger.info("Saved checkpoint %s (epoch %d)", path, epoch)
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[GeneratorBank, np.ndarray, CheckpointHeader]:
    path = Path(path)
    try:
        raw = json.loads((path / HEADER_NAME).read_text(encoding="utf-8"))
        header = CheckpointHeader.model_validate(raw)
    except FileNotFoundError:
        raise CheckpointFormatError(f"{path / HEADER_NAME} does not exist") from None
    except (json.JSONDecodeError, ValidationError) as exc:
        raise CheckpointFormatError(f"{path / HEADER_NAME}: {exc}") from exc
    if header.format_version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {header.format_version}")

    bank = GeneratorBank(header.n_sym, header.trunk_width, header.head_width)
    declared = [(name, tuple(shape)) for name, shape in header.layers]
    if declared != [(spec.name, spec.shape) for spec in bank.layout]:
        raise CheckpointFormatError(f"{path}: layer table does not match the bank layout")

    raw_weights = (path / WEIGHTS_NAME).read_bytes()
    if len(raw_weights) != WEIGHTS_DTYPE.itemsize * bank.size:
        raise CheckpointFormatError(
            f"{path / WEIGHTS_NAME}: {len(raw_weights)} bytes, expected {WEIGHTS_DTYPE.itemsize * bank.size}"
        )
    theta = np.frombuffer(raw_weights, dtype=WEIGHTS_DTYPE).astype(np.float64)
    if not np.all(np.isfinite(theta)):
        raise CheckpointFormatError(f"{path / WEIGHTS_NAME} contains non-finite weights")
    return bank, theta, header
