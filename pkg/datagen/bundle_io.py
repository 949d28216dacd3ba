"""On-disk solution bundles: ``meta.json`` plus a raw ``u.f64`` payload."""

from __future__ import annotations

import json
import logging
import os
import shutil
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
META_NAME = "meta.json"
PAYLOAD_NAME = "u.f64"
PAYLOAD_DTYPE = np.dtype("<f8")


class BundleFormatError(ValueError):
    """Raised when a bundle directory does not match the declared format."""


class BundleMeta(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    L: float
    T: float
    N_x: int
    N_t: int
    seed: int
    params: Dict[str, float] = {}
    format_version: int = FORMAT_VERSION
    provenance: Optional[Dict[str, Any]] = None


@dataclass(frozen=True)
class SolutionBundle:
    """Solution ``u`` on a periodic N_x grid over [0, L) and a uniform N_t grid.

    ``u`` is time-major: row i holds the solution at t_i. ``t_origin`` shifts
    the time grid for resampled bundles whose window starts after t = 0.
    """

    name: str
    length: float
    horizon: float
    u: np.ndarray
    seed: int = 0
    params: Dict[str, float] = field(default_factory=dict)
    provenance: Optional[Dict[str, Any]] = None

    @property
    def n_x(self) -> int:
        return int(self.u.shape[1])

    @property
    def n_t(self) -> int:
        return int(self.u.shape[0])

    @property
    def t_origin(self) -> float:
        if self.provenance is None:
            return 0.0
        return float(self.provenance.get("t_origin", 0.0))

    def x_grid(self) -> np.ndarray:
        return np.arange(self.n_x, dtype=np.float64) * (self.length / self.n_x)

    def t_grid(self) -> np.ndarray:
        if self.n_t == 1:
            return np.array([self.t_origin])
        return self.t_origin + np.arange(self.n_t, dtype=np.float64) * (self.horizon / (self.n_t - 1))

    def replace_u(self, u: np.ndarray) -> "SolutionBundle":
        return replace(self, u=np.asarray(u, dtype=np.float64))

    def meta(self) -> BundleMeta:
        return BundleMeta(
            name=self.name,
            L=self.length,
            T=self.horizon,
            N_x=self.n_x,
            N_t=self.n_t,
            seed=self.seed,
            params=dict(self.params),
            provenance=self.provenance,
        )


def write_bundle(bundle: SolutionBundle, path: Union[str, Path]) -> Path:
    """Write ``bundle`` to directory ``path``, replacing it atomically."""
    path = Path(path)
    u = np.asarray(bundle.u, dtype=np.float64)
    if u.ndim != 2:
        raise BundleFormatError(f"u must be 2-D (N_t, N_x), got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise BundleFormatError(f"refusing to write non-finite values to {path}")
    path.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{path.name}.", dir=path.parent))
    try:
        (staging / META_NAME).write_text(
            json.dumps(bundle.meta().model_dump(), indent=2), encoding="utf-8"
        )
        (staging / PAYLOAD_NAME).write_bytes(u.astype(PAYLOAD_DTYPE).tobytes())
        if path.exists():
            shutil.rmtree(path)
        os.replace(staging, path)
    except Exception:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    return path


def read_meta(path: Union[str, Path]) -> BundleMeta:
    meta_path = Path(path) / META_NAME
    try:
        raw = json.loads(meta_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise BundleFormatError(f"{meta_path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise BundleFormatError(f"{meta_path} is not valid JSON: {exc}") from exc
    try:
        meta = BundleMeta.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise BundleFormatError(f"{meta_path}: field {where!r}: {first['msg']}") from exc
    if meta.format_version != FORMAT_VERSION:
        raise BundleFormatError(
            f"{meta_path}: format_version {meta.format_version}, expected {FORMAT_VERSION}"
        )
    return meta


def read_bundle(path: Union[str, Path]) -> SolutionBundle:
    path = Path(path)
    meta = read_meta(path)
    payload = path / PAYLOAD_NAME
    try:
        raw = payload.read_bytes()
    except FileNotFoundError:
        raise BundleFormatError(f"{payload} does not exist") from None
    expected = PAYLOAD_DTYPE.itemsize * meta.N_x * meta.N_t
    if len(raw) != expected:
        raise BundleFormatError(f"{payload}: {len(raw)} bytes, expected {expected}")
    u = np.frombuffer(raw, dtype=PAYLOAD_DTYPE).astype(np.float64).reshape(meta.N_t, meta.N_x)
    if not np.all(np.isfinite(u)):
        raise BundleFormatError(f"{payload} contains non-finite values")
    return SolutionBundle(
        name=meta.name,
        length=meta.L,
        horizon=meta.T,
        u=u,
        seed=meta.seed,
        params=dict(meta.params),
        provenance=meta.provenance,
    )


def list_bundles(directory: Union[str, Path]) -> List[Path]:
    """Bundle directories directly under ``directory``, sorted by name."""
    directory = Path(directory)
    if (directory / META_NAME).exists():
        return [directory]
    if not directory.is_dir():
        raise BundleFormatError(f"{directory} is not a directory")
    return sorted(p for p in directory.iterdir() if (p / META_NAME).is_file())


def read_dataset(directory: Union[str, Path], limit: Optional[int] = None) -> List[SolutionBundle]:
    paths = list_bundles(directory)
    if limit is not None:
        paths = paths[:limit]
    if not paths:
        raise BundleFormatError(f"no bundles found under {directory}")
    logger.info("Reading %d bundles from %s", len(paths), directory)
    return [read_bundle(p) for p in paths]
