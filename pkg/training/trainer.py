"""Epoch loop: flow, score, regularize, backpropagate, Adam."""

from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from autodiff import tape as ad
from autodiff.optim import AdamState, adam_step
from autodiff.tape import Tape
from datagen.bundle_io import SolutionBundle, read_dataset
from flow.checkpoint import save_checkpoint
from flow.generator_bank import GeneratorBank
from losses.objectives import (
    InnerProductContext,
    ResidualSample,
    interior_nodes,
    lipschitz_loss,
    normalize_field,
    orthonormality_loss,
    sobolev_penalty,
    symmetry_loss,
    total_loss,
)
from pde_suite.equations import PdeSpec, get_spec
from training.config import TrainConfig
from training.normalization import NormalizedBundle, Normalization, normalize_dataset

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "L_sym", "L_ortho", "L_Lips", "sobolev", "total", "lr")
CHECKPOINT_DIR = "checkpoint"
TRAIN_LOG = "train_log.csv"


class TrainingError(RuntimeError):
    pass


class DatasetMismatchError(ValueError):
    pass


@dataclass
class TrainResult:
    bank: GeneratorBank
    theta: np.ndarray
    norm: Normalization
    spec: PdeSpec
    log: List[Dict[str, float]] = field(default_factory=list)
    checkpoint: Optional[Path] = None


@dataclass
class TrainingSample:
    residual: ResidualSample
    rows_per_block: int


def load_training_set(
    config: TrainConfig, data: Union[str, Path, Sequence[SolutionBundle]]
) -> List[SolutionBundle]:
    bundles = read_dataset(data) if isinstance(data, (str, Path)) else list(data)
    if not bundles:
        raise DatasetMismatchError("training set is empty")
    for b in bundles:
        if b.name != config.equation:
            raise DatasetMismatchError(
                f"bundle seed {b.seed} holds {b.name!r} data, training is for {config.equation!r}"
            )
        if b.n_t < 3:
            raise DatasetMismatchError(f"bundle seed {b.seed} has {b.n_t} rows; at least 3 are needed")
    return bundles


def spec_for(bundles: Sequence[SolutionBundle]) -> PdeSpec:
    first = bundles[0]
    return get_spec(first.name, **first.params)


def draw_sample(
    normalized: NormalizedBundle, rng: np.random.Generator, residual_points: Optional[int]
) -> TrainingSample:
    """Tuples and score nodes for one bundle in one step.

    With ``residual_points`` set, K = ceil(points / N_x) interior rows are drawn
    and each is scored with its two t-neighbours as a 3-row block.
    """
    grid = normalized.points()
    n_rows, n_cols = grid.shape[:2]
    if residual_points is None:
        rows, cols = interior_nodes(n_rows, n_cols)
        sample = ResidualSample(grid, rows, cols, normalized.norm, normalized.source.length)
        return TrainingSample(sample, n_rows)
    k = min(math.ceil(residual_points / n_cols), n_rows - 2)
    middles = np.sort(rng.choice(np.arange(1, n_rows - 1), size=k, replace=False))
    blocks = np.concatenate([grid[r - 1 : r + 2] for r in middles], axis=0)
    rows = np.repeat(np.arange(k) * 3 + 1, n_cols)
    cols = np.tile(np.arange(n_cols), k)
    sample = ResidualSample(blocks, rows, cols, normalized.norm, normalized.source.length)
    return TrainingSample(sample, 3)


def batch_objective(
    spec: PdeSpec,
    bank: GeneratorBank,
    theta: Union[np.ndarray, "ad.Var"],
    samples: Sequence[TrainingSample],
    scales: np.ndarray,
    config: TrainConfig,
    sobolev_active: bool,
) -> Dict[str, object]:
    """Loss components and the weighted total for one batch, on the tape of ``theta``."""
    layers = bank.layers(theta)
    fields = [bank.field(layers, a) for a in range(bank.n_sym)]
    sym = symmetry_loss(
        spec, fields, [s.residual for s in samples], scales, config.n_steps
    )
    ortho = lips = sob = 0.0
    for sample in samples:
        points = sample.residual.points
        flat = points.reshape(-1, 3)
        ctx = InnerProductContext(flat)
        hats = [
            normalize_field(v, ctx, f"slot {a}") for a, v in enumerate(bank.eval_all(layers, flat))
        ]
        n_cols = points.shape[1]
        blocks = [ad.reshape(h, (-1, sample.rows_per_block, n_cols, 3)) for h in hats]
        ortho = ortho + orthonormality_loss(hats, ctx)
        lips = lips + lipschitz_loss(
            blocks, points.reshape(-1, sample.rows_per_block, n_cols, 3), config.tau
        )
        lines = [ad.reshape(h, points.shape) for h in hats]
        sob = sob + sobolev_penalty(lines, sample.residual.length)
    inv = 1.0 / len(samples)
    components = {"sym": sym, "ortho": ortho * inv, "lips": lips * inv, "sobolev": sob * inv}
    components["total"] = total_loss(components, config.loss_weights(), sobolev_active)
    return components


def _write_log(path: Path, rows: List[Dict[str, float]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def train(
    config: TrainConfig,
    data: Union[str, Path, Sequence[SolutionBundle]],
    out_dir: Optional[Union[str, Path]] = None,
) -> TrainResult:
    """Fit a generator bank to a dataset of one equation.

    Writes ``<out_dir>/train_log.csv`` and ``<out_dir>/checkpoint`` (after the
    learning-rate decay epoch and at the end). A non-finite loss aborts with
    the last good parameters saved.
    """
    bundles = load_training_set(config, data)
    spec = spec_for(bundles)
    normalized, norm = normalize_dataset(bundles)
    bank = GeneratorBank(config.n_sym, config.trunk_width, config.head_width, config.init_noise)
    theta = bank.init_params(config.seed)
    state = AdamState.zeros(bank.size)
    rng = np.random.default_rng(config.seed)
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    result = TrainResult(bank, theta, norm, spec)

    logger.info(
        "Training %s on %d bundles: %d epochs, batch %d, %d slots",
        spec.name, len(bundles), config.epochs, config.batch_size, config.n_sym,
    )
    for epoch in range(1, config.epochs + 1):
        lr = config.lr_at(epoch)
        sobolev_on = config.sobolev_active(epoch)
        sums = dict.fromkeys(("sym", "ortho", "lips", "sobolev", "total"), 0.0)
        order = rng.permutation(len(normalized))
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = [normalized[i] for i in order[start : start + config.batch_size]]
            samples = [draw_sample(nb, rng, config.residual_points) for nb in batch]
            scales = rng.uniform(-config.sigma, config.sigma, size=(config.n_sym, len(batch)))
            tape = Tape()
            leaf = tape.leaf(theta)
            components = batch_objective(spec, bank, leaf, samples, scales, config, sobolev_on)
            total = float(ad.value_of(components["total"]))
            if not math.isfinite(total):
                if out_path is not None:
                    save_checkpoint(out_path / CHECKPOINT_DIR, bank, theta, spec.name, norm, epoch - 1)
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {n_batches + 1}")
            grads = tape.backward(components["total"])[leaf]
            theta, state = adam_step(theta, grads, state, lr)
            for key in sums:
                sums[key] += float(ad.value_of(components[key]))
            n_batches += 1
            logger.debug("epoch %d batch %d total %.6g", epoch, n_batches, total)

        row = {
            "epoch": epoch,
            "L_sym": sums["sym"] / n_batches,
            "L_ortho": sums["ortho"] / n_batches,
            "L_Lips": sums["lips"] / n_batches,
            "sobolev": sums["sobolev"] / n_batches,
            "total": sums["total"] / n_batches,
            "lr": lr,
        }
        result.log.append(row)
        logger.info(
            "epoch %d: L_sym=%.4f L_ortho=%.4f L_Lips=%.4f total=%.4f",
            epoch, row["L_sym"], row["L_ortho"], row["L_Lips"], row["total"],
        )
        result.theta = theta
        if out_path is not None:
            _write_log(out_path / TRAIN_LOG, result.log)
            if epoch == config.decay_epoch or epoch == config.epochs:
                result.checkpoint = save_checkpoint(
                    out_path / CHECKPOINT_DIR, bank, theta, spec.name, norm, epoch
                )
    return result


WEIGHT_GRID = (1.0, 3.0, 10.0)


def sweep(
    config: TrainConfig,
    data: Union[str, Path, Sequence[SolutionBundle]],
    held_out: Sequence[SolutionBundle],
    grid: Sequence[float] = WEIGHT_GRID,
) -> List[Dict[str, float]]:
    """Recovered ground-truth count for every (w_sym, w_ortho, w_Lips) in ``grid``^3."""
    from evaluation.compare import evaluate_bank

    bundles = load_training_set(config, data)
    outcomes = []
    for w_sym, w_ortho, w_lips in itertools.product(grid, repeat=3):
        run = config.model_copy(update={"w_sym": w_sym, "w_ortho": w_ortho, "w_lips": w_lips})
        result = train(run, bundles)
        report = evaluate_bank(result.spec, result.bank, result.theta, result.norm, held_out, with_as=False)
        outcomes.append(
            {"w_sym": w_sym, "w_ortho": w_ortho, "w_lips": w_lips, "recovered": report["recovered_count"]}
        )
        logger.info("sweep w=(%g, %g, %g): %d recovered", w_sym, w_ortho, w_lips, report["recovered_count"])
    return outcomes
