"""Evaluation exports: report.json, fields.csv and the inner-product heatmap."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from flow.generator_bank import GeneratorBank  # noqa: E402

logger = logging.getLogger(__name__)

REPORT_NAME = "report.json"
FIELDS_NAME = "fields.csv"
HEATMAP_NAME = "heatmap.svg"
FIELD_COLUMNS = ("slot", "x", "t", "u", "xi_x", "xi_t", "mu")


def write_report(report: Dict[str, Any], out_dir: Union[str, Path]) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / REPORT_NAME
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, ensure_ascii=False, indent=2)
    logger.info("Wrote %s", path)
    return path


def read_report(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_NAME
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def sample_fields(
    bank: GeneratorBank, theta: np.ndarray, n: int = 16, u_level: float = 0.0
) -> List[Dict[str, float]]:
    """Every slot on an n x n (x, t) grid over the unit square at normalized u = ``u_level``."""
    ticks = (np.arange(n) + 0.5) / n
    xx, tt = np.meshgrid(ticks, ticks, indexing="xy")
    points = np.stack([xx.reshape(-1), tt.reshape(-1), np.full(n * n, u_level)], axis=1)
    layers = bank.layers(np.asarray(theta, dtype=np.float64))
    rows = []
    for a, values in enumerate(bank.eval_all(layers, points)):
        for p, v in zip(points, values):
            rows.append(dict(zip(FIELD_COLUMNS, (a, *p.tolist(), *v.tolist()))))
    return rows


def write_fields_csv(rows: Sequence[Dict[str, float]], out_dir: Union[str, Path]) -> Path:
    path = Path(out_dir) / FIELDS_NAME
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=FIELD_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return path


def read_fields_csv(path: Union[str, Path]) -> Dict[int, np.ndarray]:
    """Slot -> (M, 6) array of x, t, u, xi_x, xi_t, mu."""
    path = Path(path)
    if path.is_dir():
        path = path / FIELDS_NAME
    per_slot: Dict[int, List[List[float]]] = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        for row in csv.DictReader(f):
            per_slot.setdefault(int(float(row["slot"])), []).append(
                [float(row[c]) for c in FIELD_COLUMNS[1:]]
            )
    return {slot: np.array(values) for slot, values in per_slot.items()}


def render_heatmap(
    matrix: Sequence[Sequence[float]],
    gt_names: Sequence[str],
    path: Union[str, Path],
    title: str = "",
) -> Path:
    """|M| as an annotated slot-by-ground-truth heatmap."""
    magnitude = np.abs(np.asarray(matrix, dtype=np.float64))
    n_slots, n_gt = magnitude.shape
    fig, ax = plt.subplots(figsize=(1.6 * n_gt + 2.0, 0.8 * n_slots + 1.5))
    image = ax.imshow(magnitude, vmin=0.0, vmax=1.0, cmap="viridis")
    ax.set_xticks(range(n_gt))
    ax.set_xticklabels(gt_names, rotation=30, ha="right")
    ax.set_yticks(range(n_slots))
    ax.set_yticklabels([f"slot {a}" for a in range(n_slots)])
    for a in range(n_slots):
        for k in range(n_gt):
            ax.text(k, a, f"{magnitude[a, k]:.2f}", ha="center", va="center",
                    color="black" if magnitude[a, k] > 0.5 else "white")
    fig.colorbar(image, ax=ax, label="|inner product|")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return Path(path)


def export_evaluation(
    report: Dict[str, Any], bank: GeneratorBank, theta: np.ndarray, out_dir: Union[str, Path]
) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    paths = {"report": write_report(report, out_dir)}
    paths["fields"] = write_fields_csv(sample_fields(bank, theta), out_dir)
    paths["heatmap"] = render_heatmap(
        report["inner_product_matrix"], report["gt_names"], out_dir / HEATMAP_NAME, report["equation"]
    )
    return paths
