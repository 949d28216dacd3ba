"""SVG figures for the ``plot`` subcommand."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from evaluation.report import (  # noqa: E402
    FIELDS_NAME,
    HEATMAP_NAME,
    read_fields_csv,
    read_report,
    render_heatmap,
)

logger = logging.getLogger(__name__)

QUIVER_NAME = "quiver.svg"


def plot_quiver(fields_csv: Union[str, Path], path: Union[str, Path]) -> Path:
    """One panel per slot with (xi_x, xi_t) arrows over the (x, t) sample grid, coloured by mu."""
    per_slot = read_fields_csv(fields_csv)
    if not per_slot:
        raise ValueError(f"{fields_csv} holds no field samples")
    slots = sorted(per_slot)
    fig, axes = plt.subplots(1, len(slots), figsize=(3.2 * len(slots), 3.4), squeeze=False)
    for ax, slot in zip(axes[0], slots):
        data = per_slot[slot]
        x, t, xi_x, xi_t, mu = data[:, 0], data[:, 1], data[:, 3], data[:, 4], data[:, 5]
        ax.quiver(x, t, xi_x, xi_t, mu, cmap="coolwarm", angles="xy")
        ax.set_title(f"slot {slot}")
        ax.set_xlabel("x")
        ax.set_xlim(0.0, 1.0)
        ax.set_ylim(0.0, 1.0)
        ax.set_aspect("equal")
    axes[0][0].set_ylabel("t")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return Path(path)


def plot_report(report_dir: Union[str, Path], out_dir: Union[str, Path]) -> List[Path]:
    report_dir, out_dir = Path(report_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = read_report(report_dir)
    written = [
        render_heatmap(
            report["inner_product_matrix"], report["gt_names"], out_dir / HEATMAP_NAME, report["equation"]
        )
    ]
    fields = report_dir / FIELDS_NAME
    if fields.exists():
        written.append(plot_quiver(fields, out_dir / QUIVER_NAME))
    else:
        logger.warning("No %s in %s; skipping the quiver plot", FIELDS_NAME, report_dir)
    for p in written:
        logger.info("Wrote %s", p)
    return written

