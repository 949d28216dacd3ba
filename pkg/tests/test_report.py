import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from cli.plotting import QUIVER_NAME, plot_report
from evaluation.report import (
    FIELD_COLUMNS,
    HEATMAP_NAME,
    export_evaluation,
    read_fields_csv,
    read_report,
    sample_fields,
)
from flow.generator_bank import GeneratorBank

REPORT = {
    "equation": "kdv",
    "gt_names": ["x_translation", "t_translation", "galilean_boost"],
    "inner_product_matrix": [[0.99, 0.01, 0.2], [0.0, -0.95, 0.1]],
    "span_recovery": [0.99, 0.95, 0.3],
    "matches": [],
    "recovered_count": 2,
    "slots": [],
}


def test_sample_fields_covers_every_slot():
    bank = GeneratorBank(n_sym=2, trunk_width=4, head_width=2)
    rows = sample_fields(bank, bank.init_params(0), n=3)
    assert len(rows) == 2 * 9
    assert tuple(rows[0]) == FIELD_COLUMNS
    assert {r["slot"] for r in rows} == {0, 1}
    assert all(0.0 < r["x"] < 1.0 and r["u"] == 0.0 for r in rows)


def test_export_then_read_back(tmp_path):
    bank = GeneratorBank(n_sym=2, trunk_width=4, head_width=2)
    theta = bank.init_params(1)
    paths = export_evaluation(REPORT, bank, theta, tmp_path)
    assert read_report(tmp_path) == REPORT
    assert paths["heatmap"].name == HEATMAP_NAME
    assert paths["heatmap"].read_text(encoding="utf-8").lstrip().startswith("<?xml")
    per_slot = read_fields_csv(paths["fields"])
    assert sorted(per_slot) == [0, 1]
    assert per_slot[0].shape == (256, 6)


def test_plot_report_writes_heatmap_and_quiver(tmp_path):
    bank = GeneratorBank(n_sym=2, trunk_width=4, head_width=2)
    export_evaluation(REPORT, bank, bank.init_params(2), tmp_path / "eval")
    written = plot_report(tmp_path / "eval", tmp_path / "figs")
    assert [p.name for p in written] == [HEATMAP_NAME, QUIVER_NAME]
    assert all(p.stat().st_size > 0 for p in written)


def test_plot_report_without_fields(tmp_path, caplog):
    (tmp_path / "eval").mkdir()
    (tmp_path / "eval" / "report.json").write_text(json.dumps(REPORT), encoding="utf-8")
    written = plot_report(tmp_path / "eval", tmp_path / "eval")
    assert [p.name for p in written] == [HEATMAP_NAME]
    assert "quiver" in caplog.text
