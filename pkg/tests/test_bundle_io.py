import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from datagen.bundle_io import (
    META_NAME,
    PAYLOAD_NAME,
    BundleFormatError,
    list_bundles,
    read_bundle,
    read_dataset,
    write_bundle,
)
from tests.conftest import make_bundle


def test_write_read_preserves_everything(tmp_path):
    bundle = make_bundle(seed=4, params={"nu": 0.01})
    write_bundle(bundle, tmp_path / "b")
    back = read_bundle(tmp_path / "b")
    np.testing.assert_array_equal(back.u, bundle.u)
    assert (back.name, back.length, back.horizon, back.seed) == ("kdv", 64.0, 40.0, 4)
    assert back.params == {"nu": 0.01}


def test_meta_json_declares_the_grid(tmp_path):
    write_bundle(make_bundle(n_x=16, n_t=5), tmp_path / "b")
    meta = json.loads((tmp_path / "b" / META_NAME).read_text(encoding="utf-8"))
    assert meta["N_x"] == 16 and meta["N_t"] == 5
    assert meta["format_version"] == 1
    assert (tmp_path / "b" / PAYLOAD_NAME).stat().st_size == 16 * 5 * 8


def test_rewrite_replaces_previous_bundle(tmp_path):
    write_bundle(make_bundle(seed=1), tmp_path / "b")
    second = make_bundle(seed=2)
    write_bundle(second, tmp_path / "b")
    np.testing.assert_array_equal(read_bundle(tmp_path / "b").u, second.u)
    assert [p.name for p in tmp_path.iterdir()] == ["b"]


def test_truncated_payload_is_rejected(tmp_path):
    path = write_bundle(make_bundle(), tmp_path / "b")
    payload = path / PAYLOAD_NAME
    payload.write_bytes(payload.read_bytes()[:-8])
    with pytest.raises(BundleFormatError, match="bytes"):
        read_bundle(path)


def test_missing_meta_field_is_named(tmp_path):
    path = write_bundle(make_bundle(), tmp_path / "b")
    meta = json.loads((path / META_NAME).read_text(encoding="utf-8"))
    del meta["N_t"]
    (path / META_NAME).write_text(json.dumps(meta), encoding="utf-8")
    with pytest.raises(BundleFormatError, match="N_t"):
        read_bundle(path)


def test_non_finite_payload_is_rejected(tmp_path):
    path = write_bundle(make_bundle(n_x=4, n_t=2), tmp_path / "b")
    values = np.zeros(8)
    values[3] = np.nan
    (path / PAYLOAD_NAME).write_bytes(values.astype("<f8").tobytes())
    with pytest.raises(BundleFormatError, match="non-finite"):
        read_bundle(path)


def test_writing_non_finite_values_fails(tmp_path):
    bundle = make_bundle()
    bad = bundle.replace_u(np.full_like(bundle.u, np.inf))
    with pytest.raises(BundleFormatError):
        write_bundle(bad, tmp_path / "b")
    assert not (tmp_path / "b").exists()


def test_provenance_round_trips_and_shifts_time_grid(tmp_path):
    bundle = make_bundle(n_t=3, horizon=4.0)
    shifted = replace(bundle, provenance={"t_origin": 1.5, "slot": 2})
    write_bundle(shifted, tmp_path / "b")
    back = read_bundle(tmp_path / "b")
    assert back.provenance == {"t_origin": 1.5, "slot": 2}
    np.testing.assert_allclose(back.t_grid(), [1.5, 3.5, 5.5])


def test_read_dataset_orders_and_limits(tmp_path):
    for i in (2, 0, 1):
        write_bundle(make_bundle(seed=i), tmp_path / f"bundle_{i:05d}")
    assert [p.name for p in list_bundles(tmp_path)] == ["bundle_00000", "bundle_00001", "bundle_00002"]
    assert [b.seed for b in read_dataset(tmp_path, limit=2)] == [0, 1]
    with pytest.raises(BundleFormatError):
        read_dataset(tmp_path / "missing")
