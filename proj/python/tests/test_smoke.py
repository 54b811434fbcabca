import json
import os
import pathlib

import numpy as np
import pytest

import qlight

ROOT = pathlib.Path(__file__).resolve().parents[2]
REFERENCE = pathlib.Path(os.environ.get("QLIGHT_REFERENCE_CONFIG", ROOT / "configs" / "reference.json"))


def test_commands_listed():
    assert set(qlight.command_names()) == {
        "dispersion", "pairs", "spectrum", "multichannel", "franson", "hbt", "table1"}


def test_correlogram_matches_numpy():
    rng = np.random.default_rng(3)
    a = np.unique(rng.integers(0, 2_000_000, 400))
    b = np.unique(rng.integers(0, 2_000_000, 400))
    counts = qlight.cross_correlogram(a, b, 100, -5000, 5000)
    d = (b[None, :] - a[:, None]).ravel()
    d = d[(d >= -5000) & (d < 5000)]
    expected = np.bincount((d + 5000) // 100, minlength=100)
    assert np.array_equal(counts, expected)


def test_unsorted_input_raises():
    with pytest.raises(qlight.QlightError):
        qlight.coincidences_in_window(np.array([5, 1]), np.array([1, 2]), 0, 10)


def test_pair_streams_are_sorted_and_correlated():
    s, i = qlight.pair_streams(REFERENCE, 6, 1.0, 0.2, 7)
    assert np.all(np.diff(s) > 0) and np.all(np.diff(i) > 0)
    peak = qlight.coincidences_in_window(s, i, 1300, 2000)
    off = qlight.coincidences_in_window(s, i, 21300, 2000)
    assert peak > 20 * max(off, 1)


def test_effective_modes():
    assert round(qlight.effective_modes(1.963), 3) == 1.038


def test_dispersion_command(tmp_path):
    summary = qlight.run_command("dispersion", REFERENCE, tmp_path)
    assert summary["beta2_s2_per_m"] == pytest.approx(-8.26e-27, rel=0.01)
    manifest = json.loads((tmp_path / "dispersion" / "manifest.json").read_text())
    assert manifest["config_hash"] == qlight.config_hash(REFERENCE)


def test_config_error(tmp_path):
    doc = json.loads(REFERENCE.read_text())
    doc["detectors"]["idler"]["efficiency"] = 2.0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    with pytest.raises(qlight.ConfigError, match="detectors.idler.efficiency"):
        qlight.run_command("spectrum", bad, tmp_path)
