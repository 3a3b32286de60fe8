import hashlib
from unittest.mock import patch

import pandas as pd
import pytest

from strategem import __version__
from strategem.config import settings
from strategem.services.experiment_service import RunResult
from strategem.storage.storage import metadata_line, read_table, render_csv, save_run

RAW = b'{"scenario_id": "demo"}'


@pytest.fixture
def result():
    return RunResult(
        run_id="demo",
        kind="improvement",
        seed=7,
        digest_source=RAW,
        tables={
            "improvement": pd.DataFrame(
                {"scope": ["population"], "point": [1 / 3], "verdict": ["Improvement"]}
            ),
            "extra": pd.DataFrame({"k": [1, 2]}),
        },
    )


def test_metadata_line():
    digest = hashlib.sha256(RAW).hexdigest()
    assert metadata_line(7, digest) == f"# strategem {__version__} seed=7 scenario_sha256={digest}\n"


def test_csv_float_format():
    text = render_csv(pd.DataFrame({"x": [1 / 3, 2.0]}), 0, "d")
    assert text.splitlines()[1:] == ["x", "0.3333333333", "2"]
    assert "\r" not in text


class TestSaveRun:
    def test_writes_every_table_and_summary(self, result, tmp_path):
        paths = save_run(result, tmp_path / "out")
        names = sorted(p.name for p in paths)
        assert names == ["demo_extra.csv", "demo_improvement.csv", "demo_summary.txt"]
        summary = (tmp_path / "out" / "demo_summary.txt").read_text()
        assert "0.3333333333" in summary
        assert "Improvement" in summary

    def test_read_table_inverts_csv(self, result, tmp_path):
        save_run(result, tmp_path)
        header, frame = read_table(tmp_path / "demo_improvement.csv")
        assert header == metadata_line(7, hashlib.sha256(RAW).hexdigest()).rstrip("\n")
        assert frame["point"].iloc[0] == pytest.approx(1 / 3)
        assert list(frame.columns) == ["scope", "point", "verdict"]

    def test_identical_runs_are_byte_identical(self, result, tmp_path):
        first = [p.read_bytes() for p in save_run(result, tmp_path / "a")]
        second = [p.read_bytes() for p in save_run(result, tmp_path / "b")]
        assert first == second

    def test_default_directory_from_settings(self, result, tmp_path):
        with patch.object(settings, "output_dir", str(tmp_path / "default")):
            paths = save_run(result)
        assert all(p.parent == tmp_path / "default" for p in paths)
