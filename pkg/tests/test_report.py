"""
Tests for benchmark reports and their summaries.
"""

import json

import pytest

from didlink.bench.report import BenchReport, emit_report, load_report, remove_outliers, summarize
from didlink.errors import UsageError


def sample_report():
    report = BenchReport(scenario="VII", parameters={"reps": 3})
    for rep, (setup, source) in enumerate([(12.0, "method_handler"), (10.0, "method_handler"), (14.0, "cache")]):
        report.reps.append({"rep": rep, "client_setup_ms": setup, "client_resolution_source": source, "ok": True})
    return report


def test_summary_drops_values_beyond_five_medians():
    summary = summarize([1.0, 2.0, 3.0, 4.0, 100.0])

    assert summary.count == 4
    assert summary.outliers_removed == 1
    assert summary.mean == pytest.approx(2.5)
    assert summary.stddev == pytest.approx(1.2909944)
    assert summary.p95 == pytest.approx(3.85)
    assert (summary.min, summary.max) == (1.0, 4.0)


def test_single_value_has_zero_spread():
    summary = summarize([7.0])
    assert summary.stddev == 0.0
    assert summary.p95 == 7.0


def test_outlier_removal_keeps_everything_for_flat_data():
    kept, removed = remove_outliers([0.0, 0.0, 0.0])
    assert removed == 0
    assert kept.size == 3
    assert remove_outliers([])[1] == 0


def test_summarize_covers_numeric_columns_only():
    report = sample_report().summarize()
    assert set(report.summary) == {"client_setup_ms"}
    assert report.mean("client_setup_ms") == pytest.approx(12.0)


def test_json_report_round_trip(tmp_path):
    report = sample_report().summarize()
    path = emit_report(report, tmp_path / "out" / "vii.json")

    assert json.loads(path.read_text())["scenario"] == "VII"
    assert load_report(path) == report


def test_csv_report_has_one_row_per_rep(tmp_path):
    path = emit_report(sample_report(), tmp_path / "vii.csv", "csv")
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "client_resolution_source,client_setup_ms,ok,rep"
    assert len(lines) == 4


def test_unknown_report_format(tmp_path):
    with pytest.raises(UsageError):
        emit_report(sample_report(), tmp_path / "vii.xml", "xml")
