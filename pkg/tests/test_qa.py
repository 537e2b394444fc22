import datetime as dt

import pytest

from caremart.errors import IntegrityError
from caremart.qa import (
    HEADER,
    QaReport,
    QaRow,
    assert_thresholds,
    format_pct,
    lost_pct,
    persist,
    reconcile,
    render_report,
)
from caremart.store import DataStore, Namespace


def test_format_pct_reference_values():
    assert format_pct(lost_pct(129371, 1343759)) == "9.627"
    assert format_pct(lost_pct(2475, 1911650)) == "0.129"
    assert format_pct(0.0) == "0"
    assert format_pct(100.0) == "100"


def test_format_pct_truncates():
    assert format_pct(9.6279) == "9.627"
    assert format_pct(1.2345) == "1.234"
    assert format_pct(0.0009) == "0"


def test_reconcile_counts_merged_note_parents(pipeline):
    _, store, manifest, = pipeline
    report = reconcile(store)
    by_name = {r.comparison: r for r in report.rows}
    assert by_name["RAW.demographics vs CDM.person"].difference == 0
    assert by_name["RAW.encounters vs CDM.visit_occurrence"].difference == 0
    assert (
        by_name["RAW.diagnoses vs CDM.condition_occurrence"].difference
        == manifest.expected_unmapped["diagnoses"]
    )
    assert (
        by_name["RAW.procedures vs CDM.procedure_occurrence"].difference
        == manifest.expected_unmapped["procedures"]
    )
    assert by_name["RAW.note_entries (merged) vs CDM.note"].difference == 0


def test_cdm_exceeding_raw_is_an_error(tmp_path):
    store = DataStore(tmp_path / "s")
    store.create_schemas()
    store.insert_rows(
        Namespace.CDM,
        "death",
        [{"person_id": 1, "death_date": dt.date(2018, 1, 1)}],
    )
    with pytest.raises(IntegrityError, match="never invent"):
        reconcile(store, pairs=[("demographics", "death")])


def test_text_layout_five_columns():
    report = QaReport([QaRow("RAW.procedures vs CDM.procedure_occurrence", 1343759, 1214388)])
    text = render_report(report, "text")
    lines = text.splitlines()
    assert [c.strip() for c in lines[0].split(" | ")] == HEADER
    assert set(lines[1]) <= {"-", "+"}
    cells = lines[2].split(" | ")
    assert cells[1].strip() == "1,343,759"
    assert cells[4].strip() == "9.627"


def test_csv_and_json_renderings():
    report = QaReport([QaRow("a vs b", 200, 150)])
    csv_text = render_report(report, "csv")
    assert csv_text.splitlines()[0] == ",".join(HEADER)
    assert "25" in csv_text
    doc = render_report(report, "json")
    assert '"raw_lost_pct": 25.0' in doc
    with pytest.raises(ValueError):
        render_report(report, "xml")


def test_thresholds_default_and_override():
    report = QaReport([QaRow("a vs b", 100, 80)])
    ok, violations = assert_thresholds(report)
    assert not ok and "20" in violations[0]
    ok, violations = assert_thresholds(report, {"a vs b": 25.0})
    assert ok and violations == []


def test_persist_round_trip(pipeline):
    _, store, _ = pipeline
    report = reconcile(store)
    persist(report, store)
    rows = store.rows(Namespace.RESULTS, "qa_report")
    assert len(rows) == len(report.rows)
    for saved, row in zip(rows, report.rows):
        assert saved["comparison"] == row.comparison
        assert saved["difference"] == row.difference


def test_zero_raw_rows_is_zero_loss():
    assert lost_pct(0, 0) == 0.0
