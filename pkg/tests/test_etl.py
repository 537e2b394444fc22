import datetime as dt

import pytest

from caremart.config import data_path
from caremart.errors import IntegrityError, RowError
from caremart.etl import (
    EtlConfig,
    IdAllocator,
    TableReport,
    merge_note_entries,
    run_etl,
    transform_demographics,
)
from caremart.store import DataStore, Namespace
from caremart.vocab import load_rule_sets, load_vocab

from conftest import make_config
from caremart import orchestrator


@pytest.fixture(scope="module")
def etl_run(tmp_path_factory):
    cfg = make_config(tmp_path_factory.mktemp("etl"))
    manifest = orchestrator.stage_gen(cfg)
    orchestrator.stage_ingest(cfg)
    report = orchestrator.stage_etl(cfg)
    store = orchestrator.open_store(cfg)
    return cfg, store, manifest, report


def test_conservation_per_table(etl_run):
    _, _, _, report = etl_run
    for name, trep in report.tables.items():
        assert trep.cdm_count + len(trep.excluded) == trep.raw_count, name


def test_demographics_and_encounters_lossless(etl_run):
    _, store, _, report = etl_run
    assert report.tables["demographics"].excluded == []
    assert report.tables["encounters"].excluded == []
    assert store.row_count(Namespace.RAW, "demographics") == store.row_count(
        Namespace.CDM, "person"
    )
    assert store.row_count(Namespace.RAW, "encounters") == store.row_count(
        Namespace.CDM, "visit_occurrence"
    )


def test_losses_match_manifest(etl_run):
    _, store, manifest, report = etl_run
    assert len(report.tables["diagnoses"].excluded) == manifest.expected_unmapped["diagnoses"]
    assert len(report.tables["procedures"].excluded) == manifest.expected_unmapped["procedures"]
    exclusions = store.rows(Namespace.RESULTS, "etl_exclusions")
    assert len(exclusions) == sum(manifest.expected_unmapped.values())
    assert all(e["reason"] == "unmapped code" for e in exclusions)


def test_source_values_survive(etl_run):
    _, store, _, _ = etl_run
    raw_codes = {r["dx_code"] for r in store.iter_rows(Namespace.RAW, "diagnoses")}
    for row in store.iter_rows(Namespace.CDM, "condition_occurrence"):
        assert row["condition_source_value"] in raw_codes
        assert row["condition_concept_id"] > 0


def test_observation_periods_span_events(etl_run):
    _, store, _, _ = etl_run
    periods = {
        r["person_id"]: (
            r["observation_period_start_date"],
            r["observation_period_end_date"],
        )
        for r in store.iter_rows(Namespace.CDM, "observation_period")
    }
    for r in store.iter_rows(Namespace.CDM, "condition_occurrence"):
        start, end = periods[r["person_id"]]
        assert start <= r["condition_start_date"] <= end
    for r in store.iter_rows(Namespace.CDM, "visit_occurrence"):
        start, end = periods[r["person_id"]]
        assert start <= r["visit_start_date"] and r["visit_end_date"] <= end


def test_referential_integrity_clean(etl_run):
    _, store, _, _ = etl_run
    assert store.check_referential_integrity() == []


def test_etl_is_idempotent(etl_run):
    cfg, store, _, _ = etl_run
    before = store.rows(Namespace.CDM, "condition_occurrence")
    orchestrator.stage_etl(cfg)
    fresh = orchestrator.open_store(cfg)
    assert fresh.rows(Namespace.CDM, "condition_occurrence") == before


# -- unit-level pieces ------------------------------------------------------


def _frag(pid, parent, seq, text, patient=1, kind="encounter"):
    return {
        "patient_id": patient,
        "parent_id": parent,
        "parent_kind": kind,
        "entry_seq": seq,
        "note_date": dt.date(2017, 1, seq),
        "text_fragment": text,
    }


def test_merge_note_entries_orders_and_joins():
    merged, errors = merge_note_entries(
        [_frag(1, 10, 2, "second"), _frag(1, 10, 1, "first")]
    )
    assert errors == []
    assert merged[0]["text"] == "first\nsecond"
    assert merged[0]["note_date"] == dt.date(2017, 1, 1)


def test_merge_note_entries_conflicting_patient_skipped():
    merged, errors = merge_note_entries(
        [_frag(1, 10, 1, "a", patient=1), _frag(1, 10, 2, "b", patient=2)]
    )
    assert merged == []
    assert errors == [("encounter:10", "conflicting patient_ids [1, 2]")]


def test_demographics_transform_is_lossless_and_keeps_sources():
    rules = load_rule_sets(data_path("rules.json"))
    raw = [
        {
            "patient_id": 5,
            "birth_date": dt.date(1970, 2, 3),
            "death_date": dt.date(2018, 4, 5),
            "gender": "FEMALE",
            "race": "WHITE",
            "ethnicity": "HISPANIC OR LATINO",
        }
    ]
    persons, deaths = transform_demographics(raw, rules)
    assert persons[0]["person_id"] == 5
    assert persons[0]["ethnicity_concept_id"] == 38003563
    assert persons[0]["gender_source_value"] == "FEMALE"
    assert deaths == [{"person_id": 5, "death_date": dt.date(2018, 4, 5)}]


def test_missing_rule_set_is_an_error(tmp_path):
    store = DataStore(tmp_path / "s")
    store.create_schemas()
    vocab = load_vocab(data_path("concept.csv"), data_path("concept_relationship.csv"))
    with pytest.raises(RowError, match="missing rule set"):
        run_etl(store, vocab, {}, EtlConfig())


def test_conservation_check_raises():
    with pytest.raises(IntegrityError, match="conservation"):
        TableReport(raw_count=3, cdm_count=1).check_conservation()


def test_id_allocator_strictly_increasing():
    a = IdAllocator()
    assert [a.take("t") for _ in range(3)] == [1, 2, 3]
    assert a.take("u") == 1
    assert a.watermarks() == {"t": 3, "u": 1}
