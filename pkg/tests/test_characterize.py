import pytest

from caremart.characterize import (
    PER_PERSON_TABLES,
    SUMMARY_TABLES,
    characterize,
    round_half_up,
)
from caremart.errors import IntegrityError
from caremart.store import DataStore, Namespace


def test_round_half_up_reference_pairs():
    assert round_half_up(1909175 / 13604) == 140
    assert round_half_up(1987791 / 13604) == 146
    assert round_half_up(2096415 / 13604) == 154
    assert round_half_up(1214388 / 13604) == 89
    assert round_half_up(2.5) == 3
    assert round_half_up(2.4999) == 2


def test_every_record_equals_independent_recount(pipeline):
    _, store, _ = pipeline
    records = {
        (r.analysis_name, r.stratum_1): r for r in characterize(store)
    }

    for t in SUMMARY_TABLES:
        assert records[(f"row_count:{t}", None)].count_value == len(
            store.rows(Namespace.CDM, t)
        )

    n_persons = len(store.rows(Namespace.CDM, "person"))
    for t in PER_PERSON_TABLES:
        rec = records[(f"per_person_avg:{t}", None)]
        avg = len(store.rows(Namespace.CDM, t)) / n_persons
        assert rec.avg_value == pytest.approx(avg)
        assert rec.count_value == round_half_up(avg)

    by_gender: dict[int, int] = {}
    for r in store.rows(Namespace.CDM, "person"):
        by_gender[r["gender_concept_id"]] = by_gender.get(r["gender_concept_id"], 0) + 1
    for gid, n in by_gender.items():
        assert records[("persons_by_gender", str(gid))].count_value == n

    nlp_rows = store.rows(Namespace.CDM, "note_nlp")
    assert records[("nlp_total_mentions", None)].count_value == len(nlp_rows)
    assert records[("nlp_distinct_concepts", None)].count_value == len(
        {r["note_nlp_concept_id"] for r in nlp_rows}
    )


def test_gender_split_counts(pipeline):
    cfg, store, _ = pipeline
    n = cfg.gen["n_patients"]
    counts = sorted(
        r.count_value
        for r in characterize(store)
        if r.analysis_name == "persons_by_gender"
    )
    assert sum(counts) == n


def test_records_persisted(pipeline):
    _, store, _ = pipeline
    records = characterize(store)
    saved = store.rows(Namespace.RESULTS, "stat_record")
    assert len(saved) == len(records)
    reread = DataStore(store.root)
    reread.create_schemas()
    assert reread.rows(Namespace.RESULTS, "stat_record") == saved


def test_zero_person_store(tmp_path):
    store = DataStore(tmp_path / "s")
    store.create_schemas()
    records = characterize(store)
    names = {r.analysis_name for r in records}
    assert "row_count:person" in names
    assert not any(n.startswith("per_person_avg") for n in names)


def test_per_person_requires_persons(tmp_path):
    from caremart.characterize import per_person_averages

    store = DataStore(tmp_path / "s")
    store.create_schemas()
    with pytest.raises(IntegrityError):
        per_person_averages(store)
