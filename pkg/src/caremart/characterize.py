"""Descriptive statistics over the cdm namespace (the results generator).

Every record is a plain recount or ratio over sealed cdm tables, so an
independent rescan must reproduce it exactly. Per-person averages are
displayed with half-up integer rounding (1,909,175 diagnoses over
13,604 persons displays as 140) while the raw float is retained.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from .errors import IntegrityError
from .store import DataStore, Namespace

SUMMARY_TABLES = [
    "person",
    "death",
    "observation_period",
    "condition_occurrence",
    "visit_occurrence",
    "procedure_occurrence",
    "note",
    "note_nlp",
]

PER_PERSON_TABLES = [
    "condition_occurrence",
    "visit_occurrence",
    "procedure_occurrence",
    "note",
]


@dataclass(frozen=True)
class StatRecord:
    analysis_name: str
    count_value: int
    stratum_1: str | None = None
    stratum_2: str | None = None
    avg_value: float | None = None

    def to_row(self) -> dict:
        return {
            "analysis_name": self.analysis_name,
            "stratum_1": self.stratum_1,
            "stratum_2": self.stratum_2,
            "count_value": self.count_value,
            "avg_value": self.avg_value,
        }


def round_half_up(value: float) -> int:
    return int(Decimal(str(value)).quantize(Decimal("1"), rounding=ROUND_HALF_UP))


def summarize_tables(store: DataStore) -> list[StatRecord]:
    return [
        StatRecord(f"row_count:{t}", store.row_count(Namespace.CDM, t))
        for t in SUMMARY_TABLES
    ]


def per_person_averages(store: DataStore) -> list[StatRecord]:
    n_persons = store.row_count(Namespace.CDM, "person")
    if n_persons == 0:
        raise IntegrityError("per-person averages undefined with zero persons")
    out = []
    for t in PER_PERSON_TABLES:
        avg = store.row_count(Namespace.CDM, t) / n_persons
        out.append(
            StatRecord(
                f"per_person_avg:{t}",
                round_half_up(avg),
                avg_value=avg,
            )
        )
    return out


def demographics_breakdown(store: DataStore) -> list[StatRecord]:
    counts: dict[int, int] = {}
    for r in store.iter_rows(Namespace.CDM, "person"):
        counts[r["gender_concept_id"]] = counts.get(r["gender_concept_id"], 0) + 1
    return [
        StatRecord("persons_by_gender", n, stratum_1=str(gid))
        for gid, n in sorted(counts.items())
    ]


def nlp_concept_stats(store: DataStore) -> list[StatRecord]:
    mentions = 0
    concepts: set[int] = set()
    for r in store.iter_rows(Namespace.CDM, "note_nlp"):
        mentions += 1
        concepts.add(r["note_nlp_concept_id"])
    n_persons = store.row_count(Namespace.CDM, "person")
    mentions_pp = mentions / n_persons if n_persons else 0.0
    # distinct concepts per person needs the note join
    note_person = {r["note_id"]: r["person_id"] for r in store.iter_rows(Namespace.CDM, "note")}
    per_person: dict[int, set[int]] = {}
    for r in store.iter_rows(Namespace.CDM, "note_nlp"):
        person = note_person.get(r["note_id"])
        if person is not None:
            per_person.setdefault(person, set()).add(r["note_nlp_concept_id"])
    distinct_pp = (
        sum(len(s) for s in per_person.values()) / n_persons if n_persons else 0.0
    )
    return [
        StatRecord("nlp_total_mentions", mentions),
        StatRecord("nlp_distinct_concepts", len(concepts)),
        StatRecord("nlp_mentions_per_person", round_half_up(mentions_pp), avg_value=mentions_pp),
        StatRecord(
            "nlp_distinct_concepts_per_person",
            round_half_up(distinct_pp),
            avg_value=distinct_pp,
        ),
    ]


def characterize(store: DataStore) -> list[StatRecord]:
    """Run every analysis and persist results/stat_record."""
    records = summarize_tables(store)
    if store.row_count(Namespace.CDM, "person"):
        records += per_person_averages(store)
    records += demographics_breakdown(store)
    records += nlp_concept_stats(store)
    store.truncate(Namespace.RESULTS, "stat_record")
    store.insert_rows(Namespace.RESULTS, "stat_record", [r.to_row() for r in records])
    store.save(Namespace.RESULTS, "stat_record")
    return records
