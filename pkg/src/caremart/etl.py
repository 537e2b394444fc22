"""RAW -> CDM transformation pipeline.

Order: demographics -> encounters -> diagnoses/procedures -> notes ->
observation periods. Every transform conserves rows: raw_count equals
cdm rows emitted plus logged exclusions. Demographics and encounters
are lossless by construction; diagnosis and procedure rows drop only
when their source code cannot be mapped, and each dropped row lands in
results.etl_exclusions. Person and visit ids reuse the raw natural ids
(both are unique 64-bit ints already); other ids come from a single
strictly increasing allocator.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import IntegrityError, RowError
from .store import DataStore, Namespace
from .vocab import RuleSet, VocabularyStore

log = logging.getLogger(__name__)

DEFAULT_DX_CHAIN = ("ICD10CM", "ICD10", "ICD9CM")
DEFAULT_PX_CHAIN = ("CPT4",)
EHR_TYPE_CONCEPT = 32817  # provenance: electronic health record


@dataclass
class EtlConfig:
    vocab_chains: dict[str, tuple[str, ...]] = field(
        default_factory=lambda: {
            "ICD10CM": DEFAULT_DX_CHAIN,
            "ICD10": ("ICD10", "ICD10CM", "ICD9CM"),
            "ICD9CM": ("ICD9CM", "ICD10CM", "ICD10"),
            "CPT4": DEFAULT_PX_CHAIN,
        }
    )
    default_dx_chain: tuple[str, ...] = DEFAULT_DX_CHAIN
    default_px_chain: tuple[str, ...] = DEFAULT_PX_CHAIN
    condition_type_concept: int = EHR_TYPE_CONCEPT
    visit_type_concept: int = EHR_TYPE_CONCEPT
    procedure_type_concept: int = EHR_TYPE_CONCEPT
    period_type_concept: int = EHR_TYPE_CONCEPT

    def dx_chain(self, code_type: str) -> list[str]:
        return list(self.vocab_chains.get(code_type, self.default_dx_chain))

    def px_chain(self, code_type: str) -> list[str]:
        return list(self.vocab_chains.get(code_type, self.default_px_chain))


@dataclass
class TableReport:
    raw_count: int = 0
    cdm_count: int = 0
    excluded: list[tuple[str, str]] = field(default_factory=list)

    def check_conservation(self) -> None:
        if self.cdm_count + len(self.excluded) != self.raw_count:
            raise IntegrityError(
                f"conservation violated: {self.cdm_count} + {len(self.excluded)} "
                f"!= {self.raw_count}"
            )


@dataclass
class EtlReport:
    tables: dict[str, TableReport] = field(default_factory=dict)
    duration_seconds: float = 0.0
    id_watermarks: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tables": {
                name: {
                    "raw_count": t.raw_count,
                    "cdm_count": t.cdm_count,
                    "excluded": [list(e) for e in t.excluded],
                }
                for name, t in self.tables.items()
            },
            "duration_seconds": self.duration_seconds,
            "id_watermarks": self.id_watermarks,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


class IdAllocator:
    """Strictly increasing per-table id source; ids are never reused."""

    def __init__(self) -> None:
        self._next: dict[str, int] = {}

    def take(self, table: str) -> int:
        n = self._next.get(table, 1)
        self._next[table] = n + 1
        return n

    def watermarks(self) -> dict[str, int]:
        return {t: n - 1 for t, n in self._next.items()}


# -- note merging ----------------------------------------------------------


def merge_note_entries(entries: list[dict]) -> tuple[list[dict], list[tuple[str, str]]]:
    """One merged note per (parent_id, parent_kind).

    Fragments concatenate in ascending entry_seq joined by "\\n"; the
    note date is the earliest fragment date. Parents whose fragments
    disagree on patient_id are skipped and reported.
    """
    groups: dict[tuple[str, int], list[dict]] = {}
    for e in entries:
        groups.setdefault((e["parent_kind"], e["parent_id"]), []).append(e)
    merged = []
    errors = []
    for (kind, pid), frags in sorted(groups.items()):
        patients = {f["patient_id"] for f in frags}
        if len(patients) > 1:
            msg = f"conflicting patient_ids {sorted(patients)}"
            log.warning("note parent (%s, %s): %s; skipped", kind, pid, msg)
            errors.append((f"{kind}:{pid}", msg))
            continue
        frags = sorted(frags, key=lambda f: f["entry_seq"])
        merged.append(
            {
                "parent_kind": kind,
                "parent_id": pid,
                "patient_id": frags[0]["patient_id"],
                "note_date": min(f["note_date"] for f in frags),
                "text": "\n".join(f["text_fragment"] for f in frags),
            }
        )
    return merged, errors


# -- per-table transforms --------------------------------------------------


def transform_demographics(raw_rows: list[dict], rules: dict[str, RuleSet]) -> tuple[list[dict], list[dict]]:
    persons = []
    deaths = []
    for r in raw_rows:
        persons.append(
            {
                "person_id": r["patient_id"],
                "gender_concept_id": rules["gender"].apply(r["gender"]),
                "year_of_birth": r["birth_date"].year,
                "month_of_birth": r["birth_date"].month,
                "day_of_birth": r["birth_date"].day,
                "race_concept_id": rules["race"].apply(r["race"]),
                "ethnicity_concept_id": rules["ethnicity"].apply(r["ethnicity"]),
                "gender_source_value": r["gender"],
                "race_source_value": r["race"],
                "ethnicity_source_value": r["ethnicity"],
            }
        )
        if r["death_date"] is not None:
            deaths.append({"person_id": r["patient_id"], "death_date": r["death_date"]})
    return persons, deaths


def transform_encounters(raw_rows: list[dict], rules: dict[str, RuleSet], cfg: EtlConfig) -> list[dict]:
    visits = []
    for r in raw_rows:
        visits.append(
            {
                "visit_occurrence_id": r["encounter_id"],
                "person_id": r["patient_id"],
                "visit_concept_id": rules["enc_type"].apply(r["enc_type"]),
                "visit_start_date": r["enc_start_date"],
                "visit_end_date": r["enc_end_date"] or r["enc_start_date"],
                "visit_type_concept_id": cfg.visit_type_concept,
                "visit_source_value": r["enc_type"],
            }
        )
    return visits


def transform_diagnoses(
    raw_rows: list[dict], vocab: VocabularyStore, cfg: EtlConfig, allocator: IdAllocator
) -> tuple[list[dict], list[tuple[str, str]]]:
    rows = []
    excluded = []
    for r in raw_rows:
        result = vocab.to_cdm(r["dx_code"], cfg.dx_chain(r["dx_code_type"]))
        if result.status == "unmapped":
            excluded.append(
                (f"patient={r['patient_id']},code={r['dx_code']},date={r['dx_date']}",
                 "unmapped code")
            )
            continue
        rows.append(
            {
                "condition_occurrence_id": allocator.take("condition_occurrence"),
                "person_id": r["patient_id"],
                "condition_concept_id": result.standard_concept_id,
                "condition_start_date": r["dx_date"],
                "condition_type_concept_id": cfg.condition_type_concept,
                "condition_source_value": r["dx_code"],
                "condition_source_concept_id": result.source_concept_id,
                "visit_occurrence_id": r["encounter_id"],
            }
        )
    return rows, excluded


def transform_procedures(
    raw_rows: list[dict], vocab: VocabularyStore, cfg: EtlConfig, allocator: IdAllocator
) -> tuple[list[dict], list[tuple[str, str]]]:
    rows = []
    excluded = []
    for r in raw_rows:
        result = vocab.to_cdm(r["px_code"], cfg.px_chain(r["px_code_type"]))
        if result.status == "unmapped":
            excluded.append(
                (f"patient={r['patient_id']},procedure={r['procedure_id']},"
                 f"code={r['px_code']}", "unmapped code")
            )
            continue
        rows.append(
            {
                "procedure_occurrence_id": allocator.take("procedure_occurrence"),
                "person_id": r["patient_id"],
                "procedure_concept_id": result.standard_concept_id,
                "procedure_date": r["px_date"],
                "procedure_type_concept_id": cfg.procedure_type_concept,
                "procedure_source_value": r["px_code"],
                "procedure_source_concept_id": result.source_concept_id,
                "visit_occurrence_id": r["encounter_id"],
            }
        )
    return rows, excluded


def transform_notes(
    merged: list[dict], rules: dict[str, RuleSet], allocator: IdAllocator
) -> list[dict]:
    rows = []
    for m in sorted(merged, key=lambda m: (m["parent_kind"], m["parent_id"])):
        rows.append(
            {
                "note_id": allocator.take("note"),
                "person_id": m["patient_id"],
                "note_date": m["note_date"],
                "note_type_concept_id": rules["note_type"].apply(m["parent_kind"]),
                "note_title": f"{m['parent_kind']} note {m['parent_id']}",
                "note_text": m["text"],
                "visit_occurrence_id": m["parent_id"] if m["parent_kind"] == "encounter" else None,
            }
        )
    return rows


def derive_observation_periods(store: DataStore, cfg: EtlConfig, allocator: IdAllocator) -> list[dict]:
    """One period per person spanning min..max event date; eventless persons get none."""
    spans: dict[int, tuple] = {}

    def see(person_id: int, *dates) -> None:
        for d in dates:
            if d is None:
                continue
            cur = spans.get(person_id)
            if cur is None:
                spans[person_id] = (d, d)
            else:
                spans[person_id] = (min(cur[0], d), max(cur[1], d))

    for r in store.iter_rows(Namespace.CDM, "condition_occurrence"):
        see(r["person_id"], r["condition_start_date"])
    for r in store.iter_rows(Namespace.CDM, "visit_occurrence"):
        see(r["person_id"], r["visit_start_date"], r["visit_end_date"])
    for r in store.iter_rows(Namespace.CDM, "procedure_occurrence"):
        see(r["person_id"], r["procedure_date"])
    for r in store.iter_rows(Namespace.CDM, "note"):
        see(r["person_id"], r["note_date"])
    rows = []
    for person_id in sorted(spans):
        start, end = spans[person_id]
        rows.append(
            {
                "observation_period_id": allocator.take("observation_period"),
                "person_id": person_id,
                "observation_period_start_date": start,
                "observation_period_end_date": end,
                "period_type_concept_id": cfg.period_type_concept,
            }
        )
    return rows


# -- pipeline --------------------------------------------------------------

CDM_EVENT_TABLES = [
    "person",
    "death",
    "observation_period",
    "condition_occurrence",
    "visit_occurrence",
    "procedure_occurrence",
    "note",
    "note_nlp",
    "cohort",
]


def run_etl(
    store: DataStore,
    vocab: VocabularyStore,
    rules: dict[str, RuleSet],
    cfg: EtlConfig | None = None,
) -> EtlReport:
    """Full RAW -> CDM run; idempotent (cdm event tables are rebuilt)."""
    cfg = cfg or EtlConfig()
    for name in ("gender", "race", "ethnicity", "enc_type", "note_type"):
        if name not in rules:
            raise RowError(f"missing rule set {name!r}")
    t0 = time.perf_counter()
    report = EtlReport()
    allocator = IdAllocator()
    for table in CDM_EVENT_TABLES:
        store.truncate(Namespace.CDM, table)
    store.truncate(Namespace.RESULTS, "etl_exclusions")

    raw_demo = store.rows(Namespace.RAW, "demographics")
    persons, deaths = transform_demographics(raw_demo, rules)
    if len(persons) != len(raw_demo):
        raise IntegrityError("demographics transform must be lossless")
    store.insert_rows(Namespace.CDM, "person", persons)
    store.insert_rows(Namespace.CDM, "death", deaths)
    report.tables["demographics"] = TableReport(len(raw_demo), len(persons))

    raw_enc = store.rows(Namespace.RAW, "encounters")
    visits = transform_encounters(raw_enc, rules, cfg)
    store.insert_rows(Namespace.CDM, "visit_occurrence", visits)
    report.tables["encounters"] = TableReport(len(raw_enc), len(visits))

    raw_dx = store.rows(Namespace.RAW, "diagnoses")
    conditions, dx_excluded = transform_diagnoses(raw_dx, vocab, cfg, allocator)
    store.insert_rows(Namespace.CDM, "condition_occurrence", conditions)
    report.tables["diagnoses"] = TableReport(len(raw_dx), len(conditions), dx_excluded)

    raw_px = store.rows(Namespace.RAW, "procedures")
    procedures, px_excluded = transform_procedures(raw_px, vocab, cfg, allocator)
    store.insert_rows(Namespace.CDM, "procedure_occurrence", procedures)
    report.tables["procedures"] = TableReport(len(raw_px), len(procedures), px_excluded)

    raw_notes = store.rows(Namespace.RAW, "note_entries")
    merged, note_errors = merge_note_entries(raw_notes)
    notes = transform_notes(merged, rules, allocator)
    store.insert_rows(Namespace.CDM, "note", notes)
    # the notes conservation pair counts merged parents, not fragments
    note_report = TableReport(len(merged) + len(note_errors), len(notes),
                              [(k, f"merge error: {m}") for k, m in note_errors])
    report.tables["notes"] = note_report

    periods = derive_observation_periods(store, cfg, allocator)
    store.insert_rows(Namespace.CDM, "observation_period", periods)

    exclusion_rows = []
    for table, trep in report.tables.items():
        trep.check_conservation()
        for key, reason in trep.excluded:
            exclusion_rows.append({"table_name": table, "raw_key": key, "reason": reason})
    store.insert_rows(Namespace.RESULTS, "etl_exclusions", exclusion_rows)

    for table in CDM_EVENT_TABLES:
        store.save(Namespace.CDM, table)
    store.save(Namespace.RESULTS, "etl_exclusions")

    report.duration_seconds = time.perf_counter() - t0
    report.id_watermarks = allocator.watermarks()
    return report
