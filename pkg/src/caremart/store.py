"""Typed tabular store with three namespaces (raw, cdm, results).

Tables live in memory as lists of dicts and are persisted one CSV per
table under ``<root>/<namespace>/<table>.csv`` (RFC 4180, UTF-8, header
row). Identifier columns are 64-bit integers and text columns carry no
length cap. The registry of table schemas is closed: no operation may
create a table that is not declared below.
"""

from __future__ import annotations

import csv
import datetime as dt
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import RowError, SchemaError, TableNotFoundError


class Namespace(str, Enum):
    RAW = "raw"
    CDM = "cdm"
    RESULTS = "results"


@dataclass(frozen=True)
class Column:
    name: str
    kind: str  # int64 | string | date | float | bool
    nullable: bool = False


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple[Column, ...]

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]


def _t(name: str, *cols: tuple) -> TableSchema:
    return TableSchema(name, tuple(Column(*c) for c in cols))


RAW_TABLES = {
    s.name: s
    for s in [
        _t(
            "demographics",
            ("patient_id", "int64"),
            ("birth_date", "date"),
            ("death_date", "date", True),
            ("gender", "string"),
            ("race", "string"),
            ("ethnicity", "string"),
        ),
        _t(
            "diagnoses",
            ("patient_id", "int64"),
            ("encounter_id", "int64", True),
            ("dx_code", "string"),
            ("dx_code_type", "string"),
            ("dx_name", "string"),
            ("dx_date", "date"),
        ),
        _t(
            "encounters",
            ("patient_id", "int64"),
            ("encounter_id", "int64"),
            ("enc_type", "string"),
            ("enc_start_date", "date"),
            ("enc_end_date", "date", True),
        ),
        _t(
            "note_entries",
            ("patient_id", "int64"),
            ("parent_id", "int64"),
            ("parent_kind", "string"),  # encounter | procedure
            ("entry_seq", "int64"),
            ("note_date", "date"),
            ("text_fragment", "string"),
        ),
        _t(
            "procedures",
            ("patient_id", "int64"),
            ("encounter_id", "int64", True),
            ("procedure_id", "int64"),
            ("px_code", "string"),
            ("px_code_type", "string"),
            ("px_date", "date"),
        ),
    ]
}

CDM_TABLES = {
    s.name: s
    for s in [
        _t(
            "person",
            ("person_id", "int64"),
            ("gender_concept_id", "int64"),
            ("year_of_birth", "int64"),
            ("month_of_birth", "int64"),
            ("day_of_birth", "int64"),
            ("race_concept_id", "int64"),
            ("ethnicity_concept_id", "int64"),
            ("gender_source_value", "string"),
            ("race_source_value", "string"),
            ("ethnicity_source_value", "string"),
        ),
        _t(
            "death",
            ("person_id", "int64"),
            ("death_date", "date"),
        ),
        _t(
            "observation_period",
            ("observation_period_id", "int64"),
            ("person_id", "int64"),
            ("observation_period_start_date", "date"),
            ("observation_period_end_date", "date"),
            ("period_type_concept_id", "int64"),
        ),
        _t(
            "condition_occurrence",
            ("condition_occurrence_id", "int64"),
            ("person_id", "int64"),
            ("condition_concept_id", "int64"),
            ("condition_start_date", "date"),
            ("condition_type_concept_id", "int64"),
            ("condition_source_value", "string"),
            ("condition_source_concept_id", "int64"),
            ("visit_occurrence_id", "int64", True),
        ),
        _t(
            "visit_occurrence",
            ("visit_occurrence_id", "int64"),
            ("person_id", "int64"),
            ("visit_concept_id", "int64"),
            ("visit_start_date", "date"),
            ("visit_end_date", "date"),
            ("visit_type_concept_id", "int64"),
            ("visit_source_value", "string"),
        ),
        _t(
            "procedure_occurrence",
            ("procedure_occurrence_id", "int64"),
            ("person_id", "int64"),
            ("procedure_concept_id", "int64"),
            ("procedure_date", "date"),
            ("procedure_type_concept_id", "int64"),
            ("procedure_source_value", "string"),
            ("procedure_source_concept_id", "int64"),
            ("visit_occurrence_id", "int64", True),
        ),
        _t(
            "note",
            ("note_id", "int64"),
            ("person_id", "int64"),
            ("note_date", "date"),
            ("note_type_concept_id", "int64"),
            ("note_title", "string"),
            ("note_text", "string"),
            ("visit_occurrence_id", "int64", True),
        ),
        _t(
            "note_nlp",
            ("note_nlp_id", "int64"),
            ("note_id", "int64"),
            ("section_concept_id", "int64", True),
            ("snippet", "string"),
            ("offset", "int64"),
            ("lexical_variant", "string"),
            ("note_nlp_concept_id", "int64"),
            ("note_nlp_source_concept_id", "int64"),
            ("nlp_system", "string"),
            ("nlp_date", "date"),
            ("term_exists", "bool"),
            ("term_temporal", "string", True),
            ("term_modifiers", "string", True),
        ),
        _t(
            "cohort",
            ("cohort_definition_id", "int64"),
            ("subject_id", "int64"),
            ("cohort_start_date", "date"),
            ("cohort_end_date", "date"),
        ),
        _t(
            "concept",
            ("concept_id", "int64"),
            ("concept_name", "string"),
            ("domain_id", "string"),
            ("vocabulary_id", "string"),
            ("concept_class_id", "string"),
            ("standard_concept", "string"),
            ("concept_code", "string"),
        ),
        _t(
            "concept_relationship",
            ("concept_id_1", "int64"),
            ("concept_id_2", "int64"),
            ("relationship_id", "string"),
        ),
    ]
}

RESULTS_TABLES = {
    s.name: s
    for s in [
        _t(
            "stat_record",
            ("analysis_name", "string"),
            ("stratum_1", "string", True),
            ("stratum_2", "string", True),
            ("count_value", "int64"),
            ("avg_value", "float", True),
        ),
        _t(
            "qa_report",
            ("comparison", "string"),
            ("raw_count", "int64"),
            ("cdm_count", "int64"),
            ("difference", "int64"),
            ("raw_lost_pct", "float"),
        ),
        _t(
            "etl_exclusions",
            ("table_name", "string"),
            ("raw_key", "string"),
            ("reason", "string"),
        ),
        _t(
            "cohort_definition",
            ("cohort_definition_id", "int64"),
            ("name", "string"),
            ("definition_json", "string"),
        ),
    ]
}

SCHEMA_REGISTRY: dict[Namespace, dict[str, TableSchema]] = {
    Namespace.RAW: RAW_TABLES,
    Namespace.CDM: CDM_TABLES,
    Namespace.RESULTS: RESULTS_TABLES,
}


def _format_cell(value: Any, kind: str) -> str:
    if value is None:
        return ""
    if kind == "date":
        return value.isoformat()
    if kind == "bool":
        return "true" if value else "false"
    return str(value)


def _parse_cell(text: str, col: Column, line_no: int, table: str) -> Any:
    if text == "":
        if col.nullable:
            return None
        if col.kind == "string":
            return ""
        raise RowError(f"{table} line {line_no}: column {col.name!r} may not be empty")
    try:
        if col.kind == "int64":
            return int(text)
        if col.kind == "float":
            return float(text)
        if col.kind == "date":
            return dt.date.fromisoformat(text)
        if col.kind == "bool":
            if text in ("true", "false"):
                return text == "true"
            raise ValueError(text)
        return text
    except ValueError as exc:
        raise RowError(
            f"{table} line {line_no}: cannot parse {text!r} as {col.kind} for column {col.name!r}"
        ) from exc


class DataStore:
    """In-memory tables backed by per-table CSV files under a root dir."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._tables: dict[tuple[Namespace, str], list[dict]] = {}
        self._sealed: set[Namespace] = set()
        self._lock = threading.Lock()

    # -- schema / lifecycle ------------------------------------------------

    def create_schemas(self) -> None:
        """Create the three namespaces and every registered table.

        Idempotent: existing table files are loaded, not truncated.
        """
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise SchemaError(f"storage path {self.root} not writable: {exc}") from exc
        for ns, tables in SCHEMA_REGISTRY.items():
            (self.root / ns.value).mkdir(parents=True, exist_ok=True)
            for name in tables:
                key = (ns, name)
                path = self._path(ns, name)
                if path.exists():
                    if key not in self._tables:
                        self._tables[key] = self._read_csv(ns, name, path)
                else:
                    self._tables.setdefault(key, [])
                    self.save(ns, name)

    def schema(self, ns: Namespace, table: str) -> TableSchema:
        try:
            return SCHEMA_REGISTRY[ns][table]
        except KeyError:
            raise TableNotFoundError(f"no table {table!r} in namespace {ns.value!r}") from None

    def _path(self, ns: Namespace, table: str) -> Path:
        return self.root / ns.value / f"{table}.csv"

    def _rows_mut(self, ns: Namespace, table: str) -> list[dict]:
        self.schema(ns, table)
        key = (ns, table)
        if key not in self._tables:
            raise TableNotFoundError(
                f"table {table!r} not initialized; call create_schemas() first"
            )
        return self._tables[key]

    def seal(self, ns: Namespace) -> None:
        """Mark a namespace read-only for the remainder of a pipeline stage."""
        self._sealed.add(ns)

    def unseal(self, ns: Namespace) -> None:
        self._sealed.discard(ns)

    # -- data access -------------------------------------------------------

    def rows(self, ns: Namespace, table: str) -> list[dict]:
        return list(self._rows_mut(ns, table))

    def iter_rows(self, ns: Namespace, table: str) -> Iterator[dict]:
        return iter(self._rows_mut(ns, table))

    def row_count(self, ns: Namespace, table: str) -> int:
        return len(self._rows_mut(ns, table))

    def truncate(self, ns: Namespace, table: str) -> None:
        with self._lock:
            self._rows_mut(ns, table).clear()

    def insert_rows(self, ns: Namespace, table: str, rows: Iterable[dict]) -> int:
        if ns in self._sealed:
            raise SchemaError(f"namespace {ns.value!r} is sealed")
        schema = self.schema(ns, table)
        cols = schema.column_names()
        prepared = []
        for row in rows:
            extra = set(row) - set(cols)
            if extra:
                raise SchemaError(
                    f"{ns.value}.{table}: unknown column(s) {sorted(extra)}"
                )
            prepared.append({c: row.get(c) for c in cols})
        with self._lock:
            self._rows_mut(ns, table).extend(prepared)
        return len(prepared)

    # -- CSV interchange ---------------------------------------------------

    def load_csv(self, ns: Namespace, table: str, path: str | Path) -> int:
        """Append rows from a CSV file; returns the number of data rows."""
        schema = self.schema(ns, table)
        rows = self._read_csv(ns, table, Path(path))
        self._rows_mut(ns, table).extend(rows)
        return len(rows)

    def _read_csv(self, ns: Namespace, table: str, path: Path) -> list[dict]:
        schema = self.schema(ns, table)
        cols = schema.column_names()
        rows: list[dict] = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise SchemaError(f"{path}: missing header row") from None
            if header != cols:
                unknown = [c for c in header if c not in cols]
                if unknown:
                    raise SchemaError(
                        f"{path}: unknown column(s) {unknown} for {ns.value}.{table}"
                    )
                raise SchemaError(
                    f"{path}: header {header} does not match schema columns {cols}"
                )
            for line_no, record in enumerate(reader, start=2):
                if len(record) != len(cols):
                    raise RowError(
                        f"{table} line {line_no}: expected {len(cols)} fields, got {len(record)}"
                    )
                rows.append(
                    {
                        col.name: _parse_cell(cell, col, line_no, table)
                        for col, cell in zip(schema.columns, record)
                    }
                )
        return rows

    def export_csv(self, ns: Namespace, table: str, path: str | Path) -> int:
        schema = self.schema(ns, table)
        rows = self._rows_mut(ns, table)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(schema.column_names())
            for row in rows:
                writer.writerow(
                    [_format_cell(row[c.name], c.kind) for c in schema.columns]
                )
        return len(rows)

    def save(self, ns: Namespace, table: str) -> None:
        self.export_csv(ns, table, self._path(ns, table))

    def save_all(self) -> None:
        for ns, table in list(self._tables):
            self.save(ns, table)

    # -- integrity ---------------------------------------------------------

    def check_referential_integrity(self) -> list[str]:
        """Full-scan check that every cdm event row references a real person."""
        persons = {r["person_id"] for r in self.rows(Namespace.CDM, "person")}
        problems = []
        for table in (
            "death",
            "observation_period",
            "condition_occurrence",
            "visit_occurrence",
            "procedure_occurrence",
            "note",
        ):
            for row in self.iter_rows(Namespace.CDM, table):
                if row["person_id"] not in persons:
                    problems.append(f"cdm.{table}: person_id {row['person_id']} missing")
        return problems
