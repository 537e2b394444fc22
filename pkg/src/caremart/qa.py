"""Record-count reconciliation between the raw and cdm namespaces.

Produces one row per table pair in the five-column layout
``Comparison | RAW | CDM | Difference | RAW Lost (%)`` with percentages
truncated to three decimals (129,371 of 1,343,759 renders "9.627").
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import ROUND_DOWN, Decimal

from .errors import IntegrityError
from .etl import merge_note_entries
from .store import DataStore, Namespace

DEFAULT_PAIRS = [
    ("demographics", "person"),
    ("diagnoses", "condition_occurrence"),
    ("encounters", "visit_occurrence"),
    ("procedures", "procedure_occurrence"),
    ("note_entries", "note"),
]

DEFAULT_LIMIT_PCT = 10.0

HEADER = ["Comparison", "RAW", "CDM", "Difference", "RAW Lost (%)"]


def lost_pct(difference: int, raw_count: int) -> float:
    if raw_count == 0:
        return 0.0
    return 100.0 * difference / raw_count


def format_pct(value: float) -> str:
    # truncated, not rounded: 9.62754... renders "9.627"
    q = Decimal(str(value)).quantize(Decimal("0.001"), rounding=ROUND_DOWN)
    return f"{q.normalize():f}" if q == q.to_integral() else f"{q:f}"


@dataclass
class QaRow:
    comparison: str
    raw_count: int
    cdm_count: int

    @property
    def difference(self) -> int:
        return self.raw_count - self.cdm_count

    @property
    def raw_lost_pct(self) -> float:
        return lost_pct(self.difference, self.raw_count)

    def to_dict(self) -> dict:
        return {
            "comparison": self.comparison,
            "raw_count": self.raw_count,
            "cdm_count": self.cdm_count,
            "difference": self.difference,
            "raw_lost_pct": self.raw_lost_pct,
        }


@dataclass
class QaReport:
    rows: list[QaRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows]}

    @classmethod
    def from_dict(cls, doc: dict) -> "QaReport":
        return cls(
            [QaRow(r["comparison"], r["raw_count"], r["cdm_count"]) for r in doc["rows"]]
        )


def reconcile(store: DataStore, pairs: list[tuple[str, str]] | None = None) -> QaReport:
    """Count raw vs cdm rows for each table pair.

    The note pair counts merged note parents (an encounter or procedure
    with k text fragments is one unit), matching the one-note-per-parent
    contract of the ETL.
    """
    pairs = pairs if pairs is not None else DEFAULT_PAIRS
    report = QaReport()
    for raw_table, cdm_table in pairs:
        if raw_table == "note_entries":
            merged, errors = merge_note_entries(store.rows(Namespace.RAW, raw_table))
            raw_count = len(merged) + len(errors)
            comparison = f"RAW.note_entries (merged) vs CDM.{cdm_table}"
        else:
            raw_count = store.row_count(Namespace.RAW, raw_table)
            comparison = f"RAW.{raw_table} vs CDM.{cdm_table}"
        cdm_count = store.row_count(Namespace.CDM, cdm_table)
        if cdm_count > raw_count:
            raise IntegrityError(
                f"{comparison}: CDM has {cdm_count} rows but RAW only {raw_count}; "
                "the ETL must never invent rows"
            )
        report.rows.append(QaRow(comparison, raw_count, cdm_count))
    return report


def persist(report: QaReport, store: DataStore) -> None:
    store.truncate(Namespace.RESULTS, "qa_report")
    store.insert_rows(
        Namespace.RESULTS,
        "qa_report",
        [r.to_dict() for r in report.rows],
    )
    store.save(Namespace.RESULTS, "qa_report")


def assert_thresholds(
    report: QaReport, limits: dict[str, float] | None = None
) -> tuple[bool, list[str]]:
    """Check each row against its loss limit (default 10%)."""
    limits = limits or {}
    violations = []
    for row in report.rows:
        limit = limits.get(row.comparison, DEFAULT_LIMIT_PCT)
        if row.raw_lost_pct > limit:
            violations.append(
                f"{row.comparison}: lost {format_pct(row.raw_lost_pct)}% "
                f"exceeds limit {limit}%"
            )
    return (not violations, violations)


def render_report(report: QaReport, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(HEADER)
        for r in report.rows:
            writer.writerow(
                [r.comparison, r.raw_count, r.cdm_count, r.difference,
                 format_pct(r.raw_lost_pct)]
            )
        return buf.getvalue()
    if fmt == "text":
        cells = [HEADER] + [
            [r.comparison, f"{r.raw_count:,}", f"{r.cdm_count:,}", f"{r.difference:,}",
             format_pct(r.raw_lost_pct)]
            for r in report.rows
        ]
        widths = [max(len(row[i]) for row in cells) for i in range(len(HEADER))]
        lines = []
        for row in cells:
            lines.append(" | ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        lines.insert(1, "-+-".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")
