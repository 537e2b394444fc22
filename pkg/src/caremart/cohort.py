"""Cohort-definition engine: entry event + inclusion criteria groups.

A definition names concept sets, an entry event (domain, concept set,
earliest/latest/all limiting, required observation days around the
index), and ordered inclusion groups of event-count criteria evaluated
in windows relative to the index date. Window bounds are inclusive and
a null bound means unbounded ("All days Before/After"). The criterion
count includes every matching event, the index event itself among
them. Cohort exit is the end of the observation period.

``brute_force_oracle`` re-evaluates a definition by scanning every
person's full event list with no indexes; the property suite holds
``generate`` to exact agreement with it.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError
from .store import DataStore, Namespace

DOMAINS = ("condition", "procedure", "visit", "note_nlp")
LIMITS = ("earliest", "latest", "all")
OPS = {">=": "gte", "<=": "lte", "=": "eq", "gte": "gte", "lte": "lte", "eq": "eq"}

_DOMAIN_TABLE = {
    "condition": ("condition_occurrence", "condition_concept_id", "condition_start_date"),
    "procedure": ("procedure_occurrence", "procedure_concept_id", "procedure_date"),
    "visit": ("visit_occurrence", "visit_concept_id", "visit_start_date"),
}


@dataclass(frozen=True)
class ConceptSet:
    id: int
    name: str
    concept_ids: frozenset[int]


@dataclass(frozen=True)
class EntryEvent:
    domain: str
    concept_set: int
    limit: str = "earliest"
    prior_obs_days: int = 0
    post_obs_days: int = 0


@dataclass(frozen=True)
class Criterion:
    domain: str
    concept_set: int
    op: str  # gte | lte | eq
    count: int
    start_offset_days: int | None = None
    end_offset_days: int | None = None

    def check_count(self, n: int) -> bool:
        if self.op == "gte":
            return n >= self.count
        if self.op == "lte":
            return n <= self.count
        return n == self.count

    def in_window(self, delta_days: int) -> bool:
        if self.start_offset_days is not None and delta_days < self.start_offset_days:
            return False
        if self.end_offset_days is not None and delta_days > self.end_offset_days:
            return False
        return True


@dataclass(frozen=True)
class CriterionGroup:
    name: str
    mode: str  # all | any
    criteria: tuple[Criterion, ...]


@dataclass(frozen=True)
class CohortDefinition:
    id: int
    name: str
    concept_sets: tuple[ConceptSet, ...]
    entry: EntryEvent
    inclusion: tuple[CriterionGroup, ...]
    exit: str = "end_of_observation"

    def concept_set_map(self) -> dict[int, ConceptSet]:
        return {cs.id: cs for cs in self.concept_sets}


@dataclass
class AttritionReport:
    initial_events: int = 0
    initial_persons: int = 0
    after_rule: list[tuple[str, int]] = field(default_factory=list)
    final_subjects: int = 0

    def to_dict(self) -> dict:
        return {
            "initial_events": self.initial_events,
            "initial_persons": self.initial_persons,
            "after_rule": [{"name": n, "persons": p} for n, p in self.after_rule],
            "final_subjects": self.final_subjects,
        }


# -- parsing ---------------------------------------------------------------


def parse_definition(document: dict | str, definition_id: int = 1) -> CohortDefinition:
    if isinstance(document, str):
        document = json.loads(document)
    try:
        sets = []
        seen_ids = set()
        for d in document["concept_sets"]:
            cs = ConceptSet(int(d["id"]), str(d.get("name", "")), frozenset(int(c) for c in d["concept_ids"]))
            if cs.id in seen_ids:
                raise ValidationError(f"duplicate concept set {cs.id}")
            if not cs.concept_ids:
                raise ValidationError(f"concept set {cs.id} is empty")
            seen_ids.add(cs.id)
            sets.append(cs)
        e = document["entry"]
        entry = EntryEvent(
            domain=e["domain"],
            concept_set=int(e["concept_set"]),
            limit=e.get("limit", "earliest"),
            prior_obs_days=int(e.get("prior_obs_days", 0)),
            post_obs_days=int(e.get("post_obs_days", 0)),
        )
        groups = []
        for g in document.get("inclusion", []):
            criteria = []
            for c in g["criteria"]:
                occ = c["occurrences"]
                window = c.get("window") or {}
                op = OPS.get(occ["op"])
                if op is None:
                    raise ValidationError(f"unknown occurrences op {occ['op']!r}")
                criteria.append(
                    Criterion(
                        domain=c["domain"],
                        concept_set=int(c["concept_set"]),
                        op=op,
                        count=int(occ["count"]),
                        start_offset_days=window.get("start_offset_days"),
                        end_offset_days=window.get("end_offset_days"),
                    )
                )
            if not criteria:
                raise ValidationError(f"inclusion group {g.get('name', '?')!r} has no criteria")
            mode = g.get("mode", "all")
            if mode not in ("all", "any"):
                raise ValidationError(f"unknown group mode {mode!r}")
            groups.append(CriterionGroup(g.get("name", ""), mode, tuple(criteria)))
        definition = CohortDefinition(
            id=int(document.get("id", definition_id)),
            name=str(document.get("name", "")),
            concept_sets=tuple(sets),
            entry=entry,
            inclusion=tuple(groups),
            exit=document.get("exit", "end_of_observation"),
        )
    except KeyError as exc:
        raise ValidationError(f"missing required field {exc.args[0]!r}") from None

    cs_map = definition.concept_set_map()
    if definition.entry.domain not in DOMAINS:
        raise ValidationError(f"unknown domain {definition.entry.domain!r}")
    if definition.entry.limit not in LIMITS:
        raise ValidationError(f"unknown entry limit {definition.entry.limit!r}")
    if definition.entry.prior_obs_days < 0 or definition.entry.post_obs_days < 0:
        raise ValidationError("observation day requirements must be >= 0")
    if definition.entry.concept_set not in cs_map:
        raise ValidationError(f"concept set {definition.entry.concept_set} is not defined")
    if definition.exit != "end_of_observation":
        raise ValidationError(f"unknown exit strategy {definition.exit!r}")
    for group in definition.inclusion:
        for c in group.criteria:
            if c.domain not in DOMAINS:
                raise ValidationError(f"unknown domain {c.domain!r}")
            if c.concept_set not in cs_map:
                raise ValidationError(f"concept set {c.concept_set} is not defined")
            if c.count < 0:
                raise ValidationError("occurrence count must be >= 0")
            if (
                c.start_offset_days is not None
                and c.end_offset_days is not None
                and c.start_offset_days > c.end_offset_days
            ):
                raise ValidationError(
                    f"empty window [{c.start_offset_days}, {c.end_offset_days}]"
                )
    return definition


def load_definition(path: str | Path, definition_id: int = 1) -> CohortDefinition:
    with open(path, encoding="utf-8") as fh:
        return parse_definition(json.load(fh), definition_id)


# -- event access ----------------------------------------------------------


def domain_events(
    store: DataStore, domain: str, include_negated: bool = False
) -> list[tuple[int, int, dt.date]]:
    """(person_id, concept_id, date) triples for one event domain.

    A note_nlp mention dates by its note's note_date; mentions with
    term_exists=false are excluded unless include_negated is set.
    """
    if domain == "note_nlp":
        note_map = {
            r["note_id"]: (r["person_id"], r["note_date"])
            for r in store.iter_rows(Namespace.CDM, "note")
        }
        out = []
        for r in store.iter_rows(Namespace.CDM, "note_nlp"):
            if not include_negated and not r["term_exists"]:
                continue
            meta = note_map.get(r["note_id"])
            if meta is not None:
                out.append((meta[0], r["note_nlp_concept_id"], meta[1]))
        return out
    table, concept_col, date_col = _DOMAIN_TABLE[domain]
    return [
        (r["person_id"], r[concept_col], r[date_col])
        for r in store.iter_rows(Namespace.CDM, table)
    ]


# -- generation ------------------------------------------------------------


def generate(
    definition: CohortDefinition,
    store: DataStore,
    include_negated: bool = False,
) -> tuple[list[dict], AttritionReport]:
    cs_map = definition.concept_set_map()
    obs = {
        r["person_id"]: (r["observation_period_start_date"], r["observation_period_end_date"])
        for r in store.iter_rows(Namespace.CDM, "observation_period")
    }

    # entry events with observation coverage
    entry_set = cs_map[definition.entry.concept_set].concept_ids
    prior = dt.timedelta(days=definition.entry.prior_obs_days)
    post = dt.timedelta(days=definition.entry.post_obs_days)
    events_by_person: dict[int, list[dt.date]] = {}
    for person, concept, date in domain_events(store, definition.entry.domain, include_negated):
        if concept not in entry_set:
            continue
        period = obs.get(person)
        if period is None or period[0] > date - prior or period[1] < date + post:
            continue
        events_by_person.setdefault(person, []).append(date)

    index_events: list[tuple[int, dt.date]] = []
    for person in sorted(events_by_person):
        dates = sorted(events_by_person[person])
        if definition.entry.limit == "earliest":
            index_events.append((person, dates[0]))
        elif definition.entry.limit == "latest":
            index_events.append((person, dates[-1]))
        else:
            index_events.extend((person, d) for d in sorted(set(dates)))

    attrition = AttritionReport(
        initial_events=len(index_events),
        initial_persons=len({p for p, _ in index_events}),
    )

    # pre-index criterion events: person -> sorted dates, per (domain, set)
    needed: set[tuple[str, int]] = {
        (c.domain, c.concept_set) for g in definition.inclusion for c in g.criteria
    }
    crit_events: dict[tuple[str, int], dict[int, list[dt.date]]] = {}
    for domain, set_id in needed:
        concept_ids = cs_map[set_id].concept_ids
        per_person: dict[int, list[dt.date]] = {}
        for person, concept, date in domain_events(store, domain, include_negated):
            if concept in concept_ids:
                per_person.setdefault(person, []).append(date)
        crit_events[(domain, set_id)] = per_person

    def criterion_holds(c: Criterion, person: int, index_date: dt.date) -> bool:
        dates = crit_events[(c.domain, c.concept_set)].get(person, ())
        n = sum(1 for d in dates if c.in_window((d - index_date).days))
        return c.check_count(n)

    surviving = index_events
    for group in definition.inclusion:
        kept = []
        for person, index_date in surviving:
            results = (criterion_holds(c, person, index_date) for c in group.criteria)
            ok = all(results) if group.mode == "all" else any(results)
            if ok:
                kept.append((person, index_date))
        surviving = kept
        attrition.after_rule.append((group.name, len({p for p, _ in surviving})))

    rows = []
    seen = set()
    for person, index_date in surviving:
        key = (person, index_date)
        if key in seen:
            continue
        seen.add(key)
        rows.append(
            {
                "cohort_definition_id": definition.id,
                "subject_id": person,
                "cohort_start_date": index_date,
                "cohort_end_date": obs[person][1],
            }
        )
    rows.sort(key=lambda r: (r["subject_id"], r["cohort_start_date"]))
    attrition.final_subjects = len({r["subject_id"] for r in rows})
    return rows, attrition


def write_cohort(store: DataStore, rows: list[dict], definition_id: int) -> None:
    remaining = [
        r for r in store.rows(Namespace.CDM, "cohort")
        if r["cohort_definition_id"] != definition_id
    ]
    store.truncate(Namespace.CDM, "cohort")
    store.insert_rows(Namespace.CDM, "cohort", remaining + rows)
    store.save(Namespace.CDM, "cohort")


# -- oracle ----------------------------------------------------------------


def brute_force_oracle(
    definition: CohortDefinition,
    store: DataStore,
    include_negated: bool = False,
) -> set[int]:
    """Literal per-person re-evaluation with no indexes or shortcuts."""
    cs_map = definition.concept_set_map()
    persons = [r["person_id"] for r in store.rows(Namespace.CDM, "person")]
    all_events = {
        domain: domain_events(store, domain, include_negated) for domain in DOMAINS
    }
    subjects = set()
    for person in persons:
        periods = [
            (r["observation_period_start_date"], r["observation_period_end_date"])
            for r in store.rows(Namespace.CDM, "observation_period")
            if r["person_id"] == person
        ]
        entry_dates = []
        for p, concept, date in all_events[definition.entry.domain]:
            if p != person:
                continue
            if concept not in cs_map[definition.entry.concept_set].concept_ids:
                continue
            covered = False
            for start, end in periods:
                if (
                    start <= date - dt.timedelta(days=definition.entry.prior_obs_days)
                    and end >= date + dt.timedelta(days=definition.entry.post_obs_days)
                ):
                    covered = True
            if covered:
                entry_dates.append(date)
        if not entry_dates:
            continue
        if definition.entry.limit == "earliest":
            candidates = [min(entry_dates)]
        elif definition.entry.limit == "latest":
            candidates = [max(entry_dates)]
        else:
            candidates = sorted(set(entry_dates))
        for index_date in candidates:
            passes = True
            for group in definition.inclusion:
                verdicts = []
                for c in group.criteria:
                    n = 0
                    for p, concept, date in all_events[c.domain]:
                        if p != person:
                            continue
                        if concept not in cs_map[c.concept_set].concept_ids:
                            continue
                        delta = (date - index_date).days
                        if c.start_offset_days is not None and delta < c.start_offset_days:
                            continue
                        if c.end_offset_days is not None and delta > c.end_offset_days:
                            continue
                        n += 1
                    verdicts.append(c.check_count(n))
                group_ok = all(verdicts) if group.mode == "all" else any(verdicts)
                if not group_ok:
                    passes = False
                    break
            if passes:
                subjects.add(person)
                break
    return subjects
