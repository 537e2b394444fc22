"""Standardized-vocabulary store and source-code mapping engine.

Resolution follows the OMOP convention: a source code is looked up by
(vocabulary_id, concept_code) across an ordered list of vocabularies;
the first vocabulary containing the code wins. A non-standard source
concept is resolved to its standard concept through a single "Maps to"
relationship hop. An unknown code yields concept id 0 on both sides --
unmapped is a value, never an error.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import RowError, SchemaError


@dataclass(frozen=True)
class Concept:
    concept_id: int
    concept_name: str
    domain_id: str
    vocabulary_id: str
    concept_class_id: str
    standard_concept: str  # "S" for standard, "" otherwise
    concept_code: str

    @property
    def is_standard(self) -> bool:
        return self.standard_concept == "S"


@dataclass(frozen=True)
class MappingResult:
    source_concept_id: int
    standard_concept_id: int
    resolved_vocabulary: str | None
    status: str  # mapped | source_only | unmapped

    @property
    def is_mapped(self) -> bool:
        return self.status == "mapped"


UNMAPPED = MappingResult(0, 0, None, "unmapped")


class VocabularyStore:
    """Immutable concept + relationship store; safe for concurrent reads."""

    def __init__(self, concepts: Iterable[Concept], relationships: Iterable[tuple[int, int, str]]):
        self._by_id: dict[int, Concept] = {}
        self._by_code: dict[tuple[str, str], Concept] = {}
        duplicates = []
        for c in concepts:
            if c.concept_id <= 0:
                raise RowError(f"concept_id must be positive, got {c.concept_id}")
            key = (c.vocabulary_id, c.concept_code)
            if key in self._by_code:
                duplicates.append(key)
                continue
            self._by_code[key] = c
            self._by_id[c.concept_id] = c
        if duplicates:
            raise SchemaError(f"duplicate (vocabulary_id, concept_code) rows: {duplicates}")
        self._maps_to: dict[int, list[int]] = {}
        for c1, c2, rel in relationships:
            if c1 not in self._by_id or c2 not in self._by_id:
                raise RowError(f"relationship ({c1}, {c2}, {rel!r}) references unknown concept")
            if rel == "Maps to":
                self._maps_to.setdefault(c1, []).append(c2)
        for targets in self._maps_to.values():
            targets.sort()

    def __len__(self) -> int:
        return len(self._by_id)

    def get(self, concept_id: int) -> Concept | None:
        return self._by_id.get(concept_id)

    def __contains__(self, concept_id: int) -> bool:
        return concept_id in self._by_id

    def lookup_code(self, vocabulary_id: str, code: str) -> Concept | None:
        return self._by_code.get((vocabulary_id, code))

    def maps_to(self, concept_id: int) -> list[int]:
        return list(self._maps_to.get(concept_id, ()))

    def search(self, query: str) -> list[Concept]:
        """Case-insensitive substring search over names and codes."""
        q = query.lower()
        hits = [
            c
            for c in self._by_id.values()
            if q in c.concept_name.lower() or q in c.concept_code.lower()
        ]
        hits.sort(key=lambda c: c.concept_id)
        return hits

    def all_concepts(self) -> list[Concept]:
        return sorted(self._by_id.values(), key=lambda c: c.concept_id)

    def all_relationships(self) -> list[tuple[int, int, str]]:
        return [
            (c1, c2, "Maps to")
            for c1, targets in sorted(self._maps_to.items())
            for c2 in targets
        ]

    # -- mapping -----------------------------------------------------------

    def to_cdm(self, code: str, vocab_order: list[str]) -> MappingResult:
        """Resolve a source code through an ordered vocabulary fallback chain."""
        if not vocab_order:
            raise ValueError("vocab_order must be non-empty")
        for vocab in vocab_order:
            concept = self._by_code.get((vocab, code))
            if concept is None:
                continue
            if concept.is_standard:
                return MappingResult(concept.concept_id, concept.concept_id, vocab, "mapped")
            targets = self._maps_to.get(concept.concept_id)
            if targets:
                # lowest target id wins when a code has several standard mappings
                return MappingResult(concept.concept_id, targets[0], vocab, "mapped")
            return MappingResult(concept.concept_id, 0, vocab, "source_only")
        return UNMAPPED

    def coverage_report(self, codes: Iterable[tuple[str, tuple[str, ...]]]) -> dict:
        counts = Counter()
        multi_target = 0
        total = 0
        for code, order in codes:
            total += 1
            result = self.to_cdm(code, list(order))
            counts[result.status] += 1
            if result.source_concept_id and len(self._maps_to.get(result.source_concept_id, ())) > 1:
                multi_target += 1
        unmapped = counts["unmapped"]
        return {
            "total": total,
            "mapped": counts["mapped"],
            "source_only": counts["source_only"],
            "unmapped": unmapped,
            "unmapped_fraction": (unmapped / total) if total else 0.0,
            "multi_target_sources": multi_target,
        }


def load_vocab(concept_csv: str | Path, relationship_csv: str | Path | None) -> VocabularyStore:
    concepts = []
    with open(concept_csv, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            concepts.append(
                Concept(
                    concept_id=int(row["concept_id"]),
                    concept_name=row["concept_name"],
                    domain_id=row["domain_id"],
                    vocabulary_id=row["vocabulary_id"],
                    concept_class_id=row["concept_class_id"],
                    standard_concept=row["standard_concept"],
                    concept_code=row["concept_code"],
                )
            )
    relationships = []
    if relationship_csv is not None and Path(relationship_csv).exists():
        with open(relationship_csv, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                relationships.append(
                    (int(row["concept_id_1"]), int(row["concept_id_2"]), row["relationship_id"])
                )
    return VocabularyStore(concepts, relationships)


# -- manual mapping rules --------------------------------------------------


@dataclass
class RuleSet:
    """Ordered first-match-wins value->concept rules for one raw field."""

    field_name: str
    rules: list[tuple[str, int]] = field(default_factory=list)
    default: int = 0

    def __post_init__(self) -> None:
        seen = set()
        for match, _ in self.rules:
            if match in seen:
                raise SchemaError(
                    f"rule set {self.field_name!r}: duplicate match value {match!r}"
                )
            seen.add(match)

    def apply(self, value: str) -> int:
        v = value.strip()
        for match, concept_id in self.rules:
            if v == match:
                return concept_id
        return self.default

    @classmethod
    def from_dict(cls, doc: dict) -> "RuleSet":
        return cls(
            field_name=doc["field"],
            rules=[(r["match"], int(r["concept_id"])) for r in doc["rules"]],
            default=int(doc.get("default", 0)),
        )

    def to_dict(self) -> dict:
        return {
            "field": self.field_name,
            "rules": [{"match": m, "concept_id": c} for m, c in self.rules],
            "default": self.default,
        }


def apply_rules(rs: RuleSet, value: str) -> int:
    return rs.apply(value)


def load_rule_sets(path: str | Path) -> dict[str, RuleSet]:
    """Load a JSON file holding one rule-set object or a list of them."""
    import json

    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    docs = doc if isinstance(doc, list) else [doc]
    out = {}
    for d in docs:
        rs = RuleSet.from_dict(d)
        out[rs.field_name] = rs
    return out
