"""Deterministic synthetic raw-EHR generator with a ground-truth manifest.

Everything downstream is verified against what this module plants:
unmappable code counts, qualifying cohort members, and the exact
character offsets of every dictionary mention written into note text.
Generation is a pure function of the config (single ``random.Random``
seeded from ``cfg.seed``), so reruns are bit-identical.
"""

from __future__ import annotations

import datetime as dt
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .nlp.dictionary import DictionaryEntry, normalize
from .store import DataStore, Namespace

# Surface variants reported for the fall concept in the source data;
# seeds the combinatorial variant builder.
FALL_VARIANT_EXAMPLES = [
    "accident &fell",
    "Accident a fall",
    "accident and fall",
    "accident and falling",
    "accident and fell",
    "accident from falling",
    "accident/ fall",
    "accidents/falls",
    "down Falls",
    "down Fall",
    "down and falling",
    "down and falls",
    "fall",
    "fall and injured",
]

_VARIANT_LEADS = [
    "accident", "accidents", "down", "slip", "slips", "trip", "trips",
    "stumble", "stumbles", "tumble", "tumbles", "mishap", "incident", "spill",
]
_VARIANT_CONNECTORS = [" and ", " & ", " &", "/ ", "/", " from ", " a ", " with "]
_VARIANT_BASES = ["fall", "falls", "falling", "fell"]

_DISTRACTORS = [
    "patient", "seen", "today", "session", "gait", "progress", "tolerated",
    "well", "reports", "continues", "improving", "ambulation", "endurance",
    "notes", "review", "plan", "goals", "steady", "stable", "morning",
    "clinic", "visit", "course", "home", "program", "followup", "discussed",
    "caregiver", "independent", "assistance", "minimal", "moderate",
]

_GENDERS = ["MALE", "FEMALE"]
_RACES = ["WHITE", "BLACK", "ASIAN", "UNKNOWN"]
_ETHNICITIES = ["HISPANIC OR LATINO", "NOT HISPANIC OR LATINO", "UNKNOWN"]
_ENC_TYPES = [
    "ABSTRACT",
    "ALLERGY MIXING",
    "ALLERGY SHOT",
    "AMBULATORY VISIT SUMMARY",
    "ANTICOAGULATION",
    "ANTICOAGULATION SCHEDULED",
    "APPOINTMENT",
    "OUTPATIENT",
    "INPATIENT",
    "LOCAL CLINIC WALK-IN",  # deliberately unlisted in the enc_type rules
]


def plant_safe(variant: str) -> bool:
    """A variant is plantable when it survives normalization verbatim."""
    if not variant or "\n" in variant:
        return False
    if not (variant[0].isalnum() and variant[-1].isalnum()):
        return False
    norm, _ = normalize(variant)
    return bool(norm)


def build_fall_variants(n: int) -> list[str]:
    """Deterministic list of n distinct plantable fall surface variants."""
    out: list[str] = []
    seen: set[str] = set()

    def add(v: str) -> None:
        if len(out) < n and v not in seen and plant_safe(v):
            seen.add(v)
            out.append(v)

    for v in FALL_VARIANT_EXAMPLES:
        add(v)
    for lead in _VARIANT_LEADS:
        for conn in _VARIANT_CONNECTORS:
            for base in _VARIANT_BASES:
                add(f"{lead}{conn}{base}")
    for lead in _VARIANT_LEADS:
        for conn in _VARIANT_CONNECTORS:
            for base in _VARIANT_BASES:
                add(f"{lead.capitalize()}{conn}{base}")
    if len(out) < n:
        raise ConfigError(f"cannot build {n} distinct fall variants (have {len(out)})")
    return out


@dataclass
class PlantedCohortConfig:
    n_qualifying: int = 5
    n_entry_only: int = 3  # have the entry code but fail an inclusion rule
    entry_dx_code: str = "I63.9"
    entry_dx_name: str = "Cerebral infarction"
    inclusion_dx_code: str = "E11.9"
    inclusion_dx_name: str = "Type 2 diabetes mellitus"
    inclusion_px_code: str = "97110"
    dx_code_type: str = "ICD10CM"
    px_code_type: str = "CPT4"


@dataclass
class PlantedConceptConfig:
    concept_id: int
    variants: list[str]
    mention_patients: int | None = None  # default: one patient per variant, capped
    negated_mentions: int = 0


@dataclass
class GenConfig:
    seed: int = 42
    n_patients: int = 100
    date_range: tuple[dt.date, dt.date] = (dt.date(2016, 1, 1), dt.date(2018, 12, 31))
    unmappable_procedure_fraction: float = 0.0
    unmappable_diagnosis_fraction: float = 0.0
    encounters_per_patient: tuple[int, int] = (2, 6)
    diagnoses_per_patient: tuple[int, int] = (2, 8)
    procedures_per_patient: tuple[int, int] = (2, 8)
    note_fraction: float = 0.6  # fraction of encounters that carry a note
    fragments_per_note: tuple[int, int] = (1, 3)
    procedure_note_fraction: float = 0.15
    death_fraction: float = 0.05
    gender_split: float = 0.5  # fraction MALE
    planted_cohort: PlantedCohortConfig = field(default_factory=PlantedCohortConfig)
    planted_concepts: list[PlantedConceptConfig] = field(default_factory=list)

    def __post_init__(self) -> None:
        for name in ("unmappable_procedure_fraction", "unmappable_diagnosis_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.planted_cohort.n_qualifying + self.planted_cohort.n_entry_only > self.n_patients:
            raise ConfigError(
                "planted cohort sizes exceed n_patients "
                f"({self.planted_cohort.n_qualifying}+{self.planted_cohort.n_entry_only}"
                f" > {self.n_patients})"
            )
        for pc in self.planted_concepts:
            for v in pc.variants:
                if "\n" in v:
                    raise ConfigError(f"variant {v!r} contains a newline")
                if not plant_safe(v):
                    raise ConfigError(f"variant {v!r} is not plantable verbatim")

    @classmethod
    def from_dict(cls, doc: dict) -> "GenConfig":
        doc = dict(doc)
        if "date_range" in doc:
            a, b = doc["date_range"]
            doc["date_range"] = (dt.date.fromisoformat(a), dt.date.fromisoformat(b))
        for key in ("encounters_per_patient", "diagnoses_per_patient",
                    "procedures_per_patient", "fragments_per_note"):
            if key in doc:
                doc[key] = tuple(doc[key])
        if "planted_cohort" in doc:
            doc["planted_cohort"] = PlantedCohortConfig(**doc["planted_cohort"])
        if "planted_concepts" in doc:
            parsed = []
            for d in doc["planted_concepts"]:
                d = dict(d)
                # an integer variant count means "build that many fall variants"
                if isinstance(d.get("variants"), int):
                    d["variants"] = build_fall_variants(d["variants"])
                parsed.append(PlantedConceptConfig(**d))
            doc["planted_concepts"] = parsed
        return cls(**doc)

    @classmethod
    def from_json(cls, path: str | Path) -> "GenConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class MentionSpan:
    parent_kind: str
    parent_id: int
    patient_id: int
    concept_id: int
    variant: str
    offset: int  # char offset into the merged note text
    negated: bool = False

    def to_dict(self) -> dict:
        return self.__dict__.copy()


@dataclass
class GroundTruthManifest:
    expected_raw_counts: dict[str, int] = field(default_factory=dict)
    expected_unmapped: dict[str, int] = field(default_factory=dict)
    planted_cohort_subject_ids: list[int] = field(default_factory=list)
    planted_entry_only_ids: list[int] = field(default_factory=list)
    planted_variant_counts: dict[int, int] = field(default_factory=dict)
    planted_mention_spans: list[MentionSpan] = field(default_factory=list)

    def mention_patients(self, concept_id: int, include_negated: bool = True) -> set[int]:
        return {
            s.patient_id
            for s in self.planted_mention_spans
            if s.concept_id == concept_id and (include_negated or not s.negated)
        }

    def to_dict(self) -> dict:
        return {
            "expected_raw_counts": self.expected_raw_counts,
            "expected_unmapped": self.expected_unmapped,
            "planted_cohort_subject_ids": self.planted_cohort_subject_ids,
            "planted_entry_only_ids": self.planted_entry_only_ids,
            "planted_variant_counts": {str(k): v for k, v in self.planted_variant_counts.items()},
            "planted_mention_spans": [s.to_dict() for s in self.planted_mention_spans],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GroundTruthManifest":
        return cls(
            expected_raw_counts=dict(doc["expected_raw_counts"]),
            expected_unmapped=dict(doc["expected_unmapped"]),
            planted_cohort_subject_ids=list(doc["planted_cohort_subject_ids"]),
            planted_entry_only_ids=list(doc.get("planted_entry_only_ids", [])),
            planted_variant_counts={int(k): v for k, v in doc["planted_variant_counts"].items()},
            planted_mention_spans=[MentionSpan(**d) for d in doc["planted_mention_spans"]],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "GroundTruthManifest":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class RawBundle:
    demographics: list[dict] = field(default_factory=list)
    diagnoses: list[dict] = field(default_factory=list)
    encounters: list[dict] = field(default_factory=list)
    note_entries: list[dict] = field(default_factory=list)
    procedures: list[dict] = field(default_factory=list)

    def tables(self) -> dict[str, list[dict]]:
        return {
            "demographics": self.demographics,
            "diagnoses": self.diagnoses,
            "encounters": self.encounters,
            "note_entries": self.note_entries,
            "procedures": self.procedures,
        }


@dataclass
class Codebook:
    """Mappable code pools drawn from the vocabulary fixture."""

    diagnosis_codes: list[tuple[str, str, str]]  # (code, code_type, name)
    procedure_codes: list[tuple[str, str]]  # (code, code_type)


def _rand_date(rng: random.Random, start: dt.date, end: dt.date) -> dt.date:
    return start + dt.timedelta(days=rng.randint(0, (end - start).days))


class _NoteBuilder:
    """Accumulates per-parent note fragments and computes merged offsets."""

    def __init__(self) -> None:
        # (parent_kind, parent_id) -> list of fragment strings
        self.fragments: dict[tuple[str, int], list[str]] = {}
        self.meta: dict[tuple[str, int], tuple[int, dt.date]] = {}

    def add_parent(self, kind: str, pid: int, patient_id: int, date: dt.date, n_frag: int,
                   rng: random.Random, words: list[str]) -> None:
        frags = []
        for _ in range(n_frag):
            frags.append(_sentence(rng, words))
        self.fragments[(kind, pid)] = frags
        self.meta[(kind, pid)] = (patient_id, date)

    def plant(self, kind: str, pid: int, variant: str, rng: random.Random,
              words: list[str], negated: bool) -> tuple[int, int]:
        """Append a sentence containing the variant.

        Returns (fragment index, offset within fragment); the merged
        offset is only computable once all planting is finished, via
        merged_offset().
        """
        frags = self.fragments[(kind, pid)]
        frag_i = rng.randrange(len(frags))
        if negated:
            lead = f"{_word(rng, words).capitalize()} denies "
        else:
            lead = f"{_word(rng, words).capitalize()} reported "
        tail = f" during {_word(rng, words)} {_word(rng, words)}."
        sentence = lead + variant + tail
        offset_in_frag = len(frags[frag_i]) + 1 + len(lead)  # +1 for joining space
        frags[frag_i] = frags[frag_i] + " " + sentence
        return frag_i, offset_in_frag

    def merged_offset(self, kind: str, pid: int, frag_i: int, offset_in_frag: int) -> int:
        frags = self.fragments[(kind, pid)]
        return sum(len(frags[j]) + 1 for j in range(frag_i)) + offset_in_frag  # +1 per "\n"

    def rows(self) -> list[dict]:
        out = []
        for (kind, pid), frags in sorted(self.fragments.items()):
            patient_id, date = self.meta[(kind, pid)]
            for seq, text in enumerate(frags, start=1):
                out.append(
                    {
                        "patient_id": patient_id,
                        "parent_id": pid,
                        "parent_kind": kind,
                        "entry_seq": seq,
                        "note_date": date,
                        "text_fragment": text,
                    }
                )
        return out


def _word(rng: random.Random, words: list[str]) -> str:
    return rng.choice(words)


def _sentence(rng: random.Random, words: list[str]) -> str:
    k = rng.randint(6, 12)
    toks = [_word(rng, words) for _ in range(k)]
    return (" ".join(toks)).capitalize() + "."


def _safe_distractors(dictionary_entries: list[DictionaryEntry] | None,
                      extra_terms: list[str]) -> list[str]:
    """Distractor words that cannot collide with any dictionary token."""
    banned: set[str] = set()
    terms = [e.surface_term for e in dictionary_entries or []] + extra_terms
    for term in terms:
        norm, _ = normalize(term)
        banned.update(norm.split(" "))
    words = [w for w in _DISTRACTORS if w not in banned]
    if len(words) < 10:
        raise ConfigError("dictionary terms overlap nearly all distractor words")
    return words


def generate(
    cfg: GenConfig,
    codebook: Codebook,
    dictionary_entries: list[DictionaryEntry] | None = None,
) -> tuple[RawBundle, GroundTruthManifest]:
    rng = random.Random(cfg.seed)
    start, end = cfg.date_range
    bundle = RawBundle()
    manifest = GroundTruthManifest()
    pc = cfg.planted_cohort

    planted_terms = [v for p in cfg.planted_concepts for v in p.variants]
    words = _safe_distractors(dictionary_entries, planted_terms)

    patient_ids = [1000 + i for i in range(1, cfg.n_patients + 1)]
    special = rng.sample(patient_ids, pc.n_qualifying + pc.n_entry_only)
    qualifying = sorted(special[: pc.n_qualifying])
    entry_only = sorted(special[pc.n_qualifying :])
    manifest.planted_cohort_subject_ids = qualifying
    manifest.planted_entry_only_ids = entry_only

    # demographics
    n_male = round(cfg.n_patients * cfg.gender_split)
    for i, pid in enumerate(patient_ids):
        birth = _rand_date(rng, dt.date(1930, 1, 1), dt.date(2000, 12, 31))
        death = None
        if rng.random() < cfg.death_fraction:
            death = _rand_date(rng, start, end)
        bundle.demographics.append(
            {
                "patient_id": pid,
                "birth_date": birth,
                "death_date": death,
                "gender": _GENDERS[0] if i < n_male else _GENDERS[1],
                "race": rng.choice(_RACES),
                "ethnicity": rng.choice(_ETHNICITIES),
            }
        )

    # encounters
    next_enc = 50000
    enc_by_patient: dict[int, list[dict]] = {p: [] for p in patient_ids}
    for pid in patient_ids:
        for _ in range(rng.randint(*cfg.encounters_per_patient)):
            next_enc += 1
            s = _rand_date(rng, start, end)
            e = s + dt.timedelta(days=rng.randint(0, 3))
            row = {
                "patient_id": pid,
                "encounter_id": next_enc,
                "enc_type": rng.choice(_ENC_TYPES),
                "enc_start_date": s,
                "enc_end_date": e if rng.random() < 0.8 else None,
            }
            bundle.encounters.append(row)
            enc_by_patient[pid].append(row)

    def rand_encounter(pid: int) -> dict | None:
        encs = enc_by_patient[pid]
        if encs and rng.random() < 0.9:
            return rng.choice(encs)
        return None

    # diagnoses (background pool excludes the planted cohort codes)
    dx_pool = [
        c for c in codebook.diagnosis_codes
        if c[0] not in (pc.entry_dx_code, pc.inclusion_dx_code)
    ]
    if not dx_pool:
        raise ConfigError("diagnosis code pool is empty after excluding planted codes")
    for pid in patient_ids:
        for _ in range(rng.randint(*cfg.diagnoses_per_patient)):
            code, code_type, name = rng.choice(dx_pool)
            enc = rand_encounter(pid)
            bundle.diagnoses.append(
                {
                    "patient_id": pid,
                    "encounter_id": enc["encounter_id"] if enc else None,
                    "dx_code": code,
                    "dx_code_type": code_type,
                    "dx_name": name,
                    "dx_date": enc["enc_start_date"] if enc else _rand_date(rng, start, end),
                }
            )

    # procedures
    px_pool = [c for c in codebook.procedure_codes if c[0] != pc.inclusion_px_code]
    if not px_pool:
        raise ConfigError("procedure code pool is empty after excluding planted codes")
    next_px = 800000
    for pid in patient_ids:
        for _ in range(rng.randint(*cfg.procedures_per_patient)):
            code, code_type = rng.choice(px_pool)
            enc = rand_encounter(pid)
            next_px += 1
            bundle.procedures.append(
                {
                    "patient_id": pid,
                    "encounter_id": enc["encounter_id"] if enc else None,
                    "procedure_id": next_px,
                    "px_code": code,
                    "px_code_type": code_type,
                    "px_date": enc["enc_start_date"] if enc else _rand_date(rng, start, end),
                }
            )

    # planted cohort rows (always mappable, never overwritten below)
    planted_dx: list[int] = []
    planted_px: list[int] = []

    def plant_dx(pid: int, code: str, name: str) -> None:
        enc = rand_encounter(pid)
        bundle.diagnoses.append(
            {
                "patient_id": pid,
                "encounter_id": enc["encounter_id"] if enc else None,
                "dx_code": code,
                "dx_code_type": pc.dx_code_type,
                "dx_name": name,
                "dx_date": enc["enc_start_date"] if enc else _rand_date(rng, start, end),
            }
        )
        planted_dx.append(len(bundle.diagnoses) - 1)

    for pid in qualifying:
        plant_dx(pid, pc.entry_dx_code, pc.entry_dx_name)
        plant_dx(pid, pc.inclusion_dx_code, pc.inclusion_dx_name)
        enc = rand_encounter(pid)
        next_px += 1
        bundle.procedures.append(
            {
                "patient_id": pid,
                "encounter_id": enc["encounter_id"] if enc else None,
                "procedure_id": next_px,
                "px_code": pc.inclusion_px_code,
                "px_code_type": pc.px_code_type,
                "px_date": enc["enc_start_date"] if enc else _rand_date(rng, start, end),
            }
        )
        planted_px.append(len(bundle.procedures) - 1)
    for pid in entry_only:
        # entry event plus one of two inclusion codes: fails the "all" group
        plant_dx(pid, pc.entry_dx_code, pc.entry_dx_name)
        plant_dx(pid, pc.inclusion_dx_code, pc.inclusion_dx_name)

    # unmappable code injection, exact counts per configured fraction
    def inject_unmappable(rows: list[dict], protected: list[int], fraction: float,
                          code_field: str, make_code) -> int:
        k = round(fraction * len(rows))
        candidates = [i for i in range(len(rows)) if i not in set(protected)]
        if k > len(candidates):
            raise ConfigError(
                f"cannot plant {k} unmappable rows with only {len(candidates)} candidates"
            )
        for j, i in enumerate(sorted(rng.sample(candidates, k))):
            rows[i][code_field] = make_code(j)
        return k

    manifest.expected_unmapped["diagnoses"] = inject_unmappable(
        bundle.diagnoses, planted_dx, cfg.unmappable_diagnosis_fraction,
        "dx_code", lambda j: f"ZZ{j:05d}.X",
    )
    manifest.expected_unmapped["procedures"] = inject_unmappable(
        bundle.procedures, planted_px, cfg.unmappable_procedure_fraction,
        "px_code", lambda j: f"UNK{j:05d}",
    )

    # notes
    nb = _NoteBuilder()
    for row in bundle.encounters:
        if rng.random() < cfg.note_fraction:
            nb.add_parent(
                "encounter", row["encounter_id"], row["patient_id"],
                row["enc_start_date"], rng.randint(*cfg.fragments_per_note), rng, words,
            )
    for row in bundle.procedures:
        if rng.random() < cfg.procedure_note_fraction:
            nb.add_parent(
                "procedure", row["procedure_id"], row["patient_id"],
                row["px_date"], rng.randint(*cfg.fragments_per_note), rng, words,
            )
    # every patient needs at least one encounter note so mentions can land
    noted_patients = {nb.meta[k][0] for k in nb.fragments}
    for pid in patient_ids:
        if pid not in noted_patients and enc_by_patient[pid]:
            enc = enc_by_patient[pid][0]
            if ("encounter", enc["encounter_id"]) not in nb.fragments:
                nb.add_parent(
                    "encounter", enc["encounter_id"], pid, enc["enc_start_date"],
                    1, rng, words,
                )

    # planted dictionary mentions
    enc_notes_by_patient: dict[int, list[tuple[str, int]]] = {}
    for key, (patient_id, _) in nb.meta.items():
        enc_notes_by_patient.setdefault(patient_id, []).append(key)
    pending: list[tuple[MentionSpan, int, int]] = []  # span (offset tbd), frag_i, in-frag offset
    for p in cfg.planted_concepts:
        n_variants = len(p.variants)
        hosts = sorted(enc_notes_by_patient)
        n_hosts = p.mention_patients or min(n_variants, len(hosts))
        if n_hosts > len(hosts):
            raise ConfigError(
                f"concept {p.concept_id}: {n_hosts} mention patients requested, "
                f"only {len(hosts)} patients have notes"
            )
        chosen = rng.sample(hosts, n_hosts)
        for i, variant in enumerate(p.variants):
            patient_id = chosen[i % n_hosts]
            key = rng.choice(enc_notes_by_patient[patient_id])
            frag_i, in_frag = nb.plant(key[0], key[1], variant, rng, words, negated=False)
            pending.append(
                (MentionSpan(key[0], key[1], patient_id, p.concept_id, variant, -1),
                 frag_i, in_frag)
            )
        for _ in range(p.negated_mentions):
            patient_id = rng.choice(chosen)
            key = rng.choice(enc_notes_by_patient[patient_id])
            variant = rng.choice(p.variants)
            frag_i, in_frag = nb.plant(key[0], key[1], variant, rng, words, negated=True)
            pending.append(
                (MentionSpan(key[0], key[1], patient_id, p.concept_id, variant, -1, True),
                 frag_i, in_frag)
            )
        if n_variants:
            manifest.planted_variant_counts[p.concept_id] = n_variants
    for span, frag_i, in_frag in pending:
        span.offset = nb.merged_offset(span.parent_kind, span.parent_id, frag_i, in_frag)
        manifest.planted_mention_spans.append(span)

    bundle.note_entries = nb.rows()
    manifest.expected_raw_counts = {t: len(rows) for t, rows in bundle.tables().items()}
    return bundle, manifest


def write_raw(bundle: RawBundle, store: DataStore) -> dict[str, int]:
    counts = {}
    for table, rows in bundle.tables().items():
        store.truncate(Namespace.RAW, table)
        counts[table] = store.insert_rows(Namespace.RAW, table, rows)
        store.save(Namespace.RAW, table)
    return counts
