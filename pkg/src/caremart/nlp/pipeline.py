"""Batch NLP extraction over the cdm note table into note_nlp.

Notes are processed in fixed-size batches by a pool of workers sharing
the immutable compiled dictionary; emission is re-serialized in note
order so output is identical for any worker count. A checkpoint file
records the last fully persisted batch and row watermark, allowing a
killed run to resume without duplicating rows.
"""

from __future__ import annotations

import datetime as dt
import json
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from ..errors import CheckpointError, ConfigError
from ..store import DataStore, Namespace
from .dictionary import CompiledDictionary, Mention

SNIPPET_RADIUS = 40
DEFAULT_NEGATION_TRIGGERS = ("no", "denies", "without", "not")
NEGATION_TOKEN_WINDOW = 5

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass
class NlpRunConfig:
    batch_size: int = 200
    worker_count: int = 1
    memory_budget_mb: int = 512
    checkpoint_every: int = 10  # batches
    nlp_system: str = "caremart-dict-nlp"
    nlp_date: dt.date = dt.date(2023, 2, 6)
    negation_enabled: bool = True
    negation_triggers: tuple[str, ...] = DEFAULT_NEGATION_TRIGGERS

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.worker_count < 1:
            raise ConfigError("worker_count must be >= 1")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")

    def max_inflight_batches(self) -> int:
        # crude bound: assume <=4 MB of working set per in-flight batch
        return max(self.worker_count, min(64, self.memory_budget_mb // 4 or 1))


@dataclass
class NlpMetrics:
    notes_processed: int = 0
    concepts_emitted: int = 0
    elapsed_seconds: float = 0.0
    last_checkpoint: int | None = None

    @property
    def notes_per_second(self) -> float:
        if self.elapsed_seconds <= 0:
            return 0.0
        return self.notes_processed / self.elapsed_seconds

    def to_dict(self) -> dict:
        return {
            "notes_processed": self.notes_processed,
            "concepts_emitted": self.concepts_emitted,
            "elapsed_seconds": self.elapsed_seconds,
            "notes_per_second": self.notes_per_second,
            "last_checkpoint": self.last_checkpoint,
        }


def term_exists_for(text: str, mention: Mention, triggers=DEFAULT_NEGATION_TRIGGERS) -> bool:
    """Minimal negation pass: trigger word within 5 tokens before the mention."""
    prefix = text[: mention.char_offset]
    tokens = _TOKEN_RE.findall(prefix)[-NEGATION_TOKEN_WINDOW:]
    trigger_set = {t.lower() for t in triggers}
    return not any(tok.lower() in trigger_set for tok in tokens)


def _extract_batch(batch: list[dict], dictionary: CompiledDictionary, cfg: NlpRunConfig) -> list[dict]:
    rows = []
    for note in batch:
        text = note["note_text"]
        for mention in dictionary.extract(text):
            start = max(0, mention.char_offset - SNIPPET_RADIUS)
            end = min(len(text), mention.end + SNIPPET_RADIUS)
            exists = True
            if cfg.negation_enabled:
                exists = term_exists_for(text, mention, cfg.negation_triggers)
            rows.append(
                {
                    "note_id": note["note_id"],
                    "section_concept_id": None,
                    "snippet": text[start:end],
                    "offset": mention.char_offset,
                    "lexical_variant": mention.matched_text,
                    "note_nlp_concept_id": mention.entry.concept_id,
                    "note_nlp_source_concept_id": 0,
                    "nlp_system": cfg.nlp_system,
                    "nlp_date": cfg.nlp_date,
                    "term_exists": exists,
                    "term_temporal": None,
                    "term_modifiers": mention.entry.category,
                }
            )
    return rows


def _read_checkpoint(path: Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return {
            "last_completed_batch": int(doc["last_completed_batch"]),
            "row_watermark": int(doc["row_watermark"]),
        }
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(
            f"checkpoint {path} unreadable ({exc}); rerun with a clean restart"
        ) from exc


def run_pipeline(
    store: DataStore,
    dictionary: CompiledDictionary,
    cfg: NlpRunConfig,
    checkpoint_path: str | Path | None = None,
    resume: bool = False,
    abort_after_batches: int | None = None,
) -> NlpMetrics:
    """Extract mentions from every cdm note into cdm.note_nlp.

    ``abort_after_batches`` simulates a mid-run kill for resume testing:
    the run stops after that many newly completed batches, after the
    next checkpoint write.
    """
    notes = sorted(store.rows(Namespace.CDM, "note"), key=lambda r: r["note_id"])
    batches = [notes[i : i + cfg.batch_size] for i in range(0, len(notes), cfg.batch_size)]

    start_batch = 0
    if checkpoint_path is not None:
        checkpoint_path = Path(checkpoint_path)
        if resume and checkpoint_path.exists():
            ck = _read_checkpoint(checkpoint_path)
            have = store.row_count(Namespace.CDM, "note_nlp")
            if have != ck["row_watermark"]:
                raise CheckpointError(
                    f"note_nlp holds {have} rows but checkpoint watermark is "
                    f"{ck['row_watermark']}; clean restart required"
                )
            start_batch = ck["last_completed_batch"] + 1
        elif not resume:
            store.truncate(Namespace.CDM, "note_nlp")
            if checkpoint_path.exists():
                checkpoint_path.unlink()
    else:
        store.truncate(Namespace.CDM, "note_nlp")

    metrics = NlpMetrics()
    next_id = store.row_count(Namespace.CDM, "note_nlp") + 1
    t0 = time.perf_counter()
    completed_since_start = 0
    window = cfg.max_inflight_batches()

    def persist(batch_index: int) -> None:
        nonlocal next_id
        store.save(Namespace.CDM, "note_nlp")
        if checkpoint_path is not None:
            tmp = checkpoint_path.with_suffix(".tmp")
            tmp.write_text(
                json.dumps(
                    {"last_completed_batch": batch_index, "row_watermark": next_id - 1}
                ),
                encoding="utf-8",
            )
            tmp.replace(checkpoint_path)
        metrics.last_checkpoint = batch_index

    with ThreadPoolExecutor(max_workers=cfg.worker_count) as pool:
        pending = []
        todo = list(enumerate(batches))[start_batch:]
        pos = 0
        while pos < len(todo) or pending:
            while pos < len(todo) and len(pending) < window:
                idx, batch = todo[pos]
                pending.append((idx, batch, pool.submit(_extract_batch, batch, dictionary, cfg)))
                pos += 1
            idx, batch, fut = pending.pop(0)
            rows = fut.result()
            for row in rows:
                row["note_nlp_id"] = next_id
                next_id += 1
            store.insert_rows(Namespace.CDM, "note_nlp", rows)
            metrics.notes_processed += len(batch)
            metrics.concepts_emitted += len(rows)
            completed_since_start += 1
            at_checkpoint = (idx + 1) % cfg.checkpoint_every == 0 or idx == len(batches) - 1
            if at_checkpoint:
                persist(idx)
            if abort_after_batches is not None and completed_since_start >= abort_after_batches:
                metrics.elapsed_seconds = time.perf_counter() - t0
                return metrics

    metrics.elapsed_seconds = time.perf_counter() - t0
    if not batches:
        store.save(Namespace.CDM, "note_nlp")
    return metrics


def distinct_variants(store: DataStore, concept_id: int) -> list[tuple[str, int]]:
    """Sorted (lexical_variant, count) pairs for one concept (case-sensitive)."""
    counts: dict[str, int] = {}
    for row in store.iter_rows(Namespace.CDM, "note_nlp"):
        if row["note_nlp_concept_id"] == concept_id:
            counts[row["lexical_variant"]] = counts.get(row["lexical_variant"], 0) + 1
    return sorted(counts.items())


def patients_with_concept(
    store: DataStore, concept_id: int, include_negated: bool = True
) -> set[int]:
    """Distinct person_ids owning >=1 mention of the concept."""
    note_person = {
        r["note_id"]: r["person_id"] for r in store.iter_rows(Namespace.CDM, "note")
    }
    out = set()
    for row in store.iter_rows(Namespace.CDM, "note_nlp"):
        if row["note_nlp_concept_id"] != concept_id:
            continue
        if not include_negated and not row["term_exists"]:
            continue
        person = note_person.get(row["note_id"])
        if person is not None:
            out.add(person)
    return out
