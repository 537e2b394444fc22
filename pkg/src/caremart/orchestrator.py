"""Pipeline stage orchestration shared by the CLI and the HTTP service.

Each stage reads/writes the CSV-backed store under the configured root
and records progress in ``<root>/status.json``. Stages enforce their
prerequisites (etl needs ingest, nlp/qa/characterize/cohort need etl)
and fail with an explicit "stage X requires Y" error when invoked out
of order.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

from . import qa as qa_mod
from .characterize import characterize
from .cohort import CohortDefinition, brute_force_oracle, generate as cohort_generate, write_cohort
from .config import CaremartConfig, data_path
from .errors import StageOrderError
from .etl import EtlConfig, run_etl
from .nlp.dictionary import (
    DictionaryEntry,
    compile_dictionary,
    load_custom_categories,
    load_dictionary_csv,
    load_manual_links,
)
from .nlp.pipeline import NlpRunConfig, run_pipeline
from .store import DataStore, Namespace
from .synth import Codebook, GenConfig, GroundTruthManifest, generate as synth_generate, write_raw
from .vocab import Concept, VocabularyStore, load_rule_sets, load_vocab

STAGES = ["gen", "ingest", "etl", "qa", "nlp", "characterize", "cohort"]


# -- status ----------------------------------------------------------------


def status_path(root: str | Path) -> Path:
    return Path(root) / "status.json"


def read_status(root: str | Path) -> dict:
    p = status_path(root)
    if not p.exists():
        return {"stage": "idle", "progress": 0.0, "completed": [], "metrics": {}}
    return json.loads(p.read_text(encoding="utf-8"))


def update_status(root: str | Path, stage: str, progress: float, metrics: dict | None = None,
                  completed: bool = False) -> None:
    doc = read_status(root)
    doc["stage"] = stage
    doc["progress"] = progress
    if metrics:
        doc.setdefault("metrics", {})[stage] = metrics
    if completed and stage not in doc["completed"]:
        doc["completed"].append(stage)
    p = status_path(root)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(doc, indent=2), encoding="utf-8")


def require_stage(root: str | Path, stage: str, prerequisite: str) -> None:
    if prerequisite not in read_status(root)["completed"]:
        raise StageOrderError(f"stage {stage!r} requires {prerequisite!r} to run first")


# -- shared loaders --------------------------------------------------------


def open_store(cfg: CaremartConfig) -> DataStore:
    store = DataStore(cfg.store_root)
    store.create_schemas()
    return store


def build_codebook(vocab: VocabularyStore) -> Codebook:
    dx = []
    px = []
    for c in vocab.all_concepts():
        if c.vocabulary_id in ("ICD10CM", "ICD10", "ICD9CM"):
            dx.append((c.concept_code, c.vocabulary_id, c.concept_name))
        elif c.vocabulary_id == "CPT4":
            px.append((c.concept_code, "CPT4"))
    return Codebook(diagnosis_codes=sorted(dx), procedure_codes=sorted(px))


def vocab_from_store(store: DataStore) -> VocabularyStore:
    concepts = [
        Concept(
            r["concept_id"], r["concept_name"], r["domain_id"], r["vocabulary_id"],
            r["concept_class_id"], r["standard_concept"], r["concept_code"],
        )
        for r in store.iter_rows(Namespace.CDM, "concept")
    ]
    rels = [
        (r["concept_id_1"], r["concept_id_2"], r["relationship_id"])
        for r in store.iter_rows(Namespace.CDM, "concept_relationship")
    ]
    return VocabularyStore(concepts, rels)


def gen_config(cfg: CaremartConfig) -> GenConfig:
    return GenConfig.from_dict(cfg.gen)


def dictionary_entries(cfg: CaremartConfig) -> list[DictionaryEntry]:
    """Base dictionary + generator-planted variants + optional custom categories."""
    entries = load_dictionary_csv(cfg.dictionary_file())
    gcfg = gen_config(cfg)
    for pc in gcfg.planted_concepts:
        for v in pc.variants:
            entries.append(DictionaryEntry(v, f"GT{pc.concept_id}", pc.concept_id))
    if cfg.custom_categories_path:
        entries.extend(load_custom_categories(cfg.custom_categories_path))
    return entries


def nlp_run_config(cfg: CaremartConfig, worker_count: int | None = None) -> NlpRunConfig:
    s = cfg.nlp
    return NlpRunConfig(
        batch_size=s.batch_size,
        worker_count=worker_count if worker_count is not None else s.worker_count,
        memory_budget_mb=s.memory_budget_mb,
        checkpoint_every=s.checkpoint_every,
        nlp_system=s.nlp_system,
        negation_enabled=s.negation_enabled,
    )


# -- stages ----------------------------------------------------------------


def stage_gen(cfg: CaremartConfig) -> GroundTruthManifest:
    store = open_store(cfg)
    update_status(cfg.store_root, "generating", 0.0)
    vocab = load_vocab(cfg.concept_csv(), cfg.relationship_csv())
    gcfg = gen_config(cfg)
    bundle, manifest = synth_generate(gcfg, build_codebook(vocab), dictionary_entries(cfg))
    counts = write_raw(bundle, store)
    manifest.save(Path(cfg.store_root) / "manifest.json")
    update_status(cfg.store_root, "generating", 1.0, {"raw_counts": counts}, completed=False)
    doc = read_status(cfg.store_root)
    if "gen" not in doc["completed"]:
        doc["completed"].append("gen")
    status_path(cfg.store_root).write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return manifest


def stage_ingest(cfg: CaremartConfig) -> dict[str, int]:
    require_stage(cfg.store_root, "ingest", "gen")
    store = open_store(cfg)
    update_status(cfg.store_root, "ingesting", 0.0)
    store.truncate(Namespace.CDM, "concept")
    store.truncate(Namespace.CDM, "concept_relationship")
    n_concepts = store.load_csv(Namespace.CDM, "concept", cfg.concept_csv())
    n_rels = store.load_csv(Namespace.CDM, "concept_relationship", cfg.relationship_csv())
    store.save(Namespace.CDM, "concept")
    store.save(Namespace.CDM, "concept_relationship")
    counts = {"concept": n_concepts, "concept_relationship": n_rels}
    manifest_file = Path(cfg.store_root) / "manifest.json"
    if manifest_file.exists():
        manifest = GroundTruthManifest.load(manifest_file)
        for table, expected in manifest.expected_raw_counts.items():
            actual = store.row_count(Namespace.RAW, table)
            if actual != expected:
                raise StageOrderError(
                    f"raw.{table} holds {actual} rows, manifest expects {expected}; rerun gen"
                )
    update_status(cfg.store_root, "ingesting", 1.0, counts, completed=False)
    doc = read_status(cfg.store_root)
    if "ingest" not in doc["completed"]:
        doc["completed"].append("ingest")
    status_path(cfg.store_root).write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return counts


def stage_etl(cfg: CaremartConfig):
    require_stage(cfg.store_root, "etl", "ingest")
    store = open_store(cfg)
    update_status(cfg.store_root, "etl", 0.0)
    vocab = vocab_from_store(store)
    rules = load_rule_sets(cfg.rules_file())
    report = run_etl(store, vocab, rules, EtlConfig())
    report.save(Path(cfg.store_root) / "etl_report.json")
    update_status(
        cfg.store_root, "etl", 1.0,
        {t: {"raw": r.raw_count, "cdm": r.cdm_count} for t, r in report.tables.items()},
        completed=False,
    )
    doc = read_status(cfg.store_root)
    if "etl" not in doc["completed"]:
        doc["completed"].append("etl")
    status_path(cfg.store_root).write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return report


def stage_qa(cfg: CaremartConfig, limits: dict[str, float] | None = None):
    require_stage(cfg.store_root, "qa", "etl")
    store = open_store(cfg)
    update_status(cfg.store_root, "qa", 0.0)
    report = qa_mod.reconcile(store)
    qa_mod.persist(report, store)
    passed, violations = qa_mod.assert_thresholds(report, limits or cfg.qa_limits)
    update_status(cfg.store_root, "qa", 1.0, {"passed": passed}, completed=False)
    doc = read_status(cfg.store_root)
    if "qa" not in doc["completed"]:
        doc["completed"].append("qa")
    status_path(cfg.store_root).write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return report, passed, violations


def stage_nlp(cfg: CaremartConfig, worker_count: int | None = None, resume: bool = False):
    require_stage(cfg.store_root, "nlp", "etl")
    store = open_store(cfg)
    update_status(cfg.store_root, "nlp", 0.0)
    manual_links = None
    links_file = cfg.manual_links_path or data_path("manual_links.json")
    if Path(links_file).exists():
        manual_links = load_manual_links(links_file)
    dictionary = compile_dictionary(dictionary_entries(cfg), manual_links)
    metrics = run_pipeline(
        store,
        dictionary,
        nlp_run_config(cfg, worker_count),
        checkpoint_path=Path(cfg.store_root) / "nlp_checkpoint.json",
        resume=resume,
    )
    (Path(cfg.store_root) / "nlp_metrics.json").write_text(
        json.dumps(metrics.to_dict(), indent=2), encoding="utf-8"
    )
    update_status(cfg.store_root, "nlp", 1.0, metrics.to_dict(), completed=False)
    doc = read_status(cfg.store_root)
    if "nlp" not in doc["completed"]:
        doc["completed"].append("nlp")
    status_path(cfg.store_root).write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return metrics


def stage_characterize(cfg: CaremartConfig):
    require_stage(cfg.store_root, "characterize", "etl")
    store = open_store(cfg)
    update_status(cfg.store_root, "characterizing", 0.0)
    records = characterize(store)
    update_status(cfg.store_root, "characterizing", 1.0, {"records": len(records)},
                  completed=False)
    doc = read_status(cfg.store_root)
    if "characterize" not in doc["completed"]:
        doc["completed"].append("characterize")
    status_path(cfg.store_root).write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return records


def stage_cohort_run(cfg: CaremartConfig, definition: CohortDefinition,
                     check_oracle: bool = False):
    require_stage(cfg.store_root, "cohort", "etl")
    store = open_store(cfg)
    include_negated = not cfg.cohort_negation_filter
    rows, attrition = cohort_generate(definition, store, include_negated)
    write_cohort(store, rows, definition.id)
    if check_oracle:
        oracle = brute_force_oracle(definition, store, include_negated)
        got = {r["subject_id"] for r in rows}
        if oracle != got:
            raise AssertionError(f"oracle mismatch: {sorted(oracle ^ got)}")
    return rows, attrition


def run_full_pipeline(cfg: CaremartConfig) -> dict:
    """gen -> ingest -> etl -> qa -> nlp -> characterize, timed."""
    t0 = time.perf_counter()
    stage_gen(cfg)
    stage_ingest(cfg)
    stage_etl(cfg)
    _, qa_passed, violations = stage_qa(cfg)
    metrics = stage_nlp(cfg)
    stage_characterize(cfg)
    return {
        "qa_passed": qa_passed,
        "qa_violations": violations,
        "nlp": metrics.to_dict(),
        "elapsed_seconds": time.perf_counter() - t0,
    }
