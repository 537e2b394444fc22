"""HTTP service exposing concept search, cohort CRUD and pipeline stats.

Read-mostly: only cohort-definition writes mutate state, serialized
through a single lock. Pipeline stages run from the CLI, never from
the API. Errors are JSON ``{"code", "message"}`` bodies.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from . import orchestrator
from .cohort import generate as cohort_generate, parse_definition, write_cohort
from .config import CaremartConfig
from .errors import ValidationError
from .nlp.pipeline import distinct_variants
from .store import DataStore, Namespace
from .vocab import Concept

PAGE_SIZE = 50
PAGE_SIZE_CAP = 500


def _concept_json(c: Concept) -> dict:
    return {
        "concept_id": c.concept_id,
        "concept_name": c.concept_name,
        "domain_id": c.domain_id,
        "vocabulary_id": c.vocabulary_id,
        "concept_class_id": c.concept_class_id,
        "standard_concept": c.standard_concept,
        "concept_code": c.concept_code,
    }


def _paginate(items: list, page: int, page_size: int) -> dict:
    page = max(1, page)
    page_size = min(max(1, page_size), PAGE_SIZE_CAP)
    start = (page - 1) * page_size
    return {
        "items": items[start : start + page_size],
        "page": page,
        "page_size": page_size,
        "total": len(items),
    }


def create_app(cfg: CaremartConfig, store: DataStore | None = None) -> FastAPI:
    app = FastAPI(title="caremart", version="0.1.0")
    if store is None:
        store = DataStore(cfg.store_root)
        store.create_schemas()
    vocab = orchestrator.vocab_from_store(store)
    write_lock = threading.Lock()

    @app.exception_handler(HTTPException)
    async def http_error(_req: Request, exc: HTTPException) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status_code,
            content={"code": exc.status_code, "message": str(exc.detail)},
        )

    def _definition_row(definition_id: int) -> dict:
        for row in store.iter_rows(Namespace.RESULTS, "cohort_definition"):
            if row["cohort_definition_id"] == definition_id:
                return row
        raise HTTPException(404, f"no cohort definition {definition_id}")

    # -- concepts ----------------------------------------------------------

    @app.get("/concepts")
    def concepts(query: str = "", page: int = 1, page_size: int = PAGE_SIZE) -> dict:
        hits = vocab.search(query) if query else vocab.all_concepts()
        doc = _paginate(hits, page, page_size)
        doc["items"] = [_concept_json(c) for c in doc["items"]]
        return doc

    # -- cohort definitions ------------------------------------------------

    @app.post("/cohorts", status_code=201)
    def create_cohort(document: dict) -> dict:
        with write_lock:
            existing = store.rows(Namespace.RESULTS, "cohort_definition")
            next_id = 1 + max(
                (r["cohort_definition_id"] for r in existing), default=0
            )
            try:
                definition = parse_definition(dict(document, id=next_id), next_id)
            except ValidationError as exc:
                raise HTTPException(422, str(exc)) from None
            store.insert_rows(
                Namespace.RESULTS,
                "cohort_definition",
                [
                    {
                        "cohort_definition_id": definition.id,
                        "name": definition.name,
                        "definition_json": json.dumps(dict(document, id=next_id)),
                    }
                ],
            )
            store.save(Namespace.RESULTS, "cohort_definition")
        return {"id": definition.id, "name": definition.name}

    @app.get("/cohorts")
    def list_cohorts() -> dict:
        return {
            "items": [
                {"id": r["cohort_definition_id"], "name": r["name"]}
                for r in store.iter_rows(Namespace.RESULTS, "cohort_definition")
            ]
        }

    @app.get("/cohorts/{definition_id}")
    def get_cohort(definition_id: int) -> dict:
        row = _definition_row(definition_id)
        return {
            "id": row["cohort_definition_id"],
            "name": row["name"],
            "definition": json.loads(row["definition_json"]),
        }

    @app.post("/cohorts/{definition_id}/generate")
    def generate_cohort(definition_id: int) -> dict:
        row = _definition_row(definition_id)
        definition = parse_definition(json.loads(row["definition_json"]), definition_id)
        include_negated = not cfg.cohort_negation_filter
        rows, attrition = cohort_generate(definition, store, include_negated)
        with write_lock:
            write_cohort(store, rows, definition_id)
        return {
            "subjects": len({r["subject_id"] for r in rows}),
            "attrition": attrition.to_dict(),
        }

    @app.get("/cohorts/{definition_id}/results")
    def cohort_results(definition_id: int, page: int = 1,
                       page_size: int = PAGE_SIZE) -> dict:
        _definition_row(definition_id)
        rows = [
            {
                "subject_id": r["subject_id"],
                "cohort_start_date": r["cohort_start_date"].isoformat(),
                "cohort_end_date": r["cohort_end_date"].isoformat(),
            }
            for r in store.iter_rows(Namespace.CDM, "cohort")
            if r["cohort_definition_id"] == definition_id
        ]
        return _paginate(rows, page, page_size)

    # -- analytics ---------------------------------------------------------

    @app.get("/stats")
    def stats() -> dict:
        return {"items": store.rows(Namespace.RESULTS, "stat_record")}

    @app.get("/noteconcepts/{concept_id}/variants")
    def variants(concept_id: int) -> dict:
        pairs = distinct_variants(store, concept_id)
        return {
            "concept_id": concept_id,
            "distinct_count": len(pairs),
            "variants": [{"variant": v, "count": n} for v, n in pairs],
        }

    @app.get("/status")
    def status() -> dict:
        return orchestrator.read_status(cfg.store_root)

    # -- static UI ---------------------------------------------------------

    ui_dist = Path("frontend/dist")
    if ui_dist.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dist, html=True), name="ui")

    return app
