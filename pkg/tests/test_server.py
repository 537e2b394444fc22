import json

import pytest
from fastapi.testclient import TestClient

from caremart.cohort import generate, load_definition
from caremart.config import data_path
from caremart.server import create_app


@pytest.fixture(scope="module")
def client(pipeline):
    cfg, store, _ = pipeline
    return TestClient(create_app(cfg, store))


def fixture_doc() -> dict:
    return json.loads(data_path("cohort_case_study_1.json").read_text(encoding="utf-8"))


def test_concept_search_finds_stroke(client):
    r = client.get("/concepts", params={"query": "stroke"})
    assert r.status_code == 200
    assert 35207821 in {c["concept_id"] for c in r.json()["items"]}


def test_concept_search_by_code(client):
    r = client.get("/concepts", params={"query": "E11.9"})
    names = {c["concept_name"] for c in r.json()["items"]}
    assert any("diabetes" in n.lower() for n in names)


def test_concept_pagination(client):
    first = client.get("/concepts", params={"page": 1, "page_size": 10}).json()
    second = client.get("/concepts", params={"page": 2, "page_size": 10}).json()
    assert len(first["items"]) == 10
    assert first["items"] != second["items"]
    assert first["total"] == second["total"]
    capped = client.get("/concepts", params={"page_size": 99999}).json()
    assert capped["page_size"] == 500


def test_cohort_crud_and_generate(client, pipeline):
    _, store, manifest = pipeline
    created = client.post("/cohorts", json=fixture_doc())
    assert created.status_code == 201
    cid = created.json()["id"]

    listed = client.get("/cohorts").json()["items"]
    assert cid in {c["id"] for c in listed}

    fetched = client.get(f"/cohorts/{cid}").json()
    assert fetched["definition"]["entry"]["domain"] == "condition"

    generated = client.post(f"/cohorts/{cid}/generate").json()
    assert generated["subjects"] == 5
    persons = [generated["attrition"]["initial_persons"]] + [
        r["persons"] for r in generated["attrition"]["after_rule"]
    ]
    assert all(a >= b for a, b in zip(persons, persons[1:]))

    results = client.get(f"/cohorts/{cid}/results").json()
    assert results["total"] == 5
    assert sorted(r["subject_id"] for r in results["items"]) == (
        manifest.planted_cohort_subject_ids
    )


def test_api_equals_engine_results(client, pipeline):
    _, store, _ = pipeline
    created = client.post("/cohorts", json=fixture_doc())
    cid = created.json()["id"]
    api_subjects = client.post(f"/cohorts/{cid}/generate").json()["subjects"]
    definition = load_definition(data_path("cohort_case_study_1.json"), cid)
    rows, _ = generate(definition, store)
    assert api_subjects == len({r["subject_id"] for r in rows})


def test_unknown_cohort_is_404(client):
    r = client.get("/cohorts/999")
    assert r.status_code == 404
    assert r.json() == {"code": 404, "message": "no cohort definition 999"}
    assert client.post("/cohorts/999/generate").status_code == 404
    assert client.get("/cohorts/999/results").status_code == 404


def test_malformed_definition_is_422(client):
    doc = fixture_doc()
    doc["entry"]["domain"] = "martian"
    r = client.post("/cohorts", json=doc)
    assert r.status_code == 422
    assert "domain" in r.json()["message"]


def test_variants_endpoint(client, pipeline):
    _, _, manifest = pipeline
    r = client.get("/noteconcepts/436583/variants").json()
    assert r["distinct_count"] == manifest.planted_variant_counts[436583]
    assert all(v["count"] >= 1 for v in r["variants"])
    empty = client.get("/noteconcepts/1/variants").json()
    assert empty["distinct_count"] == 0


def test_stats_endpoint(client):
    items = client.get("/stats").json()["items"]
    assert {"analysis_name", "count_value"} <= set(items[0])
    assert any(i["analysis_name"] == "row_count:person" for i in items)


def test_status_endpoint(client):
    doc = client.get("/status").json()
    assert set(doc) >= {"stage", "progress", "completed"}
    assert {"gen", "ingest", "etl", "nlp"} <= set(doc["completed"])
