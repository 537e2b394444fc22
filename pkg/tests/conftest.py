import pytest

from caremart import orchestrator
from caremart.config import CaremartConfig

SMALL_GEN = {
    "seed": 11,
    "n_patients": 80,
    "unmappable_procedure_fraction": 0.09627,
    "unmappable_diagnosis_fraction": 0.00129,
    "planted_concepts": [
        {"concept_id": 436583, "variants": 25, "negated_mentions": 3}
    ],
}


def make_config(root, gen=None, **kw) -> CaremartConfig:
    return CaremartConfig(store_root=str(root), gen=gen if gen is not None else dict(SMALL_GEN), **kw)


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """A small fully-run pipeline: gen -> ingest -> etl -> nlp -> characterize."""
    root = tmp_path_factory.mktemp("store")
    cfg = make_config(root)
    manifest = orchestrator.stage_gen(cfg)
    orchestrator.stage_ingest(cfg)
    orchestrator.stage_etl(cfg)
    orchestrator.stage_nlp(cfg)
    orchestrator.stage_characterize(cfg)
    store = orchestrator.open_store(cfg)
    return cfg, store, manifest
