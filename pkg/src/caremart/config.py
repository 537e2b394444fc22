"""Engine configuration: one JSON file, strict keys, env overrides.

Unknown keys fail loudly. ``CAREMART_*`` environment variables beat
file values (CAREMART_PORT, CAREMART_STORE_ROOT, CAREMART_SEED).
Fixture paths default to the packaged data files.
"""

from __future__ import annotations

import json
import os
from importlib import resources
from pathlib import Path

from pydantic import BaseModel, ConfigDict, ValidationError as PydanticValidationError

from .errors import ConfigError

ENV_PREFIX = "CAREMART_"
DEFAULT_CONFIG_FILENAME = "caremart.json"


def data_path(name: str) -> Path:
    """Path of a packaged fixture file."""
    return Path(str(resources.files("caremart").joinpath("data", name)))


class NlpSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")
    batch_size: int = 200
    worker_count: int = 4
    memory_budget_mb: int = 512
    checkpoint_every: int = 10
    nlp_system: str = "caremart-dict-nlp"
    negation_enabled: bool = True


class CaremartConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    store_root: str = ".caremart_store"
    port: int = 8017
    vocab_concept_csv: str | None = None
    vocab_relationship_csv: str | None = None
    rules_path: str | None = None
    dictionary_path: str | None = None
    custom_categories_path: str | None = None
    manual_links_path: str | None = None
    gen: dict = {}
    nlp: NlpSettings = NlpSettings()
    qa_limits: dict[str, float] = {}
    cohort_negation_filter: bool = True

    def concept_csv(self) -> Path:
        return Path(self.vocab_concept_csv) if self.vocab_concept_csv else data_path("concept.csv")

    def relationship_csv(self) -> Path:
        return (
            Path(self.vocab_relationship_csv)
            if self.vocab_relationship_csv
            else data_path("concept_relationship.csv")
        )

    def rules_file(self) -> Path:
        return Path(self.rules_path) if self.rules_path else data_path("rules.json")

    def dictionary_file(self) -> Path:
        return Path(self.dictionary_path) if self.dictionary_path else data_path("dictionary.csv")


def _apply_env(doc: dict) -> dict:
    port = os.environ.get(ENV_PREFIX + "PORT")
    if port is not None:
        doc["port"] = port
    root = os.environ.get(ENV_PREFIX + "STORE_ROOT")
    if root is not None:
        doc["store_root"] = root
    seed = os.environ.get(ENV_PREFIX + "SEED")
    if seed is not None:
        doc.setdefault("gen", {})
        doc["gen"] = dict(doc["gen"], seed=int(seed))
    return doc


def load_config(path: str | Path | None = None) -> CaremartConfig:
    """Load config from an explicit path, ./caremart.json, or defaults."""
    doc: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    elif Path(DEFAULT_CONFIG_FILENAME).exists():
        with open(DEFAULT_CONFIG_FILENAME, encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        with open(data_path("caremart.default.json"), encoding="utf-8") as fh:
            doc = json.load(fh)
    doc = _apply_env(doc)
    try:
        return CaremartConfig.model_validate(doc)
    except PydanticValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise ConfigError(f"invalid config key {loc!r}: {first['msg']}") from exc
