"""caremart: a desk-scale clinical datamart engine.

Synthetic EHR generation, raw-to-CDM ETL with vocabulary mapping,
record-count QA, dictionary-based note NLP, characterization stats and
a cohort definition engine, tied together by a CLI and an HTTP service.
"""

from .config import CaremartConfig, load_config
from .errors import (
    CaremartError,
    CheckpointError,
    ConfigError,
    IntegrityError,
    RowError,
    SchemaError,
    StageOrderError,
    TableNotFoundError,
    ValidationError,
)
from .store import DataStore, Namespace

__version__ = "0.1.0"

__all__ = [
    "CaremartConfig",
    "CaremartError",
    "CheckpointError",
    "ConfigError",
    "DataStore",
    "IntegrityError",
    "Namespace",
    "RowError",
    "SchemaError",
    "StageOrderError",
    "TableNotFoundError",
    "ValidationError",
    "load_config",
    "__version__",
]
