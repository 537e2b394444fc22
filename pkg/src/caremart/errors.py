"""Exception types shared across the datamart engine."""


class CaremartError(Exception):
    """Base class for all engine errors."""


class ConfigError(CaremartError):
    """Invalid configuration (bad value, impossible plant, unknown key)."""


class SchemaError(CaremartError):
    """Table/column mismatch against the registered schema."""


class TableNotFoundError(CaremartError):
    """Referenced a table absent from its namespace."""


class RowError(CaremartError):
    """A data row failed to parse or violated a row-level invariant."""


class IntegrityError(CaremartError):
    """Cross-table consistency violated (e.g. CDM count exceeds RAW count)."""


class ValidationError(CaremartError):
    """A cohort definition document failed validation."""


class StageOrderError(CaremartError):
    """A pipeline stage was invoked before its prerequisites."""


class CheckpointError(CaremartError):
    """NLP checkpoint file unusable; a clean restart is required."""
