from .dictionary import (
    CompiledDictionary,
    DictionaryEntry,
    Mention,
    compile_dictionary,
    load_dictionary_csv,
    load_custom_categories,
    normalize,
)
from .pipeline import NlpMetrics, NlpRunConfig, distinct_variants, patients_with_concept, run_pipeline

__all__ = [
    "CompiledDictionary",
    "DictionaryEntry",
    "Mention",
    "compile_dictionary",
    "load_dictionary_csv",
    "load_custom_categories",
    "normalize",
    "NlpMetrics",
    "NlpRunConfig",
    "distinct_variants",
    "patients_with_concept",
    "run_pipeline",
]
