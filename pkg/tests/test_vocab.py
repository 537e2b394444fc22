import random

import pytest

from caremart.config import data_path
from caremart.errors import SchemaError
from caremart.vocab import (
    Concept,
    RuleSet,
    VocabularyStore,
    load_rule_sets,
    load_vocab,
)


@pytest.fixture(scope="module")
def vocab() -> VocabularyStore:
    return load_vocab(data_path("concept.csv"), data_path("concept_relationship.csv"))


def naive_to_cdm(vocab: VocabularyStore, code: str, order: list[str]):
    """Independent resolution: linear scan over all concepts, no indexes."""
    for vid in order:
        hits = [
            c for c in vocab.all_concepts()
            if c.vocabulary_id == vid and c.concept_code == code
        ]
        if not hits:
            continue
        c = hits[0]
        if c.standard_concept == "S":
            return (c.concept_id, c.concept_id, "mapped")
        targets = sorted(
            c2 for c1, c2, rel in vocab.all_relationships()
            if c1 == c.concept_id and rel == "Maps to"
        )
        if targets:
            return (c.concept_id, targets[0], "mapped")
        return (c.concept_id, 0, "source_only")
    return (0, 0, "unmapped")


def test_standard_code_maps_to_itself(vocab):
    r = vocab.to_cdm("230690007", ["SNOMED"])
    assert (r.source_concept_id, r.standard_concept_id, r.status) == (
        35207821, 35207821, "mapped"
    )


def test_source_code_one_hop(vocab):
    r = vocab.to_cdm("I63.9", ["ICD10CM"])
    assert r.source_concept_id == 45601639
    assert r.standard_concept_id == 35207821
    assert r.status == "mapped"


def test_vocabulary_fallback_order(vocab):
    assert vocab.to_cdm("I63.9", ["CPT4", "ICD10CM"]).status == "mapped"
    assert vocab.to_cdm("I63.9", ["CPT4"]).status == "unmapped"


def test_unknown_code_is_unmapped_not_error(vocab):
    r = vocab.to_cdm("NOPE123", ["ICD10CM", "ICD10", "ICD9CM"])
    assert (r.source_concept_id, r.standard_concept_id, r.status) == (0, 0, "unmapped")


def test_multi_target_picks_lowest_concept_id(vocab):
    r = vocab.to_cdm("Z99.9", ["ICD10CM"])
    assert r.status == "mapped"
    targets = vocab.maps_to(r.source_concept_id)
    assert len(targets) > 1
    assert r.standard_concept_id == min(targets)


def test_oracle_equivalence_on_random_codes(vocab):
    rng = random.Random(5)
    concepts = vocab.all_concepts()
    vocabularies = sorted({c.vocabulary_id for c in concepts})
    codes = [c.concept_code for c in concepts]
    for _ in range(1000):
        code = rng.choice(codes) if rng.random() < 0.8 else f"X{rng.randrange(10**6)}"
        order = rng.sample(vocabularies, rng.randint(1, len(vocabularies)))
        got = vocab.to_cdm(code, order)
        assert (got.source_concept_id, got.standard_concept_id, got.status) == naive_to_cdm(
            vocab, code, order
        )


def test_duplicate_vocab_code_rejected():
    c = Concept(1, "a", "d", "V", "k", "S", "X1")
    d = Concept(2, "b", "d", "V", "k", "S", "X1")
    with pytest.raises(SchemaError, match="duplicate"):
        VocabularyStore([c, d], [])


def test_search_matches_names_and_codes(vocab):
    assert 35207821 in {c.concept_id for c in vocab.search("stroke")}
    assert 45601639 in {c.concept_id for c in vocab.search("i63")}


# -- manual rule sets -------------------------------------------------------


@pytest.fixture(scope="module")
def rules():
    return load_rule_sets(data_path("rules.json"))


def test_ethnicity_rules(rules):
    rs = rules["ethnicity"]
    assert rs.apply("HISPANIC OR LATINO") == 38003563
    assert rs.apply("NOT HISPANIC OR LATINO") == 38003564
    assert rs.apply("SOMETHING ELSE") == 0


def test_enc_type_rules(rules):
    rs = rules["enc_type"]
    assert rs.apply("ABSTRACT") == 45877039
    assert rs.apply("ANTICOAGULATION") == 35803400
    assert rs.apply("APPOINTMENT") == 4089197
    assert rs.apply("UNHEARD OF") == 0


def test_rules_trim_whitespace(rules):
    assert rules["enc_type"].apply("  ABSTRACT  ") == 45877039


def test_first_match_wins():
    rs = RuleSet("f", [("A", 1), ("B", 2)])
    assert rs.apply("A") == 1
    assert rs.apply("B") == 2


def test_duplicate_match_value_rejected():
    with pytest.raises(SchemaError, match="duplicate"):
        RuleSet("f", [("A", 1), ("A", 2)])


def test_rule_set_round_trip():
    rs = RuleSet("f", [("A", 1)], default=9)
    assert RuleSet.from_dict(rs.to_dict()) == rs
