import datetime as dt
import random
import re
import string

import pytest

from caremart import orchestrator
from caremart.errors import CheckpointError, ConfigError
from caremart.nlp.dictionary import (
    CompiledDictionary,
    DictionaryEntry,
    _norm_arrays,
    compile_dictionary,
    load_manual_links,
    normalize,
)
from caremart.nlp.kernels import backend_name, scan
from caremart.nlp.pipeline import (
    NlpRunConfig,
    distinct_variants,
    patients_with_concept,
    run_pipeline,
    term_exists_for,
)
from caremart.store import DataStore, Namespace


# -- normalization ----------------------------------------------------------


def test_normalize_lowercases_and_collapses():
    norm, idx = normalize("Accident  a\t FALL")
    assert norm == "accident a fall"
    assert len(idx) == len(norm)


def test_normalize_strips_loose_punctuation_keeps_infix():
    assert normalize("a/b")[0] == "a/b"
    assert normalize("a / b")[0] == "a b"
    assert normalize("fall.")[0] == "fall"
    assert normalize("don't")[0] == "don't"


def test_normalize_index_maps_to_original():
    text = "Pt.  had: accident/ fall!"
    norm, idx = normalize(text)
    for i, ch in enumerate(norm):
        orig = text[idx[i]]
        assert orig.lower() == ch or (ch == " " and orig.isspace())


def test_vectorized_normalizer_equals_reference():
    rng = random.Random(99)
    pool = string.ascii_letters + string.digits + " \t\n.,;:!?&/-_'\"()éД漢  "
    for _ in range(500):
        s = "".join(rng.choice(pool) for _ in range(rng.randrange(0, 80)))
        norm, idx = normalize(s)
        v_norm, v_idx, v_alnum = _norm_arrays(s)
        assert v_norm == norm
        assert v_idx.tolist() == idx
        assert v_alnum.tolist() == [c.isalnum() for c in norm]


# -- dictionary matching ----------------------------------------------------


ENTRIES = [
    DictionaryEntry("fall", "C1", 436583),
    DictionaryEntry("near fall", "C2", 4029593),
    DictionaryEntry("accident a fall", "C3", 436583),
    DictionaryEntry("left", "C4", 2000000001, "side of body"),
    DictionaryEntry("knee", "C5", 2000000002, "location on body"),
]


@pytest.fixture(scope="module")
def small_dict():
    return CompiledDictionary(ENTRIES)


def naive_mentions(dictionary: CompiledDictionary, text: str):
    """Oracle matcher: regex longest-match over the normalized text."""
    norm, idx = normalize(text)
    patterns = sorted(dictionary.patterns, key=len, reverse=True)
    found = []
    cursor = 0
    while cursor < len(norm):
        best = None
        for p in patterns:
            if not norm.startswith(p, cursor):
                continue
            end = cursor + len(p)
            if cursor > 0 and norm[cursor - 1].isalnum():
                continue
            if end < len(norm) and norm[end].isalnum():
                continue
            best = p
            break
        if best is None:
            cursor += 1
            continue
        o_start, o_end = idx[cursor], idx[cursor + len(best) - 1] + 1
        found.append((o_start, text[o_start:o_end]))
        cursor += len(best)
    return found


def test_simple_match_offsets(small_dict):
    ms = small_dict.extract("patient had a fall today")
    assert [(m.char_offset, m.matched_text) for m in ms] == [(14, "fall")]
    assert ms[0].entry.concept_id == 436583


def test_longest_match_wins(small_dict):
    ms = small_dict.extract("had a near fall yesterday")
    assert [(m.matched_text, m.entry.concept_id) for m in ms] == [("near fall", 4029593)]


def test_token_boundaries_block_partial_words(small_dict):
    assert small_dict.extract("rainfall and fallacy and pitfalls") == []


def test_case_and_whitespace_insensitive_verbatim_variant(small_dict):
    ms = small_dict.extract("noted Accident  a FALL during transfer")
    assert len(ms) == 1
    assert ms[0].matched_text == "Accident  a FALL"
    assert ms[0].char_offset == 6


def test_punctuation_variants_recovered_verbatim(small_dict):
    text = "history: accident/ a fall (unwitnessed)"
    ms = small_dict.extract(text)
    assert len(ms) == 1
    assert ms[0].matched_text == "accident/ a fall"
    assert text[ms[0].char_offset :].startswith("accident/ a fall")


def test_two_single_word_entries_two_mentions(small_dict):
    ms = small_dict.extract("strengthen left knee daily")
    got = {(m.matched_text, m.entry.category) for m in ms}
    assert got == {("left", "side of body"), ("knee", "location on body")}


def test_spans_pairwise_disjoint(small_dict):
    text = "fall near fall accident a fall fall"
    ms = sorted(small_dict.extract(text), key=lambda m: m.char_offset)
    for a, b in zip(ms, ms[1:]):
        assert a.end <= b.char_offset


def test_matches_equal_naive_oracle(small_dict):
    rng = random.Random(17)
    words = ["fall", "near", "accident", "a", "knee", "left", "gait", "notes", "xyz"]
    for _ in range(300):
        text = " ".join(rng.choice(words) for _ in range(rng.randrange(1, 25)))
        got = sorted((m.char_offset, m.matched_text) for m in small_dict.extract(text))
        assert got == sorted(naive_mentions(small_dict, text))


def test_backends_agree(small_dict):
    texts = [
        "patient had a fall today",
        "near fall then fall then accident a fall",
        "left knee strengthening",
    ]
    for text in texts:
        a = [(m.char_offset, m.matched_text) for m in small_dict.extract(text, "numba")]
        b = [(m.char_offset, m.matched_text) for m in small_dict.extract(text, "numpy")]
        assert a == b


def test_backend_env_override(monkeypatch):
    monkeypatch.setenv("CAREMART_BACKEND", "python")
    assert backend_name() == "numpy"
    monkeypatch.setenv("CAREMART_BACKEND", "weird")
    with pytest.raises(ValueError):
        backend_name()


def test_scan_buffer_grows_on_overflow():
    # nested patterns over a long run force more raw hits than the
    # initial buffer holds; the scan must retry with a larger one
    d = CompiledDictionary(
        [DictionaryEntry("a", "C1", 1), DictionaryEntry("aa", "C2", 2),
         DictionaryEntry("aaa", "C3", 3)]
    )
    assert d.extract("a" * 300) == []
    assert len(d.extract("aaa")) == 1


def test_empty_dictionary_rejected():
    with pytest.raises(ConfigError):
        CompiledDictionary([])


def test_unnormalizable_term_rejected():
    with pytest.raises(ConfigError):
        CompiledDictionary([DictionaryEntry("...", "C", 1)])


def test_manual_links_patch_zero_concepts(tmp_path):
    p = tmp_path / "links.json"
    p.write_text('{"C0558873": 4029593}', encoding="utf-8")
    links = load_manual_links(p)
    d = compile_dictionary([DictionaryEntry("near fall", "C0558873", 0)], links)
    ms = d.extract("had a near fall")
    assert ms[0].entry.concept_id == 4029593


def test_unlinked_term_warns(caplog):
    import logging

    with caplog.at_level(logging.WARNING, logger="caremart.nlp.dictionary"):
        compile_dictionary([DictionaryEntry("widget", "C9", 0)])
    assert "no concept link" in caplog.text


# -- negation ---------------------------------------------------------------


def _mention(dictionary, text):
    return dictionary.extract(text)[0]


def test_negation_trigger_within_window(small_dict):
    text = "patient denies any recent fall"
    assert term_exists_for(text, _mention(small_dict, text)) is False


def test_negation_trigger_outside_window(small_dict):
    text = "no acute distress, resting comfortably before the unwitnessed fall"
    assert term_exists_for(text, _mention(small_dict, text)) is True


def test_affirmed_mention(small_dict):
    text = "patient reported a fall"
    assert term_exists_for(text, _mention(small_dict, text)) is True


def test_negation_all_triggers(small_dict):
    for trig in ("no", "denies", "without", "not"):
        text = f"pt {trig} fall"
        assert term_exists_for(text, _mention(small_dict, text)) is False, trig


# -- pipeline over the store ------------------------------------------------


def note_id_by_parent(store):
    out = {}
    for r in store.iter_rows(Namespace.CDM, "note"):
        m = re.fullmatch(r"(\w+) note (\d+)", r["note_title"])
        out[(m.group(1), int(m.group(2)))] = r["note_id"]
    return out


def test_all_planted_spans_recovered(pipeline):
    _, store, manifest = pipeline
    by_parent = note_id_by_parent(store)
    emitted = {
        (r["note_id"], r["offset"], r["lexical_variant"], r["note_nlp_concept_id"])
        for r in store.iter_rows(Namespace.CDM, "note_nlp")
    }
    assert manifest.planted_mention_spans
    for span in manifest.planted_mention_spans:
        note_id = by_parent[(span.parent_kind, span.parent_id)]
        assert (note_id, span.offset, span.variant, span.concept_id) in emitted


def test_no_unplanned_fall_mentions(pipeline):
    _, store, manifest = pipeline
    planted = sum(1 for s in manifest.planted_mention_spans if s.concept_id == 436583)
    emitted = sum(
        1
        for r in store.iter_rows(Namespace.CDM, "note_nlp")
        if r["note_nlp_concept_id"] == 436583
    )
    assert emitted == planted


def test_emitted_spans_disjoint_within_note(pipeline):
    _, store, _ = pipeline
    by_note: dict[int, list] = {}
    for r in store.iter_rows(Namespace.CDM, "note_nlp"):
        by_note.setdefault(r["note_id"], []).append(
            (r["offset"], r["offset"] + len(r["lexical_variant"]), r["note_nlp_concept_id"])
        )
    for spans in by_note.values():
        spans.sort()
        for (s1, e1, c1), (s2, e2, c2) in zip(spans, spans[1:]):
            # same span may carry several concept/category rows
            assert s1 == s2 or e1 <= s2


def test_distinct_variants_matches_manifest(pipeline):
    _, store, manifest = pipeline
    pairs = distinct_variants(store, 436583)
    assert len(pairs) == manifest.planted_variant_counts[436583]
    assert all(n >= 1 for _, n in pairs)


def test_patients_with_concept_matches_manifest(pipeline):
    _, store, manifest = pipeline
    assert patients_with_concept(store, 436583) == manifest.mention_patients(436583)
    assert patients_with_concept(store, 436583, include_negated=False) == (
        manifest.mention_patients(436583, include_negated=False)
    )


def test_negated_mentions_flagged(pipeline):
    _, store, manifest = pipeline
    by_parent = note_id_by_parent(store)
    flags = {
        (r["note_id"], r["offset"]): r["term_exists"]
        for r in store.iter_rows(Namespace.CDM, "note_nlp")
    }
    for span in manifest.planted_mention_spans:
        note_id = by_parent[(span.parent_kind, span.parent_id)]
        assert flags[(note_id, span.offset)] == (not span.negated)


def test_snippet_contains_variant(pipeline):
    _, store, _ = pipeline
    for r in store.iter_rows(Namespace.CDM, "note_nlp"):
        assert r["lexical_variant"] in r["snippet"]


def _nlp_rows(store):
    return [
        {k: v for k, v in r.items() if k != "note_nlp_id"}
        for r in store.rows(Namespace.CDM, "note_nlp")
    ]


def test_worker_count_invariance(pipeline):
    cfg, store, _ = pipeline
    dictionary = compile_dictionary(
        orchestrator.dictionary_entries(cfg),
        load_manual_links(orchestrator.data_path("manual_links.json")),
    )
    outputs = []
    for workers in (1, 4, 8):
        run_pipeline(store, dictionary, NlpRunConfig(batch_size=7, worker_count=workers))
        outputs.append(store.rows(Namespace.CDM, "note_nlp"))
    assert outputs[0] == outputs[1] == outputs[2]


def test_checkpoint_resume_identical(pipeline, tmp_path):
    cfg, store, _ = pipeline
    dictionary = compile_dictionary(
        orchestrator.dictionary_entries(cfg),
        load_manual_links(orchestrator.data_path("manual_links.json")),
    )
    ck = tmp_path / "ck.json"
    run_cfg = NlpRunConfig(batch_size=5, worker_count=4, checkpoint_every=2)
    run_pipeline(store, dictionary, run_cfg, checkpoint_path=ck)
    full = store.rows(Namespace.CDM, "note_nlp")

    ck2 = tmp_path / "ck2.json"
    run_pipeline(store, dictionary, run_cfg, checkpoint_path=ck2, abort_after_batches=4)
    assert ck2.exists()
    partial = store.row_count(Namespace.CDM, "note_nlp")
    assert 0 < partial < len(full)
    run_pipeline(store, dictionary, run_cfg, checkpoint_path=ck2, resume=True)
    assert store.rows(Namespace.CDM, "note_nlp") == full


def test_resume_with_tampered_table_fails(pipeline, tmp_path):
    cfg, store, _ = pipeline
    dictionary = compile_dictionary(orchestrator.dictionary_entries(cfg))
    ck = tmp_path / "ck.json"
    run_cfg = NlpRunConfig(batch_size=5, checkpoint_every=2)
    run_pipeline(store, dictionary, run_cfg, checkpoint_path=ck, abort_after_batches=4)
    store.truncate(Namespace.CDM, "note_nlp")
    with pytest.raises(CheckpointError, match="watermark"):
        run_pipeline(store, dictionary, run_cfg, checkpoint_path=ck, resume=True)
    # restore pipeline state for other tests
    run_pipeline(store, dictionary, run_cfg, checkpoint_path=None)
    store.save(Namespace.CDM, "note_nlp")


def test_rows_ordered_by_note_then_offset(pipeline):
    _, store, _ = pipeline
    rows = store.rows(Namespace.CDM, "note_nlp")
    keys = [(r["note_id"], r["offset"]) for r in rows]
    assert keys == sorted(keys)
    ids = [r["note_nlp_id"] for r in rows]
    assert ids == list(range(1, len(rows) + 1))
