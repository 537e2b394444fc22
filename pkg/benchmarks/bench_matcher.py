"""Benchmark the mention matcher: compiled kernel vs pure-numpy fallback.

Builds a dictionary of a few hundred terms, synthesizes notes of ~500
characters, and times extraction under both backends. Run with:

    python3 benchmarks/bench_matcher.py [--notes 10000] [--chars 500]
"""

from __future__ import annotations

import argparse
import random
import time

from caremart.nlp.dictionary import CompiledDictionary, DictionaryEntry
from caremart.nlp.kernels import backend_name
from caremart.synth import build_fall_variants

FILLER = (
    "patient seen today for routine follow up visit vital signs stable "
    "continues current medication plan discussed goals reviewed labs "
    "unremarkable will return in three months for reassessment"
).split()


def build_dictionary() -> CompiledDictionary:
    entries = [
        DictionaryEntry(v, "C0000921", 436583) for v in build_fall_variants(300)
    ]
    entries += [
        DictionaryEntry("stroke", "C0038454", 35207821),
        DictionaryEntry("type 2 diabetes", "C0011860", 35206882),
        DictionaryEntry("physical therapy", "C0949766", 2314284),
    ]
    return CompiledDictionary(entries)


def build_notes(n: int, chars: int, dictionary: CompiledDictionary,
                seed: int = 11) -> list[str]:
    rng = random.Random(seed)
    terms = [e.surface_term for e in dictionary.entries]
    notes = []
    for _ in range(n):
        words = []
        while sum(len(w) + 1 for w in words) < chars:
            words.append(rng.choice(FILLER))
        # drop a couple of real terms into half the notes
        if rng.random() < 0.5:
            k = rng.randrange(len(words))
            words[k] = rng.choice(terms)
        notes.append(" ".join(words))
    return notes


def run(dictionary: CompiledDictionary, notes: list[str], backend: str) -> tuple[float, int]:
    dictionary.extract(notes[0], backend)  # warm up (jit compile)
    t0 = time.perf_counter()
    hits = 0
    for note in notes:
        hits += len(dictionary.extract(note, backend))
    return time.perf_counter() - t0, hits


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--notes", type=int, default=10_000)
    parser.add_argument("--chars", type=int, default=500)
    args = parser.parse_args()

    dictionary = build_dictionary()
    notes = build_notes(args.notes, args.chars, dictionary)
    print(f"{len(dictionary)} dictionary entries, {args.notes} notes "
          f"of ~{args.chars} chars (default backend: {backend_name()})")

    results = {}
    for backend in ("numba", "numpy"):
        try:
            elapsed, hits = run(dictionary, notes, backend)
        except Exception as exc:  # numba may be absent
            print(f"{backend:>6}: unavailable ({exc})")
            continue
        rate = args.notes / elapsed
        results[backend] = rate
        print(f"{backend:>6}: {elapsed:6.2f}s  {rate:8.0f} notes/s  ({hits} mentions)")

    if len(results) == 2:
        print(f"speedup: {results['numba'] / results['numpy']:.1f}x")


if __name__ == "__main__":
    main()
