"""Dictionary compilation and exact multi-pattern concept matching.

Surface terms and note text pass through one shared normalization
(lowercase, collapse whitespace runs to a single space, drop
punctuation that does not sit between two alphanumeric characters)
before matching, so "Accident a  fall" and "accident a fall" meet in
the same normalized form while the emitted lexical variant stays the
verbatim note substring. Matching itself is an Aho-Corasick automaton
over normalized character classes, compiled to a dense transition
table that the kernels module scans; selection is leftmost
longest-match, non-overlapping, at token boundaries.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import ConfigError, SchemaError
from .kernels import scan

log = logging.getLogger(__name__)

KNOWN_CATEGORIES = {
    "type of motion",
    "side of body",
    "location on body",
    "plane of motion",
    "duration",
    "set and rep information",
    "exercise purpose",
    "exercise type",
    "body position",
}

_ASCII_SPACE = frozenset(" \t\n\r\x0b\x0c")


@dataclass(frozen=True)
class DictionaryEntry:
    surface_term: str
    cui: str
    concept_id: int
    category: str | None = None


@dataclass(frozen=True)
class Mention:
    char_offset: int
    matched_text: str
    entry: DictionaryEntry

    @property
    def end(self) -> int:
        return self.char_offset + len(self.matched_text)


def _char_flags(ch: str) -> tuple[bool, bool]:
    """(is_space, is_alnum) for one character."""
    if ch in _ASCII_SPACE:
        return True, False
    return ch.isspace(), ch.isalnum()


def normalize(text: str) -> tuple[str, list[int]]:
    """Normalize text; returns (normalized, map normalized index -> original)."""
    n = len(text)
    space = [False] * n
    alnum = [False] * n
    lowered = []
    for i, ch in enumerate(text):
        space[i], alnum[i] = _char_flags(ch)
        lc = ch.lower()
        lowered.append(lc if len(lc) == 1 else ch)
    out_chars: list[str] = []
    out_idx: list[int] = []
    prev_space = True  # start behaves like a space so leading spaces drop
    for i in range(n):
        if space[i]:
            if not prev_space:
                out_chars.append(" ")
                out_idx.append(i)
                prev_space = True
            continue
        if not alnum[i]:
            # punctuation survives only between two alphanumerics
            if not (i > 0 and alnum[i - 1] and i + 1 < n and alnum[i + 1]):
                continue
        out_chars.append(lowered[i])
        out_idx.append(i)
        prev_space = False
    return "".join(out_chars), out_idx


# ASCII lookup tables for the vectorized normalizer
_A_SPACE = np.array([chr(i).isspace() for i in range(128)], dtype=bool)
_A_ALNUM = np.array([chr(i).isalnum() for i in range(128)], dtype=bool)
_A_LOWER = np.array([ord(chr(i).lower()) for i in range(128)], dtype=np.uint32)


def _norm_arrays(text: str) -> tuple[str, np.ndarray, np.ndarray]:
    """Vectorized normalize(): (norm string, orig index, is_alnum).

    Must stay behavior-identical to normalize(); the scalar version is
    the reference for tests and for normalizing dictionary terms.
    """
    cp = np.frombuffer(text.encode("utf-32-le"), dtype=np.uint32)
    n = cp.size
    if n == 0:
        return "", np.empty(0, dtype=np.int64), np.empty(0, dtype=bool)
    ascii_mask = cp < 128
    cpa = np.where(ascii_mask, cp, 0)
    space = np.where(ascii_mask, _A_SPACE[cpa], False)
    alnum = np.where(ascii_mask, _A_ALNUM[cpa], False)
    low = np.where(ascii_mask, _A_LOWER[cpa], cp).astype(np.uint32)
    if not ascii_mask.all():
        for i in np.nonzero(~ascii_mask)[0]:
            ch = chr(int(cp[i]))
            space[i], alnum[i] = _char_flags(ch)
            lc = ch.lower()
            if len(lc) == 1:
                low[i] = ord(lc)
    punct = ~space & ~alnum
    prev_al = np.zeros(n, dtype=bool)
    prev_al[1:] = alnum[:-1]
    next_al = np.zeros(n, dtype=bool)
    next_al[:-1] = alnum[1:]
    visible = alnum | space | (punct & prev_al & next_al)
    idx = np.nonzero(visible)[0]
    sp = space[idx]
    prev_sp = np.empty(sp.size, dtype=bool)
    if sp.size:
        prev_sp[0] = True
        prev_sp[1:] = sp[:-1]
    emit = ~(sp & prev_sp)
    out_idx = idx[emit]
    out_cp = low[out_idx]
    out_cp[sp[emit]] = 32
    norm = out_cp.astype("<u4").tobytes().decode("utf-32-le")
    return norm, out_idx.astype(np.int64), alnum[out_idx]


class CompiledDictionary:
    """Dense Aho-Corasick automaton over all normalized surface terms."""

    def __init__(self, entries: Sequence[DictionaryEntry]):
        if not entries:
            raise ConfigError("dictionary is empty")
        # one pattern per distinct normalized term; entries grouped under it
        self.patterns: list[str] = []
        self.pattern_entries: list[list[DictionaryEntry]] = []
        by_norm: dict[str, int] = {}
        for entry in entries:
            if not entry.surface_term:
                raise ConfigError("dictionary entry with empty surface term")
            norm, _ = normalize(entry.surface_term)
            if not norm:
                raise ConfigError(
                    f"surface term {entry.surface_term!r} normalizes to nothing"
                )
            pid = by_norm.get(norm)
            if pid is None:
                pid = len(self.patterns)
                by_norm[norm] = pid
                self.patterns.append(norm)
                self.pattern_entries.append([])
            group = self.pattern_entries[pid]
            key = (entry.concept_id, entry.category)
            if all((e.concept_id, e.category) != key for e in group):
                group.append(entry)
        self.entries = list(entries)
        self._build_automaton()

    # -- automaton construction -------------------------------------------

    def _build_automaton(self) -> None:
        # character classes: 0 = "not in any pattern", 1..K = pattern alphabet
        alphabet = sorted({c for p in self.patterns for c in p})
        self._cls: dict[str, int] = {c: i + 1 for i, c in enumerate(alphabet)}
        n_cls = len(alphabet) + 1
        self._ascii_cls = np.zeros(128, dtype=np.int32)
        for c, k in self._cls.items():
            cp = ord(c)
            if cp < 128:
                self._ascii_cls[cp] = k

        goto: list[dict[int, int]] = [{}]
        outputs: list[list[int]] = [[]]
        for pid, pattern in enumerate(self.patterns):
            state = 0
            for ch in pattern:
                cls = self._cls[ch]
                nxt = goto[state].get(cls)
                if nxt is None:
                    nxt = len(goto)
                    goto[state][cls] = nxt
                    goto.append({})
                    outputs.append([])
                state = nxt
            outputs[state].append(pid)

        n_states = len(goto)
        fail = [0] * n_states
        delta = np.zeros((n_states, n_cls), dtype=np.int32)
        queue: deque[int] = deque()
        for cls in range(n_cls):
            nxt = goto[0].get(cls)
            if nxt is not None:
                delta[0, cls] = nxt
                queue.append(nxt)
        while queue:
            state = queue.popleft()
            f = fail[state]
            outputs[state].extend(outputs[f])
            for cls in range(n_cls):
                nxt = goto[state].get(cls)
                if nxt is None:
                    delta[state, cls] = delta[f, cls]
                else:
                    fail[nxt] = delta[f, cls]
                    delta[state, cls] = nxt
                    queue.append(nxt)

        self._delta = delta
        flat: list[int] = []
        starts = np.zeros(n_states, dtype=np.int64)
        counts = np.zeros(n_states, dtype=np.int64)
        for state, pats in enumerate(outputs):
            starts[state] = len(flat)
            counts[state] = len(pats)
            flat.extend(pats)
        self._out_start = starts
        self._out_count = counts
        self._out_flat = np.asarray(flat, dtype=np.int64) if flat else np.zeros(1, dtype=np.int64)
        self._plen = np.asarray([len(p) for p in self.patterns], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.entries)

    def _classify(self, norm: str) -> np.ndarray:
        cp = np.frombuffer(norm.encode("utf-32-le"), dtype=np.uint32).astype(np.int64)
        classes = np.where(cp < 128, self._ascii_cls[np.minimum(cp, 127)], 0).astype(np.int32)
        if (cp >= 128).any():
            for i in np.nonzero(cp >= 128)[0]:
                classes[i] = self._cls.get(chr(int(cp[i])), 0)
        return classes

    # -- matching ----------------------------------------------------------

    def extract(self, text: str, backend: str | None = None) -> list[Mention]:
        """All non-overlapping longest matches at token boundaries."""
        if not text:
            return []
        norm, idx_arr, alnum = _norm_arrays(text)
        if not norm:
            return []
        classes = self._classify(norm)
        ends, pids = scan(
            self._delta, self._out_start, self._out_count, self._out_flat, classes, backend
        )
        n = len(norm)
        candidates = []
        for end, pid in zip(ends.tolist(), pids.tolist()):
            start = end + 1 - int(self._plen[pid])
            if start > 0 and alnum[start - 1]:
                continue
            if end + 1 < n and alnum[end + 1]:
                continue
            candidates.append((start, end, pid))
        if not candidates:
            return []
        candidates.sort(key=lambda t: (t[0], t[0] - t[1]))
        mentions: list[Mention] = []
        cursor = 0
        for start, end, pid in candidates:
            if start < cursor:
                continue
            o_start = int(idx_arr[start])
            o_end = int(idx_arr[end]) + 1
            matched = text[o_start:o_end]
            for entry in self.pattern_entries[pid]:
                mentions.append(Mention(o_start, matched, entry))
            cursor = end + 1
        return mentions


def compile_dictionary(
    entries: Iterable[DictionaryEntry],
    manual_links: dict[str, int] | None = None,
    vocab=None,
) -> CompiledDictionary:
    """Compile entries, patching concept-id gaps from the CUI sidecar map."""
    resolved = []
    for entry in entries:
        if entry.concept_id == 0 and manual_links and entry.cui in manual_links:
            entry = DictionaryEntry(
                entry.surface_term, entry.cui, manual_links[entry.cui], entry.category
            )
        if entry.concept_id == 0:
            log.warning(
                "dictionary term %r (%s) has no concept link", entry.surface_term, entry.cui
            )
        elif vocab is not None and entry.concept_id not in vocab:
            log.warning(
                "dictionary term %r references concept %d absent from vocabulary",
                entry.surface_term,
                entry.concept_id,
            )
        resolved.append(entry)
    return CompiledDictionary(resolved)


def load_dictionary_csv(path: str | Path) -> list[DictionaryEntry]:
    """Read a ``surface_term,cui,concept_id,category`` CSV."""
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"surface_term", "cui", "concept_id", "category"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise SchemaError(f"{path}: expected columns {sorted(required)}")
        for row in reader:
            entries.append(
                DictionaryEntry(
                    surface_term=row["surface_term"],
                    cui=row["cui"],
                    concept_id=int(row["concept_id"]),
                    category=row["category"] or None,
                )
            )
    return entries


def load_custom_categories(path: str | Path) -> list[DictionaryEntry]:
    """Load a custom rule dictionary (e.g. rehab exercise concepts)."""
    entries = load_dictionary_csv(path)
    for entry in entries:
        if entry.category and entry.category not in KNOWN_CATEGORIES:
            log.warning("unknown dictionary category %r (kept verbatim)", entry.category)
    return entries


def load_manual_links(path: str | Path) -> dict[str, int]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return {cui: int(cid) for cui, cid in doc.items()}
