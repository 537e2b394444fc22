"""Automaton scan kernels: numba-JIT hot path with a pure-numpy fallback.

The multi-pattern matcher is the one inner loop that dominates pipeline
runtime, so it is expressed over dense numpy arrays (a complete
goto-with-failure transition table) and compiled with numba when
available. Set ``CAREMART_BACKEND=python`` to force the fallback; the
two paths produce identical output and ``benchmarks/bench_matcher.py``
compares them.
"""

from __future__ import annotations

import os

import numpy as np


def _scan_py(delta, out_start, out_count, out_flat, classes, ends, pids):
    """Reference scan: walk the class sequence, record (end, pattern) pairs.

    Returns the number of matches, or -1 if the output buffers are full.
    """
    state = 0
    n = 0
    cap = ends.shape[0]
    for i in range(classes.shape[0]):
        state = delta[state, classes[i]]
        c = out_count[state]
        if c:
            if n + c > cap:
                return -1
            s = out_start[state]
            for j in range(c):
                ends[n] = i
                pids[n] = out_flat[s + j]
                n += 1
    return n


def _make_numba_scan():
    from numba import njit

    return njit(cache=True, nogil=True)(_scan_py)


_numba_scan = None


def backend_name() -> str:
    forced = os.environ.get("CAREMART_BACKEND", "").lower()
    if forced in ("python", "numpy"):
        return "numpy"
    if forced and forced != "numba":
        raise ValueError(f"unknown CAREMART_BACKEND value {forced!r}")
    try:
        import numba  # noqa: F401
    except ImportError:
        return "numpy"
    return "numba"


def get_scan(backend: str | None = None):
    """Return the scan callable for the selected backend."""
    global _numba_scan
    name = backend or backend_name()
    if name == "numba":
        if _numba_scan is None:
            _numba_scan = _make_numba_scan()
        return _numba_scan
    return _scan_py


def scan(delta, out_start, out_count, out_flat, classes, backend: str | None = None):
    """Run the automaton over one class sequence; returns (ends, pids)."""
    fn = get_scan(backend)
    cap = max(64, classes.shape[0] + 16)
    while True:
        ends = np.empty(cap, dtype=np.int64)
        pids = np.empty(cap, dtype=np.int64)
        n = fn(delta, out_start, out_count, out_flat, classes, ends, pids)
        if n >= 0:
            return ends[:n], pids[:n]
        cap *= 4
