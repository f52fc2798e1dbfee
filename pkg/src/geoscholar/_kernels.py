"""Multi-pattern scan kernels.

The alias scan is the hot loop of the whole pipeline: every title and
abstract is pushed through a dense Aho-Corasick DFA stored as numpy
arrays.  The kernel is compiled with numba when available; setting
``GEOSCHOLAR_DISABLE_NUMBA=1`` (or calling :func:`set_backend`) selects
the identical pure-Python implementation operating on the same arrays.
Both backends produce identical match lists; ``benchmarks/bench_extract.py``
compares their throughput.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_ENV_FLAG = "GEOSCHOLAR_DISABLE_NUMBA"

# ASCII word characters: [0-9A-Za-z]. Anything else (including every
# codepoint >= 128) is a word boundary.
WORD_CHARS = np.zeros(128, dtype=np.uint8)
for _c in range(128):
    if chr(_c).isascii() and chr(_c).isalnum():
        WORD_CHARS[_c] = 1


def encode_codepoints(text: str) -> np.ndarray:
    """Encode a string as a uint32 codepoint array (indices == str indices)."""
    return np.frombuffer(text.encode("utf-32-le"), dtype=np.uint32)


def ascii_lower(codes: np.ndarray) -> np.ndarray:
    """ASCII-only lowercasing; preserves length and non-ASCII codepoints."""
    return np.where((codes >= 65) & (codes <= 90), codes + 32, codes)


def _scan(codes, delta, emit_off, emit_pat, pat_len, sym_ascii, ext_cp, ext_sym,
          word, out_pos, out_pid):
    """Run the DFA over ``codes`` and collect boundary-valid matches.

    Emits ``(start, pattern_id)`` pairs into the output buffers and
    returns the match count, or -1 when the buffers are too small (the
    caller retries with larger ones).  A match is emitted only when the
    characters adjacent to the matched span are not word characters.
    """
    state = 0
    cnt = 0
    n = codes.shape[0]
    cap = out_pos.shape[0]
    n_ext = ext_cp.shape[0]
    for i in range(n):
        c = codes[i]
        if c < 128:
            a = sym_ascii[c]
        else:
            a = 0
            lo = 0
            hi = n_ext
            while lo < hi:
                mid = (lo + hi) >> 1
                if ext_cp[mid] < c:
                    lo = mid + 1
                else:
                    hi = mid
            if lo < n_ext and ext_cp[lo] == c:
                a = ext_sym[lo]
        state = delta[state, a]
        for k in range(emit_off[state], emit_off[state + 1]):
            pid = emit_pat[k]
            start = i + 1 - pat_len[pid]
            if start > 0:
                cb = codes[start - 1]
                if cb < 128 and word[cb]:
                    continue
            if i + 1 < n:
                ca = codes[i + 1]
                if ca < 128 and word[ca]:
                    continue
            if cnt >= cap:
                return -1
            out_pos[cnt] = start
            out_pid[cnt] = pid
            cnt += 1
    return cnt


scan_python = _scan
scan_numba = numba.njit(cache=True)(_scan) if HAVE_NUMBA else None

if os.environ.get(_ENV_FLAG, "").strip().lower() in {"1", "true", "yes"}:
    _backend = "python"
else:
    _backend = "numba" if HAVE_NUMBA else "python"


def set_backend(name: str) -> None:
    """Select the scan backend: ``"numba"`` or ``"python"``."""
    global _backend
    if name not in ("numba", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    _backend = name


def get_backend() -> str:
    return _backend


def active_scan():
    """The scan function for the currently selected backend."""
    return scan_numba if _backend == "numba" else scan_python
