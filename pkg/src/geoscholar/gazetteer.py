"""Country gazetteer: alias tables compiled into a multi-pattern matcher.

The source of truth is a TOML file (see ``data/gazetteer.toml``) with
sections ``[country.ISO3]``, ``[[exclusion_phrases]]``, ``[suppress]`` and
``[exclude]``.  Compilation builds two Aho-Corasick automata stored as
dense numpy transition tables:

* a case-insensitive automaton holding exclusion phrases and full-name
  aliases (matched on ASCII-lowercased text), and
* a case-sensitive automaton for short abbreviations ("US", "UAE", ...),
  matched verbatim.

Matches are only reported at word boundaries (a boundary is any
non-alphanumeric ASCII character, any non-ASCII character, or the string
edge).  Exclusion phrases take precedence over alias hits; among the
survivors the longest alias wins on overlap.  Demonyms are rejected at
compile time so they can never enter the alias table.
"""

from __future__ import annotations

import string
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ImportError:  # pragma: no cover
    import tomli as tomllib

from . import _kernels

MASK = "mask"
ALIAS = "alias"

# Matching is ASCII-case-insensitive: full Unicode case folding can change
# string length, which would break span reporting.
_ASCII_LOWER = str.maketrans(string.ascii_uppercase, string.ascii_lowercase)


def ascii_lower_str(s: str) -> str:
    return s.translate(_ASCII_LOWER)

# Adjective/noun forms of country names.  Aliases equal to any of these are
# rejected at compile time: a demonym does not imply geographic focus, and
# several double as language names.
DEMONYMS = frozenset(map(str.casefold, """
Afghan Albanian Algerian American Angolan Argentine Argentinian Armenian
Australian Austrian Azerbaijani Bahraini Bangladeshi Belarusian Belgian
Bolivian Bosnian Brazilian British Bulgarian Burmese Cambodian Cameroonian
Canadian Chadian Chilean Chinese Colombian Congolese Croatian Cuban Cypriot
Czech Danish Dutch Ecuadorian Egyptian Emirati English Eritrean Estonian
Ethiopian Filipino Finnish French Georgian German Ghanaian Greek Guatemalan
Guinean Haitian Honduran Hungarian Icelandic Indian Indonesian Iranian Iraqi
Irish Israeli Italian Ivorian Jamaican Japanese Jordanian Kazakh Kenyan
Korean Kuwaiti Kyrgyz Lao Latvian Lebanese Liberian Libyan Lithuanian
Macedonian Malagasy Malawian Malaysian Malian Mauritanian Mexican Moldovan
Mongolian Moroccan Mozambican Namibian Nepali Nicaraguan Nigerian Nigerien
Norwegian Omani Pakistani Palestinian Panamanian Paraguayan Peruvian Polish
Portuguese Qatari Romanian Russian Rwandan Salvadoran Saudi Senegalese
Serbian Singaporean Slovak Slovenian Somali Spanish Sudanese Swedish Swiss
Syrian Taiwanese Tajik Tanzanian Thai Tunisian Turkish Turkmen Ugandan
Ukrainian Uruguayan Uzbek Venezuelan Vietnamese Yemeni Zambian Zimbabwean
""".split()))


class GazetteerError(Exception):
    """Invalid gazetteer source (collisions, demonyms, bad codes, ...)."""


@dataclass(frozen=True)
class CountryEntry:
    iso3: str
    canonical_name: str
    aliases: tuple[str, ...]  # case-insensitive forms, canonical name included
    case_sensitive_aliases: tuple[str, ...] = ()


@dataclass(frozen=True)
class ExclusionPhrase:
    phrase: str
    note: str = ""


@dataclass(frozen=True)
class GazetteerSource:
    entries: tuple[CountryEntry, ...]
    exclusion_phrases: tuple[ExclusionPhrase, ...] = ()
    # iso3 -> ASJC area codes in which hits for that country are dropped
    conditional_suppressions: Mapping[str, frozenset] = None
    # iso3 -> reason; matched but always removed from results
    excluded_iso3: Mapping[str, str] = None

    def __post_init__(self):
        if self.conditional_suppressions is None:
            object.__setattr__(self, "conditional_suppressions", {})
        if self.excluded_iso3 is None:
            object.__setattr__(self, "excluded_iso3", {})


class RawHit(NamedTuple):
    start: int
    end: int
    iso3: str
    alias: str

    @property
    def length(self) -> int:
        return self.end - self.start


class MaskSpan(NamedTuple):
    start: int
    end: int
    phrase: str


def _norm_alias(alias: str, iso3: str) -> str:
    if not isinstance(alias, str) or not alias or alias != alias.strip():
        raise GazetteerError(f"{iso3}: bad alias {alias!r}")
    return alias


def validate_source(source: GazetteerSource) -> None:
    """Check the structural invariants; raise GazetteerError on violation."""
    seen_iso3 = set()
    surface_owner: dict[str, set[str]] = {}
    all_aliases_cf: list[str] = []
    for e in source.entries:
        if len(e.iso3) != 3 or not e.iso3.isupper() or not e.iso3.isalpha():
            raise GazetteerError(f"bad iso3 code {e.iso3!r}")
        if e.iso3 in seen_iso3:
            raise GazetteerError(f"duplicate country entry {e.iso3}")
        seen_iso3.add(e.iso3)
        for alias in list(e.aliases) + list(e.case_sensitive_aliases):
            _norm_alias(alias, e.iso3)
            cf = ascii_lower_str(alias)
            if cf.casefold() in DEMONYMS:
                raise GazetteerError(f"{e.iso3}: alias {alias!r} is a demonym")
            surface_owner.setdefault(cf, set()).add(e.iso3)
            all_aliases_cf.append(cf)
    collisions = {s: owners for s, owners in surface_owner.items() if len(owners) > 1}
    if collisions:
        detail = "; ".join(f"{s!r} -> {sorted(o)}" for s, o in sorted(collisions.items()))
        raise GazetteerError(f"alias collisions across countries: {detail}")
    for p in source.exclusion_phrases:
        pcf = ascii_lower_str(p.phrase)
        if not pcf.strip():
            raise GazetteerError("empty exclusion phrase")
        if not any(a in pcf for a in all_aliases_cf):
            raise GazetteerError(
                f"exclusion phrase {p.phrase!r} contains no alias; it would mask nothing")
    for iso3 in source.conditional_suppressions:
        if iso3 not in seen_iso3:
            raise GazetteerError(f"suppression for unknown country {iso3}")


class _Automaton:
    """Dense Aho-Corasick DFA over the patterns' character alphabet.

    With ``fold_case`` the ASCII uppercase letters share their lowercase
    symbol, so case-insensitive matching needs no lowered copy of the
    text; patterns must already be ASCII-lowercase then.
    """

    def __init__(self, patterns: list[str], fold_case: bool = False):
        self.patterns = list(patterns)
        self.fold_case = fold_case
        if fold_case:
            for p in patterns:
                if p != ascii_lower_str(p):
                    raise GazetteerError(f"case-folded automaton needs lowered patterns: {p!r}")
        chars = sorted({c for p in patterns for c in p})
        self._sym = {c: i + 1 for i, c in enumerate(chars)}  # 0 = any other char
        nsym = len(chars) + 1
        goto: list[dict[int, int]] = [{}]
        out: list[list[int]] = [[]]
        for pid, pat in enumerate(patterns):
            s = 0
            for c in pat:
                a = self._sym[c]
                nxt = goto[s].get(a)
                if nxt is None:
                    goto.append({})
                    out.append([])
                    nxt = len(goto) - 1
                    goto[s][a] = nxt
                s = nxt
            out[s].append(pid)
        n = len(goto)
        fail = [0] * n
        delta = np.zeros((n, nsym), dtype=np.int32)
        dq: deque[int] = deque()
        for a, t in goto[0].items():
            delta[0, a] = t
            dq.append(t)
        while dq:
            s = dq.popleft()
            out[s] = out[s] + out[fail[s]]
            for a in range(nsym):
                t = goto[s].get(a)
                if t is None:
                    delta[s, a] = delta[fail[s], a]
                else:
                    fail[t] = delta[fail[s], a]
                    delta[s, a] = t
                    dq.append(t)
        self.delta = delta
        self.emit_off = np.zeros(n + 1, dtype=np.int32)
        emit: list[int] = []
        for s in range(n):
            self.emit_off[s + 1] = self.emit_off[s] + len(out[s])
            emit.extend(out[s])
        self.emit_pat = np.asarray(emit, dtype=np.int32)
        self.pat_len = np.asarray([len(p) for p in patterns] or [0], dtype=np.int32)
        self.sym_ascii = np.zeros(128, dtype=np.int32)
        ext = sorted((ord(c), a) for c, a in self._sym.items() if ord(c) >= 128)
        for c, a in self._sym.items():
            if ord(c) < 128:
                self.sym_ascii[ord(c)] = a
                if fold_case and "a" <= c <= "z":
                    self.sym_ascii[ord(c) - 32] = a
        self.ext_cp = np.asarray([c for c, _ in ext], dtype=np.uint32)
        self.ext_sym = np.asarray([a for _, a in ext], dtype=np.int32)

    def find(self, codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """All boundary-valid matches as (starts, pattern ids)."""
        if not self.patterns or codes.shape[0] == 0:
            return (np.empty(0, dtype=np.int32),) * 2
        scan = _kernels.active_scan()
        # size for ~one hit per 40 chars so large batches rarely rescan
        cap = max(256, codes.shape[0] // 40)
        while True:
            out_pos = np.empty(cap, dtype=np.int32)
            out_pid = np.empty(cap, dtype=np.int32)
            cnt = scan(codes, self.delta, self.emit_off, self.emit_pat, self.pat_len,
                       self.sym_ascii, self.ext_cp, self.ext_sym, _kernels.WORD_CHARS,
                       out_pos, out_pid)
            if cnt >= 0:
                return out_pos[:cnt].copy(), out_pid[:cnt].copy()
            cap *= 8


@dataclass(frozen=True)
class CompiledGazetteer:
    """Immutable compiled matcher; safe to share across workers."""

    source: GazetteerSource
    ci: _Automaton  # exclusion phrases + case-insensitive aliases (lowered)
    cs: _Automaton  # case-sensitive aliases (verbatim)
    ci_meta: tuple  # per ci pattern id: (MASK, phrase, note) | (ALIAS, iso3, alias)
    cs_meta: tuple  # per cs pattern id: (ALIAS, iso3, alias)
    excluded: Mapping[str, str]
    suppressions: Mapping[str, frozenset]  # iso3 -> ASJC area codes

    def iso3_set(self) -> frozenset:
        return frozenset(e.iso3 for e in self.source.entries)

    def suppressed_in(self, iso3: str, subject_areas: Iterable[int]) -> bool:
        areas = self.suppressions.get(iso3)
        if not areas:
            return False
        return any((code // 100) * 100 in areas for code in subject_areas)

    def scan_codes(self, codes: np.ndarray) -> tuple[list, list]:
        """Boundary-valid (start, end, phrase) mask spans and
        (start, end, iso3) alias hits for one codepoint buffer."""
        masks: list[tuple] = []
        hits: list[tuple] = []
        ci_meta = self.ci_meta
        ci_len = self.ci.pat_len
        pos, pid = self.ci.find(codes)
        for s, p in zip(pos.tolist(), pid.tolist()):
            kind, a, _ = ci_meta[p]
            if kind == MASK:
                masks.append((s, s + int(ci_len[p]), a))
            else:
                hits.append((s, s + int(ci_len[p]), a))
        cs_meta = self.cs_meta
        cs_len = self.cs.pat_len
        pos, pid = self.cs.find(codes)
        for s, p in zip(pos.tolist(), pid.tolist()):
            hits.append((s, s + int(cs_len[p]), cs_meta[p][1]))
        return masks, hits

    def scan_text(self, text: str) -> tuple[list[MaskSpan], list[RawHit]]:
        """Mask spans and alias hits for one string; ``alias`` carries the
        matched surface text."""
        masks, hits = self.scan_codes(_kernels.encode_codepoints(text))
        return ([MaskSpan(s, e, ph) for s, e, ph in sorted(masks)],
                [RawHit(s, e, iso3, text[s:e]) for s, e, iso3 in sorted(hits)])


def resolve_hits(masks: list[MaskSpan], hits: list[RawHit]
                 ) -> tuple[list[RawHit], list[tuple[RawHit, str]]]:
    """Apply mask precedence, then longest-match-wins overlap resolution.

    Returns the surviving hits (sorted by position) and the mask-dropped
    hits paired with the masking phrase.  Hits sharing (start, end, iso3)
    collapse to one (the lexicographically first alias).
    """
    best: dict[tuple, str] = {}
    for h in hits:
        key = (h.start, h.end, h.iso3)
        if key not in best or h.alias < best[key]:
            best[key] = h.alias
    kept_t, masked_t = resolve_span_hits(
        [(m.start, m.end, m.phrase) for m in masks], list(best))
    kept = [RawHit(s, e, iso3, best[(s, e, iso3)]) for s, e, iso3 in kept_t]
    masked = [(RawHit(s, e, iso3, best[(s, e, iso3)]), phrase)
              for (s, e, iso3), phrase in masked_t]
    return kept, masked


def resolve_span_hits(masks: list, hits: list) -> tuple[list, list]:
    """Tuple-level resolution core shared by the single and batched paths.

    ``masks`` are (start, end, phrase), ``hits`` are (start, end, iso3).
    Any hit overlapping a mask span is dropped (paired with the first
    overlapping mask in sorted order); among the rest the longest hit wins
    on overlap (equal lengths coexist).
    """
    if len(hits) > 1:
        hits = sorted(set(hits))
    masked: list[tuple] = []
    if masks:
        masks = sorted(masks)
        unmasked = []
        for h in hits:
            phrase = None
            for m in masks:
                if h[0] < m[1] and m[0] < h[1]:
                    phrase = m[2]
                    break
            if phrase is None:
                unmasked.append(h)
            else:
                masked.append((h, phrase))
    else:
        unmasked = list(hits)
    n = len(unmasked)
    overlapping = False
    for i in range(n - 1):  # hits sorted by start: any overlap shows up adjacent
        if unmasked[i + 1][0] < unmasked[i][1]:
            overlapping = True
            break
    if overlapping:
        kept: list[tuple] = []
        for h in sorted(unmasked, key=lambda t: (t[0] - t[1], t[0], t[2])):
            length = h[1] - h[0]
            if any(k[0] < h[1] and h[0] < k[1] and (k[1] - k[0]) > length
                   for k in kept):
                continue
            kept.append(h)
        kept.sort()
        return kept, masked
    return unmasked, masked


def compile(source: GazetteerSource) -> CompiledGazetteer:  # noqa: A001 - public API name
    """Validate and compile a gazetteer source into its matcher."""
    validate_source(source)
    ci_pats: list[tuple[str, tuple]] = []
    for p in source.exclusion_phrases:
        ci_pats.append((ascii_lower_str(p.phrase), (MASK, p.phrase, p.note)))
    cs_pats: list[tuple[str, tuple]] = []
    for e in source.entries:
        for alias in e.aliases:
            ci_pats.append((ascii_lower_str(alias), (ALIAS, e.iso3, alias)))
        for alias in e.case_sensitive_aliases:
            cs_pats.append((alias, (ALIAS, e.iso3, alias)))
    ci_pats.sort(key=lambda t: (t[0], t[1]))
    cs_pats.sort(key=lambda t: (t[0], t[1]))
    suppressions = {
        iso3: frozenset((int(c) // 100) * 100 for c in codes)
        for iso3, codes in source.conditional_suppressions.items()
    }
    return CompiledGazetteer(
        source=source,
        ci=_Automaton([p for p, _ in ci_pats], fold_case=True),
        cs=_Automaton([p for p, _ in cs_pats]),
        ci_meta=tuple(m for _, m in ci_pats),
        cs_meta=tuple(m for _, m in cs_pats),
        excluded=dict(source.excluded_iso3),
        suppressions=suppressions,
    )


def _source_from_data(data: dict) -> GazetteerSource:
    entries = []
    for iso3, spec in data.get("country", {}).items():
        name = spec["name"]
        aliases = [name] + [a for a in spec.get("aliases", []) if a != name]
        entries.append(CountryEntry(
            iso3=iso3,
            canonical_name=name,
            aliases=tuple(dict.fromkeys(aliases)),
            case_sensitive_aliases=tuple(dict.fromkeys(spec.get("case_sensitive", []))),
        ))
    phrases = tuple(
        ExclusionPhrase(p["phrase"], p.get("note", ""))
        for p in data.get("exclusion_phrases", [])
    )
    suppress = {
        iso3: frozenset(int(c) for c in codes)
        for iso3, codes in data.get("suppress", {}).items()
    }
    excluded = dict(data.get("exclude", {}))
    return GazetteerSource(
        entries=tuple(entries),
        exclusion_phrases=phrases,
        conditional_suppressions=suppress,
        excluded_iso3=excluded,
    )


def parse_gazetteer(path: str | Path) -> GazetteerSource:
    with open(path, "rb") as fh:
        return _source_from_data(tomllib.load(fh))


def parse_gazetteer_text(text: str) -> GazetteerSource:
    return _source_from_data(tomllib.loads(text))


def default_source() -> GazetteerSource:
    """The gazetteer shipped with the package (data/gazetteer.toml)."""
    from importlib.resources import files

    return parse_gazetteer(files("geoscholar.data").joinpath("gazetteer.toml"))


@lru_cache(maxsize=1)
def default_gazetteer() -> CompiledGazetteer:
    return compile(default_source())
