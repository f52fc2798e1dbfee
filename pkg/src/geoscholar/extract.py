"""Country-mention extraction from titles and abstracts.

Rule order is fixed and shared with the naive oracle in ``synth``:

    strip copyright tail (abstract only)
    -> mask exclusion phrases (title and stripped abstract)
    -> alias match at word boundaries, longest alias wins on overlap
    -> map to ISO3
    -> drop excluded territories
    -> drop countries suppressed for the record's subject areas

``extract_corpus`` runs the same pipeline over a whole corpus through one
concatenated scan buffer (the hot path) and optionally fans out over
worker processes; output is deterministic regardless of worker count.
"""

from __future__ import annotations

import itertools
import json
import multiprocessing
import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import _kernels
from .corpus import PublicationRecord
from .gazetteer import (MASK, CompiledGazetteer, ascii_lower_str,
                        resolve_span_hits)

TITLE = "title"
ABSTRACT = "abstract"

# A bare "@" only counts as a copyright marker when followed within 40
# characters by a 4-digit year or a publisher-class token; without the
# guard it would truncate abstracts containing e-mail addresses.
AT_WINDOW = 40
PUBLISHER_TOKENS = (
    "elsevier", "springer", "wiley", "ieee", "sage", "taylor", "francis",
    "kluwer", "emerald", "nature", "oxford", "cambridge", "rights reserved",
)


def _is_ascii_alnum(ch: str) -> bool:
    return ch.isascii() and ch.isalnum()


def _at_qualifies(window: str) -> bool:
    """True when the lowered window after an "@" marks a copyright tail."""
    for tok in PUBLISHER_TOKENS:
        if tok in window:
            return True
    n = len(window)
    for i in range(n - 3):
        quad = window[i:i + 4]
        if quad.isdigit() and quad[:2] in ("19", "20"):
            before_ok = i == 0 or not _is_ascii_alnum(window[i - 1])
            after_ok = i + 4 >= n or not _is_ascii_alnum(window[i + 4])
            if before_ok and after_ok:
                return True
    return False


# ASCII-only case-insensitive literal search (©, @ and the window are
# handled separately); positions match a search on ASCII-lowered text.
_COPYRIGHT_C_RE = re.compile(r"copyright \(c\)", re.IGNORECASE | re.ASCII)


def strip_copyright(text: str) -> str:
    """Return the prefix of ``text`` before the first copyright marker.

    Markers: "©" anywhere, "Copyright (C)" (case-insensitive), and "@"
    when it passes the context guard above.
    """
    cut = None
    i = text.find("©")
    if i != -1:
        cut = i
    if "(" in text:  # superset guard: "copyright (c)" needs a paren
        m = _COPYRIGHT_C_RE.search(text, 0, cut if cut is not None else len(text))
        if m is not None:
            cut = m.start()
    pos = text.find("@")
    while pos != -1 and (cut is None or pos < cut):
        if _at_qualifies(ascii_lower_str(text[pos + 1:pos + 1 + AT_WINDOW])):
            cut = pos
            break
        pos = text.find("@", pos + 1)
    return text if cut is None else text[:cut]


class Span(NamedTuple):
    iso3: str
    field: str
    start: int
    end: int


class MaskedSpan(NamedTuple):
    iso3: str
    field: str
    start: int
    end: int
    reason: str


class MentionResult(NamedTuple):
    publication_id: str
    mentioned: frozenset
    spans: tuple
    masked_spans: tuple
    topic_match: bool | None = None

    def to_obj(self) -> dict:
        obj = {
            "publication_id": self.publication_id,
            "mentioned": sorted(self.mentioned),
            "spans": [
                {"iso3": s.iso3, "field": s.field, "start": s.start, "end": s.end}
                for s in self.spans
            ],
            "masked_spans": [
                {"iso3": s.iso3, "field": s.field, "start": s.start, "end": s.end,
                 "reason": s.reason}
                for s in self.masked_spans
            ],
        }
        if self.topic_match is not None:
            obj["topic_match"] = self.topic_match
        return obj

    @classmethod
    def from_obj(cls, obj: dict) -> "MentionResult":
        return cls(
            publication_id=obj["publication_id"],
            mentioned=frozenset(obj["mentioned"]),
            spans=tuple(Span(s["iso3"], s["field"], s["start"], s["end"])
                        for s in obj["spans"]),
            masked_spans=tuple(
                MaskedSpan(s["iso3"], s["field"], s["start"], s["end"], s["reason"])
                for s in obj.get("masked_spans", [])),
            topic_match=obj.get("topic_match"),
        )


def write_mentions(results: Iterable[MentionResult], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_obj(), sort_keys=True) + "\n")


def read_mentions(path) -> list[MentionResult]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(MentionResult.from_obj(json.loads(line)))
    return out


def _extract_batch(records: Sequence[PublicationRecord], gaz: CompiledGazetteer,
                   query: "TopicQuery | None" = None) -> list[MentionResult]:
    """Extract a batch through one concatenated scan buffer.

    Title and stripped abstract of record i become segments 2i and 2i+1,
    joined with NUL separators (never part of a pattern, so matches cannot
    cross segments); hits come back in global coordinates and are rebased.
    """
    if not records:
        return []
    parts: list[str] = []
    for rec in records:
        parts.append(rec.title)
        parts.append(strip_copyright(rec.abstract))
    raw = _kernels.encode_codepoints("\x00".join(parts))
    seg_starts = np.fromiter(
        itertools.accumulate((len(p) + 1 for p in parts), initial=0),
        dtype=np.int64, count=len(parts) + 1)[:-1]

    masks_by_seg: list = [None] * len(parts)
    hits_by_seg: list = [None] * len(parts)

    def demux(bucket, payloads, pos, pid, pat_len):
        if not pos.shape[0]:
            return
        segs = np.searchsorted(seg_starts, pos, side="right") - 1
        rel = pos - seg_starts[segs]
        loc = rel.tolist()
        end = (rel + pat_len[pid]).tolist()
        for s, e, p, g in zip(loc, end, pid.tolist(), segs.tolist()):
            lst = bucket[g]
            if lst is None:
                lst = bucket[g] = []
            lst.append((s, e, payloads[p]))

    ci_payload = [m[1] for m in gaz.ci_meta]
    ci_is_mask = np.asarray([m[0] == MASK for m in gaz.ci_meta], dtype=bool)
    pos, pid = gaz.ci.find(raw)
    if pos.shape[0]:
        flag = ci_is_mask[pid]
        demux(masks_by_seg, ci_payload, pos[flag], pid[flag], gaz.ci.pat_len)
        demux(hits_by_seg, ci_payload, pos[~flag], pid[~flag], gaz.ci.pat_len)
    pos, pid = gaz.cs.find(raw)
    demux(hits_by_seg, [m[1] for m in gaz.cs_meta], pos, pid, gaz.cs.pat_len)

    excluded = gaz.excluded
    suppress = gaz.suppressions
    empty = frozenset()
    results = []
    append_result = results.append
    for i, rec in enumerate(records):
        topic = match_topic_query(rec, query) if query is not None else None
        title_hits = hits_by_seg[2 * i]
        abs_hits = hits_by_seg[2 * i + 1]
        if title_hits is None and abs_hits is None \
                and masks_by_seg[2 * i] is None and masks_by_seg[2 * i + 1] is None:
            append_result(MentionResult(rec.id, empty, (), (), topic))
            continue
        spans: list[Span] = []
        masked: list[MaskedSpan] = []
        mentioned: set[str] = set()
        for field, hits, masks in ((TITLE, title_hits, masks_by_seg[2 * i]),
                                   (ABSTRACT, abs_hits, masks_by_seg[2 * i + 1])):
            if not hits:
                continue
            if masks is None and len(hits) == 1:
                kept = hits
                mask_dropped = ()
            else:
                kept, mask_dropped = resolve_span_hits(masks or [], hits)
            for (s, e, iso3), phrase in mask_dropped:
                masked.append(MaskedSpan(iso3, field, s, e,
                                         f"exclusion phrase '{phrase}'"))
            for s, e, iso3 in kept:
                if iso3 in excluded:
                    masked.append(MaskedSpan(iso3, field, s, e,
                                             "excluded territory"))
                    continue
                sup = suppress.get(iso3)
                if sup and any((c // 100) * 100 in sup for c in rec.subject_areas):
                    masked.append(MaskedSpan(iso3, field, s, e,
                                             "suppressed for subject area"))
                    continue
                spans.append(Span(iso3, field, s, e))
                mentioned.add(iso3)
        append_result(MentionResult(rec.id, frozenset(mentioned), tuple(spans),
                                    tuple(masked), topic))
    return results


def extract_mentions(record: PublicationRecord, gaz: CompiledGazetteer) -> MentionResult:
    """Detect the set of countries mentioned by one publication."""
    return _extract_batch([record], gaz)[0]


def extract_corpus(records: Sequence[PublicationRecord], gaz: CompiledGazetteer,
                   parallelism: int = 1,
                   query: "TopicQuery | None" = None) -> list[MentionResult]:
    """Extract a corpus; results are sorted by publication id and identical
    for any worker count."""
    records = list(records)
    if parallelism <= 1 or len(records) < 2 * parallelism:
        results = _extract_batch(records, gaz, query)
    else:
        size = -(-len(records) // parallelism)
        chunks = [records[i:i + size] for i in range(0, len(records), size)]
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(processes=len(chunks)) as pool:
            parts = pool.starmap(_extract_batch, [(c, gaz, query) for c in chunks])
        results = [r for part in parts for r in part]
    results.sort(key=lambda r: r.publication_id)
    return results


# --- Topic tagging (boolean wildcard queries over title/abstract) ---------

@dataclass(frozen=True)
class TopicQuery:
    """Boolean tree over wildcard terms.

    Nodes are ("term", text), ("and", children) or ("or", children).
    A term matches when its "*"-separated fragments occur in order within
    the normalized title or within the normalized abstract (containment
    semantics; leading/trailing wildcards are therefore no-ops).
    """

    root: tuple

    def __post_init__(self):
        def check(node):
            kind = node[0]
            if kind == "term":
                if not node[1]:
                    raise ValueError("empty query term")
            elif kind in ("and", "or"):
                for child in node[1]:
                    check(child)
            else:
                raise ValueError(f"bad query node {kind!r}")
        check(self.root)


DEFAULT_TOPIC_QUERY_TEXT = (
    '"*arab spring*" OR "*arab-spring*" OR "*arab uprising*" OR "*arab-uprising*" '
    'OR "2011 revolution*" OR "2011 uprising*" OR "middle east uprising*" OR '
    '(("uprising*" OR "civil unrest*" OR "protests" OR "revolution*") '
    'AND ("arab" OR "middle east" OR "north africa"))'
)

_TOKEN_RE = re.compile(r'\s*("([^"]*)"|\(|\)|AND|OR)', re.IGNORECASE)


def parse_topic_query(text: str) -> TopicQuery:
    tokens: list[str] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip():
                raise ValueError(f"bad query syntax at {text[pos:pos + 20]!r}")
            break
        tok = m.group(1)
        tokens.append(("term", m.group(2)) if m.group(2) is not None else tok.upper())
        pos = m.end()
    idx = 0

    def peek():
        return tokens[idx] if idx < len(tokens) else None

    def take():
        nonlocal idx
        if idx >= len(tokens):
            raise ValueError("unexpected end of query")
        tok = tokens[idx]
        idx += 1
        return tok

    def atom():
        tok = take()
        if tok == "(":
            node = expr()
            if peek() != ")":
                raise ValueError("unbalanced parentheses in query")
            take()
            return node
        if isinstance(tok, tuple):
            term = " ".join(tok[1].split()).casefold()
            if not term.strip("*"):
                raise ValueError(f"empty query term {tok[1]!r}")
            return ("term", term)
        raise ValueError(f"unexpected token {tok!r}")

    def conj():
        node = atom()
        children = [node]
        while peek() == "AND":
            take()
            children.append(atom())
        return children[0] if len(children) == 1 else ("and", tuple(children))

    def expr():
        node = conj()
        children = [node]
        while peek() == "OR":
            take()
            children.append(conj())
        return children[0] if len(children) == 1 else ("or", tuple(children))

    root = expr()
    if idx != len(tokens):
        raise ValueError("trailing tokens in query")
    return TopicQuery(root)


def default_topic_query() -> TopicQuery:
    return parse_topic_query(DEFAULT_TOPIC_QUERY_TEXT)


def _term_in(term: str, hay: str) -> bool:
    pos = 0
    for frag in term.split("*"):
        if not frag:
            continue
        found = hay.find(frag, pos)
        if found == -1:
            return False
        pos = found + len(frag)
    return True


def match_topic_query(record: PublicationRecord, query: TopicQuery) -> bool:
    """Evaluate the boolean tree over the record's title and abstract."""
    hays = (" ".join(record.title.split()).casefold(),
            " ".join(record.abstract.split()).casefold())

    def ev(node) -> bool:
        kind = node[0]
        if kind == "term":
            return any(_term_in(node[1], h) for h in hays)
        if kind == "and":
            return all(ev(c) for c in node[1])
        return any(ev(c) for c in node[1])

    return ev(query.root)
