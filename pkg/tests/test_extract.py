import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import geoscholar.gazetteer as gz
from geoscholar import _kernels
from geoscholar.corpus import AuthorEntry, PublicationRecord
from geoscholar.extract import (default_topic_query, extract_corpus,
                                extract_mentions, match_topic_query,
                                parse_topic_query, read_mentions,
                                strip_copyright, write_mentions)
from geoscholar.synth import SynthPlan, generate_corpus, oracle_extract


def rec(title="", abstract="", areas=(2300,), pid="P1", year=2012):
    return PublicationRecord(
        id=pid, year=year, title=title, abstract=abstract,
        subject_areas=tuple(areas),
        authors=(AuthorEntry("A1", ("EGY",)),), funder_countries=())


# --- copyright stripping ----------------------------------------------------

def test_strip_copyright_symbol():
    assert strip_copyright("Results are robust. © 2015 Elsevier, Netherlands.") \
        == "Results are robust. "


def test_strip_copyright_identity():
    assert strip_copyright("no marker here") == "no marker here"


def test_strip_copyright_c_marker():
    assert strip_copyright("A. Copyright (C) 2010 B. Egypt.") == "A. "


def test_strip_at_requires_context():
    assert strip_copyright("contact me at a@b.org for data") \
        == "contact me at a@b.org for data"
    assert strip_copyright("text @ 2014 Elsevier. Egypt") == "text "
    assert strip_copyright("text @ Springer press, Egypt") == "text "


def test_strip_at_year_needs_boundary():
    # digits glued to the year do not qualify
    assert strip_copyright("v@x120150 tail") == "v@x120150 tail"


def test_strip_first_marker_wins():
    assert strip_copyright("a © b Copyright (C) c") == "a "
    assert strip_copyright("a Copyright (C) b © c") == "a "


@settings(max_examples=80, deadline=None)
@given(st.text(alphabet=" abc@©2015Eglsevier.", max_size=60))
def test_strip_idempotent(text):
    assert strip_copyright(strip_copyright(text)) == strip_copyright(text)


# --- mention extraction ------------------------------------------------------

def test_extract_basic_pair(gaz):
    m = extract_mentions(rec(title="Water scarcity in Egypt and northern Jordan",
                             areas=(2300,)), gaz)
    assert m.mentioned == {"EGY", "JOR"}
    assert [(s.iso3, s.field) for s in m.spans] == [("EGY", "title"), ("JOR", "title")]


def test_extract_jordan_suppressed_in_mathematics(gaz):
    m = extract_mentions(rec(title="Jordan normal form of nilpotent matrices",
                             areas=(2602,)), gaz)
    assert m.mentioned == frozenset()
    assert m.masked_spans[0].reason == "suppressed for subject area"


def test_extract_congo_red_masked(gaz):
    m = extract_mentions(rec(abstract="adsorption of Congo Red dye"), gaz)
    assert m.mentioned == frozenset()


def test_extract_excluded_territory_dropped(gaz):
    m = extract_mentions(rec(abstract="archives digitized in Cyprus"), gaz)
    assert m.mentioned == frozenset()
    assert m.masked_spans[0].reason == "excluded territory"


def test_extract_copyright_tail_removed(gaz):
    m = extract_mentions(rec(abstract="Study of Tunisia. © 2013 Elsevier, Netherlands."), gaz)
    assert m.mentioned == {"TUN"}


def test_title_is_never_stripped(gaz):
    m = extract_mentions(rec(title="Assessment © 2013 for Egypt"), gaz)
    assert m.mentioned == {"EGY"}


def test_extract_reports_spans_and_dedup(gaz):
    m = extract_mentions(rec(title="Egypt", abstract="Egypt and Egypt again"), gaz)
    assert m.mentioned == {"EGY"}
    assert len(m.spans) == 3


def test_no_span_overlaps_masked_span(gaz):
    m = extract_mentions(rec(abstract="US dollar rates in Egypt and New Mexico"), gaz)
    for s in m.spans:
        for d in m.masked_spans:
            assert not (s.field == d.field and s.start < d.end and d.start < s.end)


def test_extract_idempotent_on_stripped_abstract(gaz):
    text = "Egypt data. © 2014 Springer. Libya later."
    a = extract_mentions(rec(abstract=text), gaz)
    b = extract_mentions(rec(abstract=strip_copyright(text)), gaz)
    assert a.mentioned == b.mentioned and a.spans == b.spans


def test_masking_is_monotone():
    base = gz.GazetteerSource(
        entries=(gz.CountryEntry("MEX", "Mexico", ("Mexico",), ()),
                 gz.CountryEntry("EGY", "Egypt", ("Egypt",), ())))
    more = gz.GazetteerSource(
        entries=base.entries,
        exclusion_phrases=(gz.ExclusionPhrase("New Mexico", ""),))
    texts = ["New Mexico and Egypt", "Mexico alone", "in New Mexico only"]
    for text in texts:
        a = extract_mentions(rec(abstract=text), gz.compile(base)).mentioned
        b = extract_mentions(rec(abstract=text), gz.compile(more)).mentioned
        assert b <= a


def test_suppression_soundness(gaz):
    for areas in [(2602,), (1701, 3300), (3101,), (2200,)]:
        m = extract_mentions(rec(title="Jordan basin survey", areas=areas), gaz)
        assert "JOR" not in m.mentioned


# --- corpus-level extraction -------------------------------------------------

def test_extract_corpus_empty(gaz):
    assert extract_corpus([], gaz) == []


def test_extract_corpus_matches_per_record(gaz):
    plan = SynthPlan(seed=5, n_publications=120, distractor_rate=0.4)
    records, _ = generate_corpus(plan)
    batch = extract_corpus(records, gaz)
    single = sorted((extract_mentions(r, gaz) for r in records),
                    key=lambda m: m.publication_id)
    assert batch == single


def test_extract_corpus_parallel_determinism(tmp_path, gaz):
    plan = SynthPlan(seed=6, n_publications=200, distractor_rate=0.3)
    records, _ = generate_corpus(plan)
    paths = []
    for workers in (1, 4):
        out = tmp_path / f"m{workers}.jsonl"
        write_mentions(extract_corpus(records, gaz, parallelism=workers), out)
        paths.append(out.read_bytes())
    assert paths[0] == paths[1]


def test_extract_corpus_recovers_plants(gaz, source):
    plan = SynthPlan(seed=7, n_publications=500, distractor_rate=0.3)
    records, gold = generate_corpus(plan)
    results = extract_corpus(records, gaz)
    assert {r.publication_id: r.mentioned for r in results} == gold


def test_backends_agree(gaz):
    plan = SynthPlan(seed=8, n_publications=80, distractor_rate=0.5)
    records, _ = generate_corpus(plan)
    _kernels.set_backend("numba")
    fast = extract_corpus(records, gaz)
    _kernels.set_backend("python")
    slow = extract_corpus(records, gaz)
    assert fast == slow


def test_oracle_equivalence_small(gaz, source):
    plan = SynthPlan(seed=9, n_publications=300, distractor_rate=0.4)
    records, _ = generate_corpus(plan)
    results = extract_corpus(records, gaz)
    gold = oracle_extract(records, source)
    assert {r.publication_id: r.mentioned for r in results} == gold


def test_mentions_jsonl_round_trip(tmp_path, gaz):
    plan = SynthPlan(seed=10, n_publications=40)
    records, _ = generate_corpus(plan)
    results = extract_corpus(records, gaz, query=default_topic_query())
    path = tmp_path / "m.jsonl"
    write_mentions(results, path)
    assert read_mentions(path) == results
    first = json.loads(path.read_text().splitlines()[0])
    assert set(first) >= {"publication_id", "mentioned", "spans", "masked_spans"}


# --- topic queries ------------------------------------------------------------

def test_topic_query_direct_phrase(gaz):
    q = default_topic_query()
    assert match_topic_query(rec(abstract="the Arab Spring reshaped research"), q)


def test_topic_query_and_clause_unmet():
    q = default_topic_query()
    assert not match_topic_query(rec(abstract="protests in Latin America"), q)


def test_topic_query_empty_record_false():
    assert not match_topic_query(rec(), default_topic_query())


def test_topic_query_compound_clause():
    q = default_topic_query()
    assert match_topic_query(rec(abstract="uprisings across north africa grew"), q)
    assert match_topic_query(rec(title="Revolution dynamics",
                                 abstract="a study of the middle east"), q)


def test_topic_query_whitespace_normalized():
    q = parse_topic_query('"arab  spring"')
    assert match_topic_query(rec(abstract="the arab\n spring years"), q)


def test_topic_query_wildcards_interior():
    q = parse_topic_query('"civil*unrest"')
    assert match_topic_query(rec(abstract="civil society unrest grows"), q)
    assert not match_topic_query(rec(abstract="unrest before civil dawn"), q)


@pytest.mark.parametrize("bad", ['"a" OR', '("a"', '"a" "b"', '""', '"***"', "AND"])
def test_topic_query_parse_errors(bad):
    with pytest.raises(ValueError):
        parse_topic_query(bad)


def test_topic_tagging_in_corpus(gaz):
    records = [rec(pid="P1", abstract="the arab spring and Egypt"),
               rec(pid="P2", abstract="Egypt agronomy")]
    out = extract_corpus(records, gaz, query=default_topic_query())
    assert [m.topic_match for m in out] == [True, False]


def test_embedded_nul_characters_do_not_corrupt_offsets(gaz):
    m = extract_mentions(rec(title="Egypt\x00split", abstract="x\x00 Tunisia"), gaz)
    assert m.mentioned == {"EGY", "TUN"}
    spans = {s.iso3: (s.field, s.start, s.end) for s in m.spans}
    assert spans["EGY"] == ("title", 0, 5)
    assert spans["TUN"] == ("abstract", 3, 10)


def test_alias_listed_case_sensitive_and_insensitive():
    import geoscholar.gazetteer as gz

    src = gz.GazetteerSource(entries=(
        gz.CountryEntry("EGY", "Egypt", ("Egypt",), ("Egypt",)),))
    compiled = gz.compile(src)
    m = extract_mentions(rec(abstract="work in Egypt today"), compiled)
    assert m.mentioned == {"EGY"}
    assert len(m.spans) == 1  # duplicate hits from both automata collapse


ADVERSARIAL_WORDS = [
    "Egypt", "egypt", "EGYPT", "Jordan", "South", "Sudan", "South Sudan",
    "North", "Korea", "North Korea", "South Korea", "US", "us", "U.S.",
    "USA", "U.S.A.", "United", "States", "United States", "dollar",
    "New", "Mexico", "New Mexico", "Congo", "Red", "Congo Red", "guinea",
    "pig", "Guinea", "Michael", "Michael Jordan", "Niger", "Nigeria",
    "Türkiye", "Egyptian", "Jordanian", "©", "Copyright (C)", "@", "2015",
    "Elsevier", "study", "x", ".", ",", "-", "(", ")",
]


@settings(max_examples=120, deadline=None)
@given(st.lists(st.sampled_from(ADVERSARIAL_WORDS), max_size=14),
       st.lists(st.sampled_from(ADVERSARIAL_WORDS), max_size=20),
       st.sampled_from([(2300,), (2602,), (3101, 3300)]))
def test_fuzz_extract_matches_oracle(title_words, abstract_words, areas):
    from geoscholar.gazetteer import default_gazetteer, default_source

    record = rec(title=" ".join(title_words), abstract=" ".join(abstract_words),
                 areas=areas)
    fast = extract_mentions(record, default_gazetteer()).mentioned
    slow = oracle_extract([record], default_source())[record.id]
    assert fast == slow


@settings(max_examples=120, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(ADVERSARIAL_WORDS),
                          st.sampled_from(["", " ", "-", ", ", "."])),
                max_size=16))
def test_fuzz_glued_tokens_match_oracle(pieces):
    from geoscholar.gazetteer import default_gazetteer, default_source

    text = "".join(w + sep for w, sep in pieces)
    record = rec(abstract=text)
    fast = extract_mentions(record, default_gazetteer()).mentioned
    slow = oracle_extract([record], default_source())[record.id]
    assert fast == slow
