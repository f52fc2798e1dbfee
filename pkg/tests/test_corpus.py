import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoscholar.corpus import (AsjcTaxonomy, CorpusError, discipline_weights,
                               dump_corpus, load_corpus, load_covariates,
                               PublicationRecord, AuthorEntry)

VALID = {
    "id": "P1", "year": 2011, "title": "t", "abstract": "a",
    "subject_areas": [3300],
    "authors": [{"author_id": "A1", "affiliation_countries": ["EGY"]}],
    "funder_countries": ["USA"], "language": "en",
}


def write_lines(path, objs):
    with open(path, "w", encoding="utf-8") as fh:
        for o in objs:
            fh.write((o if isinstance(o, str) else json.dumps(o)) + "\n")


def test_single_valid_record(tmp_path):
    p = tmp_path / "c.jsonl"
    write_lines(p, [VALID])
    res = load_corpus(p, "publications")
    assert len(res.records) == 1
    assert not res.diagnostics
    rec = res.records[0]
    assert rec.id == "P1" and rec.authors[0].affiliation_countries == ("EGY",)


def test_empty_file(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text("")
    res = load_corpus(p, "publications")
    assert res.records == [] and res.diagnostics == []


def test_malformed_line_reported_with_line_number(tmp_path):
    p = tmp_path / "c.jsonl"
    objs = [dict(VALID, id=f"P{i}") for i in range(3)]
    write_lines(p, objs + ["{not json"])
    res = load_corpus(p, "publications")
    assert len(res.records) == 3
    assert len(res.diagnostics) == 1
    assert res.diagnostics[0].line == 4


def test_duplicate_id_is_hard_error(tmp_path):
    p = tmp_path / "c.jsonl"
    write_lines(p, [VALID, VALID])
    with pytest.raises(CorpusError, match="duplicate id"):
        load_corpus(p, "publications")


def test_unknown_iso3_dropped_with_warning(tmp_path):
    p = tmp_path / "c.jsonl"
    bad = dict(VALID)
    bad["authors"] = [{"author_id": "A1", "affiliation_countries": ["EGY", "ZZZ"]}]
    write_lines(p, [bad])
    res = load_corpus(p, "publications")
    assert res.records[0].authors[0].affiliation_countries == ("EGY",)
    assert any("ZZZ" in d.message for d in res.warnings)


def test_bad_iso3_format_rejects_line(tmp_path):
    p = tmp_path / "c.jsonl"
    bad = dict(VALID)
    bad["funder_countries"] = ["us"]
    write_lines(p, [bad])
    res = load_corpus(p, "publications")
    assert not res.records and res.errors


def test_year_window_enforced(tmp_path):
    p = tmp_path / "c.jsonl"
    write_lines(p, [dict(VALID, year=2025)])
    res = load_corpus(p, "publications")
    assert not res.records
    assert any("window" in d.message for d in res.errors)
    res = load_corpus(p, "publications", year_window=None)
    assert len(res.records) == 1


def test_empty_subject_areas_rejected(tmp_path):
    p = tmp_path / "c.jsonl"
    write_lines(p, [dict(VALID, subject_areas=[])])
    res = load_corpus(p, "publications")
    assert not res.records and res.errors


def test_migration_origin_equals_destination_rejected(tmp_path):
    p = tmp_path / "m.jsonl"
    write_lines(p, [
        {"scholar_id": "S1", "year": 2012, "origin": "EGY", "destination": "EGY"},
        {"scholar_id": "S2", "year": 2012, "origin": "EGY", "destination": "SAU"},
    ])
    res = load_corpus(p, "migrations")
    assert len(res.records) == 1
    assert res.records[0].destination == "SAU"
    assert len(res.errors) == 1


def test_round_trip(tmp_path):
    objs = [dict(VALID, id=f"P{i}", title=f"title {i} ©") for i in range(5)]
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_lines(p1, objs)
    first = load_corpus(p1, "publications").records
    dump_corpus(first, p2)
    second = load_corpus(p2, "publications").records
    assert first == second


def test_order_independent(tmp_path):
    objs = [dict(VALID, id=f"P{i}") for i in range(6)]
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_lines(p1, objs)
    write_lines(p2, list(reversed(objs)))
    a = load_corpus(p1, "publications").records
    b = load_corpus(p2, "publications").records
    assert set(a) == set(b)


def test_covariates_loader(tmp_path):
    p = tmp_path / "cov.csv"
    p.write_text("country,year,gdp_per_capita,population,researcher_population,scholar_stock\n"
                 "EGY,2005,2500.5,70000000,40000,12000\n")
    res = load_covariates(p)
    assert res.records[0].gdp_per_capita == 2500.5
    dup = p.read_text() + "EGY,2005,2600.0,70000001,40001,12001\n"
    p.write_text(dup)
    with pytest.raises(CorpusError, match="duplicate"):
        load_covariates(p)


def test_covariates_header_checked(tmp_path):
    p = tmp_path / "cov.csv"
    p.write_text("country,year,gdp\nEGY,2005,1.0\n")
    with pytest.raises(CorpusError, match="header"):
        load_covariates(p)


def _rec(areas):
    return PublicationRecord(
        id="P1", year=2011, title="", abstract="", subject_areas=tuple(areas),
        authors=(AuthorEntry("A1", ("EGY",)),), funder_countries=())


def test_discipline_weights_half_counting(taxonomy):
    w = discipline_weights(_rec([3300, 2700]), taxonomy)
    assert w == {"Health Sciences": 0.5, "Social Sciences": 0.5}


def test_discipline_weights_single(taxonomy):
    assert discipline_weights(_rec([1600]), taxonomy) == {"Physical Sciences": 1.0}


def test_discipline_weights_excluded_area_empty(taxonomy):
    assert discipline_weights(_rec([3100]), taxonomy) == {}
    assert discipline_weights(_rec([1000]), taxonomy) == {}


def test_discipline_weights_same_discipline_not_split(taxonomy):
    assert discipline_weights(_rec([1600, 2500]), taxonomy) == {"Physical Sciences": 1.0}


def test_discipline_weights_unknown_code_warns(taxonomy):
    diags = []
    w = discipline_weights(_rec([9900, 3300]), taxonomy, diagnostics=diags)
    assert w == {"Social Sciences": 1.0}
    assert diags and diags[0].severity == "warning"


@settings(max_examples=60, deadline=None)
@given(st.sets(st.sampled_from(sorted(AsjcTaxonomy.default().areas)), min_size=1))
def test_discipline_weights_sum_to_one(areas):
    taxonomy = AsjcTaxonomy.default()
    w = discipline_weights(_rec(sorted(areas)), taxonomy)
    if w:
        assert abs(sum(w.values()) - 1.0) < 1e-12
    else:
        assert all(taxonomy.lookup(a) is None or taxonomy.lookup(a).excluded
                   for a in areas)
