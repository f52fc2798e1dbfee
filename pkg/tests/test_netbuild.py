import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoscholar.corpus import AuthorEntry, MigrationEvent, PublicationRecord
from geoscholar.netbuild import (build_attention, build_funding, build_migration,
                                 merge_networks, paper_edge_weights,
                                 read_edges_csv, write_edges_csv)

TOL = 1e-12


def make_record(authors, funders=(), areas=(3300,), year=2012, pid="P1"):
    return PublicationRecord(
        id=pid, year=year, title="", abstract="", subject_areas=tuple(areas),
        authors=tuple(AuthorEntry(f"A{i}", tuple(a)) for i, a in enumerate(authors)),
        funder_countries=tuple(funders))


def enumeration_oracle(record, mentions, excluded=frozenset()):
    """Weight 1/(n_authors * n_affils * n_mentions) per (author, affiliation,
    mention) triple, renormalized over resolvable sources."""
    targets = sorted(set(mentions) - set(excluded))
    edges = {}
    n_a = len(record.authors)
    for author in record.authors:
        affs = [c for c in author.affiliation_countries if c not in excluded]
        for src in affs:
            for tgt in targets:
                w = 1.0 / (n_a * len(affs) * len(targets))
                edges[(src, tgt)] = edges.get((src, tgt), 0.0) + w
    total = sum(edges.values())
    if total == 0:
        return {}
    return {k: v / total for k, v in edges.items()}


def test_two_author_fractional_counting():
    rec = make_record([("ALB", "CHN"), ("CHN",)])
    edges = paper_edge_weights(rec, {"ALB", "BEL"})
    expected = {("ALB", "ALB"): 0.125, ("ALB", "BEL"): 0.125,
                ("CHN", "ALB"): 0.375, ("CHN", "BEL"): 0.375}
    assert set(edges) == set(expected)
    for k, v in expected.items():
        assert edges[k] == pytest.approx(v, abs=TOL)
    oracle = enumeration_oracle(rec, {"ALB", "BEL"})
    for k in edges:
        assert edges[k] == pytest.approx(oracle[k], abs=TOL)
    assert sum(edges.values()) == pytest.approx(1.0, abs=TOL)


def test_single_author_domestic_self_loop():
    rec = make_record([("EGY",)])
    assert paper_edge_weights(rec, {"EGY"}) == {("EGY", "EGY"): 1.0}


def test_all_authors_unaffiliated_yields_nothing():
    rec = make_record([(), ()])
    assert paper_edge_weights(rec, {"EGY"}) == {}


def test_unaffiliated_weight_renormalized():
    rec = make_record([("FRA",), ()])
    edges = paper_edge_weights(rec, {"EGY"})
    assert edges == {("FRA", "EGY"): pytest.approx(1.0, abs=TOL)}


def test_empty_mentions_precondition():
    with pytest.raises(ValueError):
        paper_edge_weights(make_record([("EGY",)]), set())


def test_excluded_sources_and_targets_dropped():
    rec = make_record([("FRA", "GIN")])
    edges = paper_edge_weights(rec, {"EGY", "CYP"}, excluded=frozenset({"GIN", "CYP"}))
    assert edges == {("FRA", "EGY"): pytest.approx(1.0, abs=TOL)}


def test_build_attention_unit_total(taxonomy):
    rec = make_record([("ALB", "CHN"), ("CHN",)])
    net = build_attention([rec], {"P1": {"ALB", "BEL"}}, taxonomy)
    assert net.total_weight(2012) == pytest.approx(1.0, abs=TOL)
    assert net.stats["contributing"] == 1


def test_build_attention_stratified_halves(taxonomy):
    rec = make_record([("ALB", "CHN"), ("CHN",)], areas=(3300, 2700))
    net = build_attention([rec], {"P1": {"ALB", "BEL"}}, taxonomy, stratify=True)
    keys = sorted(net.slices)
    assert keys == [(2012, "Health Sciences"), (2012, "Social Sciences")]
    for key in keys:
        assert sum(net.slices[key].values()) == pytest.approx(0.5, abs=TOL)


def test_build_attention_empty_corpus(taxonomy):
    net = build_attention([], {}, taxonomy)
    assert net.slices == {} and net.nodes == set()


def test_build_attention_excluded_discipline_skipped(taxonomy):
    rec = make_record([("EGY",)], areas=(3100,))
    net = build_attention([rec], {"P1": {"EGY"}}, taxonomy)
    assert net.slices == {}
    assert net.stats["no_discipline"] == 1


def test_build_funding_split(taxonomy):
    rec = make_record([("EGY",)], funders=("USA",))
    net = build_funding([rec], {"P1": {"EGY", "TUN"}})
    edges = net.slices[(2012, None)]
    assert edges == {("USA", "EGY"): pytest.approx(0.5),
                     ("USA", "TUN"): pytest.approx(0.5)}


def test_build_funding_no_funders(taxonomy):
    net = build_funding([make_record([("EGY",)])], {"P1": {"EGY"}})
    assert net.slices == {}


def test_build_funding_two_funders():
    rec = make_record([("EGY",)], funders=("SAU", "USA"))
    net = build_funding([rec], {"P1": {"EGY"}})
    edges = net.slices[(2012, None)]
    assert edges == {("SAU", "EGY"): pytest.approx(0.5),
                     ("USA", "EGY"): pytest.approx(0.5)}


def test_build_migration_counts():
    events = [MigrationEvent("s1", 2013, "EGY", "SAU")] * 3
    net = build_migration(events)
    assert net.slices[(2013, None)] == {("EGY", "SAU"): 3}


def test_build_migration_empty():
    assert build_migration([]).slices == {}


def test_migration_yearly_average_fixture():
    events = []
    for year in range(2011, 2020):
        events += [MigrationEvent(f"s{year}{i}", year, "EGY", "SAU")
                   for i in range(162)]
    net = build_migration(events)
    years = range(2011, 2020)
    avg = sum(net.slices[(y, None)][("EGY", "SAU")] for y in years) / len(list(years))
    assert avg == 162


country = st.sampled_from(["EGY", "TUN", "SAU", "USA", "FRA", "MYS"])
author_strategy = st.lists(st.frozensets(country, max_size=3), min_size=1, max_size=4)


@settings(max_examples=60, deadline=None)
@given(author_strategy, st.frozensets(country, min_size=1, max_size=3))
def test_per_publication_conservation(affiliations, mentions):
    rec = make_record([tuple(sorted(a)) for a in affiliations])
    edges = paper_edge_weights(rec, mentions)
    total = sum(edges.values())
    if any(affiliations):
        assert total == pytest.approx(1.0, abs=1e-9)
    else:
        assert total == 0.0
    oracle = enumeration_oracle(rec, mentions)
    assert set(edges) == set(oracle)
    for k in edges:
        assert edges[k] == pytest.approx(oracle[k], abs=TOL)


def _corpus(taxonomy, n=30, seed=3):
    from geoscholar.synth import SynthPlan, generate_corpus
    from geoscholar.extract import extract_corpus
    from geoscholar.gazetteer import default_gazetteer

    plan = SynthPlan(seed=seed, n_publications=n)
    records, _ = generate_corpus(plan)
    mentions = {m.publication_id: m
                for m in extract_corpus(records, default_gazetteer())}
    return records, mentions


def test_merge_associativity(taxonomy):
    records, mentions = _corpus(taxonomy)
    whole = build_attention(records, mentions, taxonomy)
    shards = [build_attention(records[i::3], mentions, taxonomy) for i in range(3)]
    merged = merge_networks(shards)
    assert set(merged.slices) == set(whole.slices)
    for key in whole.slices:
        for edge, w in whole.slices[key].items():
            assert merged.slices[key][edge] == pytest.approx(w, abs=1e-9)
    assert merged.stats == whole.stats


def test_stratified_marginals(taxonomy):
    records, mentions = _corpus(taxonomy, n=60, seed=4)
    flat = build_attention(records, mentions, taxonomy, stratify=False)
    strat = build_attention(records, mentions, taxonomy, stratify=True)
    summed: dict = {}
    for (year, _), edges in strat.slices.items():
        for edge, w in edges.items():
            summed.setdefault(year, {}).setdefault(edge, 0.0)
            summed[year][edge] += w
    flat_by_year = {year: edges for (year, _), edges in flat.slices.items()}
    assert set(summed) == set(flat_by_year)
    for year in summed:
        assert set(summed[year]) == set(flat_by_year[year])
        for edge, w in flat_by_year[year].items():
            assert summed[year][edge] == pytest.approx(w, abs=1e-9)


def test_edges_csv_round_trip(tmp_path, taxonomy):
    records, mentions = _corpus(taxonomy, n=25, seed=5)
    net = build_attention(records, mentions, taxonomy, stratify=True)
    path = tmp_path / "edges.csv"
    write_edges_csv(net, path, header_comment="config_hash=test")
    loaded = read_edges_csv(path, kind="attention")
    assert set(loaded.slices) == set(net.slices)
    for key in net.slices:
        for edge, w in net.slices[key].items():
            assert loaded.slices[key][edge] == w  # repr round-trips floats
    assert path.read_text().startswith("# config_hash=test\n")


def test_merge_rejects_mixed_kinds():
    with pytest.raises(ValueError):
        merge_networks([build_migration([]), build_funding([], {})])
