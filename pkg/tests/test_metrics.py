import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoscholar.corpus import AuthorEntry, PublicationRecord
from geoscholar.metrics import (AttentionSplit, GroupSpec, PeriodSpec, correlate,
                                attention_series, delta_avg_annual,
                                flag_hyperprolific, metrics_table,
                                net_migration_rate, normalized_rank_change,
                                nrc_from_ranks, rank_countries, signed_rank_test,
                                split_domestic_foreign, total_attention,
                                write_metrics_csv)
from geoscholar.netbuild import DirectedCountryNetwork, build_migration
from geoscholar.corpus import MigrationEvent


def net_from_edges(edges, year=2012, kind="attention"):
    net = DirectedCountryNetwork(kind=kind)
    for (s, t), w in edges.items():
        net.add_edge((year, None), s, t, w)
    return net


def test_period_spec_validation():
    PeriodSpec()
    with pytest.raises(ValueError):
        PeriodSpec(pre=(2002, 2011), post=(2011, 2019))
    with pytest.raises(ValueError):
        PeriodSpec(pre=(2010, 2002))


def test_group_spec_disjoint():
    GroupSpec.default()
    with pytest.raises(ValueError, match="overlap"):
        GroupSpec({"A": frozenset({"EGY"}), "B": frozenset({"EGY"})})


def test_total_attention_sum():
    net = net_from_edges({("ALB", "MEX"): 0.3, ("BEL", "MEX"): 0.7})
    assert total_attention(net, "MEX", 2012) == pytest.approx(1.0)


def test_total_attention_no_incoming():
    net = net_from_edges({("ALB", "MEX"): 0.3})
    assert total_attention(net, "ALB", 2012) == 0.0


def test_total_attention_unknown_country_warns(caplog):
    net = net_from_edges({("ALB", "MEX"): 0.3})
    with caplog.at_level("WARNING", logger="geoscholar.metrics"):
        assert total_attention(net, "ZWE", 2012) == 0.0
    assert "unknown country" in caplog.text


def test_two_author_example_attention_totals():
    edges = {("ALB", "ALB"): 0.125, ("ALB", "BEL"): 0.125,
             ("CHN", "ALB"): 0.375, ("CHN", "BEL"): 0.375}
    net = net_from_edges(edges)
    assert total_attention(net, "ALB", 2012) == pytest.approx(0.5)
    assert total_attention(net, "BEL", 2012) == pytest.approx(0.5)


def test_split_domestic_foreign():
    net = net_from_edges({("MEX", "MEX"): 0.6, ("ALB", "MEX"): 0.3})
    split = split_domestic_foreign(net, "MEX", 2012)
    assert split == AttentionSplit(domestic=pytest.approx(0.6),
                                   foreign=pytest.approx(0.3),
                                   ratio=pytest.approx(0.5))


def test_split_undefined_ratio():
    net = net_from_edges({("ALB", "MEX"): 1.0})
    split = split_domestic_foreign(net, "MEX", 2012)
    assert split.foreign == pytest.approx(1.0)
    assert split.ratio is None
    zero = split_domestic_foreign(net, "ALB", 2012)
    assert (zero.domestic, zero.foreign, zero.ratio) == (0.0, 0.0, None)


def test_total_is_domestic_plus_foreign():
    net = net_from_edges({("MEX", "MEX"): 0.25, ("ALB", "MEX"): 0.5,
                          ("BEL", "MEX"): 0.125})
    split = split_domestic_foreign(net, "MEX", 2012)
    assert split.domestic + split.foreign == pytest.approx(
        total_attention(net, "MEX", 2012), abs=1e-9)


def test_attention_series_kinds():
    net = net_from_edges({("MEX", "MEX"): 0.6, ("ALB", "MEX"): 0.3})
    assert attention_series(net, "total")["MEX"][2012] == pytest.approx(0.9)
    assert attention_series(net, "domestic")["MEX"][2012] == pytest.approx(0.6)
    assert attention_series(net, "foreign")["MEX"][2012] == pytest.approx(0.3)


def test_delta_avg_annual():
    periods = PeriodSpec()
    const = {y: 1.0 for y in range(2002, 2020)}
    assert delta_avg_annual(const, periods) == pytest.approx(0.0)
    step = {y: (1.0 if y < 2011 else 3.0) for y in range(2002, 2020)}
    assert delta_avg_annual(step, periods) == pytest.approx(2.0)


def test_delta_fixture_magnitude():
    periods = PeriodSpec()
    series = {y: 100.0 for y in periods.pre_years()}
    series.update({y: 272.3 for y in periods.post_years()})
    assert delta_avg_annual(series, periods) == pytest.approx(172.3)


def test_delta_missing_years_read_as_zero(caplog):
    periods = PeriodSpec(pre=(2002, 2003), post=(2011, 2012))
    with caplog.at_level("WARNING", logger="geoscholar.metrics"):
        delta = delta_avg_annual({2011: 2.0, 2012: 2.0}, periods)
    assert delta == pytest.approx(2.0)
    assert "missing year" in caplog.text


def test_rank_countries():
    assert rank_countries({"A": 3, "B": 1, "C": 2}) == {"A": 1, "C": 2, "B": 3}


def test_rank_tie_lexicographic():
    assert rank_countries({"B": 2, "A": 2}) == {"A": 1, "B": 2}
    assert rank_countries({"Z": 5.0}) == {"Z": 1}


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(st.sampled_from(["AAA", "BBB", "CCC", "DDD"]),
                       st.floats(0.1, 100, allow_nan=False), min_size=1),
       st.floats(0.1, 10, allow_nan=False))
def test_rank_scale_invariant(values, c):
    scaled = {k: v * c for k, v in values.items()}
    assert rank_countries(values) == rank_countries(scaled)


def test_nrc_formula():
    assert nrc_from_ranks(2, 1, 147) == pytest.approx(1 / 145)
    assert nrc_from_ranks(5, 5, 147) == 0.0
    assert nrc_from_ranks(147, 146, 147) == pytest.approx(1.0)


def test_normalized_rank_change_from_values():
    pre = {"A": 10.0, "B": 5.0, "C": 1.0}
    post = {"A": 10.0, "B": 1.0, "C": 5.0}
    nrc = normalized_rank_change(pre, post, 3)
    assert nrc["A"] == 0.0
    assert nrc["C"] == pytest.approx((3 - 2) / (3 - 3 + 1))
    assert nrc["B"] < 0


def test_nrc_mismatched_maps_rejected():
    with pytest.raises(ValueError):
        normalized_rank_change({"A": 1.0}, {"B": 1.0})
    with pytest.raises(ValueError):
        normalized_rank_change({"A": 1.0}, {"A": 2.0}, n=5)


def test_net_migration_rate():
    assert net_migration_rate(12, 4, 200) == pytest.approx(0.04)
    assert net_migration_rate(5, 5, 100) == 0.0
    assert net_migration_rate(0, 10, 100) == pytest.approx(-0.1)
    assert net_migration_rate(1, 1, 0) is None


def test_flag_hyperprolific_boundary():
    def burst(author, year, n, start):
        return [PublicationRecord(id=f"{author}{year}{i}", year=year, title="",
                                  abstract="", subject_areas=(3300,),
                                  authors=(AuthorEntry(author, ()),),
                                  funder_countries=())
                for i in range(n)]

    records = burst("a72", 2015, 72, 0) + burst("a73", 2015, 73, 0) \
        + burst("a40", 2014, 40, 0) + burst("a40", 2015, 40, 0)
    flagged = flag_hyperprolific(records)
    assert flagged == {"a73"}


def test_correlate_linear():
    x = list(range(10))
    y = [2 * v + 1 for v in x]
    res = correlate(x, y, "pearson")
    assert res.coefficient == pytest.approx(1.0)
    assert res.p_value == 0.0


def test_correlate_monotone_cubic():
    x = [v - 5 for v in range(11)]
    y = [v ** 3 for v in x]
    assert correlate(x, y, "spearman").coefficient == pytest.approx(1.0)
    assert correlate(x, y, "pearson").coefficient < 1.0


def brute_force_spearman(x, y):
    def ranks(v):
        order = sorted(range(len(v)), key=lambda i: v[i])
        r = [0.0] * len(v)
        i = 0
        while i < len(v):
            j = i
            while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
                j += 1
            for k in range(i, j + 1):
                r[order[k]] = (i + j) / 2 + 1
            i = j + 1
        return r

    rx, ry = ranks(x), ranks(y)
    mx = sum(rx) / len(rx)
    my = sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry))
    return num / den


def test_correlate_spearman_matches_brute_force():
    rng = np.random.default_rng(12)
    x = rng.integers(0, 8, size=20).astype(float).tolist()  # ties included
    y = rng.integers(0, 8, size=20).astype(float).tolist()
    res = correlate(x, y, "spearman")
    assert res.coefficient == pytest.approx(brute_force_spearman(x, y), abs=1e-12)


def test_correlate_undefined_on_zero_variance():
    assert correlate([1.0, 1.0, 1.0], [1.0, 2.0, 3.0], "pearson") is None


def test_correlate_symmetric_and_self():
    rng = np.random.default_rng(3)
    x = rng.normal(size=15).tolist()
    y = rng.normal(size=15).tolist()
    assert correlate(x, y).coefficient == pytest.approx(correlate(y, x).coefficient)
    assert correlate(x, x).coefficient == pytest.approx(1.0)


def test_correlate_validation():
    with pytest.raises(ValueError):
        correlate([1, 2], [1, 2])
    with pytest.raises(ValueError):
        correlate([1, 2, 3], [1, 2], "pearson")
    with pytest.raises(ValueError):
        correlate([1, 2, 3], [1, 2, 3], "kendall")


def exhaustive_signed_rank_p(deltas):
    """P(W+ >= observed) by enumerating every sign assignment."""
    nz = [d for d in deltas if d != 0]
    mags = sorted(abs(d) for d in nz)
    ranks = {}
    i = 0
    while i < len(mags):
        j = i
        while j + 1 < len(mags) and mags[j + 1] == mags[i]:
            j += 1
        for k in range(i, j + 1):
            ranks.setdefault(mags[i], (i + j) / 2 + 1)
        i = j + 1

    def rank_of(d):
        return ranks[abs(d)]

    observed = sum(rank_of(d) for d in nz if d > 0)
    count = 0
    n = len(nz)
    for signs in itertools.product((1, -1), repeat=n):
        w = sum(rank_of(d) for d, s in zip(nz, signs) if s > 0)
        if w >= observed - 1e-12:
            count += 1
    return count / 2 ** n


def test_signed_rank_all_positive():
    res = signed_rank_test([1.0] * 10)
    assert res.exact
    assert res.p_value == pytest.approx(1 / 2 ** 10)


def test_signed_rank_symmetric_half():
    res = signed_rank_test([1, -1, 2, -2, 3, -3, 4, -4])
    assert 0.3 < res.p_value < 0.7


def test_signed_rank_too_few_nonzero():
    with pytest.raises(ValueError):
        signed_rank_test([1.0, -2.0, 3.0, 4.0, 0.0])


def test_signed_rank_all_zero_undefined():
    assert signed_rank_test([0.0] * 6) is None


def test_signed_rank_matches_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(25):
        deltas = rng.integers(-4, 5, size=9).astype(float).tolist()
        if len([d for d in deltas if d != 0]) < 5:
            continue
        res = signed_rank_test(deltas)
        assert res.p_value == pytest.approx(exhaustive_signed_rank_p(deltas),
                                            abs=1e-12)


def test_signed_rank_normal_approximation_reasonable():
    rng = np.random.default_rng(6)
    deltas = (rng.normal(0.8, 1.0, size=40)).tolist()
    res = signed_rank_test(deltas)
    assert not res.exact
    assert 0.0 <= res.p_value < 0.05


def test_metrics_table_and_csv(tmp_path):
    net = net_from_edges({("MEX", "MEX"): 0.5, ("ALB", "MEX"): 0.5}, year=2005)
    net.add_edge((2012, None), "ALB", "MEX", 2.0)
    net.add_edge((2012, None), "ALB", "ALB", 1.0)
    migration = build_migration(
        [MigrationEvent("s1", 2012, "ALB", "MEX"), MigrationEvent("s2", 2012, "ALB", "MEX")])
    stocks = {("MEX", y): 100.0 for y in range(2002, 2020)}
    stocks.update({("ALB", y): 50.0 for y in range(2002, 2020)})
    rows = metrics_table(net, PeriodSpec(), GroupSpec.default(),
                         migration=migration, stocks=stocks)
    by_country = {r["country"]: r for r in rows}
    assert by_country["MEX"]["total_pre_avg"] == pytest.approx(1.0 / 9)
    assert by_country["MEX"]["nmr_post_avg"] == pytest.approx(2 / 100 / 9)
    assert by_country["ALB"]["nmr_post_avg"] == pytest.approx(-2 / 50 / 9)
    path = tmp_path / "metrics.csv"
    write_metrics_csv(rows, path, header_comment="config_hash=x")
    lines = path.read_text().splitlines()
    assert lines[0] == "# config_hash=x"
    assert lines[1].startswith("country,group,")
