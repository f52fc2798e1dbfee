"""Scalar and ranked quantities over the country networks.

Covers attention totals and pre/post deltas, the domestic/foreign split,
normalized rank change, net migration rates, the hyperprolific-author
flag, Pearson/Spearman correlations with t-approximated p-values, and the
one-way Wilcoxon signed-rank test (exact for n <= 25, normal approximation
with tie correction and continuity correction above).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .corpus import PublicationRecord
from .netbuild import DirectedCountryNetwork

log = logging.getLogger("geoscholar.metrics")


@dataclass(frozen=True)
class PeriodSpec:
    pre: tuple[int, int] = (2002, 2010)
    post: tuple[int, int] = (2011, 2019)
    event_year: int = 2011

    def __post_init__(self):
        if self.pre[0] > self.pre[1] or self.post[0] > self.post[1]:
            raise ValueError("period ranges must be ascending")
        if self.pre[1] >= self.post[0]:
            raise ValueError("pre period must end before post begins")

    def pre_years(self) -> range:
        return range(self.pre[0], self.pre[1] + 1)

    def post_years(self) -> range:
        return range(self.post[0], self.post[1] + 1)


@dataclass(frozen=True)
class GroupSpec:
    groups: Mapping[str, frozenset] = field(default_factory=dict)

    def __post_init__(self):
        labels = sorted(self.groups)
        for i, a in enumerate(labels):
            for b in labels[i + 1:]:
                common = set(self.groups[a]) & set(self.groups[b])
                if common:
                    raise ValueError(
                        f"groups {a} and {b} overlap: {sorted(common)}")

    def label_of(self, iso3: str) -> str | None:
        for label, members in self.groups.items():
            if iso3 in members:
                return label
        return None

    def all_members(self) -> frozenset:
        out: set = set()
        for members in self.groups.values():
            out |= set(members)
        return frozenset(out)

    @classmethod
    def default(cls) -> "GroupSpec":
        return cls({
            "GO": frozenset({"EGY", "TUN"}),
            "CW": frozenset({"LBY", "SYR", "YEM"}),
            "GC": frozenset({"BHR", "JOR", "KWT", "MAR", "OMN"}),
        })


def total_attention(net: DirectedCountryNetwork, target: str, year: int) -> float:
    """Sum of incoming edge weights to ``target`` in the year slice."""
    if target not in net.nodes:
        log.warning("unknown country %s in %s network", target, net.kind)
        return 0.0
    return net.incoming(target, year)


@dataclass(frozen=True)
class AttentionSplit:
    domestic: float
    foreign: float
    ratio: float | None  # foreign/domestic; None when domestic == 0


def split_domestic_foreign(net: DirectedCountryNetwork, target: str,
                           year: int) -> AttentionSplit:
    total = total_attention(net, target, year)
    domestic = net.self_loop(target, year)
    foreign = total - domestic
    ratio = foreign / domestic if domestic > 0 else None
    return AttentionSplit(domestic=domestic, foreign=foreign, ratio=ratio)


def attention_series(net: DirectedCountryNetwork, kind: str = "total"
                     ) -> dict[str, dict[int, float]]:
    """Per-country year series of total, domestic, or foreign attention."""
    if kind not in ("total", "domestic", "foreign"):
        raise ValueError(f"unknown attention kind {kind!r}")
    incoming: dict[str, dict[int, float]] = {}
    selfloop: dict[str, dict[int, float]] = {}
    for (year, _), edges in net.slices.items():
        for (s, t), w in edges.items():
            incoming.setdefault(t, {}).setdefault(year, 0.0)
            incoming[t][year] += w
            if s == t:
                selfloop.setdefault(t, {}).setdefault(year, 0.0)
                selfloop[t][year] += w
    out: dict[str, dict[int, float]] = {}
    for c in net.nodes:
        series = {}
        for year in net.years():
            tot = incoming.get(c, {}).get(year, 0.0)
            dom = selfloop.get(c, {}).get(year, 0.0)
            series[year] = {"total": tot, "domestic": dom,
                            "foreign": tot - dom}[kind]
        out[c] = series
    return out


def delta_avg_annual(series: Mapping[int, float], periods: PeriodSpec) -> float:
    """mean(post) - mean(pre); missing years read as 0 with a warning."""
    def period_mean(years) -> float:
        vals = []
        for y in years:
            if y not in series:
                log.warning("missing year %d read as 0", y)
            vals.append(float(series.get(y, 0.0)))
        return sum(vals) / len(vals)

    return period_mean(periods.post_years()) - period_mean(periods.pre_years())


def rank_countries(values: Mapping[str, float]) -> dict[str, int]:
    """Dense ranks, 1 = largest value; ties broken lexicographically."""
    ordered = sorted(values, key=lambda c: (-values[c], c))
    return {c: i + 1 for i, c in enumerate(ordered)}


def nrc_from_ranks(r_pre: int, r_post: int, n: int) -> float:
    """Normalized rank change Δr/(N - r) with r = pre rank; at last place the
    denominator is N - r + 1 to avoid division by zero."""
    delta = r_pre - r_post
    denom = (n - r_pre) if r_pre < n else (n - r_pre + 1)
    return delta / denom


def normalized_rank_change(pre_values: Mapping[str, float],
                           post_values: Mapping[str, float],
                           n: int | None = None) -> dict[str, float]:
    if set(pre_values) != set(post_values):
        raise ValueError("pre and post value maps must cover the same countries")
    count = n if n is not None else len(pre_values)
    if count != len(pre_values):
        raise ValueError(f"N={count} does not match {len(pre_values)} countries")
    r_pre = rank_countries(pre_values)
    r_post = rank_countries(post_values)
    return {c: nrc_from_ranks(r_pre[c], r_post[c], count) for c in pre_values}


def net_migration_rate(inflow: float, outflow: float, stock: float) -> float | None:
    """(inflow - outflow) / scholar stock; None when the stock is zero."""
    if stock < 0 or inflow < 0 or outflow < 0:
        raise ValueError("migration magnitudes must be non-negative")
    if stock == 0:
        return None
    return (inflow - outflow) / stock


def migration_flows(net: DirectedCountryNetwork, country: str, year: int
                    ) -> tuple[float, float]:
    """(inflow, outflow) event counts for a country-year."""
    inflow = outflow = 0.0
    for (y, _), edges in net.slices.items():
        if y != year:
            continue
        for (s, t), w in edges.items():
            if t == country:
                inflow += w
            if s == country:
                outflow += w
    return inflow, outflow


def flag_hyperprolific(records: Sequence[PublicationRecord],
                       threshold: int = 72) -> frozenset:
    """Authors with strictly more than ``threshold`` records in one year."""
    counts: dict[tuple[str, int], int] = {}
    for rec in records:
        for author in rec.authors:
            key = (author.author_id, rec.year)
            counts[key] = counts.get(key, 0) + 1
    return frozenset(a for (a, _), c in counts.items() if c > threshold)


def _avg_ranks(values: Sequence[float]) -> np.ndarray:
    """Average ranks (1-based) with ties sharing their mean rank."""
    arr = np.asarray(values, dtype=float)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(len(arr), dtype=float)
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


@dataclass(frozen=True)
class CorrelationResult:
    coefficient: float
    p_value: float


def correlate(x: Sequence[float], y: Sequence[float],
              method: str = "pearson") -> CorrelationResult | None:
    """Pearson or Spearman correlation with a t(n-2) p-value.

    Returns None (undefined) when either vector has zero variance.
    """
    if method not in ("pearson", "spearman"):
        raise ValueError(f"unknown method {method!r}")
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise ValueError("x and y must be equal-length vectors")
    n = len(xa)
    if n < 3:
        raise ValueError("need at least 3 observations")
    if not (np.isfinite(xa).all() and np.isfinite(ya).all()):
        raise ValueError("inputs must be finite")
    if method == "spearman":
        xa = _avg_ranks(xa)
        ya = _avg_ranks(ya)
    xd = xa - xa.mean()
    yd = ya - ya.mean()
    sx = float(np.sqrt((xd ** 2).sum()))
    sy = float(np.sqrt((yd ** 2).sum()))
    if sx == 0.0 or sy == 0.0:
        return None
    r = float((xd * yd).sum() / (sx * sy))
    r = max(-1.0, min(1.0, r))
    if abs(r) >= 1.0:
        p = 0.0
    else:
        t = r * math.sqrt((n - 2) / (1.0 - r * r))
        p = float(2.0 * stats.t.sf(abs(t), df=n - 2))
    return CorrelationResult(coefficient=r, p_value=p)


@dataclass(frozen=True)
class SignedRankResult:
    statistic: float  # W+ = sum of ranks of positive deltas
    p_value: float
    exact: bool


def signed_rank_test(deltas: Sequence[float],
                     alternative: str = "greater") -> SignedRankResult | None:
    """One-way Wilcoxon signed-rank test on paired deltas.

    Zero deltas are dropped; ties get average ranks.  n <= 25 uses the exact
    permutation distribution of W+, larger n the normal approximation with
    tie correction and continuity correction.  Returns None when every
    delta is zero.
    """
    if alternative != "greater":
        raise ValueError("only the one-sided 'greater' alternative is supported")
    arr = np.asarray(list(deltas), dtype=float)
    nz = arr[arr != 0.0]
    if nz.size == 0:
        if arr.size == 0:
            raise ValueError("empty delta list")
        return None
    if nz.size < 5:
        raise ValueError("need at least 5 nonzero deltas")
    ranks = _avg_ranks(np.abs(nz))
    w_plus = float(ranks[nz > 0].sum())
    n = nz.size
    if n <= 25:
        # doubled ranks are integers; count sign assignments by DP
        r2 = np.rint(2.0 * ranks).astype(np.int64)
        total = int(r2.sum())
        counts = np.zeros(total + 1)
        counts[0] = 1.0
        for r in r2:
            counts[r:] = counts[r:] + counts[:counts.size - r]
        w2 = int(round(2.0 * w_plus))
        p = float(counts[w2:].sum() / (2.0 ** n))
        return SignedRankResult(statistic=w_plus, p_value=p, exact=True)
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(nz), return_counts=True)
    tie_term = float(((tie_counts ** 3) - tie_counts).sum()) / 2.0
    var = (n * (n + 1) * (2 * n + 1) - tie_term) / 24.0
    z = (w_plus - mean - 0.5) / math.sqrt(var)
    return SignedRankResult(statistic=w_plus,
                            p_value=float(stats.norm.sf(z)), exact=False)


# --- per-country summary table (CLI `metrics` output) -----------------------

METRICS_HEADER = [
    "country", "group", "total_pre_avg", "total_post_avg", "delta_total",
    "domestic_pre_avg", "domestic_post_avg", "foreign_pre_avg",
    "foreign_post_avg", "ratio_pre", "ratio_post", "rank_pre", "rank_post",
    "nrc", "nmr_pre_avg", "nmr_post_avg",
]


def metrics_table(net: DirectedCountryNetwork, periods: PeriodSpec,
                  groups: GroupSpec,
                  migration: DirectedCountryNetwork | None = None,
                  stocks: Mapping[tuple[str, int], float] | None = None) -> list[dict]:
    """One summary row per country in the attention network."""
    countries = sorted(net.nodes)
    total = attention_series(net, "total")
    domestic = attention_series(net, "domestic")

    def period_avg(series: Mapping[int, float], years) -> float:
        ys = list(years)
        return sum(series.get(y, 0.0) for y in ys) / len(ys)

    pre_tot = {c: period_avg(total.get(c, {}), periods.pre_years()) for c in countries}
    post_tot = {c: period_avg(total.get(c, {}), periods.post_years()) for c in countries}
    r_pre = rank_countries(pre_tot)
    r_post = rank_countries(post_tot)
    n = len(countries)
    rows = []
    for c in countries:
        dom_pre = period_avg(domestic.get(c, {}), periods.pre_years())
        dom_post = period_avg(domestic.get(c, {}), periods.post_years())
        for_pre = pre_tot[c] - dom_pre
        for_post = post_tot[c] - dom_post
        nmr_pre = nmr_post = None
        if migration is not None and stocks is not None:
            def nmr_avg(years) -> float | None:
                vals = []
                for y in years:
                    stock = stocks.get((c, y))
                    if not stock:
                        continue
                    inflow, outflow = migration_flows(migration, c, y)
                    rate = net_migration_rate(inflow, outflow, stock)
                    if rate is not None:
                        vals.append(rate)
                return sum(vals) / len(vals) if vals else None

            nmr_pre = nmr_avg(periods.pre_years())
            nmr_post = nmr_avg(periods.post_years())
        rows.append({
            "country": c,
            "group": groups.label_of(c) or "",
            "total_pre_avg": pre_tot[c],
            "total_post_avg": post_tot[c],
            "delta_total": post_tot[c] - pre_tot[c],
            "domestic_pre_avg": dom_pre,
            "domestic_post_avg": dom_post,
            "foreign_pre_avg": for_pre,
            "foreign_post_avg": for_post,
            "ratio_pre": (for_pre / dom_pre) if dom_pre > 0 else None,
            "ratio_post": (for_post / dom_post) if dom_post > 0 else None,
            "rank_pre": r_pre[c],
            "rank_post": r_post[c],
            "nrc": nrc_from_ranks(r_pre[c], r_post[c], n),
            "nmr_pre_avg": nmr_pre,
            "nmr_post_avg": nmr_post,
        })
    return rows


def write_metrics_csv(rows: Sequence[dict], path,
                      header_comment: str | None = None) -> None:
    def cell(v) -> str:
        if v is None:
            return ""
        if isinstance(v, float):
            return repr(v)
        return str(v)

    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(",".join(METRICS_HEADER) + "\n")
        for row in rows:
            fh.write(",".join(cell(row[k]) for k in METRICS_HEADER) + "\n")
