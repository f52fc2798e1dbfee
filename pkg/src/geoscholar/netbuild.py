"""Directed country-to-country networks from publications and migrations.

Attention and funding networks follow the bipartite construction with
fractional counting: every publication contributes total edge weight
exactly 1 (or 0 when nothing resolves), split over (source country,
mentioned country) pairs.  Attention sources are author affiliations
weighted 1/n_authors then 1/n_affiliations, renormalized over resolvable
sources; funding sources are funder countries weighted 1/n_funders.
Migration networks are plain integer event counts.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .corpus import AsjcTaxonomy, MigrationEvent, PublicationRecord, discipline_weights

SliceKey = tuple  # (year, discipline or None)
EdgeKey = tuple  # (source iso3, target iso3)


@dataclass
class DirectedCountryNetwork:
    kind: str  # "attention" | "funding" | "migration"
    slices: dict = field(default_factory=dict)  # SliceKey -> {EdgeKey: weight}
    nodes: set = field(default_factory=set)
    stats: Counter = field(default_factory=Counter)

    def add_edge(self, key: SliceKey, source: str, target: str, weight: float) -> None:
        edges = self.slices.setdefault(key, {})
        edges[(source, target)] = edges.get((source, target), 0.0) + weight
        self.nodes.add(source)
        self.nodes.add(target)

    def years(self) -> list[int]:
        return sorted({k[0] for k in self.slices})

    def total_weight(self, year: int | None = None) -> float:
        tot = 0.0
        for (y, _), edges in self.slices.items():
            if year is None or y == year:
                tot += sum(edges.values())
        return tot

    def incoming(self, target: str, year: int) -> float:
        tot = 0.0
        for (y, _), edges in self.slices.items():
            if y == year:
                tot += sum(w for (s, t), w in edges.items() if t == target)
        return tot

    def self_loop(self, country: str, year: int) -> float:
        tot = 0.0
        for (y, _), edges in self.slices.items():
            if y == year:
                tot += edges.get((country, country), 0.0)
        return tot


def merge_networks(nets: Sequence[DirectedCountryNetwork]) -> DirectedCountryNetwork:
    """Sum edge weights slice-wise; building from shards then merging equals
    building from the concatenated corpus."""
    if not nets:
        raise ValueError("nothing to merge")
    kinds = {n.kind for n in nets}
    if len(kinds) != 1:
        raise ValueError(f"cannot merge networks of different kinds {sorted(kinds)}")
    out = DirectedCountryNetwork(kind=nets[0].kind)
    for net in nets:
        for key, edges in net.slices.items():
            for (s, t), w in edges.items():
                out.add_edge(key, s, t, w)
        out.stats.update(net.stats)
    return out


def paper_edge_weights(record: PublicationRecord, mentions: Iterable[str],
                       excluded: frozenset = frozenset()) -> dict:
    """Fractional edge weights for one publication.

    Each author carries 1/n_authors, split evenly over their affiliation
    countries; weights of unresolvable authors are renormalized over the
    resolvable sources so the per-paper total stays 1; each source weight
    then splits evenly across the mentioned countries.
    """
    mentions = set(mentions)
    if not mentions:
        raise ValueError("mentions must be non-empty")
    targets = sorted(mentions - excluded)
    if not targets:
        return {}
    n_authors = len(record.authors)
    if n_authors == 0:
        return {}
    weights: dict[str, float] = {}
    for author in record.authors:
        affs = [c for c in author.affiliation_countries if c not in excluded]
        if not affs:
            continue
        share = 1.0 / (n_authors * len(affs))
        for c in affs:
            weights[c] = weights.get(c, 0.0) + share
    total = sum(weights.values())
    if total <= 0:
        return {}
    edges: dict[EdgeKey, float] = {}
    for src in sorted(weights):
        w = weights[src] / total / len(targets)
        for tgt in targets:
            edges[(src, tgt)] = w
    return edges


def _mention_set(value) -> set:
    return set(getattr(value, "mentioned", value))


def build_attention(records: Sequence[PublicationRecord],
                    mention_results: Mapping[str, object],
                    taxonomy: AsjcTaxonomy,
                    stratify: bool = False,
                    excluded: frozenset = frozenset()) -> DirectedCountryNetwork:
    """Yearly (optionally discipline-stratified) scholarly attention network.

    Records with no mention, no resolvable source, or no non-excluded
    discipline contribute nothing and are counted in ``stats``; the latter
    rule applies in both modes so stratified slices always sum back to the
    unstratified network.
    """
    net = DirectedCountryNetwork(kind="attention")
    for rec in records:
        res = mention_results.get(rec.id)
        mentions = _mention_set(res) if res is not None else set()
        if not mentions:
            net.stats["no_mention"] += 1
            continue
        dw = discipline_weights(rec, taxonomy)
        if not dw:
            net.stats["no_discipline"] += 1
            continue
        edges = paper_edge_weights(rec, mentions, excluded)
        if not edges:
            net.stats["no_source"] += 1
            continue
        net.stats["contributing"] += 1
        if stratify:
            for disc, frac in dw.items():
                for (s, t), w in edges.items():
                    net.add_edge((rec.year, disc), s, t, w * frac)
        else:
            for (s, t), w in edges.items():
                net.add_edge((rec.year, None), s, t, w)
    return net


def build_funding(records: Sequence[PublicationRecord],
                  mention_results: Mapping[str, object],
                  excluded: frozenset = frozenset()) -> DirectedCountryNetwork:
    """Funding network: funder countries are the source layer, each taking
    1/n_funders split across the mentioned countries."""
    net = DirectedCountryNetwork(kind="funding")
    for rec in records:
        res = mention_results.get(rec.id)
        mentions = _mention_set(res) if res is not None else set()
        if not mentions:
            net.stats["no_mention"] += 1
            continue
        targets = sorted(mentions - excluded)
        funders = sorted(set(rec.funder_countries) - excluded)
        if not targets or not funders:
            net.stats["no_funder" if targets else "no_mention"] += 1
            continue
        net.stats["contributing"] += 1
        w = 1.0 / (len(funders) * len(targets))
        for src in funders:
            for tgt in targets:
                net.add_edge((rec.year, None), src, tgt, w)
    return net


def build_migration(events: Sequence[MigrationEvent],
                    excluded: frozenset = frozenset()) -> DirectedCountryNetwork:
    """Integer counts of scholars moving origin -> destination per year."""
    net = DirectedCountryNetwork(kind="migration")
    for ev in events:
        if ev.origin in excluded or ev.destination in excluded:
            net.stats["excluded_event"] += 1
            continue
        net.stats["contributing"] += 1
        net.add_edge((ev.year, None), ev.origin, ev.destination, 1)
    return net


EDGES_HEADER = ["year", "discipline", "source", "target", "weight"]


def write_edges_csv(net: DirectedCountryNetwork, path,
                    header_comment: str | None = None) -> None:
    def slice_sort(key: SliceKey):
        year, disc = key
        return (year, disc or "")

    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(",".join(EDGES_HEADER) + "\n")
        for key in sorted(net.slices, key=slice_sort):
            year, disc = key
            edges = net.slices[key]
            for (s, t) in sorted(edges):
                w = edges[(s, t)]
                w_txt = str(int(w)) if net.kind == "migration" else repr(float(w))
                fh.write(f"{year},{disc or ''},{s},{t},{w_txt}\n")


def read_edges_csv(path, kind: str = "attention") -> DirectedCountryNetwork:
    net = DirectedCountryNetwork(kind=kind)
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if first.startswith("#"):
            first = fh.readline()
        if first.strip().split(",") != EDGES_HEADER:
            raise ValueError("bad edges header")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            year, disc, s, t, w = line.split(",")
            net.add_edge((int(year), disc or None), s, t,
                         int(w) if kind == "migration" else float(w))
    return net
