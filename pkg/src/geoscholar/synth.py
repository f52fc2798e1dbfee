"""Seeded synthetic corpora, migration streams, covariates, and panels with
known ground truth, plus the naive oracles the test suites check against.

All randomness comes from counter-based Philox generators keyed with
(seed, stream id), so corpus, annotation, migration, covariate and panel
generation never share state and every output is byte-stable for a fixed
seed.

``oracle_extract`` deliberately re-implements the extraction rules with
plain string scanning (no automaton, no shared matcher code); it is the
independent reference the fast path must agree with exactly.
``oracle_ols`` solves regressions through explicit normal equations and
anchors the within-transform equivalence checks.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ImportError:  # pragma: no cover
    import tomli as tomllib

from .corpus import AuthorEntry, CountryYearCovariates, MigrationEvent, PublicationRecord
from .econo import PanelObservation
from .gazetteer import GazetteerSource, default_source

STREAM_CORPUS = 1
STREAM_ANNOTATIONS = 2
STREAM_MIGRATION = 3
STREAM_COVARIATES = 4
STREAM_PANEL = 5


def make_rng(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator for (seed, stream); streams never collide."""
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class PanelPlan:
    n_countries: int = 60
    treated: Mapping[str, int] = field(default_factory=lambda: {"T": 10})
    years: tuple[int, int] = (2002, 2019)
    event_year: int = 2011
    betas: Mapping[str, float] = field(default_factory=lambda: {"T": 0.25})
    pretrend_slopes: Mapping[str, float] = field(default_factory=dict)
    covariate_effects: tuple[float, ...] = (0.5, -0.3)
    noise_sd: float = 0.1
    country_sd: float = 1.0
    year_sd: float = 0.3


@dataclass
class SynthPlan:
    seed: int
    n_publications: int = 1000
    year_window: tuple[int, int] = (2002, 2019)
    countries: tuple[str, ...] | None = None  # plantable pool; default from gazetteer
    plant_table: Mapping[str, frozenset] | None = None
    distractor_rate: float = 0.2
    max_mentions: int = 3
    p_no_mention: float = 0.15
    p_suppression_area: float = 0.1
    p_excluded_discipline: float = 0.05
    n_annotated: int = 0
    n_disagreements: int = 0
    n_migration_events: int = 0
    panel: PanelPlan | None = None


def plan_from_toml(path) -> SynthPlan:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    corpus = data.get("corpus", {})
    plan = SynthPlan(
        seed=int(data["seed"]),
        n_publications=int(corpus.get("n_publications", 1000)),
        year_window=tuple(corpus.get("year_window", (2002, 2019))),
        countries=tuple(corpus["countries"]) if "countries" in corpus else None,
        distractor_rate=float(corpus.get("distractor_rate", 0.2)),
        max_mentions=int(corpus.get("max_mentions", 3)),
    )
    ann = data.get("annotations", {})
    plan.n_annotated = int(ann.get("n_records", 0))
    plan.n_disagreements = int(ann.get("n_disagreements", 0))
    plan.n_migration_events = int(data.get("migration", {}).get("n_events", 0))
    if "panel" in data:
        p = data["panel"]
        plan.panel = PanelPlan(
            n_countries=int(p.get("n_countries", 60)),
            treated={k: int(v) for k, v in p.get("treated", {"T": 10}).items()},
            years=tuple(p.get("years", (2002, 2019))),
            event_year=int(p.get("event_year", 2011)),
            betas={k: float(v) for k, v in p.get("betas", {"T": 0.25}).items()},
            pretrend_slopes={k: float(v)
                             for k, v in p.get("pretrend_slopes", {}).items()},
            covariate_effects=tuple(p.get("covariate_effects", (0.5, -0.3))),
            noise_sd=float(p.get("noise_sd", 0.1)),
        )
    return plan


# --- corpus generation -----------------------------------------------------

_TOPICS = (
    "groundwater salinity", "crop yields", "vaccination coverage",
    "urban growth", "coastal erosion", "labor markets", "rainfall variability",
    "disease prevalence", "energy consumption", "water quality",
    "soil degradation", "household welfare", "air pollution", "food security",
)
_INTROS = (
    "This study presents a longitudinal analysis of {topic}.",
    "We report a systematic assessment of {topic}.",
    "A regional survey of {topic} is described.",
    "New evidence on {topic} is synthesized from archival sources.",
)
_MENTION_SENTENCES = (
    "Field data were collected in {c}.",
    "Samples originate from monitoring stations across {c}.",
    "The {topic} of {c} is examined in detail.",
    "Policy implications for {c} are discussed.",
    "Survey teams operated throughout {c} during the study period.",
)
_PAIR_SENTENCES = (
    "We compare outcomes between {a} and {b}.",
    "Parallel cohorts were recruited in {a} and {b}.",
)
_CLOSERS = (
    "Results highlight substantial spatial heterogeneity.",
    "The findings inform regional adaptation planning.",
    "Implications for monitoring networks are outlined.",
)
# Sentences whose alias occurrences must never survive the rules.
_MASK_TRAPS = (
    "Prices are reported in US dollars throughout.",
    "Costs were converted at the prevailing US dollar exchange rate.",
    "Adsorption of Congo Red dye onto the composite was measured.",
    "A guinea pig model was used for toxicity screening.",
    "Sites resemble the arid basins of New Mexico.",
    "The benchmark follows Michael Jordan and colleagues.",
)
_DEMONYM_TRAP = "Jordanian and Egyptian cohorts were recruited through local clinics."
_SUPPRESSED_TRAP = "The Jordan normal form of the transfer operator is computed."
_EXCLUDED_TRAP = "Additional archival records were digitized in {c}."
_COPYRIGHT_TAILS = (
    "© {y} {pub}. All rights reserved. Offices in {c}.",
    "Copyright (C) {y} {pub}, {c}.",
    "@ {y} {pub}, registered in {c}.",
)
_PUBLISHERS = ("Elsevier B.V.", "Springer Nature", "Wiley and Sons", "IEEE Press")

_NORMAL_AREAS = (1100, 1300, 1600, 1900, 2000, 2300, 2700, 2900, 3000, 3200, 3300)
_SUPPRESS_AREAS = (1700, 2200, 2600, 3100)
_EXCLUDED_ONLY_AREAS = (1700, 2200, 2600, 3100, 1000)


def _plantable_pool(source: GazetteerSource) -> list[str]:
    return sorted(e.iso3 for e in source.entries if e.iso3 not in source.excluded_iso3)


def _suppressing(source: GazetteerSource, areas: Sequence[int]) -> set[str]:
    out = set()
    area_set = {(a // 100) * 100 for a in areas}
    for iso3, sup in source.conditional_suppressions.items():
        if area_set & {(a // 100) * 100 for a in sup}:
            out.add(iso3)
    return out


def generate_corpus(plan: SynthPlan, source: GazetteerSource | None = None
                    ) -> tuple[list[PublicationRecord], dict]:
    """Build records whose text embeds exactly the planted aliases plus traps.

    Returns (records, gold) where gold maps publication id to the planted
    country set; the extraction pipeline must recover gold exactly.
    """
    if source is None:
        source = default_source()
    rng = make_rng(plan.seed, STREAM_CORPUS)
    entries = {e.iso3: e for e in source.entries}
    pool = list(plan.countries) if plan.countries else _plantable_pool(source)
    excluded_pool = sorted(iso3 for iso3 in source.excluded_iso3 if iso3 in entries)
    n = plan.n_publications
    trap_count = int(np.ceil(plan.distractor_rate * n))
    trap_ids = set(rng.choice(n, size=min(trap_count, n), replace=False).tolist()) if n else set()

    def pick_alias(iso3: str) -> str:
        e = entries[iso3]
        forms = list(e.aliases) + list(e.case_sensitive_aliases)
        return forms[int(rng.integers(len(forms)))]

    records: list[PublicationRecord] = []
    gold: dict[str, frozenset] = {}
    y0, y1 = plan.year_window
    for i in range(n):
        pid = f"P{i:06d}"
        year = int(rng.integers(y0, y1 + 1))
        u = rng.random()
        if u < plan.p_excluded_discipline:
            areas = [int(rng.choice(_EXCLUDED_ONLY_AREAS))]
        elif u < plan.p_excluded_discipline + plan.p_suppression_area:
            areas = [int(rng.choice(_SUPPRESS_AREAS)), int(rng.choice(_NORMAL_AREAS))]
        else:
            areas = sorted({int(a) for a in
                            rng.choice(_NORMAL_AREAS, size=int(rng.integers(1, 3)))})
        suppressed = _suppressing(source, areas)
        if plan.plant_table is not None:
            planted = sorted(plan.plant_table.get(pid, frozenset()))
        else:
            local_pool = [c for c in pool if c not in suppressed]
            if rng.random() < plan.p_no_mention:
                planted = []
            else:
                k = int(rng.integers(1, plan.max_mentions + 1))
                planted = sorted(rng.choice(local_pool, size=min(k, len(local_pool)),
                                            replace=False).tolist())
        topic = _TOPICS[int(rng.integers(len(_TOPICS)))]
        sentences = [_INTROS[int(rng.integers(len(_INTROS)))].format(topic=topic)]
        title = f"Trends in {topic}"
        mention_aliases = [pick_alias(c) for c in planted]
        if mention_aliases and rng.random() < 0.5:
            title = f"Trends in {topic} in {mention_aliases[0]}"
            mention_aliases = mention_aliases[1:]
        while mention_aliases:
            if len(mention_aliases) >= 2 and rng.random() < 0.4:
                tpl = _PAIR_SENTENCES[int(rng.integers(len(_PAIR_SENTENCES)))]
                sentences.append(tpl.format(a=mention_aliases[0], b=mention_aliases[1]))
                mention_aliases = mention_aliases[2:]
            else:
                tpl = _MENTION_SENTENCES[int(rng.integers(len(_MENTION_SENTENCES)))]
                sentences.append(tpl.format(c=mention_aliases[0], topic=topic))
                mention_aliases = mention_aliases[1:]
        tail = ""
        if i in trap_ids:
            n_traps = int(rng.integers(1, 3))
            for _ in range(n_traps):
                r = rng.random()
                if r < 0.45:
                    sentences.append(_MASK_TRAPS[int(rng.integers(len(_MASK_TRAPS)))])
                elif r < 0.6:
                    sentences.append(_DEMONYM_TRAP)
                elif r < 0.75 and excluded_pool:
                    c = excluded_pool[int(rng.integers(len(excluded_pool)))]
                    sentences.append(_EXCLUDED_TRAP.format(c=pick_alias(c)))
                elif r < 0.85 and suppressed:
                    sentences.append(_SUPPRESSED_TRAP)
                else:
                    tpl = _COPYRIGHT_TAILS[int(rng.integers(len(_COPYRIGHT_TAILS)))]
                    tail = " " + tpl.format(
                        y=int(rng.integers(2002, 2025)),
                        pub=_PUBLISHERS[int(rng.integers(len(_PUBLISHERS)))],
                        c=pick_alias(pool[int(rng.integers(len(pool)))]))
        sentences.append(_CLOSERS[int(rng.integers(len(_CLOSERS)))])
        abstract = " ".join(sentences) + tail
        n_authors = int(rng.integers(1, 5))
        authors = []
        for a in range(n_authors):
            if rng.random() < 0.12:
                affs: tuple[str, ...] = ()
            else:
                k = int(rng.integers(1, 3))
                affs = tuple(sorted(rng.choice(pool, size=k, replace=False).tolist()))
            authors.append(AuthorEntry(f"A{i:06d}x{a}", affs))
        n_funders = int(rng.integers(0, 3))
        funders = tuple(sorted(rng.choice(pool, size=n_funders, replace=False).tolist()))
        records.append(PublicationRecord(
            id=pid, year=year, title=title, abstract=abstract,
            subject_areas=tuple(areas), authors=tuple(authors),
            funder_countries=funders, language="en"))
        gold[pid] = frozenset(planted)
    return records, gold


def generate_annotations(plan: SynthPlan, gold: Mapping[str, frozenset],
                         source: GazetteerSource | None = None) -> list:
    """Dual-coder annotations: coder_a = gold; coder_b disagrees on exactly
    ``plan.n_disagreements`` of the first ``plan.n_annotated`` records."""
    from .corpus import AnnotationRecord

    if source is None:
        source = default_source()
    rng = make_rng(plan.seed, STREAM_ANNOTATIONS)
    pool = _plantable_pool(source)
    ids = sorted(gold)[:plan.n_annotated]
    if plan.n_disagreements > len(ids):
        raise ValueError("more disagreements requested than annotated records")
    disagree = set(rng.choice(len(ids), size=plan.n_disagreements, replace=False).tolist())
    out = []
    for j, pid in enumerate(ids):
        a = gold[pid]
        b = set(a)
        if j in disagree:
            extras = [c for c in pool if c not in b]
            b.add(extras[int(rng.integers(len(extras)))])
        out.append(AnnotationRecord(pid, frozenset(a), frozenset(b)))
    return out


def generate_migrations(plan: SynthPlan, source: GazetteerSource | None = None
                        ) -> list[MigrationEvent]:
    if source is None:
        source = default_source()
    rng = make_rng(plan.seed, STREAM_MIGRATION)
    pool = _plantable_pool(source)
    y0, y1 = plan.year_window
    events = []
    for i in range(plan.n_migration_events):
        o, d = rng.choice(len(pool), size=2, replace=False)
        events.append(MigrationEvent(
            scholar_id=f"S{i:06d}",
            year=int(rng.integers(y0, y1 + 1)),
            origin=pool[int(o)],
            destination=pool[int(d)]))
    return events


def generate_covariates(plan: SynthPlan, source: GazetteerSource | None = None
                        ) -> list[CountryYearCovariates]:
    """Country-year covariates for every plantable country over the window."""
    if source is None:
        source = default_source()
    rng = make_rng(plan.seed, STREAM_COVARIATES)
    pool = list(plan.countries) if plan.countries else _plantable_pool(source)
    y0, y1 = plan.year_window
    rows = []
    for c in sorted(pool):
        gdp0 = float(np.exp(rng.normal(9.0, 1.0)))
        pop0 = float(np.exp(rng.normal(16.5, 1.2)))
        rpop0 = float(np.exp(rng.normal(9.5, 1.0)))
        stock0 = float(np.exp(rng.normal(8.0, 1.0)))
        for year in range(y0, y1 + 1):
            growth = 1.0 + 0.02 * (year - y0)
            rows.append(CountryYearCovariates(
                country=c, year=year,
                gdp_per_capita=round(gdp0 * growth, 2),
                population=int(pop0 * growth) + 1,
                researcher_population=int(rpop0 * growth) + 1,
                scholar_stock=int(stock0 * growth) + 1))
    return rows


def _country_code(i: int) -> str:
    letters = string.ascii_uppercase
    return letters[i // 676] + letters[(i // 26) % 26] + letters[i % 26]


def generate_panel(plan: SynthPlan) -> tuple[list[PanelObservation], dict]:
    """Panel with outcome = country + year effects + planted treatment effects
    + covariate effects + Gaussian noise; returns (rows, truth)."""
    p = plan.panel or PanelPlan()
    rng = make_rng(plan.seed, STREAM_PANEL)
    n_treated = sum(p.treated.values())
    if n_treated >= p.n_countries:
        raise ValueError("treated countries must leave room for controls")
    labels: list[str] = []
    for g, cnt in p.treated.items():
        labels.extend([g] * cnt)
    labels.extend(["control"] * (p.n_countries - n_treated))
    countries = [_country_code(i) for i in range(p.n_countries)]
    years = list(range(p.years[0], p.years[1] + 1))
    k = len(p.covariate_effects)
    theta = np.asarray(p.covariate_effects, dtype=float)
    gamma = rng.normal(0.0, p.country_sd, size=p.n_countries)
    lam = rng.normal(0.0, p.year_sd, size=len(years))
    rows = []
    for ci, c in enumerate(countries):
        grp = labels[ci]
        for ti, t in enumerate(years):
            x = rng.normal(0.0, 1.0, size=k)
            post = t >= p.event_year
            y = gamma[ci] + lam[ti] + float(x @ theta)
            if grp != "control":
                if post:
                    y += p.betas.get(grp, 0.0)
                y += p.pretrend_slopes.get(grp, 0.0) * (t - p.event_year)
            y += rng.normal(0.0, p.noise_sd) if p.noise_sd > 0 else 0.0
            rows.append(PanelObservation(
                country=c, year=t, outcome=float(y),
                covariates=tuple(float(v) for v in x),
                group=grp, post=post))
    truth = {
        "betas": dict(p.betas),
        "theta": tuple(float(v) for v in theta),
        "noise_sd": p.noise_sd,
        "event_year": p.event_year,
        "covariate_names": tuple(f"x{j + 1}" for j in range(k)),
    }
    return rows, truth


# --- independent oracles ---------------------------------------------------

_ORACLE_LOWER = str.maketrans(string.ascii_uppercase, string.ascii_lowercase)
_ORACLE_PUBLISHERS = (
    "elsevier", "springer", "wiley", "ieee", "sage", "taylor", "francis",
    "kluwer", "emerald", "nature", "oxford", "cambridge", "rights reserved",
)


def _o_lower(s: str) -> str:
    return s.translate(_ORACLE_LOWER)


def _o_is_word(ch: str) -> bool:
    return ch.isascii() and ch.isalnum()


def _o_strip(text: str) -> str:
    low = _o_lower(text)
    cuts = [i for i in (low.find("©"), low.find("copyright (c)")) if i != -1]
    cut = min(cuts) if cuts else None
    at = low.find("@")
    while at != -1 and (cut is None or at < cut):
        win = low[at + 1:at + 41]
        ok = any(tok in win for tok in _ORACLE_PUBLISHERS)
        if not ok:
            for i in range(len(win) - 3):
                q = win[i:i + 4]
                if q.isdigit() and q[:2] in ("19", "20") \
                        and (i == 0 or not _o_is_word(win[i - 1])) \
                        and (i + 4 >= len(win) or not _o_is_word(win[i + 4])):
                    ok = True
                    break
        if ok:
            cut = at
            break
        at = low.find("@", at + 1)
    return text if cut is None else text[:cut]


def _o_occurrences(hay: str, needle: str) -> list[tuple[int, int]]:
    """Boundary-valid occurrences of needle in hay (both pre-lowered or raw)."""
    out = []
    start = 0
    while True:
        i = hay.find(needle, start)
        if i == -1:
            return out
        j = i + len(needle)
        if (i == 0 or not _o_is_word(hay[i - 1])) and (j == len(hay) or not _o_is_word(hay[j])):
            out.append((i, j))
        start = i + 1


def oracle_extract(records: Iterable[PublicationRecord],
                   source: GazetteerSource | None = None) -> dict:
    """Naive scan-every-alias extraction; returns {publication_id: frozenset}.

    Same rule order as the fast path: strip -> mask -> boundary match ->
    longest-wins -> drop excluded -> drop suppressed.  O(n_records *
    n_aliases); only meant for corpora up to ~10k records.
    """
    if source is None:
        source = default_source()
    ci_aliases = []  # (lowered alias, iso3)
    cs_aliases = []  # (verbatim alias, iso3)
    for e in source.entries:
        for a in e.aliases:
            ci_aliases.append((_o_lower(a), e.iso3))
        for a in e.case_sensitive_aliases:
            cs_aliases.append((a, e.iso3))
    phrases = [_o_lower(p.phrase) for p in source.exclusion_phrases]
    excluded = set(source.excluded_iso3)
    suppress = {iso3: {(a // 100) * 100 for a in areas}
                for iso3, areas in source.conditional_suppressions.items()}

    gold: dict[str, frozenset] = {}
    for rec in records:
        areas = {(a // 100) * 100 for a in rec.subject_areas}
        found: set[str] = set()
        for text in (rec.title, _o_strip(rec.abstract)):
            low = _o_lower(text)
            masks: list[tuple[int, int]] = []
            for ph in phrases:
                masks.extend(_o_occurrences(low, ph))
            hits: list[tuple[int, int, str]] = []
            for alias, iso3 in ci_aliases:
                hits.extend((i, j, iso3) for i, j in _o_occurrences(low, alias))
            for alias, iso3 in cs_aliases:
                hits.extend((i, j, iso3) for i, j in _o_occurrences(text, alias))
            hits = sorted(set(hits))
            unmasked = [h for h in hits
                        if not any(h[0] < m[1] and m[0] < h[1] for m in masks)]
            # longest-wins: a hit survives unless a strictly longer hit that
            # itself survived overlaps it (process longest first)
            kept: list[tuple[int, int, str]] = []
            for i, j, iso3 in sorted(unmasked, key=lambda t: (t[0] - t[1], t[0])):
                if any((ki < j and i < kj) and (kj - ki) > (j - i)
                       for ki, kj, _ in kept):
                    continue
                kept.append((i, j, iso3))
            for i, j, iso3 in kept:
                if iso3 in excluded:
                    continue
                if areas & suppress.get(iso3, set()):
                    continue
                found.add(iso3)
        gold[rec.id] = frozenset(found)
    return gold


def oracle_ols(design: np.ndarray, outcome: np.ndarray) -> np.ndarray:
    """Normal-equations least squares; raises on singular designs."""
    x = np.asarray(design, dtype=float)
    y = np.asarray(outcome, dtype=float)
    xtx = x.T @ x
    if x.shape[1] and np.linalg.matrix_rank(xtx) < x.shape[1]:
        raise np.linalg.LinAlgError("design matrix is singular")
    return np.linalg.solve(xtx, x.T @ y)
