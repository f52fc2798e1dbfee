"""Record formats and ingestion for publications, annotations, migrations,
and country-year covariates.

All corpora are JSONL (one object per line) except covariates, which is a
CSV with a fixed header.  Loading validates each line independently:
invalid lines are reported with their line number and skipped, duplicate
ids abort the load, unknown country codes are dropped from the record
with a warning.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

try:
    import tomllib  # Python >= 3.11
except ImportError:  # pragma: no cover
    import tomli as tomllib

# ISO 3166-1 alpha-3 universe (plus XKX, the customary user-assigned code
# for Kosovo).  Codes outside this set are treated as unknown.
ISO3_CODES = frozenset("""
ABW AFG AGO AIA ALA ALB AND ARE ARG ARM ASM ATA ATF ATG AUS AUT AZE BDI BEL
BEN BES BFA BGD BGR BHR BHS BIH BLM BLR BLZ BMU BOL BRA BRB BRN BTN BVT BWA
CAF CAN CCK CHE CHL CHN CIV CMR COD COG COK COL COM CPV CRI CUB CUW CXR CYM
CYP CZE DEU DJI DMA DNK DOM DZA ECU EGY ERI ESH ESP EST ETH FIN FJI FLK FRA
FRO FSM GAB GBR GEO GGY GHA GIB GIN GLP GMB GNB GNQ GRC GRD GRL GTM GUF GUM
GUY HKG HMD HND HRV HTI HUN IDN IMN IND IOT IRL IRN IRQ ISL ISR ITA JAM JEY
JOR JPN KAZ KEN KGZ KHM KIR KNA KOR KWT LAO LBN LBR LBY LCA LIE LKA LSO LTU
LUX LVA MAC MAF MAR MCO MDA MDG MDV MEX MHL MKD MLI MLT MMR MNE MNG MNP MOZ
MRT MSR MTQ MUS MWI MYS MYT NAM NCL NER NFK NGA NIC NIU NLD NOR NPL NRU NZL
OMN PAK PAN PCN PER PHL PLW PNG POL PRI PRK PRT PRY PSE PYF QAT REU ROU RUS
RWA SAU SDN SEN SGP SGS SHN SJM SLB SLE SLV SMR SOM SPM SRB SSD STP SUR SVK
SVN SWE SWZ SXM SYC SYR TCA TCD TGO THA TJK TKL TKM TLS TON TTO TUN TUR TUV
TWN TZA UGA UKR UMI URY USA UZB VAT VCT VEN VGB VIR VNM VUT WLF WSM YEM ZAF
ZMB ZWE XKX
""".split())

DEFAULT_YEAR_WINDOW = (2002, 2019)

LIFE = "Life Sciences"
PHYSICAL = "Physical Sciences"
HEALTH = "Health Sciences"
SOCIAL = "Social Sciences"
DISCIPLINES = (LIFE, PHYSICAL, HEALTH, SOCIAL)


class CorpusError(Exception):
    """Unrecoverable corpus problem (duplicate ids, missing files, ...)."""


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    line: int | None
    message: str

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{self.severity}: {where}{self.message}"


@dataclass(frozen=True)
class AuthorEntry:
    author_id: str
    affiliation_countries: tuple[str, ...]  # deduplicated, may be empty


@dataclass(frozen=True)
class PublicationRecord:
    id: str
    year: int
    title: str
    abstract: str
    subject_areas: tuple[int, ...]
    authors: tuple[AuthorEntry, ...]
    funder_countries: tuple[str, ...]
    language: str = "en"


@dataclass(frozen=True)
class AnnotationRecord:
    publication_id: str
    coder_a: frozenset[str]
    coder_b: frozenset[str]


@dataclass(frozen=True)
class MigrationEvent:
    scholar_id: str
    year: int
    origin: str
    destination: str


@dataclass(frozen=True)
class CountryYearCovariates:
    country: str
    year: int
    gdp_per_capita: float
    population: int
    researcher_population: int
    scholar_stock: int


@dataclass
class LoadResult:
    records: list
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def warnings(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "warning"]

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]


def _dedup(seq: Iterable[str]) -> tuple[str, ...]:
    seen = []
    for x in seq:
        if x not in seen:
            seen.append(x)
    return tuple(seen)


def _check_iso3_list(codes, what: str, warn: list[str]) -> tuple[str, ...]:
    """Validate format, drop unknown codes with a warning message."""
    kept = []
    for code in codes:
        if not isinstance(code, str) or len(code) != 3 or not code.isupper() or not code.isalpha():
            raise ValueError(f"{what}: {code!r} is not a 3-uppercase-letter code")
        if code not in ISO3_CODES:
            warn.append(f"{what}: unknown country code {code!r} dropped")
            continue
        kept.append(code)
    return _dedup(kept)


def _parse_publication(obj: dict, year_window) -> tuple[PublicationRecord, list[str]]:
    warn: list[str] = []
    rid = obj["id"]
    if not isinstance(rid, str) or not rid:
        raise ValueError("id must be a non-empty string")
    year = obj["year"]
    if not isinstance(year, int):
        raise ValueError("year must be an integer")
    if year_window is not None and not (year_window[0] <= year <= year_window[1]):
        raise ValueError(f"year {year} outside window {year_window[0]}-{year_window[1]}")
    areas = obj["subject_areas"]
    if not areas:
        raise ValueError("subject_areas must be non-empty")
    areas = tuple(int(a) for a in areas)
    for a in areas:
        if not 1000 <= a <= 9999:
            raise ValueError(f"subject area {a} is not a 4-digit ASJC code")
    authors = []
    for a in obj.get("authors", []):
        affs = _check_iso3_list(a.get("affiliation_countries", []), "affiliation", warn)
        authors.append(AuthorEntry(author_id=str(a["author_id"]), affiliation_countries=affs))
    funders = _check_iso3_list(obj.get("funder_countries", []), "funder", warn)
    rec = PublicationRecord(
        id=rid,
        year=year,
        title=str(obj.get("title", "")),
        abstract=str(obj.get("abstract", "")),
        subject_areas=areas,
        authors=tuple(authors),
        funder_countries=funders,
        language=str(obj.get("language", "en")),
    )
    return rec, warn


def _parse_annotation(obj: dict, year_window) -> tuple[AnnotationRecord, list[str]]:
    warn: list[str] = []
    a = _check_iso3_list(obj.get("coder_a", []), "coder_a", warn)
    b = _check_iso3_list(obj.get("coder_b", []), "coder_b", warn)
    return AnnotationRecord(str(obj["publication_id"]), frozenset(a), frozenset(b)), warn


def _parse_migration(obj: dict, year_window) -> tuple[MigrationEvent, list[str]]:
    warn: list[str] = []
    origin = obj["origin"]
    dest = obj["destination"]
    (origin,) = _check_iso3_list([origin], "origin", warn) or (None,)
    (dest,) = _check_iso3_list([dest], "destination", warn) or (None,)
    if origin is None or dest is None:
        raise ValueError("origin/destination country unknown")
    if origin == dest:
        raise ValueError(f"origin equals destination ({origin})")
    year = obj["year"]
    if not isinstance(year, int):
        raise ValueError("year must be an integer")
    return MigrationEvent(str(obj["scholar_id"]), year, origin, dest), warn


_PARSERS = {
    "publications": (_parse_publication, "id"),
    "annotations": (_parse_annotation, "publication_id"),
    "migrations": (_parse_migration, None),
}


def load_corpus(path: str | Path, schema: str,
                year_window: tuple[int, int] | None = DEFAULT_YEAR_WINDOW) -> LoadResult:
    """Load a JSONL corpus of the given kind.

    ``schema`` is one of ``publications``, ``annotations``, ``migrations``.
    Malformed or invalid lines become per-line diagnostics and are skipped;
    a duplicate id raises :class:`CorpusError`.
    """
    if schema not in _PARSERS:
        raise CorpusError(f"unknown corpus schema {schema!r}")
    parse, id_field = _PARSERS[schema]
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"no such file: {path}")
    result = LoadResult(records=[])
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec, warns = parse(obj, year_window)
            except CorpusError:
                raise
            except Exception as exc:
                result.diagnostics.append(Diagnostic("error", lineno, str(exc)))
                continue
            if id_field is not None:
                rid = getattr(rec, id_field)
                if rid in seen_ids:
                    raise CorpusError(f"line {lineno}: duplicate id {rid!r}")
                seen_ids.add(rid)
            for w in warns:
                result.diagnostics.append(Diagnostic("warning", lineno, w))
            result.records.append(rec)
    return result


def record_to_obj(rec) -> dict:
    if isinstance(rec, PublicationRecord):
        return {
            "id": rec.id,
            "year": rec.year,
            "title": rec.title,
            "abstract": rec.abstract,
            "subject_areas": list(rec.subject_areas),
            "authors": [
                {"author_id": a.author_id,
                 "affiliation_countries": list(a.affiliation_countries)}
                for a in rec.authors
            ],
            "funder_countries": list(rec.funder_countries),
            "language": rec.language,
        }
    if isinstance(rec, AnnotationRecord):
        return {
            "publication_id": rec.publication_id,
            "coder_a": sorted(rec.coder_a),
            "coder_b": sorted(rec.coder_b),
        }
    if isinstance(rec, MigrationEvent):
        return {
            "scholar_id": rec.scholar_id,
            "year": rec.year,
            "origin": rec.origin,
            "destination": rec.destination,
        }
    raise TypeError(f"cannot serialize {type(rec).__name__}")


def dump_corpus(records: Iterable, path: str | Path) -> None:
    """Write records as JSONL; loading the output reproduces the records."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_obj(rec), sort_keys=True) + "\n")


COVARIATE_HEADER = ["country", "year", "gdp_per_capita", "population",
                    "researcher_population", "scholar_stock"]


def load_covariates(path: str | Path) -> LoadResult:
    """Load covariates.csv; (country, year) must be unique, magnitudes valid."""
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"no such file: {path}")
    result = LoadResult(records=[])
    seen: set[tuple[str, int]] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if first.startswith("#"):
            first = fh.readline()
        header = [h.strip() for h in first.strip().split(",")]
        if header != COVARIATE_HEADER:
            raise CorpusError(
                f"covariates header must be {','.join(COVARIATE_HEADER)}, got {','.join(header)}")
        for lineno, row in enumerate(csv.reader(fh), start=2):
            if not row:
                continue
            try:
                country = row[0].strip()
                if country not in ISO3_CODES:
                    raise ValueError(f"unknown country code {country!r}")
                year = int(row[1])
                gdp = float(row[2])
                pop = int(row[3])
                rpop = int(row[4])
                stock = int(row[5])
                if gdp <= 0 or pop <= 0 or rpop < 0 or stock < 0:
                    raise ValueError("magnitudes must be positive / non-negative")
            except Exception as exc:
                result.diagnostics.append(Diagnostic("error", lineno, str(exc)))
                continue
            key = (country, year)
            if key in seen:
                raise CorpusError(f"line {lineno}: duplicate (country, year) {key}")
            seen.add(key)
            result.records.append(CountryYearCovariates(country, year, gdp, pop, rpop, stock))
    return result


def dump_covariates(rows: Iterable[CountryYearCovariates], path: str | Path,
                    header_comment: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(",".join(COVARIATE_HEADER) + "\n")
        for r in sorted(rows, key=lambda r: (r.country, r.year)):
            fh.write(f"{r.country},{r.year},{r.gdp_per_capita!r},{r.population},"
                     f"{r.researcher_population},{r.scholar_stock}\n")


@dataclass(frozen=True)
class AsjcArea:
    code: int  # area code, e.g. 1700
    name: str
    discipline: str  # one of DISCIPLINES, or "" for Multidisciplinary
    excluded: bool


class AsjcTaxonomy:
    """ASJC subject areas grouped into the four major disciplines.

    A 4-digit code maps to its area via its leading two digits
    (2602 -> 2600).  Areas flagged ``excluded`` never contribute
    discipline weight.
    """

    def __init__(self, areas: Iterable[AsjcArea]):
        self.areas: dict[int, AsjcArea] = {a.code: a for a in areas}

    @staticmethod
    def area_of(code: int) -> int:
        return (code // 100) * 100

    def lookup(self, code: int) -> AsjcArea | None:
        return self.areas.get(self.area_of(code))

    @classmethod
    def from_toml(cls, path: str | Path) -> "AsjcTaxonomy":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        areas = []
        for key, spec in data["areas"].items():
            areas.append(AsjcArea(
                code=int(key),
                name=spec["name"],
                discipline=spec.get("discipline", ""),
                excluded=bool(spec.get("excluded", False)),
            ))
        return cls(areas)

    @classmethod
    def default(cls) -> "AsjcTaxonomy":
        from importlib.resources import files

        return cls.from_toml(files("geoscholar.data").joinpath("asjc.toml"))


def discipline_weights(record: PublicationRecord, taxonomy: AsjcTaxonomy,
                       diagnostics: list[Diagnostic] | None = None) -> dict[str, float]:
    """Half-count a record across its distinct non-excluded major disciplines.

    Returns 1/k per discipline for k distinct disciplines (sum exactly 1),
    or an empty map when every subject area is excluded.  Unknown codes are
    ignored with a warning diagnostic.
    """
    found: list[str] = []
    for code in record.subject_areas:
        area = taxonomy.lookup(code)
        if area is None:
            if diagnostics is not None:
                diagnostics.append(Diagnostic(
                    "warning", None, f"record {record.id}: unknown ASJC code {code}"))
            continue
        if area.excluded:
            continue
        if area.discipline and area.discipline not in found:
            found.append(area.discipline)
    if not found:
        return {}
    w = 1.0 / len(found)
    return {d: w for d in sorted(found)}
