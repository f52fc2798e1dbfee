"""Panel assembly and the causal-inference stack.

Two-way fixed-effects difference-in-differences with country fixed effects
absorbed by the within (demeaning) transformation, explicit year dummies,
CR1 country-clustered standard errors, p-values from t(G-1), within-R² as
the squared correlation of demeaned fitted vs demeaned actual outcomes,
a linear-trend parallel-trends pre-test, VIF diagnostics, and coarsened
exact matching on z-scored pre-period covariate summaries.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .corpus import CountryYearCovariates, Diagnostic


class EstimationError(Exception):
    """Design problems: rank deficiency, too few clusters, bad panel."""


@dataclass(frozen=True)
class PanelObservation:
    country: str
    year: int
    outcome: float
    covariates: tuple[float, ...]
    group: str  # treatment label, or "control"
    post: bool


CONTROL = "control"

DEFAULT_COVARIATE_NAMES = ("log_gdp_per_capita", "log_population",
                           "log_researcher_population")


def build_panel(series: Mapping[str, Mapping[int, float]],
                covariates: Sequence[CountryYearCovariates],
                groups: Mapping[str, frozenset],
                periods,
                zero_policy: str = "drop",
                epsilon: float = 1e-3,
                covariate_names: Sequence[str] = DEFAULT_COVARIATE_NAMES,
                ) -> tuple[list[PanelObservation], list[Diagnostic]]:
    """Assemble country-year rows with log outcome and log covariates.

    ``series`` maps country -> year -> raw outcome level (e.g. attention);
    countries present in the covariates table define the panel universe.
    Zero outcomes are dropped or offset per ``zero_policy``; covariate gaps
    drop the row with a diagnostic.
    """
    if zero_policy not in ("drop", "offset"):
        raise ValueError(f"unknown zero_policy {zero_policy!r}")
    if zero_policy == "offset" and not epsilon > 0:
        raise ValueError("offset policy requires epsilon > 0")
    getters = {
        "log_gdp_per_capita": lambda c: c.gdp_per_capita,
        "log_population": lambda c: c.population,
        "log_researcher_population": lambda c: c.researcher_population,
    }
    for name in covariate_names:
        if name not in getters:
            raise ValueError(f"unknown covariate {name!r}")
    label_of = {}
    for label, members in groups.items():
        for iso3 in members:
            label_of[iso3] = label
    cov_map = {(c.country, c.year): c for c in covariates}
    years = sorted(set(periods.pre_years()) | set(periods.post_years()))
    countries = sorted({c.country for c in covariates})
    rows: list[PanelObservation] = []
    diags: list[Diagnostic] = []
    n_zero = 0
    for country in countries:
        for year in years:
            cov = cov_map.get((country, year))
            if cov is None:
                diags.append(Diagnostic(
                    "warning", None, f"covariate gap for ({country}, {year}); row dropped"))
                continue
            y = float(series.get(country, {}).get(year, 0.0))
            if y <= 0:
                if zero_policy == "drop":
                    n_zero += 1
                    continue
                outcome = math.log(y + epsilon)
            else:
                outcome = math.log(y)
            vals = []
            bad = None
            for name in covariate_names:
                raw = getters[name](cov)
                if raw <= 0:
                    bad = name
                    break
                vals.append(math.log(raw))
            if bad is not None:
                diags.append(Diagnostic(
                    "warning", None,
                    f"non-positive {bad} for ({country}, {year}); row dropped"))
                continue
            rows.append(PanelObservation(
                country=country, year=year, outcome=outcome,
                covariates=tuple(vals), group=label_of.get(country, CONTROL),
                post=year >= periods.event_year))
    if n_zero:
        diags.append(Diagnostic(
            "warning", None, f"{n_zero} zero-outcome rows dropped (zero_policy=drop)"))
    return rows, diags


@dataclass(frozen=True)
class GroupEffect:
    beta: float
    clustered_se: float
    p_value: float


@dataclass(frozen=True)
class DidResult:
    effects: Mapping[str, GroupEffect]
    covariate_coefficients: Mapping[str, float]
    within_r2: float
    n_obs: int
    n_countries: int
    n_clusters: int
    vif_post: float
    f_stat_p: float

    def to_obj(self) -> dict:
        return {
            "effects": {g: {"beta": e.beta, "clustered_se": e.clustered_se,
                            "p_value": e.p_value}
                        for g, e in sorted(self.effects.items())},
            "covariate_coefficients": dict(sorted(self.covariate_coefficients.items())),
            "within_r2": self.within_r2,
            "n_obs": self.n_obs,
            "n_countries": self.n_countries,
            "n_clusters": self.n_clusters,
            "vif_post": self.vif_post,
            "f_stat_p": self.f_stat_p,
        }


def _group_labels(panel: Sequence[PanelObservation]) -> list[str]:
    return sorted({r.group for r in panel} - {CONTROL})


def _demean_by(values: np.ndarray, index: np.ndarray, n_groups: int) -> np.ndarray:
    """Subtract group means along axis 0 (vectorized within transform)."""
    counts = np.bincount(index, minlength=n_groups).astype(float)
    if values.ndim == 1:
        sums = np.bincount(index, weights=values, minlength=n_groups)
        return values - (sums / counts)[index]
    out = np.empty_like(values)
    for j in range(values.shape[1]):
        sums = np.bincount(index, weights=values[:, j], minlength=n_groups)
        out[:, j] = values[:, j] - (sums / counts)[index]
    return out


def _collinear_columns(xw: np.ndarray, names: Sequence[str]) -> list[str]:
    """Greedy scan: columns that do not increase the design rank."""
    bad = []
    kept: list[int] = []
    rank = 0
    for j in range(xw.shape[1]):
        trial = xw[:, kept + [j]]
        r = np.linalg.matrix_rank(trial)
        if r > rank:
            kept.append(j)
            rank = r
        else:
            bad.append(names[j])
    return bad


def _cluster_se(xw: np.ndarray, resid: np.ndarray, cluster_idx: np.ndarray,
                n_clusters: int, n_absorbed: int, yw: np.ndarray
                ) -> tuple[np.ndarray, np.ndarray]:
    """CR1 covariance: Liang-Zeger with G/(G-1) * (N-1)/(N-K) where K counts
    the slope coefficients plus the absorbed fixed effects.

    An exactly-fitting regression (residuals at float-noise level) gets a
    zero covariance so downstream t statistics collapse to 0 instead of a
    ratio of rounding errors.
    """
    n, k = xw.shape
    if float(resid @ resid) <= 1e-20 * max(1.0, float(yw @ yw)):
        zero = np.zeros((k, k))
        return zero, np.zeros(k)
    bread = np.linalg.inv(xw.T @ xw)
    meat = np.zeros((k, k))
    xe = xw * resid[:, None]
    for g in range(n_clusters):
        s = xe[cluster_idx == g].sum(axis=0)
        meat += np.outer(s, s)
    kk = k + n_absorbed
    c = (n_clusters / (n_clusters - 1)) * ((n - 1) / (n - kk))
    vcov = c * bread @ meat @ bread
    return vcov, np.sqrt(np.diag(vcov))


def _prepare(panel: Sequence[PanelObservation]):
    countries = sorted({r.country for r in panel})
    c_index = {c: i for i, c in enumerate(countries)}
    idx = np.asarray([c_index[r.country] for r in panel], dtype=np.int64)
    y = np.asarray([r.outcome for r in panel], dtype=float)
    return countries, idx, y


def did_estimate(panel: Sequence[PanelObservation],
                 treatment_groups: Sequence[str] | None = None,
                 covariate_names: Sequence[str] | None = None) -> DidResult:
    """Two-way FE DiD: outcome on post x treatment terms, year dummies and
    covariates, country effects absorbed by demeaning, CR1 clustered SEs."""
    panel = list(panel)
    if not panel:
        raise EstimationError("empty panel")
    groups = list(treatment_groups) if treatment_groups else _group_labels(panel)
    if not groups:
        raise EstimationError("no treatment groups in panel")
    by_group: dict[str, set] = {}
    for r in panel:
        by_group.setdefault(r.group, set()).add(r.country)
    for g in groups + [CONTROL]:
        if len(by_group.get(g, ())) < 2:
            raise EstimationError(f"fewer than 2 clusters in arm {g!r}")
    countries, idx, y = _prepare(panel)
    years = sorted({r.year for r in panel})
    k_cov = len(panel[0].covariates)
    cov_names = list(covariate_names) if covariate_names else [
        f"x{j + 1}" for j in range(k_cov)]
    names = [f"post_x_{g}" for g in groups] \
        + [f"year_{t}" for t in years[1:]] + cov_names
    n = len(panel)
    x = np.zeros((n, len(names)))
    for i, r in enumerate(panel):
        if r.post and r.group in groups:
            x[i, groups.index(r.group)] = 1.0
        if r.year != years[0]:
            x[i, len(groups) + years.index(r.year) - 1] = 1.0
        x[i, len(groups) + len(years) - 1:] = r.covariates
    xw = _demean_by(x, idx, len(countries))
    yw = _demean_by(y, idx, len(countries))
    if np.linalg.matrix_rank(xw) < xw.shape[1]:
        bad = _collinear_columns(xw, names)
        raise EstimationError(f"collinear design columns after demeaning: {bad}")
    beta, *_ = np.linalg.lstsq(xw, yw, rcond=None)
    fitted = xw @ beta
    resid = yw - fitted
    g = len(countries)
    vcov, se = _cluster_se(xw, resid, idx, g, n_absorbed=len(countries), yw=yw)
    tstat = np.divide(beta, se, out=np.zeros_like(beta), where=se > 0)
    pvals = 2.0 * stats.t.sf(np.abs(tstat), df=g - 1)
    effects = {grp: GroupEffect(float(beta[j]), float(se[j]), float(pvals[j]))
               for j, grp in enumerate(groups)}
    cov_offset = len(groups) + len(years) - 1
    theta = {cov_names[j]: float(beta[cov_offset + j]) for j in range(k_cov)}
    if fitted.std() > 0 and yw.std() > 0:
        within_r2 = float(np.corrcoef(fitted, yw)[0, 1] ** 2)
    else:
        within_r2 = 0.0
    vifs = []
    for grp in groups:
        res = vif({nm: xw[:, j] for j, nm in enumerate(names)}, f"post_x_{grp}")
        vifs.append(res.value)
    wald = float(beta @ np.linalg.pinv(vcov) @ beta)
    f_stat = wald / xw.shape[1]
    f_p = float(stats.f.sf(f_stat, xw.shape[1], g - 1))
    return DidResult(
        effects=effects,
        covariate_coefficients=theta,
        within_r2=within_r2,
        n_obs=n,
        n_countries=len(countries),
        n_clusters=len(countries),
        vif_post=max(vifs),
        f_stat_p=f_p,
    )


@dataclass(frozen=True)
class PretrendResult:
    beta_p: float
    p_value: float


def parallel_trends_test(panel: Sequence[PanelObservation],
                         event_year: int,
                         treatment_groups: Sequence[str] | None = None,
                         ) -> Mapping[str, PretrendResult]:
    """Pre-period regression of the outcome on (t - event) x treatment plus a
    common linear trend, covariates and country effects; two-sided p per
    group, country-clustered.  The null is equal pre-treatment trends."""
    panel = [r for r in panel]
    if not panel:
        raise EstimationError("empty panel")
    if any(r.year >= event_year for r in panel):
        raise EstimationError("parallel_trends_test expects pre-period rows only")
    groups = list(treatment_groups) if treatment_groups else _group_labels(panel)
    if not groups:
        raise EstimationError("no treatment groups in panel")
    countries, idx, y = _prepare(panel)
    if len(countries) < 2:
        raise EstimationError("fewer than 2 clusters")
    k_cov = len(panel[0].covariates)
    names = [f"trend_x_{g}" for g in groups] + ["trend"] + [
        f"x{j + 1}" for j in range(k_cov)]
    n = len(panel)
    x = np.zeros((n, len(names)))
    for i, r in enumerate(panel):
        rel = float(r.year - event_year)
        if r.group in groups:
            x[i, groups.index(r.group)] = rel
        x[i, len(groups)] = rel
        x[i, len(groups) + 1:] = r.covariates
    xw = _demean_by(x, idx, len(countries))
    yw = _demean_by(y, idx, len(countries))
    if np.linalg.matrix_rank(xw) < xw.shape[1]:
        bad = _collinear_columns(xw, names)
        raise EstimationError(f"collinear design columns after demeaning: {bad}")
    beta, *_ = np.linalg.lstsq(xw, yw, rcond=None)
    resid = yw - xw @ beta
    g = len(countries)
    _, se = _cluster_se(xw, resid, idx, g, n_absorbed=len(countries), yw=yw)
    out = {}
    for j, grp in enumerate(groups):
        t = beta[j] / se[j] if se[j] > 0 else 0.0
        out[grp] = PretrendResult(float(beta[j]),
                                  float(2.0 * stats.t.sf(abs(t), df=g - 1)))
    return out


@dataclass(frozen=True)
class VifResult:
    value: float
    below_threshold: bool
    offending: tuple[str, ...] = ()

    VIF_THRESHOLD = 5.0


def vif(columns: Mapping[str, np.ndarray], focus: str) -> VifResult:
    """Variance inflation factor of ``focus`` against the other columns.

    VIF = 1/(1 - R^2) from regressing the focus column (with intercept) on
    the rest; perfect collinearity yields an infinite value and names the
    columns involved.
    """
    if focus not in columns:
        raise ValueError(f"unknown focus column {focus!r}")
    if len(columns) < 2:
        raise ValueError("vif needs at least 2 columns")
    names = [nm for nm in columns if nm != focus]
    yv = np.asarray(columns[focus], dtype=float)
    x = np.column_stack([np.ones(yv.shape[0])]
                        + [np.asarray(columns[nm], dtype=float) for nm in names])
    beta, *_ = np.linalg.lstsq(x, yv, rcond=None)
    resid = yv - x @ beta
    sst = float(((yv - yv.mean()) ** 2).sum())
    ssr = float((resid ** 2).sum())
    if sst <= 0:
        return VifResult(float("inf"), False, tuple(names))
    r2 = 1.0 - ssr / sst
    if r2 >= 1.0 - 1e-12:
        offending = tuple(nm for j, nm in enumerate(names)
                          if abs(beta[j + 1]) > 1e-8)
        return VifResult(float("inf"), False, offending or tuple(names))
    value = 1.0 / (1.0 - r2)
    return VifResult(float(value), value < VifResult.VIF_THRESHOLD)


# --- coarsened exact matching ----------------------------------------------

DEFAULT_CEM_CUTPOINTS = (-3.0, -1.5, -0.75, 0.75, 1.5, 3.0)


@dataclass(frozen=True)
class CemStratum:
    signature: tuple
    treated: tuple
    controls: tuple


@dataclass(frozen=True)
class CemResult:
    matched_controls: frozenset
    strata: tuple  # retained CemStratum, sorted by signature
    dropped_treated: tuple
    dropped_controls: tuple

    def to_obj(self) -> dict:
        return {
            "matched_controls": sorted(self.matched_controls),
            "strata": [
                {"signature": list(s.signature), "treated": list(s.treated),
                 "controls": list(s.controls)}
                for s in self.strata
            ],
            "dropped_treated": sorted(self.dropped_treated),
            "dropped_controls": sorted(self.dropped_controls),
        }


def cem_match(summaries: Mapping[str, Sequence[float]],
              treated: frozenset | set,
              cutpoints: Sequence[float] = DEFAULT_CEM_CUTPOINTS,
              covariate_names: Sequence[str] | None = None,
              standardization: tuple[np.ndarray, np.ndarray] | None = None,
              ) -> CemResult:
    """Match on the joint bin signature of z-scored covariate summaries.

    Covariates are standardized over the pooled candidate set (or with the
    supplied (means, sds), which makes reruns on a matched subset
    reproduce the same strata), then binned with the fixed cutpoints into
    left-closed intervals.  Strata keep countries only when they hold at
    least one treated and one control member.
    """
    candidates = sorted(summaries)
    if not candidates:
        raise ValueError("empty candidate set")
    k = len(next(iter(summaries.values())))
    mat = np.empty((len(candidates), k))
    for i, c in enumerate(candidates):
        vec = summaries[c]
        if len(vec) != k:
            raise ValueError(f"incomplete covariate vector for {c}")
        mat[i] = vec
    if not np.isfinite(mat).all():
        raise ValueError("non-finite covariate summary")
    names = list(covariate_names) if covariate_names else [
        f"covariate {j}" for j in range(k)]
    if standardization is None:
        means = mat.mean(axis=0)
        sds = mat.std(axis=0)
    else:
        means, sds = (np.asarray(v, dtype=float) for v in standardization)
    for j in range(k):
        if sds[j] <= 0:
            raise ValueError(f"zero variance covariate: {names[j]}")
    z = (mat - means) / sds
    cuts = np.asarray([c for c in cutpoints if np.isfinite(c)], dtype=float)
    bins = np.searchsorted(cuts, z, side="right")
    strata: dict[tuple, tuple[list, list]] = {}
    treated = set(treated)
    for i, c in enumerate(candidates):
        sig = tuple(int(b) for b in bins[i])
        bucket = strata.setdefault(sig, ([], []))
        bucket[0 if c in treated else 1].append(c)
    retained = []
    matched: set = set()
    dropped_t: list = []
    dropped_c: list = []
    for sig in sorted(strata):
        t_members, c_members = strata[sig]
        if t_members and c_members:
            retained.append(CemStratum(sig, tuple(t_members), tuple(c_members)))
            matched.update(c_members)
        else:
            dropped_t.extend(t_members)
            dropped_c.extend(c_members)
    return CemResult(
        matched_controls=frozenset(matched),
        strata=tuple(retained),
        dropped_treated=tuple(sorted(dropped_t)),
        dropped_controls=tuple(sorted(dropped_c)),
    )


# --- panel CSV --------------------------------------------------------------

def write_panel_csv(rows: Sequence[PanelObservation],
                    covariate_names: Sequence[str], path,
                    header_comment: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(",".join(["country", "year", "group", "post", "outcome",
                           *covariate_names]) + "\n")
        for r in sorted(rows, key=lambda r: (r.country, r.year)):
            vals = ",".join(repr(v) for v in r.covariates)
            fh.write(f"{r.country},{r.year},{r.group},{int(r.post)},{r.outcome!r},{vals}\n")


def read_panel_csv(path) -> tuple[list[PanelObservation], list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if first.startswith("#"):
            first = fh.readline()
        header = first.strip().split(",")
        if header[:5] != ["country", "year", "group", "post", "outcome"]:
            raise ValueError("bad panel header")
        cov_names = header[5:]
        rows = []
        for rec in csv.reader(fh):
            if not rec:
                continue
            rows.append(PanelObservation(
                country=rec[0], year=int(rec[1]), group=rec[2],
                post=bool(int(rec[3])), outcome=float(rec[4]),
                covariates=tuple(float(v) for v in rec[5:])))
    return rows, cov_names
