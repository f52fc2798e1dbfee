"""End-to-end pipeline: extract -> networks -> metrics -> panel -> cem/did
-> eval, driven by a single TOML config.

Every stage is a pure function of its inputs; rerunning with identical
inputs reproduces identical output bytes (the manifest also records stage
timings, so the manifest itself is excluded from byte-identity).  Each
output file carries the config hash as a header comment (CSV), a
top-level key (JSON), or a sidecar file (JSONL).
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ImportError:  # pragma: no cover
    import tomli as tomllib

from . import econo, evalharness, extract, gazetteer, metrics, netbuild
from .corpus import (AsjcTaxonomy, Diagnostic, load_corpus, load_covariates)

OUTCOMES = ("total", "domestic", "foreign")


@dataclass
class RunConfig:
    corpus: Path
    out_dir: Path = Path("out")
    gazetteer_path: Path | None = None
    taxonomy_path: Path | None = None
    covariates: Path | None = None
    migrations: Path | None = None
    annotations: Path | None = None
    tag_query: Path | None = None
    periods: metrics.PeriodSpec = dc_field(default_factory=metrics.PeriodSpec)
    groups: metrics.GroupSpec = dc_field(default_factory=metrics.GroupSpec.default)
    mena: tuple = ()
    control_group: str = "world"
    outcomes: tuple = ("total",)
    zero_policy: str = "drop"
    epsilon: float = 1e-3
    covariate_names: tuple = econo.DEFAULT_COVARIATE_NAMES
    cem_cutpoints: tuple = econo.DEFAULT_CEM_CUTPOINTS
    workers: int = 1
    stratify: bool = False
    raw: dict = dc_field(default_factory=dict)
    load_errors: list = dc_field(default_factory=list)


def load_config(path) -> RunConfig:
    path = Path(path)
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    base = path.parent

    def p(section, key):
        val = data.get(section, {}).get(key)
        return (base / val) if val else None

    cfg = RunConfig(corpus=base / data["paths"]["corpus"], raw=data)
    cfg.out_dir = base / data.get("paths", {}).get("out_dir", "out")
    cfg.gazetteer_path = p("paths", "gazetteer")
    cfg.taxonomy_path = p("paths", "taxonomy")
    cfg.covariates = p("paths", "covariates")
    cfg.migrations = p("paths", "migrations")
    cfg.annotations = p("paths", "annotations")
    cfg.tag_query = p("paths", "tag_query")
    if "periods" in data:
        pr = data["periods"]
        try:
            cfg.periods = metrics.PeriodSpec(
                pre=tuple(pr.get("pre", (2002, 2010))),
                post=tuple(pr.get("post", (2011, 2019))),
                event_year=int(pr.get("event_year", 2011)))
        except ValueError as exc:
            cfg.load_errors.append(f"PeriodSpec: {exc}")
    if "groups" in data:
        try:
            cfg.groups = metrics.GroupSpec(
                {label: frozenset(members)
                 for label, members in data["groups"].items()})
        except ValueError as exc:
            cfg.load_errors.append(f"GroupSpec: {exc}")
    did = data.get("did", {})
    cfg.mena = tuple(did.get("mena", ()))
    cfg.control_group = did.get("control_group", "world")
    cfg.outcomes = tuple(did.get("outcomes", ("total",)))
    cfg.zero_policy = did.get("zero_policy", "drop")
    cfg.epsilon = float(did.get("offset_epsilon", 1e-3))
    cfg.covariate_names = tuple(did.get("covariates", econo.DEFAULT_COVARIATE_NAMES))
    cfg.cem_cutpoints = tuple(data.get("cem", {}).get(
        "cutpoints", econo.DEFAULT_CEM_CUTPOINTS))
    run = data.get("run", {})
    cfg.workers = int(run.get("workers", 1))
    cfg.stratify = bool(run.get("stratify", False))
    return cfg


def config_hash(cfg: RunConfig) -> str:
    canon = json.dumps(cfg.raw, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def validate_config(cfg: RunConfig) -> list[Diagnostic]:
    """Referential and invariant checks; diagnostics are the output."""
    diags: list[Diagnostic] = []

    def err(msg):
        diags.append(Diagnostic("error", None, msg))

    def warn(msg):
        diags.append(Diagnostic("warning", None, msg))

    for msg in cfg.load_errors:
        err(msg)
    for label, path in (("corpus", cfg.corpus), ("gazetteer", cfg.gazetteer_path),
                        ("taxonomy", cfg.taxonomy_path), ("covariates", cfg.covariates),
                        ("migrations", cfg.migrations), ("annotations", cfg.annotations),
                        ("tag_query", cfg.tag_query)):
        if path is not None and not Path(path).exists():
            err(f"{label} file does not exist: {path}")
    if cfg.control_group not in ("world", "mena", "cem"):
        err(f"unknown control group {cfg.control_group!r}")
    if cfg.control_group == "mena" and not cfg.mena:
        err("control group 'mena' requires a roster in [did].mena")
    for outcome in cfg.outcomes:
        if outcome not in OUTCOMES:
            err(f"unknown outcome {outcome!r}")
    if cfg.zero_policy not in ("drop", "offset"):
        err(f"unknown zero_policy {cfg.zero_policy!r}")
    if cfg.zero_policy == "offset" and not cfg.epsilon > 0:
        err("offset zero_policy requires offset_epsilon > 0")
    if cfg.workers < 1:
        err("workers must be >= 1")
    try:
        src = (gazetteer.parse_gazetteer(cfg.gazetteer_path)
               if cfg.gazetteer_path else gazetteer.default_source())
        gazetteer.validate_source(src)
        excluded = set(src.excluded_iso3)
        for label, members in cfg.groups.groups.items():
            bad = sorted(set(members) & excluded)
            if bad:
                warn(f"group {label} contains gazetteer-excluded countries: {bad}")
    except Exception as exc:
        err(f"gazetteer: {exc}")
    return diags


def cem_from_panel(rows, cov_names, cutpoints) -> econo.CemResult:
    """CEM on pre-period country means of the log outcome and covariates."""
    pre_rows = [r for r in rows if not r.post]
    summaries: dict[str, list] = {}
    counts: dict[str, int] = {}
    for r in pre_rows:
        vec = summaries.setdefault(r.country, [0.0] * (1 + len(r.covariates)))
        vec[0] += r.outcome
        for j, v in enumerate(r.covariates):
            vec[j + 1] += v
        counts[r.country] = counts.get(r.country, 0) + 1
    for c, vec in summaries.items():
        summaries[c] = [v / counts[c] for v in vec]
    treated_countries = {r.country for r in rows if r.group != econo.CONTROL}
    return econo.cem_match(summaries, treated_countries, cutpoints=cutpoints,
                           covariate_names=("log_outcome", *cov_names))


def did_analysis(rows, cov_names, periods, control_group="world", mena=(),
                 cem_cutpoints=econo.DEFAULT_CEM_CUTPOINTS):
    """Full DiD block for one outcome: pooled target plus subgroup effects,
    each with its pre-trend test; the control group is the rest of the
    panel, a fixed roster, or the CEM-matched set."""
    treated_labels = sorted({r.group for r in rows} - {econo.CONTROL})
    cem_obj = None
    if control_group == "mena":
        roster = set(mena)
        rows = [r for r in rows if r.group != econo.CONTROL or r.country in roster]
    elif control_group == "cem":
        cem = cem_from_panel(rows, cov_names, cem_cutpoints)
        cem_obj = cem.to_obj()
        treated_countries = {r.country for r in rows if r.group != econo.CONTROL}
        keep = treated_countries | set(cem.matched_controls)
        rows = [r for r in rows if r.country in keep]
    elif control_group != "world":
        raise ValueError(f"unknown control group {control_group!r}")

    def run_block(relabel: bool):
        if relabel:
            work = [econo.PanelObservation(r.country, r.year, r.outcome, r.covariates,
                                           "Target" if r.group != econo.CONTROL
                                           else econo.CONTROL, r.post)
                    for r in rows]
            labels = ["Target"]
        else:
            work = rows
            labels = treated_labels
        result = econo.did_estimate(work, labels, covariate_names=cov_names)
        pre = [r for r in work if not r.post]
        pretrend = econo.parallel_trends_test(pre, periods.event_year, labels)
        block: dict = {"within_r2": result.within_r2, "effects": {}}
        for g in labels:
            eff = result.effects[g]
            pt = pretrend[g]
            block["effects"][g] = {
                "beta": eff.beta,
                "se": eff.clustered_se,
                "p": eff.p_value,
                "pretrend_beta": pt.beta_p,
                "pretrend_p": pt.p_value,
                "pretrend_violated": pt.p_value < 0.05,
            }
        block["covariates"] = dict(result.covariate_coefficients)
        block["n_obs"] = result.n_obs
        block["n_clusters"] = result.n_clusters
        block["vif_post"] = result.vif_post
        block["f_stat_p"] = result.f_stat_p
        return block

    out = {
        "control_group": control_group,
        "pooled": run_block(relabel=True),
        "subgroups": run_block(relabel=False),
    }
    return out, cem_obj


@dataclass
class StageStatus:
    status: str = "pending"  # ok | failed | skipped
    seconds: float = 0.0
    diagnostics: int = 0
    error: str = ""


def run_pipeline(cfg: RunConfig) -> dict:
    """Execute all configured stages in dependency order; returns the manifest."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    stages: dict[str, StageStatus] = {}
    manifest: dict = {"config_hash": chash, "workers": cfg.workers, "stages": {}}

    gaz_path = cfg.gazetteer_path
    if gaz_path is None:
        from importlib.resources import files
        gaz_path = files("geoscholar.data").joinpath("gazetteer.toml")
    manifest["gazetteer_hash"] = file_hash(gaz_path)

    def write_json(obj: dict, name: str) -> None:
        obj = dict(obj)
        obj["config_hash"] = chash
        with open(out_dir / name, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, sort_keys=True, indent=2)
            fh.write("\n")

    state: dict = {}
    failed = False

    def stage(name: str, enabled: bool, fn) -> None:
        nonlocal failed
        st = StageStatus()
        stages[name] = st
        if failed:
            st.status = "skipped"
            st.error = "upstream stage failed"
            return
        if not enabled:
            st.status = "skipped"
            return
        t0 = time.perf_counter()
        try:
            st.diagnostics = fn() or 0
            st.status = "ok"
        except Exception as exc:
            st.status = "failed"
            st.error = f"{type(exc).__name__}: {exc}"
            failed = True
        st.seconds = round(time.perf_counter() - t0, 3)

    def s_extract() -> int:
        src = (gazetteer.parse_gazetteer(cfg.gazetteer_path)
               if cfg.gazetteer_path else gazetteer.default_source())
        gaz = gazetteer.compile(src)
        state["gaz"] = gaz
        loaded = load_corpus(cfg.corpus, "publications")
        state["records"] = loaded.records
        query = None
        if cfg.tag_query:
            query = extract.parse_topic_query(Path(cfg.tag_query).read_text("utf-8"))
        results = extract.extract_corpus(loaded.records, gaz,
                                         parallelism=cfg.workers, query=query)
        state["mentions"] = {r.publication_id: r for r in results}
        extract.write_mentions(results, out_dir / "mentions.jsonl")
        write_json({}, "mentions.jsonl.meta.json")
        return len(loaded.diagnostics)

    def s_network() -> int:
        taxonomy = (AsjcTaxonomy.from_toml(cfg.taxonomy_path)
                    if cfg.taxonomy_path else AsjcTaxonomy.default())
        excluded = frozenset(state["gaz"].excluded)
        attention = netbuild.build_attention(state["records"], state["mentions"],
                                             taxonomy, stratify=cfg.stratify,
                                             excluded=excluded)
        state["attention"] = attention
        netbuild.write_edges_csv(attention, out_dir / "edges_attention.csv",
                                 header_comment=f"config_hash={chash}")
        funding = netbuild.build_funding(state["records"], state["mentions"],
                                         excluded=excluded)
        netbuild.write_edges_csv(funding, out_dir / "edges_funding.csv",
                                 header_comment=f"config_hash={chash}")
        if cfg.migrations:
            events = load_corpus(cfg.migrations, "migrations").records
            migration = netbuild.build_migration(events, excluded=excluded)
            state["migration"] = migration
            netbuild.write_edges_csv(migration, out_dir / "edges_migration.csv",
                                     header_comment=f"config_hash={chash}")
        return 0

    def s_metrics() -> int:
        stocks = None
        if cfg.covariates:
            covs = load_covariates(cfg.covariates)
            state["covariates"] = covs.records
            stocks = {(c.country, c.year): float(c.scholar_stock)
                      for c in covs.records}
        rows = metrics.metrics_table(state["attention"], cfg.periods, cfg.groups,
                                     migration=state.get("migration"), stocks=stocks)
        metrics.write_metrics_csv(rows, out_dir / "metrics.csv",
                                  header_comment=f"config_hash={chash}")
        return 0

    def s_panel() -> int:
        n_diag = 0
        panels = {}
        for outcome in cfg.outcomes:
            series = metrics.attention_series(state["attention"], outcome)
            rows, diags = econo.build_panel(
                series, state["covariates"], cfg.groups.groups, cfg.periods,
                zero_policy=cfg.zero_policy, epsilon=cfg.epsilon,
                covariate_names=cfg.covariate_names)
            panels[outcome] = rows
            n_diag += len(diags)
        state["panels"] = panels
        econo.write_panel_csv(panels[cfg.outcomes[0]], cfg.covariate_names,
                              out_dir / "panel.csv",
                              header_comment=f"config_hash={chash}")
        return n_diag

    def s_did() -> int:
        results = {}
        cem_all = {}
        for outcome, rows in state["panels"].items():
            block, cem_obj = did_analysis(
                rows, list(cfg.covariate_names), cfg.periods,
                control_group=cfg.control_group, mena=cfg.mena,
                cem_cutpoints=cfg.cem_cutpoints)
            results[outcome] = block
            if cem_obj is None:
                cem_obj = cem_from_panel(rows, list(cfg.covariate_names),
                                         cfg.cem_cutpoints).to_obj()
            cem_all[outcome] = cem_obj
        write_json({"results": results}, "did.json")
        write_json({"results": cem_all}, "cem.json")
        return 0

    def s_eval() -> int:
        annotations = load_corpus(cfg.annotations, "annotations").records
        predictions = {pid: r.mentioned for pid, r in state["mentions"].items()}
        report = evalharness.evaluate(predictions, annotations)
        evalharness.write_report(report, out_dir / "report.json", config_hash=chash)
        return 0

    stage("extract", True, s_extract)
    stage("network", True, s_network)
    stage("metrics", True, s_metrics)
    has_cov = cfg.covariates is not None
    stage("panel", has_cov, s_panel)
    stage("did", has_cov, s_did)
    stage("eval", cfg.annotations is not None, s_eval)

    for name, st in stages.items():
        manifest["stages"][name] = {
            "status": st.status, "seconds": st.seconds,
            "diagnostics": st.diagnostics, "error": st.error,
        }
    manifest["outputs"] = {
        f.name: file_hash(f)
        for f in sorted(out_dir.iterdir())
        if f.is_file() and f.name != "manifest.json"
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return manifest


def load_periods(path) -> metrics.PeriodSpec:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return metrics.PeriodSpec(
        pre=tuple(data.get("pre", (2002, 2010))),
        post=tuple(data.get("post", (2011, 2019))),
        event_year=int(data.get("event_year", 2011)))


def load_groups(path) -> tuple[metrics.GroupSpec, tuple]:
    """Returns (GroupSpec, mena roster) from a groups TOML file."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    spec = metrics.GroupSpec(
        {label: frozenset(members)
         for label, members in data.get("groups", data).items()
         if label != "control"})
    mena = tuple(data.get("control", {}).get("mena", ()))
    return spec, mena
