"""Command line interface.

Subcommands: extract, eval, network, metrics, panel, did, cem, synth, run,
validate.  Exit codes: 0 ok, 1 validation problem, 2 stage failure.
Worker-count precedence for `run`: --workers flag > GEOSCHOLAR_WORKERS env
var > config file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import econo, evalharness, extract, gazetteer, metrics, netbuild, pipeline, synth
from .corpus import (AsjcTaxonomy, CorpusError, dump_corpus, dump_covariates,
                     load_corpus, load_covariates)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_STAGE = 2


def _args_hash(args: argparse.Namespace) -> str:
    canon = json.dumps({k: str(v) for k, v in sorted(vars(args).items())
                        if k != "func"})
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def _load_gazetteer(path: str | None) -> gazetteer.CompiledGazetteer:
    if path:
        return gazetteer.compile(gazetteer.parse_gazetteer(path))
    return gazetteer.default_gazetteer()


def _load_periods(path: str | None) -> metrics.PeriodSpec:
    return pipeline.load_periods(path) if path else metrics.PeriodSpec()


def _load_groups(path: str | None) -> tuple[metrics.GroupSpec, tuple]:
    return pipeline.load_groups(path) if path else (metrics.GroupSpec.default(), ())


def cmd_extract(args) -> int:
    gaz = _load_gazetteer(args.gazetteer)
    loaded = load_corpus(args.corpus, "publications")
    for d in loaded.diagnostics:
        print(f"[corpus] {d}", file=sys.stderr)
    query = None
    if args.tag_query:
        query = extract.parse_topic_query(Path(args.tag_query).read_text("utf-8"))
    results = extract.extract_corpus(loaded.records, gaz,
                                     parallelism=args.workers, query=query)
    extract.write_mentions(results, args.out)
    print(f"extracted {len(results)} records -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    mentions = extract.read_mentions(args.mentions)
    annotations = load_corpus(args.annotations, "annotations").records
    predictions = {m.publication_id: m.mentioned for m in mentions}
    report = evalharness.evaluate(predictions, annotations)
    evalharness.write_report(report, args.out, config_hash=_args_hash(args))
    print(f"n={report.n} accuracy_union={report.accuracy_union:.4f} "
          f"jaccard_union={report.jaccard_union:.4f} "
          f"agreement={report.intercoder_agreement:.4f}")
    return EXIT_OK


def cmd_network(args) -> int:
    gaz = _load_gazetteer(args.gazetteer)
    excluded = frozenset(gaz.excluded)
    if args.kind == "migration":
        if not args.migrations:
            print("error: --migrations is required for kind=migration", file=sys.stderr)
            return EXIT_VALIDATION
        events = load_corpus(args.migrations, "migrations").records
        net = netbuild.build_migration(events, excluded=excluded)
    else:
        if not (args.corpus and args.mentions):
            print("error: --corpus and --mentions are required", file=sys.stderr)
            return EXIT_VALIDATION
        records = load_corpus(args.corpus, "publications").records
        mentions = {m.publication_id: m for m in extract.read_mentions(args.mentions)}
        if args.kind == "attention":
            taxonomy = (AsjcTaxonomy.from_toml(args.taxonomy)
                        if args.taxonomy else AsjcTaxonomy.default())
            net = netbuild.build_attention(records, mentions, taxonomy,
                                           stratify=args.stratify, excluded=excluded)
        else:
            net = netbuild.build_funding(records, mentions, excluded=excluded)
    netbuild.write_edges_csv(net, args.out,
                             header_comment=f"config_hash={_args_hash(args)}")
    print(f"{args.kind} network: {len(net.slices)} slices, "
          f"total weight {net.total_weight():.6g} -> {args.out}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    net = netbuild.read_edges_csv(args.edges, kind="attention")
    periods = _load_periods(args.periods)
    groups, _ = _load_groups(args.groups)
    migration = stocks = None
    if args.migration_edges:
        migration = netbuild.read_edges_csv(args.migration_edges, kind="migration")
    if args.covariates:
        covs = load_covariates(args.covariates).records
        stocks = {(c.country, c.year): float(c.scholar_stock) for c in covs}
    rows = metrics.metrics_table(net, periods, groups,
                                 migration=migration, stocks=stocks)
    metrics.write_metrics_csv(rows, args.out,
                              header_comment=f"config_hash={_args_hash(args)}")
    print(f"wrote {len(rows)} country rows -> {args.out}")
    return EXIT_OK


def cmd_panel(args) -> int:
    net = netbuild.read_edges_csv(args.edges, kind="attention")
    periods = _load_periods(args.periods)
    groups, _ = _load_groups(args.groups)
    covs = load_covariates(args.covariates).records
    series = metrics.attention_series(net, args.outcome)
    rows, diags = econo.build_panel(series, covs, groups.groups, periods,
                                    zero_policy=args.zero_policy,
                                    epsilon=args.epsilon)
    for d in diags:
        print(f"[panel] {d}", file=sys.stderr)
    econo.write_panel_csv(rows, econo.DEFAULT_COVARIATE_NAMES, args.out,
                          header_comment=f"config_hash={_args_hash(args)}")
    print(f"wrote {len(rows)} panel rows -> {args.out}")
    return EXIT_OK


def cmd_did(args) -> int:
    rows, cov_names = econo.read_panel_csv(args.panel)
    periods = _load_periods(args.periods)
    groups, mena = _load_groups(args.groups)
    block, cem_obj = pipeline.did_analysis(
        rows, cov_names, periods, control_group=args.control_group, mena=mena)
    obj = {"config_hash": _args_hash(args), "results": {args.outcome: block}}
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")
    if cem_obj is not None and args.cem_out:
        with open(args.cem_out, "w", encoding="utf-8") as fh:
            json.dump({"config_hash": _args_hash(args), "results": cem_obj},
                      fh, sort_keys=True, indent=2)
            fh.write("\n")
    for g, eff in block["pooled"]["effects"].items():
        flag = " (pretrend violated)" if eff["pretrend_violated"] else ""
        print(f"{g}: beta={eff['beta']:.4f} se={eff['se']:.4f} p={eff['p']:.4f}{flag}")
    for g, eff in block["subgroups"]["effects"].items():
        flag = " (pretrend violated)" if eff["pretrend_violated"] else ""
        print(f"{g}: beta={eff['beta']:.4f} se={eff['se']:.4f} p={eff['p']:.4f}{flag}")
    return EXIT_OK


def cmd_cem(args) -> int:
    rows, cov_names = econo.read_panel_csv(args.panel)
    cem = pipeline.cem_from_panel(rows, cov_names, econo.DEFAULT_CEM_CUTPOINTS)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump({"config_hash": _args_hash(args), "results": cem.to_obj()},
                  fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"matched {len(cem.matched_controls)} controls in "
          f"{len(cem.strata)} strata -> {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    plan = synth.plan_from_toml(args.plan)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records, gold = synth.generate_corpus(plan)
    dump_corpus(records, out / "publications.jsonl")
    with open(out / "gold_mentions.jsonl", "w", encoding="utf-8") as fh:
        for pid in sorted(gold):
            fh.write(json.dumps({"publication_id": pid,
                                 "mentioned": sorted(gold[pid])}) + "\n")
    if plan.n_annotated:
        dump_corpus(synth.generate_annotations(plan, gold),
                    out / "annotations.jsonl")
    if plan.n_migration_events:
        dump_corpus(synth.generate_migrations(plan), out / "migrations.jsonl")
    dump_covariates(synth.generate_covariates(plan), out / "covariates.csv")
    if plan.panel is not None:
        rows, truth = synth.generate_panel(plan)
        econo.write_panel_csv(rows, truth["covariate_names"], out / "panel.csv")
        with open(out / "panel_truth.json", "w", encoding="utf-8") as fh:
            json.dump(truth, fh, sort_keys=True, indent=2, default=list)
            fh.write("\n")
    print(f"synthesized {len(records)} records -> {out}")
    return EXIT_OK


def _resolve_workers(args, cfg: pipeline.RunConfig) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get("GEOSCHOLAR_WORKERS", "").strip()
    if env:
        return int(env)
    return cfg.workers


def cmd_run(args) -> int:
    cfg = pipeline.load_config(args.config)
    if args.out_dir:
        cfg.out_dir = Path(args.out_dir)
    cfg.workers = _resolve_workers(args, cfg)
    diags = pipeline.validate_config(cfg)
    for d in diags:
        print(f"[validate] {d}", file=sys.stderr)
    if any(d.severity == "error" for d in diags):
        return EXIT_VALIDATION
    manifest = pipeline.run_pipeline(cfg)
    bad = [name for name, st in manifest["stages"].items() if st["status"] == "failed"]
    for name, st in manifest["stages"].items():
        print(f"{name}: {st['status']}" + (f" ({st['error']})" if st["error"] else ""))
    return EXIT_STAGE if bad else EXIT_OK


def cmd_validate(args) -> int:
    cfg = pipeline.load_config(args.config)
    diags = pipeline.validate_config(cfg)
    for d in diags:
        print(str(d))
    errors = [d for d in diags if d.severity == "error"]
    print(f"{len(errors)} error(s), {len(diags) - len(errors)} warning(s)")
    return EXIT_VALIDATION if errors else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geoscholar",
        description="Country-mention attention networks and event-effect estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract country mentions from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--gazetteer")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--tag-query", dest="tag_query")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", help="score mentions against dual-coder annotations")
    p.add_argument("--mentions", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("network", help="build a directed country network")
    p.add_argument("--kind", choices=("attention", "funding", "migration"),
                   required=True)
    p.add_argument("--corpus")
    p.add_argument("--mentions")
    p.add_argument("--migrations")
    p.add_argument("--taxonomy")
    p.add_argument("--gazetteer")
    p.add_argument("--stratify", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_network)

    p = sub.add_parser("metrics", help="per-country attention metrics table")
    p.add_argument("--edges", required=True)
    p.add_argument("--migration-edges", dest="migration_edges")
    p.add_argument("--covariates")
    p.add_argument("--periods")
    p.add_argument("--groups")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("panel", help="assemble the country-year panel")
    p.add_argument("--edges", required=True)
    p.add_argument("--covariates", required=True)
    p.add_argument("--periods")
    p.add_argument("--groups")
    p.add_argument("--outcome", choices=pipeline.OUTCOMES, default="total")
    p.add_argument("--zero-policy", dest="zero_policy",
                   choices=("drop", "offset"), default="drop")
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_panel)

    p = sub.add_parser("did", help="difference-in-differences estimates")
    p.add_argument("--panel", required=True)
    p.add_argument("--groups")
    p.add_argument("--periods")
    p.add_argument("--control-group", dest="control_group",
                   choices=("world", "mena", "cem"), default="world")
    p.add_argument("--outcome", default="total")
    p.add_argument("--out", required=True)
    p.add_argument("--cem-out", dest="cem_out")
    p.set_defaults(func=cmd_did)

    p = sub.add_parser("cem", help="coarsened exact matching on panel countries")
    p.add_argument("--panel", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cem)

    p = sub.add_parser("synth", help="generate synthetic fixtures from a plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="run the full pipeline from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="validate a run config without side effects")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CorpusError, gazetteer.GazetteerError, FileNotFoundError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except econo.EstimationError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
