"""``wavemark`` command-line interface.

Every subcommand reads the same INI config (``--config``); flags given on the
command line override it.  Result tables go to ``--out`` in ``--format`` and a
text rendering is printed to stdout.  ``run`` executes the full pipeline and
always writes its fixed artifact set.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import SampleTable, Status, write_csv
from .pipeline import (PipelineConfig, StageError, build_groups, compute_features, cox_stage,
                       cv_stage, feature_records, format_table, ga_stage, group_records, km_stage, km_svg,
                       load_table, rank_stage, ranked_records, run_pipeline, stage, survival_data,
                       slug, write_csv_records, write_json, write_records)
from .survival import censoring_bias, km_estimate
from .synth import (SurvSynthSpec, SynthSpec, censoring_demo, gen_paper_shape_cohort, gen_survival,
                    gen_two_group)

# command-line dest -> config key
_OVERRIDES = {
    "seed": "seed", "out": "out", "selection_scope": "selection_scope", "threads": "threads",
    "input": "input", "transform": "transform", "method": "ranking", "l_min": "l_min", "l_max": "l_max",
    "restarts": "restarts", "generations": "generations", "k": "k", "repeats": "repeats",
    "classifier": "classifier", "encoding": "cox_encoding", "censored_min": "censored_min",
}


def _config(args) -> PipelineConfig:
    overrides = {key: getattr(args, dest, None) for dest, key in _OVERRIDES.items()}
    if getattr(args, "cv_l_min", None) is not None:
        overrides["cv_l_min"] = args.cv_l_min
    if getattr(args, "cv_l_max", None) is not None:
        overrides["cv_l_max"] = args.cv_l_max
    if getattr(args, "transforms", None):
        overrides["cv_transforms"] = [t.strip() for t in args.transforms.split(",") if t.strip()]
    with stage("config"):
        cfg = PipelineConfig.load(args.config, overrides)
    args.resolved_out = cfg.out
    return cfg


def _outdir(cfg: PipelineConfig) -> Path:
    with stage("output"):
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "FAILED").unlink(missing_ok=True)
        return out


def _grouped(cfg):
    table = load_table(cfg)
    pruned, g = build_groups(cfg, table)
    return table, pruned, g


def _markers(cfg: PipelineConfig, given, stage_name: str) -> list[str]:
    markers = list(given or cfg.survival_markers)
    if not markers:
        raise StageError(stage_name, "name at least one marker (--marker or [survival] survival_markers)")
    return markers


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    with stage("synth"):
        if args.kind == "cohort":
            table = gen_paper_shape_cohort(cfg.seed, **({"effect": args.effect} if args.effect is not None else {}))
        elif args.kind == "two-group":
            effect = 1.5 if args.effect is None else args.effect
            g = gen_two_group(SynthSpec(planted={i: effect for i in args.planted},
                                        seed=cfg.seed))
            # survival windows chosen so split_groups recovers the two groups exactly
            months = np.where(g.y == 0, 12.0, 80.0)
            status = [Status.DEAD_OF_DISEASE if lab == 0 else Status.ALIVE for lab in g.y]
            table = SampleTable(g.marker_names, g.X, np.zeros_like(g.X, dtype=bool), months, status,
                                [f"S{i:04d}" for i in range(len(g.y))])
        else:
            d = gen_survival(SurvSynthSpec(n=args.n, beta=tuple(args.beta), censor_rate=args.censor_rate,
                                           seed=cfg.seed))
            status = [Status.DEAD_OF_DISEASE if e else Status.ALIVE for e in d.event]
            table = SampleTable(d.covariate_names, d.covariates, np.zeros_like(d.covariates, dtype=bool),
                                d.time, status, [f"S{i:04d}" for i in range(len(d))])
        path = out / f"{args.kind.replace('-', '_')}.csv"
        write_csv(table, path, cfg.schema())
    print(f"wrote {path} ({table.n_samples} rows, {table.n_markers} markers)")
    return 0


def cmd_ingest(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    table, pruned, g = _grouped(cfg)
    write_csv(pruned, out / "pruned.csv", cfg.schema())
    path = write_records(out, "groups", group_records(g, pruned), args.format)
    counts = np.bincount(g.y, minlength=2)
    print(f"loaded {table.n_samples} x {table.n_markers}; pruned to {pruned.n_samples} x {pruned.n_markers}")
    print(f"group_dead: {counts[0]}  group_alive: {counts[1]}  markers used: {g.X.shape[1]}")
    print(f"wrote {out / 'pruned.csv'} and {path}")
    return 0


def cmd_features(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    _, _, g = _grouped(cfg)
    F, _, names = compute_features(g, cfg.transform)
    path = write_records(out, f"features_{slug(cfg.transform)}", feature_records(g, F, names), args.format)
    print(f"{cfg.transform}: {F.shape[0]} samples x {F.shape[1]} features -> {path}")
    return 0


def cmd_rank(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    _, _, g = _grouped(cfg)
    F, index_map, names = compute_features(g, cfg.transform)
    rows = ranked_records(rank_stage(cfg, F, g.y), names, index_map)
    path = write_records(out, f"ranked_{slug(cfg.transform)}", rows, args.format)
    print(format_table(rows[:args.top], ["rank", "feature", "statistic", "p_value"]))
    print(f"wrote {path}")
    return 0


def cmd_ga_select(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    _, _, g = _grouped(cfg)
    F, index_map, names = compute_features(g, cfg.transform)
    ranked = rank_stage(cfg, F, g.y)
    ga = ga_stage(cfg, F, g.y, ranked, names, index_map)
    rows = [{"l": r["l"], "features": s["features"], "fitness": s["fitness"], "cv_accuracy": s["cv_accuracy"],
             "cv_std": s["cv_std"]} for r in ga["runs"] for s in r["sets"]]
    if args.format == "json":
        path = write_json(out / "ga.json", ga)
    else:
        path = write_csv_records(out / "ga.csv", rows)
    print(format_table(rows))
    print(f"wrote {path}")
    return 0


def cmd_cv_eval(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    _, _, g = _grouped(cfg)
    rows = cv_stage(cfg, g)
    path = write_records(out, "cv_report", rows, args.format)
    print(format_table(rows, ["transform", "n_features", "classifier", "selection_scope", "mean_accuracy",
                              "std_accuracy"]))
    print(f"wrote {path}")
    return 0


def cmd_km(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    table = load_table(cfg)
    curves, km_rows, _ = km_stage(cfg, table, _markers(cfg, args.marker, "km"))
    path = write_records(out, "km", km_rows, args.format)
    with stage("output"):
        for m, arms in curves.items():
            (out / f"km_{slug(m)}.svg").write_text(km_svg([(f"{m} {a}", c) for a, c in arms],
                                                            f"{m}: median split"))
    print(f"wrote {path} and {len(curves)} SVG plot(s)")
    return 0


def cmd_logrank(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    table = load_table(cfg)
    _, _, rows = km_stage(cfg, table, _markers(cfg, args.marker, "logrank"))
    path = write_records(out, "logrank", rows, args.format)
    print(format_table(rows, ["marker", "n_low", "n_high", "mean_low", "mean_high", "chi2", "p_value"]))
    print(f"wrote {path}")
    return 0


def cmd_cox(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    table = load_table(cfg)
    rows = cox_stage(cfg, table, _markers(cfg, args.covariate, "cox"))
    path = write_records(out, "cox", rows, args.format)
    print(format_table(rows, ["model", "variable", "hazard_ratio", "ci_lower", "ci_upper", "p_value", "n"]))
    print(f"wrote {path}")
    return 0


def cmd_bias(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    if args.demo:
        with stage("bias"):
            rows = []
            for s in range(args.seeds):
                p_low, p_high = censoring_demo(cfg.seed + s)
                rows.append({"seed": cfg.seed + s, "p_late_censoring": p_low, "p_with_mid_censoring": p_high,
                             "crossed": bool(p_low < 0.05 <= p_high)})
        path = write_records(out, "bias_demo", rows, args.format)
        n = sum(r["crossed"] for r in rows)
        print(f"log-rank p crossed 0.05 (significant -> not significant) in {n}/{len(rows)} seeds")
        print(f"wrote {path}")
        return 0

    table = load_table(cfg)
    with stage("bias"):
        d, _ = survival_data(cfg, table, [])
        km = km_estimate(d)
        lo, hi = args.window
        deltas = np.where((km.times >= lo) & (km.times <= hi), args.delta, 0.0)
        series = censoring_bias(km, deltas)
    rows = [{"time": t, "at_risk": int(n), "deaths": int(dd), "delta": dx, "p": p, "p_adjusted": pa, "bias": b}
            for t, n, dd, dx, p, pa, b in zip(series.times, km.at_risk, km.deaths, series.deltas, series.p,
                                              series.p_adjusted, series.bias)]
    path = write_records(out, "bias", rows, args.format)
    print(format_table([r for r in rows if r["delta"] > 0] or rows))
    print(f"wrote {path}")
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    written = run_pipeline(cfg, log=print)
    print(f"wrote {len(written)} artifacts to {cfg.out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file; flags override its values")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--input", help="cohort CSV (default: synthetic cohort from the seed)")
    common.add_argument("--selection-scope", choices=("fold", "global"),
                        help="rank features inside each CV training fold or once on all samples")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="machine-readable format of single-stage outputs")
    common.add_argument("--threads", type=int, help="worker processes for independent jobs")

    parser = argparse.ArgumentParser(prog="wavemark", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"wavemark {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=fn)
        return p

    p = add("synth", cmd_synth, "write a synthetic cohort CSV")
    p.add_argument("--kind", choices=("cohort", "two-group", "survival"), default="cohort")
    p.add_argument("--effect", type=float, help="planted effect in SD units")
    p.add_argument("--planted", type=int, nargs="+", default=[7], help="planted indices (two-group)")
    p.add_argument("--n", type=int, default=200, help="subjects (survival)")
    p.add_argument("--beta", type=float, nargs="+", default=[0.0], help="log hazard ratios (survival)")
    p.add_argument("--censor-rate", type=float, default=0.0)

    add("ingest", cmd_ingest, "load, prune and split the cohort")

    for name, fn, text in (("features", cmd_features, "wavelet features of the grouped samples"),
                           ("rank", cmd_rank, "rank features by two-sample test")):
        p = add(name, fn, text)
        p.add_argument("--transform", help="cwt:<scale> or dwt:<level>")
        if name == "rank":
            p.add_argument("--method", choices=("ttest", "wilcoxon"))
            p.add_argument("--top", type=int, default=20, help="rows to print")

    p = add("ga-select", cmd_ga_select, "GA feature-subset search with restarts and an l sweep")
    p.add_argument("--transform")
    p.add_argument("--l-min", type=int)
    p.add_argument("--l-max", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--generations", type=int)
    p.add_argument("--k", type=int, help="folds for the CV accuracy of each subset")
    p.add_argument("--repeats", type=int)

    p = add("cv-eval", cmd_cv_eval, "repeated k-fold accuracy of top-l ranked features")
    p.add_argument("--transforms", help="comma-separated, e.g. raw,cwt:1,cwt:3,dwt:2")
    p.add_argument("--l-min", dest="cv_l_min", type=int)
    p.add_argument("--l-max", dest="cv_l_max", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--classifier", choices=("svm", "bayes"))

    for name, fn, text in (("km", cmd_km, "Kaplan-Meier curves for median-split markers"),
                           ("logrank", cmd_logrank, "log-rank tests and restricted means")):
        p = add(name, fn, text)
        p.add_argument("--marker", action="append")
        p.add_argument("--censored-min", type=float, help="keep censored subjects beyond this many months")

    p = add("cox", cmd_cox, "Cox proportional hazards fits")
    p.add_argument("--covariate", action="append")
    p.add_argument("--encoding", choices=("median", "continuous"))
    p.add_argument("--censored-min", type=float)

    p = add("bias", cmd_bias, "censoring-bias series or the synthetic censoring demonstration")
    p.add_argument("--demo", action="store_true", help="run the synthetic censoring demonstration")
    p.add_argument("--seeds", type=int, default=100, help="demo repetitions")
    p.add_argument("--delta", type=float, default=1.0, help="extra deaths per event time in the window")
    p.add_argument("--window", type=float, nargs=2, default=(40.0, 70.0), metavar=("LO", "HI"))

    add("run", cmd_run, "full pipeline")
    return parser


def _mark_failed(args, exc: StageError) -> None:
    out = getattr(args, "resolved_out", None)
    if exc.stage == "output" or not out or not Path(out).is_dir():
        return
    marker = Path(out) / "FAILED"
    if not marker.exists():
        marker.write_text(f"stage: {exc.stage}\nexit_code: {exc.exit_code}\nerror: {exc}\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"wavemark {args.command}: {exc.stage} failed: {exc}", file=sys.stderr)
        _mark_failed(args, exc)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
