"""Command-line interface: ``weblogmine <command> ...``.

Each stage of the pipeline is available on its own, reading and writing
the same artifacts the full ``pipeline`` command produces. Exit status is
0 on success, 1 on a stage error and 2 on bad usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from datetime import timedelta
from pathlib import Path

import numpy as np

from . import __version__
from .classification import (TrainConfig, cross_validate, load_model, save_model, train_rvm,
                             train_svm)
from .config import CLASSIFIERS, ConfigError, PipelineConfig, load_config, render_config
from .evaluation import MetricsReport, classification_report, f_measure, rand_index, rows_to_csv, sse
from .feature_reduction import IcaConfig, fit_reduction, read_reduced, write_reduced
from .fuzzy_clustering import VARIANTS, ClusterConfig, cluster, neighbor_weights, read_labels, write_partition
from .log_ingest import (COMBINED, DIALECTS, CleaningRules, clean, detect_dialect, parse_lines,
                         read_log_lines, write_log_file)
from .pipeline import PipelineError, classify_new, run_pipeline, session_truth, write_json, write_new_labels
from .plots import cluster_sweep, emit_plots, grouped_bar, read_plot_data
from .sessionizer import (NAVIGATION_ORIENTED, TIME_ORIENTED, SessionMatrix, SessionPolicy,
                          build_matrix, identify_users, sessionize)
from .synthetic import LogConfig, generate_log, planted_sessions, read_truth

log = logging.getLogger("weblogmine")


class UsageError(Exception):
    pass


def _read_entries(paths, dialect=None):
    entries, errors, n_lines = [], [], 0
    for path in paths:
        if not Path(path).exists():
            raise UsageError(f"input not found: {path}")
        lines = read_log_lines(path)
        e, err = parse_lines(lines, dialect or detect_dialect(lines))
        entries += e
        errors += err
        n_lines += len(lines)
    return entries, errors, n_lines


def _need(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"input not found: {path}")
    return path


def _echo(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# commands


def cmd_parse(a):
    entries, errors, n = _read_entries(a.logs, a.dialect)
    if a.output:
        write_log_file(a.output, entries, a.out_dialect)
    for err in errors[: a.show_errors]:
        print(err, file=sys.stderr)
    _echo({"lines": n, "entries": len(entries), "errors": len(errors)})
    return 0


def cmd_clean(a):
    entries, errors, _ = _read_entries(a.logs, a.dialect)
    base = CleaningRules()
    rules = CleaningRules(
        blocked_extensions=frozenset(a.extensions) if a.extensions else base.blocked_extensions,
        robot_agent_markers=frozenset(a.markers) if a.markers else base.robot_agent_markers,
        robots_txt_trigger=not a.no_robots_txt)
    kept, report = clean(entries, rules)
    write_log_file(a.output, kept, a.out_dialect)
    if a.report:
        Path(a.report).write_text(report.to_text(), encoding="utf-8")
    print(report.to_text(), end="")
    return 0


def cmd_sessionize(a):
    entries, errors, _ = _read_entries(a.logs, a.dialect)
    policy = SessionPolicy(a.mode, timedelta(minutes=a.timeout), timedelta(hours=a.hard_cap))
    users = identify_users(entries, by_agent=not a.ip_only)
    sessions = sessionize(users, policy)
    if not sessions:
        raise UsageError("no page views to sessionize")
    matrix = build_matrix(sessions)
    matrix.write_csv(a.output)
    _echo({"entries": len(entries), "users": len(users), "sessions": len(sessions),
           "pages": len(matrix.pages)})
    return 0


def cmd_reduce(a):
    matrix = SessionMatrix.read_csv(_need(a.sessions))
    Y, report, model, W = fit_reduction(matrix, a.alpha, IcaConfig(a.max_iter, a.tol, a.seed, a.nonlinearity))
    write_reduced(a.output, matrix.row_labels, Y)
    if a.report:
        Path(a.report).write_text(report.to_text(), encoding="utf-8")
    if a.model:
        write_json(Path(a.model), model.to_dict())
    _echo({**report.to_dict(), "ica_converged": W.converged, "ica_iterations": W.n_iter})
    return 0


def cmd_cluster(a):
    _, Y = read_reduced(_need(a.reduced))
    cfg = ClusterConfig(a.c, a.q, a.gamma, a.k_neighbors, a.tol, a.max_iter, a.seed)
    graph = neighbor_weights(Y, cfg.k_neighbors) if a.variant != "fcm" else None
    part = cluster(Y, cfg, a.variant, graph)
    paths = write_partition(part, a.output, a.prefix)
    _echo({"variant": a.variant, "iterations": part.n_iter, "converged": part.converged,
           "files": {k: str(v) for k, v in paths.items()}})
    return 0


def _train_config(a) -> TrainConfig:
    return TrainConfig(C=a.C, sigma=a.sigma, cv_folds=a.cv_folds, seed=a.seed)


def cmd_train(a):
    _, Y = read_reduced(_need(a.reduced))
    labels = read_labels(_need(a.labels))
    if labels.size != Y.shape[0]:
        raise UsageError(f"{labels.size} labels for {Y.shape[0]} sessions")
    cfg = _train_config(a)
    if a.cv:
        res = cross_validate(a.classifier, Y, labels, cfg)
        model, info = res.model, res.to_dict()
    else:
        model = (train_svm if a.classifier == "svm" else train_rvm)(Y, labels, cfg)
        info = {"C": cfg.C, "sigma": model.kernel.sigma}
    save_model(model, a.output)
    acc = float(np.mean(model.predict(Y) == labels))
    _echo({"classifier": a.classifier, "training_accuracy": acc, **info})
    return 0


def cmd_classify(a):
    result = classify_new(_need(a.bundle), _need(a.sessions), a.classifier)
    if a.output:
        write_new_labels(result, a.output)
    else:
        for (uid, idx), lab in zip(result.row_labels, result.labels.tolist()):
            print(f"{uid},{idx},{lab}")
    if result.dropped_pages:
        print(f"warning: dropped {len(result.dropped_pages)} unknown page(s) "
              f"carrying {result.dropped_visits} visit(s)", file=sys.stderr)
    return 0


def cmd_evaluate(a):
    report = MetricsReport()
    labels = read_labels(_need(a.labels))
    if a.reduced:
        _, Y = read_reduced(_need(a.reduced))
        report.sse = sse(Y, labels)
    if a.reference:
        ref = read_labels(_need(a.reference))
        report.rand = rand_index(ref, labels)
        report.f_measure = f_measure(ref, labels).overall
    if a.predicted:
        pred = read_labels(_need(a.predicted))
        report.classifiers["classifier"] = classification_report(labels, pred)
    text = report.to_json()
    if a.output:
        Path(a.output).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


PIPELINE_FLAGS = {
    # flag -> PipelineConfig attribute
    "output_dir": "output_dir", "truth": "truth", "seed": "seed", "variant": "variant",
    "c": "c", "gamma": "gamma", "q": "q", "k_neighbors": "k_neighbors", "alpha": "alpha",
    "classifier": "classifier", "C": "C", "sigma": "sigma", "mode": "session_mode",
    "timeout": "timeout_minutes",
}


def cmd_pipeline(a):
    cfg = load_config(a.config) if a.config else PipelineConfig()
    overrides = {attr: getattr(a, flag) for flag, attr in PIPELINE_FLAGS.items()
                 if getattr(a, flag) is not None}
    if a.logs:
        overrides["inputs"] = [Path(p) for p in a.logs]
    if a.no_cv:
        overrides["cross_validate"] = False
    for key in ("output_dir", "truth"):
        if key in overrides:
            overrides[key] = Path(overrides[key])
    cfg = replace(cfg, **overrides)
    if a.write_config:
        Path(a.write_config).write_text(render_config(cfg), encoding="utf-8")
    manifest = run_pipeline(cfg)
    _echo({"status": manifest.status, "output_dir": str(cfg.output_dir),
           "counts": manifest.counts})
    return 0


def cmd_plots(a):
    out = Path(a.output)
    if a.data:
        rows = read_plot_data(_need(a.data))
        chart = grouped_bar(rows, a.metric or Path(a.data).stem, out)
        _echo({"svg": str(chart.svg), "data": str(chart.data)})
        return 0
    run = Path(a.run_dir)
    _need(run / "reduced.csv")
    manifest = json.loads(_need(run / "manifest.json").read_text(encoding="utf-8"))
    conf = manifest["config"]
    labels, Y = read_reduced(run / "reduced.csv")
    truth = None
    if conf.get("truth"):
        matrix = SessionMatrix.read_csv(run / "sessions.csv")
        t = session_truth(matrix, read_truth(conf["truth"]))
        truth = t if (t > 0).all() else None
    base = ClusterConfig(2, conf["q"], conf["gamma"], conf["k_neighbors"], conf["cluster_tol"],
                         conf["cluster_max_iter"], conf["seed"])
    rows = cluster_sweep(Y, a.clusters, VARIANTS, truth, base)
    metrics = json.loads((run / "metrics.json").read_text(encoding="utf-8"))
    for name, rep in sorted(metrics.get("classifiers", {}).items()):
        rows.append({"method": name, "clusters": conf["c"], "metric": "accuracy",
                     "value": rep["accuracy"]})
    charts = emit_plots([r for r in rows if r["value"] is not None], out)
    (out / "sweep.csv").write_text(rows_to_csv(rows), encoding="utf-8")
    _echo({k: str(v.svg) for k, v in charts.items()})
    return 0


def cmd_gen_synthetic(a):
    out = Path(a.output)
    out.mkdir(parents=True, exist_ok=True)
    if a.planted:
        planted = planted_sessions(a.seed)
        matrix = planted.matrix()
        matrix.write_csv(out / "planted_sessions.csv")
        with open(out / "planted_truth.csv", "w", encoding="utf-8") as fh:
            fh.write("point,label\n")
            for k, lab in enumerate(planted.truth.tolist()):
                fh.write(f"{k},{lab}\n")
        _echo({"sessions": int(matrix.shape[0]), "pages": int(matrix.shape[1])})
        return 0
    cfg = LogConfig(n_lines=a.lines, n_noise=a.noise, n_users=a.users, seed=a.seed)
    synth = generate_log(cfg)
    synth.write(out / "synthetic_access.log", out / "synthetic_truth.csv")
    _echo(synth.kind_counts())
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weblogmine", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def logs_args(sp):
        sp.add_argument("logs", nargs="+", help="access log file(s)")
        sp.add_argument("--dialect", choices=DIALECTS, help="default: detect from the first line")

    sp = sub.add_parser("parse", help="parse logs and report errors")
    logs_args(sp)
    sp.add_argument("-o", "--output", help="re-serialized entries")
    sp.add_argument("--out-dialect", choices=DIALECTS, default=COMBINED)
    sp.add_argument("--show-errors", type=int, default=10, metavar="N")
    sp.set_defaults(func=cmd_parse)

    sp = sub.add_parser("clean", help="remove noise entries")
    logs_args(sp)
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--report", help="cleaning report (JSON)")
    sp.add_argument("--out-dialect", choices=DIALECTS, default=COMBINED)
    sp.add_argument("--extensions", nargs="+", help="blocked suffixes (replace the defaults)")
    sp.add_argument("--markers", nargs="+", help="robot agent substrings (replace the defaults)")
    sp.add_argument("--no-robots-txt", action="store_true", help="keep clients that fetch /robots.txt")
    sp.set_defaults(func=cmd_clean)

    sp = sub.add_parser("sessionize", help="build the session matrix from cleaned logs")
    logs_args(sp)
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--mode", choices=(NAVIGATION_ORIENTED, TIME_ORIENTED), default=NAVIGATION_ORIENTED)
    sp.add_argument("--timeout", type=float, default=30.0, help="minutes (default 30)")
    sp.add_argument("--hard-cap", type=float, default=24.0, help="hours (default 24)")
    sp.add_argument("--ip-only", action="store_true", help="identify users by address alone")
    sp.set_defaults(func=cmd_sessionize)

    sp = sub.add_parser("reduce", help="ICA feature reduction")
    sp.add_argument("sessions")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--report")
    sp.add_argument("--model", help="reduction model (JSON) for classifying new sessions")
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--max-iter", type=int, default=200)
    sp.add_argument("--tol", type=float, default=1e-4)
    sp.add_argument("--nonlinearity", default="logcosh", choices=("logcosh", "exp", "cube"))
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_reduce)

    sp = sub.add_parser("cluster", help="fuzzy clustering of a reduced matrix")
    sp.add_argument("reduced")
    sp.add_argument("-o", "--output", required=True, help="output directory")
    sp.add_argument("--prefix", default="partition")
    sp.add_argument("--variant", choices=VARIANTS, default="ppfcm")
    sp.add_argument("-c", type=int, default=3)
    sp.add_argument("--q", type=float, default=2.0)
    sp.add_argument("--gamma", type=float, default=0.5)
    sp.add_argument("--k-neighbors", type=int, default=5)
    sp.add_argument("--tol", type=float, default=1e-5)
    sp.add_argument("--max-iter", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_cluster)

    def train_args(sp):
        sp.add_argument("--C", type=float, default=1.0)
        sp.add_argument("--sigma", type=float, help="default: median pairwise distance")
        sp.add_argument("--cv-folds", type=int, default=5)
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("train", help="train a classifier on cluster labels")
    sp.add_argument("reduced")
    sp.add_argument("labels", help="label table, e.g. partition_labels.csv")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--classifier", choices=("svm", "rvm"), default="svm")
    sp.add_argument("--cv", action="store_true", help="grid search C and sigma")
    train_args(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("classify", help="label new sessions with a run's bundle.json")
    sp.add_argument("bundle")
    sp.add_argument("sessions", help="session matrix CSV")
    sp.add_argument("-o", "--output")
    sp.add_argument("--classifier", choices=("svm", "rvm"))
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("evaluate", help="metrics for label tables")
    sp.add_argument("labels", help="cluster labels")
    sp.add_argument("--reduced", help="data for the SSE")
    sp.add_argument("--reference", help="reference labels for Rand index and F-measure")
    sp.add_argument("--predicted", help="classifier predictions scored against the labels")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("pipeline", help="run every stage")
    sp.add_argument("logs", nargs="*", help="access log file(s); overrides the config")
    sp.add_argument("--config", help="INI configuration file")
    sp.add_argument("-o", "--output-dir")
    sp.add_argument("--truth", help="truth table of a synthetic log")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--variant", choices=VARIANTS)
    sp.add_argument("-c", type=int)
    sp.add_argument("--q", type=float)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--k-neighbors", type=int)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--classifier", choices=CLASSIFIERS)
    sp.add_argument("--C", type=float)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--mode", choices=(NAVIGATION_ORIENTED, TIME_ORIENTED))
    sp.add_argument("--timeout", type=float, help="minutes")
    sp.add_argument("--no-cv", action="store_true", help="skip cross-validation")
    sp.add_argument("--write-config", help="save the effective configuration")
    sp.set_defaults(func=cmd_pipeline)

    sp = sub.add_parser("plots", help="comparison charts")
    sp.add_argument("run_dir", nargs="?", help="directory of a pipeline run")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--clusters", type=int, nargs="+", default=[2, 3, 4, 5, 6])
    sp.add_argument("--data", help="redraw one chart from its data CSV")
    sp.add_argument("--metric", help="axis label for --data")
    sp.set_defaults(func=cmd_plots)

    sp = sub.add_parser("gen-synthetic", help="write a synthetic log and its truth table")
    sp.add_argument("-o", "--output", required=True, help="output directory")
    sp.add_argument("--lines", type=int, default=1000)
    sp.add_argument("--noise", type=int, default=300)
    sp.add_argument("--users", type=int, default=45)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--planted", action="store_true", help="write a planted session matrix instead")
    sp.set_defaults(func=cmd_gen_synthetic)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if a.command == "plots" and not (a.run_dir or a.data):
        parser.error("plots needs a run directory or --data")
    try:
        return a.func(a)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
