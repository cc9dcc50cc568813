"""End-to-end run: log files in, sessions, clusters, classifiers and metrics out.

Every stage writes its artifact into the run directory so it can be
reloaded by the module that produced it:

==========================  =============================================
``parse_errors.csv``        lines that could not be parsed
``cleaned.log``             retained entries, combined dialect
``cleaning_report.json``    per-rule removal counts
``sessions.csv``            session matrix
``reduced.csv``             reduced session matrix
``reduction.json``          reduction report, ICA convergence and model
``partition_*.csv``         centroids, memberships, posterior, labels
``svm.json`` ``rvm.json``   trained classifiers
``bundle.json``             page catalog, reduction model and classifiers
``metrics.json``            metrics report (deterministic)
``metrics.csv``             the same as one flat row
``manifest.json``           stage timings and counts, config, versions
==========================  =============================================
"""

from __future__ import annotations

import csv
import json
import logging
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .classification import (TrainConfig, TrainingError, cross_validate, fit_rvm, fit_svm,
                             model_from_dict, model_to_dict, save_model)
from .config import PipelineConfig
from .evaluation import MetricsReport, classification_report, f_measure, rand_index, rows_to_csv, sse
from .feature_reduction import ReductionModel, fit_reduction, write_reduced
from .fuzzy_clustering import cluster, defuzzify, neighbor_weights, write_partition
from .log_ingest import COMBINED, clean, detect_dialect, parse_lines, read_log_lines, write_log_file
from .sessionizer import SessionMatrix, build_matrix, identify_users, sessionize
from .synthetic import read_truth

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str, manifest: "RunManifest | None" = None):
        super().__init__(f"stage {stage!r} failed: {message}")
        self.stage = stage
        self.manifest = manifest


@dataclass
class StageRecord:
    name: str
    seconds: float
    input_count: int
    output_count: int
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "seconds": round(self.seconds, 6), "input_count": self.input_count,
                "output_count": self.output_count, "detail": self.detail}


@dataclass
class RunManifest:
    config: dict
    stages: list[StageRecord] = field(default_factory=list)
    artifacts: dict[str, str] = field(default_factory=dict)
    status: str = "running"
    failed_stage: str | None = None
    error: str | None = None
    versions: dict = field(default_factory=lambda: {
        "weblogmine": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
        "python": platform.python_version()})

    def stage(self, name: str) -> StageRecord:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def counts(self) -> dict[str, int]:
        return {s.name: s.output_count for s in self.stages}

    def chain_consistent(self) -> bool:
        """Every stage consumes what the previous stage produced."""
        return all(b.input_count == a.output_count for a, b in zip(self.stages, self.stages[1:]))

    def to_dict(self) -> dict:
        return {"status": self.status, "failed_stage": self.failed_stage, "error": self.error,
                "stages": [s.to_dict() for s in self.stages], "artifacts": dict(self.artifacts),
                "config": self.config, "versions": self.versions}

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _clean_json(obj):
    """Replace non-finite floats by None so the output is strict JSON."""
    if isinstance(obj, dict):
        return {str(k): _clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean_json(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean_json(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def stratified_split(labels, test_fraction: float = 0.2, seed: int = 0
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Seeded per-class split; returns sorted train and test indices.

    A class with ``n >= 2`` members sends ``max(1, round(test_fraction * n))``
    of them to the test side but always keeps at least one for training.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    test = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if members.size < 2:
            continue
        n_test = min(members.size - 1, max(1, int(round(test_fraction * members.size))))
        test.extend(rng.permutation(members)[:n_test].tolist())
    test_idx = np.array(sorted(test), dtype=int)
    train_idx = np.setdiff1d(np.arange(labels.size), test_idx)
    return train_idx, test_idx


def session_truth(matrix: SessionMatrix, truth_rows: list[dict]) -> np.ndarray:
    """Planted profile of every session row, 0 where the user is unknown.

    Users are looked up by their full identifier, or by address alone when
    the matrix was built without agent splitting.
    """
    by_user: dict[str, int] = {}
    by_ip: dict[str, dict[int, int]] = {}
    for r in truth_rows:
        if r["kind"] != "genuine":
            continue
        by_user[r["user"]] = r["profile"]
        ip = r["user"].partition("|")[0]
        by_ip.setdefault(ip, {}).setdefault(r["profile"], 0)
        by_ip[ip][r["profile"]] += 1
    out = []
    for uid, _ in matrix.row_labels:
        if str(uid) in by_user:
            out.append(by_user[str(uid)])
        elif uid.ip in by_ip:
            votes = by_ip[uid.ip]
            out.append(max(sorted(votes), key=lambda p: votes[p]))
        else:
            out.append(0)
    return np.array(out, dtype=int)


def _fit_classifier(kind: str, X, y, cfg: PipelineConfig, tcfg: TrainConfig):
    """Cross-validated when possible, otherwise with the configured C and sigma."""
    counts = np.unique(y, return_counts=True)[1]
    folds = int(min(cfg.cv_folds, counts.min()))
    if cfg.cross_validate and folds >= 2:
        res = cross_validate(kind, X, y, TrainConfig(C=tcfg.C, sigma=tcfg.sigma, cv_folds=folds,
                                                      seed=tcfg.seed, rvm=tcfg.rvm))
        return res.model, {"cv_folds": folds, "C": res.C, "sigma": res.sigma,
                           "cv_mean_accuracy": max(res.mean_accuracies.values())}
    kernel = tcfg.kernel_for(X)
    model = fit_svm(X, y, kernel, tcfg.C, tcfg.tol) if kind == "svm" else fit_rvm(X, y, kernel, tcfg.rvm)
    return model, {"cv_folds": 0, "C": tcfg.C, "sigma": kernel.sigma}


def run_pipeline(cfg: PipelineConfig) -> RunManifest:
    """Run every stage; raises :class:`PipelineError` naming the failing stage.

    Input paths are checked before anything is written. On a later failure
    the partial manifest is still written to the run directory.
    """
    cfg.validate()
    missing = cfg.missing_paths()
    if missing:
        raise PipelineError("input", f"input not found: {missing[0]}")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(cfg.snapshot())
    state: dict = {}

    def artifact(name: str) -> Path:
        manifest.artifacts[name] = name
        return out / name

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            n_in, n_out, detail = fn()
        except Exception as exc:
            manifest.status, manifest.failed_stage, manifest.error = "failed", name, str(exc)
            manifest.write(out / "manifest.json")
            raise PipelineError(name, str(exc), manifest) from exc
        manifest.stages.append(StageRecord(name, time.perf_counter() - t0, n_in, n_out, detail))
        log.info("%s: %d -> %d", name, n_in, n_out)

    def do_parse():
        lines, entries, errors = [], [], []
        for path in cfg.inputs:
            raw = read_log_lines(path)
            dialect = cfg.dialect or detect_dialect(raw)
            e, err = parse_lines(raw, dialect)
            lines += raw
            entries += e
            errors += [(str(path), x.lineno, str(x)) for x in err]
        with open(artifact("parse_errors.csv"), "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["file", "line", "error"])
            w.writerows(errors)
        state["entries"] = entries
        return len(lines), len(entries), {"parse_errors": len(errors)}

    def do_clean():
        kept, report = clean(state["entries"], cfg.cleaning_rules())
        write_log_file(artifact("cleaned.log"), kept, COMBINED)
        artifact("cleaning_report.json").write_text(report.to_text(), encoding="utf-8")
        state["cleaned"] = kept
        return report.input_count, report.retained_count, dict(report.removed_by_rule)

    def do_users():
        users = identify_users(state["cleaned"], cfg.split_by_agent)
        state["users"] = users
        return len(state["cleaned"]), len(users), {}

    def do_sessions():
        sessions = sessionize(state["users"], cfg.session_policy())
        if not sessions:
            raise ValueError("no sessions left after cleaning")
        matrix = build_matrix(sessions)
        matrix.write_csv(artifact("sessions.csv"))
        state["matrix"] = matrix
        return len(state["users"]), len(sessions), {"pages": len(matrix.pages),
                                                    "page_views": int(matrix.counts.sum())}

    def do_reduce():
        matrix = state["matrix"]
        Y, report, model, W = fit_reduction(matrix, cfg.alpha, cfg.ica_config())
        write_reduced(artifact("reduced.csv"), matrix.row_labels, Y)
        write_json(artifact("reduction.json"), {
            "report": report.to_dict(), "model": model.to_dict(),
            "ica": {"components": W.n_components, "n_iter": W.n_iter, "delta": W.delta,
                    "converged": W.converged}})
        state.update(Y=Y, reduction=model)
        return matrix.shape[0], Y.shape[0], {"input_columns": matrix.shape[1],
                                             "output_columns": Y.shape[1],
                                             "zeroed_weights": report.zeroed_weights}

    def do_cluster():
        Y = state["Y"]
        ccfg = cfg.cluster_config()
        graph = neighbor_weights(Y, ccfg.k_neighbors) if cfg.variant != "fcm" else None
        part = cluster(Y, ccfg, cfg.variant, graph)
        for name, path in write_partition(part, out).items():
            manifest.artifacts[f"partition_{name}"] = path.name
        labels = defuzzify(part)
        state.update(partition=part, labels=labels)
        return Y.shape[0], Y.shape[0], {"variant": cfg.variant, "iterations": part.n_iter,
                                        "converged": part.converged,
                                        "clusters_found": int(np.unique(labels).size)}

    def do_classify():
        Y, labels = state["Y"], state["labels"]
        if np.unique(labels).size < 2:
            raise TrainingError("clustering produced a single cluster; nothing to classify")
        train_idx, test_idx = stratified_split(labels, cfg.test_fraction, cfg.seed)
        tcfg = cfg.train_config()
        kinds = ("svm", "rvm") if cfg.classifier == "both" else (cfg.classifier,)
        models, reports, chosen = {}, {}, {}
        for kind in kinds:
            model, info = _fit_classifier(kind, Y[train_idx], labels[train_idx], cfg, tcfg)
            save_model(model, artifact(f"{kind}.json"))
            pred = model.predict(Y[test_idx]) if test_idx.size else np.zeros(0, dtype=int)
            models[kind] = model
            reports[kind] = classification_report(labels[test_idx], pred)
            chosen[kind] = info
        bundle = {"pages": list(state["matrix"].pages), "reduction": state["reduction"].to_dict(),
                  "classifiers": {k: model_to_dict(m) for k, m in models.items()},
                  "default": kinds[0]}
        write_json(artifact("bundle.json"), bundle)
        state.update(reports=reports, chosen=chosen, split=(train_idx, test_idx))
        return Y.shape[0], int(test_idx.size), {"train": int(train_idx.size), "test": int(test_idx.size),
                                                **{f"{k}_params": v for k, v in chosen.items()}}

    def do_evaluate():
        Y, labels = state["Y"], state["labels"]
        metrics = MetricsReport(sse=sse(Y, labels), classifiers=state["reports"])
        if cfg.truth is not None:
            truth = session_truth(state["matrix"], read_truth(cfg.truth))
            known = truth > 0
            if known.sum() >= 2:
                metrics.rand = rand_index(truth[known], labels[known])
                metrics.f_measure = f_measure(truth[known], labels[known]).overall
        metrics.extra = {"variant": cfg.variant, "clusters": cfg.c, "sessions": int(Y.shape[0]),
                         "reduced_columns": int(Y.shape[1]),
                         "clusters_found": int(np.unique(labels).size),
                         "classifier_params": state["chosen"]}
        metrics.check()
        write_json(artifact("metrics.json"), metrics.to_dict())
        artifact("metrics.csv").write_text(rows_to_csv([_clean_json(metrics.flat_row())]),
                                           encoding="utf-8")
        state["metrics"] = metrics
        return int(state["split"][1].size), int(state["split"][1].size), {}

    stage("parse", do_parse)
    stage("clean", do_clean)
    stage("users", do_users)
    stage("sessions", do_sessions)
    stage("reduce", do_reduce)
    stage("cluster", do_cluster)
    stage("classify", do_classify)
    stage("evaluate", do_evaluate)
    manifest.status = "ok"
    manifest.write(artifact("manifest.json"))
    return manifest


# ---------------------------------------------------------------------------
# classifying new sessions


@dataclass
class NewSessionLabels:
    row_labels: list
    labels: np.ndarray
    classifier: str
    dropped_pages: list[str]
    dropped_visits: int


def load_bundle(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def align_counts(matrix: SessionMatrix, pages: list[str]) -> tuple[np.ndarray, list[str], int]:
    """Re-index ``matrix`` onto the ``pages`` catalog.

    Returns the aligned counts, the unknown pages that were dropped and the
    number of visits they carried. Catalog pages absent from ``matrix`` get
    zero counts.
    """
    index = {p: j for j, p in enumerate(pages)}
    known = [j for j, p in enumerate(matrix.pages) if p in index]
    dropped = [p for p in matrix.pages if p not in index]
    if matrix.pages and not known:
        raise ValueError("no page of the sessions file is in the model's catalog")
    counts = np.zeros((matrix.shape[0], len(pages)), dtype=np.int64)
    for j in known:
        counts[:, index[matrix.pages[j]]] = matrix.counts[:, j]
    unknown_cols = [j for j, p in enumerate(matrix.pages) if p not in index]
    visits = int(matrix.counts[:, unknown_cols].sum()) if unknown_cols else 0
    return counts, dropped, visits


def classify_new(bundle: str | Path | dict, sessions: str | Path | SessionMatrix,
                 classifier: str | None = None) -> NewSessionLabels:
    """Assign cluster labels to new sessions with a trained run's bundle."""
    b = load_bundle(bundle) if not isinstance(bundle, dict) else bundle
    matrix = sessions if isinstance(sessions, SessionMatrix) else SessionMatrix.read_csv(sessions)
    kind = classifier or b["default"]
    if kind not in b["classifiers"]:
        raise ValueError(f"bundle has no {kind!r} classifier; available: {sorted(b['classifiers'])}")
    if matrix.shape[0] == 0:
        return NewSessionLabels([], np.zeros(0, dtype=int), kind, [], 0)
    counts, dropped, visits = align_counts(matrix, b["pages"])
    if counts.sum(axis=1).min() == 0:
        raise ValueError("a session has no visit to any catalog page")
    if dropped:
        log.warning("dropped %d unknown page(s) carrying %d visit(s)", len(dropped), visits)
    reduction = ReductionModel.from_dict(b["reduction"])
    model = model_from_dict(b["classifiers"][kind])
    labels = model.predict(reduction.transform_counts(counts))
    return NewSessionLabels(list(matrix.row_labels), labels, kind, dropped, visits)


def write_new_labels(result: NewSessionLabels, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("user,session,label\n")
        for (uid, idx), lab in zip(result.row_labels, result.labels.tolist()):
            fh.write(f"{uid},{idx},{lab}\n")


__all__ = ["run_pipeline", "RunManifest", "StageRecord", "PipelineError", "stratified_split",
           "classify_new", "align_counts", "session_truth", "write_new_labels"]
