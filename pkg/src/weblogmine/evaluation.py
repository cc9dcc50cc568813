"""Cluster validity and classification quality measures.

Clustering: Rand index from pair counts, within-cluster sum of squared
errors, and the class-weighted F-measure. Classification: one-vs-rest
confusion counts with sensitivity, specificity and accuracy.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PairCounts:
    """Counts over all unordered point pairs of two partitions.

    ``a``: together in both; ``b``: together in the first only;
    ``c``: together in the second only; ``d``: apart in both.
    """

    a: int
    b: int
    c: int
    d: int

    @property
    def total(self) -> int:
        return self.a + self.b + self.c + self.d


def _as_labels(labels) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ValueError("labels must be a 1-D sequence")
    return arr


def contingency(p1, p2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Contingency table ``n[i, j] = #{k : p1_k = r_i, p2_k = s_j}``.

    Returns the table and the sorted label values of each partition.
    """
    p1, p2 = _as_labels(p1), _as_labels(p2)
    if p1.shape != p2.shape:
        raise ValueError(f"length mismatch: {p1.size} vs {p2.size}")
    rows, i = np.unique(p1, return_inverse=True)
    cols, j = np.unique(p2, return_inverse=True)
    table = np.zeros((rows.size, cols.size), dtype=np.int64)
    np.add.at(table, (i, j), 1)
    return table, rows, cols


def _pairs(n):
    n = np.asarray(n, dtype=np.int64)
    return n * (n - 1) // 2


def pair_counts(p1, p2) -> PairCounts:
    table, _, _ = contingency(p1, p2)
    n = int(table.sum())
    together_both = int(_pairs(table).sum())
    together_1 = int(_pairs(table.sum(axis=1)).sum())
    together_2 = int(_pairs(table.sum(axis=0)).sum())
    a = together_both
    b = together_1 - a
    c = together_2 - a
    d = n * (n - 1) // 2 - a - b - c
    counts = PairCounts(a, b, c, d)
    assert counts.total == n * (n - 1) // 2 and min(a, b, c, d) >= 0
    return counts


def rand_index(p1, p2) -> float:
    """Fraction of point pairs on which two partitions agree, ``(a + d) / total``."""
    if _as_labels(p1).size < 2:
        raise ValueError("the Rand index needs at least 2 points")
    pc = pair_counts(p1, p2)
    return (pc.a + pc.d) / pc.total


def sse(data, labels, clusters=None) -> float:
    """Sum over clusters of squared Euclidean distances to the cluster mean.

    ``clusters`` optionally lists the expected cluster labels; a listed
    cluster without members is an error.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    labels = _as_labels(labels)
    if labels.size != X.shape[0]:
        raise ValueError(f"{labels.size} labels for {X.shape[0]} points")
    if clusters is not None:
        missing = sorted(set(np.asarray(clusters).tolist()) - set(labels.tolist()))
        if missing:
            raise ValueError(f"empty cluster(s): {missing}")
    total = 0.0
    for lab in np.unique(labels):
        members = X[labels == lab]
        total += float(((members - members.mean(axis=0)) ** 2).sum())
    return total


@dataclass
class FMeasure:
    overall: float
    table: np.ndarray          # F(i, j), classes by clusters
    classes: list
    clusters: list


def f_measure(true_classes, cluster_labels) -> FMeasure:
    """Class-weighted best-match F-measure.

    ``prec(i, j) = n_ij / n_j``, ``rec(i, j) = n_ij / n_i`` and
    ``F(i, j)`` their harmonic mean, 0 where ``n_ij = 0``. The overall
    score is ``sum_i (n_i / N) max_j F(i, j)``.
    """
    table, classes, clusters = contingency(true_classes, cluster_labels)
    n = table.sum()
    if n == 0:
        return FMeasure(0.0, np.zeros((0, 0)), [], [])
    n_i = table.sum(axis=1, keepdims=True)
    n_j = table.sum(axis=0, keepdims=True)
    # the harmonic mean of n_ij/n_j and n_ij/n_i is 2 n_ij / (n_i + n_j); integer
    # operands and one final division keep every score within [0, 1]
    F = 2.0 * table / (n_i + n_j)
    overall = float((n_i[:, 0] * F.max(axis=1)).sum() / n)
    return FMeasure(overall, F, classes.tolist(), clusters.tolist())


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def sensitivity(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else float("nan")

    @property
    def specificity(self) -> float:
        return self.tn / (self.tn + self.fp) if self.tn + self.fp else float("nan")

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else float("nan")


def confusion_counts(true, predicted, positive) -> ConfusionCounts:
    true, predicted = _as_labels(true), _as_labels(predicted)
    if true.shape != predicted.shape:
        raise ValueError(f"length mismatch: {true.size} vs {predicted.size}")
    t, p = true == positive, predicted == positive
    return ConfusionCounts(int(np.sum(t & p)), int(np.sum(~t & p)),
                           int(np.sum(~t & ~p)), int(np.sum(t & ~p)))


@dataclass
class ClassificationReport:
    per_class: dict          # label -> ConfusionCounts
    accuracy: float
    macro_sensitivity: float
    macro_specificity: float
    skipped: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_sensitivity": self.macro_sensitivity,
            "macro_specificity": self.macro_specificity,
            "per_class": {str(k): {"tp": v.tp, "fp": v.fp, "tn": v.tn, "fn": v.fn,
                                   "sensitivity": _num(v.sensitivity),
                                   "specificity": _num(v.specificity)}
                          for k, v in self.per_class.items()},
            "skipped": [str(s) for s in self.skipped],
        }


def _num(x: float):
    return None if x is None or np.isnan(x) else float(x)


def classification_report(true, predicted, classes=None) -> ClassificationReport:
    """One-vs-rest confusion counts per class plus overall accuracy.

    ``classes`` may list labels that appear in neither vector; those are
    skipped and listed in ``skipped``. Binary problems are reported the same
    way, once per class. Macro averages ignore undefined (nan) rates.
    """
    true, predicted = _as_labels(true), _as_labels(predicted)
    if true.shape != predicted.shape:
        raise ValueError(f"length mismatch: {true.size} vs {predicted.size}")
    present = set(true.tolist()) | set(predicted.tolist())
    wanted = sorted(present if classes is None else set(classes) | present)
    per_class, skipped = {}, []
    for lab in wanted:
        if lab not in present:
            skipped.append(lab)
            continue
        cc = confusion_counts(true, predicted, lab)
        assert cc.total == true.size
        per_class[lab] = cc
    accuracy = float(np.mean(true == predicted)) if true.size else float("nan")
    sens = [c.sensitivity for c in per_class.values() if not np.isnan(c.sensitivity)]
    spec = [c.specificity for c in per_class.values() if not np.isnan(c.specificity)]
    return ClassificationReport(per_class, accuracy,
                                float(np.mean(sens)) if sens else float("nan"),
                                float(np.mean(spec)) if spec else float("nan"),
                                skipped)


# ---------------------------------------------------------------------------
# reports


@dataclass
class MetricsReport:
    rand: float | None = None
    sse: float | None = None
    f_measure: float | None = None
    classifiers: dict = field(default_factory=dict)   # name -> ClassificationReport
    extra: dict = field(default_factory=dict)

    def check(self) -> None:
        for name in ("rand", "f_measure"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.sse is not None and self.sse < 0:
            raise ValueError("negative SSE")

    def to_dict(self) -> dict:
        return {
            "rand": self.rand,
            "sse": self.sse,
            "f_measure": self.f_measure,
            "classifiers": {k: v.to_dict() for k, v in sorted(self.classifiers.items())},
            **({"extra": self.extra} if self.extra else {}),
        }

    def to_json(self) -> str:
        self.check()
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def flat_row(self) -> dict:
        """One flat record (method-level scalars only) for plotting tables."""
        row = {"rand": self.rand, "sse": self.sse, "f_measure": self.f_measure}
        for name, rep in sorted(self.classifiers.items()):
            row[f"{name}_accuracy"] = rep.accuracy
            row[f"{name}_sensitivity"] = rep.macro_sensitivity
            row[f"{name}_specificity"] = rep.macro_specificity
        row.update({k: v for k, v in self.extra.items() if np.isscalar(v)})
        return row


def rows_to_csv(rows: list[dict]) -> str:
    """Render flat records as CSV with the union of keys as header."""
    keys: list[str] = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in keys})
    return buf.getvalue()
