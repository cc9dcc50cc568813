"""Grouped bar charts comparing methods across cluster counts.

Each figure is written twice: a self-contained SVG and the CSV holding
exactly the plotted values (``method,clusters,value``). The SVGs carry no
timestamp and use a fixed hash salt, so reruns give identical files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .evaluation import f_measure, rand_index, sse
from .fuzzy_clustering import VARIANTS, ClusterConfig, cluster, defuzzify, neighbor_weights

TITLES = {
    "rand": "Rand index",
    "sse": "Sum of squared errors",
    "f_measure": "F-measure",
    "accuracy": "Classifier accuracy",
    "sensitivity": "Classifier sensitivity",
    "specificity": "Classifier specificity",
}


@dataclass
class Chart:
    metric: str
    svg: Path
    data: Path
    methods: list[str]
    groups: list
    heights: np.ndarray        # methods x groups, nan where a bar is missing


def _order(values):
    return sorted(set(values), key=lambda v: (isinstance(v, str), v))


def grouped_bar(rows: list[dict], metric: str, outdir: str | Path, stem: str | None = None
                ) -> Chart:
    """One grouped bar chart of ``rows`` (dicts with method, clusters, value)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = stem or metric
    methods = [m for m in VARIANTS if any(r["method"] == m for r in rows)]
    methods += _order(r["method"] for r in rows if r["method"] not in methods)
    groups = _order(r["clusters"] for r in rows)
    H = np.full((len(methods), len(groups)), np.nan)
    for r in rows:
        H[methods.index(r["method"]), groups.index(r["clusters"])] = float(r["value"])

    data_path = outdir / f"{stem}.csv"
    with open(data_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "clusters", "value"])
        for i, m in enumerate(methods):
            for j, g in enumerate(groups):
                if not np.isnan(H[i, j]):
                    w.writerow([m, g, repr(float(H[i, j]))])

    with matplotlib.rc_context({"svg.hashsalt": "weblogmine", "svg.fonttype": "path"}):
        fig = Figure(figsize=(1.6 + 1.1 * len(groups), 3.6))
        ax = fig.subplots()
        width = 0.8 / max(1, len(methods))
        x = np.arange(len(groups))
        for i, m in enumerate(methods):
            ax.bar(x + (i - (len(methods) - 1) / 2) * width, np.nan_to_num(H[i]), width, label=m)
        ax.set_xticks(x, [str(g) for g in groups])
        ax.set_xlabel("clusters")
        ax.set_ylabel(TITLES.get(metric, metric))
        ax.set_title(TITLES.get(metric, metric))
        ax.legend(frameon=False, fontsize="small")
        fig.tight_layout()
        svg_path = outdir / f"{stem}.svg"
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
    return Chart(metric, svg_path, data_path, methods, groups, H)


def read_plot_data(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        g = r["clusters"]
        out.append({"method": r["method"], "clusters": int(g) if g.lstrip("-").isdigit() else g,
                    "value": float(r["value"])})
    return out


def cluster_sweep(Y, counts, variants=VARIANTS, truth=None, base: ClusterConfig | None = None
                  ) -> list[dict]:
    """Cluster ``Y`` with every variant and cluster count.

    Returns long-format rows ``{method, clusters, metric, value}`` for SSE
    and, when ``truth`` labels are given, the Rand index and F-measure.
    """
    base = base or ClusterConfig()
    Y = np.asarray(Y, dtype=float)
    graph = neighbor_weights(Y, base.k_neighbors)
    rows = []
    for c in counts:
        cfg = ClusterConfig(c, base.q, base.gamma, base.k_neighbors, base.tol, base.max_iter, base.seed)
        for v in variants:
            labels = defuzzify(cluster(Y, cfg, v, graph if v != "fcm" else None))
            rows.append({"method": v, "clusters": c, "metric": "sse", "value": sse(Y, labels)})
            if truth is not None:
                rows.append({"method": v, "clusters": c, "metric": "rand",
                             "value": rand_index(truth, labels)})
                rows.append({"method": v, "clusters": c, "metric": "f_measure",
                             "value": f_measure(truth, labels).overall})
    return rows


def emit_plots(rows: list[dict], outdir: str | Path) -> dict[str, Chart]:
    """One figure per metric found in long-format ``rows``."""
    out = {}
    for metric in _order(r["metric"] for r in rows):
        sub = [r for r in rows if r["metric"] == metric]
        out[metric] = grouped_bar(sub, metric, outdir)
    return out
