"""Fuzzy c-means and its neighbourhood-penalized variants.

Three variants share one alternating-optimization loop:

``fcm``
    Standard fuzzy c-means.
``pfcm``
    Penalized FCM. The squared distance of point ``k`` to cluster ``i`` is
    augmented with ``gamma * sum_j w_kj (1 - u_ij)^q``, where ``w`` is a
    k-nearest-neighbour graph, so a point is pushed towards the clusters its
    neighbours already belong to.
``ppfcm``
    Penalized posterior-probability FCM. After the penalized membership
    update, memberships are turned into Bayesian posteriors (Gaussian
    likelihood with fuzzy-weighted spread, fuzzy-proportion prior) and the
    centroids are weighted by ``posterior^q``. Defuzzification uses the
    posterior.

Memberships are stored ``c x N`` (clusters by points).
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

STOCHASTIC_ATOL = 1e-9
SPREAD_FLOOR = 1e-9
VARIANTS = ("fcm", "pfcm", "ppfcm")


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True)
class ClusterConfig:
    c: int = 3
    q: float = 2.0
    gamma: float = 0.5
    k_neighbors: int = 5
    tol: float = 1e-5
    max_iter: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.c < 2:
            raise ValueError("need at least 2 clusters")
        if not self.q > 1:
            raise ValueError("fuzzification exponent q must exceed 1")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")

    def check(self, n: int) -> None:
        if self.c > n:
            raise ClusteringError(f"c={self.c} clusters requested for {n} points")


@dataclass
class IterationRecord:
    delta_u: float
    delta_v: float
    objective: float
    column_error: float


@dataclass
class FuzzyPartition:
    variant: str
    U: np.ndarray
    V: np.ndarray
    posterior: np.ndarray | None
    trace: list[IterationRecord]
    converged: bool
    config: ClusterConfig

    @property
    def n_iter(self) -> int:
        return len(self.trace)

    def labels(self) -> np.ndarray:
        return defuzzify(self)


@dataclass
class NeighborGraph:
    w: np.ndarray
    k: int

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.w[i])


def pairwise_sqdist(X, Y) -> np.ndarray:
    return cdist(np.asarray(X, dtype=float), np.asarray(Y, dtype=float), "sqeuclidean")


def neighbor_weights(data, k: int) -> NeighborGraph:
    """Directed k-nearest-neighbour graph; ``w[k, j] = 1`` iff j is a kNN of k.

    Ties are broken towards the lower index.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not 1 <= k < n:
        raise ClusteringError(f"k_neighbors must be in [1, {n - 1}], got {k}")
    d = pairwise_sqdist(X, X)
    np.fill_diagonal(d, np.inf)
    nn = np.argsort(d, axis=1, kind="stable")[:, :k]
    w = np.zeros((n, n), dtype=np.int8)
    w[np.arange(n)[:, None], nn] = 1
    return NeighborGraph(w, k)


def init_centroids(X, c: int, seed: int) -> np.ndarray:
    """``c`` distinct data points picked by seeded greedy k-means++ seeding.

    The first point is uniform. For every further centroid ``2 + log(c)``
    candidates are drawn with probability proportional to their squared
    distance from the points already chosen, and the candidate that most
    lowers the total squared distance is kept. Falls back to uniform
    sampling among the remaining distinct rows once every distance is zero.
    """
    rng = np.random.default_rng(seed)
    _, first = np.unique(X, axis=0, return_index=True)
    pool = np.sort(first)
    if pool.size < c:
        raise ClusteringError(f"only {pool.size} distinct points for {c} clusters")
    P = X[pool]
    n_trials = 2 + int(np.log(c))
    chosen = [int(rng.integers(pool.size))]
    d2 = pairwise_sqdist(P[chosen], P)[0]
    while len(chosen) < c:
        total = d2.sum()
        if total > 0:
            cand = rng.choice(pool.size, size=n_trials, p=d2 / total)
            trial = np.minimum(d2[None, :], pairwise_sqdist(P[cand], P))
            best = int(np.argmin(trial.sum(axis=1)))
            chosen.append(int(cand[best]))
            d2 = trial[best]
        else:
            rest = np.setdiff1d(np.arange(pool.size), chosen)
            chosen.append(int(rng.choice(rest)))
    return P[chosen].copy()


def memberships(dist, q: float, singular=None) -> np.ndarray:
    """FCM membership from (possibly penalized) squared distances ``c x N``.

    ``u_ik = 1 / sum_j (dist_ik / dist_jk)^(1/(q-1))``, computed in log space.
    A point whose ``singular`` entry is True for some clusters (it sits
    exactly on their centroid) is shared equally among those clusters only.
    """
    dist = np.asarray(dist, dtype=float)
    if singular is None:
        singular = dist <= 0
    with np.errstate(divide="ignore"):
        logs = -np.log(dist) / (q - 1.0)
    logs[singular] = 0.0
    logs -= logs.max(axis=0)
    U = np.exp(logs)
    U /= U.sum(axis=0)
    hit = singular.any(axis=0)
    if hit.any():
        crisp = singular[:, hit].astype(float)
        U[:, hit] = crisp / crisp.sum(axis=0)
    return U


def centroids(X, weights, previous=None) -> np.ndarray:
    """Weighted means ``sum_k w_ik x_k / sum_k w_ik``.

    A cluster with zero total weight keeps its ``previous`` centroid.
    """
    weights = np.asarray(weights, dtype=float)
    totals = weights.sum(axis=1, keepdims=True)
    V = weights @ X / np.where(totals > 0, totals, 1.0)
    if previous is not None:
        empty = totals[:, 0] <= 0
        V[empty] = previous[empty]
    return V


def fcm_objective(X, U, V, q: float) -> float:
    return float(np.sum(U ** q * pairwise_sqdist(V, X)))


def penalty(U, graph: NeighborGraph, q: float) -> np.ndarray:
    """``P[i, k] = sum_j w_kj (1 - u_ij)^q``."""
    return (1.0 - U) ** q @ graph.w.T.astype(float)


def cluster_priors(U) -> np.ndarray:
    return U.sum(axis=1) / U.shape[1]


def cluster_spreads(U, d2, q: float) -> np.ndarray:
    """Fuzzy-weighted variance ``s_i^2`` of each cluster, floored."""
    Uq = U ** q
    tot = Uq.sum(axis=1)
    s2 = np.where(tot > 0, (Uq * d2).sum(axis=1) / np.where(tot > 0, tot, 1.0), SPREAD_FLOOR)
    return np.maximum(s2, SPREAD_FLOOR)


def bayes_posterior(log_likelihood, prior) -> np.ndarray:
    """Normalize ``L * prior`` over clusters (axis 0), in log space."""
    with np.errstate(divide="ignore"):
        logp = np.asarray(log_likelihood, dtype=float) + np.log(np.asarray(prior, dtype=float))[:, None]
    logp -= logp.max(axis=0)
    P = np.exp(logp)
    return P / P.sum(axis=0)


def posterior(U, data, V, q: float = 2.0) -> np.ndarray:
    """Posterior cluster probabilities of each point given memberships ``U``.

    Each cluster is an isotropic Gaussian around its centroid whose
    per-coordinate variance is ``s_i^2 / d``, ``s_i^2`` being the
    ``u^q``-weighted mean squared distance of the cluster. The prior is
    ``pi_i = mean_k u_ik``. The Gaussian normalizer is kept: without it the
    widest cluster has the highest likelihood for every point and absorbs
    its neighbours.
    """
    U = np.asarray(U, dtype=float)
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    dim = X.shape[1]
    d2 = pairwise_sqdist(V, X)
    var = np.maximum(cluster_spreads(U, d2, q) / dim, SPREAD_FLOOR)
    loglik = -d2 / (2.0 * var[:, None]) - 0.5 * dim * np.log(var)[:, None]
    return bayes_posterior(loglik, cluster_priors(U))


def _column_error(M) -> float:
    err = float(np.max(np.abs(M.sum(axis=0) - 1.0)))
    if err > STOCHASTIC_ATOL or M.min() < 0 or M.max() > 1 + STOCHASTIC_ATOL:
        raise ClusteringError(f"partition matrix lost column-stochasticity (error {err:.3g})")
    return err


def _run(variant: str, data, cfg: ClusterConfig, graph: NeighborGraph | None) -> FuzzyPartition:
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if not np.all(np.isfinite(X)):
        raise ClusteringError("data must be finite")
    n = X.shape[0]
    cfg.check(n)
    penalized = variant in ("pfcm", "ppfcm")
    if penalized:
        if graph is None:
            graph = neighbor_weights(X, cfg.k_neighbors)
        if graph.w.shape != (n, n):
            raise ClusteringError("neighbour graph does not match data")
    q = cfg.q

    V = init_centroids(X, cfg.c, cfg.seed)
    d2 = pairwise_sqdist(V, X)
    U = memberships(d2, q)
    P = None
    trace: list[IterationRecord] = []
    converged = False
    for _ in range(cfg.max_iter):
        if variant == "ppfcm":
            # memberships from current centroids, posterior, then centroids
            dist = d2 + cfg.gamma * penalty(U, graph, q)
            U_new = memberships(dist, q, singular=d2 <= 0)
            P = posterior(U_new, X, V, q)
            V_new = centroids(X, P ** q, V)
            d2 = pairwise_sqdist(V_new, X)
            col_err = max(_column_error(U_new), _column_error(P))
        else:
            V_new = centroids(X, U ** q, V)
            d2 = pairwise_sqdist(V_new, X)
            dist = d2 + cfg.gamma * penalty(U, graph, q) if penalized else d2
            U_new = memberships(dist, q, singular=d2 <= 0)
            col_err = _column_error(U_new)
        delta_u = float(np.max(np.abs(U_new - U)))
        delta_v = float(np.max(np.abs(V_new - V)))
        U, V = U_new, V_new
        trace.append(IterationRecord(delta_u, delta_v, fcm_objective(X, U, V, q), col_err))
        change = max(delta_u, delta_v) if variant == "ppfcm" else delta_u
        if change < cfg.tol:
            converged = True
            break
    return FuzzyPartition(variant, U, V, P, trace, converged, cfg)


def fcm(data, cfg: ClusterConfig | None = None) -> FuzzyPartition:
    """Standard fuzzy c-means; stops when ``max |dU| < cfg.tol``."""
    return _run("fcm", data, cfg or ClusterConfig(), None)


def pfcm(data, cfg: ClusterConfig | None = None, graph: NeighborGraph | None = None
         ) -> FuzzyPartition:
    """Penalized FCM. With ``gamma == 0`` the result is bitwise that of :func:`fcm`."""
    return _run("pfcm", data, cfg or ClusterConfig(), graph)


def ppfcm(data, cfg: ClusterConfig | None = None, graph: NeighborGraph | None = None
          ) -> FuzzyPartition:
    """Penalized posterior-probability FCM.

    Convergence is tested on the joint change of memberships and centroids.
    """
    return _run("ppfcm", data, cfg or ClusterConfig(), graph)


def cluster(data, cfg: ClusterConfig | None = None, variant: str = "ppfcm",
            graph: NeighborGraph | None = None) -> FuzzyPartition:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    return _run(variant, data, cfg or ClusterConfig(), graph)


def defuzzify(partition: FuzzyPartition) -> np.ndarray:
    """Maximum-membership hard labels, numbered from 1; ties go to the lower index.

    Label ``i + 1`` means row ``i`` of ``U`` (or of the posterior for PPFCM
    partitions, which are defuzzified on the posterior).
    """
    M = partition.posterior if partition.posterior is not None else partition.U
    return np.argmax(M, axis=0) + 1


# ---------------------------------------------------------------------------
# serialization


def _header(partition: FuzzyPartition) -> str:
    cfg = ", ".join(f"{k}={v}" for k, v in asdict(partition.config).items())
    return f"# variant={partition.variant}; {cfg}; iterations={partition.n_iter}; converged={partition.converged}"


def write_partition(partition: FuzzyPartition, outdir: str | Path, prefix: str = "partition") -> dict[str, Path]:
    """Write centroid, membership and label tables; returns the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "centroids": outdir / f"{prefix}_centroids.csv",
        "memberships": outdir / f"{prefix}_memberships.csv",
        "labels": outdir / f"{prefix}_labels.csv",
    }
    header = _header(partition)
    c, d = partition.V.shape
    with open(paths["centroids"], "w", newline="", encoding="utf-8") as fh:
        fh.write(header + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster", *[f"c{j}" for j in range(d)]])
        for i in range(c):
            w.writerow([i, *map(repr, partition.V[i].tolist())])
    M = partition.posterior if partition.posterior is not None else partition.U
    with open(paths["memberships"], "w", newline="", encoding="utf-8") as fh:
        fh.write(header + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point", *[f"u{i}" for i in range(c)]])
        for k in range(M.shape[1]):
            w.writerow([k, *map(repr, partition.U[:, k].tolist())])
    if partition.posterior is not None:
        paths["posterior"] = outdir / f"{prefix}_posterior.csv"
        with open(paths["posterior"], "w", newline="", encoding="utf-8") as fh:
            fh.write(header + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["point", *[f"p{i}" for i in range(c)]])
            for k in range(M.shape[1]):
                w.writerow([k, *map(repr, partition.posterior[:, k].tolist())])
    with open(paths["labels"], "w", newline="", encoding="utf-8") as fh:
        fh.write(header + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point", "label"])
        for k, lab in enumerate(defuzzify(partition).tolist()):
            w.writerow([k, lab])
    return paths


def read_table(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read one of the partition tables, skipping ``#`` comment lines."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    header, body = rows[0], rows[1:]
    return header, np.array([[float(v) for v in r[1:]] for r in body]).reshape(len(body), len(header) - 1)


def read_labels(path: str | Path) -> np.ndarray:
    _, values = read_table(path)
    return values[:, 0].astype(int)
