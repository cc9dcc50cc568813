"""Feature reduction of session patterns with ICA and weight shrinkage.

The pipeline is:

1. normalize every navigation pattern (row) to ``(x - mean) / (2 * std)``;
2. estimate an unmixing matrix with fixed-point ICA (whitening, then
   symmetric-decorrelation sweeps with a contrast nonlinearity);
3. compute the absolute mean ``a_i`` of every unmixing row;
4. zero each weight with ``|w_ij| < alpha * a_i``;
5. map the patterns through the shrunk matrix;
6. delete output columns that are identically zero.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .sessionizer import SessionMatrix, UserId

ZERO_COLUMN_ATOL = 1e-12


class ReductionError(ValueError):
    pass


@dataclass
class NormalizedMatrix:
    values: np.ndarray
    row_means: np.ndarray
    row_stds: np.ndarray
    degenerate: np.ndarray

    @property
    def shape(self):
        return self.values.shape


def normalize_rows(X) -> NormalizedMatrix:
    """Center each row and divide by twice its population standard deviation.

    Rows with zero spread come out as zero rows and are flagged in
    ``degenerate``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.size == 0:
        raise ValueError("need a non-empty 2-D matrix")
    means = X.mean(axis=1)
    stds = X.std(axis=1)
    degenerate = stds == 0
    safe = np.where(degenerate, 1.0, stds)
    values = (X - means[:, None]) / (2.0 * safe[:, None])
    values[degenerate] = 0.0
    return NormalizedMatrix(values, means, stds, degenerate)


def normalize(matrix: SessionMatrix) -> NormalizedMatrix:
    return normalize_rows(matrix.counts)


# ---------------------------------------------------------------------------
# ICA


def _logcosh(u):
    g = np.tanh(u)
    return g, 1.0 - g ** 2


def _exp(u):
    e = np.exp(-(u ** 2) / 2.0)
    return u * e, (1.0 - u ** 2) * e


def _cube(u):
    return u ** 3, 3.0 * u ** 2


NONLINEARITIES = {"logcosh": _logcosh, "tanh": _logcosh, "exp": _exp, "cube": _cube}


@dataclass
class IcaConfig:
    max_iter: int = 200
    tol: float = 1e-4
    seed: int = 0
    nonlinearity: str = "logcosh"
    rank_tol: float = 1e-10


@dataclass
class UnmixingMatrix:
    """Result of ICA on an ``N x P`` pattern matrix.

    ``matrix`` is the full ``k x P`` unmixing ``W`` acting on centered
    patterns, ``y = W (x - mean)``. It factors as ``rotation @ whitening``;
    ``rotation`` is the orthogonal ``k x k`` matrix found by the fixed-point
    iteration. ``k`` is the numerical rank of the column covariance, which is
    below ``P`` after row normalization since every normalized row sums to 0.
    """

    matrix: np.ndarray
    rotation: np.ndarray
    whitening: np.ndarray
    mean: np.ndarray
    n_iter: int
    delta: float
    converged: bool
    active_columns: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def n_components(self) -> int:
        return self.matrix.shape[0]

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) @ self.matrix.T

    def with_matrix(self, W) -> "UnmixingMatrix":
        return UnmixingMatrix(np.asarray(W, dtype=float), self.rotation, self.whitening,
                              self.mean, self.n_iter, self.delta, self.converged,
                              self.active_columns)


def whiten(X, rank_tol: float = 1e-10):
    """Whitening of the columns of ``X`` (samples in rows).

    Returns ``(Z, K, mean)`` with ``Z = (X - mean) @ K.T`` having identity
    covariance. Directions whose covariance eigenvalue falls below
    ``rank_tol`` times the largest one are discarded.
    """
    X = np.asarray(X, dtype=float)
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / X.shape[0]
    evals, evecs = linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    keep = evals > rank_tol * max(evals[0], np.finfo(float).tiny)
    evals, evecs = evals[keep], evecs[:, keep]
    # fix eigenvector signs so results do not depend on the LAPACK build
    signs = np.sign(evecs[np.argmax(np.abs(evecs), axis=0), np.arange(evecs.shape[1])])
    evecs = evecs * signs
    K = evecs.T / np.sqrt(evals)[:, None]
    return Xc @ K.T, K, mean


def _sym_decorrelation(W):
    s, u = linalg.eigh(W @ W.T)
    s = np.clip(s, np.finfo(float).tiny, None)
    return (u / np.sqrt(s)) @ u.T @ W


def estimate_unmixing(data, cfg: IcaConfig | None = None) -> UnmixingMatrix:
    """Fixed-point ICA with symmetric decorrelation.

    ``data`` is a :class:`NormalizedMatrix` or a plain ``N x P`` array
    (samples in rows, observed variables in columns). Zero-variance columns
    are dropped before whitening and get zero weight in the result.
    If the iteration does not converge within ``cfg.max_iter`` sweeps the
    iterate with the smallest change is returned with ``converged=False``.
    """
    cfg = cfg or IcaConfig()
    X = data.values if isinstance(data, NormalizedMatrix) else np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[1] < 2:
        raise ReductionError("ICA needs at least 2 columns")
    if cfg.nonlinearity not in NONLINEARITIES:
        raise ValueError(f"unknown nonlinearity {cfg.nonlinearity!r}")
    g = NONLINEARITIES[cfg.nonlinearity]

    n, p = X.shape
    active = np.flatnonzero(X.std(axis=0) > 0)
    if active.size < 2:
        raise ReductionError("fewer than 2 columns with nonzero variance")
    Z, K, mean_active = whiten(X[:, active], cfg.rank_tol)
    k = Z.shape[1]

    rng = np.random.default_rng(cfg.seed)
    W = _sym_decorrelation(rng.standard_normal((k, k)))
    best_W, best_delta = W, np.inf
    delta = np.inf
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        gwx, g_wx = g(Z @ W.T)  # n x k
        W_new = _sym_decorrelation(gwx.T @ Z / n - g_wx.mean(axis=0)[:, None] * W)
        delta = float(np.max(np.abs(np.abs(np.einsum("ij,ij->i", W_new, W)) - 1.0)))
        W = W_new
        if delta < best_delta:
            best_W, best_delta = W, delta
        if delta < cfg.tol:
            converged = True
            break
    if not converged:
        W, delta = best_W, best_delta

    full = np.zeros((k, p))
    full[:, active] = W @ K
    whitening = np.zeros((k, p))
    whitening[:, active] = K
    mean = np.zeros(p)
    mean[active] = mean_active
    return UnmixingMatrix(full, W, whitening, mean, it, float(delta), converged, active)


# ---------------------------------------------------------------------------
# shrinkage and reduction


def row_abs_means(W) -> np.ndarray:
    return np.abs(np.asarray(W, dtype=float)).mean(axis=1)


def shrink_matrix(W, alpha: float = 1.0) -> np.ndarray:
    """Zero every ``w_ij`` with ``|w_ij| < alpha * mean_j |w_ij|``."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    W = np.array(W, dtype=float)
    thresh = alpha * row_abs_means(W)
    W[np.abs(W) < thresh[:, None]] = 0.0
    return W


def shrink_weights(W: UnmixingMatrix, alpha: float = 1.0) -> UnmixingMatrix:
    return W.with_matrix(shrink_matrix(W.matrix, alpha))


@dataclass
class ReductionReport:
    alpha: float
    row_abs_means: np.ndarray
    zeroed_weights: int
    kept_columns: list[int]
    input_columns: int

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "input_columns": self.input_columns,
            "output_columns": len(self.kept_columns),
            "zeroed_weights": self.zeroed_weights,
            "kept_columns": list(self.kept_columns),
            "row_abs_means": [float(v) for v in self.row_abs_means],
        }

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def project(X, Wp) -> np.ndarray:
    """Map each row of ``X`` through ``Wp``: ``Y = X @ Wp.T``."""
    return np.asarray(X, dtype=float) @ np.asarray(Wp, dtype=float).T


def reduce(data, Wp, alpha: float = float("nan"), original=None
           ) -> tuple[np.ndarray, ReductionReport]:
    """Transform patterns with the shrunk weights and drop all-zero columns.

    ``Wp`` is an :class:`UnmixingMatrix` or a raw ``k x P`` array. ``original``
    is the unshrunk matrix, used only to count zeroed weights in the report.
    """
    X = data.values if isinstance(data, NormalizedMatrix) else np.asarray(data, dtype=float)
    M = Wp.matrix if isinstance(Wp, UnmixingMatrix) else np.asarray(Wp, dtype=float)
    if M.shape[1] != X.shape[1]:
        raise ValueError(f"weights act on {M.shape[1]} columns, data has {X.shape[1]}")
    Y = project(X, M)
    kept = np.flatnonzero(np.any(np.abs(Y) > ZERO_COLUMN_ATOL, axis=0))
    if X.size and kept.size == 0:
        raise ReductionError("reduction annihilated the data; lower alpha")
    if original is None:
        zeroed = int(np.sum(M == 0))
    else:
        original = original.matrix if isinstance(original, UnmixingMatrix) else original
        zeroed = int(np.sum((M == 0) & (np.asarray(original) != 0)))
    report = ReductionReport(alpha, row_abs_means(original if original is not None else M),
                             zeroed, kept.tolist(), X.shape[1])
    return Y[:, kept], report


@dataclass
class ReductionModel:
    """Everything needed to push new session rows through the reduction."""

    pages: list[str]
    weights: np.ndarray
    kept_columns: list[int]
    alpha: float

    def transform_counts(self, counts) -> np.ndarray:
        Xn = normalize_rows(np.atleast_2d(counts)).values
        return project(Xn, self.weights)[:, self.kept_columns]

    def to_dict(self) -> dict:
        return {"pages": list(self.pages), "weights": self.weights.tolist(),
                "kept_columns": list(self.kept_columns), "alpha": self.alpha}

    @classmethod
    def from_dict(cls, d: dict) -> "ReductionModel":
        return cls(list(d["pages"]), np.array(d["weights"], dtype=float).reshape(-1, len(d["pages"])),
                   list(d["kept_columns"]), d["alpha"])


def fit_reduction(matrix: SessionMatrix, alpha: float = 1.0, cfg: IcaConfig | None = None
                  ) -> tuple[np.ndarray, ReductionReport, ReductionModel, UnmixingMatrix]:
    """Run all six reduction steps on a session matrix."""
    normalized = normalize(matrix)
    W = estimate_unmixing(normalized, cfg)
    Wp = shrink_weights(W, alpha)
    Y, report = reduce(normalized, Wp, alpha, original=W)
    model = ReductionModel(list(matrix.pages), Wp.matrix, report.kept_columns, alpha)
    return Y, report, model, W


def write_reduced(path, row_labels, Y) -> None:
    """Reduced matrix in the session-matrix layout with columns ``c0..c{k-1}``."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "session", *[f"c{j}" for j in range(Y.shape[1])]])
        for (uid, idx), row in zip(row_labels, Y):
            w.writerow([str(uid), idx, *map(repr, row.tolist())])


def read_reduced(path):
    """Inverse of :func:`write_reduced`: ``(row_labels, Y)``."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[:2] != ["user", "session"]:
        raise ValueError(f"{path}: header must start with user,session")
    labels = [(UserId.parse(r[0]), int(r[1])) for r in body]
    Y = np.array([[float(v) for v in r[2:]] for r in body]).reshape(len(body), len(header) - 2)
    return labels, Y
