"""Relevance vector machine: sparse Bayesian regression on +/-1 targets.

The design matrix is ``Phi = [1 | K(X, X)]``. Each basis function has its
own prior precision ``alpha_i``; the cycle

    Sigma = (A + beta Phi' Phi)^-1,     m = beta Sigma Phi' t
    gamma_i = 1 - alpha_i Sigma_ii
    alpha_i <- gamma_i / m_i^2,         beta <- (N - sum gamma) / ||t - Phi m||^2

is repeated, a basis being pruned for good once its precision exceeds the
threshold. Classification is the sign of the regression output.

Noise-free +/-1 targets can be interpolated exactly, which drives ``beta``
to infinity and keeps almost every basis alive. ``beta`` is therefore
capped at ``beta_max``; the default of 100 is a noise floor of 0.1 standard
deviations on the target scale.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg

from .kernels import KernelSpec, cross_gram
from .svm import TrainingError, _py, check_labels

ALPHA_MIN = 1e-12


@dataclass(frozen=True)
class RvmConfig:
    alpha_init: float = 1e-2
    beta_init: float = 1.0
    prune_threshold: float = 1e6
    tol: float = 1e-3
    max_iter: int = 500
    beta_max: float = 100.0

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not v > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class BinaryRvm:
    positive: object
    basis: list[int]           # retained basis ids: -1 is the bias, i >= 0 is training point i
    rv_points: np.ndarray      # training points of the retained kernel bases
    weights: np.ndarray        # posterior mean, bias weight first when retained
    alpha: np.ndarray
    beta: float
    n_iter: int
    converged: bool
    active_history: list[int] = field(default_factory=list)

    @property
    def has_bias(self) -> bool:
        return bool(self.basis) and self.basis[0] == -1

    @property
    def bias_weight(self) -> float:
        return float(self.weights[0]) if self.has_bias else 0.0

    def value(self, kernel: KernelSpec, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        cols = []
        if self.has_bias:
            cols.append(np.ones((X.shape[0], 1)))
        if self.rv_points.shape[0]:
            cols.append(cross_gram(kernel, X, self.rv_points))
        return np.hstack(cols) @ self.weights


def _posterior(Phi, t, alpha, beta):
    H = np.diag(alpha) + beta * (Phi.T @ Phi)
    try:
        cf = linalg.cho_factor(H, lower=True)
        Sigma = linalg.cho_solve(cf, np.eye(H.shape[0]))
    except linalg.LinAlgError:
        Sigma = linalg.pinvh(H)
    m = beta * Sigma @ (Phi.T @ t)
    return Sigma, m


def sparse_bayes(Phi, t, cfg: RvmConfig | None = None):
    """Run the re-estimation cycle on a design matrix.

    Returns ``(kept, m, alpha, beta, n_iter, converged, history)`` where
    ``kept`` indexes the surviving columns of ``Phi`` and ``history`` records
    the number of active bases after each sweep.
    """
    cfg = cfg or RvmConfig()
    Phi = np.asarray(Phi, dtype=float)
    t = np.asarray(t, dtype=float)
    n, p = Phi.shape
    active = np.arange(p)
    alpha = np.full(p, cfg.alpha_init)
    beta = min(cfg.beta_init, cfg.beta_max)
    history = [p]
    converged = False
    it = 0
    m = np.zeros(p)
    for it in range(1, cfg.max_iter + 1):
        P = Phi[:, active]
        Sigma, m = _posterior(P, t, alpha, beta)
        gamma = np.clip(1.0 - alpha * np.diag(Sigma), 0.0, 1.0)
        new_alpha = np.maximum(gamma / np.maximum(m ** 2, np.finfo(float).tiny), ALPHA_MIN)
        resid = float(np.sum((t - P @ m) ** 2))
        beta = min(cfg.beta_max, max(n - gamma.sum(), np.finfo(float).eps) / max(resid, 1.0 / cfg.beta_max))
        keep = new_alpha < cfg.prune_threshold
        change = float(np.max(np.abs(np.log(new_alpha[keep]) - np.log(alpha[keep])))) if keep.any() else 0.0
        if not keep.any():
            raise TrainingError("model collapsed; raise prune_threshold")
        active, alpha = active[keep], new_alpha[keep]
        history.append(int(active.size))
        if keep.all() and change < cfg.tol:
            converged = True
            break
    Sigma, m = _posterior(Phi[:, active], t, alpha, beta)
    return active, m, alpha, beta, it, converged, history


def unique_rows(X) -> np.ndarray:
    """Indices of the first occurrence of every distinct row, in order."""
    _, first = np.unique(X, axis=0, return_index=True)
    return np.sort(first)


def _binary(X, t, kernel: KernelSpec, cfg: RvmConfig, positive) -> BinaryRvm:
    # identical training points give identical basis functions; only the
    # first copy enters the design matrix
    distinct = unique_rows(X)
    Phi = np.hstack([np.ones((X.shape[0], 1)), cross_gram(kernel, X, X[distinct])])
    ids = np.concatenate([[-1], distinct])
    kept, m, alpha, beta, it, conv, history = sparse_bayes(Phi, t, cfg)
    basis = ids[kept].tolist()
    rv_idx = [b for b in basis if b >= 0]
    return BinaryRvm(positive, basis, X[rv_idx].copy(), m, alpha, float(beta), it, conv,
                     [1 + X.shape[0]] + history)


@dataclass
class RvmModel:
    kernel: KernelSpec
    classes: list
    machines: list[BinaryRvm]
    config: RvmConfig = field(default_factory=RvmConfig)
    strategy: str = "ovr"
    meta: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return int(self.meta["n_features"])

    @property
    def relevance_indices(self) -> list[int]:
        """Training indices used as a kernel basis by any submodel."""
        return sorted({b for m in self.machines for b in m.basis if b >= 0})

    @property
    def converged(self) -> bool:
        return all(m.converged for m in self.machines)

    def values(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return np.column_stack([m.value(self.kernel, X) for m in self.machines])

    def predict(self, X) -> np.ndarray:
        T = self.values(X)
        if len(self.classes) == 2:
            return np.where(T[:, 0] > 0, self.classes[1], self.classes[0])
        return np.asarray(self.classes)[np.argmax(T, axis=1)]


def fit_rvm(X, y, kernel: KernelSpec, cfg: RvmConfig | None = None) -> RvmModel:
    """Two classes: one regression on ``+1`` for ``classes[1]`` and ``-1`` otherwise.

    More classes: one such regression per class against the rest.
    """
    cfg = cfg or RvmConfig()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y)
    if X.shape[0] != y.size:
        raise ValueError(f"{y.size} labels for {X.shape[0]} samples")
    classes = check_labels(y)
    positives = classes[1:] if len(classes) == 2 else classes
    machines = [_binary(X, np.where(y == c, 1.0, -1.0), kernel, cfg, c) for c in positives]
    return RvmModel(kernel, classes, machines, cfg, meta={"n_features": X.shape[1]})


def predict_rvm(model: RvmModel, x) -> tuple[object, np.ndarray]:
    """Label and regression outputs of a single sample."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return model.predict(x[None, :])[0], model.values(x[None, :])[0]


def rvm_to_dict(model: RvmModel) -> dict:
    return {
        "type": "rvm",
        "kernel": model.kernel.to_dict(),
        "config": asdict(model.config),
        "strategy": model.strategy,
        "classes": [_py(c) for c in model.classes],
        "n_features": model.n_features,
        "machines": [{
            "positive": _py(m.positive),
            "basis": [int(b) for b in m.basis],
            "rv_points": m.rv_points.tolist(),
            "weights": m.weights.tolist(),
            "alpha": m.alpha.tolist(),
            "beta": m.beta,
            "n_iter": m.n_iter,
            "converged": m.converged,
            "active_history": list(m.active_history),
        } for m in model.machines],
    }


def rvm_from_dict(d: dict) -> RvmModel:
    nf = int(d["n_features"])
    machines = [BinaryRvm(m["positive"], list(m["basis"]),
                          np.array(m["rv_points"], dtype=float).reshape(-1, nf),
                          np.array(m["weights"], dtype=float), np.array(m["alpha"], dtype=float),
                          float(m["beta"]), int(m["n_iter"]), bool(m["converged"]),
                          list(m["active_history"]))
                for m in d["machines"]]
    return RvmModel(KernelSpec.from_dict(d["kernel"]), list(d["classes"]), machines,
                    RvmConfig(**d["config"]), d.get("strategy", "ovr"), {"n_features": nf})
