"""Soft-margin kernel SVM trained by sequential minimal optimization.

The binary dual

    max  sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij
    s.t. 0 <= alpha_i <= C,  sum_i alpha_i y_i = 0

is solved two variables at a time. The working pair is the maximal
violating index ``i`` together with the partner ``j`` giving the largest
second-order decrease of the objective. Iteration stops once the KKT gap
``m(alpha) - M(alpha)`` falls below ``tol``. More than two classes are
handled one-vs-rest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelSpec, cross_gram, gram

TAU = 1e-12


class TrainingError(ValueError):
    pass


@dataclass
class BinarySolution:
    alpha: np.ndarray
    bias: float
    n_iter: int
    kkt_gap: float
    converged: bool
    objective: float


def dual_objective(alpha, y, K) -> float:
    ay = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * ay @ K @ ay)


def _violation_sets(alpha, y, C):
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    return up, low


def kkt_gap(alpha, y, K, C) -> float:
    """``max_{up} -y_t g_t - min_{low} -y_t g_t``; zero or below at optimality."""
    alpha, y = np.asarray(alpha, float), np.asarray(y, float)
    grad = y * (K @ (alpha * y)) - 1.0
    up, low = _violation_sets(alpha, y, C)
    score = -y * grad
    if not up.any() or not low.any():
        return 0.0
    return float(score[up].max() - score[low].min())


def solve_dual(K, y, C: float = 1.0, tol: float = 1e-3, max_iter: int | None = None
               ) -> BinarySolution:
    """SMO on a precomputed kernel matrix with labels in {-1, +1}."""
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    if C <= 0:
        raise ValueError("C must be positive")
    if max_iter is None:
        max_iter = max(10_000, 100 * n)
    alpha = np.zeros(n)
    grad = -np.ones(n)          # gradient of 1/2 a'Qa - e'a with Q = yy'K
    diag = np.diag(K)
    gap = np.inf
    it = 0
    converged = False
    while it < max_iter:
        up, low = _violation_sets(alpha, y, C)
        score = -y * grad
        if not up.any() or not low.any():
            gap = 0.0
            converged = True
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        m_val = score[i]
        gap = float(m_val - score[low].min())
        if gap < tol:
            converged = True
            break
        # second-order choice of the partner among violating low indices
        cand = low & (score < m_val)
        b = m_val - score[cand]
        a = diag[i] + diag[cand] - 2.0 * K[i, cand]
        a = np.where(a > 0, a, TAU)
        idx = np.flatnonzero(cand)
        j = int(idx[np.argmin(-(b * b) / a)])

        yi, yj = y[i], y[j]
        quad = diag[i] + diag[j] - 2.0 * K[i, j]
        quad = quad if quad > 0 else TAU
        old_i, old_j = alpha[i], alpha[j]
        # move by lam along alpha_i += y_i lam, alpha_j -= y_j lam
        lam = (m_val - score[j]) / quad
        lo_i, hi_i = (-old_i, C - old_i) if yi > 0 else (old_i - C, old_i)
        lo_j, hi_j = (old_j - C, old_j) if yj > 0 else (-old_j, C - old_j)
        lam = float(np.clip(lam, max(lo_i, lo_j), min(hi_i, hi_j)))
        alpha[i] = old_i + yi * lam
        alpha[j] = old_j - yj * lam
        # snap to the box to keep the index sets exact
        for t in (i, j):
            if alpha[t] < 1e-14:
                alpha[t] = 0.0
            elif alpha[t] > C - 1e-14:
                alpha[t] = C
        d_i, d_j = alpha[i] - old_i, alpha[j] - old_j
        grad += y * (K[:, i] * (yi * d_i) + K[:, j] * (yj * d_j))
        it += 1

    bias = _bias(alpha, y, grad, C)
    return BinarySolution(alpha, bias, it, float(gap), converged, dual_objective(alpha, y, K))


def _bias(alpha, y, grad, C) -> float:
    free = (alpha > 0) & (alpha < C)
    yg = y * grad
    if free.any():
        return float(-yg[free].mean())
    up, low = _violation_sets(alpha, y, C)
    # no free vector: the midpoint of the feasible interval for b
    lo = (-yg[up]).max() if up.any() else -np.inf
    hi = (-yg[low]).min() if low.any() else np.inf
    if not np.isfinite(lo):
        return float(hi)
    if not np.isfinite(hi):
        return float(lo)
    return float(0.5 * (lo + hi))


@dataclass
class BinarySvm:
    """One decision function ``f(x) = sum_i coef_i k(sv_i, x) + b``."""

    positive: object
    support: np.ndarray        # indices into the training set
    sv_points: np.ndarray
    dual_coef: np.ndarray      # alpha_i * y_i
    bias: float
    n_iter: int
    kkt_gap: float
    converged: bool
    objective: float

    def decision(self, kernel: KernelSpec, X) -> np.ndarray:
        if self.sv_points.shape[0] == 0:
            return np.full(np.atleast_2d(X).shape[0], self.bias)
        return cross_gram(kernel, X, self.sv_points) @ self.dual_coef + self.bias


@dataclass
class SvmModel:
    kernel: KernelSpec
    C: float
    classes: list
    machines: list[BinarySvm]
    strategy: str = "ovr"
    meta: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return all(m.converged for m in self.machines)

    @property
    def n_features(self) -> int:
        return self.meta.get("n_features", self.machines[0].sv_points.shape[1])

    def decision_function(self, X) -> np.ndarray:
        """``n x m`` decision values, one column per binary machine."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return np.column_stack([m.decision(self.kernel, X) for m in self.machines])

    def predict(self, X) -> np.ndarray:
        D = self.decision_function(X)
        if len(self.classes) == 2:
            return np.where(D[:, 0] > 0, self.classes[1], self.classes[0])
        return np.asarray(self.classes)[np.argmax(D, axis=1)]


def _binary(K, X, y_pm, C, tol, max_iter, positive) -> BinarySvm:
    sol = solve_dual(K, y_pm, C, tol, max_iter)
    sv = np.flatnonzero(sol.alpha > 0)
    return BinarySvm(positive, sv, X[sv].copy(), (sol.alpha * y_pm)[sv], sol.bias,
                     sol.n_iter, sol.kkt_gap, sol.converged, sol.objective)


def check_labels(y) -> list:
    classes = sorted(set(np.asarray(y).tolist()))
    if len(classes) < 2:
        raise TrainingError("need at least 2 classes to train a classifier")
    return classes


def fit_svm(X, y, kernel: KernelSpec, C: float = 1.0, tol: float = 1e-3,
            max_iter: int | None = None) -> SvmModel:
    """Two classes: one machine with ``classes[1]`` as the positive side.

    More classes: one machine per class against the rest.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y)
    if X.shape[0] != y.size:
        raise ValueError(f"{y.size} labels for {X.shape[0]} samples")
    classes = check_labels(y)
    K = gram(kernel, X)
    positives = classes[1:] if len(classes) == 2 else classes
    machines = [_binary(K, X, np.where(y == c, 1.0, -1.0), C, tol, max_iter, c)
                for c in positives]
    return SvmModel(kernel, C, classes, machines, meta={"n_features": X.shape[1]})


def predict_svm(model: SvmModel, x) -> tuple[object, np.ndarray]:
    """Label and decision values of a single sample."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    D = model.decision_function(x[None, :])
    return model.predict(x[None, :])[0], D[0]


# ---------------------------------------------------------------------------
# serialization


def _py(v):
    return v.item() if isinstance(v, np.generic) else v


def svm_to_dict(model: SvmModel) -> dict:
    return {
        "type": "svm",
        "kernel": model.kernel.to_dict(),
        "C": model.C,
        "strategy": model.strategy,
        "classes": [_py(c) for c in model.classes],
        "n_features": model.n_features,
        "machines": [{
            "positive": _py(m.positive),
            "support": m.support.tolist(),
            "sv_points": m.sv_points.tolist(),
            "dual_coef": m.dual_coef.tolist(),
            "bias": m.bias,
            "n_iter": m.n_iter,
            "kkt_gap": m.kkt_gap,
            "converged": m.converged,
            "objective": m.objective,
        } for m in model.machines],
    }


def svm_from_dict(d: dict) -> SvmModel:
    nf = int(d["n_features"])
    machines = [BinarySvm(m["positive"], np.array(m["support"], dtype=int),
                          np.array(m["sv_points"], dtype=float).reshape(-1, nf),
                          np.array(m["dual_coef"], dtype=float), float(m["bias"]),
                          int(m["n_iter"]), float(m["kkt_gap"]), bool(m["converged"]),
                          float(m["objective"]))
                for m in d["machines"]]
    return SvmModel(KernelSpec.from_dict(d["kernel"]), float(d["C"]), list(d["classes"]),
                    machines, d.get("strategy", "ovr"), {"n_features": nf})
