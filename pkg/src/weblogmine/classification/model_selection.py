"""Training configuration, stratified cross-validation and model files."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .kernels import KernelSpec, median_sigma
from .rvm import RvmConfig, RvmModel, fit_rvm, rvm_from_dict, rvm_to_dict
from .svm import SvmModel, TrainingError, check_labels, fit_svm, svm_from_dict, svm_to_dict

DEFAULT_C_GRID = (0.1, 1.0, 10.0)
DEFAULT_SIGMA_FACTORS = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class TrainConfig:
    """``sigma=None`` means the median pairwise training distance.

    ``grid`` lists ``(C, sigma)`` pairs for cross-validation; when it is
    ``None`` the grid is :data:`DEFAULT_C_GRID` times the median distance
    scaled by :data:`DEFAULT_SIGMA_FACTORS`.
    """

    C: float = 1.0
    sigma: float | None = None
    cv_folds: int = 5
    grid: tuple[tuple[float, float], ...] | None = None
    tol: float = 1e-3
    max_iter: int | None = None
    seed: int = 0
    rvm: RvmConfig = field(default_factory=RvmConfig)

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be at least 2")
        if self.grid is not None:
            if not self.grid:
                raise ValueError("empty parameter grid")
            if any(not (c > 0 and s > 0) for c, s in self.grid):
                raise ValueError("grid values must be positive")

    def kernel_for(self, X) -> KernelSpec:
        return KernelSpec("laplacian", self.sigma if self.sigma is not None else median_sigma(X))

    def param_grid(self, X) -> list[tuple[float, float]]:
        if self.grid is not None:
            return [(float(c), float(s)) for c, s in self.grid]
        med = median_sigma(X)
        return [(c, f * med) for c in DEFAULT_C_GRID for f in DEFAULT_SIGMA_FACTORS]


def train_svm(X, y, cfg: TrainConfig | None = None) -> SvmModel:
    cfg = cfg or TrainConfig()
    return fit_svm(X, y, cfg.kernel_for(np.asarray(X, dtype=float)), cfg.C, cfg.tol, cfg.max_iter)


def train_rvm(X, t, cfg: TrainConfig | None = None) -> RvmModel:
    cfg = cfg or TrainConfig()
    return fit_rvm(X, t, cfg.kernel_for(np.asarray(X, dtype=float)), cfg.rvm)


def _fit(kind: str, X, y, kernel: KernelSpec, C: float, cfg: TrainConfig):
    if kind == "svm":
        return fit_svm(X, y, kernel, C, cfg.tol, cfg.max_iter)
    if kind == "rvm":
        return fit_rvm(X, y, kernel, cfg.rvm)
    raise ValueError(f"unknown classifier {kind!r}")


def canonical_order(X, y) -> np.ndarray:
    """Permutation sorting samples by label, then by feature values.

    Fold assignment is made in this order, so it does not depend on the
    order in which samples are supplied.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    _, y_codes = np.unique(np.asarray(y), return_inverse=True)
    keys = [X[:, j] for j in range(X.shape[1] - 1, -1, -1)] + [y_codes]
    return np.lexsort(keys)


def stratified_folds(X, y, k: int, seed: int = 0) -> np.ndarray:
    """Fold id in ``[0, k)`` for every sample, stratified by label."""
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if k > counts.min():
        raise TrainingError(f"{k} folds but the smallest class has {counts.min()} samples")
    order = canonical_order(X, y)
    rng = np.random.default_rng(seed)
    folds = np.empty(y.size, dtype=int)
    offset = 0
    for c in classes:
        members = order[y[order] == c]
        members = members[rng.permutation(members.size)]
        folds[members] = (offset + np.arange(members.size)) % k
        offset += members.size
    return folds


@dataclass
class CvResult:
    C: float
    sigma: float
    fold_accuracies: dict            # (C, sigma) -> list of per-fold accuracies
    model: object

    @property
    def mean_accuracies(self) -> dict:
        return {key: float(np.mean(v)) for key, v in self.fold_accuracies.items()}

    def to_dict(self) -> dict:
        return {"C": self.C, "sigma": self.sigma,
                "grid": [{"C": c, "sigma": s, "fold_accuracies": acc, "mean": float(np.mean(acc))}
                         for (c, s), acc in self.fold_accuracies.items()]}


def cross_validate(trainer: str | Callable, X, y, cfg: TrainConfig | None = None) -> CvResult:
    """Grid search over ``(C, sigma)`` by stratified k-fold accuracy.

    ``trainer`` is ``"svm"``, ``"rvm"`` or a callable
    ``(X, y, kernel, C, cfg) -> model`` whose model has ``predict``.
    The best mean accuracy wins; ties go to the smaller ``C``, then the
    smaller ``sigma``. The winner is refitted on all samples. The RVM has no
    box constraint, so for ``"rvm"`` only the distinct sigmas are tried, with
    ``C`` reported as ``cfg.C``.
    """
    cfg = cfg or TrainConfig()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y)
    check_labels(y)
    fit = trainer if callable(trainer) else (lambda X_, y_, k_, C_, cfg_: _fit(trainer, X_, y_, k_, C_, cfg_))
    folds = stratified_folds(X, y, cfg.cv_folds, cfg.seed)
    for f in range(cfg.cv_folds):
        if len(np.unique(y[folds != f])) < 2:
            raise TrainingError(f"fold {f} leaves a single class for training")
    grid = cfg.param_grid(X)
    if trainer == "rvm":
        grid = [(cfg.C, s) for s in sorted({s for _, s in grid})]
    scores: dict = {}
    for C, sigma in grid:
        kernel = KernelSpec("laplacian", sigma)
        acc = []
        for f in range(cfg.cv_folds):
            test = folds == f
            model = fit(X[~test], y[~test], kernel, C, cfg)
            acc.append(float(np.mean(model.predict(X[test]) == y[test])))
        scores[(C, sigma)] = acc
    best = min(scores, key=lambda key: (-np.mean(scores[key]), key[0], key[1]))
    model = fit(X, y, KernelSpec("laplacian", best[1]), best[0], cfg)
    return CvResult(best[0], best[1], scores, model)


# ---------------------------------------------------------------------------
# model files


def model_to_dict(model) -> dict:
    if isinstance(model, SvmModel):
        return svm_to_dict(model)
    if isinstance(model, RvmModel):
        return rvm_to_dict(model)
    raise TypeError(f"not a classifier model: {type(model).__name__}")


def model_from_dict(d: dict):
    kind = d.get("type")
    if kind == "svm":
        return svm_from_dict(d)
    if kind == "rvm":
        return rvm_from_dict(d)
    raise ValueError(f"unknown model type {kind!r}")


def save_model(model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1, sort_keys=True) + "\n",
                          encoding="utf-8")


def load_model(path: str | Path):
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def config_to_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["grid"] = [list(p) for p in cfg.grid] if cfg.grid is not None else None
    return d
