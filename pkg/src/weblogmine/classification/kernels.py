"""Laplacian kernel ``k(x, y) = exp(-||x - y|| / sigma)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

FAMILIES = ("laplacian",)


@dataclass(frozen=True)
class KernelSpec:
    family: str = "laplacian"
    sigma: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unsupported kernel family {self.family!r}")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError("kernel width sigma must be positive")

    def to_dict(self) -> dict:
        return {"family": self.family, "sigma": float(self.sigma)}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(d["family"], float(d["sigma"]))


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(np.exp(-np.linalg.norm(x - y) / spec.sigma))


def gram(spec: KernelSpec, X) -> np.ndarray:
    """Symmetric ``N x N`` kernel matrix with an exact unit diagonal."""
    X = _as_matrix(X)
    if X.shape[0] == 0:
        return np.zeros((0, 0))
    # the condensed form is symmetric by construction; exp(0) = 1 exactly
    return squareform(np.exp(-pdist(X, "euclidean") / spec.sigma), checks=False) + np.eye(X.shape[0])


def cross_gram(spec: KernelSpec, A, B) -> np.ndarray:
    """``K[i, j] = k(a_i, b_j)``."""
    A, B = _as_matrix(A), _as_matrix(B)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return np.exp(-cdist(A, B, "euclidean") / spec.sigma)


def median_sigma(X) -> float:
    """Median pairwise Euclidean distance; 1.0 when it is zero or undefined."""
    X = _as_matrix(X)
    if X.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(X, "euclidean")))
    return med if med > 0 else 1.0
