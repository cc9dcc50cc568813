"""Shared synthetic data sets for the classifier tests."""

import numpy as np

FOUR_POINTS = np.array([[-1.0, 0.0], [-1.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
FOUR_LABELS = np.array([-1, -1, 1, 1])


def separable(n=100, seed=0, gap=0.5):
    """Points in a square labelled by the sign of x, none within ``gap`` of x = 0."""
    rng = np.random.default_rng(seed)
    X = np.empty((0, 2))
    while X.shape[0] < n:
        P = rng.uniform(-3, 3, (2 * n, 2))
        X = np.vstack([X, P[np.abs(P[:, 0]) >= gap]])
    X = X[:n]
    return X, np.where(X[:, 0] > 0, 1, -1)


def three_classes(n=30, seed=0):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 4.0], [-4.0, -2.0], [4.0, -2.0]])
    X = np.vstack([rng.standard_normal((n, 2)) * 0.6 + c for c in centers])
    return X, np.repeat([1, 2, 3], n)
