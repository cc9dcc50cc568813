"""Reference implementations used as test oracles.

Each one is written from the defining formula, as directly as possible,
and shares no code with the package.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def rand_brute(p1, p2) -> float:
    """Fraction of point pairs on which two partitions agree."""
    n = len(p1)
    agree = total = 0
    for i, j in itertools.combinations(range(n), 2):
        same1 = p1[i] == p1[j]
        same2 = p2[i] == p2[j]
        agree += same1 == same2
        total += 1
    return agree / total


def pair_types(p1, p2) -> dict[str, int]:
    counts = {"a": 0, "b": 0, "c": 0, "d": 0}
    for i, j in itertools.combinations(range(len(p1)), 2):
        s1, s2 = p1[i] == p1[j], p2[i] == p2[j]
        key = "a" if s1 and s2 else "b" if s1 else "c" if s2 else "d"
        counts[key] += 1
    return counts


def sse_direct(X, labels) -> float:
    X = np.asarray(X, dtype=float)
    total = 0.0
    for lab in sorted(set(labels)):
        rows = [x for x, l in zip(X, labels) if l == lab]
        mean = [sum(col) / len(rows) for col in zip(*rows)]
        for x in rows:
            total += sum((a - b) ** 2 for a, b in zip(x, mean))
    return total


def f_measure_direct(classes, clusters) -> float:
    """Class-weighted best F over clusters, from explicit counts."""
    n = len(classes)
    total = 0.0
    for i in sorted(set(classes)):
        n_i = sum(1 for c in classes if c == i)
        best = 0.0
        for j in sorted(set(clusters)):
            n_j = sum(1 for c in clusters if c == j)
            n_ij = sum(1 for a, b in zip(classes, clusters) if a == i and b == j)
            if n_ij == 0:
                continue
            prec, rec = n_ij / n_j, n_ij / n_i
            best = max(best, 2 * prec * rec / (prec + rec))
        total += n_i / n * best
    return total


def fcm_reference(X, V0, q=2.0, iters=300):
    """Plain loop FCM from the textbook update equations."""
    X = [list(map(float, x)) for x in np.atleast_2d(np.asarray(X, dtype=float).reshape(len(X), -1))]
    V = [list(map(float, v)) for v in V0]
    c, n = len(V), len(X)
    U = [[0.0] * n for _ in range(c)]
    for _ in range(iters):
        for k in range(n):
            d = [sum((a - b) ** 2 for a, b in zip(X[k], V[i])) for i in range(c)]
            if min(d) == 0:
                for i in range(c):
                    U[i][k] = 1.0 if d[i] == 0 else 0.0
                continue
            for i in range(c):
                U[i][k] = 1.0 / sum((d[i] / d[j]) ** (1.0 / (q - 1)) for j in range(c))
        for i in range(c):
            w = [U[i][k] ** q for k in range(n)]
            V[i] = [sum(w[k] * X[k][t] for k in range(n)) / sum(w) for t in range(len(X[0]))]
    return np.array(U), np.array(V)


def laplacian(x, y, sigma) -> float:
    return math.exp(-math.sqrt(sum((a - b) ** 2 for a, b in zip(x, y))) / sigma)


def svm_dual_grid(K, y, C, steps=41, rounds=6):
    """Maximize the SVM dual by grid search over feasible alphas.

    The equality constraint sum(alpha * y) = 0 eliminates the last
    variable. Each round scans a full grid over the box around the current
    best point, then shrinks the box by a factor of four.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    Q = (y[:, None] * y[None, :]) * np.asarray(K, dtype=float)
    lo, hi = np.zeros(n - 1), np.full(n - 1, float(C))
    best, best_alpha = -np.inf, None
    for _ in range(rounds):
        axes = [np.linspace(l, h, steps) for l, h in zip(lo, hi)]
        head = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n - 1)
        last = -(head @ y[:-1]) * y[-1]
        ok = (last >= -1e-12) & (last <= C + 1e-12)
        A = np.column_stack([head[ok], np.clip(last[ok], 0.0, C)])
        vals = A.sum(axis=1) - 0.5 * np.einsum("ki,ij,kj->k", A, Q, A)
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, best_alpha = float(vals[k]), A[k]
        half = (hi - lo) / 8.0
        lo = np.clip(best_alpha[:-1] - half, 0.0, C)
        hi = np.clip(best_alpha[:-1] + half, 0.0, C)
    return best, best_alpha
