import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import fcm_reference
from weblogmine.fuzzy_clustering import (ClusterConfig, ClusteringError, FuzzyPartition,
                                         bayes_posterior, cluster, defuzzify, fcm, fcm_objective,
                                         init_centroids, memberships, neighbor_weights, pairwise_sqdist,
                                         penalty, posterior, pfcm, ppfcm, read_labels, read_table,
                                         write_partition)


def blobs(seed=0, n=100, sep=10.0, dim=2):
    rng = np.random.default_rng(seed)
    centers = np.zeros((2, dim))
    centers[1, 0] = sep
    X = np.vstack([rng.standard_normal((n, dim)) + c for c in centers])
    return X, np.repeat([1, 2], n)


def mirrored_blobs(half_gap, n=50, seed=0):
    B = np.random.default_rng(seed).standard_normal((n, 2))
    B -= B.mean(axis=0)
    return np.vstack([B + [-half_gap, 0], -B + [half_gap, 0]])


def partition_of(M):
    M = np.asarray(M, dtype=float)
    return FuzzyPartition("fcm", M, np.zeros((M.shape[0], 1)), None, [], True, ClusterConfig(c=max(2, M.shape[0])))


# -- neighbour graph --------------------------------------------------------------


def test_collinear_neighbours():
    g = neighbor_weights(np.array([[0.0], [1.0], [10.0]]), 1)
    assert [g.neighbors(i).tolist() for i in range(3)] == [[1], [0], [1]]


def test_all_others_when_k_is_n_minus_one():
    g = neighbor_weights(np.random.default_rng(0).standard_normal((6, 2)), 5)
    assert np.array_equal(g.w, 1 - np.eye(6, dtype=np.int8))


def test_duplicate_points_tie_to_lower_index():
    X = np.array([[0.0], [5.0], [5.0], [5.0]])
    g = neighbor_weights(X, 1)
    assert g.neighbors(0).tolist() == [1]
    assert g.neighbors(3).tolist() == [1]
    assert g.neighbors(1).tolist() == [2]


@pytest.mark.parametrize("k", [0, 4, 9])
def test_bad_neighbour_count(k):
    with pytest.raises(ClusteringError):
        neighbor_weights(np.arange(4.0)[:, None], k)


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 25), st.integers(1, 5), st.integers(0, 2 ** 16))
def test_graph_rows_have_k_ones(n, k, seed):
    k = min(k, n - 1)
    X = np.random.default_rng(seed).integers(0, 4, (n, 2)).astype(float)
    g = neighbor_weights(X, k)
    assert (g.w.sum(axis=1) == k).all()
    assert (np.diag(g.w) == 0).all()
    d = pairwise_sqdist(X, X)
    for i in range(n):
        others = [j for j in range(n) if j != i]
        brute = sorted(others, key=lambda j: (d[i, j], j))[:k]
        assert g.neighbors(i).tolist() == sorted(brute)


# -- memberships and FCM ------------------------------------------------------------


def test_equidistant_point_is_shared():
    U = memberships(np.array([[4.0], [4.0]]), 2.0)
    assert U[:, 0].tolist() == [0.5, 0.5]


def test_point_on_centroid_is_crisp():
    U = memberships(np.array([[0.0, 1.0], [9.0, 4.0]]), 2.0)
    assert U[:, 0].tolist() == [1.0, 0.0]
    np.testing.assert_allclose(U[:, 1], [0.8, 0.2])


def test_membership_formula():
    d = np.array([[1.0, 2.0], [3.0, 2.0], [6.0, 8.0]])
    for q in (1.5, 2.0, 3.0):
        U = memberships(d, q)
        for k in range(2):
            for i in range(3):
                expect = 1.0 / sum((d[i, k] / d[j, k]) ** (1 / (q - 1)) for j in range(3))
                assert U[i, k] == pytest.approx(expect, rel=1e-12)


def test_four_point_line():
    X = np.array([0.0, 1.0, 9.0, 10.0])[:, None]
    part = fcm(X, ClusterConfig(c=2, tol=1e-10, max_iter=300))
    np.testing.assert_allclose(np.sort(part.V[:, 0]), [0.5, 9.5], atol=0.1)
    U_ref, V_ref = fcm_reference(X, init_centroids(X, 2, 0), 2.0, 300)
    np.testing.assert_allclose(part.V, V_ref, atol=1e-8)
    np.testing.assert_allclose(part.U, U_ref, atol=1e-8)


@pytest.mark.parametrize("seed", range(3))
def test_fcm_matches_reference_iteration(seed):
    X, _ = blobs(seed, n=15, sep=4.0)
    cfg = ClusterConfig(c=3, q=2.5, tol=1e-12, max_iter=60, seed=seed)
    part = fcm(X, cfg)
    _, V_ref = fcm_reference(X, init_centroids(X, 3, seed), 2.5, part.n_iter)
    np.testing.assert_allclose(part.V, V_ref, atol=1e-9)


def test_fcm_objective_never_increases():
    X, _ = blobs(1, n=80, sep=3.0)
    part = fcm(X, ClusterConfig(c=4, tol=1e-12, max_iter=200))
    obj = [r.objective for r in part.trace]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(obj, obj[1:]))
    assert obj[-1] == pytest.approx(fcm_objective(X, part.U, part.V, 2.0))


def test_too_many_clusters():
    with pytest.raises(ClusteringError):
        fcm(np.arange(3.0)[:, None], ClusterConfig(c=4))
    with pytest.raises(ClusteringError):
        fcm(np.zeros((5, 2)), ClusterConfig(c=2))


def test_config_validation():
    for bad in (dict(c=1), dict(q=1.0), dict(gamma=-0.1)):
        with pytest.raises(ValueError):
            ClusterConfig(**bad)


def test_init_picks_distinct_points():
    X = np.repeat(np.arange(5.0), 3)[:, None]
    V = init_centroids(X, 5, 3)
    assert sorted(V[:, 0].tolist()) == [0, 1, 2, 3, 4]


def test_fcm_scale_equivariance():
    X, _ = blobs(2, n=40, sep=5.0)
    cfg = ClusterConfig(c=3, tol=1e-9)
    a, b = fcm(X, cfg), fcm(3.5 * X, cfg)
    np.testing.assert_allclose(b.V, 3.5 * a.V, rtol=1e-6, atol=1e-9)
    assert np.array_equal(defuzzify(a), defuzzify(b))


# -- penalized variants ---------------------------------------------------------------


def test_pfcm_with_zero_gamma_is_fcm_bitwise():
    X, _ = blobs(3, n=60, sep=2.0)
    cfg = ClusterConfig(c=3, gamma=0.0, seed=5)
    a, b = fcm(X, cfg), pfcm(X, cfg)
    assert np.array_equal(a.U, b.U)
    assert np.array_equal(a.V, b.V)
    assert a.n_iter == b.n_iter


def test_one_point_per_cluster():
    X = np.array([[0.0, 0.0], [4.0, 1.0], [-2.0, 3.0]])
    for variant in ("fcm", "pfcm", "ppfcm"):
        part = cluster(X, ClusterConfig(c=3, k_neighbors=1), variant)
        assert part.converged and part.n_iter == 1
        assert sorted(map(tuple, part.U.T.tolist())) == [(0, 0, 1), (0, 1, 0), (1, 0, 0)]


def test_penalty_formula():
    U = np.array([[0.9, 0.2, 0.5], [0.1, 0.8, 0.5]])
    g = neighbor_weights(np.array([[0.0], [1.0], [3.0]]), 1)
    P = penalty(U, g, 2.0)
    for i in range(2):
        for k in range(3):
            expect = sum(g.w[k, j] * (1 - U[i, j]) ** 2 for j in range(3))
            assert P[i, k] == pytest.approx(expect)


def test_penalty_pulls_neighbours_together():
    # a point halfway between two groups, whose neighbours all sit in the right group
    X = np.array([[0.0], [0.1], [0.2], [1.05], [1.9], [2.0], [2.1]])
    graph = neighbor_weights(X, 1)
    graph.w[3] = 0
    graph.w[3, [4, 5, 6]] = 1
    cfg = ClusterConfig(c=2, gamma=2.0, k_neighbors=1)
    plain = fcm(X, cfg).U[:, 3]
    pen = pfcm(X, cfg, graph)
    right = int(np.argmax(pen.V[:, 0]))
    assert pen.U[right, 3] > 0.6
    assert abs(plain[0] - 0.5) < 0.05


# -- posterior ---------------------------------------------------------------------


def test_single_cluster_posterior_is_one():
    X = np.random.default_rng(0).standard_normal((7, 2))
    P = posterior(np.ones((1, 7)), X, X[:1])
    assert np.array_equal(P, np.ones((1, 7)))


def test_equidistant_posterior_with_equal_priors():
    X = np.array([[-1.0], [1.0], [0.0]])
    U = np.array([[0.9, 0.1, 0.5], [0.1, 0.9, 0.5]])
    P = posterior(U, X, np.array([[-1.0], [1.0]]))
    np.testing.assert_allclose(P[:, 2], [0.5, 0.5])


def test_bayes_rule_with_unequal_priors():
    P = bayes_posterior(np.zeros((2, 3)), np.array([0.75, 0.25]))
    np.testing.assert_allclose(P, [[0.75] * 3, [0.25] * 3])


def test_posterior_matches_direct_gaussian_formula():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((9, 3))
    V = X[:2] + 0.1
    U = memberships(pairwise_sqdist(V, X), 2.0)
    P = posterior(U, X, V, 2.0)
    for k in range(9):
        num = []
        for i in range(2):
            w = U[i] ** 2
            s2 = sum(w[j] * np.sum((X[j] - V[i]) ** 2) for j in range(9)) / w.sum()
            var = s2 / 3
            lik = (2 * np.pi * var) ** -1.5 * np.exp(-np.sum((X[k] - V[i]) ** 2) / (2 * var))
            num.append(U[i].mean() * lik)
        np.testing.assert_allclose(P[:, k], np.array(num) / sum(num), rtol=1e-10)


def test_ppfcm_single_step_centroid():
    X, _ = blobs(5, n=12, sep=3.0)
    cfg = ClusterConfig(c=2, gamma=0.5, k_neighbors=3, max_iter=1)
    part = ppfcm(X, cfg)
    g = neighbor_weights(X, 3)
    V0 = init_centroids(X, 2, cfg.seed)
    d0 = pairwise_sqdist(V0, X)
    U0 = memberships(d0, 2.0)
    # points sitting on an initial centroid stay crisp despite the penalty
    U1 = memberships(d0 + 0.5 * penalty(U0, g, 2.0), 2.0, singular=d0 <= 0)
    P = posterior(U1, X, V0, 2.0)
    np.testing.assert_array_equal(part.U, U1)
    np.testing.assert_array_equal(part.posterior, P)
    for i in range(2):
        w = [P[i, k] ** 2 for k in range(len(X))]
        direct = sum(w[k] * X[k] for k in range(len(X))) / sum(w)
        np.testing.assert_allclose(part.V[i], direct, rtol=1e-12)


def test_ppfcm_zero_gamma_approaches_fcm_on_mirrored_blobs():
    cfg = ClusterConfig(c=2, gamma=0.0, tol=1e-12, max_iter=1000)
    gaps = []
    for half in (10, 100, 1000):
        X = mirrored_blobs(half)
        a, b = fcm(X, cfg), ppfcm(X, cfg)
        assert np.array_equal(defuzzify(a), defuzzify(b))
        gaps.append(np.abs(np.sort(a.V, axis=0) - np.sort(b.V, axis=0)).max())
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-6


def test_ppfcm_is_defuzzified_on_the_posterior():
    X, _ = blobs(6, n=30, sep=3.0)
    part = ppfcm(X, ClusterConfig(c=2))
    assert np.array_equal(defuzzify(part), np.argmax(part.posterior, axis=0) + 1)


# -- invariants ---------------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from(["fcm", "pfcm", "ppfcm"]), st.integers(2, 4),
       st.floats(0.0, 2.0), st.sampled_from([1.5, 2.0, 3.0]))
def test_matrices_stay_column_stochastic(seed, variant, c, gamma, q):
    X = np.random.default_rng(seed).standard_normal((25, 3))
    part = cluster(X, ClusterConfig(c=c, gamma=gamma, q=q, k_neighbors=4, max_iter=30, seed=seed), variant)
    assert all(r.column_error <= 1e-9 for r in part.trace)
    for M in (part.U, part.posterior):
        if M is not None:
            assert np.abs(M.sum(axis=0) - 1).max() <= 1e-9
            assert M.min() >= 0 and M.max() <= 1
    if part.converged:
        last = part.trace[-1]
        change = max(last.delta_u, last.delta_v) if variant == "ppfcm" else last.delta_u
        assert change < part.config.tol


def test_blob_recovery():
    X, truth = blobs(0)
    part = fcm(X, ClusterConfig(c=2))
    labels = defuzzify(part)
    acc = max(np.mean(labels == truth), np.mean(labels == 3 - truth))
    assert acc >= 0.99
    means = np.array([X[truth == k].mean(axis=0) for k in (1, 2)])
    V = part.V[np.argsort(part.V[:, 0])]
    assert np.abs(V - means).max() < 0.1


# -- defuzzification and files --------------------------------------------------------


def test_argmax_label_is_one_based():
    assert defuzzify(partition_of([[0.2], [0.7], [0.1]])).tolist() == [2]


def test_ties_go_to_first_cluster():
    assert defuzzify(partition_of([[0.5], [0.5]])).tolist() == [1]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_permuting_rows_permutes_labels(seed):
    rng = np.random.default_rng(seed)
    M = rng.dirichlet(np.ones(4), size=10).T
    perm = rng.permutation(4)
    base = defuzzify(partition_of(M))
    moved = defuzzify(partition_of(M[perm]))
    inverse = np.argsort(perm)
    assert np.array_equal(moved, inverse[base - 1] + 1)


def test_partition_files_round_trip(tmp_path):
    X, _ = blobs(0, n=10)
    part = ppfcm(X, ClusterConfig(c=2, k_neighbors=3))
    paths = write_partition(part, tmp_path, "p")
    assert np.array_equal(read_labels(paths["labels"]), defuzzify(part))
    _, U = read_table(paths["memberships"])
    np.testing.assert_array_equal(U, part.U.T)
    _, V = read_table(paths["centroids"])
    np.testing.assert_array_equal(V, part.V)
    first = paths["labels"].read_text().splitlines()[0]
    assert first.startswith("# variant=ppfcm")
