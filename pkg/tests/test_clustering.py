import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from airtraj.clustering import (DBSCAN, OUTLIER, DbscanParams, KMeans, KmeansParams, dbscan,
                                kmeans, neighbourhoods)

from oracles import dbscan_border_ok, dbscan_core_partition, optimal_wcss


def _core_partition(labels, core):
    groups = {}
    for i in np.flatnonzero(core):
        groups.setdefault(int(labels[i]), set()).add(int(i))
    return {frozenset(g) for g in groups.values()}


def test_kmeans_two_obvious_groups():
    X = np.array([[0, 0], [0, 1], [1, 0], [10, 10], [10, 11], [11, 10]], float)
    res = kmeans(X, KmeansParams(k=2, seed=1))
    assert len(set(res.labels[:3])) == 1 and len(set(res.labels[3:])) == 1
    assert res.labels[0] != res.labels[3]
    assert res.wcss == pytest.approx(optimal_wcss(X, 2))


def test_kmeans_k_equal_n_is_exact():
    X = np.random.default_rng(0).normal(size=(6, 3))
    res = kmeans(X, KmeansParams(k=6))
    assert res.wcss == 0.0
    assert sorted(res.labels.tolist()) == list(range(6))


def test_kmeans_errors():
    with pytest.raises(ValueError):
        kmeans(np.zeros((3, 2)), KmeansParams(k=4))
    with pytest.raises(ValueError):
        kmeans(np.zeros((0, 2)), KmeansParams(k=1))
    with pytest.raises(ValueError):
        KmeansParams(k=0)
    with pytest.raises(ValueError):
        kmeans([[np.nan, 0.0]], KmeansParams(k=1))


def test_kmeans_is_deterministic_for_a_seed():
    X = np.random.default_rng(3).normal(size=(80, 2))
    a = kmeans(X, KmeansParams(k=4, seed=7))
    b = kmeans(X, KmeansParams(k=4, seed=7))
    assert np.array_equal(a.labels, b.labels) and a.wcss == b.wcss


def test_kmeans_duplicate_points_reseed_empty_clusters():
    X = np.array([[0.0, 0.0]] * 5 + [[1.0, 0.0]] * 5 + [[5.0, 5.0]])
    res = kmeans(X, KmeansParams(k=3, restarts=5, seed=0))
    assert res.n_clusters == 3
    assert res.wcss == pytest.approx(optimal_wcss(X[[0, 5, 10]], 3) + 0.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_kmeans_history_never_increases(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(int(rng.integers(5, 60)), int(rng.integers(1, 4))))
    k = int(rng.integers(1, min(6, X.shape[0]) + 1))
    res = kmeans(X, KmeansParams(k=k, restarts=3, seed=seed))
    h = np.array(res.history)
    assert np.all(np.diff(h) <= 1e-9 * max(1.0, h[0]))
    assert h[-1] == pytest.approx(res.wcss)


def test_kmeans_estimator():
    X = np.random.default_rng(1).normal(size=(40, 2))
    est = KMeans(n_clusters=3, n_init=4, random_state=2).fit(X)
    assert est.cluster_centers_.shape == (3, 2)
    assert np.array_equal(est.predict(X), est.labels_)
    assert est.transform(X).shape == (40, 3)
    assert est.get_params()["n_clusters"] == 3
    assert clone(est).get_params() == est.get_params()
    with pytest.raises(ValueError):
        est.predict(np.zeros((2, 5)))


def test_dbscan_disk_and_sparse_cases():
    rng = np.random.default_rng(0)
    a = rng.uniform(-1, 1, size=(200, 2))
    disk = a[np.hypot(a[:, 0], a[:, 1]) <= 1][:30] * 50
    res = dbscan(disk, DbscanParams(350, 10))
    assert res.n_clusters == 1 and (res.labels == 0).all()
    res = dbscan(disk[:9], DbscanParams(350, 10))
    assert res.n_clusters == 0 and (res.labels == OUTLIER).all()
    two = np.vstack([disk, disk + [10_000, 0]])
    res = dbscan(two, DbscanParams(350, 10))
    assert res.n_clusters == 2


def test_dbscan_min_pts_counts_the_point_itself():
    X = np.array([[0.0], [1.0]])
    assert dbscan(X, DbscanParams(1.0, 2)).labels.tolist() == [0, 0]
    assert dbscan(X, DbscanParams(1.0, 3)).labels.tolist() == [OUTLIER, OUTLIER]
    assert dbscan(np.array([[0.0]]), DbscanParams(1.0, 1)).labels.tolist() == [0]


def test_dbscan_border_goes_to_first_cluster():
    # 1.0 is within eps of the cores 0.0 and 2.0 but is not core itself
    X = np.array([[-0.2], [-0.1], [0.0], [1.0], [2.0], [2.1], [2.2]])
    res = dbscan(X, DbscanParams(1.0, 4))
    assert res.core_mask.tolist() == [False, False, True, False, True, False, False]
    assert res.labels.tolist() == [0, 0, 0, 0, 1, 1, 1]
    flipped = dbscan(X[::-1] * -1, DbscanParams(1.0, 4))
    assert flipped.labels.tolist() == [0, 0, 0, 0, 1, 1, 1]


def test_dbscan_empty_input():
    res = dbscan(np.zeros((0, 3)), DbscanParams(1.0, 2))
    assert res.labels.shape == (0,) and res.n_clusters == 0


def test_grid_and_scan_neighbourhoods_agree():
    from airtraj.clustering import _grid_neighbourhoods, _scan_neighbourhoods
    X = np.random.default_rng(5).normal(size=(300, 3))
    g = _grid_neighbourhoods(X, 0.4)
    s = _scan_neighbourhoods(X, 0.4)
    assert all(np.array_equal(a, b) for a, b in zip(g, s))


def test_precomputed_metric_matches_euclidean():
    X = np.random.default_rng(2).normal(size=(60, 4))
    D = np.sqrt(((X[:, None] - X[None]) ** 2).sum(-1))
    a = dbscan(X, DbscanParams(0.9, 4))
    b = dbscan(D, DbscanParams(0.9, 4), metric="precomputed")
    assert np.array_equal(a.labels, b.labels)
    with pytest.raises(ValueError):
        neighbourhoods(X, 1.0, metric="cosine")


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_dbscan_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(1, 80)), int(rng.integers(1, 6))
    X = rng.normal(size=(n, d))
    eps, min_pts = float(rng.uniform(0.2, 1.5)), int(rng.integers(1, 8))
    res = dbscan(X, DbscanParams(eps, min_pts))
    assert _core_partition(res.labels, res.core_mask) == dbscan_core_partition(X, eps, min_pts)
    assert dbscan_border_ok(X, eps, min_pts, res.labels)


def test_dbscan_estimator():
    X = np.vstack([np.zeros((5, 2)), np.ones((5, 2)) * 10, [[50, 50]]])
    est = DBSCAN(eps=1.0, min_samples=3).fit(X)
    assert est.labels_.tolist() == [0] * 5 + [1] * 5 + [OUTLIER]
    assert est.core_sample_indices_.tolist() == list(range(10))
    assert est.components_.shape == (10, 2)
    assert np.array_equal(DBSCAN(eps=1.0, min_samples=3).fit_predict(X), est.labels_)
    with pytest.raises(ValueError):
        DBSCAN(eps=-1).fit(X)
