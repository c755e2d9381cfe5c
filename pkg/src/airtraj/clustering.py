"""k-means (Lloyd iterations with random restarts) and DBSCAN.

Both are exposed twice: as plain functions returning a :class:`ClusterResult`
and as scikit-learn compatible estimators (:class:`KMeans`, :class:`DBSCAN`).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

OUTLIER = -1

_CHUNK = 2048
# Above this dimension the grid has too many neighbour cells to pay off.
_GRID_MAX_DIM = 3


@dataclass(frozen=True)
class KmeansParams:
    k: int
    restarts: int = 10
    max_iter: int = 300
    tol: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.min_pts < 1:
            raise ValueError(f"min_pts must be >= 1, got {self.min_pts}")


@dataclass(frozen=True, eq=False)
class ClusterResult:
    labels: np.ndarray
    centroids: np.ndarray | None = None
    wcss: float | None = None
    core_mask: np.ndarray | None = None
    # per-iteration wcss of the winning k-means restart, and of every restart
    history: list[float] = field(default_factory=list)
    restart_histories: list[list[float]] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        if self.centroids is not None:
            return self.centroids.shape[0]
        lab = self.labels[self.labels != OUTLIER]
        return int(lab.max()) + 1 if lab.size else 0


def _as_points(points) -> np.ndarray:
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError("points must be a 2-D array of shape (n, d)")
    if not np.isfinite(X).all():
        raise ValueError("points contain NaN or infinity")
    return X


def sq_distances(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distances, shape (len(X), len(C))."""
    out = np.empty((X.shape[0], C.shape[0]))
    for s in range(0, X.shape[0], _CHUNK):
        diff = X[s:s + _CHUNK, None, :] - C[None, :, :]
        out[s:s + _CHUNK] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


# -- k-means -----------------------------------------------------------------

def _assign(X, centers):
    d2 = sq_distances(X, centers)
    labels = np.argmin(d2, axis=1)
    return labels, float(d2[np.arange(X.shape[0]), labels].sum())


def _update(X, labels, centers):
    k = centers.shape[0]
    counts = np.bincount(labels, minlength=k)
    new = centers.copy()
    for j in np.flatnonzero(counts):
        new[j] = X[labels == j].mean(axis=0)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        # re-seed each empty centroid on the point farthest from its centroid
        own = np.einsum("ij,ij->i", X - new[labels], X - new[labels])
        order = np.argsort(-own, kind="stable")
        for j, i in zip(empty, order):
            new[j] = X[i]
    return new


def _lloyd(X, centers, max_iter, tol):
    labels, wcss = _assign(X, centers)
    history = [wcss]
    for _ in range(max_iter):
        new_centers = _update(X, labels, centers)
        shift = float(((new_centers - centers) ** 2).sum())
        centers = new_centers
        new_labels, wcss = _assign(X, centers)
        history.append(wcss)
        stable = np.array_equal(new_labels, labels)
        labels = new_labels
        if stable or shift <= tol:
            break
    return labels, centers, wcss, history


def kmeans(points, params: KmeansParams) -> ClusterResult:
    """Best-of-``restarts`` Lloyd k-means, initialised on k distinct random points."""
    X = _as_points(points)
    n = X.shape[0]
    if n == 0:
        raise ValueError("k-means needs at least one point")
    if params.k > n:
        raise ValueError(f"k={params.k} exceeds the number of points ({n})")
    rng = np.random.default_rng(params.seed)
    best = None
    histories = []
    for _ in range(params.restarts):
        init = X[rng.choice(n, size=params.k, replace=False)]
        run = _lloyd(X, init.copy(), params.max_iter, params.tol)
        histories.append(run[3])
        if best is None or run[2] < best[2]:
            best = run
    labels, centers, wcss, history = best
    return ClusterResult(labels=labels, centroids=centers, wcss=wcss, history=history,
                         restart_histories=histories)


# -- DBSCAN ------------------------------------------------------------------

def _grid_neighbourhoods(X: np.ndarray, eps: float) -> list[np.ndarray]:
    n, d = X.shape
    cells = np.floor(X / eps).astype(np.int64)
    buckets: dict[tuple, list[int]] = {}
    for i, c in enumerate(map(tuple, cells.tolist())):
        buckets.setdefault(c, []).append(i)
    buckets_arr = {c: np.array(v, dtype=np.int64) for c, v in buckets.items()}
    offsets = np.array(np.meshgrid(*[[-1, 0, 1]] * d, indexing="ij")).reshape(d, -1).T
    eps2 = eps * eps
    out: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for c, members in buckets_arr.items():
        cand = [buckets_arr[nc] for nc in map(tuple, (np.array(c) + offsets).tolist())
                if nc in buckets_arr]
        cand = np.sort(np.concatenate(cand))
        diff = X[members, None, :] - X[None, cand, :]
        close = np.einsum("ijk,ijk->ij", diff, diff) <= eps2
        for row, i in enumerate(members):
            out[i] = cand[close[row]]
    return out


def _scan_neighbourhoods(X: np.ndarray, eps: float) -> list[np.ndarray]:
    eps2 = eps * eps
    out = []
    for s in range(0, X.shape[0], _CHUNK):
        close = sq_distances(X[s:s + _CHUNK], X) <= eps2
        out.extend(np.flatnonzero(row) for row in close)
    return out


def neighbourhoods(X: np.ndarray, eps: float, metric: str = "euclidean") -> list[np.ndarray]:
    """eps-neighbourhood of every point, the point itself included."""
    if metric == "precomputed":
        return [np.flatnonzero(row <= eps) for row in X]
    if metric != "euclidean":
        raise ValueError(f"unsupported metric {metric!r}")
    if X.shape[1] <= _GRID_MAX_DIM:
        return _grid_neighbourhoods(X, eps)
    return _scan_neighbourhoods(X, eps)


def dbscan(points, params: DbscanParams, metric: str = "euclidean") -> ClusterResult:
    """Density-based clustering; noise points get label ``OUTLIER``.

    A point is core when its eps-neighbourhood, counting itself, holds at
    least ``min_pts`` points. Border points join the first cluster that
    reaches them when clusters are grown in index order.
    """
    if metric == "precomputed":
        X = np.asarray(points, dtype=float)
        if X.size and (X.ndim != 2 or X.shape[0] != X.shape[1]):
            raise ValueError("precomputed distances must be a square matrix")
    else:
        X = _as_points(points)
    n = X.shape[0] if X.size else 0
    if n == 0:
        return ClusterResult(labels=np.empty(0, dtype=np.int64),
                             core_mask=np.empty(0, dtype=bool))

    nbrs = neighbourhoods(X, params.eps, metric)
    core = np.array([len(nb) >= params.min_pts for nb in nbrs])
    unassigned = -2
    labels = np.full(n, unassigned, dtype=np.int64)
    cid = 0
    for i in range(n):
        if labels[i] != unassigned or not core[i]:
            continue
        labels[i] = cid
        queue = deque([i])
        while queue:
            p = queue.popleft()
            for q in nbrs[p]:
                if labels[q] == unassigned:
                    labels[q] = cid
                    if core[q]:
                        queue.append(q)
        cid += 1
    labels[labels == unassigned] = OUTLIER
    return ClusterResult(labels=labels, core_mask=core)


# -- estimators --------------------------------------------------------------

class KMeans(ClusterMixin, BaseEstimator):
    """Lloyd k-means with uniform random restarts.

    Parameters
    ----------
    n_clusters : int
    n_init : int
        Number of restarts; the run with the lowest WCSS is kept.
    max_iter : int
    tol : float
        Stop early once the total squared centroid shift is at most ``tol``.
    random_state : int
    """

    def __init__(self, n_clusters=8, n_init=10, max_iter=300, tol=0.0, random_state=0):
        self.n_clusters = n_clusters
        self.n_init = n_init
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        res = kmeans(X, KmeansParams(k=self.n_clusters, restarts=self.n_init,
                                     max_iter=self.max_iter, tol=self.tol,
                                     seed=self.random_state))
        self.cluster_centers_ = res.centroids
        self.labels_ = res.labels
        self.inertia_ = res.wcss
        self.wcss_history_ = res.history
        self.n_iter_ = len(res.history) - 1
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, dtype=float)
        return _assign(X, self.cluster_centers_)[0]

    def transform(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, dtype=float)
        return np.sqrt(sq_distances(X, self.cluster_centers_))


class DBSCAN(ClusterMixin, BaseEstimator):
    """DBSCAN with a uniform-grid neighbour index for low-dimensional data.

    ``metric="precomputed"`` takes a square distance matrix instead of points.
    """

    def __init__(self, eps=0.5, min_samples=5, metric="euclidean"):
        self.eps = eps
        self.min_samples = min_samples
        self.metric = metric

    def fit(self, X, y=None):
        if self.metric != "precomputed":
            X = check_array(X, dtype=float)
        res = dbscan(X, DbscanParams(self.eps, self.min_samples), metric=self.metric)
        self.labels_ = res.labels
        self.core_sample_indices_ = np.flatnonzero(res.core_mask)
        if self.metric != "precomputed":
            self.components_ = np.asarray(X)[self.core_sample_indices_]
        return self
