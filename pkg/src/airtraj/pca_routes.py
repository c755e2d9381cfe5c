"""Route clustering on principal components of augmented trajectories.

Each flight is resampled to a fixed number of points and expanded into a
450-dimensional feature vector (positions, range from the radar, range from
the top-left corner of the TRACON square, and sine/cosine of bearing and
heading). Feature groups are min-max normalised, projected onto the leading
principal components, and the projections are clustered with DBSCAN.
"""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .clustering import OUTLIER, DbscanParams, dbscan, sq_distances
from .geom import filtered_headings
from .trajdata import FlightMetadata, ResampledTrajectory, Trajectory, resample

SCHEMA_VERSION = 1

GROUPS = ("P_x", "P_y", "P_z", "R", "D", "cos_theta", "sin_theta", "cos_psi", "sin_psi")


@dataclass(frozen=True)
class AugmentConfig:
    ref_corner: tuple[float, float] = (-80_000.0, 80_000.0)
    n_samples: int = 50
    alpha: float = 0.4

    @property
    def n_features(self) -> int:
        return len(GROUPS) * self.n_samples

    def to_dict(self) -> dict:
        return {"ref_corner": list(self.ref_corner), "n_samples": self.n_samples,
                "alpha": self.alpha}

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        return cls(tuple(d["ref_corner"]), int(d["n_samples"]), float(d["alpha"]))


def _bearing(xy: np.ndarray) -> np.ndarray:
    theta = np.arctan2(xy[:, 1], xy[:, 0])
    at_origin = (xy[:, 0] == 0.0) & (xy[:, 1] == 0.0)
    if at_origin.any():
        prev = 0.0
        for i in range(theta.shape[0]):
            if at_origin[i]:
                theta[i] = prev
            prev = theta[i]
    return theta


def augment(rt: ResampledTrajectory, cfg: AugmentConfig = AugmentConfig(),
            headings: np.ndarray | None = None) -> np.ndarray:
    """Un-normalised feature vector ``[P | R | D | cos T | sin T | cos H | sin H]``.

    ``headings`` are filtered headings of the *source* track taken at the
    resampled rows; when omitted they are estimated from ``rt`` itself.
    """
    xyz = np.asarray(rt.xyz, dtype=float)
    n = cfg.n_samples
    if xyz.shape != (n, 3):
        raise ValueError(f"augment needs exactly {n} points, got {xyz.shape[0]}")
    x, y, z = xyz.T
    x_ref, y_ref = cfg.ref_corner
    r = np.sqrt(x * x + y * y + z * z)
    d = np.sqrt((x - x_ref) ** 2 + (y - y_ref) ** 2 + z * z)
    theta = _bearing(xyz[:, :2])
    if headings is None:
        headings = filtered_headings(xyz, cfg.alpha)
    psi = np.asarray(headings, dtype=float)
    if psi.shape != (n,):
        raise ValueError("headings must have one value per resampled point")
    return np.concatenate([x, y, z, r, d, np.cos(theta), np.sin(theta),
                           np.cos(psi), np.sin(psi)])


def augment_trajectory(traj: Trajectory, cfg: AugmentConfig = AugmentConfig()) -> np.ndarray:
    """Resample ``traj`` and augment it, taking headings from the full track."""
    rt = resample(traj, cfg.n_samples)
    psi = filtered_headings(traj.xyz, cfg.alpha)[rt.indices]
    return augment(rt, cfg, psi)


@dataclass(frozen=True, eq=False)
class NormalizationParams:
    """Per-group min/max; group ``g`` covers columns ``g*n:(g+1)*n``."""

    mins: np.ndarray
    maxs: np.ndarray
    n_samples: int = 50

    def _expand(self, a: np.ndarray, n_groups: int | None = None) -> np.ndarray:
        a = a if n_groups is None else a[:n_groups]
        return np.repeat(a, self.n_samples)

    def apply(self, V, n_groups: int | None = None) -> np.ndarray:
        """Normalise rows of ``V``; ``n_groups`` restricts to the leading groups."""
        V = np.asarray(V, dtype=float)
        lo = self._expand(self.mins, n_groups)
        span = self._expand(self.maxs, n_groups) - lo
        if V.shape[-1] != lo.shape[0]:
            raise ValueError(f"expected {lo.shape[0]} features, got {V.shape[-1]}")
        flat = span == 0
        out = (V - lo) / np.where(flat, 1.0, span)
        return np.where(flat, 0.5, out)

    def invert(self, U) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        lo = self._expand(self.mins)
        return U * (self._expand(self.maxs) - lo) + lo

    def to_dict(self) -> dict:
        return {"groups": list(GROUPS[:len(self.mins)]), "mins": self.mins.tolist(),
                "maxs": self.maxs.tolist(), "n_samples": self.n_samples}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationParams":
        return cls(np.array(d["mins"], dtype=float), np.array(d["maxs"], dtype=float),
                   int(d["n_samples"]))


def fit_normalization(vectors, n_samples: int = 50) -> NormalizationParams:
    V = np.asarray(vectors, dtype=float)
    if V.ndim != 2 or V.shape[0] == 0:
        raise ValueError("need at least one feature vector")
    if V.shape[1] % n_samples:
        raise ValueError("feature length is not a multiple of n_samples")
    G = V.reshape(V.shape[0], -1, n_samples)
    return NormalizationParams(G.min(axis=(0, 2)), G.max(axis=(0, 2)), n_samples)


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (p, d), rows orthonormal
    explained_variance: np.ndarray
    total_variance: float
    rank_deficient: bool = False

    @property
    def p(self) -> int:
        return self.components.shape[0]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "components": self.components.tolist(),
                "explained_variance": self.explained_variance.tolist(),
                "total_variance": self.total_variance,
                "rank_deficient": self.rank_deficient}

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        comps = np.array(d["components"], dtype=float)
        mean = np.array(d["mean"], dtype=float)
        return cls(mean, comps.reshape(-1, mean.shape[0]),
                   np.array(d["explained_variance"], dtype=float),
                   float(d["total_variance"]), bool(d["rank_deficient"]))


def fit_pca(matrix, p: int | None = 5, rank_tol: float = 1e-10) -> PcaModel:
    """Eigen-decomposition of the sample covariance; top ``p`` directions.

    ``p=None`` keeps every direction. When the data has rank below ``p``
    only the non-degenerate directions are returned and the model is
    flagged ``rank_deficient``. Each component's largest-magnitude entry is
    made positive so results are reproducible.
    """
    X = np.asarray(matrix, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("PCA needs at least 2 observations")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order].T
    total = float(np.trace(cov))
    deficient = False
    if p is not None:
        rank = int((evals > rank_tol * max(total, np.finfo(float).tiny)).sum())
        if rank < p:
            deficient = True
            p = rank
        evals, evecs = evals[:p], evecs[:p]
    pivot = np.argmax(np.abs(evecs), axis=1)
    signs = np.sign(evecs[np.arange(evecs.shape[0]), pivot])
    evecs = evecs * np.where(signs == 0, 1.0, signs)[:, None]
    return PcaModel(mean, evecs, evals, total, deficient)


def project(model: PcaModel, v) -> np.ndarray:
    """Coordinates of ``v`` (one vector or rows) on the model's components."""
    V = np.asarray(v, dtype=float)
    if V.shape[-1] != model.mean.shape[0]:
        raise ValueError(f"expected dimension {model.mean.shape[0]}, got {V.shape[-1]}")
    return (V - model.mean) @ model.components.T


def diameter(P: np.ndarray) -> float:
    if P.shape[0] < 2:
        return 0.0
    return float(np.sqrt(max(sq_distances(P[s:s + 1024], P).max()
                             for s in range(0, P.shape[0], 1024))))


@dataclass(frozen=True, eq=False)
class RouteModel:
    pca: PcaModel
    norm: NormalizationParams
    augment: AugmentConfig
    dbscan: DbscanParams
    flight_ids: list[str]
    labels: np.ndarray
    projections: np.ndarray
    core_mask: np.ndarray
    centroids: np.ndarray  # (n_clusters, n_samples, 3)
    centroid_counts: np.ndarray
    config_fingerprint: str = ""

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]

    @property
    def outlier_ids(self) -> list[str]:
        return [f for f, lab in zip(self.flight_ids, self.labels.tolist()) if lab == OUTLIER]

    @property
    def nominal_ids(self) -> list[str]:
        return [f for f, lab in zip(self.flight_ids, self.labels.tolist()) if lab != OUTLIER]

    def features(self, flights: Iterable[Trajectory]) -> np.ndarray:
        V = np.array([augment_trajectory(f, self.augment) for f in flights])
        return self.norm.apply(V.reshape(-1, self.augment.n_features))

    def transform(self, flights: Iterable[Trajectory]) -> np.ndarray:
        return project(self.pca, self.features(flights))

    def predict(self, flights: Iterable[Trajectory]) -> np.ndarray:
        """Label of the nearest training core point within eps, else OUTLIER."""
        P = self.transform(flights)
        core_idx = np.flatnonzero(self.core_mask)
        if core_idx.size == 0:
            return np.full(P.shape[0], OUTLIER, dtype=np.int64)
        d2 = sq_distances(P, self.projections[core_idx])
        nearest = np.argmin(d2, axis=1)
        ok = d2[np.arange(P.shape[0]), nearest] <= self.dbscan.eps ** 2
        return np.where(ok, self.labels[core_idx][nearest], OUTLIER).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "schema": "airtraj.route_model",
            "schema_version": SCHEMA_VERSION,
            "config_fingerprint": self.config_fingerprint,
            "augment": self.augment.to_dict(),
            "normalization": self.norm.to_dict(),
            "pca": self.pca.to_dict(),
            "dbscan": {"eps": self.dbscan.eps, "min_pts": self.dbscan.min_pts},
            "flight_ids": list(self.flight_ids),
            "labels": self.labels.tolist(),
            "projections": self.projections.tolist(),
            "core_mask": self.core_mask.tolist(),
            "centroids": self.centroids.tolist(),
            "centroid_counts": self.centroid_counts.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RouteModel":
        d = json.loads(text)
        if d.get("schema") != "airtraj.route_model":
            raise ValueError("not a route model document")
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported route model version {d.get('schema_version')}")
        aug = AugmentConfig.from_dict(d["augment"])
        p = len(d["pca"]["explained_variance"])
        return cls(
            pca=PcaModel.from_dict(d["pca"]),
            norm=NormalizationParams.from_dict(d["normalization"]),
            augment=aug,
            dbscan=DbscanParams(float(d["dbscan"]["eps"]), int(d["dbscan"]["min_pts"])),
            flight_ids=list(d["flight_ids"]),
            labels=np.array(d["labels"], dtype=np.int64),
            projections=np.array(d["projections"], dtype=float).reshape(-1, p),
            core_mask=np.array(d["core_mask"], dtype=bool),
            centroids=np.array(d["centroids"], dtype=float).reshape(-1, aug.n_samples, 3),
            centroid_counts=np.array(d["centroid_counts"], dtype=np.int64),
            config_fingerprint=d.get("config_fingerprint", ""),
        )


def fit_route_model(flights: Sequence[Trajectory], dbscan_params: DbscanParams | None = None,
                    p: int = 5, cfg: AugmentConfig = AugmentConfig(),
                    eps_fraction: float = 0.05, min_pts: int = 5,
                    config_fingerprint: str = "") -> RouteModel:
    """Augment, normalise, project on ``p`` components and cluster with DBSCAN.

    Without explicit ``dbscan_params`` the radius is ``eps_fraction`` times the
    diameter of the projected training set.
    """
    flights = list(flights)
    need = dbscan_params.min_pts if dbscan_params else min_pts
    if len(flights) < max(need, 2):
        raise ValueError(f"need at least {max(need, 2)} flights, got {len(flights)}")
    resampled = [resample(f, cfg.n_samples) for f in flights]
    V = np.array([augment(rt, cfg, filtered_headings(f.xyz, cfg.alpha)[rt.indices])
                  for f, rt in zip(flights, resampled)])
    norm = fit_normalization(V, cfg.n_samples)
    U = norm.apply(V)
    pca = fit_pca(U, p)
    P = project(pca, U)
    if dbscan_params is None:
        eps = eps_fraction * diameter(P)
        dbscan_params = DbscanParams(eps if eps > 0 else 1e-9, min_pts)
    res = dbscan(P, dbscan_params)
    xyz = np.stack([rt.xyz for rt in resampled])
    k = res.n_clusters
    centroids = np.array([xyz[res.labels == j].mean(axis=0) for j in range(k)]).reshape(
        k, cfg.n_samples, 3)
    counts = np.bincount(res.labels[res.labels != OUTLIER], minlength=k)
    return RouteModel(pca, norm, cfg, dbscan_params, [f.flight_id for f in flights],
                      res.labels, P, res.core_mask, centroids, counts, config_fingerprint)


def centroids_to_csv(model: RouteModel) -> str:
    """Centroid trajectories in track-CSV layout, ``t`` being the sample index."""
    lines = ["flight_id,t,x_m,y_m,z_m"]
    for j, c in enumerate(model.centroids.tolist()):
        for i, (x, y, z) in enumerate(c, start=1):
            lines.append(f"centroid_{j},{i},{x!r},{y!r},{z!r}")
    return "\n".join(lines) + "\n"


# -- outlier statistics ------------------------------------------------------

def _local_time(stamp: str, tz):
    dt = datetime.fromisoformat(stamp.replace("Z", "+00:00"))
    return dt.astimezone(tz) if tz is not None else dt


@dataclass
class OutlierReport:
    by_category: list[tuple[str, int, int, float]] = field(default_factory=list)
    by_day: list[tuple[str, int, int, float]] = field(default_factory=list)
    by_hour: list[tuple[str, int, int, float]] = field(default_factory=list)
    n_flights: int = 0
    n_outliers: int = 0

    @property
    def outlier_fraction(self) -> float:
        return self.n_outliers / self.n_flights if self.n_flights else 0.0

    @staticmethod
    def _csv(key: str, rows) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([key, "n_flights", "n_outliers", "frequency"])
        for g, n, o, f in rows:
            w.writerow([g, n, o, repr(f)])
        return buf.getvalue()

    def tables(self) -> dict[str, str]:
        return {"category": self._csv("category", self.by_category),
                "day": self._csv("day", self.by_day),
                "hour": self._csv("hour", self.by_hour)}


def outlier_report(model: RouteModel, metas: Iterable[FlightMetadata], tz=None) -> OutlierReport:
    """Outlier counts and frequencies by aircraft category, day and hour.

    ``tz`` is a ``tzinfo`` for local time; by default timestamps are used as
    written. Every hour 00-23 appears; categories and days only when present.
    """
    by_id = {m.flight_id: m for m in metas}
    label = dict(zip(model.flight_ids, model.labels.tolist()))
    keys = {"category": Counter(), "day": Counter(), "hour": Counter()}
    outs = {"category": Counter(), "day": Counter(), "hour": Counter()}
    n = n_out = 0
    for fid in model.flight_ids:
        meta = by_id.get(fid)
        if meta is None:
            continue
        when = _local_time(meta.start_time, tz)
        groups = {"category": meta.category, "day": when.date().isoformat(),
                  "hour": f"{when.hour:02d}"}
        is_out = label[fid] == OUTLIER
        n += 1
        n_out += is_out
        for g, v in groups.items():
            keys[g][v] += 1
            outs[g][v] += is_out

    def rows(g, universe):
        return [(v, keys[g][v], outs[g][v], outs[g][v] / keys[g][v] if keys[g][v] else 0.0)
                for v in universe]

    return OutlierReport(
        by_category=rows("category", sorted(keys["category"])),
        by_day=rows("day", sorted(keys["day"])),
        by_hour=rows("hour", [f"{h:02d}" for h in range(24)]),
        n_flights=n, n_outliers=n_out)


# -- estimators --------------------------------------------------------------

class TrajectoryAugmenter(TransformerMixin, BaseEstimator):
    """Stateless transformer: list of trajectories -> (n, 9 * n_samples) features."""

    def __init__(self, n_samples=50, ref_corner=(-80_000.0, 80_000.0), alpha=0.4):
        self.n_samples = n_samples
        self.ref_corner = ref_corner
        self.alpha = alpha

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        cfg = AugmentConfig(tuple(self.ref_corner), self.n_samples, self.alpha)
        return np.array([augment_trajectory(f, cfg) for f in X]).reshape(-1, cfg.n_features)


class GroupMinMaxScaler(TransformerMixin, BaseEstimator):
    """Min-max scaling shared across each block of ``n_samples`` columns."""

    def __init__(self, n_samples=50):
        self.n_samples = n_samples

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.norm_ = fit_normalization(X, self.n_samples)
        return self

    def transform(self, X):
        check_is_fitted(self, "norm_")
        return self.norm_.apply(check_array(X, dtype=float))

    def inverse_transform(self, X):
        check_is_fitted(self, "norm_")
        return self.norm_.invert(check_array(X, dtype=float))


class PrincipalComponents(TransformerMixin, BaseEstimator):
    def __init__(self, n_components=5):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_min_samples=2)
        self.model_ = fit_pca(X, self.n_components)
        self.components_ = self.model_.components
        self.mean_ = self.model_.mean
        self.explained_variance_ = self.model_.explained_variance
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return project(self.model_, check_array(X, dtype=float))

    def inverse_transform(self, X):
        check_is_fitted(self, "model_")
        return np.asarray(X, dtype=float) @ self.components_ + self.mean_


class RouteClusterer(ClusterMixin, BaseEstimator):
    """PCA + DBSCAN route clustering over lists of trajectories.

    ``eps=None`` picks ``eps_fraction`` of the projected-set diameter.
    After ``fit``: ``model_`` (a :class:`RouteModel`), ``labels_`` and
    ``centroids_`` of shape (n_clusters, n_samples, 3).
    """

    def __init__(self, n_components=5, eps=None, min_pts=5, eps_fraction=0.05,
                 n_samples=50, ref_corner=(-80_000.0, 80_000.0), alpha=0.4):
        self.n_components = n_components
        self.eps = eps
        self.min_pts = min_pts
        self.eps_fraction = eps_fraction
        self.n_samples = n_samples
        self.ref_corner = ref_corner
        self.alpha = alpha

    def fit(self, X: Sequence[Trajectory], y=None):
        cfg = AugmentConfig(tuple(self.ref_corner), self.n_samples, self.alpha)
        params = None if self.eps is None else DbscanParams(self.eps, self.min_pts)
        self.model_ = fit_route_model(X, params, p=self.n_components, cfg=cfg,
                                      eps_fraction=self.eps_fraction, min_pts=self.min_pts)
        self.labels_ = self.model_.labels
        self.centroids_ = self.model_.centroids
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return self.model_.transform(X)

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict(X)
