"""Waypoint-based route clustering.

Turning points are grouped into learned waypoints (k-means boxes when they
are sparse, DBSCAN convex hulls when they are dense), each trajectory is
rewritten as the ordered list of waypoints it flies over, and those
sequences are clustered by normalised longest-common-subsequence similarity.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .clustering import OUTLIER, DbscanParams, KmeansParams, dbscan, kmeans
from .geom import (Polygon2D, TurningConfig, TurningPoint, convex_hull,
                   detect_turning_points, points_in_polygon)
from .trajdata import Trajectory

SPARSE_BOX = "sparse_box"
DENSE_HULL = "dense_hull"

MIN_HALF_RADIAL_M = 250.0
MIN_HALF_ANGLE_RAD = np.deg2rad(0.5)
# keeps the chord-edged box convex and wrapped around its centre
_MAX_HALF_ANGLE_RAD = np.pi / 3


@dataclass(frozen=True)
class Waypoint:
    id: int
    shape: Polygon2D
    center: tuple[float, float]
    source: str

    def to_dict(self) -> dict:
        return {"id": self.id, "source": self.source,
                "center": [float(c) for c in self.center],
                "vertices": self.shape.vertices.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Waypoint":
        verts = np.asarray(d["vertices"], dtype=float)
        center = d.get("center")
        if center is None:
            center = verts.mean(axis=0).tolist()
        return cls(int(d["id"]), Polygon2D(verts), (float(center[0]), float(center[1])),
                   d["source"])


@dataclass(frozen=True)
class WaypointSequence:
    flight_id: str
    waypoint_ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.waypoint_ids)


@dataclass(frozen=True, eq=False)
class SequenceClusterResult:
    labels: np.ndarray
    representatives: dict[int, WaypointSequence]


def _tp_xy(tps: Sequence[TurningPoint]) -> np.ndarray:
    return np.array([[tp.position.x, tp.position.y] for tp in tps], dtype=float).reshape(-1, 2)


def circular_stats(theta: np.ndarray) -> tuple[float, float]:
    """Circular mean and circular standard deviation ``sqrt(-2 ln R)``."""
    c, s = np.cos(theta).mean(), np.sin(theta).mean()
    r = min(1.0, float(np.hypot(c, s)))
    std = float(np.sqrt(-2.0 * np.log(r))) if r > 0 else np.pi
    return float(np.arctan2(s, c)), std


def polar_box(xy: np.ndarray) -> tuple[Polygon2D, tuple[float, float]]:
    """Radar-centred box spanning two standard deviations in r and theta."""
    r = np.hypot(xy[:, 0], xy[:, 1])
    theta = np.arctan2(xy[:, 1], xy[:, 0])
    r_m = float(r.mean())
    th_m, std_th = circular_stats(theta)
    half_r = max(2.0 * float(r.std()), MIN_HALF_RADIAL_M)
    half_th = min(max(2.0 * std_th, MIN_HALF_ANGLE_RAD), _MAX_HALF_ANGLE_RAD)
    r_in = max(r_m - half_r, 0.0)
    # outer chord must clear the centre point, which sits on the arc
    r_out = max(r_m + half_r, r_m / np.cos(half_th))
    corners = [(r_out, th_m + half_th), (r_in, th_m + half_th),
               (r_in, th_m - half_th), (r_out, th_m - half_th)]
    pts = np.array([[rr * np.cos(tt), rr * np.sin(tt)] for rr, tt in corners])
    center = (r_m * np.cos(th_m), r_m * np.sin(th_m))
    return convex_hull(pts), (float(center[0]), float(center[1]))


def build_waypoints_sparse(tps: Sequence[TurningPoint], k: int, seed: int = 0,
                           restarts: int = 10) -> list[Waypoint]:
    """One polar box per k-means cluster of turning-point positions."""
    xy = _tp_xy(tps)
    if xy.shape[0] < k:
        raise ValueError(f"need at least k={k} turning points, got {xy.shape[0]}")
    res = kmeans(xy, KmeansParams(k=k, restarts=restarts, seed=seed))
    out = []
    for j in range(k):
        members = xy[res.labels == j]
        if members.shape[0] == 0:
            continue
        shape, center = polar_box(members)
        out.append(Waypoint(len(out), shape, center, SPARSE_BOX))
    return out


def _hull_with_floor(xy: np.ndarray, pad: float) -> Polygon2D:
    try:
        return convex_hull(xy)
    except ValueError:
        # collinear or coincident members: hull of small squares around each point
        offs = np.array([[-pad, -pad], [pad, -pad], [pad, pad], [-pad, pad]])
        return convex_hull((xy[:, None, :] + offs[None]).reshape(-1, 2))


def build_waypoints_dense(tps: Sequence[TurningPoint],
                          params: DbscanParams = DbscanParams(350.0, 10)) -> list[Waypoint]:
    """Convex hull of each DBSCAN cluster of turning points; noise is dropped."""
    xy = _tp_xy(tps)
    if xy.shape[0] == 0:
        return []
    res = dbscan(xy, params)
    out = []
    for j in range(res.n_clusters):
        members = xy[res.labels == j]
        shape = _hull_with_floor(members, pad=1.0)
        c = members.mean(axis=0)
        out.append(Waypoint(j, shape, (float(c[0]), float(c[1])), DENSE_HULL))
    return out


def trajectory_to_sequence(traj: Trajectory, waypoints: Sequence[Waypoint]) -> WaypointSequence:
    """Waypoints flown over, in time order, with consecutive repeats collapsed.

    When a point is inside several waypoints the one already being traversed
    wins, otherwise the first in ``waypoints`` order.
    """
    xy = traj.xyz[:, :2]
    if not waypoints:
        return WaypointSequence(traj.flight_id, ())
    inside = np.column_stack([points_in_polygon(xy, wp.shape) for wp in waypoints])
    ids = [wp.id for wp in waypoints]
    seq: list[int] = []
    last_col = None
    for row in inside:
        if last_col is not None and row[last_col]:
            continue
        hit = np.flatnonzero(row)
        if hit.size == 0:
            last_col = None
            continue
        col = int(hit[0])
        if not seq or seq[-1] != ids[col]:
            seq.append(ids[col])
        last_col = col
    return WaypointSequence(traj.flight_id, tuple(seq))


def filter_sequences(seqs: Iterable[WaypointSequence],
                     final_turn_wp: int | None = None,
                     min_length: int = 5) -> list[WaypointSequence]:
    """Drop a trailing final-turn waypoint, then keep sequences of 5+ waypoints."""
    out = []
    for s in seqs:
        ids = s.waypoint_ids
        if final_turn_wp is not None and ids and ids[-1] == final_turn_wp:
            ids = ids[:-1]
        if len(ids) >= min_length:
            out.append(WaypointSequence(s.flight_id, ids))
    return out


def lcs_length(a: Sequence, b: Sequence) -> int:
    """Length of the longest common subsequence, O(|a||b|) time, O(|b|) memory."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(cur[j - 1] if cur[j - 1] > prev[j] else prev[j])
        prev = cur
    return prev[-1]


def lcs_similarity(a: Sequence, b: Sequence) -> float:
    """``lcs(a, b) / max(|a|, |b|)``; two empty sequences are identical."""
    n = max(len(a), len(b))
    return 1.0 if n == 0 else lcs_length(a, b) / n


def similarity_matrix(seqs: Sequence[WaypointSequence]) -> np.ndarray:
    n = len(seqs)
    S = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            S[i, j] = S[j, i] = lcs_similarity(seqs[i].waypoint_ids, seqs[j].waypoint_ids)
    return S


def cluster_sequences(seqs: Sequence[WaypointSequence], sim_threshold: float = 0.6,
                      min_cluster: int = 5) -> SequenceClusterResult:
    """DBSCAN over ``1 - lcs_similarity`` with a medoid representative per cluster."""
    if not 0.0 <= sim_threshold <= 1.0:
        raise ValueError("sim_threshold must lie in [0, 1]")
    if not seqs:
        return SequenceClusterResult(np.empty(0, dtype=np.int64), {})
    S = similarity_matrix(seqs)
    eps = max(1.0 - sim_threshold, 1e-12)
    res = dbscan(1.0 - S, DbscanParams(eps, min_cluster), metric="precomputed")
    reps = {}
    for j in range(res.n_clusters):
        members = np.flatnonzero(res.labels == j)
        totals = S[np.ix_(members, members)].sum(axis=1)
        best = min(range(members.size),
                   key=lambda r: (-totals[r], seqs[members[r]].flight_id))
        reps[j] = seqs[members[best]]
    return SequenceClusterResult(res.labels, reps)


def save_waypoints(waypoints: Sequence[Waypoint]) -> str:
    return json.dumps([w.to_dict() for w in waypoints], indent=1) + "\n"


def load_waypoints(text: str) -> list[Waypoint]:
    return [Waypoint.from_dict(d) for d in json.loads(text)]


def sequences_to_csv(seqs: Iterable[WaypointSequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["flight_id", "wp_ids"])
    for s in seqs:
        w.writerow([s.flight_id, "|".join(map(str, s.waypoint_ids))])
    return buf.getvalue()


def sequences_from_csv(text: str) -> list[WaypointSequence]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["flight_id", "wp_ids"]:
        raise ValueError("bad sequence CSV header")
    return [WaypointSequence(fid, tuple(int(v) for v in ids.split("|") if v))
            for fid, ids in rows[1:]]


class WaypointRouteClusterer(ClusterMixin, BaseEstimator):
    """End-to-end waypoint pipeline as an estimator over lists of trajectories.

    ``fit`` detects turning points, learns waypoints (``mode="sparse"`` for
    k-means boxes, ``"dense"`` for DBSCAN hulls), converts every trajectory to
    a waypoint sequence and clusters the sequences that survive filtering.
    ``labels_`` is aligned with the input; flights whose sequence was
    filtered out are labelled ``OUTLIER``.
    """

    def __init__(self, mode="dense", alpha=0.4, psi_c=0.025, k=10, eps=350.0,
                 min_pts=10, final_turn_wp=None, sim_threshold=0.6, min_cluster=5,
                 random_state=0):
        self.mode = mode
        self.alpha = alpha
        self.psi_c = psi_c
        self.k = k
        self.eps = eps
        self.min_pts = min_pts
        self.final_turn_wp = final_turn_wp
        self.sim_threshold = sim_threshold
        self.min_cluster = min_cluster
        self.random_state = random_state

    def fit(self, X: Sequence[Trajectory], y=None):
        flights = list(X)
        if not flights:
            raise ValueError("no trajectories to cluster")
        cfg = TurningConfig(self.alpha, self.psi_c)
        tps = [tp for f in flights if f.m >= 3 for tp in detect_turning_points(f, cfg)]
        if self.mode == "sparse":
            if len(tps) < self.k:
                raise ValueError(
                    f"sparse mode needs at least k={self.k} turning points, found {len(tps)}")
            wps = build_waypoints_sparse(tps, self.k, seed=self.random_state)
        elif self.mode == "dense":
            if len(tps) < self.min_pts:
                raise ValueError(
                    f"dense mode needs at least min_pts={self.min_pts} turning points, "
                    f"found {len(tps)}")
            wps = build_waypoints_dense(tps, DbscanParams(self.eps, self.min_pts))
        else:
            raise ValueError(f"mode must be 'sparse' or 'dense', got {self.mode!r}")
        self.turning_points_ = tps
        self.waypoints_ = wps
        self.sequences_ = [trajectory_to_sequence(f, wps) for f in flights]
        kept = filter_sequences(self.sequences_, self.final_turn_wp)
        res = cluster_sequences(kept, self.sim_threshold, self.min_cluster)
        by_id = {s.flight_id: lab for s, lab in zip(kept, res.labels.tolist())}
        self.kept_sequences_ = kept
        self.labels_ = np.array([by_id.get(f.flight_id, OUTLIER) for f in flights],
                                dtype=np.int64)
        self.representatives_ = res.representatives
        return self
