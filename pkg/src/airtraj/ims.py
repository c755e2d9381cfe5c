"""Box-cluster knowledge base for nominal trajectory fragments.

Training fragments (five consecutive normalised positions, flattened to 15
values) are grouped with k-means, each group is bounded by its per-dimension
min/max box, and boxes closer than ``merge_eps`` are merged. A fragment's
anomaly score is its Euclidean distance to the nearest box.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .clustering import KmeansParams, kmeans
from .pca_routes import NormalizationParams
from .trajdata import ResampledTrajectory

SCHEMA_VERSION = 1

FRAGMENT_POINTS = 5
FRAGMENT_DIM = 3 * FRAGMENT_POINTS
CONFORMING = "conforming"
ANOMALOUS = "anomalous"

_CHUNK = 1024


@dataclass(frozen=True)
class PositionScaler:
    """Min-max scaling of (x, y, z); a flat axis maps to 0.5."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    @classmethod
    def from_normalization(cls, norm: NormalizationParams) -> "PositionScaler":
        return cls(tuple(map(float, norm.mins[:3])), tuple(map(float, norm.maxs[:3])))

    def apply(self, xyz) -> np.ndarray:
        xyz = np.asarray(xyz, dtype=float)
        lo, hi = np.array(self.lo), np.array(self.hi)
        span = hi - lo
        flat = span == 0
        return np.where(flat, 0.5, (xyz - lo) / np.where(flat, 1.0, span))

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}

    @classmethod
    def from_dict(cls, d: dict) -> "PositionScaler":
        return cls(tuple(map(float, d["lo"])), tuple(map(float, d["hi"])))


def _as_scaler(norm) -> PositionScaler:
    if isinstance(norm, PositionScaler):
        return norm
    return PositionScaler.from_normalization(norm)


def flatten_window(xyz, norm) -> np.ndarray:
    """Normalise five (x, y, z) points and flatten them to x1 y1 z1 ... z5."""
    xyz = np.asarray(xyz, dtype=float)
    if xyz.shape != (FRAGMENT_POINTS, 3):
        raise ValueError(f"a fragment needs exactly {FRAGMENT_POINTS} points")
    return _as_scaler(norm).apply(xyz).reshape(FRAGMENT_DIM)


def fragment_trajectory(rt: ResampledTrajectory, norm) -> np.ndarray:
    """Ten non-overlapping 5-point fragments of a 50-point track, shape (10, 15)."""
    xyz = np.asarray(rt.xyz, dtype=float)
    if xyz.shape != (50, 3):
        raise ValueError(f"fragmenting needs exactly 50 points, got {xyz.shape[0]}")
    return _as_scaler(norm).apply(xyz).reshape(10, FRAGMENT_DIM)


def box_distance(F: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Distance of each fragment to each box, shape (len(F), len(lo))."""
    out = np.empty((F.shape[0], lo.shape[0]))
    for s in range(0, F.shape[0], _CHUNK):
        v = F[s:s + _CHUNK, None, :]
        excess = np.maximum(np.maximum(lo[None] - v, v - hi[None]), 0.0)
        out[s:s + _CHUNK] = np.sqrt(np.einsum("ijk,ijk->ij", excess, excess))
    return out


def box_gaps(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    g = np.maximum(np.maximum(lo[None, :, :] - hi[:, None, :], lo[:, None, :] - hi[None, :, :]), 0.0)
    return np.sqrt(np.einsum("ijk,ijk->ij", g, g))


def merge_boxes(lo, hi, counts, merge_eps: float):
    """Greedily merge the closest pair of boxes while its gap is <= merge_eps."""
    lo, hi, counts = lo.copy(), hi.copy(), counts.copy()
    gaps = box_gaps(lo, hi)
    np.fill_diagonal(gaps, np.inf)
    while lo.shape[0] > 1:
        flat = int(np.argmin(gaps))
        i, j = divmod(flat, gaps.shape[0])
        if gaps[i, j] > merge_eps:
            break
        i, j = min(i, j), max(i, j)
        lo[i] = np.minimum(lo[i], lo[j])
        hi[i] = np.maximum(hi[i], hi[j])
        counts[i] += counts[j]
        keep = np.arange(lo.shape[0]) != j
        lo, hi, counts = lo[keep], hi[keep], counts[keep]
        gaps = gaps[np.ix_(keep, keep)]
        g = np.maximum(np.maximum(lo - hi[i], lo[i] - hi), 0.0)
        row = np.sqrt(np.einsum("ij,ij->i", g, g))
        row[i] = np.inf
        gaps[i, :] = row
        gaps[:, i] = row
    return lo, hi, counts


def _sha256(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class ImsKnowledgeBase:
    lo: np.ndarray  # (n_boxes, 15)
    hi: np.ndarray
    counts: np.ndarray
    norm: PositionScaler
    trained_fragments: int
    training_fingerprint: str = ""
    config_fingerprint: str = ""
    model_fingerprint: str = ""

    @property
    def n_clusters(self) -> int:
        return self.lo.shape[0]

    def score(self, F) -> np.ndarray:
        F = np.atleast_2d(np.asarray(F, dtype=float))
        if F.shape[1] != self.lo.shape[1]:
            raise ValueError(f"expected {self.lo.shape[1]}-dim fragments, got {F.shape[1]}")
        return box_distance(F, self.lo, self.hi).min(axis=1)

    def _body(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist(), "counts": self.counts.tolist(),
                "normalization": self.norm.to_dict(),
                "trained_fragments": self.trained_fragments,
                "training_fingerprint": self.training_fingerprint}

    @property
    def fingerprint(self) -> str:
        return _sha256(self._body())

    def to_json(self) -> str:
        doc = {"schema": "airtraj.ims_kb", "schema_version": SCHEMA_VERSION,
               "config_fingerprint": self.config_fingerprint,
               "model_fingerprint": self.model_fingerprint,
               "fingerprint": self.fingerprint, **self._body()}
        return json.dumps(doc, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ImsKnowledgeBase":
        d = json.loads(text)
        if d.get("schema") != "airtraj.ims_kb":
            raise ValueError("not an IMS knowledge-base document")
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported knowledge-base version {d.get('schema_version')}")
        kb = cls(np.array(d["lo"], dtype=float).reshape(-1, FRAGMENT_DIM),
                 np.array(d["hi"], dtype=float).reshape(-1, FRAGMENT_DIM),
                 np.array(d["counts"], dtype=np.int64),
                 PositionScaler.from_dict(d["normalization"]),
                 int(d["trained_fragments"]), d["training_fingerprint"],
                 d.get("config_fingerprint", ""), d.get("model_fingerprint", ""))
        if kb.fingerprint != d.get("fingerprint"):
            raise ValueError("knowledge-base fingerprint mismatch; file is corrupt or edited")
        return kb


def default_initial_k(n_fragments: int) -> int:
    return max(16, math.ceil(math.sqrt(n_fragments)))


def train(fragments, norm, initial_k: int | None = None, merge_eps: float = 0.01,
          seed: int = 0, restarts: int = 5) -> ImsKnowledgeBase:
    """Learn a box knowledge base from normalised fragments (rows of ``fragments``).

    ``initial_k`` defaults to ``max(16, ceil(sqrt(n)))`` and is capped at the
    number of fragments.
    """
    F = np.asarray(fragments, dtype=float)
    if F.ndim != 2 or F.shape[0] == 0:
        raise ValueError("no fragments to train on")
    k = default_initial_k(F.shape[0]) if initial_k is None else initial_k
    k = min(k, F.shape[0])
    res = kmeans(F, KmeansParams(k=k, restarts=restarts, seed=seed))
    lo, hi, counts = [], [], []
    for j in range(k):
        members = F[res.labels == j]
        if members.shape[0]:
            lo.append(members.min(axis=0))
            hi.append(members.max(axis=0))
            counts.append(members.shape[0])
    lo, hi, counts = merge_boxes(np.array(lo), np.array(hi), np.array(counts, dtype=np.int64),
                                 merge_eps)
    fp = hashlib.sha256(np.ascontiguousarray(F, dtype="<f8").tobytes()).hexdigest()
    return ImsKnowledgeBase(lo, hi, counts, _as_scaler(norm), int(F.shape[0]), fp)


def score(kb: ImsKnowledgeBase, f) -> float:
    """Distance from one fragment to the nearest knowledge-base box (0 inside)."""
    if kb.n_clusters == 0:
        raise ValueError("empty knowledge base")
    return float(kb.score(f)[0])


def classify(kb: ImsKnowledgeBase, f, tau: float = 0.02) -> str:
    if tau < 0:
        raise ValueError("tau must be non-negative")
    return CONFORMING if score(kb, f) <= tau else ANOMALOUS


def calibrate_tau(nominal_scores: Sequence[float], anomaly_scores: Sequence[float]) -> float:
    """Threshold maximising balanced accuracy between two score samples.

    Candidates are the observed scores; ties go to the smaller threshold.
    """
    nom = np.sort(np.asarray(nominal_scores, dtype=float))
    ano = np.sort(np.asarray(anomaly_scores, dtype=float))
    if nom.size == 0 or ano.size == 0:
        raise ValueError("need both nominal and anomalous scores")
    cands = np.unique(np.concatenate([[0.0], nom, ano]))
    tpr = 1.0 - np.searchsorted(ano, cands, side="right") / ano.size
    tnr = np.searchsorted(nom, cands, side="right") / nom.size
    return float(cands[int(np.argmax(tpr + tnr))])


def fragments_from(flights: Iterable[ResampledTrajectory], norm) -> np.ndarray:
    rows = [fragment_trajectory(rt, norm) for rt in flights]
    return np.concatenate(rows) if rows else np.empty((0, FRAGMENT_DIM))


class InductiveMonitor(OutlierMixin, BaseEstimator):
    """Estimator wrapper: ``predict`` returns +1 for conforming, -1 for anomalous."""

    def __init__(self, norm=None, initial_k=None, merge_eps=0.01, tau=0.02, random_state=0):
        self.norm = norm
        self.initial_k = initial_k
        self.merge_eps = merge_eps
        self.tau = tau
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        norm = self.norm if self.norm is not None else PositionScaler((0.0,) * 3, (1.0,) * 3)
        self.kb_ = train(X, norm, self.initial_k, self.merge_eps, seed=self.random_state)
        return self

    def anomaly_score(self, X):
        check_is_fitted(self, "kb_")
        return self.kb_.score(check_array(X, dtype=float))

    def score_samples(self, X):
        return -self.anomaly_score(X)

    def decision_function(self, X):
        return self.tau - self.anomaly_score(X)

    def predict(self, X):
        return np.where(self.anomaly_score(X) <= self.tau, 1, -1)
