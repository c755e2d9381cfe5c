"""Heading estimation, turning-point detection and planar geometry."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trajdata import TrackPoint, Trajectory

TWO_PI = 2.0 * np.pi


def wrap_angle(a):
    """Map angles to the half-open interval (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), TWO_PI)


@dataclass(frozen=True)
class TurningConfig:
    alpha: float = 0.4
    psi_c: float = 0.025

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.psi_c <= 0.0:
            raise ValueError(f"psi_c must be positive, got {self.psi_c}")


@dataclass(frozen=True, eq=False)
class HeadingSeries:
    """Headings at interior points 2..m-1 of a track (radians)."""

    raw: np.ndarray
    filtered: np.ndarray | None = None
    alpha: float | None = None


@dataclass(frozen=True)
class TurningPoint:
    position: TrackPoint
    flight_id: str
    index: int  # 0-based row in the source trajectory


def _xy(traj) -> np.ndarray:
    if isinstance(traj, Trajectory):
        return traj.xyz[:, :2]
    return np.asarray(traj, dtype=float)[:, :2]


def estimate_headings(traj) -> HeadingSeries:
    """Central-difference heading at each interior point.

    Uses the two-argument arctangent so that east and west are distinct.
    Where the two neighbours coincide the previous heading is carried
    forward (0 if there is none yet).
    """
    xy = _xy(traj)
    if xy.shape[0] < 3:
        raise ValueError(f"heading estimation needs at least 3 points, got {xy.shape[0]}")
    d = xy[2:] - xy[:-2]
    raw = wrap_angle(np.arctan2(d[:, 1], d[:, 0]))
    still = (d[:, 0] == 0.0) & (d[:, 1] == 0.0)
    if still.any():
        prev = 0.0
        for i in range(raw.shape[0]):
            if still[i]:
                raw[i] = prev
            prev = raw[i]
    return HeadingSeries(raw=raw)


def _filter_unwrapped(raw: np.ndarray, alpha: float) -> np.ndarray:
    u = np.unwrap(raw)
    out = np.empty_like(u)
    acc = u[0]
    out[0] = acc
    for i in range(1, u.shape[0]):
        acc = alpha * u[i] + (1.0 - alpha) * acc
        out[i] = acc
    return out


def lowpass(series: HeadingSeries | np.ndarray, alpha: float = 0.4) -> HeadingSeries:
    """First-order low-pass filter on the unwrapped heading sequence."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    raw = series.raw if isinstance(series, HeadingSeries) else np.asarray(series, dtype=float)
    if raw.shape[0] < 1:
        raise ValueError("empty heading series")
    return HeadingSeries(raw=raw, filtered=wrap_angle(_filter_unwrapped(raw, alpha)), alpha=alpha)


def filtered_headings(traj, alpha: float = 0.4) -> np.ndarray:
    """Filtered heading for every point of ``traj`` (length m).

    Endpoints take the value of their interior neighbour. Two-point tracks
    get the heading of their single segment.
    """
    xy = _xy(traj)
    if xy.shape[0] == 2:
        d = xy[1] - xy[0]
        return np.full(2, float(wrap_angle(np.arctan2(d[1], d[0]))))
    f = lowpass(estimate_headings(xy), alpha).filtered
    return np.concatenate([f[:1], f, f[-1:]])


def _trim_runs(flags: np.ndarray) -> list[int]:
    """Middle element of each maximal run of True (earlier one on ties)."""
    out = []
    idx = np.flatnonzero(flags)
    if idx.size == 0:
        return out
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [idx.size - 1]])
    for s, e in zip(starts, ends):
        out.append(int(idx[s + (e - s) // 2]))
    return out


def turning_point_indices(traj, cfg: TurningConfig = TurningConfig()) -> list[int]:
    xy = _xy(traj)
    f = lowpass(estimate_headings(xy), cfg.alpha).filtered
    jump = np.abs(wrap_angle(np.diff(f))) > cfg.psi_c
    # jump[j] compares heading j+1 with heading j; heading j sits on row j+1
    flags = np.zeros(xy.shape[0], dtype=bool)
    flags[2:2 + jump.shape[0]] = jump
    return [0] + _trim_runs(flags)


def detect_turning_points(traj: Trajectory, cfg: TurningConfig = TurningConfig()) -> list[TurningPoint]:
    """Turning points of a trajectory; the first point is always included."""
    return [TurningPoint(traj.point(i), traj.flight_id, i)
            for i in turning_point_indices(traj, cfg)]


# -- planar geometry ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Polygon2D:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("a polygon needs at least 3 (x, y) vertices")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def contains(self, p) -> bool:
        return point_in_polygon(p, self)

    def contains_points(self, pts) -> np.ndarray:
        return points_in_polygon(pts, self)

    def __eq__(self, other):
        if not isinstance(other, Polygon2D):
            return NotImplemented
        return np.array_equal(self.vertices, other.vertices)

    __hash__ = None


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> Polygon2D:
    """Convex hull (monotone chain), counter-clockwise, collinear points dropped."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] < 3:
        raise ValueError("convex hull needs at least 3 points")
    uniq = sorted(set(map(tuple, pts.tolist())))
    lower: list = []
    for p in uniq:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(uniq):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise ValueError("points are collinear; hull is degenerate")
    return Polygon2D(np.array(hull))


def points_in_polygon(pts, poly: Polygon2D, tol: float | None = None) -> np.ndarray:
    """Vectorised boundary-inclusive containment test (crossing number)."""
    p = np.asarray(pts, dtype=float).reshape(-1, 2)
    v = poly.vertices
    a = v[None, :, :]
    b = np.roll(v, -1, axis=0)[None, :, :]
    px = p[:, 0:1]
    py = p[:, 1:2]
    ax, ay, bx, by = a[..., 0], a[..., 1], b[..., 0], b[..., 1]
    if tol is None:
        tol = 1e-9 * max(1.0, float(np.abs(v).max()))

    straddle = (ay > py) != (by > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_at = ax + (bx - ax) * (py - ay) / (by - ay)
    inside = np.logical_xor.reduce(straddle & (px < x_at), axis=1)

    ex, ey = bx - ax, by - ay
    len2 = ex * ex + ey * ey
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.clip(((px - ax) * ex + (py - ay) * ey) / len2, 0.0, 1.0)
    s = np.where(len2 > 0, s, 0.0)
    dx = px - (ax + s * ex)
    dy = py - (ay + s * ey)
    on_edge = ((dx * dx + dy * dy) <= tol * tol).any(axis=1)
    return inside | on_edge


def point_in_polygon(p, poly: Polygon2D) -> bool:
    """True iff ``p`` is inside ``poly`` or on its boundary."""
    return bool(points_in_polygon(np.asarray(p, dtype=float)[None, :2], poly)[0])
