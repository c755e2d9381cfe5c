"""Flight track data model, file ingestion, filtering and resampling.

Coordinates are meters in a radar-centred frame (x east, y north, z up).
Timestamps are integer seconds.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from typing import IO, Iterable, NamedTuple

import numpy as np

logger = logging.getLogger(__name__)

OP_TYPES = ("departure", "arrival")
CATEGORIES = ("jet", "regional", "business", "turboprop", "helicopter", "other")
FLIGHT_RULES = ("IFR", "VFR")

TRACON_RADIUS_M = 80_000.0
TRACON_CEILING_M = 6_000.0
MIN_GAP_S = 1
MAX_GAP_S = 30

_UNIT_SCALE = {"m": 1.0, "km": 1000.0}


class TrackFormatError(ValueError):
    """Raised when a track or metadata stream cannot be ingested."""


class TrackPoint(NamedTuple):
    x: float
    y: float
    z: float
    t: int


@dataclass(frozen=True)
class FlightMetadata:
    flight_id: str
    op_type: str
    origin: str
    destination: str
    category: str
    flight_rules: str
    start_time: str
    n_points: int
    # Ground-truth generating template, only set on synthetic corpora.
    # Pipelines never read it.
    template: str | None = None

    def to_json(self) -> str:
        d = asdict(self)
        if d["template"] is None:
            del d["template"]
        return json.dumps(d, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "FlightMetadata":
        known = {f.name for f in fields(cls)}
        missing = known - {"template"} - d.keys()
        if missing:
            raise TrackFormatError(f"metadata missing keys: {sorted(missing)}")
        meta = cls(**{k: v for k, v in d.items() if k in known})
        if meta.op_type not in OP_TYPES:
            raise TrackFormatError(f"unknown op_type {meta.op_type!r}")
        if meta.category not in CATEGORIES:
            raise TrackFormatError(f"unknown category {meta.category!r}")
        if meta.flight_rules not in FLIGHT_RULES:
            raise TrackFormatError(f"unknown flight_rules {meta.flight_rules!r}")
        if not isinstance(meta.n_points, int):
            raise TrackFormatError("n_points must be an integer")
        return meta


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A radar track: ``xyz`` is an (m, 3) float array, ``t`` an (m,) int array."""

    meta: FlightMetadata
    xyz: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=float)
        t = np.asarray(self.t, dtype=np.int64)
        if xyz.ndim != 2 or xyz.shape[1] != 3 or t.shape != (xyz.shape[0],):
            raise ValueError("xyz must be (m, 3) and t must be (m,)")
        xyz.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "t", t)

    @property
    def flight_id(self) -> str:
        return self.meta.flight_id

    @property
    def m(self) -> int:
        return self.xyz.shape[0]

    def __len__(self) -> int:
        return self.m

    def point(self, i: int) -> TrackPoint:
        x, y, z = self.xyz[i]
        return TrackPoint(float(x), float(y), float(z), int(self.t[i]))

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.meta == other.meta and np.array_equal(self.xyz, other.xyz)
                and np.array_equal(self.t, other.t))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ResampledTrajectory:
    """Fixed-length trajectory. ``indices`` are the 0-based source rows used."""

    meta: FlightMetadata
    xyz: np.ndarray
    t: np.ndarray
    indices: np.ndarray = field(default=None)

    @property
    def n(self) -> int:
        return self.xyz.shape[0]


def make_trajectory(meta: FlightMetadata, xyz, t) -> Trajectory:
    """Build a trajectory, fixing up ``meta.n_points`` to the point count."""
    xyz = np.asarray(xyz, dtype=float)
    if meta.n_points != xyz.shape[0]:
        meta = replace(meta, n_points=int(xyz.shape[0]))
    return Trajectory(meta, xyz, t)


def _as_text(stream) -> IO[str]:
    if isinstance(stream, (bytes, bytearray)):
        return io.StringIO(stream.decode("utf-8"))
    if isinstance(stream, str):
        return io.StringIO(stream)
    if isinstance(stream, io.TextIOBase):
        return stream
    # binary file-like
    return io.TextIOWrapper(stream, encoding="utf-8", newline="")


def _parse_header(header: list[str]) -> float:
    if len(header) != 5 or header[:2] != ["flight_id", "t"]:
        raise TrackFormatError(f"line 1: bad header {','.join(header)!r}")
    units = set()
    for col, axis in zip(header[2:], "xyz"):
        prefix, _, unit = col.partition("_")
        if prefix != axis or unit not in _UNIT_SCALE:
            raise TrackFormatError(f"line 1: bad column {col!r}")
        units.add(unit)
    if len(units) != 1:
        raise TrackFormatError("line 1: mixed length units in header")
    return _UNIT_SCALE[units.pop()]


def parse_tracks(track_stream, meta_stream, *, validate_bounds: bool = True,
                 max_gap_s: int = MAX_GAP_S) -> list[Trajectory]:
    """Read a track CSV and a metadata JSON-lines stream into trajectories.

    Rows of one flight must appear in strictly increasing time order. Flights
    present in only one of the two streams are dropped with a warning.
    Trajectories are returned in order of first appearance in the track file.
    """
    reader = csv.reader(_as_text(track_stream))
    try:
        header = next(reader)
    except StopIteration:
        header = None

    rows: dict[str, tuple[list, list]] = {}
    if header is not None:
        scale = _parse_header(header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise TrackFormatError(f"line {lineno}: expected 5 fields, got {len(row)}")
            fid = row[0]
            try:
                t = int(row[1])
                xyz = [float(v) * scale for v in row[2:]]
            except ValueError as exc:
                raise TrackFormatError(f"line {lineno}: {exc}") from None
            pts, ts = rows.setdefault(fid, ([], []))
            if ts:
                if t == ts[-1]:
                    raise TrackFormatError(f"line {lineno}: duplicate time {t} for flight {fid}")
                if t < ts[-1]:
                    raise TrackFormatError(f"line {lineno}: time decreases for flight {fid}")
                if t - ts[-1] > max_gap_s:
                    raise TrackFormatError(
                        f"line {lineno}: gap of {t - ts[-1]} s exceeds {max_gap_s} s for flight {fid}")
            if validate_bounds:
                x, y, z = xyz
                if abs(x) > TRACON_RADIUS_M or abs(y) > TRACON_RADIUS_M \
                        or not 0.0 <= z <= TRACON_CEILING_M:
                    raise TrackFormatError(f"line {lineno}: point outside TRACON volume")
            pts.append(xyz)
            ts.append(t)

    metas: dict[str, FlightMetadata] = {}
    for lineno, line in enumerate(_as_text(meta_stream), start=1):
        if not line.strip():
            continue
        try:
            meta = FlightMetadata.from_dict(json.loads(line))
        except (json.JSONDecodeError, TypeError) as exc:
            raise TrackFormatError(f"metadata line {lineno}: {exc}") from None
        except TrackFormatError as exc:
            raise TrackFormatError(f"metadata line {lineno}: {exc}") from None
        if meta.flight_id in metas:
            raise TrackFormatError(f"metadata line {lineno}: duplicate flight {meta.flight_id}")
        metas[meta.flight_id] = meta

    for fid in metas.keys() - rows.keys():
        logger.warning("flight %s has metadata but no track points; dropped", fid)

    out = []
    for fid, (pts, ts) in rows.items():
        meta = metas.get(fid)
        if meta is None:
            logger.warning("flight %s has track points but no metadata; dropped", fid)
            continue
        if len(ts) < 2:
            raise TrackFormatError(f"flight {fid} has fewer than 2 points")
        if meta.n_points != len(ts):
            raise TrackFormatError(
                f"flight {fid}: metadata n_points={meta.n_points} but {len(ts)} rows")
        out.append(Trajectory(meta, np.array(pts), np.array(ts, dtype=np.int64)))
    return out


def read_tracks(track_path, meta_path, **kwargs) -> list[Trajectory]:
    with open(track_path, encoding="utf-8", newline="") as tf, \
            open(meta_path, encoding="utf-8") as mf:
        return parse_tracks(tf, mf, **kwargs)


def serialize_tracks(flights: Iterable[Trajectory]) -> tuple[str, str]:
    """Return ``(track_csv, metadata_jsonl)`` text for ``flights``."""
    tracks = ["flight_id,t,x_m,y_m,z_m"]
    metas = []
    for f in flights:
        fid = f.flight_id
        for (x, y, z), t in zip(f.xyz.tolist(), f.t.tolist()):
            tracks.append(f"{fid},{t},{x!r},{y!r},{z!r}")
        metas.append(f.meta.to_json())
    return "\n".join(tracks) + "\n", "".join(m + "\n" for m in metas)


def write_tracks(flights: Iterable[Trajectory], track_path, meta_path) -> None:
    track_text, meta_text = serialize_tracks(flights)
    with open(track_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(track_text)
    with open(meta_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(meta_text)


def filter_flights(flights: Iterable[Trajectory], dest: str | None = None,
                   op: str | None = None, min_points: int = 0) -> list[Trajectory]:
    """Keep IFR flights to ``dest`` of type ``op`` with at least ``min_points`` points.

    ``dest`` or ``op`` set to None disables that predicate.
    """
    return [
        f for f in flights
        if f.meta.flight_rules == "IFR"
        and (dest is None or f.meta.destination == dest)
        and (op is None or f.meta.op_type == op)
        and f.m >= min_points
    ]


def resample_indices(m: int, n: int = 50) -> np.ndarray:
    """0-based rows ``round(k*m/n) - 1`` for k = 1..n, clamped to the track.

    Rounding is half-up, evaluated in exact integer arithmetic.
    """
    if m < 2:
        raise ValueError(f"need at least 2 points to resample, got {m}")
    if n < 1:
        raise ValueError("n must be positive")
    k = np.arange(1, n + 1, dtype=np.int64)
    one_based = (2 * k * m + n) // (2 * n)
    return np.clip(one_based, 1, m) - 1


def resample(traj: Trajectory, n: int = 50) -> ResampledTrajectory:
    idx = resample_indices(traj.m, n)
    return ResampledTrajectory(traj.meta, traj.xyz[idx], traj.t[idx], idx)
