"""Deterministic synthetic arrival corpora.

A corpus is described by an INI file::

    [corpus]
    airport = SFO
    sigma_m = 200          ; cross-track offset std at each template vertex
    jitter_m = 20          ; per-hit radar noise
    entry_m = 10000        ; tracks start U(0, entry_m) along the route
    exit_m = 12000         ; and stop U(0, exit_m) short of its end
    speed_mps = 95
    dt_s = 5
    start = 2006-02-10T06:00:00Z
    spacing_s = 120        ; start-time spacing of nominal flights

    [route.north]
    waypoints = -40000 75000, -35000 30000, -15000 -12000
    altitudes = 5500, 4000, 300
    count = 40
    ; optional: destination, op_type, flight_rules, category

    [anomaly.holds]
    kind = holding         ; holding | vectoring | direct
    route = north
    count = 8
    at = 0.2 0.7           ; fraction of route length (fixed value or range)
    radius_m = 2500 4000   ; holding only
    loops = 1              ; holding only
    offset_deg = 60 90     ; vectoring only
    duration_s = 90        ; vectoring only
    hour = 10              ; optional: start inside this UTC hour

Every flight's metadata carries its generating template in ``template``
(route name, or ``<kind>:<route>`` for anomalies).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from .trajdata import TRACON_CEILING_M, TRACON_RADIUS_M, FlightMetadata, Trajectory

ANOMALY_KINDS = ("holding", "vectoring", "direct")


class CorpusSpecError(ValueError):
    pass


@dataclass(frozen=True)
class RouteTemplate:
    name: str
    vertices: np.ndarray  # (K, 3): x, y, z
    count: int
    destination: str | None = None
    op_type: str = "arrival"
    flight_rules: str = "IFR"
    category: str | None = None


@dataclass(frozen=True)
class AnomalySpec:
    name: str
    kind: str
    route: str
    count: int
    at: tuple[float, float] = (0.3, 0.6)
    radius_m: tuple[float, float] = (2500.0, 4000.0)
    loops: int = 1
    offset_deg: tuple[float, float] = (60.0, 90.0)
    duration_s: tuple[float, float] = (90.0, 120.0)
    hour: int | None = None


@dataclass(frozen=True)
class CorpusSpec:
    routes: list[RouteTemplate]
    anomalies: list[AnomalySpec] = field(default_factory=list)
    airport: str = "SFO"
    sigma_m: float = 200.0
    jitter_m: float = 20.0
    entry_m: float = 10_000.0
    exit_m: float = 12_000.0
    sigma_z_m: float = 50.0
    speed_mps: float = 95.0
    dt_s: int = 5
    start: str = "2006-02-10T06:00:00Z"
    spacing_s: int = 120
    origins: tuple[str, ...] = ("LAX", "SEA", "DEN", "ORD", "PDX", "SAN")
    categories: tuple[str, ...] = ("jet", "jet", "jet", "regional", "business", "turboprop")


def _range(text: str) -> tuple[float, float]:
    vals = [float(v) for v in text.replace(",", " ").split()]
    if len(vals) == 1:
        return vals[0], vals[0]
    if len(vals) != 2 or vals[0] > vals[1]:
        raise CorpusSpecError(f"bad range {text!r}")
    return vals[0], vals[1]


def _count(section, name: str) -> int:
    if "count" not in section:
        raise CorpusSpecError(f"[{name}] needs a count")
    n = section.getint("count")
    if n < 0:
        raise CorpusSpecError(f"[{name}] count must be >= 0")
    return n


def parse_corpus_spec(text: str) -> CorpusSpec:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise CorpusSpecError(str(exc)) from None
    c = cp["corpus"] if cp.has_section("corpus") else {}
    routes, anomalies = [], []
    try:
        for sec in cp.sections():
            s = cp[sec]
            if sec.startswith("route."):
                xy = [[float(v) for v in pair.split()] for pair in s["waypoints"].split(",")]
                z = [float(v) for v in s["altitudes"].split(",")]
                if any(len(p) != 2 for p in xy) or len(z) != len(xy) or len(xy) < 2:
                    raise CorpusSpecError(f"[{sec}] needs >= 2 'x y' waypoints and one altitude each")
                routes.append(RouteTemplate(
                    sec[len("route."):], np.column_stack([np.array(xy), z]), _count(s, sec),
                    s.get("destination"), s.get("op_type", "arrival"),
                    s.get("flight_rules", "IFR"), s.get("category")))
            elif sec.startswith("anomaly."):
                kind = s["kind"]
                if kind not in ANOMALY_KINDS:
                    raise CorpusSpecError(f"[{sec}] unknown kind {kind!r}")
                anomalies.append(AnomalySpec(
                    sec[len("anomaly."):], kind, s["route"], _count(s, sec),
                    _range(s.get("at", "0.3 0.6")), _range(s.get("radius_m", "2500 4000")),
                    s.getint("loops", 1), _range(s.get("offset_deg", "60 90")),
                    _range(s.get("duration_s", "90 120")),
                    s.getint("hour") if "hour" in s else None))
            elif sec != "corpus":
                raise CorpusSpecError(f"unknown section [{sec}]")
        spec = CorpusSpec(
            routes, anomalies,
            airport=c.get("airport", "SFO"),
            sigma_m=float(c.get("sigma_m", 200.0)),
            jitter_m=float(c.get("jitter_m", 20.0)),
            entry_m=float(c.get("entry_m", 10_000.0)),
            exit_m=float(c.get("exit_m", 12_000.0)),
            sigma_z_m=float(c.get("sigma_z_m", 50.0)),
            speed_mps=float(c.get("speed_mps", 95.0)),
            dt_s=int(c.get("dt_s", 5)),
            start=c.get("start", "2006-02-10T06:00:00Z"),
            spacing_s=int(c.get("spacing_s", 120)),
        )
    except (KeyError, ValueError) as exc:
        if isinstance(exc, CorpusSpecError):
            raise
        raise CorpusSpecError(f"bad corpus spec: {exc}") from None
    names = {r.name for r in routes}
    for a in anomalies:
        if a.route not in names:
            raise CorpusSpecError(f"anomaly {a.name!r} refers to unknown route {a.route!r}")
    return spec


DEFAULT_SPEC_TEXT = """\
[corpus]
airport = SFO
sigma_m = 200
jitter_m = 20
entry_m = 10000
exit_m = 12000
speed_mps = 95
dt_s = 5
start = 2006-02-10T06:00:00Z
spacing_s = 120

[route.north]
waypoints = -45000 72000, -38000 30000, -22000 2000, -15000 -12000
altitudes = 5500, 4200, 2200, 300
count = 40

[route.east]
waypoints = 72000 15000, 35000 28000, 5000 12000, -15000 -12000
altitudes = 5500, 4200, 2200, 300
count = 40

[route.south]
waypoints = 25000 -72000, 12000 -42000, -2000 -22000, -15000 -12000
altitudes = 5500, 4200, 2200, 300
count = 40

[anomaly.holds]
kind = holding
route = north
count = 8
at = 0.2 0.6
radius_m = 3000 5000
loops = 1
"""


def default_spec() -> CorpusSpec:
    return parse_corpus_spec(DEFAULT_SPEC_TEXT)


# -- path construction -------------------------------------------------------

def _perturb(vertices: np.ndarray, sigma: float, sigma_z: float, rng) -> np.ndarray:
    """Shift each template vertex across track by N(0, sigma)."""
    v = vertices.copy()
    seg = np.diff(v[:, :2], axis=0)
    seg /= np.linalg.norm(seg, axis=1, keepdims=True)
    tang = np.vstack([seg[:1], seg[:-1] + seg[1:], seg[-1:]])
    tang /= np.maximum(np.linalg.norm(tang, axis=1, keepdims=True), 1e-12)
    normal = np.column_stack([-tang[:, 1], tang[:, 0]])
    off = rng.normal(0.0, sigma, size=v.shape[0])
    # the runway end is not perturbed
    off[-1] = 0.0
    v[:, :2] += off[:, None] * normal
    v[:-1, 2] += rng.normal(0.0, sigma_z, size=v.shape[0] - 1)
    return v


def _arc(poly: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(poly[:, :2], axis=0), axis=1))])


def _point_at(poly: np.ndarray, frac: float) -> tuple[int, np.ndarray, np.ndarray]:
    """Segment index, 3-D position and unit direction at ``frac`` of the length."""
    s = _arc(poly)
    target = frac * s[-1]
    i = int(np.clip(np.searchsorted(s, target, side="right") - 1, 0, poly.shape[0] - 2))
    w = (target - s[i]) / max(s[i + 1] - s[i], 1e-12)
    p = poly[i] + w * (poly[i + 1] - poly[i])
    u = poly[i + 1, :2] - poly[i, :2]
    return i, p, u / np.linalg.norm(u)


def _with_holding(poly, frac, radius, loops, right_turn):
    i, p, u = _point_at(poly, frac)
    side = -1.0 if right_turn else 1.0
    n = side * np.array([-u[1], u[0]])
    c = p[:2] + radius * n
    a0 = np.arctan2(p[1] - c[1], p[0] - c[0])
    steps = max(int(72 * loops), 8)
    ang = a0 + side * np.linspace(0.0, 2 * np.pi * loops, steps + 1)
    circle = np.column_stack([c[0] + radius * np.cos(ang), c[1] + radius * np.sin(ang),
                              np.full(ang.shape, p[2])])
    return np.vstack([poly[:i + 1], circle, poly[i + 1:]])


def _with_vectoring(poly, frac, offset_rad, distance):
    i, p, u = _point_at(poly, frac)
    c, s = np.cos(offset_rad), np.sin(offset_rad)
    d = np.array([c * u[0] - s * u[1], s * u[0] + c * u[1]])
    q = np.array([p[0] + distance * d[0], p[1] + distance * d[1], p[2]])
    return np.vstack([poly[:i + 1], p[None], q[None], poly[i + 1:]])


def _sample_path(poly: np.ndarray, step: float, entry: float = 0.0,
                 exit: float = 0.0) -> np.ndarray:
    s = _arc(poly)
    entry = min(entry, 0.4 * s[-1])
    end = s[-1] - min(exit, 0.2 * s[-1])
    n = max(int(np.floor((end - entry) / step)), 1)
    at = np.append(entry + np.arange(n) * step, end)
    return np.column_stack([np.interp(at, s, poly[:, k]) for k in range(3)])


def _clip_volume(xyz: np.ndarray) -> np.ndarray:
    xyz[:, :2] = np.clip(xyz[:, :2], -TRACON_RADIUS_M, TRACON_RADIUS_M)
    xyz[:, 2] = np.clip(xyz[:, 2], 0.0, TRACON_CEILING_M)
    return xyz


def _iso(epoch: int) -> str:
    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _epoch(stamp: str) -> int:
    return int(datetime.fromisoformat(stamp.replace("Z", "+00:00")).timestamp())


def generate_synthetic(spec: CorpusSpec, seed: int = 0) -> list[Trajectory]:
    """Generate the corpus described by ``spec``; identical output for a given seed.

    Flights are returned in start-time order with ids ``SYN0001``,
    ``SYN0002``, ..., so ids carry no information about the template.
    """
    if not spec.routes:
        raise CorpusSpecError("corpus spec defines no routes")
    rng = np.random.default_rng(seed)
    routes = {r.name: r for r in spec.routes}
    t0 = _epoch(spec.start)
    day0 = t0 - t0 % 86400

    jobs = []  # (template label, route, anomaly or None)
    for r in spec.routes:
        jobs += [(r.name, r, None)] * r.count
    nominal = len(jobs)
    for a in spec.anomalies:
        jobs += [(f"{a.kind}:{a.route}", routes[a.route], a)] * a.count

    order = rng.permutation(nominal)
    starts = np.empty(len(jobs), dtype=np.int64)
    starts[order] = t0 + np.arange(nominal) * spec.spacing_s
    span_end = t0 + max(nominal, 1) * spec.spacing_s
    for j in range(nominal, len(jobs)):
        a = jobs[j][2]
        if a.hour is not None:
            starts[j] = day0 + a.hour * 3600 + int(rng.integers(0, 3600 - 600))
        else:
            starts[j] = int(rng.integers(t0, span_end))

    built = []
    for (label, route, anomaly), start in zip(jobs, starts.tolist()):
        poly = _perturb(route.vertices, spec.sigma_m, spec.sigma_z_m, rng)
        if anomaly is not None:
            frac = rng.uniform(*anomaly.at)
            if anomaly.kind == "holding":
                poly = _with_holding(poly, frac, rng.uniform(*anomaly.radius_m),
                                     anomaly.loops, bool(rng.integers(0, 2)))
            elif anomaly.kind == "vectoring":
                sign = 1.0 if rng.integers(0, 2) else -1.0
                offset = sign * np.deg2rad(rng.uniform(*anomaly.offset_deg))
                dist = spec.speed_mps * rng.uniform(*anomaly.duration_s)
                poly = _with_vectoring(poly, frac, offset, dist)
            else:
                poly = poly[[0, -1]]
        speed = spec.speed_mps * rng.uniform(0.9, 1.1)
        xyz = _sample_path(poly, speed * spec.dt_s, rng.uniform(0.0, spec.entry_m),
                           rng.uniform(0.0, spec.exit_m))
        xyz[:, :2] += rng.normal(0.0, spec.jitter_m, size=(xyz.shape[0], 2))
        xyz = _clip_volume(np.round(xyz, 1))
        t = start + spec.dt_s * np.arange(xyz.shape[0], dtype=np.int64)
        origin = spec.origins[int(rng.integers(0, len(spec.origins)))]
        category = route.category or spec.categories[int(rng.integers(0, len(spec.categories)))]
        built.append((start, label, route, xyz, t, origin, category))

    built.sort(key=lambda b: b[0])
    out = []
    for n, (start, label, route, xyz, t, origin, category) in enumerate(built, start=1):
        meta = FlightMetadata(
            flight_id=f"SYN{n:04d}", op_type=route.op_type, origin=origin,
            destination=route.destination or spec.airport, category=category,
            flight_rules=route.flight_rules, start_time=_iso(int(t[0])),
            n_points=int(xyz.shape[0]), template=label)
        out.append(Trajectory(meta, xyz, t))
    return out


def shifted(traj: Trajectory, dt: int, flight_id: str | None = None) -> Trajectory:
    """Copy of ``traj`` delayed by ``dt`` seconds."""
    t = traj.t + dt
    meta = replace(traj.meta, start_time=_iso(int(t[0])),
                   flight_id=flight_id or traj.flight_id)
    return Trajectory(meta, traj.xyz, t)

