"""Replay engine for conformance monitoring and the entropy complexity metric.

Each aircraft keeps the radar hits of its last ``window_s`` seconds. Once a
window spans ``min_warmup_s`` it is resampled to five points and scored
against the nominal knowledge base. Aircraft bound for the monitored airport
are nominal or outliers; other aircraft either match the monitored arrival
pattern (interfering) or not (clear).
"""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .ims import ImsKnowledgeBase, flatten_window
from .trajdata import FlightMetadata, TrackPoint, Trajectory, resample_indices

logger = logging.getLogger(__name__)

NOMINAL_SFO = "NOMINAL_SFO"
OUTLIER_SFO = "OUTLIER_SFO"
CLEAR_OTHER = "CLEAR_OTHER"
INTERFERING_OTHER = "INTERFERING_OTHER"
WARMUP = "WARMUP"

SCHEMA_VERSION = 1
LOG_BASE = 2


@dataclass(frozen=True)
class MonitorConfig:
    airport: str = "SFO"
    tau: float = 0.02
    window_s: int = 80
    min_warmup_s: int = 40
    expiry_s: int = 120
    tick_s: int = 15
    history_s: int = 600


@dataclass
class AircraftState:
    flight_id: str
    destination: str
    hits: deque = field(default_factory=deque)
    status: str = WARMUP
    score: float | None = None

    @property
    def last_t(self) -> int:
        return self.hits[-1].t

    @property
    def window_span(self) -> int:
        return self.hits[-1].t - self.hits[0].t if self.hits else 0

    def is_warmup(self, min_warmup_s: int) -> bool:
        return len(self.hits) < 2 or self.window_span < min_warmup_s


@dataclass(frozen=True)
class AircraftReport:
    flight_id: str
    status: str
    score: float | None
    window_len: int


@dataclass(frozen=True)
class AirspaceSnapshot:
    t: int
    aircraft: tuple[AircraftReport, ...]
    n_ok_sfo: int = 0
    n_not_ok_sfo: int = 0
    n_ok_not_sfo: int = 0
    n_not_ok_not_sfo: int = 0

    @property
    def n_sfo(self) -> int:
        return self.n_ok_sfo + self.n_not_ok_sfo

    @property
    def n_not_sfo(self) -> int:
        return self.n_ok_not_sfo + self.n_not_ok_not_sfo

    def counts(self) -> dict[str, int]:
        return {"n_SFO": self.n_sfo, "n_notSFO": self.n_not_sfo,
                "n_OK_SFO": self.n_ok_sfo, "n_notOK_SFO": self.n_not_ok_sfo,
                "n_OK_notSFO": self.n_ok_not_sfo, "n_notOK_notSFO": self.n_not_ok_not_sfo}

    @classmethod
    def from_reports(cls, t: int, reports: Sequence[AircraftReport]) -> "AirspaceSnapshot":
        tally = {s: 0 for s in (NOMINAL_SFO, OUTLIER_SFO, CLEAR_OTHER, INTERFERING_OTHER, WARMUP)}
        for r in reports:
            tally[r.status] += 1
        return cls(t, tuple(reports), tally[NOMINAL_SFO], tally[OUTLIER_SFO],
                   tally[CLEAR_OTHER], tally[INTERFERING_OTHER])


@dataclass(frozen=True)
class ComplexityReading:
    t: int
    i_sfo: float
    i_not_sfo: float
    c: float


def group_entropy(n_ok: int, n_not_ok: int) -> float:
    """Entropy in bits of one aircraft group where every outlier is its own class.

    ``-(k/n) log2(k/n) - (b/n) log2(1/n)`` with ``n = k + b``; an empty group
    scores 0 and ``0 log 0`` is taken as 0.
    """
    if n_ok < 0 or n_not_ok < 0:
        raise ValueError("counts must be non-negative")
    n = n_ok + n_not_ok
    if n == 0:
        return 0.0
    h = 0.0
    if n_ok:
        p = n_ok / n
        h -= p * math.log2(p)
    if n_not_ok:
        h += (n_not_ok / n) * math.log2(n)
    return h


def complexity(snapshot: AirspaceSnapshot) -> ComplexityReading:
    i_sfo = group_entropy(snapshot.n_ok_sfo, snapshot.n_not_ok_sfo)
    i_not = group_entropy(snapshot.n_ok_not_sfo, snapshot.n_not_ok_not_sfo)
    return ComplexityReading(snapshot.t, i_sfo, i_not, i_sfo + i_not)


def window_features(a: AircraftState, norm, min_warmup_s: int = 40) -> np.ndarray:
    """Resample the aircraft's window to five points and normalise it."""
    if a.is_warmup(min_warmup_s):
        raise ValueError(f"aircraft {a.flight_id} is still warming up")
    xyz = np.array([(h.x, h.y, h.z) for h in a.hits], dtype=float)
    return flatten_window(xyz[resample_indices(xyz.shape[0], 5)], norm)


def status_for(destination: str, airport: str, score: float, tau: float) -> str:
    conforming = score <= tau
    if destination == airport:
        return NOMINAL_SFO if conforming else OUTLIER_SFO
    return INTERFERING_OTHER if conforming else CLEAR_OTHER


def classify_aircraft(a: AircraftState, kb: ImsKnowledgeBase, tau: float = 0.02,
                      airport: str = "SFO", min_warmup_s: int = 40) -> tuple[str, float]:
    s = float(kb.score(window_features(a, kb.norm, min_warmup_s))[0])
    return status_for(a.destination, airport, s, tau), s


class AirspaceMonitor:
    """Mutable per-aircraft state driven by time-ordered radar hits."""

    def __init__(self, kb: ImsKnowledgeBase, config: MonitorConfig = MonitorConfig()):
        self.kb = kb
        self.config = config
        self.aircraft: dict[str, AircraftState] = {}
        self.warnings: list[str] = []

    def ingest_hit(self, flight_id: str, hit: TrackPoint, meta: FlightMetadata) -> bool:
        """Append a hit; returns False (and records a warning) if it is out of order."""
        a = self.aircraft.get(flight_id)
        if a is None:
            a = self.aircraft[flight_id] = AircraftState(flight_id, meta.destination)
        elif a.hits and hit.t <= a.last_t:
            msg = f"out-of-order hit for {flight_id} at t={hit.t} (last {a.last_t}); ignored"
            logger.warning(msg)
            self.warnings.append(msg)
            return False
        a.hits.append(hit)
        cutoff = hit.t - self.config.window_s
        while a.hits[0].t < cutoff:
            a.hits.popleft()
        return True

    def expire(self, now: int) -> None:
        for fid in [f for f, a in self.aircraft.items() if now - a.last_t > self.config.expiry_s]:
            del self.aircraft[fid]

    def snapshot(self, now: int) -> AirspaceSnapshot:
        cfg = self.config
        self.expire(now)
        states = [self.aircraft[f] for f in sorted(self.aircraft)]
        ready = [a for a in states if not a.is_warmup(cfg.min_warmup_s)]
        if ready:
            F = np.array([window_features(a, self.kb.norm, cfg.min_warmup_s) for a in ready])
            for a, s in zip(ready, self.kb.score(F).tolist()):
                a.score = s
                a.status = status_for(a.destination, cfg.airport, s, cfg.tau)
        reports = []
        for a in states:
            if a.is_warmup(cfg.min_warmup_s):
                a.status, a.score = WARMUP, None
            reports.append(AircraftReport(a.flight_id, a.status, a.score, len(a.hits)))
        return AirspaceSnapshot.from_reports(now, reports)


class Replay:
    """Offline replay of recorded flights on a fixed tick grid.

    Ticks fall on multiples of ``tick_s`` in absolute time, from the first
    at or after the earliest hit until the last aircraft has expired.
    ``history`` keeps the readings of the last ``history_s`` seconds.
    """

    def __init__(self, flights: Iterable[Trajectory], kb: ImsKnowledgeBase,
                 config: MonitorConfig = MonitorConfig()):
        self.flights = list(flights)
        self.kb = kb
        self.config = config
        self.history: deque[ComplexityReading] = deque(
            maxlen=max(1, config.history_s // config.tick_s))

    def __iter__(self) -> Iterator[tuple[AirspaceSnapshot, ComplexityReading]]:
        if not self.flights:
            return
        tick = self.config.tick_s
        events = sorted(
            ((int(t), f.flight_id, fi, li)
             for fi, f in enumerate(self.flights) for li, t in enumerate(f.t.tolist())),
            key=lambda e: (e[0], e[1]))
        mon = AirspaceMonitor(self.kb, self.config)
        now = -(-events[0][0] // tick) * tick
        k = 0
        while True:
            while k < len(events) and events[k][0] <= now:
                _, fid, fi, li = events[k]
                f = self.flights[fi]
                mon.ingest_hit(fid, f.point(li), f.meta)
                k += 1
            snap = mon.snapshot(now)
            if k == len(events) and not snap.aircraft:
                return
            reading = complexity(snap)
            self.history.append(reading)
            yield snap, reading
            now += tick


def run_replay(flights: Iterable[Trajectory], kb: ImsKnowledgeBase, tau: float = 0.02,
               tick_s: int = 15, **config) -> Iterator[tuple[AirspaceSnapshot, ComplexityReading]]:
    return iter(Replay(flights, kb, MonitorConfig(tau=tau, tick_s=tick_s, **config)))


def snapshot_json(snap: AirspaceSnapshot, reading: ComplexityReading) -> str:
    doc = {
        "t": snap.t,
        "aircraft": [{"flight_id": a.flight_id, "status": a.status, "score": a.score,
                      "window_len": a.window_len} for a in snap.aircraft],
        "counts": snap.counts(),
        "i_sfo": reading.i_sfo,
        "i_not_sfo": reading.i_not_sfo,
        "c": reading.c,
    }
    return json.dumps(doc, separators=(",", ":"))


def complexity_csv(readings: Iterable[ComplexityReading]) -> str:
    lines = ["t,i_sfo,i_not_sfo,c"]
    lines += [f"{r.t},{r.i_sfo!r},{r.i_not_sfo!r},{r.c!r}" for r in readings]
    return "\n".join(lines) + "\n"


def status_timelines(snapshots: Iterable[AirspaceSnapshot]) -> dict[str, list[tuple[int, str]]]:
    out: dict[str, list[tuple[int, str]]] = {}
    for s in snapshots:
        for a in s.aircraft:
            out.setdefault(a.flight_id, []).append((s.t, a.status))
    return out
