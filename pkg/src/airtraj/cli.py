"""Command-line front end: generate, cluster, train, replay and report.

Every subcommand reads an optional key-value config file (``--config``), lets
command-line flags override it, and writes its artifacts to ``--out`` along
with a ``manifest.json`` recording each file's schema version, the config
fingerprint that produced it and its sha256.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

from . import ims
from .clustering import OUTLIER, DbscanParams
from .monitor import LOG_BASE, SCHEMA_VERSION as MONITOR_SCHEMA, Replay, MonitorConfig
from .monitor import complexity_csv, snapshot_json
from .pca_routes import AugmentConfig, RouteModel, centroids_to_csv, fit_route_model, outlier_report
from .synthetic import CorpusSpecError, default_spec, generate_synthetic, parse_corpus_spec
from .trajdata import (FlightMetadata, TrackFormatError, filter_flights, read_tracks, resample,
                       serialize_tracks)
from .waypoints import WaypointRouteClusterer, save_waypoints, sequences_to_csv

logger = logging.getLogger("airtraj")

SCHEMA_VERSION = 1
CONFIG_SECTION = "airtraj"


class UsageError(Exception):
    """Bad flags or configuration (exit 1)."""


class DataError(Exception):
    """Unreadable or unsuitable input data (exit 2)."""


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings for one command.

    Tunables default to the published values where there is one: alpha 0.4,
    psi_c 0.025, eps 350 m, min_pts 10, p 5, window 80 s and tick 15 s.
    k, sim_threshold, min_cluster, pca_min_pts and tau are our own choices.
    """

    tracks: str = "tracks.csv"
    meta: str = "meta.jsonl"
    spec: str = ""
    model: str = "route_model.json"
    kb: str = "kb.json"
    airport: str = "SFO"
    dest: str = ""
    tz: str = ""
    alpha: float = 0.4
    psi_c: float = 0.025
    k: int = 10
    eps: float = 350.0
    min_pts: int = 10
    final_turn_wp: int = -1
    sim_threshold: float = 0.6
    min_cluster: int = 5
    p: int = 5
    pca_eps: float = 0.0
    pca_eps_fraction: float = 0.05
    pca_min_pts: int = 5
    merge_eps: float = 0.01
    initial_k: int = 0
    tau: float = 0.02
    window_s: int = 80
    min_warmup_s: int = 40
    expiry_s: int = 120
    tick_s: int = 15
    seed: int = 0

    PATH_FIELDS = ("tracks", "meta", "spec", "model", "kb")

    @classmethod
    def from_sources(cls, config_path: str | None, overrides: dict) -> "RunConfig":
        values: dict = {}
        if config_path:
            path = Path(config_path)
            if not path.is_file():
                raise UsageError(f"config file not found: {config_path}")
            values.update(_read_config(path.read_text()))
        values.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name: f for f in dataclasses.fields(cls)}
        out = {}
        for key, raw in values.items():
            if key not in known:
                raise UsageError(f"unknown config key {key!r}")
            typ = type(known[key].default)
            try:
                out[key] = typ(raw)
            except ValueError:
                raise UsageError(f"config key {key!r}: cannot read {raw!r} as {typ.__name__}")
        cfg = cls(**out)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        checks = [
            (0 < self.alpha <= 1, "alpha must be in (0, 1]"),
            (self.psi_c > 0, "psi_c must be positive"),
            (self.k >= 1, "k must be >= 1"),
            (self.eps > 0, "eps must be positive"),
            (self.min_pts >= 1, "min_pts must be >= 1"),
            (0 < self.sim_threshold <= 1, "sim_threshold must be in (0, 1]"),
            (self.min_cluster >= 1, "min_cluster must be >= 1"),
            (self.p >= 1, "p must be >= 1"),
            (self.pca_eps >= 0 and self.pca_eps_fraction > 0, "PCA eps settings must be positive"),
            (self.pca_min_pts >= 1, "pca_min_pts must be >= 1"),
            (self.merge_eps >= 0, "merge_eps must be >= 0"),
            (self.initial_k >= 0, "initial_k must be >= 0"),
            (self.tau >= 0, "tau must be >= 0"),
            (self.window_s > 0 and self.tick_s > 0, "window_s and tick_s must be positive"),
            (0 <= self.min_warmup_s <= self.window_s, "min_warmup_s must be within the window"),
            (self.expiry_s > 0, "expiry_s must be positive"),
        ]
        for ok, msg in checks:
            if not ok:
                raise UsageError(msg)

    def tunables(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if k not in self.PATH_FIELDS}

    @property
    def fingerprint(self) -> str:
        body = json.dumps(self.tunables(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(body.encode()).hexdigest()


def _read_config(text: str) -> dict:
    """Key-value pairs from an INI file; a bare list of ``key = value`` lines also works."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        try:
            parser.read_string(text)
        except configparser.MissingSectionHeaderError:
            parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
            parser.read_string(f"[{CONFIG_SECTION}]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"cannot parse config: {exc}") from None
    if not parser.has_section(CONFIG_SECTION):
        raise UsageError(f"config file needs a [{CONFIG_SECTION}] section")
    return dict(parser.items(CONFIG_SECTION))


# -- output ------------------------------------------------------------------

class Outputs:
    def __init__(self, out_dir: str, cfg: RunConfig, command: str):
        self.dir = Path(out_dir)
        self.cfg = cfg
        self.command = command
        self.files: list[dict] = []

    def write(self, name: str, text: str, schema: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / name
        data = text.encode()
        path.write_bytes(data)
        self.files.append({"file": name, "schema": schema, "schema_version": SCHEMA_VERSION,
                           "sha256": hashlib.sha256(data).hexdigest()})
        return path

    def finish(self) -> None:
        doc = {"schema": "airtraj.manifest", "schema_version": SCHEMA_VERSION,
               "command": self.command, "config_fingerprint": self.cfg.fingerprint,
               "config": self.cfg.tunables(), "files": self.files}
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / "manifest.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _load_flights(cfg: RunConfig):
    for p in (cfg.tracks, cfg.meta):
        if not Path(p).is_file():
            raise DataError(f"input file not found: {p}")
    flights = read_tracks(cfg.tracks, cfg.meta)
    kept = filter_flights(flights, dest=cfg.dest or None)
    if not kept:
        raise DataError("no IFR flights left after filtering")
    return kept


def _read_text(path: str, what: str) -> str:
    if not Path(path).is_file():
        raise DataError(f"{what} not found: {path}")
    return Path(path).read_text()


def _load_model(cfg: RunConfig) -> RouteModel:
    try:
        return RouteModel.from_json(_read_text(cfg.model, "route model"))
    except (ValueError, KeyError) as exc:
        raise DataError(f"bad route model {cfg.model}: {exc}") from None


def _tz(cfg: RunConfig):
    if not cfg.tz:
        return None
    try:
        return ZoneInfo(cfg.tz)
    except (ZoneInfoNotFoundError, ValueError):
        raise UsageError(f"unknown time zone {cfg.tz!r}") from None


def _write_report(out: Outputs, model: RouteModel, metas, tz) -> None:
    for name, text in outlier_report(model, metas, tz).tables().items():
        out.write(f"outliers_by_{name}.csv", text, f"airtraj.outliers_by_{name}")


# -- commands ----------------------------------------------------------------

def cmd_generate(cfg: RunConfig, out: Outputs, args) -> int:
    if cfg.spec:
        if not Path(cfg.spec).is_file():
            raise UsageError(f"corpus spec not found: {cfg.spec}")
        spec = parse_corpus_spec(Path(cfg.spec).read_text())
    else:
        spec = default_spec()
    flights = generate_synthetic(spec, cfg.seed)
    csv_text, jsonl = serialize_tracks(flights)
    out.write("tracks.csv", csv_text, "airtraj.tracks")
    out.write("meta.jsonl", jsonl, "airtraj.flight_meta")
    logger.info("generated %d flights", len(flights))
    return 0


def cmd_cluster_waypoints(cfg: RunConfig, out: Outputs, args) -> int:
    flights = _load_flights(cfg)
    est = WaypointRouteClusterer(
        mode=args.mode, alpha=cfg.alpha, psi_c=cfg.psi_c, k=cfg.k, eps=cfg.eps,
        min_pts=cfg.min_pts, final_turn_wp=None if cfg.final_turn_wp < 0 else cfg.final_turn_wp,
        sim_threshold=cfg.sim_threshold, min_cluster=cfg.min_cluster, random_state=cfg.seed)
    try:
        est.fit(flights)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    out.write("waypoints.json", save_waypoints(est.waypoints_), "airtraj.waypoints")
    out.write("sequences.csv", sequences_to_csv(est.sequences_), "airtraj.sequences")
    clusters = {}
    for f, lab in zip(flights, est.labels_.tolist()):
        clusters.setdefault(lab, []).append(f.flight_id)
    report = {
        "schema": "airtraj.waypoint_clusters", "schema_version": SCHEMA_VERSION,
        "config_fingerprint": cfg.fingerprint, "mode": args.mode,
        "n_flights": len(flights), "n_turning_points": len(est.turning_points_),
        "n_waypoints": len(est.waypoints_), "n_sequences_kept": len(est.kept_sequences_),
        "clusters": [
            {"label": lab, "flight_ids": ids,
             "representative": (est.representatives_[lab].flight_id if lab != OUTLIER else None),
             "representative_wp_ids": (list(est.representatives_[lab].waypoint_ids)
                                       if lab != OUTLIER else None)}
            for lab, ids in sorted(clusters.items())],
    }
    out.write("waypoint_clusters.json", json.dumps(report, indent=1) + "\n",
              "airtraj.waypoint_clusters")
    logger.info("%d waypoints, %d sequence clusters", len(est.waypoints_),
                len(est.representatives_))
    return 0


def cmd_cluster_pca(cfg: RunConfig, out: Outputs, args) -> int:
    flights = _load_flights(cfg)
    dbp = DbscanParams(cfg.pca_eps, cfg.pca_min_pts) if cfg.pca_eps > 0 else None
    try:
        model = fit_route_model(flights, dbp, p=cfg.p, cfg=AugmentConfig(alpha=cfg.alpha),
                                eps_fraction=cfg.pca_eps_fraction, min_pts=cfg.pca_min_pts,
                                config_fingerprint=cfg.fingerprint)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    out.write("route_model.json", model.to_json(), "airtraj.route_model")
    out.write("centroids.csv", centroids_to_csv(model), "airtraj.centroids")
    _write_report(out, model, [f.meta for f in flights], _tz(cfg))
    logger.info("%d clusters, %d outliers of %d flights", model.n_clusters,
                len(model.outlier_ids), len(flights))
    return 0


def cmd_train_ims(cfg: RunConfig, out: Outputs, args) -> int:
    model = _load_model(cfg)
    flights = {f.flight_id: f for f in _load_flights(cfg)}
    nominal = [flights[i] for i in model.nominal_ids if i in flights]
    if not nominal:
        raise DataError("the route model labels no flight as nominal; nothing to train on")
    try:
        F = ims.fragments_from([resample(f, model.augment.n_samples) for f in nominal], model.norm)
        kb = ims.train(F, model.norm, cfg.initial_k or None, cfg.merge_eps, seed=cfg.seed)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    kb = dataclasses.replace(kb, config_fingerprint=cfg.fingerprint,
                             model_fingerprint=hashlib.sha256(model.to_json().encode()).hexdigest())
    out.write("kb.json", kb.to_json(), "airtraj.ims_kb")
    logger.info("%d boxes from %d fragments of %d flights", kb.n_clusters,
                kb.trained_fragments, len(nominal))
    return 0


def _parse_speed(text: str) -> float | None:
    if text == "max":
        return None
    try:
        v = float(text)
    except ValueError:
        raise UsageError(f"--speed must be a positive number or 'max', got {text!r}") from None
    if v <= 0:
        raise UsageError("--speed must be positive")
    return v


def cmd_monitor(cfg: RunConfig, out: Outputs, args) -> int:
    speed = _parse_speed(args.speed)
    try:
        kb = ims.ImsKnowledgeBase.from_json(_read_text(cfg.kb, "knowledge base"))
    except (ValueError, KeyError) as exc:
        raise DataError(f"bad knowledge base {cfg.kb}: {exc}") from None
    flights = _load_flights(cfg)
    mcfg = MonitorConfig(airport=cfg.airport, tau=cfg.tau, window_s=cfg.window_s,
                         min_warmup_s=cfg.min_warmup_s, expiry_s=cfg.expiry_s, tick_s=cfg.tick_s)
    lines, readings = [], []
    for snap, reading in Replay(flights, kb, mcfg):
        lines.append(snapshot_json(snap, reading))
        readings.append(reading)
        if speed is not None:
            time.sleep(cfg.tick_s / speed)
    out.write("snapshots.jsonl", "".join(line + "\n" for line in lines), "airtraj.snapshots")
    meta = {"schema": "airtraj.snapshots_meta", "schema_version": MONITOR_SCHEMA,
            "config_fingerprint": cfg.fingerprint, "kb_fingerprint": kb.fingerprint,
            "log_base": LOG_BASE, "airport": cfg.airport, "tau": cfg.tau,
            "window_s": cfg.window_s, "min_warmup_s": cfg.min_warmup_s,
            "expiry_s": cfg.expiry_s, "tick_s": cfg.tick_s, "n_ticks": len(lines)}
    out.write("snapshots.meta.json", json.dumps(meta, indent=1, sort_keys=True) + "\n",
              "airtraj.snapshots_meta")
    out.write("complexity.csv", complexity_csv(readings), "airtraj.complexity")
    logger.info("%d ticks, max complexity %.4f", len(readings),
                max((r.c for r in readings), default=0.0))
    return 0


def cmd_report_outliers(cfg: RunConfig, out: Outputs, args) -> int:
    model = _load_model(cfg)
    if not Path(cfg.meta).is_file():
        raise DataError(f"input file not found: {cfg.meta}")
    metas = []
    with open(cfg.meta, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    metas.append(FlightMetadata.from_dict(json.loads(line)))
                except (ValueError, KeyError, TypeError) as exc:
                    raise DataError(f"{cfg.meta}:{n}: {exc}") from None
    _write_report(out, model, metas, _tz(cfg))
    return 0


COMMANDS = {
    "generate": (cmd_generate, "write a synthetic track corpus"),
    "cluster-waypoints": (cmd_cluster_waypoints, "learn waypoints and cluster waypoint sequences"),
    "cluster-pca": (cmd_cluster_pca, "cluster resampled trajectories in principal-component space"),
    "train-ims": (cmd_train_ims, "train the monitoring knowledge base on nominal flights"),
    "monitor": (cmd_monitor, "replay tracks and compute airspace complexity"),
    "report-outliers": (cmd_report_outliers, "outlier frequencies by category, day and hour"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key-value config file ([airtraj] section)")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--out", help="output directory (default .)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any config key; may repeat")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    # SUPPRESS keeps a flag given before the subcommand from being reset after it
    parser = _Parser(prog="airtraj", description=__doc__.split("\n")[0], parents=[common],
                     argument_default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    cmds = {}
    for name, (_, helptext) in COMMANDS.items():
        cmds[name] = sub.add_parser(name, help=helptext, parents=[common],
                                    argument_default=argparse.SUPPRESS)
    for name in ("cluster-waypoints", "cluster-pca", "train-ims", "monitor"):
        cmds[name].add_argument("--tracks", help="track CSV")
        cmds[name].add_argument("--meta", help="metadata JSON lines")
    cmds["report-outliers"].add_argument("--meta", help="metadata JSON lines")
    cmds["generate"].add_argument("--spec", help="corpus spec (INI); default corpus if omitted")
    cmds["cluster-waypoints"].add_argument("--mode", choices=["sparse", "dense"], default="dense")
    cmds["cluster-waypoints"].add_argument("--k", type=int, help="waypoints in sparse mode")
    for name in ("train-ims", "report-outliers"):
        cmds[name].add_argument("--model", help="route model JSON")
    cmds["monitor"].add_argument("--kb", help="knowledge base JSON")
    cmds["monitor"].add_argument("--tau", type=float, help="score threshold")
    cmds["monitor"].add_argument("--speed", default="max",
                                 help="replay pacing factor, or 'max' for no pacing")
    return parser


def _overrides(args) -> dict:
    ov = {k: getattr(args, k, None) for k in ("seed", "tracks", "meta", "spec", "model", "kb",
                                              "k", "tau")}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        ov[key.strip()] = value.strip()
    return ov


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error already reported
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    func = COMMANDS[args.command][0]
    try:
        cfg = RunConfig.from_sources(getattr(args, "config", None), _overrides(args))
        out = Outputs(getattr(args, "out", None) or ".", cfg, args.command)
        code = func(cfg, out, args)
        out.finish()
        return code
    except (UsageError, CorpusSpecError) as exc:
        print(f"airtraj {args.command}: {exc}", file=sys.stderr)
        return 1
    except (DataError, TrackFormatError) as exc:
        print(f"airtraj {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
