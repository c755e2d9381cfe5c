import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from airtraj.cli import RunConfig, UsageError, main
from airtraj.ims import ImsKnowledgeBase
from airtraj.pca_routes import RouteModel
from airtraj.synthetic import DEFAULT_SPEC_TEXT
from airtraj.trajdata import write_tracks
from airtraj.waypoints import DENSE_HULL, SPARSE_BOX

from helpers import l_path, track

NOMINAL_SPEC = DEFAULT_SPEC_TEXT.split("[anomaly.")[0]


def run(*argv):
    return main([str(a) for a in argv])


def _pipeline(root, spec_text=None, seed=0):
    args = ["generate", "--out", root, "--seed", seed]
    if spec_text is not None:
        (root / "spec.ini").write_text(spec_text)
        args += ["--spec", root / "spec.ini"]
    assert run(*args) == 0
    tm = ["--tracks", root / "tracks.csv", "--meta", root / "meta.jsonl"]
    assert run("cluster-pca", "--out", root, *tm) == 0
    assert run("train-ims", "--out", root, "--model", root / "route_model.json", *tm) == 0
    return tm


@pytest.fixture(scope="module")
def default_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("default")
    return root, _pipeline(root)


def _column(path, name):
    with open(path) as fh:
        return [float(r[name]) for r in csv.DictReader(fh)]


def test_generate_writes_files_and_is_deterministic(tmp_path):
    assert run("generate", "--out", tmp_path / "a", "--seed", 4) == 0
    assert run("generate", "--out", tmp_path / "b", "--seed", 4) == 0
    for name in ("tracks.csv", "meta.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["schema"] == "airtraj.manifest" and man["schema_version"] == 1
    assert {f["file"] for f in man["files"]} == {"tracks.csv", "meta.jsonl"}
    assert man["config"]["seed"] == 4 and len(man["config_fingerprint"]) == 64


def test_missing_spec_is_a_usage_error(tmp_path, capsys):
    assert run("generate", "--out", tmp_path, "--spec", tmp_path / "nope.ini") == 1
    assert "corpus spec not found" in capsys.readouterr().err


def test_bad_spec_is_a_usage_error(tmp_path):
    (tmp_path / "s.ini").write_text("[route.a]\nwaypoints = 0 0\naltitudes = 1\ncount = 1\n")
    assert run("generate", "--out", tmp_path, "--spec", tmp_path / "s.ini") == 1


def test_usage_errors(tmp_path, capsys):
    assert run("bogus") == 1
    assert run("generate", "--seed", "x") == 1
    assert run("generate", "--out", tmp_path, "--set", "nonsense") == 1
    assert run("generate", "--out", tmp_path, "--set", "colour=red") == 1
    assert run("generate", "--out", tmp_path, "--config", tmp_path / "none.ini") == 1
    (tmp_path / "c.ini").write_text("[airtraj]\ntau = -1\n")
    assert run("generate", "--out", tmp_path, "--config", tmp_path / "c.ini") == 1
    capsys.readouterr()


def test_config_file_and_override_order(tmp_path):
    (tmp_path / "c.ini").write_text("[airtraj]\ntau = 0.05\nseed = 3\n")
    cfg = RunConfig.from_sources(str(tmp_path / "c.ini"), {"seed": 9})
    assert cfg.tau == 0.05 and cfg.seed == 9
    (tmp_path / "bare.cfg").write_text("tick_s = 30\n")
    assert RunConfig.from_sources(str(tmp_path / "bare.cfg"), {}).tick_s == 30
    assert RunConfig().alpha == 0.4 and RunConfig().psi_c == 0.025
    assert RunConfig().eps == 350.0 and RunConfig().min_pts == 10 and RunConfig().p == 5
    assert RunConfig().window_s == 80 and RunConfig().tick_s == 15
    assert RunConfig(tau=0.1).fingerprint != RunConfig().fingerprint
    assert RunConfig(tracks="x.csv").fingerprint == RunConfig().fingerprint
    with pytest.raises(UsageError):
        RunConfig.from_sources(None, {"window_s": "long"})


def test_data_errors(tmp_path, default_run):
    root, tm = default_run
    assert run("cluster-pca", "--out", tmp_path, "--tracks", tmp_path / "x.csv",
               "--meta", tmp_path / "x.jsonl") == 2
    (tmp_path / "bad.csv").write_text("flight_id,t,x_m,y_m,z_m\nF,0,0,0\n")
    (tmp_path / "bad.jsonl").write_text("")
    assert run("cluster-pca", "--out", tmp_path, "--tracks", tmp_path / "bad.csv",
               "--meta", tmp_path / "bad.jsonl") == 2
    assert run("train-ims", "--out", tmp_path, "--model", tmp_path / "none.json", *tm) == 2
    assert run("monitor", "--out", tmp_path, "--kb", tmp_path / "none.json", *tm) == 2


def test_cluster_pca_finds_the_routes_and_is_reproducible(default_run, tmp_path):
    root, tm = default_run
    model = RouteModel.from_json((root / "route_model.json").read_text())
    assert model.n_clusters >= 3
    assert len((root / "centroids.csv").read_text().splitlines()) == 1 + 50 * model.n_clusters
    assert run("cluster-pca", "--out", tmp_path, *tm) == 0
    assert (tmp_path / "route_model.json").read_bytes() == (root / "route_model.json").read_bytes()
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert model.config_fingerprint == man["config_fingerprint"]
    assert {f["file"] for f in man["files"]} >= {"route_model.json", "centroids.csv"}
    hours = (root / "outliers_by_hour.csv").read_text().splitlines()
    assert hours[0] == "hour,n_flights,n_outliers,frequency" and len(hours) == 25


def test_cluster_pca_below_min_pts(tmp_path):
    flights = [track(l_path(1.0) + [0, 50 * i], fid=f"F{i}") for i in range(3)]
    write_tracks(flights, tmp_path / "t.csv", tmp_path / "m.jsonl")
    assert run("cluster-pca", "--out", tmp_path, "--tracks", tmp_path / "t.csv",
               "--meta", tmp_path / "m.jsonl") == 2


def test_train_ims_on_an_all_nominal_model(tmp_path):
    _pipeline(tmp_path, NOMINAL_SPEC)
    tm = ["--tracks", tmp_path / "tracks.csv", "--meta", tmp_path / "meta.jsonl"]
    assert run("cluster-pca", "--out", tmp_path, "--set", "pca_eps_fraction=0.9", *tm) == 0
    model = RouteModel.from_json((tmp_path / "route_model.json").read_text())
    assert len(model.outlier_ids) == 0
    assert run("train-ims", "--out", tmp_path, "--model", tmp_path / "route_model.json", *tm) == 0
    kb = ImsKnowledgeBase.from_json((tmp_path / "kb.json").read_text())
    assert kb.trained_fragments == 10 * len(model.flight_ids) == 1200
    assert kb.model_fingerprint and kb.config_fingerprint


def test_train_ims_without_nominal_flights(tmp_path, default_run):
    root, tm = default_run
    model = RouteModel.from_json((root / "route_model.json").read_text())
    import dataclasses
    empty = dataclasses.replace(model, labels=np.full(len(model.labels), -1))
    (tmp_path / "m.json").write_text(empty.to_json())
    assert run("train-ims", "--out", tmp_path, "--model", tmp_path / "m.json", *tm) == 2


def test_tampered_knowledge_base_is_rejected(tmp_path, default_run, capsys):
    root, tm = default_run
    text = (root / "kb.json").read_text().replace('"counts":[', '"counts":[1', 1)
    (tmp_path / "kb.json").write_text(text)
    assert run("monitor", "--out", tmp_path, "--kb", tmp_path / "kb.json", *tm) == 2
    assert "fingerprint" in capsys.readouterr().err


def test_monitor_with_holdings_raises_complexity(default_run):
    root, tm = default_run
    assert run("monitor", "--out", root, "--kb", root / "kb.json", *tm) == 0
    c = _column(root / "complexity.csv", "c")
    assert max(c) > 0
    meta = json.loads((root / "snapshots.meta.json").read_text())
    assert meta["log_base"] == 2 and meta["n_ticks"] == len(c)
    kb = ImsKnowledgeBase.from_json((root / "kb.json").read_text())
    assert meta["kb_fingerprint"] == kb.fingerprint
    first = json.loads((root / "snapshots.jsonl").read_text().splitlines()[0])
    assert first["t"] % 15 == 0


def test_monitor_nominal_only_replay_is_quiet(tmp_path):
    tm = _pipeline(tmp_path, NOMINAL_SPEC)
    assert run("monitor", "--out", tmp_path, "--kb", tmp_path / "kb.json", *tm) == 0
    c = np.array(_column(tmp_path / "complexity.csv", "c"))
    assert np.count_nonzero(c) == 0, f"{np.count_nonzero(c)} of {c.size} ticks have c > 0"


def test_monitor_speed_does_not_change_output(tmp_path, default_run):
    root, _ = default_run
    (tmp_path / "few").mkdir()
    flights = [track(l_path(np.pi / 2, 12, 12, 400) + [-20000 + 300 * i, 0], fid=f"F{i}",
                     t0=15 * i) for i in range(3)]
    write_tracks(flights, tmp_path / "t.csv", tmp_path / "m.jsonl")
    tm = ["--tracks", tmp_path / "t.csv", "--meta", tmp_path / "m.jsonl", "--kb", root / "kb.json"]
    assert run("monitor", "--out", tmp_path / "a", "--speed", "max", *tm) == 0
    assert run("monitor", "--out", tmp_path / "b", "--speed", "5000", *tm) == 0
    for name in ("snapshots.jsonl", "complexity.csv", "snapshots.meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert run("monitor", "--out", tmp_path / "c", "--speed", "0", *tm) == 1
    assert run("monitor", "--out", tmp_path / "c", "--speed", "fast", *tm) == 1


def test_monitor_is_byte_identical_across_runs(tmp_path, default_run):
    root, tm = default_run
    for d in ("a", "b"):
        assert run("monitor", "--out", tmp_path / d, "--kb", root / "kb.json", *tm) == 0
    assert (tmp_path / "a" / "snapshots.jsonl").read_bytes() == \
        (tmp_path / "b" / "snapshots.jsonl").read_bytes()


def _two_clumps(tmp_path):
    rng = np.random.default_rng(0)
    flights = []
    for i in range(12):
        base = [-40000, 30000] if i % 2 else [20000, -30000]
        xy = l_path(np.pi / 2, 20, 20, 300) + base + rng.normal(0, 20, (40, 2))
        flights.append(track(xy, fid=f"F{i:02d}", t0=60 * i))
    write_tracks(flights, tmp_path / "t.csv", tmp_path / "m.jsonl")
    return ["--tracks", tmp_path / "t.csv", "--meta", tmp_path / "m.jsonl"]


def test_cluster_waypoints_sparse_two_clumps(tmp_path):
    tm = _two_clumps(tmp_path)
    assert run("cluster-waypoints", "--out", tmp_path, "--mode", "sparse", "--k", 2, *tm) == 0
    wps = json.loads((tmp_path / "waypoints.json").read_text())
    assert len(wps) == 2 and {w["source"] for w in wps} == {SPARSE_BOX}
    report = json.loads((tmp_path / "waypoint_clusters.json").read_text())
    assert report["n_waypoints"] == 2 and report["n_flights"] == 12


def test_cluster_waypoints_dense_on_the_corpus(default_run, tmp_path):
    _, tm = default_run
    assert run("cluster-waypoints", "--out", tmp_path, "--mode", "dense", *tm) == 0
    wps = json.loads((tmp_path / "waypoints.json").read_text())
    assert sum(w["source"] == DENSE_HULL for w in wps) >= 1
    assert (tmp_path / "sequences.csv").read_text().startswith("flight_id,")


def test_cluster_waypoints_errors(tmp_path):
    tm = _two_clumps(tmp_path)
    assert run("cluster-waypoints", "--out", tmp_path, "--mode", "sparse", "--k", 500, *tm) == 2
    (tmp_path / "e.csv").write_text("flight_id,t,x_m,y_m,z_m\n")
    (tmp_path / "e.jsonl").write_text("")
    assert run("cluster-waypoints", "--out", tmp_path, "--tracks", tmp_path / "e.csv",
               "--meta", tmp_path / "e.jsonl") == 2


def test_report_outliers(default_run, tmp_path):
    root, tm = default_run
    assert run("report-outliers", "--out", tmp_path, "--model", root / "route_model.json",
               "--meta", root / "meta.jsonl", "--set", "tz=America/Los_Angeles") == 0
    rows = (tmp_path / "outliers_by_category.csv").read_text().splitlines()
    assert rows[0] == "category,n_flights,n_outliers,frequency"
    assert run("report-outliers", "--out", tmp_path, "--model", root / "route_model.json",
               "--meta", root / "meta.jsonl", "--set", "tz=Mars/Olympus") == 1


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "airtraj", "generate", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and (tmp_path / "tracks.csv").is_file()
    res = subprocess.run([sys.executable, "-m", "airtraj", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "cluster-waypoints" in res.stdout
