"""Scenario plumbing: config validation, the simulation loop, the HTTP
API, and the command-line front end."""

import io
import json
import subprocess
import sys
import threading
import urllib.error
import urllib.request

import numpy as np
import pytest

from otsim import api, config, orchestrator, pcap


def scenario_dict(duration=3000, attacks=(), monitor_enabled=False, **plant):
    data = config.default_scenario_dict()
    data["duration_ticks"] = duration
    data["attacks"] = list(attacks)
    data["monitor"]["enabled"] = monitor_enabled
    data["outputs"] = {"pcap": None, "report": None, "labels": None}
    data["plant"].update(plant)
    return data


def build(data):
    return config.config_from_dict(data)


FLOOD = {"type": "syn_flood", "attacker": "attacker", "target": "plc4",
         "start_tick": 1000, "end_tick": 1400, "rate": 50,
         "payload_len": 120}
FORGE = {"type": "forge_write", "attacker": "attacker", "target": "bridge",
         "unit": 0, "function": 15, "address": 34, "values": [1],
         "start_tick": 600, "repeat": 1}


# -- config --------------------------------------------------------------------------


def test_default_scenario_parses_and_digest_is_stable():
    cfg = config.default_scenario()
    assert cfg.duration_ticks == 60000
    assert len(cfg.plcs) == 4
    again = config.config_from_dict(cfg.to_dict())
    assert config.config_digest(cfg) == config.config_digest(again)


def test_shipped_scenario_file_matches_the_builtin():
    with open("scenarios/default.json") as fh:
        cfg = config.load_config(fh.read())
    assert config.config_digest(cfg) == \
        config.config_digest(config.default_scenario())


def test_validation_reports_every_error_not_just_the_first():
    data = scenario_dict()
    data["network"]["nodes"]["plc9"] = "not-an-ip"
    data["monitor"]["schema"] = "wide7"
    data["attacks"] = [{"type": "syn_flood", "attacker": "attacker",
                        "target": "plc4", "start_tick": 99999,
                        "end_tick": 100000}]
    data["mystery_section"] = {}
    with pytest.raises(config.ConfigError) as err:
        build(data)
    text = str(err.value)
    assert "not-an-ip" in text
    assert "wide7" in text
    assert "start_tick" in text
    assert "mystery_section" in text
    assert len(err.value.errors) >= 4


def test_attack_starting_past_the_end_is_rejected():
    data = scenario_dict(duration=500, attacks=[FLOOD])
    with pytest.raises(config.ConfigError):
        build(data)


def test_overlapping_io_roles_are_rejected():
    data = scenario_dict()
    data["io_map"]["holding_registers"]["rogue.speed"] = \
        data["io_map"]["holding_registers"]["infeed.belt_speed"]
    with pytest.raises(config.ConfigError) as err:
        build(data)
    assert "rogue.speed" in str(err.value) or "infeed.belt_speed" in str(err.value)


def test_unknown_command_and_bad_launch_are_rejected_without_side_effects():
    sim = orchestrator.Simulation(build(scenario_dict(duration=50)))
    bad = sim.enqueue_command({"type": "self_destruct"})
    assert not bad["ok"] and "self_destruct" in bad["error"]
    bad = sim.enqueue_command({"type": "launch_attack",
                               "attack": {"type": "syn_flood",
                                          "attacker": "nobody",
                                          "target": "plc1"}})
    assert not bad["ok"]
    for _ in range(50):
        sim.tick_once()
    assert sim.report(None)["commands"] == []


# -- the simulation loop ---------------------------------------------------------------


def run_sim(data):
    sim = orchestrator.Simulation(build(data))
    sim.run()
    return sim


@pytest.fixture(scope="module")
def quiet_run():
    return run_sim(scenario_dict(duration=3000))


def test_attack_free_run_is_healthy(quiet_run):
    rep = quiet_run.report(None)
    assert rep["light"] == "green"
    for name, cell in rep["cells"].items():
        assert cell["produced"] > 0, name
        assert cell["scrapped"] == 0, name
    assert all(v == 0 for v in rep["network"]["drops"].values())
    assert rep["plant_io"]["polls_completed"] == rep["plant_io"]["polls_started"]
    for name, soft in rep["plcs"].items():
        assert not soft["stale"], name
        assert soft["write_errors"] == 0, name


def test_snapshot_carries_what_the_panel_needs(quiet_run):
    snap = quiet_run.snapshot()
    for key in ("tick", "light", "estop", "cells", "crane", "pusher",
                "speeds", "plcs", "attacks", "alerts", "network",
                "finished", "paused"):
        assert key in snap, key
    assert snap["finished"] and snap["tick"] == 3000
    assert snap["crane"]["angle"] in range(0, 360)
    assert "combine" in snap["cells"]
    assert "conveyors" in snap["cells"]["combine"]
    json.dumps(snap)  # everything must serialize


def test_session_recycling_keeps_transaction_ids_bounded(quiet_run):
    fabric = quiet_run.fabric
    from otsim import modbus
    txns = [modbus.transaction_id_of(p.payload) for p in fabric.capture]
    biggest = max(t for t in txns if t is not None)
    assert biggest <= 105


def test_identical_runs_are_byte_identical():
    data = scenario_dict(duration=2000, attacks=[
        dict(FLOOD, start_tick=800, end_tick=1000)])

    def fingerprint():
        sim = run_sim(data)
        buf = io.BytesIO()
        pcap.write_pcap(sim.fabric.pcap_records(), buf)
        rep = sim.report(None)
        rep["wall_clock_seconds"] = 0.0
        return buf.getvalue(), json.dumps(rep, sort_keys=True)

    first, second = fingerprint(), fingerprint()
    assert first[0] == second[0]
    assert first[1] == second[1]


def test_ground_truth_marks_exactly_the_attacker_frames():
    sim = run_sim(scenario_dict(duration=1200, attacks=[
        dict(FLOOD, start_tick=800, end_tick=900, rate=10)]))
    labels = sim.ground_truth()
    attacker_ip = sim.nodes["attacker"].ip
    from otsim import pcap as pcap_mod
    for record, label in zip(sim.fabric.pcap_records(), labels):
        fields = pcap_mod.parse_ethernet_ipv4_tcp(record[2])
        assert label == (fields.src_ip == attacker_ip)


def test_estop_command_stops_the_line_and_clear_restores_it():
    sim = orchestrator.Simulation(build(scenario_dict(duration=400)))
    for _ in range(200):
        sim.tick_once()
    assert sim.enqueue_command({"type": "estop"})["ok"]
    for _ in range(25):  # one poll period plus transport
        sim.tick_once()
    snap = sim.snapshot()
    assert snap["light"] == "red" and snap["estop"]
    assert all(v == 0 for k, v in snap["speeds"].items() if k.endswith("speed"))
    sim.enqueue_command({"type": "clear_estop"})
    for _ in range(175):
        sim.tick_once()
    snap = sim.snapshot()
    assert snap["light"] == "green" and not snap["estop"]
    assert any(v > 0 for v in snap["speeds"].values())


def test_reset_crane_recovers_a_forged_misalignment():
    sim = orchestrator.Simulation(build(scenario_dict(
        duration=800, attacks=[FORGE])))
    for _ in range(700):
        sim.tick_once()
    assert sim.state.crane.misaligned
    assert sim.snapshot()["light"] == "red"
    sim.enqueue_command({"type": "reset_crane"})
    for _ in range(100):
        sim.tick_once()
    assert not sim.state.crane.misaligned
    assert sim.snapshot()["light"] == "green"


def test_launching_an_attack_by_command_equals_the_timeline():
    data = scenario_dict(duration=1500)
    timeline = scenario_dict(duration=1500, attacks=[
        dict(FLOOD, start_tick=700, end_tick=900, rate=20)])

    scripted = run_sim(timeline)
    launched = orchestrator.Simulation(build(data))
    result = launched.enqueue_command(
        {"type": "launch_attack",
         "attack": dict(FLOOD, start_tick=700, end_tick=900, rate=20)})
    assert result["ok"]
    launched.run()

    a = io.BytesIO()
    b = io.BytesIO()
    pcap.write_pcap(scripted.fabric.pcap_records(), a)
    pcap.write_pcap(launched.fabric.pcap_records(), b)
    assert a.getvalue() == b.getvalue()


def test_rate_watch_alerts_on_the_flood_and_acks_stick():
    sim = run_sim(scenario_dict(duration=2000, attacks=[
        dict(FLOOD, start_tick=1000, end_tick=1300)]))
    alerts = sim.rate_watch.alerts
    assert alerts, "flood should trip the live rate watch"
    onset = max(alerts, key=lambda a: a["rate"])
    assert onset["tick"] >= 1000
    assert onset["rate"] > 1000
    assert sim.rate_watch.ack(onset["id"])
    assert onset["acked"]
    assert not sim.rate_watch.ack(999999)


# -- HTTP API ----------------------------------------------------------------------------


@pytest.fixture()
def served_sim():
    sim = orchestrator.Simulation(build(scenario_dict(duration=600)))
    server = api.serve(sim, "127.0.0.1:0")
    yield sim, server.address
    server.stop()


def fetch(url):
    with urllib.request.urlopen(url, timeout=5) as resp:
        return resp.status, json.load(resp)


def post(url, payload):
    req = urllib.request.Request(
        url, data=json.dumps(payload).encode(),
        headers={"Content-Type": "application/json"}, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=5) as resp:
            return resp.status, json.load(resp)
    except urllib.error.HTTPError as err:
        return err.code, json.load(err)


def test_state_endpoint_serves_the_snapshot(served_sim):
    sim, base = served_sim
    for _ in range(30):
        sim.tick_once()
    status, snap = fetch(base + "/state")
    assert status == 200
    assert snap["tick"] >= 25
    assert "cells" in snap


def test_command_endpoint_validates_and_applies(served_sim):
    sim, base = served_sim
    status, reply = post(base + "/command", {"type": "estop"})
    assert status == 200 and reply["ok"]
    for _ in range(25):
        sim.tick_once()
    assert sim.state.estop

    status, reply = post(base + "/command", {"type": "no_such_thing"})
    assert status == 400 and not reply["ok"]
    status, reply = post(base + "/command", "not an object")
    assert status == 400


def test_unknown_path_is_a_clean_404(served_sim):
    _sim, base = served_sim
    try:
        with urllib.request.urlopen(base + "/nope", timeout=5) as resp:
            status = resp.status
    except urllib.error.HTTPError as err:
        status = err.code
    assert status == 404


def test_stream_emits_snapshots_until_the_run_finishes(served_sim):
    sim, base = served_sim
    worker = threading.Thread(target=sim.run, daemon=True)
    worker.start()
    lines = []
    with urllib.request.urlopen(base + "/stream", timeout=10) as resp:
        for raw in resp:
            lines.append(json.loads(raw))
            if len(lines) > 500:
                break
    worker.join(timeout=10)
    assert lines[-1]["finished"]
    ticks = [line["tick"] for line in lines]
    assert ticks == sorted(ticks)
    assert ticks[-1] == 600


# -- CLI -------------------------------------------------------------------------------


def run_cli(*argv, cwd=None):
    return subprocess.run([sys.executable, "-m", "otsim.cli", *argv],
                          capture_output=True, text=True, timeout=300,
                          cwd=cwd)


@pytest.fixture(scope="module")
def cli_artifacts(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = scenario_dict(duration=2500, attacks=[
        dict(FLOOD, start_tick=1500, end_tick=1700, rate=30)],
        monitor_enabled=True)
    data["monitor"]["train_split"] = 0.4
    scenario = root / "scenario.json"
    scenario.write_text(json.dumps(data))
    result = run_cli(
        "run", "--scenario", str(scenario),
        "--pcap", str(root / "run.pcap"),
        "--report", str(root / "report.json"),
        "--labels", str(root / "labels.json"))
    return root, result


def test_cli_run_writes_all_three_artifacts(cli_artifacts):
    root, result = cli_artifacts
    assert result.returncode == 0, result.stderr
    report = json.loads((root / "report.json").read_text())
    assert report["ticks_run"] == 2500
    assert report["detection"]["evaluation"]["recall"] > 0.9
    with open(root / "run.pcap", "rb") as fh:
        records = pcap.read_pcap(fh)
    labels = json.loads((root / "labels.json").read_text())
    assert labels["count"] == len(records)
    assert report["network"]["frames_captured"] == len(records)


def test_cli_detect_reproduces_the_run_evaluation(cli_artifacts):
    root, _ = cli_artifacts
    result = run_cli(
        "detect", "--pcap", str(root / "run.pcap"),
        "--schema", "subset4", "--train-split", "0.4",
        "--labels", str(root / "labels.json"))
    assert result.returncode == 0, result.stderr
    report = json.loads(result.stdout)
    assert report["evaluation"]["recall"] > 0.9
    assert report["projection"]["points"]


def test_cli_rejects_a_broken_scenario():
    result = run_cli("run", "--scenario", "/no/such/file.json")
    assert result.returncode == 2
    assert "cannot read" in result.stderr


def test_cli_rejects_mismatched_labels(cli_artifacts, tmp_path):
    root, _ = cli_artifacts
    bad = tmp_path / "labels.json"
    bad.write_text(json.dumps({"count": 3, "positive": []}))
    result = run_cli(
        "detect", "--pcap", str(root / "run.pcap"),
        "--schema", "subset4", "--labels", str(bad))
    assert result.returncode == 2
    assert "labels cover" in result.stderr


def test_cli_attack_requires_a_socket_capable_kind(tmp_path):
    spec = tmp_path / "flood.json"
    spec.write_text(json.dumps({"type": "syn_flood", "target": "x"}))
    result = run_cli("attack", "--spec", str(spec),
                     "--target", "127.0.0.1:1502")
    assert result.returncode == 2
    assert "forge_write" in result.stderr


def test_cli_attack_reaches_a_live_bridge(tmp_path):
    from otsim import interop
    server = interop.BridgeServer(host="127.0.0.1", port=0)
    server.start()
    try:
        spec = tmp_path / "forge.json"
        spec.write_text(json.dumps(
            {"type": "forge_write", "unit": 0, "function": 15,
             "address": 34, "values": [1], "repeat": 2}))
        result = run_cli("attack", "--spec", str(spec),
                         "--target", f"127.0.0.1:{server.port}")
        assert result.returncode == 0, result.stderr
        outcome = json.loads(result.stdout)
        assert [r["outcome"] for r in outcome["results"]] == \
            ["accepted", "accepted"]
        assert bool(server.bridge.store.coils[34])
    finally:
        server.stop()
