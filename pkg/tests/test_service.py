import json
import pathlib
import time

import pytest
from fastapi.testclient import TestClient

from cryoloop.scenario import Scenario, telemetry_to_csv
from cryoloop.service import Session, create_app

SESSION_SCENARIO = """
plant:
  topology: paper
  experiments: 2
initial:
  pressure_bar: 20.0
  rpm: 21000.0
  from_steady: true
outputs:
  duration_s: 86400.0
  sample_interval_s: 0.5
"""


@pytest.fixture()
def client(tmp_path):
    app = create_app(runs_dir=str(tmp_path / "runs"))
    with TestClient(app) as c:
        yield c


def wait_for_time(client, session_id, sim_time, timeout=20.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        state = client.get(f"/sessions/{session_id}/state").json()
        if state["time_s"] >= sim_time:
            return state
        time.sleep(0.05)
    raise AssertionError(f"session never reached t={sim_time}")


def test_session_lifecycle_and_replay(client, tmp_path):
    created = client.post(
        "/sessions", json={"scenario_yaml": SESSION_SCENARIO, "speed": 500.0}
    )
    assert created.status_code == 200, created.text
    sid = created.json()["session_id"]
    assert created.json()["frame"]["time_s"] == 0.0

    wait_for_time(client, sid, 20.0)
    ack = client.post(
        f"/sessions/{sid}/actions",
        json={"action": "set_heater", "experiment": "exp2", "power_w": 80.0},
    )
    assert ack.status_code == 200, ack.text
    applied_at = ack.json()["applied_time_s"]
    assert applied_at >= 20.0

    # acknowledged no-op: top-up to the current setpoint
    ack2 = client.post(
        f"/sessions/{sid}/actions",
        json={"action": "top_up", "target_pressure_bar": 20.0},
    )
    assert ack2.status_code == 200

    wait_for_time(client, sid, applied_at + 60.0)
    state = client.get(f"/sessions/{sid}/state").json()
    assert state["heater_powers_w"]["exp2"] == 80.0
    # the 80 W load warms the exp2 outlet but stays far below 100 K
    assert state["frame"]["sensors_k"]["T8"] > 36.0
    assert state["frame"]["sensors_k"]["T8"] < 100.0

    log = client.get(f"/sessions/{sid}/log")
    assert log.status_code == 200
    assert "set_heater" in log.text

    closed = client.post(f"/sessions/{sid}/close")
    assert closed.status_code == 200
    run_dir = pathlib.Path(closed.json()["run_dir"])
    assert (run_dir / "scenario.yaml").exists()
    assert (run_dir / "actions.yaml").exists()
    assert (run_dir / "telemetry.csv").exists()
    assert (run_dir / "replay.yaml").exists()

    # the captured action log replays to bit-identical telemetry
    recorded = (run_dir / "telemetry.csv").read_text(encoding="utf-8")
    frames = Scenario.load(run_dir / "replay.yaml").run()
    assert telemetry_to_csv(frames) == recorded

    # the session is gone afterwards
    assert client.get(f"/sessions/{sid}/state").status_code == 404


def test_invalid_action_rejected_with_reason(client):
    sid = client.post(
        "/sessions", json={"scenario_yaml": SESSION_SCENARIO, "speed": 100.0}
    ).json()["session_id"]
    bad = client.post(
        f"/sessions/{sid}/actions", json={"action": "set_rpm", "rpm": 30000.0}
    )
    assert bad.status_code == 422
    assert "rpm" in bad.json()["detail"]
    missing = client.post(
        f"/sessions/{sid}/actions",
        json={"action": "set_heater", "experiment": "exp9", "power_w": 5.0},
    )
    assert missing.status_code == 422
    client.post(f"/sessions/{sid}/close")


def test_unknown_session_404(client):
    assert client.get("/sessions/nope/state").status_code == 404
    assert client.post("/sessions/nope/actions", json={"action": "flush"}).status_code == 404


def test_bad_scenario_rejected(client):
    r = client.post("/sessions", json={"scenario_yaml": "outputs: {wibble: 1}"})
    assert r.status_code == 422


@pytest.fixture()
def live_server(tmp_path):
    """A real uvicorn server in a thread; SSE needs genuine streaming."""
    import socket
    import threading

    import uvicorn

    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    app = create_app(runs_dir=str(tmp_path / "runs"))
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10.0
    import httpx

    base = f"http://127.0.0.1:{port}"
    while time.monotonic() < deadline:
        try:
            httpx.get(base + "/", timeout=1.0)
            break
        except httpx.TransportError:
            time.sleep(0.05)
    yield base
    server.should_exit = True
    thread.join(timeout=10.0)


def test_stream_delivers_frames(live_server):
    import httpx

    with httpx.Client(base_url=live_server, timeout=30.0) as client:
        sid = client.post(
            "/sessions", json={"scenario_yaml": SESSION_SCENARIO, "speed": 500.0}
        ).json()["session_id"]
        docs = []
        with client.stream("GET", f"/sessions/{sid}/stream") as response:
            for line in response.iter_lines():
                if line.startswith("data: "):
                    docs.append(json.loads(line[len("data: "):]))
                if len(docs) >= 5:
                    break
        assert len(docs) >= 5
        seqs = [d["seq"] for d in docs]
        assert seqs == sorted(seqs)
        assert all("sensors_k" in d and "pressure_bar" in d for d in docs)
        client.post(f"/sessions/{sid}/close")


def test_two_subscribers_receive_identical_sequences():
    scenario = Scenario.from_yaml(SESSION_SCENARIO)
    session = Session(scenario, speed=500.0)
    try:
        a = session.subscribe(stride=1)
        b = session.subscribe(stride=1)
        deadline = time.monotonic() + 15.0
        got_a, got_b = [], []
        while (len(got_a) < 8 or len(got_b) < 8) and time.monotonic() < deadline:
            doc_a = a.pop(timeout=0.2)
            if doc_a:
                got_a.append(doc_a)
            doc_b = b.pop(timeout=0.2)
            if doc_b:
                got_b.append(doc_b)
        common = min(len(got_a), len(got_b))
        assert common >= 5
        # align on sequence numbers (subscription instants may differ)
        by_seq_a = {d["seq"]: d for d in got_a}
        by_seq_b = {d["seq"]: d for d in got_b}
        shared = sorted(set(by_seq_a) & set(by_seq_b))
        assert len(shared) >= 3
        for seq in shared:
            da, db = dict(by_seq_a[seq]), dict(by_seq_b[seq])
            da.pop("dropped"), db.pop("dropped")
            assert da == db
    finally:
        session.close()


def test_session_speed_outruns_wall_clock():
    scenario = Scenario.from_yaml(SESSION_SCENARIO)
    session = Session(scenario, speed=200.0)
    try:
        time.sleep(1.0)
        with session.lock:
            sim_time = session.k * session.dt
        assert sim_time >= 50.0  # at least 50x real time achieved
    finally:
        session.close()
