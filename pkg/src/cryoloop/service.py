"""Session service: drives live simulations for interactive clients.

Each session owns one integrator thread that runs ahead of the wall clock by
the configured speed ratio. Commands arrive through a bounded queue and are
applied on integration-step boundaries, so a captured action log replays
bit-identically through the scenario runner: the integrator stops on exactly
the same step grid (samples, flow refreshes, events) in both paths, and
extra pacing stops never trigger a refresh.

Telemetry fans out to any number of read-only subscribers; a slow subscriber
loses oldest frames first and sees the drop count in-band.
"""

import json
import math
import os
import threading
import time
import uuid
from collections import deque

import yaml

from .errors import CryoloopError, ScenarioError
from .scenario import (
    CSV_HEADER,
    Scenario,
    frame_to_row,
    write_telemetry_csv,
)
from .transient import Event, _SimCore

MAX_SPEED = 1000.0
ACTION_QUEUE_LIMIT = 64
SUBSCRIBER_BUFFER = 256


def _event_to_doc(event: Event) -> dict:
    doc = {"time_s": event.time_s, "action": event.action}
    if event.experiment:
        doc["experiment"] = event.experiment
    if event.side:
        doc["side"] = event.side
    if event.action in ("set_valve", "connect_experiment"):
        doc["opening"] = event.opening
    if event.action == "set_rpm":
        doc["rpm"] = event.rpm
    if event.action == "set_heater":
        doc["power_w"] = event.power_w
    if event.action == "top_up":
        doc["target_pressure_bar"] = event.target_pressure_pa / 1e5
    return doc


def _doc_to_event(doc: dict, *, time_s: float = None) -> Event:
    kwargs = {"time_s": float(doc.get("time_s", 0.0)) if time_s is None else time_s,
              "action": doc["action"]}
    if "experiment" in doc:
        kwargs["experiment"] = doc["experiment"]
    if "side" in doc:
        kwargs["side"] = doc["side"]
    if "opening" in doc:
        kwargs["opening"] = float(doc["opening"])
    if "rpm" in doc:
        kwargs["rpm"] = float(doc["rpm"])
    if "power_w" in doc:
        kwargs["power_w"] = float(doc["power_w"])
    if "target_pressure_bar" in doc:
        kwargs["target_pressure_pa"] = float(doc["target_pressure_bar"]) * 1e5
    elif "target_pressure_pa" in doc:
        kwargs["target_pressure_pa"] = float(doc["target_pressure_pa"])
    return Event(**kwargs)


def frame_to_doc(frame, seq: int, dropped: int = 0) -> dict:
    return {
        "seq": seq,
        "time_s": frame.time_s,
        "sensors_k": frame.sensors,
        "pressure_bar": frame.pressure_pa / 1e5,
        "rpm": frame.rpm,
        "flows_m3h": frame.flows_m3h,
        "event": frame.event,
        "dropped": dropped,
    }


class _Subscriber:
    def __init__(self, stride: int):
        self.stride = max(1, int(stride))
        self.buffer = deque(maxlen=SUBSCRIBER_BUFFER)
        self.dropped = 0
        self.cond = threading.Condition()

    def push(self, seq, frame):
        if seq % self.stride != 0:
            return
        with self.cond:
            if len(self.buffer) == self.buffer.maxlen:
                self.dropped += 1
                # deque drops the oldest on append below
            self.buffer.append((seq, frame))
            self.cond.notify_all()

    def pop(self, timeout: float):
        with self.cond:
            if not self.buffer:
                self.cond.wait(timeout)
            if not self.buffer:
                return None
            seq, frame = self.buffer.popleft()
            dropped, self.dropped = self.dropped, 0
            return frame_to_doc(frame, seq, dropped)


class Session:
    """One live plant simulation advanced by a background thread."""

    def __init__(self, scenario: Scenario, speed: float = 1.0):
        if not 1.0 <= speed <= MAX_SPEED:
            raise ScenarioError(f"speed must be in [1, {MAX_SPEED:.0f}], got {speed}")
        self.id = uuid.uuid4().hex[:12]
        self.scenario = scenario
        self.speed = float(speed)
        self.dt = scenario.dt_s
        self.sample_stride = max(1, round(scenario.sample_interval_s / self.dt))

        topology = scenario.build_topology()
        state = scenario.build_initial_state(topology)
        self.core = _SimCore(
            state, self.dt, float(scenario.outputs.get("flow_refresh_s", 2.0)),
            debye_capacity=scenario.debye_capacity,
        )
        self.refresh = self.core.refresh_stride

        # Scripted events from the scenario run on the grid like in replay.
        self.pending = sorted(
            (
                (int(math.ceil(ev.time_s / self.dt - 1e-9)), j, ev)
                for j, ev in enumerate(scenario.build_events())
            ),
            key=lambda item: (item[0], item[1]),
        )
        for _, _, ev in self.pending:
            ev.validate(topology)

        self.k = 0
        self.frames = []  # all sampled frames, for persistence
        self.action_log = []  # interactively applied events
        self.marker = []
        self.subscribers = []
        self.action_queue = deque()
        self.action_results = {}
        self.lock = threading.RLock()
        self.status = "running"
        self.error = None
        self._stop = threading.Event()
        # Scripted t=0 events precede the first frame, exactly as in replay.
        applied = self._apply_due_events()
        self._boundary(applied)
        self._emit_frame()  # seq 0 at t = 0
        self._wall0 = time.monotonic()
        self.thread = threading.Thread(target=self._run, daemon=True)
        self.thread.start()

    # -- integrator loop -------------------------------------------------------

    def _emit_frame(self):
        frame = self.core.frame(event=";".join(self.marker))
        self.marker = []
        self.frames.append(frame)
        seq = len(self.frames) - 1
        for sub in list(self.subscribers):
            sub.push(seq, frame)
        return frame

    def _boundary(self, applied: bool):
        if any(end == self.k for end, _, _ in self.core.injections):
            applied = True
        if applied or self.k % self.refresh == 0:
            self.core._refresh_flow()
            self.core._build_q_ext()

    def _apply_due_events(self) -> bool:
        applied = False
        while self.pending and self.pending[0][0] <= self.k:
            _, _, ev = self.pending.pop(0)
            self.core.apply_event(ev)
            self.marker.append(ev.action)
            applied = True
        return applied

    def _drain_actions(self) -> bool:
        applied = False
        while self.action_queue:
            token, doc = self.action_queue.popleft()
            try:
                event = _doc_to_event(doc, time_s=self.k * self.dt)
                event.validate(self.core.topology)
                self.core.apply_event(event)
                self.action_log.append(event)
                self.marker.append(event.action)
                applied = True
                self.action_results[token] = {"ok": True, "time_s": self.k * self.dt}
            except (CryoloopError, KeyError, TypeError, ValueError) as exc:
                self.action_results[token] = {"ok": False, "error": str(exc)}
        return applied

    def _run(self):
        try:
            while not self._stop.is_set():
                with self.lock:
                    applied = self._apply_due_events()
                    applied = self._drain_actions() or applied
                    self._boundary(applied)
                    target = int((time.monotonic() - self._wall0) * self.speed / self.dt)
                    if target > self.k:
                        self._advance_to(min(target, self.k + 40 * self.refresh))
                if target <= self.k:
                    time.sleep(min(0.02, self.dt / self.speed))
        except CryoloopError as exc:
            with self.lock:
                self.error = str(exc)
                self.status = "failed"

    def _advance_to(self, target: int, ignore_stop: bool = False):
        while self.k < target and (ignore_stop or not self._stop.is_set()):
            horizon = [target,
                       ((self.k // self.sample_stride) + 1) * self.sample_stride,
                       ((self.k // self.refresh) + 1) * self.refresh]
            if self.pending:
                horizon.append(max(self.k + 1, self.pending[0][0]))
            for end, _, _ in self.core.injections:
                if end > self.k:
                    horizon.append(end)
            next_k = min(h for h in horizon if h > self.k)
            self.core.advance(next_k - self.k)
            self.k = next_k
            applied = self._apply_due_events()
            applied = self._drain_actions() or applied
            self._boundary(applied)
            if self.k % self.sample_stride == 0:
                self._emit_frame()

    # -- public API --------------------------------------------------------------

    def act(self, doc: dict, timeout: float = 10.0) -> dict:
        if self.status != "running":
            raise ScenarioError(f"session is {self.status}")
        token = uuid.uuid4().hex
        with self.lock:
            if len(self.action_queue) >= ACTION_QUEUE_LIMIT:
                raise ScenarioError("action queue is full")
            self.action_queue.append((token, doc))
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            with self.lock:
                if token in self.action_results:
                    result = self.action_results.pop(token)
                    if not result["ok"]:
                        raise ScenarioError(result["error"])
                    return {
                        "applied_time_s": result["time_s"],
                        "frame": frame_to_doc(self.core.frame(), len(self.frames) - 1),
                    }
            time.sleep(0.005)
        raise ScenarioError("action was not acknowledged in time")

    def subscribe(self, stride: int = 1) -> _Subscriber:
        sub = _Subscriber(stride)
        with self.lock:
            self.subscribers.append(sub)
        return sub

    def unsubscribe(self, sub) -> None:
        with self.lock:
            if sub in self.subscribers:
                self.subscribers.remove(sub)

    def snapshot(self) -> dict:
        with self.lock:
            state = self.core.plant_state()
            frame = self.frames[-1]
            openings = {}
            for b in state.topology.branches:
                openings[f"{b.name}.supply"] = b.supply_valve.opening
                openings[f"{b.name}.return"] = b.return_valve.opening
            return {
                "session_id": self.id,
                "status": self.status,
                "error": self.error,
                "speed": self.speed,
                "time_s": state.time_s,
                "pressure_bar": state.pressure / 1e5,
                "zone_pressures_bar": {
                    k: v / 1e5 for k, v in state.zone_pressures().items()
                },
                "rpm": state.rpm,
                "heater_powers_w": state.heater_powers,
                "valve_openings": openings,
                "mass_ledger_g": {
                    "total": state.total_mass * 1e3,
                    "topped_up": state.topped_up_mass * 1e3,
                    "vented": state.vented_mass * 1e3,
                },
                "frame": frame_to_doc(frame, len(self.frames) - 1),
            }

    def log_doc(self) -> dict:
        with self.lock:
            return {"events": [_event_to_doc(e) for e in self.action_log]}

    def replay_scenario(self) -> Scenario:
        """Original scenario + captured actions, runnable via `simulate`."""
        with self.lock:
            doc = self.scenario.to_dict()
            events = list(doc.get("events", []))
            events.extend(_event_to_doc(e) for e in self.action_log)
            events.sort(key=lambda e: e["time_s"])
            doc["events"] = events
            doc["outputs"] = dict(doc["outputs"])
            doc["outputs"]["duration_s"] = self.k * self.dt
            return Scenario.from_dict(doc)

    def close(self) -> None:
        """Stop the integrator, then land on a sample boundary so replay
        durations align with the sampled telemetry."""
        self._stop.set()
        self.thread.join(timeout=10.0)
        with self.lock:
            if self.status == "running":
                if self.k % self.sample_stride != 0:
                    self._advance_to(
                        ((self.k // self.sample_stride) + 1) * self.sample_stride,
                        ignore_stop=True,
                    )
                self.status = "closed"


class SessionRegistry:
    def __init__(self, runs_dir: str):
        self.runs_dir = runs_dir
        self.sessions = {}
        self.lock = threading.Lock()

    def create(self, scenario: Scenario, speed: float) -> Session:
        session = Session(scenario, speed)
        with self.lock:
            self.sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self.lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise KeyError(session_id)
        return session

    def close(self, session_id: str) -> str:
        session = self.get(session_id)
        session.close()
        run_id = f"{time.strftime('%Y%m%d-%H%M%S')}-{session.id}"
        run_dir = os.path.join(self.runs_dir, run_id)
        os.makedirs(run_dir, exist_ok=True)
        session.scenario.save(os.path.join(run_dir, "scenario.yaml"))
        with open(os.path.join(run_dir, "actions.yaml"), "w", encoding="utf-8") as fh:
            fh.write(yaml.safe_dump(session.log_doc(), sort_keys=False))
        session.replay_scenario().save(os.path.join(run_dir, "replay.yaml"))
        write_telemetry_csv(session.frames, os.path.join(run_dir, "telemetry.csv"))
        with self.lock:
            del self.sessions[session_id]
        return run_id


def create_app(runs_dir: str = "runs"):
    from fastapi import FastAPI, HTTPException, Query, Request
    from fastapi.responses import PlainTextResponse, StreamingResponse

    app = FastAPI(title="cryoloop service", version="0.1.0")
    registry = SessionRegistry(runs_dir)
    app.state.registry = registry

    def _session(session_id: str) -> Session:
        try:
            return registry.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}")

    @app.get("/")
    def info():
        with registry.lock:
            ids = list(registry.sessions)
        return {"service": "cryoloop", "sessions": ids, "runs_dir": registry.runs_dir}

    @app.post("/sessions")
    async def create_session(request: Request):
        body = await request.json()
        try:
            if "scenario_yaml" in body:
                scenario = Scenario.from_yaml(body["scenario_yaml"])
            elif "scenario" in body:
                scenario = Scenario.from_dict(body["scenario"])
            else:
                raise ScenarioError("provide 'scenario' or 'scenario_yaml'")
            session = registry.create(scenario, float(body.get("speed", 1.0)))
        except (ScenarioError, CryoloopError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {
            "session_id": session.id,
            "frame": frame_to_doc(session.frames[0], 0),
            "speed": session.speed,
            "sample_interval_s": session.scenario.sample_interval_s,
        }

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str):
        return _session(session_id).snapshot()

    @app.post("/sessions/{session_id}/actions")
    async def post_action(session_id: str, request: Request):
        session = _session(session_id)
        doc = await request.json()
        try:
            return session.act(doc)
        except (ScenarioError, CryoloopError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/sessions/{session_id}/stream")
    async def stream(session_id: str, stride: int = Query(default=1, ge=1)):
        import anyio

        session = _session(session_id)
        sub = session.subscribe(stride)

        async def generate():
            try:
                while True:
                    doc = await anyio.to_thread.run_sync(sub.pop, 0.5)
                    if doc is not None:
                        yield f"data: {json.dumps(doc)}\n\n"
                    elif session.status != "running":
                        break
            finally:
                session.unsubscribe(sub)

        return StreamingResponse(generate(), media_type="text/event-stream")

    @app.get("/sessions/{session_id}/log")
    def get_log(session_id: str):
        doc = _session(session_id).log_doc()
        return PlainTextResponse(
            yaml.safe_dump(doc, sort_keys=False), media_type="text/yaml"
        )

    @app.get("/sessions/{session_id}/replay")
    def get_replay(session_id: str):
        scenario = _session(session_id).replay_scenario()
        return PlainTextResponse(scenario.to_yaml(), media_type="text/yaml")

    @app.get("/sessions/{session_id}/telemetry.csv")
    def get_telemetry(session_id: str):
        session = _session(session_id)
        with session.lock:
            text = CSV_HEADER + "\n" + "".join(
                frame_to_row(f) + "\n" for f in session.frames
            )
        return PlainTextResponse(text, media_type="text/csv")

    @app.post("/sessions/{session_id}/close")
    def close_session(session_id: str):
        _session(session_id)
        run_id = registry.close(session_id)
        return {"run_id": run_id, "run_dir": os.path.join(registry.runs_dir, run_id)}

    console_dir = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "..",
                               "frontend", "dist")
    console_dir = os.path.normpath(console_dir)
    if os.path.isdir(console_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=console_dir, html=True),
                  name="console")

    return app
