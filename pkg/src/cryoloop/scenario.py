"""Scenario files: parsing, validation, serialisation and telemetry CSV.

A scenario is a human-editable YAML document with explicit units in key
names. Unknown keys are rejected with their dotted location so operator
typos surface immediately. parse -> serialize -> parse is the identity on
the normalised form.
"""

import io
from dataclasses import dataclass, field

import yaml

from .errors import ScenarioError
from .gas import GasState
from .network import NetworkTopology
from .presets import paper_topology
from .transient import (
    DEFAULT_DT_S,
    Event,
    PlantState,
    TelemetryFrame,
    initial_state,
)

CSV_HEADER = (
    "time_s,"
    + ",".join(f"T{i}" for i in range(1, 13))
    + ",pressure_bar,rpm,flow_total_m3h,"
    + ",".join(f"flow_exp{i}_m3h" for i in range(1, 5))
    + ",event"
)

_PLANT_KEYS = {
    "topology": str,
    "experiments": int,
    "cryostat_passive_w": (int, float),
    "loop_passive_w": dict,
    "trunk_segments": int,
    "heater_max_power_w": (int, float),
    "include_support_conduction": bool,
    "debye_capacity": bool,
}
_INITIAL_KEYS = {
    "pressure_bar": (int, float),
    "default_temperature_k": (int, float),
    "from_steady": bool,
    "rpm": (int, float),
    "temperatures_k": dict,
    "valve_openings": dict,
    "heater_powers_w": dict,
}
_OUTPUT_KEYS = {
    "duration_s": (int, float),
    "sample_interval_s": (int, float),
    "csv_path": str,
    "dt_s": (int, float),
    "flow_refresh_s": (int, float),
}
_EVENT_KEYS = {
    "time_s": (int, float),
    "action": str,
    "experiment": str,
    "side": str,
    "opening": (int, float),
    "rpm": (int, float),
    "power_w": (int, float),
    "target_pressure_bar": (int, float),
}
_SENSOR_KEYS = {"offset_k": (int, float), "lag_s": (int, float)}


def _check_keys(mapping, allowed, location):
    if not isinstance(mapping, dict):
        raise ScenarioError(f"expected a mapping, got {type(mapping).__name__}", location)
    for key, value in mapping.items():
        if key not in allowed:
            raise ScenarioError(f"unknown key {key!r}", location)
        expected = allowed[key]
        ok = isinstance(value, expected)
        if isinstance(value, bool) and expected is not bool:
            ok = False  # YAML true/false is not a number
        if not ok:
            raise ScenarioError(
                f"key {key!r} has wrong type {type(value).__name__}", location
            )


@dataclass(frozen=True)
class Scenario:
    """Validated scenario document."""

    plant: dict
    initial: dict
    events: tuple  # of raw event dicts, normalised
    outputs: dict
    sensors: dict = field(default_factory=dict)

    # -- construction ---------------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        if not isinstance(doc, dict):
            raise ScenarioError("scenario document must be a mapping")
        for key in doc:
            if key not in ("plant", "initial", "events", "outputs", "sensors"):
                raise ScenarioError(f"unknown key {key!r}", key)
        plant = dict(doc.get("plant", {}))
        initial = dict(doc.get("initial", {}))
        outputs = dict(doc.get("outputs", {}))
        sensors = {k: dict(v) for k, v in dict(doc.get("sensors", {})).items()}
        events = []
        _check_keys(plant, _PLANT_KEYS, "plant")
        _check_keys(initial, _INITIAL_KEYS, "initial")
        _check_keys(outputs, _OUTPUT_KEYS, "outputs")
        for label, channel in sensors.items():
            _check_keys(channel, _SENSOR_KEYS, f"sensors.{label}")
        raw_events = doc.get("events", [])
        if not isinstance(raw_events, list):
            raise ScenarioError("events must be a list", "events")
        for i, ev in enumerate(raw_events):
            loc = f"events[{i}]"
            _check_keys(ev, _EVENT_KEYS, loc)
            if "time_s" not in ev or "action" not in ev:
                raise ScenarioError("event needs time_s and action", loc)
            events.append(dict(ev))
        if "duration_s" not in outputs:
            raise ScenarioError("outputs.duration_s is required", "outputs")
        if plant.get("topology", "paper") != "paper":
            raise ScenarioError(
                f"unknown topology {plant.get('topology')!r}", "plant.topology"
            )
        return cls(
            plant=plant,
            initial=initial,
            events=tuple(events),
            outputs=outputs,
            sensors=sensors,
        )

    @classmethod
    def from_yaml(cls, text: str) -> "Scenario":
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            loc = f"line {mark.line + 1}, column {mark.column + 1}" if mark else None
            raise ScenarioError(f"invalid YAML: {exc}", loc) from exc
        if doc is None:
            raise ScenarioError("empty scenario document")
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_yaml(fh.read())

    # -- serialisation --------------------------------------------------------

    def to_dict(self) -> dict:
        doc = {}
        if self.plant:
            doc["plant"] = dict(self.plant)
        if self.initial:
            doc["initial"] = dict(self.initial)
        if self.events:
            doc["events"] = [dict(e) for e in self.events]
        doc["outputs"] = dict(self.outputs)
        if self.sensors:
            doc["sensors"] = {k: dict(v) for k, v in self.sensors.items()}
        return doc

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=False)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_yaml())

    # -- model construction ---------------------------------------------------

    def build_topology(self) -> NetworkTopology:
        kwargs = {}
        plant = self.plant
        if "cryostat_passive_w" in plant:
            kwargs["cryostat_passive_w"] = float(plant["cryostat_passive_w"])
        if "loop_passive_w" in plant:
            kwargs["loop_passive_w"] = {
                k: float(v) for k, v in plant["loop_passive_w"].items()
            }
        if "trunk_segments" in plant:
            kwargs["trunk_segments"] = plant["trunk_segments"]
        if "heater_max_power_w" in plant:
            kwargs["heater_max_power"] = float(plant["heater_max_power_w"])
        if "include_support_conduction" in plant:
            kwargs["include_support_conduction"] = plant["include_support_conduction"]
        topology = paper_topology(plant.get("experiments", 2), **kwargs)
        for spec, opening in self.initial.get("valve_openings", {}).items():
            try:
                branch_name, side = spec.split(".")
            except ValueError:
                raise ScenarioError(
                    f"valve key must look like 'exp1.supply', got {spec!r}",
                    "initial.valve_openings",
                ) from None
            try:
                topology = topology.with_valve(branch_name, side, float(opening))
            except KeyError:
                raise ScenarioError(
                    f"unknown experiment {branch_name!r}", "initial.valve_openings"
                ) from None
        return topology

    def build_initial_state(self, topology: NetworkTopology) -> PlantState:
        initial = self.initial
        pressure = float(initial.get("pressure_bar", 20.0)) * 1e5
        rpm = float(initial.get("rpm", 0.0))
        heaters = {k: float(v) for k, v in initial.get("heater_powers_w", {}).items()}
        overrides = {k: float(v) for k, v in initial.get("temperatures_k", {}).items()}
        default_t = initial.get("default_temperature_k")

        if initial.get("from_steady"):
            from .steady import solve_steady

            report = solve_steady(topology, rpm, heaters, pressure)
            temps = dict(report.node_temperatures)
            temps.update(overrides)
        elif default_t is not None:
            temps = {}
            state_probe = initial_state(topology, pressure)  # node names
            temps = {name: float(default_t) for name in state_probe.temperatures}
            temps.update(overrides)
        else:
            temps = overrides if overrides else None
        return initial_state(
            topology, pressure, temperatures=temps, rpm=rpm, heater_powers=heaters
        )

    def build_events(self) -> list:
        events = []
        for raw in self.events:
            kwargs = {"time_s": float(raw["time_s"]), "action": raw["action"]}
            if "experiment" in raw:
                kwargs["experiment"] = raw["experiment"]
            if "side" in raw:
                kwargs["side"] = raw["side"]
            if "opening" in raw:
                kwargs["opening"] = float(raw["opening"])
            if "rpm" in raw:
                kwargs["rpm"] = float(raw["rpm"])
            if "power_w" in raw:
                kwargs["power_w"] = float(raw["power_w"])
            if "target_pressure_bar" in raw:
                kwargs["target_pressure_pa"] = float(raw["target_pressure_bar"]) * 1e5
            events.append(Event(**kwargs))
        return events

    @property
    def duration_s(self) -> float:
        return float(self.outputs["duration_s"])

    @property
    def sample_interval_s(self) -> float:
        return float(self.outputs.get("sample_interval_s", 10.0))

    @property
    def dt_s(self) -> float:
        return float(self.outputs.get("dt_s", DEFAULT_DT_S))

    @property
    def debye_capacity(self) -> bool:
        return bool(self.plant.get("debye_capacity", True))

    @property
    def csv_path(self):
        return self.outputs.get("csv_path")

    def run(self, *, cancel_check=None) -> list:
        """Build everything and produce the telemetry series."""
        from .transient import run_scenario

        topology = self.build_topology()
        state = self.build_initial_state(topology)
        events = self.build_events()
        return run_scenario(
            state,
            events,
            self.duration_s,
            self.sample_interval_s,
            dt=self.dt_s,
            flow_refresh_s=float(self.outputs.get("flow_refresh_s", 2.0)),
            debye_capacity=self.debye_capacity,
            sensor_model=self.sensors or None,
            cancel_check=cancel_check,
        )


def apply_overrides(doc: dict, assignments) -> dict:
    """Apply --set key.path=value assignments to a raw scenario dict."""
    out = yaml.safe_load(yaml.safe_dump(doc))  # deep copy via round trip
    for item in assignments:
        if "=" not in item:
            raise ScenarioError(f"override must look like key=value, got {item!r}")
        path, raw_value = item.split("=", 1)
        value = yaml.safe_load(raw_value)
        parts = path.split(".")
        cursor = out
        for part in parts[:-1]:
            cursor = cursor.setdefault(part, {})
            if not isinstance(cursor, dict):
                raise ScenarioError(f"cannot descend into {part!r}", path)
        cursor[parts[-1]] = value
    return out


def frame_to_row(frame: TelemetryFrame) -> str:
    cells = [repr(float(frame.time_s))]
    for i in range(1, 13):
        cells.append(repr(float(frame.sensors.get(f"T{i}", 0.0))))
    cells.append(repr(frame.pressure_pa / 1e5))
    cells.append(repr(float(frame.rpm)))
    cells.append(repr(float(frame.flows_m3h.get("total", 0.0))))
    for i in range(1, 5):
        cells.append(repr(float(frame.flows_m3h.get(f"exp{i}", 0.0))))
    cells.append(frame.event)
    return ",".join(cells)


def telemetry_to_csv(frames) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for frame in frames:
        buf.write(frame_to_row(frame) + "\n")
    return buf.getvalue()


def write_telemetry_csv(frames, path) -> None:
    """Write the telemetry CSV atomically (tmp file + rename)."""
    import os
    import tempfile

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".csv.tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(telemetry_to_csv(frames))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
