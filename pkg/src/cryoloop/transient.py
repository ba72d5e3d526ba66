"""Time-domain plant simulation: cooldowns, connections, top-ups, PRV events.

The integrator advances lumped node temperatures with fixed-step RK4 (the hot
loop lives in ``cryoloop.kernel``); gas inventory is tracked per pressure
zone (the main loop plus any experiment branch whose valves are both shut),
with uniform pressure inside each zone. The helium supply adds mass
instantaneously on a top-up and releases the warm-gas enthalpy into the fill
node over TOP_UP_MIX_S, so the loop pressure equals the target at the instant
of the event while downstream sensors still see the documented warm spike.

Everything is deterministic: events land on integration-step boundaries,
flows refresh on a fixed step grid, and a scenario run is a pure function of
its inputs.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .components import RPM_MAX, RPM_MIN
from .errors import (
    DomainError,
    IntegrationFailureError,
    UnknownActionError,
)
from .gas import CP_HE, R_SPECIFIC_HE, GasState
from .kernel import advance as kernel_advance
from .network import NetworkTopology, build_node_graph, solve_flow
from .steady import TAPER_WIDTH_K

DEFAULT_DT_S = 0.05
DEFAULT_FLOW_REFRESH_S = 2.0
TOP_UP_MIX_S = 300.0
DEBYE_THETA_K = 85.0
DEBYE_FLOOR = 0.1
STABILITY_MARGIN = 0.2

ACTIONS = (
    "set_valve",
    "set_rpm",
    "set_heater",
    "top_up",
    "connect_experiment",
    "disconnect_experiment",
    "flush",
)


@dataclass(frozen=True)
class Event:
    """One timed operator action."""

    time_s: float
    action: str
    experiment: str = ""
    side: str = ""
    opening: float = 1.0
    rpm: float = 0.0
    power_w: float = 0.0
    target_pressure_pa: float = 0.0

    def validate(self, topology: NetworkTopology) -> None:
        if self.time_s < 0.0:
            raise DomainError(f"event time must be >= 0, got {self.time_s}")
        if self.action not in ACTIONS:
            raise UnknownActionError(f"unknown action {self.action!r}")
        needs_branch = self.action in (
            "set_valve",
            "set_heater",
            "connect_experiment",
            "disconnect_experiment",
            "flush",
        )
        if needs_branch:
            try:
                branch = topology.branch(self.experiment)
            except KeyError:
                raise UnknownActionError(
                    f"{self.action}: no experiment named {self.experiment!r}"
                ) from None
        if self.action == "set_valve":
            if self.side not in ("supply", "return"):
                raise DomainError(f"set_valve side must be supply|return, got {self.side!r}")
            if not 0.0 <= self.opening <= 1.0:
                raise DomainError(f"set_valve opening must be in [0,1], got {self.opening}")
        elif self.action == "set_rpm":
            if self.rpm != 0.0 and not RPM_MIN <= self.rpm <= RPM_MAX:
                raise DomainError(
                    f"rpm must be 0 or within [{RPM_MIN:.0f}, {RPM_MAX:.0f}], got {self.rpm}"
                )
        elif self.action == "set_heater":
            if self.power_w < 0.0 or self.power_w > branch.heat_sink.heater_max_power:
                raise DomainError(
                    f"heater power must be in [0, {branch.heat_sink.heater_max_power}] W, "
                    f"got {self.power_w}"
                )
        elif self.action == "top_up":
            if self.target_pressure_pa <= 0.0:
                raise DomainError("top_up needs a positive target pressure")


@dataclass(frozen=True)
class TelemetryFrame:
    """Sensor-visible snapshot at one sample instant."""

    time_s: float
    sensors: dict  # "T1".."T12" -> K
    pressure_pa: float
    rpm: float
    flows_m3h: dict  # "total", "exp1".. -> m^3/hr at the flow reference state
    event: str = ""


@dataclass(frozen=True)
class PlantState:
    """Full simulator state at an instant."""

    topology: NetworkTopology
    time_s: float
    temperatures: dict  # node name -> K
    rpm: float
    heater_powers: dict  # branch -> W
    zone_masses: dict  # "main" | branch name -> kg
    vented_mass: float = 0.0
    topped_up_mass: float = 0.0
    injections: tuple = ()  # ((end_time_s, node_name, power_w), ...)
    flushed: frozenset = frozenset()

    @property
    def total_mass(self) -> float:
        return sum(self.zone_masses.values())

    def zone_volumes_over_t(self) -> dict:
        graph = build_node_graph(self.topology)
        zones = _zone_map(self.topology)
        sums = {}
        for node in graph.nodes:
            z = zones[node.name]
            sums[z] = sums.get(z, 0.0) + node.volume / self.temperatures[node.name]
        return sums

    def zone_pressures(self) -> dict:
        sums = self.zone_volumes_over_t()
        return {
            z: float(self.zone_masses[z] * R_SPECIFIC_HE / sums[z])
            for z in self.zone_masses
            if sums.get(z, 0.0) > 0.0
        }

    @property
    def pressure(self) -> float:
        return self.zone_pressures()["main"]


def _zone_map(topology: NetworkTopology) -> dict:
    """Node -> pressure-zone key. A branch is isolated when both valves shut."""
    zones = {}
    graph = build_node_graph(topology)
    isolated = {
        b.name
        for b in topology.branches
        if b.supply_valve.is_closed and b.return_valve.is_closed
    }
    for node in graph.nodes:
        if node.branch and node.branch in isolated:
            zones[node.name] = node.branch
        else:
            zones[node.name] = "main"
    return zones


def initial_state(
    topology: NetworkTopology,
    pressure: float,
    temperatures=None,
    rpm: float = 0.0,
    heater_powers: dict = None,
) -> PlantState:
    """Build a PlantState with zone masses implied by (pressure, temperatures)."""
    if pressure <= 0.0:
        raise DomainError("initial pressure must be positive")
    graph = build_node_graph(topology)
    amb = topology.ambient_temperature
    temps = {}
    for node in graph.nodes:
        if temperatures is None:
            temps[node.name] = amb
        elif isinstance(temperatures, dict):
            temps[node.name] = float(temperatures.get(node.name, amb))
        else:
            temps[node.name] = float(temperatures)
    zones = _zone_map(topology)
    masses = {}
    for node in graph.nodes:
        z = zones[node.name]
        masses[z] = masses.get(z, 0.0) + pressure * node.volume / (
            R_SPECIFIC_HE * temps[node.name]
        )
    heaters = {b.name: 0.0 for b in topology.branches}
    if heater_powers:
        for k, v in heater_powers.items():
            topology.branch(k)
            heaters[k] = float(v)
    return PlantState(
        topology=topology,
        time_s=0.0,
        temperatures=temps,
        rpm=rpm,
        heater_powers=heaters,
        zone_masses=masses,
    )


class _SimCore:
    """Mutable integration engine behind the pure public operations."""

    def __init__(self, state: PlantState, dt: float, flow_refresh_s: float,
                 debye_capacity: bool = True):
        if dt <= 0.0:
            raise DomainError(f"dt must be positive, got {dt}")
        self.dt = dt
        self.refresh_stride = max(1, round(flow_refresh_s / dt))
        self.debye = debye_capacity
        self.topology = state.topology
        self.graph = build_node_graph(state.topology)
        self.names = [n.name for n in self.graph.nodes]
        self.idx = {name: i for i, name in enumerate(self.names)}
        self.n = len(self.names)
        self.amb = state.topology.ambient_temperature

        self.temps = np.array([state.temperatures[n] for n in self.names])
        self.rpm = state.rpm
        self.heaters = dict(state.heater_powers)
        self.step_index = int(round(state.time_s / dt))
        self.time_offset = state.time_s - self.step_index * dt
        self.total_vented = state.vented_mass
        self.total_topped = state.topped_up_mass
        self.flushed = set(state.flushed)
        # (end_step, node index, W)
        self.injections = [
            (int(math.ceil(end / dt - 1e-9)), self.idx[node], power)
            for end, node, power in state.injections
        ]

        self._build_static()
        self._build_zones(state.zone_masses)
        self.flow = None
        self._refresh_flow()
        self._build_q_ext()

    # -- static node arrays ------------------------------------------------

    def _build_static(self):
        g = self.graph
        self.vol = np.array([n.volume for n in g.nodes])
        self.cap300 = np.array([n.capacity for n in g.nodes])
        self.q_passive = np.array([n.passive_w for n in g.nodes])
        self.g_amb = np.array([n.ambient_conductance for n in g.nodes])
        self.cool_idx = np.array([n.cooler_index for n in g.nodes], dtype=np.int32)
        ptr = [0]
        ct, cw = [], []
        for cooler in self.topology.coolers:
            for t, w in cooler.curve.anchors:
                ct.append(t)
                cw.append(w)
            ptr.append(len(ct))
        self.curve_ptr = np.array(ptr, dtype=np.int32)
        self.curve_t = np.array(ct)
        self.curve_w = np.array(cw)
        self.sink_node_of = {
            b.name: self.idx[f"{b.name}_sink"] for b in self.topology.branches
        }
        self.fill_idx = self.idx[self.topology.fill_node]
        self.intake_idx = self.idx["fan_intake"]
        max_slope = 0.0
        for cooler in self.topology.coolers:
            pts = cooler.curve.anchors
            for (t0, w0), (t1, w1) in zip(pts, pts[1:]):
                max_slope = max(max_slope, (w1 - w0) / (t1 - t0))
        self.max_curve_slope = max_slope

    def _build_zones(self, zone_masses: dict):
        zones = _zone_map(self.topology)
        keys = ["main"] + [
            b.name for b in self.topology.branches if zones[f"{b.name}_sink"] != "main"
        ]
        self.zone_keys = keys
        zid = {k: i for i, k in enumerate(keys)}
        self.zone_of = np.array(
            [zid[zones[name]] for name in self.names], dtype=np.int32
        )
        self.zone_mass = np.array([zone_masses.get(k, 0.0) for k in keys])
        self.zone_vented = np.zeros(len(keys))
        set_p, reseat_p = [], []
        for k in keys:
            prv = (
                self.topology.main_relief_valve
                if k == "main"
                else self.topology.branch(k).relief_valve
            )
            set_p.append(prv.set_pressure)
            reseat_p.append(prv.reseat_pressure)
        self.zone_set_p = np.array(set_p)
        self.zone_reseat_p = np.array(reseat_p)

    def zone_pressure(self, key: str) -> float:
        z = self.zone_keys.index(key)
        mask = self.zone_of == z
        s = float(np.sum(self.vol[mask] / self.temps[mask]))
        if s <= 0.0:
            raise DomainError(f"zone {key!r} has no gas volume")
        return self.zone_mass[z] * R_SPECIFIC_HE / s

    # -- flow and load refresh ----------------------------------------------

    def _refresh_flow(self):
        in_matrix = np.zeros((self.n, self.n))
        w_out = np.zeros(self.n)
        flows = None
        if self.rpm > 0.0:
            open_branches = [b for b in self.topology.branches if b.is_open]
            if open_branches:
                ref = GasState(
                    self.zone_pressure("main"), float(self.temps[self.intake_idx])
                )
                flows = solve_flow(self.topology, self.rpm, ref)
        if flows is not None:
            mdots = flows.mass_flows
            for i, node in enumerate(self.graph.nodes):
                w = 0.0
                for src, key in node.inflows:
                    wij = mdots[key] * CP_HE
                    in_matrix[i, self.idx[src]] += wij
                    w += wij
                w_out[i] = w
        self.flow = flows
        self.in_matrix = in_matrix
        self.w_out = w_out
        # The gas-capacity coefficients refresh on the same deterministic
        # boundary grid as the flows, so chunk splitting never alters physics.
        self.gas_cap = self._gas_cap_coef()

    def _build_q_ext(self):
        q = np.zeros(self.n)
        for name, power in self.heaters.items():
            q[self.sink_node_of[name]] += power
        for end_step, node_i, power in self.injections:
            if end_step > self.step_index:
                q[node_i] += power
        self.q_ext = q

    def _gas_cap_coef(self):
        coef = np.empty(self.n)
        for z, key in enumerate(self.zone_keys):
            mask = self.zone_of == z
            s = float(np.sum(self.vol[mask] / self.temps[mask]))
            p = self.zone_mass[z] * R_SPECIFIC_HE / s if s > 0.0 else 0.0
            coef[mask] = p * self.vol[mask] * CP_HE / R_SPECIFIC_HE
        return coef

    def stability_limit(self) -> float:
        cap_min = self.cap300 * (DEBYE_FLOOR if self.debye else 1.0)
        sinks = self.w_out + self.g_amb
        sinks = sinks + np.where(self.cool_idx >= 0, self.max_curve_slope, 0.0)
        with np.errstate(divide="ignore"):
            limits = np.where(sinks > 0.0, cap_min / sinks, np.inf)
        return STABILITY_MARGIN * float(limits.min())

    # -- events --------------------------------------------------------------

    def apply_event(self, ev: Event):
        ev.validate(self.topology)
        if ev.action == "set_rpm":
            self.rpm = ev.rpm
        elif ev.action == "set_heater":
            self.heaters[ev.experiment] = ev.power_w
        elif ev.action == "set_valve":
            self._change_valves(ev.experiment, {ev.side: ev.opening})
        elif ev.action == "connect_experiment":
            self._change_valves(ev.experiment, {"supply": ev.opening, "return": ev.opening})
        elif ev.action == "disconnect_experiment":
            self._change_valves(ev.experiment, {"supply": 0.0, "return": 0.0})
        elif ev.action == "top_up":
            self._top_up(ev.target_pressure_pa)
        elif ev.action == "flush":
            self.flushed.add(ev.experiment)
        self._refresh_flow()
        self._build_q_ext()

    def _change_valves(self, branch_name: str, sides: dict):
        before = _zone_map(self.topology)
        topo = self.topology
        for side, opening in sides.items():
            topo = topo.with_valve(branch_name, side, opening)
        after = _zone_map(topo)

        # Capture per-zone masses, then re-key them across the transition.
        masses = {k: self.zone_mass[i] for i, k in enumerate(self.zone_keys)}
        self.total_vented += float(self.zone_vented.sum())
        sink = f"{branch_name}_sink"
        if before[sink] == "main" and after[sink] != "main":
            # Isolating: the branch keeps its share of the main-zone gas.
            p_main = self.zone_pressure("main")
            s_branch = 0.0
            for i, name in enumerate(self.names):
                if after[name] == branch_name:
                    s_branch += self.vol[i] / self.temps[i]
            m_branch = min(p_main * s_branch / R_SPECIFIC_HE, masses["main"])
            masses[branch_name] = m_branch
            masses["main"] -= m_branch
        elif before[sink] != "main" and after[sink] == "main":
            masses["main"] += masses.pop(branch_name, 0.0)

        self.topology = topo
        self._build_static()
        self._build_zones(masses)

    def _top_up(self, target_pa: float):
        p = self.zone_pressure("main")
        prv = self.topology.main_relief_valve
        if target_pa > prv.set_pressure:
            raise DomainError(
                f"top-up target {target_pa / 1e5:.2f} bar exceeds the "
                f"{prv.set_pressure / 1e5:.2f} bar relief setting"
            )
        # Target at or below the current pressure is an acknowledged no-op.
        z = self.zone_keys.index("main")
        mask = self.zone_of == z
        s = float(np.sum(self.vol[mask] / self.temps[mask]))
        dm = max(0.0, (target_pa - p) * s / R_SPECIFIC_HE)
        if dm <= 0.0:
            return
        self.zone_mass[z] += dm
        self.total_topped += dm
        t_fill = float(self.temps[self.fill_idx])
        energy = dm * CP_HE * (self.amb - t_fill)
        if energy > 0.0:
            end_step = self.step_index + max(1, round(TOP_UP_MIX_S / self.dt))
            self.injections.append((end_step, self.fill_idx, energy / TOP_UP_MIX_S))

    # -- integration -----------------------------------------------------------

    def advance(self, n_steps: int):
        if n_steps <= 0:
            return
        limit = self.stability_limit()
        if self.dt > limit:
            raise DomainError(
                f"dt={self.dt} s exceeds the {limit:.3g} s stability limit of the "
                "current configuration"
            )
        status = kernel_advance(
            self.temps,
            self.zone_mass,
            self.zone_vented,
            n_steps,
            self.dt,
            self.in_matrix,
            self.w_out,
            self.q_ext,
            self.q_passive,
            self.g_amb,
            self.cap300,
            self.debye,
            DEBYE_THETA_K,
            DEBYE_FLOOR,
            self.cool_idx,
            self.curve_ptr,
            self.curve_t,
            self.curve_w,
            self.gas_cap,
            self.vol,
            self.zone_of,
            self.zone_set_p,
            self.zone_reseat_p,
            R_SPECIFIC_HE,
            self.amb,
            TAPER_WIDTH_K,
        )
        if status >= 0:
            raise IntegrationFailureError(
                f"integration produced a non-physical temperature at node "
                f"{self.names[status]!r}",
                node=self.names[status],
            )
        self.step_index += n_steps

    @property
    def time_s(self) -> float:
        return self.step_index * self.dt + self.time_offset

    # -- snapshots ---------------------------------------------------------------

    def sensor_values(self) -> dict:
        values = {}
        for label, node in self.graph.sensor_nodes.items():
            i = self.idx[node]
            t = float(self.temps[i])
            ci = int(self.cool_idx[i])
            if ci >= 0:
                cooler = self.topology.coolers[ci]
                if cooler.heat_exchanger_resistance > 0.0:
                    q = cooler.curve.power_at(t)
                    t -= q * cooler.heat_exchanger_resistance
            values[label] = t
        return values

    def frame(self, event: str = "") -> TelemetryFrame:
        flows = {"total": 0.0}
        for b in self.topology.branches:
            flows[b.name] = 0.0
        if self.flow is not None:
            for k in flows:
                flows[k] = self.flow.volume_flows.get(k, 0.0) * 3600.0
        return TelemetryFrame(
            time_s=float(self.time_s),
            sensors=self.sensor_values(),
            pressure_pa=float(self.zone_pressure("main")),
            rpm=float(self.rpm),
            flows_m3h=flows,
            event=event,
        )

    def plant_state(self) -> PlantState:
        self.total_vented += float(self.zone_vented.sum())
        self.zone_vented[:] = 0.0
        masses = {k: float(self.zone_mass[i]) for i, k in enumerate(self.zone_keys)}
        injections = tuple(
            (end_step * self.dt + self.time_offset, self.names[node_i], power)
            for end_step, node_i, power in self.injections
            if end_step > self.step_index
        )
        return PlantState(
            topology=self.topology,
            time_s=self.time_s,
            temperatures={name: float(self.temps[i]) for i, name in enumerate(self.names)},
            rpm=self.rpm,
            heater_powers=dict(self.heaters),
            zone_masses=masses,
            vented_mass=self.total_vented,
            topped_up_mass=self.total_topped,
            injections=injections,
            flushed=frozenset(self.flushed),
        )


def step(state: PlantState, dt: float, *, debye_capacity: bool = True) -> PlantState:
    """Advance the plant by one integration step of length dt."""
    if dt <= 0.0:
        raise DomainError(f"dt must be positive, got {dt}")
    core = _SimCore(state, dt, flow_refresh_s=dt, debye_capacity=debye_capacity)
    core.advance(1)
    out = core.plant_state()
    return replace(out, time_s=state.time_s + dt)


def top_up(state: PlantState, target_pressure: float) -> PlantState:
    """Instantaneously add supply gas until the loop pressure reads target."""
    core = _SimCore(state, DEFAULT_DT_S, DEFAULT_FLOW_REFRESH_S)
    core._top_up(target_pressure)
    return core.plant_state()


def run_scenario(
    initial: PlantState,
    events,
    duration: float,
    sample_interval: float,
    *,
    dt: float = DEFAULT_DT_S,
    flow_refresh_s: float = DEFAULT_FLOW_REFRESH_S,
    debye_capacity: bool = True,
    sensor_model: dict = None,
    cancel_check=None,
) -> list:
    """Run a timed event script and return the telemetry series.

    Deterministic: identical inputs give identical frames. Events are applied
    on the integration grid (first step boundary at or after their time
    stamp), flows refresh on a fixed stride, and frames are emitted every
    ``sample_interval`` of simulated time.
    """
    if duration <= 0.0:
        raise DomainError("duration must be positive")
    if sample_interval <= 0.0:
        raise DomainError("sample_interval must be positive")
    events = sorted(events, key=lambda e: e.time_s)
    for ev in events:
        ev.validate(initial.topology)

    core = _SimCore(initial, dt, flow_refresh_s, debye_capacity=debye_capacity)
    steps_total = max(1, round(duration / dt))
    sample_stride = max(1, round(sample_interval / dt))
    refresh = core.refresh_stride
    event_steps = [
        (int(math.ceil(ev.time_s / dt - 1e-9)), j, ev) for j, ev in enumerate(events)
    ]
    event_steps.sort(key=lambda item: (item[0], item[1]))
    if event_steps and event_steps[-1][0] > steps_total:
        raise DomainError("event scheduled after the end of the scenario")

    lag_state = {}

    def emit(frame: TelemetryFrame) -> TelemetryFrame:
        if not sensor_model:
            return frame
        adjusted = dict(frame.sensors)
        for label, channel in sensor_model.items():
            offset = channel.get("offset_k", 0.0)
            tau = channel.get("lag_s", 0.0)
            raw = adjusted.get(label)
            if raw is None:
                continue
            value = raw + offset
            if tau > 0.0:
                prev = lag_state.get(label, value)
                alpha = 1.0 - math.exp(-sample_interval / tau)
                value = prev + (value - prev) * alpha
            lag_state[label] = value
            adjusted[label] = value
        return replace(frame, sensors=adjusted)

    frames = []
    pending = list(event_steps)
    k = 0
    marker = []
    while True:
        if cancel_check is not None:
            cancel_check()
        applied = False
        while pending and pending[0][0] <= k:
            _, _, ev = pending.pop(0)
            core.apply_event(ev)
            marker.append(ev.action)
            applied = True
        if any(end == k for end, _, _ in core.injections):
            applied = True
        if applied or k % refresh == 0:
            core._refresh_flow()
            core._build_q_ext()
        if k % sample_stride == 0 or k == steps_total:
            frames.append(emit(core.frame(event=";".join(marker))))
            marker = []
        if k >= steps_total:
            break
        horizon = [steps_total]
        horizon.append(((k // sample_stride) + 1) * sample_stride)
        horizon.append(((k // refresh) + 1) * refresh)
        if pending:
            horizon.append(max(k + 1, pending[0][0]))
        for end_step, _, _ in core.injections:
            if end_step > k:
                horizon.append(end_step)
        next_k = min(h for h in horizon if h > k)
        core.advance(next_k - k)
        k = next_k
    return frames


def final_state(
    initial: PlantState,
    events,
    duration: float,
    *,
    dt: float = DEFAULT_DT_S,
    flow_refresh_s: float = DEFAULT_FLOW_REFRESH_S,
    debye_capacity: bool = True,
) -> PlantState:
    """Like run_scenario but returning the end PlantState instead of frames."""
    events = sorted(events, key=lambda e: e.time_s)
    for ev in events:
        ev.validate(initial.topology)
    core = _SimCore(initial, dt, flow_refresh_s, debye_capacity=debye_capacity)
    steps_total = max(1, round(duration / dt))
    pending = [
        (int(math.ceil(ev.time_s / dt - 1e-9)), j, ev) for j, ev in enumerate(events)
    ]
    pending.sort(key=lambda item: (item[0], item[1]))
    refresh = core.refresh_stride
    k = 0
    while True:
        applied = False
        while pending and pending[0][0] <= k:
            _, _, ev = pending.pop(0)
            core.apply_event(ev)
            applied = True
        if any(end == k for end, _, _ in core.injections):
            applied = True
        if applied or k % refresh == 0:
            core._refresh_flow()
            core._build_q_ext()
        if k >= steps_total:
            break
        horizon = [steps_total, ((k // refresh) + 1) * refresh]
        if pending:
            horizon.append(max(k + 1, pending[0][0]))
        for end_step, _, _ in core.injections:
            if end_step > k:
                horizon.append(end_step)
        next_k = min(h for h in horizon if h > k)
        core.advance(next_k - k)
        k = next_k
    return core.plant_state()
